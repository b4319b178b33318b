"""
CLI package for the coordination simulator
"""
