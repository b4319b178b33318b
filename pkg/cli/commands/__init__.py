"""
CLI commands for the coordination simulator
"""
