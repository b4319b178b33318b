"""
Database configuration package
"""
