"""
Unit tests for Epic Events CRM
Isolated tests of individual components without external dependencies
"""
