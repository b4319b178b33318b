"""
Shared helpers: validation, capabilities, Sentry and mission logging
"""
