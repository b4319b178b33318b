"""
Repository package
Data access layer for the Mule journal using the Repository Pattern
"""

from .base import BaseRepository
from .message import MessageRepository
