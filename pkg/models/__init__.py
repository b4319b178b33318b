"""
Models package - domain dataclasses plus the SQLAlchemy journal table
"""

# Import base first
from models.base import Base, Session, init_db

# Registers the journal table on Base.metadata
from models.message_record import MessageRecord
