"""
Base configuration for SQLAlchemy models
"""

import logging

from sqlalchemy.orm import declarative_base, sessionmaker

from db.config import engine

logger = logging.getLogger(__name__)

# Base class for all persisted models
Base = declarative_base()

# Session factory bound to the journal engine
Session = sessionmaker(bind=engine)


def init_db(bind=None):
    """Create all journal tables"""
    Base.metadata.create_all(bind or engine)
    logger.info("Journal tables created")
