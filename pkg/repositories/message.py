"""
Message Repository using BaseRepository
Append-only journal of persistent Mule messages, one stream of rows per owner
"""

import logging
from typing import List

from sqlalchemy.exc import IntegrityError
from sqlalchemy.orm import Session

from models.message import MessageId, QoS, StoredMessage
from models.message_record import MessageRecord
from repositories.base import BaseRepository

logger = logging.getLogger(__name__)


class MessageRepository(BaseRepository[MessageRecord]):
    """
    Repository for journaled Mule messages
    Extends BaseRepository with message-specific queries
    """

    def __init__(self, db: Session):
        """
        Initialize message repository

        Args:
            db: SQLAlchemy database session
        """
        super().__init__(db, MessageRecord)

    def append(self, owner_id: int, message: StoredMessage) -> bool:
        """
        Journal a persistent message for an owner

        Args:
            owner_id: Agent whose store holds the message
            message: Message to journal

        Returns:
            True if written, False if the owner already journaled this id
        """
        try:
            self.create(
                {
                    "owner_id": owner_id,
                    "origin": message.id.origin,
                    "topic": message.id.topic,
                    "seq": message.id.seq,
                    "qos": int(message.qos),
                    "payload": message.payload,
                    "size": message.size,
                    "created": message.created,
                }
            )
            return True
        except IntegrityError:
            logger.debug(f"Message {message.id} already journaled for owner {owner_id}")
            return False

    def find_by_owner(self, owner_id: int) -> List[StoredMessage]:
        """
        Load every journaled message of an owner

        Args:
            owner_id: Agent whose journal is read

        Returns:
            Stored messages in journal order
        """
        try:
            records = self.filter_by(owner_id=owner_id)
            return [
                StoredMessage(
                    id=MessageId(record.origin, record.topic, record.seq),
                    qos=QoS(record.qos),
                    payload=bytes(record.payload),
                    created=record.created,
                )
                for record in records
            ]
        except Exception as e:
            logger.error(f"Error loading journal of owner {owner_id}: {e}")
            raise

    def purge_owner(self, owner_id: int) -> int:
        """Drop an owner's journal (fresh mission with a reused journal file)"""
        return self.delete_where(owner_id=owner_id)
