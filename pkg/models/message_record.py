"""
Journal row for persistent Mule messages
"""

from sqlalchemy import Column, Float, Integer, LargeBinary, String, UniqueConstraint

from models.base import Base


class MessageRecord(Base):
    __tablename__ = "mule_messages"
    __table_args__ = (
        UniqueConstraint("owner_id", "origin", "topic", "seq", name="uq_mule_message"),
    )

    id = Column(Integer, primary_key=True)
    # Agent whose store holds the message
    owner_id = Column(Integer, nullable=False, index=True)
    origin = Column(Integer, nullable=False)
    topic = Column(String(64), nullable=False)
    seq = Column(Integer, nullable=False)
    qos = Column(Integer, nullable=False)
    payload = Column(LargeBinary, nullable=False)
    size = Column(Integer, nullable=False)
    created = Column(Float, nullable=False)

    def __repr__(self):
        return (
            f"<MessageRecord(owner={self.owner_id}, origin={self.origin}, "
            f"topic='{self.topic}', seq={self.seq}, size={self.size})>"
        )
