"""
Mule message stores: the in-memory store used by the simulator and a
write-through journaled store backed by SQLAlchemy
"""

import logging
from typing import Dict, Iterator, List, Optional, Set, Tuple

from models.message import MessageId, QoS, StoredMessage, StreamHoldings
from repositories.message import MessageRepository

logger = logging.getLogger(__name__)

StreamKey = Tuple[int, str]


class InMemoryMessageStore:
    """Persistent messages of one agent, indexed by stream."""

    def __init__(self):
        self._messages: Dict[MessageId, StoredMessage] = {}
        self._streams: Dict[StreamKey, Set[int]] = {}
        self._holdings: Dict[StreamKey, StreamHoldings] = {}
        self.total_bytes = 0

    def __len__(self):
        return len(self._messages)

    def __contains__(self, message_id: MessageId) -> bool:
        return message_id in self._messages

    def __iter__(self) -> Iterator[StoredMessage]:
        return iter(self._messages.values())

    def get(self, message_id: MessageId) -> Optional[StoredMessage]:
        return self._messages.get(message_id)

    def add(self, message: StoredMessage) -> bool:
        """
        Store a persistent message

        Returns:
            True if the message was new, False if already held (no change)
        """
        if message.qos != QoS.PERSISTENT:
            raise ValueError(f"Volatile message {message.id} cannot be stored")
        if message.id in self._messages:
            return False
        self._messages[message.id] = message
        key = (message.id.origin, message.id.topic)
        self._streams.setdefault(key, set()).add(message.id.seq)
        self._holdings.pop(key, None)
        self.total_bytes += message.size
        return True

    def streams(self) -> List[StreamKey]:
        return sorted(self._streams)

    def holdings(self, key: StreamKey) -> StreamHoldings:
        if key not in self._holdings:
            self._holdings[key] = StreamHoldings.from_seqs(self._streams.get(key, ()))
        return self._holdings[key]

    def stream_messages(self, key: StreamKey) -> List[StoredMessage]:
        origin, topic = key
        return [
            self._messages[MessageId(origin, topic, seq)]
            for seq in sorted(self._streams.get(key, ()))
        ]

    def snapshot(self) -> Dict[MessageId, bytes]:
        """Id to payload map, for equality checks."""
        return {mid: m.payload for mid, m in sorted(self._messages.items())}


class JournaledMessageStore(InMemoryMessageStore):
    """
    In-memory store that appends every new message to the journal table so a
    restarted Mule keeps its holdings
    """

    def __init__(self, owner_id: int, repository: MessageRepository):
        super().__init__()
        self.owner_id = owner_id
        self.repository = repository

    def add(self, message: StoredMessage) -> bool:
        added = super().add(message)
        if added:
            self.repository.append(self.owner_id, message)
        return added

    def load(self) -> int:
        """
        Reload the owner's journal into memory

        Returns:
            Number of messages restored
        """
        restored = 0
        for message in self.repository.find_by_owner(self.owner_id):
            if InMemoryMessageStore.add(self, message):
                restored += 1
        logger.info(f"Restored {restored} journaled messages for agent {self.owner_id}")
        return restored
