"""
Tests for the message stores and the SQLAlchemy journal
"""

import pytest
from unittest.mock import MagicMock

from models.message import MessageId, QoS, StoredMessage, StreamHoldings
from repositories.message import MessageRepository
from services.message_store import InMemoryMessageStore, JournaledMessageStore


def message(origin, seq, topic="frames", payload=b"abc", created=1.0):
    return StoredMessage(MessageId(origin, topic, seq), QoS.PERSISTENT, payload, created)


class TestInMemoryStore:
    def test_add_is_idempotent(self):
        store = InMemoryMessageStore()

        assert store.add(message(1, 1))
        assert not store.add(message(1, 1, payload=b"other"))
        assert len(store) == 1
        assert store.total_bytes == 3
        assert store.get(MessageId(1, "frames", 1)).payload == b"abc"

    def test_volatile_rejected(self):
        store = InMemoryMessageStore()
        volatile = StoredMessage(MessageId(1, "status", 1), QoS.VOLATILE, b"x", 0.0)

        with pytest.raises(ValueError):
            store.add(volatile)

    def test_holdings_track_gaps(self):
        store = InMemoryMessageStore()
        for seq in (1, 2, 4):
            store.add(message(1, seq))

        assert store.holdings((1, "frames")) == StreamHoldings(2, (4,))

        store.add(message(1, 3))
        assert store.holdings((1, "frames")) == StreamHoldings(4, ())

    def test_streams_and_ordering(self):
        store = InMemoryMessageStore()
        store.add(message(2, 2, topic="reports"))
        store.add(message(2, 1, topic="reports"))
        store.add(message(1, 1))

        assert store.streams() == [(1, "frames"), (2, "reports")]
        assert [m.id.seq for m in store.stream_messages((2, "reports"))] == [1, 2]
        assert list(store.snapshot()) == sorted(store.snapshot())


class TestJournaledStore:
    """Write-through to the repository"""

    def test_only_new_messages_journaled(self):
        repository = MagicMock()
        store = JournaledMessageStore(3, repository)

        store.add(message(1, 1))
        store.add(message(1, 1))

        repository.append.assert_called_once_with(3, message(1, 1))

    def test_load_does_not_write_back(self):
        repository = MagicMock()
        repository.find_by_owner.return_value = [message(1, 1), message(1, 2)]
        store = JournaledMessageStore(3, repository)

        assert store.load() == 2
        assert len(store) == 2
        repository.append.assert_not_called()


class TestMessageRepository:
    """Journal persistence against SQLite"""

    def test_append_and_reload(self, journal_db):
        repository = MessageRepository(journal_db)

        assert repository.append(5, message(1, 1, payload=b"\x00\x01"))
        assert repository.append(5, message(2, 1, topic="tasks"))

        restored = repository.find_by_owner(5)
        assert [m.id for m in restored] == [MessageId(1, "frames", 1), MessageId(2, "tasks", 1)]
        assert restored[0].payload == b"\x00\x01"
        assert restored[0].qos == QoS.PERSISTENT
        assert repository.count(owner_id=5) == 2

    def test_duplicate_append_is_ignored(self, journal_db):
        repository = MessageRepository(journal_db)
        repository.append(5, message(1, 1))

        assert not repository.append(5, message(1, 1))
        assert repository.count(owner_id=5) == 1

    def test_owners_are_separate(self, journal_db):
        repository = MessageRepository(journal_db)
        repository.append(5, message(1, 1))
        repository.append(6, message(1, 1))

        assert repository.purge_owner(5) == 1
        assert repository.find_by_owner(5) == []
        assert len(repository.find_by_owner(6)) == 1

    def test_restart_restores_holdings(self, journal_db):
        """Test that a fresh store rebuilt from the journal holds the same messages"""
        repository = MessageRepository(journal_db)
        first = JournaledMessageStore(2, repository)
        for seq in (1, 2, 3):
            first.add(message(1, seq, payload=bytes([seq])))

        second = JournaledMessageStore(2, repository)
        second.load()

        assert second.snapshot() == first.snapshot()
        assert second.holdings((1, "frames")) == StreamHoldings(3, ())


class TestMessageRepositoryMocked:
    """Repository behaviour with a mocked session"""

    def test_empty_journal(self, mock_session):
        assert MessageRepository(mock_session).find_by_owner(4) == []
        mock_session.query.return_value.filter_by.assert_called_once_with(owner_id=4)

    def test_load_error_propagates(self, mock_session):
        mock_session.query.side_effect = RuntimeError("connection lost")

        with pytest.raises(RuntimeError):
            MessageRepository(mock_session).find_by_owner(4)
