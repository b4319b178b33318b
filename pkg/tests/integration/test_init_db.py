"""
Tests for init_db.py - Journal initialization script
"""

from unittest.mock import patch, MagicMock

import init_db


class TestCreateDatabase:
    """Test create_database function"""

    @patch("init_db.init_db")
    @patch("builtins.print")
    def test_create_keeps_existing_tables(self, mock_print, mock_init_db_func):
        with patch("init_db.Base") as mock_base:
            init_db.create_database()

            mock_base.metadata.drop_all.assert_not_called()
            mock_init_db_func.assert_called_once()

    @patch("init_db.init_db")
    @patch("builtins.print")
    def test_create_with_drop(self, mock_print, mock_init_db_func):
        with patch("init_db.Base") as mock_base, patch("init_db.engine") as mock_engine:
            init_db.create_database(drop=True)

            mock_base.metadata.drop_all.assert_called_once_with(mock_engine)
            mock_init_db_func.assert_called_once()


class TestJournalSize:
    def test_counts_and_closes_session(self):
        with patch("init_db.Session") as mock_session_class:
            mock_session = MagicMock()
            mock_session_class.return_value = mock_session
            mock_session.query.return_value.count.return_value = 12

            assert init_db.journal_size() == 12
            mock_session.close.assert_called_once()


class TestMain:
    """Test main function"""

    @patch("init_db.journal_size", return_value=3)
    @patch("init_db.create_database")
    @patch("builtins.input")
    @patch("builtins.print")
    def test_main_interactive_no_keeps_journal(self, mock_print, mock_input, mock_create_db, mock_size):
        mock_input.return_value = "n"

        assert init_db.main([]) is True
        mock_create_db.assert_called_once_with(drop=False)
        mock_print.assert_any_call("Existing journal kept: 3 messages")

    @patch("init_db.journal_size", return_value=0)
    @patch("init_db.create_database")
    @patch("builtins.input")
    @patch("builtins.print")
    def test_main_interactive_yes_recreates(self, mock_print, mock_input, mock_create_db, mock_size):
        mock_input.return_value = "y"

        assert init_db.main([]) is True
        mock_create_db.assert_called_once_with(drop=True)

    @patch("init_db.journal_size", return_value=0)
    @patch("init_db.create_database")
    @patch("builtins.print")
    def test_main_force_mode(self, mock_print, mock_create_db, mock_size):
        """Test main function with --force flag"""
        assert init_db.main(["--force"]) is True
        mock_print.assert_any_call("Force mode: Proceeding without confirmation...")
        mock_create_db.assert_called_once_with(drop=True)

    @patch("init_db.create_database")
    @patch("builtins.print")
    def test_main_exception_handling(self, mock_print, mock_create_db):
        mock_create_db.side_effect = Exception("disk full")

        assert init_db.main(["--force"]) is False
        mock_print.assert_any_call("Error initializing journal: disk full")
