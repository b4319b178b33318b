"""
Mule journal initialization
Creates (or recreates) the journal schema at MULE_JOURNAL_URL
"""

import sys

from db.config import MULE_JOURNAL_URL, engine
from models import Base, MessageRecord, Session, init_db


def create_database(drop: bool = False):
    """Creates the journal tables, dropping them first when asked"""
    if drop:
        print("Dropping journal tables...")
        Base.metadata.drop_all(engine)

    print("Creating tables...")
    init_db()
    print("Journal initialized successfully")


def journal_size() -> int:
    session = Session()
    try:
        return session.query(MessageRecord).count()
    finally:
        session.close()


def main(argv=None):
    """Main entry point"""
    argv = sys.argv[1:] if argv is None else argv
    print("=" * 50)
    print("MULE JOURNAL INITIALIZATION")
    print("=" * 50)
    print(f"Journal: {MULE_JOURNAL_URL}")

    force_mode = "--force" in argv
    if not force_mode:
        response = input("Drop and recreate the journal? (y/N): ")
        if response.lower() != "y":
            create_database(drop=False)
            print(f"Existing journal kept: {journal_size()} messages")
            return True
    else:
        print("Force mode: Proceeding without confirmation...")

    try:
        create_database(drop=True)
        print(f"\nFinal state: {journal_size()} messages in journal")
        return True
    except Exception as e:
        print(f"Error initializing journal: {e}")
        return False


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
