# Environment-driven settings and the SQLAlchemy engine for the Mule journal
import os

from dotenv import load_dotenv
from sqlalchemy import create_engine

load_dotenv()


MULE_JOURNAL_URL = os.getenv("MULE_JOURNAL_URL", "sqlite:///mule_journal.db")
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
SIM_OUTPUT_DIR = os.getenv("SIM_OUTPUT_DIR", "runs")

engine = create_engine(MULE_JOURNAL_URL)


def test_connection():
    try:
        from sqlalchemy import text

        with engine.connect() as connection:
            result = connection.execute(text("SELECT 1"))
            print("Journal connection OK", result.scalar())
    except Exception as e:
        print("Journal connection error:", e)


if __name__ == "__main__":
    test_connection()
