"""Document store engine and session management."""

from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

from sqlalchemy import event
from sqlalchemy.engine import Engine
from sqlalchemy.pool import StaticPool
from sqlmodel import Session, SQLModel, create_engine

from consent_ledger.core.config import settings


def _enable_secure_delete(dbapi_connection, connection_record) -> None:
    # Deleted rows are overwritten with zeros instead of left in free pages.
    cursor = dbapi_connection.cursor()
    cursor.execute("PRAGMA secure_delete=ON")
    cursor.close()


def create_store_engine(path: Optional[Path] = None) -> Engine:
    """SQLite engine for the profile store; in-memory when ``path`` is None."""
    if path is None:
        engine = create_engine(
            "sqlite://",
            echo=settings.debug,
            connect_args={"check_same_thread": False},
            poolclass=StaticPool,
        )
    else:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        engine = create_engine(
            f"sqlite:///{path}",
            echo=settings.debug,
            connect_args={"check_same_thread": False},
        )
    event.listen(engine, "connect", _enable_secure_delete)
    create_db_and_tables(engine)
    return engine


def create_db_and_tables(engine: Engine) -> None:
    """Create the store's tables if they don't exist."""
    # Registers ProfileRow with the metadata.
    from consent_ledger.models import profile  # noqa: F401
    SQLModel.metadata.create_all(engine)


@contextmanager
def get_session(engine: Engine) -> Iterator[Session]:
    """Session that commits on success and rolls back on error."""
    session = Session(engine)
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()
