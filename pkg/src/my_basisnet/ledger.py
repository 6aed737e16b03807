"""SQL ledger of CLI runs (command, seed, output model and a JSON summary)."""

import json
import logging
from contextlib import contextmanager
from datetime import datetime
from typing import Any

from sqlalchemy import Column, DateTime, Integer, String, Text, create_engine, func, select
from sqlalchemy.orm import declarative_base, sessionmaker

from . import utils

logger = logging.getLogger(__name__)

Base = declarative_base()


def _plain(value: Any) -> Any:
    return value.isoformat() if isinstance(value, datetime) else value


class StandardModel(Base):
    """Abstract ledger row: surrogate key plus UTC creation and update stamps."""

    __abstract__ = True

    id = Column(Integer, primary_key=True, autoincrement=True)
    created_at = Column(DateTime, nullable=False, default=utils.utc_now)
    updated_at = Column(DateTime, nullable=False, default=utils.utc_now, onupdate=utils.utc_now)

    def to_dict(self) -> dict[str, Any]:
        """Column values by name; timestamps become ISO 8601 text."""
        return {
            column.name: _plain(getattr(self, column.name)) for column in self.__table__.columns
        }

    def __repr__(self) -> str:
        shown = " ".join(
            f"{name}={value}" for name, value in self.to_dict().items() if name != "summary"
        )
        return f"<{type(self).__name__} {shown}>"


class RunRecord(StandardModel):
    __tablename__ = "runs"

    command = Column(String(32), nullable=False, index=True)
    seed = Column(Integer, nullable=True)
    model_path = Column(String(1024), nullable=True)
    summary = Column(Text, nullable=False, default="{}")


class RunLedger:
    """Append-only record of pipeline runs in any SQLAlchemy database."""

    def __init__(self, database_url: str):
        """Connect and create the ``runs`` table if needed.

        Args:
            database_url (str): The database connection URL, e.g. ``sqlite:///runs.db``.
        """
        self.database_url = database_url
        self.engine = create_engine(
            self.database_url,
            echo=False,
            pool_pre_ping=True,
            connect_args={"check_same_thread": False} if "sqlite" in self.database_url else {},
        )
        self.SessionLocal = sessionmaker(bind=self.engine)
        Base.metadata.create_all(self.engine)

    @contextmanager
    def get_session(self):
        """Yield a session that commits on success and rolls back on error."""
        session = self.SessionLocal()
        try:
            yield session
            session.commit()
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def record(
        self,
        command: str,
        seed: int | None = None,
        model_path: str | None = None,
        summary: dict[str, Any] | None = None,
    ) -> dict[str, str | bool]:
        """Store one run.

        Args:
            command (str): CLI subcommand name.
            seed (int | None, optional): Seed of the run. Defaults to None.
            model_path (str | None, optional): Model file written or read. Defaults to None.
            summary (dict | None, optional): JSON-serializable results. Defaults to None.

        Returns:
            dict[str, str | bool]: {"success": True}, or {"success": False, "error": message}.
        """
        try:
            text = json.dumps(summary or {}, sort_keys=True)
            with self.get_session() as session:
                session.add(
                    RunRecord(command=command, seed=seed, model_path=model_path, summary=text)
                )
            logger.debug("recorded %s run in %s", command, self.database_url)
            return {"success": True}
        except Exception as e:
            return {"success": False, "error": str(e)}

    def runs(self, command: str | None = None, limit: int | None = None) -> list[dict[str, Any]]:
        """Recorded runs, newest first, with ``summary`` decoded."""
        stmt = select(RunRecord).order_by(RunRecord.id.desc())
        if command is not None:
            stmt = stmt.where(RunRecord.command == command)
        if limit is not None:
            stmt = stmt.limit(limit)
        with self.get_session() as session:
            rows = [record.to_dict() for record in session.scalars(stmt)]
        for row in rows:
            row["summary"] = json.loads(row["summary"])
        return rows

    def count(self, command: str | None = None) -> int:
        stmt = select(func.count(RunRecord.id))
        if command is not None:
            stmt = stmt.where(RunRecord.command == command)
        with self.get_session() as session:
            return session.execute(stmt).scalar_one()

    def print_runs(self, command: str | None = None, limit: int | None = None) -> None:
        runs = self.runs(command, limit)
        print("\n📊 Recorded runs")
        print(f"{'=' * 72}")
        print(f"Database URL: {self.database_url}")
        print(f"{'-' * 72}")
        for run in runs:
            print(
                f"  {run['id']:>5}  {run['created_at']:<32} {run['command']:<10} "
                f"seed={run['seed']}  {run['model_path'] or ''}"
            )
        print(f"{'-' * 72}")
        print(f"  {'Total':<50} {len(runs):>10}")

    def dispose(self) -> None:
        self.engine.dispose()
