"""Run registry models and operations using Peewee ORM."""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from peewee import CharField, DateTimeField, IntegerField, Model, SqliteDatabase, TextField

from .types import RunManifest

logger = logging.getLogger(__name__)

# Database instance (will be initialized later)
db = SqliteDatabase(None)


class BaseModel(Model):
    """Base model with database binding."""

    class Meta:
        database = db


class Run(BaseModel):
    """One CLI invocation and the digests of what it wrote."""

    verb = CharField(index=True)
    params = TextField()
    seed = IntegerField(null=True)
    version = CharField()
    created_at = DateTimeField(default=datetime.now, index=True)
    manifest_path = TextField(null=True)
    digests = TextField(default='{}')
    exit_code = IntegerField(default=0)

    def __str__(self):
        return f'<Run id={self.id} verb={self.verb} exit={self.exit_code}>'

    @property
    def params_dict(self) -> dict:
        return json.loads(self.params)

    @property
    def digests_dict(self) -> dict:
        return json.loads(self.digests)

    class Meta:
        table_name = 'runs'


def init_db(db_path: str) -> None:
    """Initialize database connection and create tables."""
    db.init(db_path)
    db.connect(reuse_if_open=True)
    db.create_tables([Run])


def close_db() -> None:
    """Close database connection."""
    if not db.is_closed():
        db.close()


def delete_db(db_path: str) -> None:
    """Delete database file."""
    if Path(db_path).exists():
        logger.info('Deleting run registry %s', db_path)
        Path(db_path).unlink()


def save_run(manifest: RunManifest, manifest_path: Optional[str] = None) -> Run:
    """Record a manifest in the registry.

    Args:
        manifest: Manifest written next to the run's outputs
        manifest_path: Where that manifest file lives

    Returns:
        The stored Run row
    """
    return Run.create(
        verb=manifest.verb,
        params=json.dumps(manifest.params, sort_keys=True),
        seed=manifest.seeds[0] if manifest.seeds else None,
        version=manifest.version,
        manifest_path=manifest_path,
        digests=json.dumps(manifest.outputs, sort_keys=True),
        exit_code=manifest.exit_code,
    )


def get_run(run_id: int) -> Optional[Run]:
    return Run.get_or_none(Run.id == run_id)


def list_runs(limit: Optional[int] = 20) -> List[Run]:
    """Most recent runs first."""
    query = Run.select().order_by(Run.created_at.desc(), Run.id.desc())
    if limit:
        query = query.limit(limit)
    return list(query)


def get_runs_by_verb(verb: str, limit: Optional[int] = None) -> List[Run]:
    query = Run.select().where(Run.verb == verb).order_by(Run.id.desc())
    if limit:
        query = query.limit(limit)
    return list(query)


def get_run_count() -> int:
    return Run.select().count()
