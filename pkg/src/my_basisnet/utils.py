import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path


def utc_now():
    """Return current UTC timestamp. Callable for SQLAlchemy default values."""
    return datetime.now(timezone.utc)


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write bytes to a temporary file next to path, then rename it over path."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
