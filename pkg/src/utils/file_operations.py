"""File I/O helpers for result artifacts, with locking and forced flushes."""

import fcntl
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Generator, Union

import numpy as np

from src.core.exceptions import OutputError


@contextmanager
def file_lock(file_path: Union[str, Path], mode: str = 'r') -> Generator:
    """
    Open a file under an exclusive ``fcntl.flock`` lock.

    Sweep entries may be written by concurrent processes into one output
    directory; the lock keeps each artifact whole.

    Args:
        file_path: Path to the file to lock
        mode: File open mode ('r', 'w', 'a', etc.)

    Yields:
        file: Opened file object with exclusive lock
    """
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)

    # newline='' keeps LF line endings exactly as written
    file_obj = open(file_path, mode, encoding='utf-8', newline='')
    try:
        fcntl.flock(file_obj.fileno(), fcntl.LOCK_EX)
        yield file_obj
    finally:
        fcntl.flock(file_obj.fileno(), fcntl.LOCK_UN)
        file_obj.close()


def write_text_file(file_path: Union[str, Path], content: str) -> Path:
    """
    Write text content under a lock and force it to disk.

    Args:
        file_path: Destination path
        content: Text to write

    Returns:
        Path: The written path

    Raises:
        OutputError: If the file cannot be written
    """
    file_path = Path(file_path)
    try:
        with file_lock(file_path, 'w') as f:
            f.write(content)
            f.flush()
            os.fsync(f.fileno())
    except OSError as e:
        raise OutputError(f"Cannot write {file_path}: {e}") from e
    return file_path


def read_text_file(file_path: Union[str, Path]) -> str:
    """
    Read a text file under a lock.

    Raises:
        FileNotFoundError: If the file does not exist
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"File not found: {file_path}")

    with file_lock(file_path, 'r') as f:
        return f.read()


def write_json_file(file_path: Union[str, Path], data: Dict[str, Any]) -> Path:
    """
    Write JSON with sorted keys so that equal data gives identical bytes.

    Args:
        file_path: Path to JSON file
        data: Dictionary data to write

    Returns:
        Path: The written path

    Raises:
        OutputError: If the file cannot be written
    """
    content = json.dumps(data, indent=2, sort_keys=True, default=_json_serializer, ensure_ascii=False)
    return write_text_file(file_path, content + '\n')


def ensure_writable_dir(dir_path: Union[str, Path]) -> Path:
    """
    Create ``dir_path`` if needed and check that files can be created in it.

    Raises:
        OutputError: If the directory cannot be created or written to
    """
    dir_path = Path(dir_path)
    try:
        dir_path.mkdir(parents=True, exist_ok=True)
        with tempfile.TemporaryFile(dir=dir_path):
            pass
    except OSError as e:
        raise OutputError(f"Output directory {dir_path} is not writable: {e}") from e
    return dir_path


def _json_serializer(obj: Any) -> Any:
    """
    JSON serializer for numpy scalars, arrays and pydantic models.

    Raises:
        TypeError: If object type is not supported
    """
    if isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.ndarray):
        return obj.tolist()
    elif hasattr(obj, 'model_dump'):
        return obj.model_dump()
    else:
        raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")
