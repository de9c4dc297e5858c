"""Hash utilities for run provenance."""

import hashlib
import json
from typing import Any, Dict


def config_fingerprint(config: Dict[str, Any]) -> str:
    """
    SHA-256 fingerprint of a run configuration.

    The configuration is serialized as canonical JSON (sorted keys, no
    whitespace, floats in repr form), so equal configurations hash equally
    regardless of key order.

    Args:
        config: JSON-serializable configuration values

    Returns:
        str: SHA-256 hash (64-character hexadecimal string)
    """
    if not config:
        raise ValueError("Configuration cannot be empty for fingerprinting")

    canonical = json.dumps(config, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def validate_hash(hash_string: str) -> bool:
    """
    Validate that a string is a proper SHA-256 hash.

    Args:
        hash_string: String to validate

    Returns:
        bool: True if valid SHA-256 hash format
    """
    if not hash_string or len(hash_string) != 64:
        return False

    try:
        int(hash_string, 16)
        return True
    except ValueError:
        return False
