import os
import json
import hashlib
from datetime import datetime
from typing import List, Dict, Any

def create_output_folder(folder_path: str) -> None:
    """Create output folder if it doesn't exist."""
    os.makedirs(folder_path, exist_ok=True)

def validate_file_type(filename: str, allowed_extensions: List[str]) -> bool:
    """Validate file type based on extension."""
    _, ext = os.path.splitext(filename.lower())
    return ext in allowed_extensions

def load_json_file(file_path: str) -> Dict[str, Any]:
    """
    Load a UTF-8 JSON document.

    Raises:
        ValueError: with the file name and line/column of the first syntax error
    """
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(
            f"{file_path}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    except UnicodeDecodeError as e:
        raise ValueError(f"{file_path}: not valid UTF-8 ({e.reason})") from e
    except OSError as e:
        raise ValueError(f"{file_path}: cannot read file ({e.strerror})") from e

def canonical_json(payload: Any) -> str:
    """Serialize a payload deterministically (sorted keys, no whitespace)."""
    return json.dumps(payload, sort_keys=True, separators=(',', ':'), allow_nan=False)

def get_payload_hash(payload: Any) -> str:
    """Generate SHA-256 hash of a JSON-serializable payload."""
    hash_sha256 = hashlib.sha256()
    hash_sha256.update(canonical_json(payload).encode('utf-8'))
    return hash_sha256.hexdigest()

def get_file_hash(file_path: str) -> str:
    """Generate SHA-256 hash of a file."""
    hash_sha256 = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(4096), b""):
            hash_sha256.update(chunk)
    return hash_sha256.hexdigest()

def format_timestamp(timestamp: datetime) -> str:
    """Format timestamp for display."""
    return timestamp.strftime("%B %d, %Y at %I:%M %p")

def parse_int_list(text: str) -> List[int]:
    """Parse a comma separated list of integers such as '2,4,16'."""
    values = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        values.append(int(part))
    if not values:
        raise ValueError(f"expected a comma separated list of integers, got {text!r}")
    return values
