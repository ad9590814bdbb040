import json
import os
import re

from dotenv import load_dotenv

load_dotenv()


def _env_int(name: str, default: int, minimum: int = 1) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return max(minimum, int(raw))
    except ValueError:
        return default


### parallelism
SPIKE_THREADS = _env_int("SPIKE_THREADS", os.cpu_count() or 1)

### logging
SPIKE_LOG_FILE = os.getenv("SPIKE_LOG_FILE", "spikelab.log")
SPIKE_LOG_LEVEL = os.getenv("SPIKE_LOG_LEVEL", "INFO").upper()

### numerics
SPIKE_CACHE_GRID = _env_int("SPIKE_CACHE_GRID", 4096, minimum=64)


def resolve_threads(requested: int | None = None) -> int:
    """Number of worker threads, never above SPIKE_THREADS."""
    if requested is None:
        return SPIKE_THREADS
    return max(1, min(requested, SPIKE_THREADS))


def read_json(path: str):
    """Load a JSON file, returning the parsed data and the raw text."""
    from spikelab.errors import ConfigError

    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read file: {e.strerror}", path=path) from e
    try:
        return json.loads(text), text
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, path=path, line=e.lineno) from e


def json_key_line(text: str | None, key: str | None) -> int | None:
    """1-based line of the first ``"key":`` occurrence in a JSON text."""
    if not text or not key:
        return None
    match = re.search(rf'"{re.escape(key)}"\s*:', text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def ensure_parent(path: str) -> str:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path
