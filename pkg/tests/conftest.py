import json

import numpy as np
import pytest


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.Philox(20240611))


@pytest.fixture
def write_json(tmp_path):
    """Write a JSON document (or raw text) and return its path."""

    def write(name: str, content) -> str:
        path = tmp_path / name
        text = content if isinstance(content, str) else json.dumps(
            content, indent=2
        )
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write
