"""
Bundled data files (profiles.json).

    from acq_core.resources import load_json_resource
    profiles = load_json_resource("profiles.json")
"""
import json
from functools import lru_cache
from importlib import resources
from typing import Any


@lru_cache(maxsize=None)
def load_json_resource(name: str) -> Any:
    """Parsed contents of a bundled JSON file; cached, callers must not mutate it."""
    ref = resources.files(__package__).joinpath(name)
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled resource named {name!r}")
    return json.loads(ref.read_text(encoding="utf-8"))
