import json
from pathlib import Path
from typing import Any, Iterable, List, Union

import tomlkit

from . import CustomJsonEncoder


def dumps(obj: Any) -> str:
    """
    Serialize to JSON deterministically.

    Keys are sorted and floats use Python's shortest round-trip repr, so two
    runs over identical inputs produce identical bytes.
    """
    return json.dumps(obj, cls=CustomJsonEncoder, sort_keys=True, indent=2, allow_nan=False)


def write_json(path: Union[str, Path], obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n", encoding="utf-8")
    return path


def read_json(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def read_jsonl(path: Union[str, Path]) -> List[dict]:
    """Read a JSON-lines file, skipping blank lines."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_no}: invalid JSON line: {e}") from e
    return records


def write_jsonl(path: Union[str, Path], records: Iterable[Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, cls=CustomJsonEncoder, sort_keys=True, allow_nan=False))
            f.write("\n")
    return path


def read_structured(path: Union[str, Path]) -> dict:
    """Load a TOML or JSON document into plain python containers, chosen by suffix."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        with open(path, "r", encoding="utf-8") as f:
            return tomlkit.load(f).unwrap()
    return read_json(path)
