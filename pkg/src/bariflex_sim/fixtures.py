"""Flat ``key = value`` fixture files.

All configuration (linkage geometry, finger construction, motor constants,
object sets, calibration factors) is stored as human-readable structured
text: one ``key = value`` pair per line, ``#`` comments, SI units
throughout.  The format is deliberately dumb so fixtures diff cleanly in
golden tests and can be hand-edited during calibration.
"""

from __future__ import annotations

import importlib.resources
from pathlib import Path


class FixtureError(ValueError):
    """Malformed fixture file; carries the offending line number."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


def parse_value(text: str):
    """Best-effort scalar parse: int, float, or bare string."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def load_fixture(path) -> dict:
    """Read one key=value file into an ordered dict (insertion order kept)."""
    path = Path(path)
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FixtureError(path, lineno, f"expected 'key = value', got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key:
                raise FixtureError(path, lineno, "empty key")
            if key in out:
                raise FixtureError(path, lineno, f"duplicate key {key!r}")
            out[key] = parse_value(value)
    return out


def dump_fixture(data: dict, path, header: str | None = None) -> None:
    """Write a dict as a key=value file. Floats use repr for round-tripping."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    for key, value in data.items():
        if hasattr(value, "item"):  # numpy scalar
            value = value.item()
        if isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def data_path(name: str) -> Path:
    """Path of a packaged default fixture (``data/<name>``)."""
    return Path(importlib.resources.files("bariflex_sim").joinpath("data", name))


def load_packaged(name: str) -> dict:
    return load_fixture(data_path(name))
