"""Bundled desk-scale datasets (synthetic, generated by tools/make_fixture.py)."""

from __future__ import annotations

import shutil
from importlib import resources
from pathlib import Path


def fixture_dir(name: str = "maize") -> Path:
    """Directory holding the bundled CSVs and config for one fixture."""
    path = Path(str(resources.files("agricaf") / "fixtures" / name))
    if not path.is_dir():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return path


def copy_fixture(dest: Path, name: str = "maize") -> Path:
    """Copy a fixture into a writable directory; returns the config path.

    The bundled config keeps relative paths, so runs write their outputs
    under the copy rather than into the installed package.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    for f in sorted(fixture_dir(name).iterdir()):
        shutil.copy(f, dest / f.name)
    return dest / "config.json"
