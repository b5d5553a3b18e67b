"""Flat ``key = value`` text files with dotted keys.

Used both for the versioned cost-coefficient table and for experiment
configuration. Lines starting with ``#`` are comments.
"""

from importlib import resources
from pathlib import Path


def _coerce(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if "," in text:
        return [_coerce(part) for part in text.split(",") if part.strip()]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip("\"'")


def parse_flat(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = _coerce(value)
    return out


def load_flat(path):
    return parse_flat(Path(path).read_text())


def dump_flat(mapping):
    lines = []
    for key in sorted(mapping):
        value = mapping[key]
        if isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def load_constants(path=None):
    """Load the cost-coefficient table; defaults to the bundled version."""
    if path is None:
        text = resources.files("acfs").joinpath("data/constants_v1.txt").read_text()
        return parse_flat(text)
    return load_flat(path)


def subtree(mapping, prefix):
    """Entries under ``prefix.`` with the prefix stripped."""
    prefix = prefix.rstrip(".") + "."
    return {k[len(prefix):]: v for k, v in mapping.items() if k.startswith(prefix)}
