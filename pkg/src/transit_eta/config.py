"""Minimal TOML-like config files: sections, ``key = value`` lines, comments.

Values are parsed as booleans (``true``/``false``), integers, floats, or
strings (quoted or bare). Example::

    [ingest]
    timestamp_format = "%Y-%m-%d %H:%M:%S"
    outbound_token = "1"

    [columns]
    recorded_at = "RecordedAtTime"
"""

from __future__ import annotations


def parse_value(text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config(text: str) -> dict:
    config: dict = {}
    section = config
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ValueError(f"line {lineno}: empty section name")
            section = config.setdefault(name, {})
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        # strip trailing comments from unquoted values
        value = value.strip()
        if value and value[0] not in "\"'" and "#" in value:
            value = value.split("#", 1)[0].strip()
        section[key] = parse_value(value)
    return config


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
