"""Reader for the TOML subset used by experiment configs.

Python 3.10 has no stdlib tomllib and the deployment mirror carries no TOML
package, so this covers exactly what the config files need: top-level and
``[table]`` sections, ``key = value`` with strings, booleans, integers,
floats, and flat homogeneous arrays, plus ``#`` comments.  Swap for
``tomllib.loads`` on Python >= 3.11.
"""

from __future__ import annotations


class TomlError(ValueError):
    pass


def _parse_scalar(text: str):
    text = text.strip()
    if not text:
        raise TomlError("empty value")
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        if any(c in text for c in ".eE") and not text.startswith("0x"):
            return float(text)
        return int(text, 0)
    except ValueError:
        try:
            return float(text)
        except ValueError as exc:
            raise TomlError(f"cannot parse value {text!r}") from exc


def _split_array_items(body: str):
    items, depth, cur, in_str = [], 0, [], None
    for ch in body:
        if in_str:
            cur.append(ch)
            if ch == in_str:
                in_str = None
            continue
        if ch in "\"'":
            in_str = ch
            cur.append(ch)
        elif ch == "[":
            depth += 1
            cur.append(ch)
        elif ch == "]":
            depth -= 1
            cur.append(ch)
        elif ch == "," and depth == 0:
            items.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        items.append(tail)
    return [s.strip() for s in items if s.strip()]


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        return [_parse_value(item) for item in _split_array_items(text[1:-1])]
    return _parse_scalar(text)


def _strip_comment(line: str) -> str:
    out, in_str = [], None
    for ch in line:
        if in_str:
            out.append(ch)
            if ch == in_str:
                in_str = None
        elif ch in "\"'":
            in_str = ch
            out.append(ch)
        elif ch == "#":
            break
        else:
            out.append(ch)
    return "".join(out)


def loads(text: str) -> dict:
    root: dict = {}
    table = root
    pending_key, pending_parts = None, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if pending_key is not None:
            pending_parts.append(line)
            joined = " ".join(pending_parts)
            if joined.count("[") == joined.count("]"):
                table[pending_key] = _parse_value(joined)
                pending_key, pending_parts = None, []
            continue
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise TomlError(f"line {lineno}: empty table name")
            table = root
            for part in name.split("."):
                table = table.setdefault(part, {})
                if not isinstance(table, dict):
                    raise TomlError(f"line {lineno}: {name!r} clashes with a value")
            continue
        if "=" not in line:
            raise TomlError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().strip('"').strip("'")
        value = value.strip()
        if value.startswith("[") and value.count("[") != value.count("]"):
            pending_key, pending_parts = key, [value]
            continue
        table[key] = _parse_value(value)
    if pending_key is not None:
        raise TomlError(f"unterminated array for key {pending_key!r}")
    return root


def load(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())
