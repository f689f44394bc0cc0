"""Minimal TOML-subset reader (python 3.10 has no tomllib and the package
mirror carries no tomli).

Supported: [tables], [[arrays of tables]], dotted-free bare keys, strings,
integers, floats, booleans, and flat arrays. That covers the campaign and
targets configuration files; anything fancier raises.
"""

from __future__ import annotations


class TomlError(ValueError):
    pass


def _parse_scalar(text: str):
    text = text.strip()
    if not text:
        raise TomlError("empty value")
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    raise TomlError(f"cannot parse value {text!r}")


def _split_array(text: str) -> list[str]:
    items, depth, start, in_str = [], 0, 0, False
    for i, ch in enumerate(text):
        if ch == '"' and (i == 0 or text[i - 1] != "\\"):
            in_str = not in_str
        elif not in_str:
            if ch == "[":
                depth += 1
            elif ch == "]":
                depth -= 1
            elif ch == "," and depth == 0:
                items.append(text[start:i])
                start = i + 1
    tail = text[start:].strip()
    if tail:
        items.append(tail)
    return items


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(part) for part in _split_array(inner)]
    return _parse_scalar(text)


def _strip_comment(line: str) -> str:
    out, in_str = [], False
    for i, ch in enumerate(line):
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out)


def loads(text: str) -> dict:
    root: dict = {}
    current = root
    pending_key: str | None = None
    pending_value: list[str] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if pending_key is not None:
            pending_value.append(line)
            joined = " ".join(pending_value)
            if joined.count("[") == joined.count("]"):
                current[pending_key] = _parse_value(joined)
                pending_key = None
                pending_value = []
            continue
        if not line:
            continue
        if line.startswith("[[") and line.endswith("]]"):
            name = line[2:-2].strip()
            table: dict = {}
            _descend(root, name, is_list=True).append(table)
            current = table
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            current = _descend(root, name, is_list=False)
            continue
        if "=" not in line:
            raise TomlError(f"line {line_no}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().strip('"')
        value = value.strip()
        if value.startswith("[") and value.count("[") != value.count("]"):
            pending_key = key
            pending_value = [value]
            continue
        current[key] = _parse_value(value)
    if pending_key is not None:
        raise TomlError(f"unterminated array for key {pending_key!r}")
    return root


def _descend(root: dict, dotted: str, is_list: bool):
    parts = [p.strip().strip('"') for p in dotted.split(".")]
    node = root
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise TomlError(f"{part} is not a table")
    leaf = parts[-1]
    if is_list:
        bucket = node.setdefault(leaf, [])
        if not isinstance(bucket, list):
            raise TomlError(f"{leaf} is not an array of tables")
        return bucket
    table = node.setdefault(leaf, {})
    if not isinstance(table, dict):
        raise TomlError(f"{leaf} is not a table")
    return table


def load(fh) -> dict:
    data = fh.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return loads(data)
