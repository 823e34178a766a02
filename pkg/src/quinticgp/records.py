"""Plain-text report records, CSV tables and INI run configuration.

A report file is a header block of ``# key = value`` lines (schema version,
command, resolved configuration, seed) followed by records: blocks of
``key = value`` lines separated by blank lines.  Everything is written in a
fixed order with ``repr`` floats so that reruns are byte-identical.
"""

from __future__ import annotations

import configparser
import csv
import io
import math

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class SchemaMismatchError(ValueError):
    pass


# option table: section -> key -> (type, default)
CONFIG_SCHEMA = {
    "grid": {"d": (int, 3), "N": (int, 32), "L": (float, 2 * math.pi * 8)},
    "time": {"T": (float, 1.0), "dt": (float, 0.01), "order": (int, 16), "nodes": (int, 64)},
    "ensemble": {"trials": (int, 100), "seed": (int, 0), "kind": (str, "modes")},
    "potential": {"kind": (str, "delta"), "lambda": (float, 1.0), "width": (float, 1.0), "eps": (float, 0.0)},
    "combinatorics": {"k": (int, 1), "n": (int, 2), "cap": (int, 10**6)},
    "output": {"out": (str, ""), "csv": (str, ""), "plots": (str, "")},
}


def _cast(kind, raw, where):
    try:
        if kind is bool:
            return str(raw).lower() in ("1", "true", "yes", "on")
        return kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind.__name__}") from exc


def load_config(path) -> dict:
    """Parse an INI config into {section.key: value}, rejecting unknown keys."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            kind, _ = CONFIG_SCHEMA[section][key]
            out[f"{section}.{key}"] = _cast(kind, raw, f"{section}.{key}")
    return out


def resolve(keys, file_values: dict, flag_values: dict) -> dict:
    """Defaults, then config file, then explicit flags (None means not given)."""
    out = {}
    for dotted in keys:
        section, key = dotted.split(".", 1)
        kind, default = CONFIG_SCHEMA[section][key]
        val = default
        if dotted in file_values:
            val = file_values[dotted]
        if flag_values.get(dotted) is not None:
            val = _cast(kind, flag_values[dotted], dotted)
        out[dotted] = val
    return out


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(format_value(x) for x in v)
    return str(v)


def format_header(command: str, config: dict, seed=None) -> str:
    lines = [f"# schema_version = {SCHEMA_VERSION}", f"# command = {command}"]
    for key in sorted(config):
        lines.append(f"# config.{key} = {format_value(config[key])}")
    lines.append(f"# seed = {format_value(seed) if seed is not None else 'none'}")
    return "\n".join(lines) + "\n"


def format_records(records) -> str:
    blocks = []
    for rec in records:
        blocks.append("\n".join(f"{k} = {format_value(v)}" for k, v in rec.items()))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def render_report(command: str, config: dict, seed, records) -> str:
    body = format_records(records)
    return format_header(command, config, seed) + ("\n" + body if body else "")


def parse_report(text: str) -> tuple[dict, list[dict]]:
    header, records, current = {}, [], {}
    for line in text.splitlines():
        if line.startswith("#"):
            if "=" in line:
                k, v = line[1:].split("=", 1)
                header[k.strip()] = v.strip()
            continue
        if not line.strip():
            if current:
                records.append(current)
                current = {}
            continue
        k, v = line.split("=", 1)
        current[k.strip()] = v.strip()
    if current:
        records.append(current)
    return header, records


def read_report(path) -> tuple[dict, list[dict]]:
    with open(path) as fh:
        return parse_report(fh.read())


def render_csv(header: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(row[c]) if c in row else "" for c in columns])
    return buf.getvalue()


def write_text(path, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def as_number(s):
    try:
        return float(s)
    except (TypeError, ValueError):
        return None
