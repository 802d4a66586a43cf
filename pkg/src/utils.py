import csv, os

from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np

from . import errors, settings


def seed_stream(seed: int, stream: settings.Stream, *keys: int) -> np.random.Generator:
    """Returns the generator of one subsystem, independent of every other stream and key."""

    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(stream.value, *keys))
    return np.random.Generator(np.random.PCG64(sequence))


def parse_key_values(text: str, source: str = "<text>") -> Dict[str, str]:
    """Parses flat `key = value` lines. Empty lines and `#` comments are skipped."""

    result: Dict[str, str] = dict()
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise errors.ConfigError(f"{source}:{number}: expected 'key = value', got '{raw}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise errors.ConfigError(f"{source}:{number}: empty key")
        result[key] = value
    return result


def read_key_values(path: str) -> Dict[str, str]:
    if not os.path.isfile(path):
        raise errors.ConfigError(f"Configuration file '{path}' does not exist")
    with open(path, "r", encoding="utf-8") as f:
        return parse_key_values(f.read(), path)


def format_key_values(values: Mapping[str, object]) -> str:
    lines = list()
    for key in sorted(values):
        value = values[key]
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_key_values(path: str, values: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_key_values(values))


def resolve_out_dir(out_dir: str) -> str:
    """Relative output directories are placed under the root named by the environment, if set."""

    root = os.environ.get(settings.OUT_ROOT_ENV)
    if root and not os.path.isabs(out_dir):
        out_dir = os.path.join(root, out_dir)
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def append_csv(path: str, header: Sequence[str], row: Sequence[object]) -> None:
    exists = os.path.isfile(path)
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if not exists:
            writer.writerow(header)
        writer.writerow(row)


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def format_float(value: float, digits: int = 6) -> str:
    if value == float("inf"):
        return settings.PSNR_INFINITE
    return f"{value:.{digits}f}"


def markdown_table(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    lines.extend("| " + " | ".join(str(v) for v in row) + " |" for row in rows)
    return "\n".join(lines) + "\n"
