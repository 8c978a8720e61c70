"""Output helpers: number formatting, CSV/JSON writers, digests and console tables."""

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np
from rich.console import Console
from rich.table import Table

SIG_DIGITS = 10


def format_sig(value: Any) -> str:
    """Render a CSV cell with 10 significant digits.

    Booleans become true/false and None an empty cell; strings pass through.
    """
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        return f'{value:.{SIG_DIGITS}g}'
    return str(value)


def json_value(value: Any) -> Any:
    """JSON counterpart of format_sig: floats rounded to the same precision, NaN/inf as strings."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return format_sig(value)
        return float(f'{value:.{SIG_DIGITS}g}')
    if isinstance(value, (list, tuple)):
        return [json_value(v) for v in value]
    if isinstance(value, dict):
        return {k: json_value(v) for k, v in value.items()}
    return str(value)


def rows_to_csv(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    lines = [','.join(columns)]
    for row in rows:
        lines.append(','.join(format_sig(row.get(col)) for col in columns))
    return '\n'.join(lines) + '\n'


def rows_to_json(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    """Serialize rows as a JSON list of objects with the CSV keys, in CSV column order."""
    payload = [{col: json_value(row.get(col)) for col in columns} for row in rows]
    return json.dumps(payload, indent=2) + '\n'


def write_text(path: Path, text: str) -> Path:
    # newline='' keeps '\n' endings on every platform
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    return path


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    return write_text(path, rows_to_csv(columns, rows))


def canonical_json_bytes(obj: Any) -> bytes:
    s = json.dumps(obj, sort_keys=True, ensure_ascii=True, indent=2, separators=(', ', ': '))
    return (s + '\n').encode('utf-8')


def sha256_bytes(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()


def log_grid(lo: float, hi: float, points: int) -> List[float]:
    """Log-spaced grid of `points` values from lo to hi inclusive."""
    return [float(x) for x in np.logspace(math.log10(lo), math.log10(hi), points)]


def render_table(title: str, columns: Sequence[str], rows: Iterable[Mapping[str, Any]], console: Console = None) -> None:
    """Print rows as a rich table."""
    console = console or Console()
    table = Table(title=title)
    for col in columns:
        table.add_column(col, justify='right' if col not in ('construction', 'verb', 'branch') else 'left')
    for row in rows:
        table.add_row(*(format_sig(row.get(col)) for col in columns))
    console.print(table)


def render_mapping(title: str, data: Dict[str, Any], console: Console = None) -> None:
    """Print a key/value report as a two-column rich table."""
    console = console or Console()
    table = Table(title=title, show_header=False)
    table.add_column('key', style='cyan')
    table.add_column('value', justify='right')
    for key, value in data.items():
        table.add_row(key, format_sig(value) if not isinstance(value, (list, tuple, dict)) else json.dumps(json_value(value)))
    console.print(table)


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by (seed, key...).

    Streams with different keys are statistically independent and each one
    is reproducible on its own, whatever order they are consumed in.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))
