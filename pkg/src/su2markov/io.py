"""CSV and JSON writers with a schema line at the top of every file."""

from __future__ import annotations

import csv
import io
import json
from typing import Iterable, Sequence

__all__ = ["SCHEMA_VERSION", "SCHEMAS", "csv_text", "json_text"]

SCHEMA_VERSION = "1"

# Column layout of every CSV the command line writes.
SCHEMAS = {
    "generator": ("row_level", "row_phase", "col_level", "col_phase", "rate"),
    "chain_path": ("t", "level", "phase", "seed"),
    "diffusion_path": ("t", "x", "phase", "alive"),
    "transition": ("t", "i", "phase_from", "j", "phase_to", "km", "expm", "abs_diff"),
    "density": ("t", "x", "y", "phase_from", "phase_to", "value"),
    "psi": ("y", "psi1", "psi2"),
    "invariant_measure": ("level", "phase", "value"),
}


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def csv_text(kind: str, rows: Iterable[Sequence]) -> str:
    """CSV body headed by ``# schema: su2markov/<kind>/v<version>``."""
    buf = io.StringIO()
    buf.write(f"# schema: su2markov/{kind}/v{SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCHEMAS[kind])
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def json_text(kind: str, payload: dict) -> str:
    """JSON object with ``schema`` as its first key."""
    return json.dumps({"schema": f"su2markov/{kind}/v{SCHEMA_VERSION}", **payload}, indent=2, sort_keys=False) + "\n"
