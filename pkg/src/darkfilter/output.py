"""Bit-stable CSV serialization and run-metadata sidecars.

CSV is the bulk-numerics contract: floats carry 17 significant digits,
lines end with a bare newline, and row order is whatever the caller
passes, so identical inputs produce byte-identical bodies.  Metadata
goes into a JSON sidecar next to the data files; the sidecar holds the
non-reproducible bits (wall time) so the CSVs stay comparable.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import ValidationError

# the four fixed schemas; free-form headers are allowed for auxiliary files
SCHEMAS = {
    "trajectory": ("n", "survival", "q_n", "string_re", "string_im"),
    "spectrum": ("re", "im", "modulus", "kind"),
    "charges": ("angle_rad", "weight"),
    "scaling": ("L", "n_eps_sim", "n_eps_theory", "variant"),
}


def format_cell(value) -> str:
    if isinstance(value, str):
        if "," in value or "\n" in value:
            raise ValidationError(f"CSV cell {value!r} needs quoting; "
                                  "schemas are comma-free by design")
        return value
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            raise ValidationError("non-finite value in CSV output")
        return "%.17g" % float(value)
    raise ValidationError(f"unsupported CSV cell type {type(value).__name__}")


def emit_csv(path, header, rows):
    """Write rows under a header; every row must match the header width."""
    header = tuple(header)
    width = len(header)
    lines = [",".join(header)]
    for row in rows:
        cells = [format_cell(c) for c in row]
        if len(cells) != width:
            raise ValidationError(
                f"CSV row width {len(cells)} != header width {width}"
            )
        lines.append(",".join(cells))
    payload = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(payload)
    return path


def write_metadata(path, payload: dict):
    """JSON sidecar; keys sorted so structural diffs stay readable."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(_plain(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _plain(obj):
    """Recursively convert numpy scalars/arrays for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.complexfloating, complex)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
