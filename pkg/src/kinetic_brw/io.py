"""CSV and JSON emission with a fixed, byte-reproducible format."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA = 1
HEADER = f"# kinetic-brw v{__version__} schema={SCHEMA}"


def fmt(v) -> str:
    """Round-trippable text for one cell."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, columns: list[str], rows) -> Path:
    path = Path(path)
    lines = [HEADER, ",".join(columns)]
    lines += [",".join(fmt(c) for c in row) for row in rows]
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("# kinetic-brw"):
        raise ValueError(f"{path} lacks the schema header")
    return text[1].split(","), [line.split(",") for line in text[2:]]


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": _plain(v.real), "im": _plain(v.imag)}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    return v


def write_json(path, doc: dict) -> Path:
    path = Path(path)
    text = json.dumps(_plain(doc), indent=2, sort_keys=True, allow_nan=False)
    path.write_bytes((text + "\n").encode("utf-8"))
    return path


def estimate_dict(e) -> dict:
    """EstimateWithError as plain JSON."""
    m = complex(e.mean)
    return {"re": m.real, "im": m.imag, "se_re": e.std_error, "se_im": e.std_error_imag, "n": e.n_samples}
