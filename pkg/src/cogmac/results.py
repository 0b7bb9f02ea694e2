"""Result rows, CSV / JSON-lines emission and run manifests."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

from .channels import ValidationError

PROVENANCE = ("analytic", "simulated", "optimized")
FIXED_COLUMNS = ("metric", "value", "std_error", "provenance", "seed")


@dataclass
class ResultRow:
    coords: dict
    metric: str
    value: float
    std_error: float | None = None
    provenance: str = "analytic"
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValidationError(f"provenance must be one of {PROVENANCE}, got {self.provenance!r}")
        self.value = float(self.value)
        if not math.isfinite(self.value):
            raise ValidationError(f"non-finite value for {self.metric} at {self.coords}")
        if self.std_error is not None:
            self.std_error = float(self.std_error)


def fmt_num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def parse_num(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def sweep_keys(rows) -> list[str]:
    keys = []
    for r in rows:
        for k in r.coords:
            if k not in keys:
                keys.append(k)
    return keys


def emit_results(rows, fmt: str = "csv", path=None, keys=None) -> str:
    """Write rows to ``path`` (or stdout when None / '-'); returns the text."""
    rows = list(rows)
    keys = list(keys) if keys is not None else sweep_keys(rows)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys + list(FIXED_COLUMNS))
        for r in rows:
            w.writerow([fmt_num(r.coords.get(k)) for k in keys]
                       + [r.metric, fmt_num(r.value), fmt_num(r.std_error), r.provenance,
                          fmt_num(r.seed)])
        text = buf.getvalue()
    elif fmt in ("jsonl", "json-lines"):
        lines = []
        for r in rows:
            rec = {k: r.coords.get(k) for k in keys}
            rec.update(metric=r.metric, value=r.value, std_error=r.std_error,
                       provenance=r.provenance, seed=r.seed)
            lines.append(json.dumps(rec))
        text = "".join(line + "\n" for line in lines)
    else:
        raise ValidationError(f"unknown format {fmt!r}; use csv or jsonl")
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ValidationError(f"cannot write {path}: {exc.strerror}") from exc
    return text


def read_results(path, fmt: str = "csv") -> list[ResultRow]:
    """Inverse of :func:`emit_results`."""
    with open(path, newline="") as fh:
        text = fh.read()
    rows = []
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        keys = header[: len(header) - len(FIXED_COLUMNS)]
        for rec in reader:
            coords = {k: parse_num(v) for k, v in zip(keys, rec)}
            metric, value, se, prov, seed = rec[len(keys):]
            rows.append(ResultRow(coords, metric, float(value), parse_num(se), prov,
                                  parse_num(seed)))
    else:
        for line in text.splitlines():
            rec = json.loads(line)
            fixed = {k: rec.pop(k) for k in FIXED_COLUMNS}
            rows.append(ResultRow(rec, fixed["metric"], fixed["value"], fixed["std_error"],
                                  fixed["provenance"], fixed["seed"]))
    return rows


def write_manifest(path, manifest: dict):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if isinstance(x, (set, tuple)):
        return list(x)
    return str(x)


def output_paths(out, fmt: str, stem: str):
    """Resolve the results file and manifest location.

    ``out`` may be a file path, a directory, or None (falls back to
    ``$COGMAC_OUT_DIR``, then stdout with no manifest).
    """
    ext = "csv" if fmt == "csv" else "jsonl"
    if out is None:
        env = os.environ.get("COGMAC_OUT_DIR")
        if not env:
            return None, None
        out = os.path.join(env, f"{stem}.{ext}")
    out = str(out)
    if out == "-":
        return None, None
    if os.path.isdir(out) or out.endswith(os.sep):
        os.makedirs(out, exist_ok=True)
        out = os.path.join(out, f"{stem}.{ext}")
    else:
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
    return out, out + ".manifest.json"
