"""CSV and manifest writers.

Every float goes through :func:`rsmajam.metrics.fmt`, so identical inputs give
byte-identical files.  Column meanings are listed in ``docs/csv_schema.md``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..metrics import PrecoderSet, fmt, interference_power, jamming_power


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_cell(x) for x in v)
    return str(v)


def write_table(rows, path, columns=None):
    """Write a list of dict rows; ``columns`` defaults to the first row's keys."""
    if not rows:
        raise ValueError("refusing to write an empty table")
    columns = columns or list(rows[0])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def emit_reports(tables, output_dir, manifest=None):
    """Write ``{name: rows}`` tables as ``<name>.csv`` plus ``manifest.json``.

    ``rows`` may also be a ``(columns, rows)`` pair to fix the column order.
    Returns the list of written paths.
    """
    if not tables:
        raise ValueError("no tables to write")
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for name, rows in tables.items():
        columns = None
        if isinstance(rows, tuple):
            columns, rows = rows
        written.append(write_table(rows, out / f"{name}.csv", columns))
    if manifest is not None:
        path = out / "manifest.json"
        data = dict(_jsonable(manifest))
        data["files"] = sorted(p.name for p in written)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


def interference_profile(cfg, cs, th, pre, scheme=""):
    """Per-subcarrier conditional mean interference at each PU against its threshold."""
    rows = []
    for m in range(cfg.M):
        for n in range(cfg.N):
            _, psi = interference_power(cs.M_hat[m][n], cs.sigma_pe2, cfg.Nr[m], pre.at(n))
            thr = th.I_thr[m, n]
            rows.append({"scheme": scheme, "pu": m + 1, "n": n + 1, "interference": psi,
                         "I_thr": thr, "within": bool(psi <= thr + 1e-6)})
    return rows


def jamming_profile(cfg, cs, th, pre, scheme=""):
    """Per-subcarrier mean jamming power at each AU against its threshold."""
    rows = []
    for l in range(cfg.L):
        for n in range(cfg.N):
            lam = jamming_power(cs.R[l, n], pre.at(n))
            jammed = bool(th.jam_mask[l, n])
            rows.append({"scheme": scheme, "au": l + 1, "n": n + 1, "jamming": lam,
                         "J_thr": th.J_thr[l, n], "jammed": jammed,
                         "within": bool(not jammed or lam >= th.J_thr[l, n] - 1e-6)})
    return rows


def precoder_rows(pre, scheme=""):
    """Precoders flattened to one row per (stream, subcarrier, antenna)."""
    K, L, N, Nt = pre.dims
    names = ["common"] + [f"private_{k + 1}" for k in range(K)] + [f"jamming_{l + 1}" for l in range(L)]
    Q = pre.stacked()
    return [{"scheme": scheme, "stream": names[s], "n": n + 1, "antenna": a + 1,
             "re": float(Q[n, s, a].real), "im": float(Q[n, s, a].imag)}
            for s in range(Q.shape[1]) for n in range(N) for a in range(Nt)]


def save_precoders(pre, path):
    """Binary artifact with the precoders and common-rate shares (for BER reuse)."""
    np.savez(path, p_c=pre.p_c, p=pre.p, f=pre.f, c_bar=pre.c_bar)


def load_precoders(path):
    with np.load(path) as z:
        return PrecoderSet(z["p_c"], z["p"], z["f"], z["c_bar"])
