"""
CSV serialization of batches, iteration traces and verification reports,
plus the plain-text verification table.

Floats are written with 17 significant digits and read back with the
round-trip parser, so every value is reproduced exactly.
"""
import logging
import os
from typing import List

import numpy as np
import pandas as pd

from app.models.data_batch import DataBatch
from app.models.iteration_trace import IterationTrace
from app.models.verification_report import VerificationReport
from app.utils.errors import InvalidArgumentError
from app.utils.matops import packed_size, sym_pack

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

BATCH_BLOCKS = ("x0", "x1", "d_xx", "I_xx", "I_xu", "I_xd", "I_xe", "I_ww")


def _columns(prefix: str, count: int) -> List[str]:
    return [f"{prefix}_{c}" for c in range(count)]


def _write(df: pd.DataFrame, path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(df)} rows to {path}")


def _block_widths(n: int, m: int, z: int) -> dict:
    return {
        "x0": n, "x1": n, "d_xx": packed_size(n), "I_xx": packed_size(n),
        "I_xu": n * m, "I_xd": n * z, "I_xe": n * m, "I_ww": packed_size(m),
    }


def batch_to_frame(batch: DataBatch) -> pd.DataFrame:
    """
    One row per window: role, n, m, z, T_window, t_start, then the start and
    end states and every integral block flattened as <block>_<c>. The I_xe
    columns are empty for learner batches.
    """
    count = batch.window_count
    df = pd.DataFrame({
        "role": [batch.role] * count,
        "n": batch.n,
        "m": batch.m,
        "z": batch.z,
        "T_window": batch.T_window,
        "t_start": batch.t_start,
    })
    blocks = {
        "x0": batch.start_states, "x1": batch.end_states, "d_xx": batch.d_xx, "I_xx": batch.I_xx,
        "I_xu": batch.I_xu, "I_xd": batch.I_xd, "I_ww": batch.I_ww,
        "I_xe": batch.I_xe if batch.I_xe is not None else np.full((count, batch.n * batch.m), np.nan),
    }
    parts = [df] + [pd.DataFrame(blocks[name], columns=_columns(name, blocks[name].shape[1]))
                    for name in BATCH_BLOCKS]
    return pd.concat(parts, axis=1)


def write_batch(batch: DataBatch, path: str):
    _write(batch_to_frame(batch), path)


def read_frame(path: str) -> pd.DataFrame:
    """Reads any artifact CSV with the exact float parser, so 17-digit values come back bit for bit"""
    return pd.read_csv(path, float_precision="round_trip")


def read_batch(path: str) -> DataBatch:
    """Reads a batch CSV written by write_batch or by an external recorder using the same columns"""
    df = read_frame(path)
    if df.empty:
        raise InvalidArgumentError(f"batch file {path} has no windows")
    missing = [c for c in ("role", "n", "m", "z", "T_window", "t_start") if c not in df.columns]
    if missing:
        raise InvalidArgumentError(f"batch file {path} lacks columns {missing}")
    role = str(df["role"].iloc[0])
    n, m, z = int(df["n"].iloc[0]), int(df["m"].iloc[0]), int(df["z"].iloc[0])
    widths = _block_widths(n, m, z)
    arrays = {}
    for name in BATCH_BLOCKS:
        cols = _columns(name, widths[name])
        absent = [c for c in cols if c not in df.columns]
        if absent:
            raise InvalidArgumentError(f"batch file {path} lacks columns {absent}")
        arrays[name] = df[cols].to_numpy(dtype=float).reshape(len(df), widths[name])
    I_xe = arrays["I_xe"] if role == "expert" else None
    return DataBatch(
        role=role, n=n, m=m, z=z, T_window=float(df["T_window"].iloc[0]),
        t_start=df["t_start"].to_numpy(dtype=float),
        start_states=arrays["x0"], end_states=arrays["x1"], d_xx=arrays["d_xx"], I_xx=arrays["I_xx"],
        I_xu=arrays["I_xu"], I_xd=arrays["I_xd"], I_xe=I_xe, I_ww=arrays["I_ww"],
    )


def _optional(value):
    return np.nan if value is None else value


def trace_to_frame(trace: IterationTrace) -> pd.DataFrame:
    """One row per iteration: i, packed Q, packed P, flattened K and L, packed Q_next, then diagnostics"""
    rows = []
    for r in trace.records:
        row = {"i": r.i}
        row.update(zip(_columns("Q", packed_size(r.Q.shape[0])), sym_pack(r.Q)))
        row.update(zip(_columns("P", packed_size(r.P.shape[0])), sym_pack(r.P)))
        row.update(zip(_columns("K", r.K.size), r.K.ravel()))
        row.update(zip(_columns("L", r.L.size), r.L.ravel()))
        row.update(zip(_columns("Q_next", packed_size(r.Q_next.shape[0])), sym_pack(r.Q_next)))
        row.update({
            "gare_residual": _optional(r.gare_residual),
            "consistency_residual": _optional(r.consistency_residual),
            "gain_error": _optional(r.gain_error),
            "hurwitz_ok": _optional(r.hurwitz_ok),
            "monotone_ok": r.monotone_ok,
            "q_monotone": r.q_monotone,
            "bound_ok": _optional(r.bound_ok),
            "p_step": _optional(r.p_step),
            "q_step": r.q_step,
            "l_step": r.l_step,
            "policy_residual": _optional(r.policy_residual),
            "weight_residual": _optional(r.weight_residual),
        })
        rows.append(row)
    return pd.DataFrame(rows)


def write_trace(trace: IterationTrace, path: str):
    _write(trace_to_frame(trace), path)


def report_to_frame(report: VerificationReport) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "name": c.name,
            "residual": c.residual,
            "tolerance": c.tolerance,
            "passed": c.passed,
            "anchor": c.anchor,
            "detail": c.detail,
        }
        for c in report.checks
    ], columns=["name", "residual", "tolerance", "passed", "anchor", "detail"])


def write_report(report: VerificationReport, path: str):
    _write(report_to_frame(report), path)


def write_report_text(report: VerificationReport, path: str):
    """Human-readable table from VerificationReport.to_text"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_text())
        fh.write("\n")
    logger.debug(f"Wrote verification table to {path}")
