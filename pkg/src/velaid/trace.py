"""Columnar run traces and their CSV/JSON serialization.

A :class:`TraceSet` holds one scenario run: the truth trajectory, one
block per observer, and a header echoing the configuration that produced
it. CSV output is RFC-4180 style (CRLF, ``.`` decimal separator) with a
fixed column order; angles are converted to degrees on write and floats
are emitted with ``repr`` so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ObserverTrace", "TraceSet", "write_traceset"]

_RAD2DEG = 180.0 / math.pi

TRUTH_COLUMNS = ["t", "v1", "v2", "v3", "roll_deg", "pitch_deg", "yaw_deg"]
OBSERVER_COLUMNS = [
    "t",
    "v1_hat",
    "v2_hat",
    "v3_hat",
    "roll_hat_deg",
    "pitch_hat_deg",
    "yaw_hat_deg",
    "v_tilde_norm",
    "att_err_deg",
    "lyap_obs1",
    "lyap_obs1_boundary",
    "lyap_obs2",
    "eq_label",
]


@dataclass
class ObserverTrace:
    """Per-step history of one observer within a run.

    Angles are stored in radians; reduced observers carry NaN yaw and a
    None ``R_bar``. ``gamma_hat`` is the body-frame gravity-direction
    estimate (for full observers, the third row of R_hat).
    """

    kind: str
    v_hat: np.ndarray
    euler: np.ndarray
    gamma_hat: np.ndarray
    v_tilde_norm: np.ndarray
    att_err: np.ndarray
    lyap_obs1: np.ndarray
    lyap_obs1_boundary: np.ndarray
    lyap_obs2: np.ndarray
    eq_label: np.ndarray
    v_bar: np.ndarray
    gamma_bar: np.ndarray
    R_bar: np.ndarray | None = None


@dataclass
class TraceSet:
    """Truth plus observer traces for one scenario run."""

    header: dict = field(default_factory=dict)
    t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    truth_v: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    truth_euler: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    observers: dict[str, ObserverTrace] = field(default_factory=dict)

    def truth_rows(self) -> list[list[float]]:
        rows = []
        for k in range(len(self.t)):
            e = self.truth_euler[k]
            rows.append(
                [
                    float(self.t[k]),
                    float(self.truth_v[k, 0]),
                    float(self.truth_v[k, 1]),
                    float(self.truth_v[k, 2]),
                    float(e[0]) * _RAD2DEG,
                    float(e[1]) * _RAD2DEG,
                    float(e[2]) * _RAD2DEG,
                ]
            )
        return rows

    def observer_rows(self, kind: str) -> list[list[float]]:
        tr = self.observers[kind]
        rows = []
        for k in range(len(self.t)):
            e = tr.euler[k]
            rows.append(
                [
                    float(self.t[k]),
                    float(tr.v_hat[k, 0]),
                    float(tr.v_hat[k, 1]),
                    float(tr.v_hat[k, 2]),
                    float(e[0]) * _RAD2DEG,
                    float(e[1]) * _RAD2DEG,
                    float(e[2]) * _RAD2DEG,
                    float(tr.v_tilde_norm[k]),
                    float(tr.att_err[k]) * _RAD2DEG,
                    float(tr.lyap_obs1[k]),
                    float(tr.lyap_obs1_boundary[k]),
                    float(tr.lyap_obs2[k]),
                    int(tr.eq_label[k]),
                ]
            )
        return rows


def _write_csv(path: Path, columns: list[str], rows: list[list[float]]) -> None:
    # repr keeps full float precision and makes reruns byte-identical
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    path.write_text("\r\n".join(lines) + "\r\n", encoding="utf-8")


def write_traceset(ts: TraceSet, out_dir: str | Path, stem: str) -> list[Path]:
    """Write ``<stem>_run.json``, ``<stem>_truth.csv`` and one
    ``<stem>_<observer>.csv`` per observer block; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    header_path = out / f"{stem}_run.json"
    header_path.write_text(json.dumps(ts.header, indent=2, sort_keys=True) + "\n")
    paths.append(header_path)

    truth_path = out / f"{stem}_truth.csv"
    _write_csv(truth_path, TRUTH_COLUMNS, ts.truth_rows())
    paths.append(truth_path)

    for kind in ts.observers:
        p = out / f"{stem}_{kind}.csv"
        _write_csv(p, OBSERVER_COLUMNS, ts.observer_rows(kind))
        paths.append(p)
    return paths
