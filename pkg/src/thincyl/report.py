"""Report emission: delimited tables, stable JSON, and SVG figures.

JSON is written with sorted keys and no volatile fields, so rerunning a
configuration reproduces the bytes exactly.  Figures are rendered with
matplotlib straight to SVG with text kept as text elements (so axis
labels stay greppable in the output).
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .errors import PreconditionError

__all__ = [
    "json_ready",
    "write_json",
    "write_csv",
    "sweep_table",
    "splitting_table",
    "trapezoid_table",
    "neumann_half_table",
    "figure_deviations",
    "figure_band_mass",
    "figure_scan",
    "figure_decay",
    "figure_splitting",
    "save_figure",
    "sha256_bytes",
    "sha256_file",
    "RunManifest",
]

SWEEP_HEADER = ["h", "p", "eigenvalue", "scaled", "mesh_error", "reference",
                "deviation", "below_mesh_floor", "band_minus", "band_middle",
                "band_plus", "sup_ratio", "mismatch"]
SPLITTING_HEADER = ["h", "lambda1", "lambda2", "gap", "scaled_half_gap",
                    "residual_scale", "included", "note", "half_even", "half_odd",
                    "half_even_rel", "half_odd_rel"]
TRAPEZOID_HEADER = ["h", "index", "eigenvalue", "correction", "predicted",
                    "rel_error", "mass_near_peak", "mesh_error"]
NEUMANN_HALF_HEADER = ["h", "matched_eigenvalue", "target", "deviation",
                       "index", "spectrum_size"]


def json_ready(obj):
    """Recursively convert numpy scalars/arrays for json serialization."""
    if isinstance(obj, dict):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(payload: dict, path) -> None:
    with open(path, "w") as stream:
        json.dump(json_ready(payload), stream, indent=2, sort_keys=True)
        stream.write("\n")


def write_csv(rows, path, header) -> None:
    """RFC-4180-style delimited output with a fixed documented header."""
    if not rows:
        raise PreconditionError("refusing to write an empty table")
    with open(path, "w", newline="") as stream:
        writer = csv.DictWriter(stream, fieldnames=header, extrasaction="ignore",
                                quoting=csv.QUOTE_MINIMAL)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def sweep_table(series) -> list:
    rows = []
    for record in series.records:
        rows.extend(record.to_row_dicts())
    return rows


def splitting_table(report) -> list:
    return [{k: v for k, v in vars(p).items()} for p in report.points]


def trapezoid_table(report) -> list:
    return [dict(vars(p)) for p in report.points]


def neumann_half_table(report) -> list:
    return [dict(vars(p)) for p in report.points]


# ---------------------------------------------------------------------------
# figures

def _new_axes(xlabel: str, ylabel: str):
    fig = Figure(figsize=(5.0, 3.4), dpi=110)
    ax = fig.add_subplot(1, 1, 1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def save_figure(fig: Figure, path) -> None:
    """Render to SVG 1.1 with text kept as text elements."""
    with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "thincyl"}):
        fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})


def figure_deviations(points, fit=None, label="deviation"):
    """log10 deviation against 1/h, with the fitted line when given."""
    fig, ax = _new_axes("1/h", "log10 deviation")
    hs = np.array([p[0] for p in points])
    devs = np.array([p[1] for p in points])
    ok = devs > 0
    ax.plot(1.0 / hs[ok], np.log10(devs[ok]), "o-", label=label)
    if fit is not None:
        xs = np.linspace(np.min(1.0 / hs), np.max(1.0 / hs), 50)
        ax.plot(xs, (np.log(fit.c) - fit.tau * xs) / np.log(10.0), "--",
                label=f"fit tau={fit.tau:.3g}")
    ax.legend(loc="best", fontsize=8)
    return fig


def figure_band_mass(records):
    fig, ax = _new_axes("1/h", "band mass")
    hs = np.array([r.h for r in records])
    mids = np.array([r.metrics[0].band_fractions[1] if r.metrics else np.nan
                     for r in records])
    ax.semilogy(1.0 / hs, mids, "s-", label="middle band")
    ax.legend(loc="best", fontsize=8)
    return fig


def figure_scan(scan):
    fig, ax = _new_axes("trial decay rate", "quotient")
    ax.semilogx(scan.eps_grid, scan.quotients, "-", label="quotient")
    ax.axhline(scan.cutoff, color="k", linestyle=":", label="cutoff")
    ax.plot([scan.best_eps], [scan.best_quotient], "o")
    ax.legend(loc="best", fontsize=8)
    return fig


def figure_decay(decay_fit):
    fig, ax = _new_axes("axial coordinate", "log cross-section norm")
    ax.plot(decay_fit.stations, decay_fit.log_norms, "o", label="measured")
    xs = np.array(decay_fit.window)
    ax.plot(xs, decay_fit.slope * xs + decay_fit.intercept, "--",
            label=f"slope {decay_fit.slope:.4g}")
    ax.legend(loc="best", fontsize=8)
    return fig


def figure_splitting(report):
    fig, ax = _new_axes("rate / h", "log scaled half-gap")
    xs = np.array([report.rate / p.h for p in report.points if p.included])
    ys = np.log([p.scaled_half_gap for p in report.points if p.included])
    ax.plot(xs, ys, "o", label="measured")
    grid = np.linspace(xs.min(), xs.max(), 20)
    ax.plot(grid, report.slope * grid + report.intercept, "--",
            label=f"slope {report.slope:.3f}")
    ax.legend(loc="best", fontsize=8)
    return fig


# ---------------------------------------------------------------------------
# manifest

def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    with open(path, "rb") as stream:
        return sha256_bytes(stream.read())


@dataclass
class RunManifest:
    """Inventory of one experiment run."""

    config_digest: str
    code_version: str
    created_utc: str
    kind: str
    steps: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def add_step(self, name: str, status: str, seconds: float) -> None:
        self.steps.append({"name": name, "status": status,
                           "seconds": round(float(seconds), 6)})

    def add_file(self, path, base) -> None:
        import os
        rel = os.path.relpath(path, base)
        self.files.append({"path": rel, "sha256": sha256_file(path),
                           "bytes": int(os.path.getsize(path))})

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "code_version": self.code_version,
            "created_utc": self.created_utc,
            "kind": self.kind,
            "steps": self.steps,
            "files": sorted(self.files, key=lambda f: f["path"]),
        }
