"""Model files, result files, CSV exports and a tiny SVG line-chart writer.

Model documents are JSON objects::

    {"n": 2, "m": 1, "N": 2,
     "A": [[[...], [...]], ...],          # N row-major n x n arrays
     "B": [...], "C": [...],              # C optional, never used
     "phi": [[...], ...],
     "Q": [...], "R": [...],
     "learning": {...}}                   # optional, see learning_config_from_dict

Mode labels in every file are 1-based.  Floats are written with 9
significant digits.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InputError
from .model import CostWeights, MjlsModel, NoiseSpec, Trajectory
from .qlearn import LearningConfig, LearningReport
from .riccati import RiccatiSolution

SIG = 9


def fmt(v) -> str:
    return format(float(v), f".{SIG}g")


def _round(obj):
    """Round every float in a nested list to ``SIG`` significant digits."""
    if isinstance(obj, list):
        return [_round(v) for v in obj]
    return float(fmt(obj))


def load_document(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object at top level")
    return doc


def model_from_dict(doc: dict):
    """Build ``(MjlsModel, CostWeights)`` from a parsed model document."""
    missing = [k for k in ("n", "m", "N", "A", "B", "phi", "Q", "R") if k not in doc]
    if missing:
        raise InputError(f"model document lacks field(s): {', '.join(missing)}")
    n, m, N = int(doc["n"]), int(doc["m"]), int(doc["N"])
    model = MjlsModel(A=doc["A"], B=doc["B"], phi=doc["phi"], C=doc.get("C"))
    weights = CostWeights(Q=doc["Q"], R=doc["R"])
    if (model.N, model.n, model.m) != (N, n, m):
        raise DimensionMismatch(
            f"declared (N, n, m) = {(N, n, m)} but matrices give {(model.N, model.n, model.m)}"
        )
    return model, weights


def load_model(path):
    return model_from_dict(load_document(path))


def model_to_dict(model: MjlsModel, weights: CostWeights) -> dict:
    doc = {
        "n": model.n, "m": model.m, "N": model.N,
        "A": model.A.tolist(), "B": model.B.tolist(), "phi": model.phi.tolist(),
        "Q": weights.Q.tolist(), "R": weights.R.tolist(),
    }
    if model.C is not None:
        doc["C"] = model.C.tolist()
    return doc


def learning_config_from_dict(doc: dict) -> LearningConfig:
    """Read the ``learning`` section (or a bare learning object).

    Keys: ``L``, ``eps``, ``max_outer_iter``, ``max_collect_steps``,
    ``noise_std``, ``seed`` and optional ``K0``, ``Hbar0``, ``x0``.
    """
    sec = doc.get("learning", doc)
    known = {"L", "eps", "max_outer_iter", "max_collect_steps", "noise_std", "seed",
             "K0", "Hbar0", "x0", "theta0", "min_outer_iter"}
    unknown = set(sec) - known - {"n", "m", "N", "A", "B", "C", "phi", "Q", "R"}
    if unknown:
        raise InputError(f"unknown learning option(s): {', '.join(sorted(unknown))}")
    defaults = LearningConfig()
    try:
        return LearningConfig(
            L=int(sec.get("L", defaults.L)),
            eps=float(sec.get("eps", defaults.eps)),
            max_outer_iter=int(sec.get("max_outer_iter", defaults.max_outer_iter)),
            max_collect_steps=int(sec.get("max_collect_steps", defaults.max_collect_steps)),
            noise=NoiseSpec(std=float(sec.get("noise_std", defaults.noise.std))),
            seed=int(sec.get("seed", defaults.seed)),
            K0=None if sec.get("K0") is None else np.array(sec["K0"], dtype=float),
            Hbar0=None if sec.get("Hbar0") is None else np.array(sec["Hbar0"], dtype=float),
            x0=None if sec.get("x0") is None else np.array(sec["x0"], dtype=float),
            min_outer_iter=int(sec.get("min_outer_iter", defaults.min_outer_iter)),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad learning option: {exc}") from exc


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def riccati_to_dict(sol: RiccatiSolution) -> dict:
    return {
        "P": _round(sol.P.tolist()),
        "K": _round(sol.K.tolist()),
        "iterations": int(sol.iterations),
        "residual": float(fmt(sol.residual)),
    }


def load_gains(path) -> np.ndarray:
    doc = load_document(path)
    if "K" not in doc:
        raise InputError(f"{path}: gains document needs a 'K' field")
    return np.array(doc["K"], dtype=float)


def _writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def trajectory_header(n: int, m: int) -> list:
    return ["k", "theta"] + [f"x_{a + 1}" for a in range(n)] + [f"u_{b + 1}" for b in range(m)]


def trajectory_rows(traj: Trajectory):
    for r in traj.records:
        yield [str(r.k), str(r.theta + 1)] + [fmt(v) for v in r.x] + [fmt(v) for v in r.u]


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """One row per step: ``k, theta, x_1..x_n, u_1..u_m``."""
    fh, w = _writer(path)
    with fh:
        w.writerow(trajectory_header(traj.x.shape[1], traj.u.shape[1]))
        w.writerows(trajectory_rows(traj))


def gain_columns(N: int, m: int, n: int) -> list:
    """``K_i_j`` column labels; with ``m > 1`` the row is included as ``K_i_r_c``."""
    if m == 1:
        return [f"K_{i + 1}_{c + 1}" for i in range(N) for c in range(n)]
    return [f"K_{i + 1}_{r + 1}_{c + 1}" for i in range(N) for r in range(m) for c in range(n)]


def write_learning_report_csv(path, report: LearningReport) -> None:
    """``iter, e_K, cond_1..cond_N, K_*`` for outer iterations 1, 2, ..."""
    N, m, n = report.K.shape
    fh, w = _writer(path)
    with fh:
        w.writerow(["iter", "e_K"] + [f"cond_{i + 1}" for i in range(N)] + gain_columns(N, m, n))
        for j in range(1, report.iterations + 1):
            w.writerow([str(j), fmt(report.e_K_history[j - 1])]
                       + [fmt(c) for c in report.condition_numbers[j - 1]]
                       + [fmt(v) for v in report.K_history[j].ravel()])


def write_gains_trace_csv(path, report: LearningReport, oracle_K=None) -> None:
    """Gain elements per iteration, starting from the initial gains.

    When ``oracle_K`` is given a final ``oracle`` row holds the model-based gains.
    """
    N, m, n = report.K.shape
    fh, w = _writer(path)
    with fh:
        w.writerow(["iter"] + gain_columns(N, m, n))
        for j, K in enumerate(report.K_history):
            w.writerow([str(j)] + [fmt(v) for v in K.ravel()])
        if oracle_K is not None:
            w.writerow(["oracle"] + [fmt(v) for v in np.asarray(oracle_K).ravel()])


def write_closed_loop_csv(path, runs: dict, n: int, m: int) -> None:
    """Closed-loop trajectories keyed by the learning iteration of their gains."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["gain_iter"] + trajectory_header(n, m))
        for it, traj in runs.items():
            for row in trajectory_rows(traj):
                w.writerow([str(it)] + row)


def write_mode_trace_csv(path, path_modes) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["k", "theta"])
        for k, th in enumerate(path_modes):
            w.writerow([str(k), str(int(th) + 1)])


def write_svg_lines(path, series: dict, title: str = "", width: int = 640, height: int = 360,
                    step: bool = False) -> None:
    """Write a bare-bones SVG line chart.

    ``series`` maps a label to ``(xs, ys)``.  Axes are fixed to the data range.
    With ``step=True`` lines are drawn as staircases (mode traces).
    """
    pad = 40
    xs_all = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys_all = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    x0, x1 = xs_all.min(), xs_all.max()
    y0, y1 = ys_all.min(), ys_all.max()
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    colours = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{pad / 2}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{pad}" y="{height - pad / 3}" font-size="10">{fmt(x0)}</text>',
        f'<text x="{width - pad}" y="{height - pad / 3}" text-anchor="end" font-size="10">{fmt(x1)}</text>',
        f'<text x="2" y="{height - pad}" font-size="10">{fmt(y0)}</text>',
        f'<text x="2" y="{pad}" font-size="10">{fmt(y1)}</text>',
    ]
    for idx, (label, (xs, ys)) in enumerate(series.items()):
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        pts = []
        for a in range(len(xs)):
            if step and a:
                pts.append(f"{sx(xs[a]):.2f},{sy(ys[a - 1]):.2f}")
            pts.append(f"{sx(xs[a]):.2f},{sy(ys[a]):.2f}")
        colour = colours[idx % len(colours)]
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * idx}" font-size="10" fill="{colour}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
