"""Result files: CSV tables, run metadata, models and a native SVG plot."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Dict, List

from .experiment import ExperimentResult

CURVE_COLUMNS = ("method", "seed", "T", "lambda", "gamma", "test_error")
MEAN_COLUMNS = ("method", "T", "n_seeds", "test_error")
DIAG_COLUMNS = (
    "method",
    "seed",
    "n_tasks",
    "var_itl",
    "var_uncond",
    "var_best_linear",
    "gap_uncond_vs_linear",
    "gap_uncond_vs_linear_se",
    "gap_itl_vs_uncond",
    "mean_norm_sq",
)

# modelling choices left open by the method description, echoed so every run
# states what it assumed
DESIGN_FLAGS = {
    "selection": "one (lambda, gamma) per method and seed, chosen at T = T_tr, reused at every checkpoint",
    "online_meta_gradient_point": "last online iterate w_{n+1}",
    "online_update": "w <- w - (s x + lam (w - theta)) / (lam i)",
    "batch_solver_absolute_loss": "dual coordinate ascent to a duality gap of 1e-9",
    "snr": "per task, noise std = std of noiseless outputs / snr",
    "rff_sigma": "standard deviation of the frequency matrix U",
    "meta_output": "average of the iterates (M_t, b_t), t = 1..T",
}


class OutputError(OSError):
    """The output directory cannot be created or written."""


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def prepare_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"cannot write to output directory {path}: {exc}") from exc
    return path


def curve_rows(result: ExperimentResult) -> List[tuple]:
    rows = [(r.method, r.seed, r.T, float(r.lam), float(r.gamma), float(r.test_error)) for r in result.rows]
    return sorted(rows, key=lambda r: (r[0], r[1], r[2]))


def emit_outputs(result: ExperimentResult, out_dir=None) -> Dict[str, Path]:
    """Write every result file into ``out_dir`` (default: the config's
    ``output_dir``) and return their paths by name."""
    cfg = result.config
    out = prepare_dir(out_dir if out_dir is not None else cfg.output_dir)
    paths = {
        "curves": out / "curves.csv",
        "curves_mean": out / "curves_mean.csv",
        "diagnostics": out / "diagnostics.csv",
        "meta": out / "run_meta.json",
        "svg": out / "curves.svg",
    }
    _write_csv(paths["curves"], CURVE_COLUMNS, curve_rows(result))

    n_seeds: Dict[tuple, int] = {}
    for r in result.rows:
        n_seeds[(r.method, r.T)] = n_seeds.get((r.method, r.T), 0) + 1
    means = result.mean_curves()
    mean_rows = [
        (m, T, n_seeds[(m, T)], float(e)) for m in sorted(means) for T, e in means[m].items()
    ]
    _write_csv(paths["curves_mean"], MEAN_COLUMNS, mean_rows)

    diag = sorted(
        (d for s in result.seeds for d in s.diagnostics), key=lambda d: (d["method"], d["seed"])
    )
    _write_csv(paths["diagnostics"], DIAG_COLUMNS, ([d[c] for c in DIAG_COLUMNS] for d in diag))

    meta = {
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "design_decisions": DESIGN_FLAGS,
        "warnings": [w for s in result.seeds for w in s.warnings],
    }
    paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["svg"].write_text(render_svg(means), encoding="utf-8")

    models = out / "models"
    models.mkdir(exist_ok=True)
    for s in result.seeds:
        for label, model in sorted(s.models.items()):
            p = models / f"{label}_seed{s.seed}.json"
            p.write_text(json.dumps(model, sort_keys=True) + "\n", encoding="utf-8")
    paths["models"] = models
    return paths


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def render_svg(curves: Dict[str, Dict[int, float]], width: int = 640, height: int = 420,
               log_x: bool = True) -> str:
    """Line plot of test error against the number of training tasks."""
    left, right, top, bottom = 70, 170, 20, 50
    pw, ph = width - left - right, height - top - bottom
    pts = [(T, e) for c in curves.values() for T, e in c.items() if math.isfinite(e)]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if not pts:
        parts.append("</svg>")
        return "\n".join(parts) + "\n"
    fx = (lambda T: math.log10(T)) if log_x else float
    xs = [fx(T) for T, _ in pts]
    ys = [e for _, e in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    pad = 0.05 * (y1 - y0) if y1 > y0 else 1.0
    y0, y1 = y0 - pad, y1 + pad

    def sx(T):
        return left + (fx(T) - x0) / (x1 - x0) * pw

    def sy(e):
        return top + (1.0 - (e - y0) / (y1 - y0)) * ph

    parts.append(
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
    )
    for i in range(5):
        e = y0 + (y1 - y0) * i / 4
        y = sy(e)
        parts.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{e:.3g}</text>')
    ticks = sorted({T for c in curves.values() for T in c})
    for T in ticks:
        x = sx(T)
        parts.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{T}</text>')
    parts.append(
        f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">'
        f'number of training tasks{" (log scale)" if log_x else ""}</text>'
    )
    parts.append(
        f'<text transform="translate(16 {top + ph / 2:.2f}) rotate(-90)" text-anchor="middle">'
        "test error</text>"
    )
    for i, method in enumerate(sorted(curves)):
        color = _COLORS[i % len(_COLORS)]
        c = [(T, e) for T, e in sorted(curves[method].items()) if math.isfinite(e)]
        line = " ".join(f"{sx(T):.2f},{sy(e):.2f}" for T, e in c)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 10 + 18 * i
        lx = left + pw + 12
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 30}" y="{ly + 4}">{method}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
