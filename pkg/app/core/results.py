"""Result tables and optional figures.

The CSV is the source of truth: fixed column order, ``.12g`` numbers with a
period decimal separator and ``\\n`` line endings, so identical runs diff clean.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .experiments import DeficitRow, SweepRecord

GATE_COLUMNS = (
    "delta_b_ghz",
    "mu_mhz",
    "lambda_mhz",
    "chi_mhz",
    "t_gate_ns",
    "fidelity_lossless",
    "fidelity_lossy",
    "max_excited_pop",
    "status",
)
HEATMAP_COLUMNS = ("gamma_us", "eta_us", "fidelity", "status")
CAT_COLUMNS = ("d_ratio", "delta_b_ghz", "chi_mhz", "t_cat_us", "m", "fidelity", "leakage", "status")
VALIDATE_COLUMNS = ("pair", "scale", "final_deficit", "peak_deficit", "status")

Row = Dict[str, object]


def format_value(value: object) -> str:
    """Locale-independent cell text; ``None`` and NaN become empty cells."""

    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, ".12g")
    return str(value)


def gate_row(record: SweepRecord) -> Row:
    t_gate = record.derived.get("t_gate_us")
    return {
        "delta_b_ghz": record.inputs.get("delta_b_ghz"),
        "mu_mhz": record.derived.get("mu_mhz"),
        "lambda_mhz": record.derived.get("lambda_mhz"),
        "chi_mhz": record.derived.get("chi_mhz"),
        "t_gate_ns": None if t_gate is None else t_gate * 1e3,
        "fidelity_lossless": record.fidelity_lossless,
        "fidelity_lossy": record.fidelity_lossy,
        "max_excited_pop": record.diagnostics.get("max_excited_pop"),
        "status": record.status,
    }


def heatmap_row(record: SweepRecord) -> Row:
    return {
        "gamma_us": record.inputs.get("gamma_us"),
        "eta_us": record.inputs.get("eta_us"),
        "fidelity": record.fidelity_lossy,
        "status": record.status,
    }


def cat_row(record: SweepRecord) -> Row:
    m = record.inputs.get("m")
    return {
        "d_ratio": record.inputs.get("d_ratio"),
        "delta_b_ghz": record.inputs.get("delta_b_ghz"),
        "chi_mhz": record.derived.get("chi_mhz"),
        "t_cat_us": record.derived.get("t_cat_us"),
        "m": None if m is None else int(m),
        "fidelity": record.fidelity,
        "leakage": record.diagnostics.get("leakage"),
        "status": record.status,
    }


def validate_row(row: DeficitRow) -> Row:
    return {
        "pair": row.pair,
        "scale": row.scale,
        "final_deficit": row.final_deficit,
        "peak_deficit": row.peak_deficit,
        "status": row.status,
    }


SCHEMAS: Dict[str, Tuple[Tuple[str, ...], Callable[..., Row]]] = {
    "gate": (GATE_COLUMNS, gate_row),
    "heatmap": (HEATMAP_COLUMNS, heatmap_row),
    "cat": (CAT_COLUMNS, cat_row),
    "validate": (VALIDATE_COLUMNS, validate_row),
}


def to_rows(experiment: str, records: Sequence[object]) -> List[Row]:
    _, convert = SCHEMAS[experiment]
    return [convert(record) for record in records]


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Row]) -> Path:
    """Write ``rows`` under ``columns``; raises ``OSError`` naming ``path`` on failure."""

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_value(row.get(column)) for column in columns])
    except OSError as exc:
        raise OSError(f"Could not write results to {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path: Path) -> List[Dict[str, str]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------------
# Figures (optional dependency)
# ----------------------------------------------------------------------
def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the install
        raise RuntimeError("Plotting needs matplotlib: pip install 'qutrit-kerr-sim[plot]'") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _floats(rows: Sequence[Row], key: str) -> List[float]:
    return [float("nan") if row.get(key) is None else float(row[key]) for row in rows]


def plot_gate(rows: Sequence[Row], path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = _floats(rows, "delta_b_ghz")
    ax.plot(x, _floats(rows, "fidelity_lossless"), "o-", label="lossless")
    ax.plot(x, _floats(rows, "fidelity_lossy"), "s--", label="with decoherence")
    ax.set_xlabel(r"$\delta_b$ (GHz)")
    ax.set_ylabel("fidelity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_heatmap(rows: Sequence[Row], path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    sc = ax.scatter(_floats(rows, "gamma_us"), _floats(rows, "eta_us"), c=_floats(rows, "fidelity"), cmap="viridis", s=120)
    fig.colorbar(sc, ax=ax, label="fidelity")
    ax.set_xlabel(r"$\gamma$ ($\mu$s)")
    ax.set_ylabel(r"$\eta$ ($\mu$s)")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_cat(rows: Sequence[Row], path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for m in sorted({row["m"] for row in rows if row.get("m") is not None}):
        subset = [row for row in rows if row.get("m") == m]
        ax.plot(_floats(subset, "d_ratio"), _floats(subset, "fidelity"), "o-", label=f"m = {m}")
    ax.set_xlabel(r"$D = \delta_b/\mu$")
    ax.set_ylabel("fidelity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_validation(rows: Sequence[Row], path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for pair in dict.fromkeys(row["pair"] for row in rows):
        subset = [row for row in rows if row["pair"] == pair]
        finals = [max(value, 1e-16) for value in _floats(subset, "final_deficit")]
        ax.loglog(_floats(subset, "scale"), finals, "o-", label=str(pair))
    ax.set_xlabel("detuning scale")
    ax.set_ylabel("final deficit")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


PLOTTERS: Dict[str, Callable[[Sequence[Row], Path], Path]] = {
    "gate": plot_gate,
    "heatmap": plot_heatmap,
    "cat": plot_cat,
    "validate": plot_validation,
}


def plot_rows(experiment: str, rows: Sequence[Row], path: Path) -> Optional[Path]:
    plotter = PLOTTERS.get(experiment)
    return None if plotter is None else plotter(rows, path)
