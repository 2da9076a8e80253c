"""Compression-sweep fitting for candidate taxel dielectrics.

A sweep presses a sensor stack with increasing force while recording the
pad deformation (characterization) and the capacitance readout variation
in counts (calibration). Each relation gets an ordinary least-squares
line; a report carries the anchor quantities used to rank materials:
maximum deformation, total count variation, and the two fit RMSEs.

The bundled datasets under ``data/calibration_data/`` are synthetic
reconstructions of compression sweeps for the four candidate foams, with
exact endpoint anchors and residuals shaped trial-symmetrically so the
fitted line and its RMSE are analytic. One candidate (CC Foam) ships
without usable deformation data; its report simply has no deformation
block and ranks worst on deformability.
"""

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError

SWEEP_COLUMNS = ("material", "trial", "force_n", "deformation_mm", "raw_counts")


@dataclass(frozen=True)
class SweepSample:
    """One row of a compression sweep; deformation may be missing."""

    material: str
    trial: int
    force: float
    deformation: Optional[float]
    raw: float

    def __post_init__(self):
        if self.force < 0.0:
            raise ValueError(f"force must be >= 0, got {self.force}")
        if self.deformation is not None and self.deformation < 0.0:
            raise ValueError(f"deformation must be >= 0, got {self.deformation}")


class LinearFit(NamedTuple):
    """y = slope * x + offset with the root-mean-square residual."""

    slope: float
    offset: float
    rmse: float

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.offset


@dataclass(frozen=True)
class MaterialReport:
    """Anchor quantities and fitted lines for one candidate material.

    ``max_deformation``/``rmse_deformation``/``characterization`` form an
    optional block: all absent when the sweep has no deformation data.
    """

    material: str
    max_deformation: Optional[float]
    max_raw_variation: float
    rmse_deformation: Optional[float]
    rmse_raw: float
    characterization: Optional[LinearFit]
    calibration: LinearFit


def fit_linear(samples: Sequence[Tuple[float, float]]) -> LinearFit:
    """Ordinary least squares line through (x, y) samples.

    Returns (slope, offset, rmse); raises ValueError for fewer than two
    samples or a degenerate (constant) x column.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (x, y) samples")
    x, y = pts[:, 0], pts[:, 1]
    var = float(np.var(x))
    if var < 1e-15 * max(1.0, float(np.mean(x * x))):
        raise ValueError("degenerate fit: all x values are (nearly) equal")
    slope = float(np.cov(x, y, bias=True)[0, 1] / var)
    offset = float(np.mean(y) - slope * np.mean(x))
    rmse = float(np.sqrt(np.mean((y - slope * x - offset) ** 2)))
    return LinearFit(slope, offset, rmse)


def _averaged_curve(forces: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Trial-averaged sweep curve: mean value per distinct force level."""
    levels = np.unique(forces)
    means = np.array([values[forces == f].mean() for f in levels])
    return levels, means


def material_report(material: str, samples: Sequence[SweepSample]) -> MaterialReport:
    """Fit both sweep relations and extract the ranking anchors.

    Anchors are read off the trial-averaged loading curve so symmetric
    sensor noise cannot shift them: maximum deformation is the largest
    averaged deformation, raw variation is the range of averaged counts.
    RMSEs come from per-sample least-squares residuals.
    """
    rows = [s for s in samples if s.material == material]
    if len(rows) < 2:
        raise ValueError(f"not enough sweep data for {material!r}")
    forces = np.array([s.force for s in rows])
    if np.unique(forces).size < 2:
        raise ValueError(f"sweep for {material!r} never varies the force")
    raw = np.array([s.raw for s in rows])
    cal_fit = fit_linear(np.column_stack([forces, raw]))
    _, raw_curve = _averaged_curve(forces, raw)
    max_raw_variation = float(raw_curve.max() - raw_curve.min())

    with_def = [(s.force, s.deformation) for s in rows if s.deformation is not None]
    if len(with_def) >= 2 and np.unique([f for f, _ in with_def]).size >= 2:
        d_forces = np.array([f for f, _ in with_def])
        d_vals = np.array([d for _, d in with_def])
        char_fit = fit_linear(np.column_stack([d_forces, d_vals]))
        _, def_curve = _averaged_curve(d_forces, d_vals)
        max_deformation: Optional[float] = float(def_curve.max())
        rmse_deformation: Optional[float] = char_fit.rmse
    else:
        char_fit = None
        max_deformation = None
        rmse_deformation = None

    return MaterialReport(
        material=material,
        max_deformation=max_deformation,
        max_raw_variation=max_raw_variation,
        rmse_deformation=rmse_deformation,
        rmse_raw=cal_fit.rmse,
        characterization=char_fit,
        calibration=cal_fit,
    )


def select_material(reports: Sequence[MaterialReport]) -> str:
    """Most deformable candidate; calibration linearity breaks ties.

    Lexicographic: maximize max_deformation (missing ranks worst), then
    minimize rmse_raw, then first by input order.
    """
    if not reports:
        raise ValueError("no material reports to select from")
    best = reports[0]
    for rep in reports[1:]:
        a = rep.max_deformation if rep.max_deformation is not None else -math.inf
        b = best.max_deformation if best.max_deformation is not None else -math.inf
        if a > b or (a == b and rep.rmse_raw < best.rmse_raw):
            best = rep
    return best.material


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_row(row: dict, line: int, path) -> SweepSample:
    try:
        deformation = row["deformation_mm"].strip()
        return SweepSample(
            material=row["material"].strip(),
            trial=int(row["trial"]),
            force=float(row["force_n"]),
            deformation=float(deformation) if deformation else None,
            raw=float(row["raw_counts"]),
        )
    except (KeyError, AttributeError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad sweep row: {exc}", path=path, line=line)


def load_sweeps(path: Union[str, Path]) -> List[SweepSample]:
    """Read sweep samples from a CSV with the documented header."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot open sweep data: {exc}", path=path)
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != SWEEP_COLUMNS:
            raise ConfigError(
                f"expected header {','.join(SWEEP_COLUMNS)}, got {reader.fieldnames}",
                path=path, line=1,
            )
        samples = [_parse_row(row, i + 2, path) for i, row in enumerate(reader)]
    if not samples:
        raise ConfigError("sweep file has no data rows", path=path)
    return samples


def materials_in(samples: Sequence[SweepSample]) -> List[str]:
    """Distinct material names in first-seen order."""
    seen: Dict[str, None] = {}
    for s in samples:
        seen.setdefault(s.material, None)
    return list(seen)


def bundled_sweep_files() -> List[Path]:
    root = resources.files("tactilewbc.data") / "calibration_data"
    with resources.as_file(root) as p:
        return sorted(Path(p).glob("*.csv"))


def bundled_reports() -> List[MaterialReport]:
    """Reports for every bundled sweep dataset, one material per file."""
    reports = []
    for path in bundled_sweep_files():
        samples = load_sweeps(path)
        for material in materials_in(samples):
            reports.append(material_report(material, samples))
    return reports


# ---------------------------------------------------------------------------
# report emission


def _fmt(value: Optional[float], digits: int = 3) -> str:
    return "NA" if value is None else f"{value:.{digits}f}"


def report_table(reports: Sequence[MaterialReport]) -> str:
    """Aligned text table of anchors and RMSEs, one row per material."""
    header = ("material", "dx_mm", "ds_counts", "rmse_dx", "rmse_ds")
    rows = [header]
    for r in reports:
        rows.append((r.material, _fmt(r.max_deformation, 1), _fmt(r.max_raw_variation, 0),
                     _fmt(r.rmse_deformation), _fmt(r.rmse_raw)))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def report_json(reports: Sequence[MaterialReport]) -> str:
    """JSON document mirroring the text table, plus the fitted lines."""
    def fit_obj(fit: Optional[LinearFit]):
        if fit is None:
            return None
        return {"slope": fit.slope, "offset": fit.offset, "rmse": fit.rmse}

    doc = {
        "materials": [
            {
                "material": r.material,
                "max_deformation_mm": r.max_deformation,
                "max_raw_variation_counts": r.max_raw_variation,
                "rmse_deformation_mm": r.rmse_deformation,
                "rmse_raw_counts": r.rmse_raw,
                "characterization": fit_obj(r.characterization),
                "calibration": fit_obj(r.calibration),
            }
            for r in reports
        ],
        "selected": select_material(reports) if reports else None,
    }
    return json.dumps(doc, indent=2)
