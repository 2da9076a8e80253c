"""Capacitive taxel model, ring layout, calibration, and wrench aggregation.

Each taxel is a parallel-plate capacitor under an elastic layer; compression
shrinks the plate gap and raises the capacitance, read out as integer counts.
An affine calibration maps counts to a non-negative normal force. The 11
taxels sit on the base perimeter (4 per side edge, 3 on the front edge);
their per-taxel angle ``phi`` is the direction, about the base z axis, along
which a positive compressive reading pushes the base (i.e. inward), so the
aggregated planar wrench is

    F_B  = sum_i R(phi_i) (F_i, 0)
    M_Bz = sum_i r_i x R(phi_i) (F_i, 0)
"""

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError
from .geometry import planar_rot

VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m


@dataclass(frozen=True)
class TaxelDesignParams:
    """Geometric and material constants of one taxel.

    Defaults describe the shipped sensor: a 4 x 18 mm plate under a 15 mm
    elastic layer on a 12.5 mm rigid standoff (an alternate recorded value
    for the standoff is 10 mm). ``resistivity`` of the conductive layer is
    carried as metadata only; it does not enter the capacitance model.
    """

    h_T: float = 0.005        # taxel height, m
    w_T: float = 0.004        # plate width, m
    l_T: float = 0.018        # plate length, m
    c_T: float = 0.0125       # rigid layer height, m
    e_T: float = 0.015        # elastic layer height (rest gap), m
    density: float = 30.0     # elastic layer density, kg/m^3
    resistivity: float = 2.65e-8  # conductive layer, ohm m (metadata)
    epsilon: float = 1.1 * VACUUM_PERMITTIVITY  # dielectric permittivity, F/m
    A: float = 0.004 * 0.018  # plate area, m^2

    def __post_init__(self):
        for name in ("h_T", "w_T", "l_T", "c_T", "e_T", "density", "epsilon", "A"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"TaxelDesignParams.{name} must be > 0")


@dataclass(frozen=True)
class TaxelGeometry:
    """Pose of one taxel on the base perimeter, in the base frame F_B."""

    index: int
    r: np.ndarray
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(2).copy())


@dataclass(frozen=True)
class CalibrationModel:
    """Affine counts-per-force map for one foam; inverse clamps to [0, max_force]."""

    slope: float
    offset: float = 0.0
    max_force: float = 100.0
    material: str = "unknown"

    def __post_init__(self):
        if self.slope <= 0.0:
            raise ValueError("CalibrationModel.slope must be > 0")
        if self.max_force <= 0.0:
            raise ValueError("CalibrationModel.max_force must be > 0")


@dataclass(frozen=True)
class TaxelReading:
    """One decoded sample: raw counts plus the calibrated compressive force."""

    index: int
    raw: float
    force: float


def capacitance(params: TaxelDesignParams, d: float) -> float:
    """Parallel-plate capacitance at plate gap ``d`` (0 < d <= rest gap)."""
    if not 0.0 < d <= params.e_T:
        raise ValueError(f"plate gap must be in (0, {params.e_T}], got {d}")
    return params.epsilon * params.A / d


def taxel_rotation(phi: float) -> np.ndarray:
    """2x2 rotation of the taxel frame about the base z axis."""
    return planar_rot(phi)


def force_to_raw(cal: CalibrationModel, force: float) -> float:
    """Exact (float) count value for a force; clamps force to [0, max_force]."""
    f = min(max(force, 0.0), cal.max_force)
    return cal.slope * f + cal.offset


def raw_to_force(cal: CalibrationModel, raw: float) -> float:
    """Invert the affine calibration; result clamped to [0, max_force]."""
    if raw < 0.0:
        raise ValueError(f"raw counts must be >= 0, got {raw}")
    return min(max((raw - cal.offset) / cal.slope, 0.0), cal.max_force)


def simulate_counts(cal: CalibrationModel, force: float,
                    rng: Optional[np.random.Generator] = None,
                    noise_sigma: float = 1.0) -> int:
    """Integer counts a real readout would produce for ``force``.

    Adds zero-mean Gaussian noise (in counts) before quantizing; pass
    ``noise_sigma=0`` for a noise-free channel. Counts never go negative.
    """
    raw = force_to_raw(cal, force)
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        raw += noise_sigma * rng.standard_normal()
    return max(int(round(raw)), 0)


def base_external_wrench(readings: Sequence[TaxelReading],
                         layout: Sequence[TaxelGeometry]) -> np.ndarray:
    """Aggregate taxel forces into the planar base wrench (F_x, F_y, M_z)."""
    by_index = {g.index: g for g in layout}
    w = np.zeros(3)
    for reading in readings:
        geo = by_index.get(reading.index)
        if geo is None:
            raise ValueError(f"reading for unknown taxel index {reading.index}")
        c, s = math.cos(geo.phi), math.sin(geo.phi)
        fx, fy = c * reading.force, s * reading.force
        w[0] += fx
        w[1] += fy
        w[2] += geo.r[0] * fy - geo.r[1] * fx
    return w


def default_layout(footprint_length: float = 0.98, footprint_width: float = 0.80) -> List[TaxelGeometry]:
    """The 11-taxel ring: 4 per side edge, 3 on the front edge.

    Taxels 1-4 run front-to-back along the left edge, 5-7 left-to-right
    along the front edge, 8-11 front-to-back along the right edge. Each
    edge is split into equal segments with one taxel per segment center;
    every ``phi`` points inward.
    """
    half_l = footprint_length / 2.0
    half_w = footprint_width / 2.0
    xs = [half_l - footprint_length * (2 * k + 1) / 8.0 for k in range(4)]
    ys = [half_w - footprint_width * (2 * k + 1) / 6.0 for k in range(3)]
    taxels = [TaxelGeometry(1 + k, np.array([x, half_w]), -math.pi / 2) for k, x in enumerate(xs)]
    taxels += [TaxelGeometry(5 + k, np.array([half_l, y]), math.pi) for k, y in enumerate(ys)]
    taxels += [TaxelGeometry(8 + k, np.array([x, -half_w]), math.pi / 2) for k, x in enumerate(xs)]
    return taxels


@dataclass(frozen=True)
class TaxelArray:
    """Ring layout plus calibration; the full sensing model of the base shell.

    ``calibration`` applies to every taxel unless overridden per index in
    ``per_taxel``.
    """

    geometry: tuple
    calibration: CalibrationModel
    per_taxel: Dict[int, CalibrationModel] = field(default_factory=dict)
    design: TaxelDesignParams = TaxelDesignParams()

    def __post_init__(self):
        indices = [g.index for g in self.geometry]
        if len(set(indices)) != len(indices):
            raise ValueError("duplicate taxel indices in layout")
        unknown = set(self.per_taxel) - set(indices)
        if unknown:
            raise ValueError(f"per-taxel calibration for unknown indices {sorted(unknown)}")

    @property
    def indices(self) -> List[int]:
        return [g.index for g in self.geometry]

    def cal_for(self, index: int) -> CalibrationModel:
        return self.per_taxel.get(index, self.calibration)

    def decode(self, counts: Dict[int, float]) -> List[TaxelReading]:
        """Turn raw counts into readings with calibrated forces."""
        return [TaxelReading(i, raw, raw_to_force(self.cal_for(i), raw)) for i, raw in counts.items()]


# ---------------------------------------------------------------------------
# file loading


def layout_from_dict(doc: dict, path=None) -> List[TaxelGeometry]:
    entries = doc.get("taxels")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("missing taxel list", path=path, field="taxels")
    layout = []
    for k, node in enumerate(entries):
        where = f"taxels[{k}]"
        if not isinstance(node, dict):
            raise ConfigError("taxel entry must be a mapping", path=path, field=where)
        try:
            layout.append(TaxelGeometry(int(node["index"]),
                                        np.asarray(node["r"], dtype=float).reshape(2),
                                        float(node["phi"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad taxel entry: {exc}", path=path, field=where)
    indices = [g.index for g in layout]
    if len(set(indices)) != len(indices):
        raise ConfigError("duplicate taxel indices", path=path, field="taxels")
    return layout


def load_layout(path: Union[str, Path]) -> List[TaxelGeometry]:
    from .model import load_yaml

    return layout_from_dict(load_yaml(path), path=path)


def validate_layout(layout: Sequence[TaxelGeometry], footprint_length: float,
                    footprint_width: float, path=None) -> None:
    """Reject taxels placed outside the base footprint's half-diagonal."""
    half_diag = math.hypot(footprint_length / 2.0, footprint_width / 2.0)
    for g in layout:
        if float(np.hypot(g.r[0], g.r[1])) > half_diag + 1e-9:
            raise ConfigError(f"taxel {g.index} at {g.r.tolist()} lies outside the footprint",
                              path=path, field="taxels")


def calibration_from_dict(doc: dict, path=None) -> tuple:
    """Returns (default CalibrationModel, per-taxel override dict)."""

    def parse(node, where):
        try:
            return CalibrationModel(slope=float(node["slope"]),
                                    offset=float(node.get("offset", 0.0)),
                                    max_force=float(node.get("max_force", 100.0)),
                                    material=str(node.get("material", "unknown")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad calibration: {exc}", path=path, field=where)

    default = parse(doc, "calibration")
    per_taxel = {}
    for key, node in (doc.get("per_taxel") or {}).items():
        try:
            index = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"per-taxel key must be an index, got {key!r}", path=path, field="per_taxel")
        per_taxel[index] = parse(node, f"per_taxel[{key}]")
    return default, per_taxel


def load_calibration(path: Union[str, Path]) -> tuple:
    from .model import load_yaml

    return calibration_from_dict(load_yaml(path), path=path)


def default_taxel_array() -> TaxelArray:
    """Packaged layout + calibration."""
    data = resources.files("tactilewbc.data")
    with resources.as_file(data / "layout.yaml") as p:
        layout = load_layout(p)
    with resources.as_file(data / "calibration.yaml") as p:
        cal, per_taxel = load_calibration(p)
    return TaxelArray(geometry=tuple(layout), calibration=cal, per_taxel=per_taxel)


def taxel_array_from_files(layout_path, calibration_path) -> TaxelArray:
    cal, per_taxel = load_calibration(calibration_path)
    return TaxelArray(geometry=tuple(load_layout(layout_path)), calibration=cal, per_taxel=per_taxel)
