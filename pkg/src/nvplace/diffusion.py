"""Coarse-grained lattice model of vacancy diffusion, capture and absorption.

Vacancies hop between nearest-neighbour cells of a cubic lattice of spacing
``a``. After every block of ``jumps_per_step`` hops, a vacancy sharing a cell
with an unconsumed nitrogen undergoes a capture trial. A hop that lands
outside the device absorbs the vacancy.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel
from .geometry import DeviceGeometry, DopedLayer, NitrogenEnsemble, Point3, sample_nitrogen
from .vacancy_source import BeamParams, VacancyEnsemble, generate_vacancies

DIAMOND_CELL_VOLUME = 0.357 ** 3  # nm^3, conventional cubic cell


@dataclass(frozen=True)
class LatticeConfig:
    cell_size: float = 1.0
    anneal_time: float = 660.0
    diffusion_constant: float = 17.0
    jumps_per_step: int = 1
    unit_cell_volume: float = DIAMOND_CELL_VOLUME
    # replaces the cell-volume formula when set; alpha and p_cap are degenerate
    capture_override: float | None = None

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if not self.anneal_time > 0:
            raise ValueError("anneal_time must be positive")
        if self.diffusion_constant < 0:
            raise ValueError("diffusion_constant must be non-negative")
        if self.jumps_per_step < 1:
            raise ValueError("jumps_per_step must be >= 1")
        if not self.unit_cell_volume > 0:
            raise ValueError("unit_cell_volume must be positive")
        if self.capture_override is not None and not 0 < self.capture_override <= 1:
            raise ValueError("capture_override must lie in (0, 1]")

    @property
    def total_jumps(self):
        return int(round(jumps_from_diffusion_constant(
            self.diffusion_constant, self.cell_size, self.anneal_time)))

    def with_jumps(self, n_jumps):
        """Same lattice with D chosen so that ``total_jumps == n_jumps``."""
        d = diffusion_constant_from_jumps(n_jumps, self.cell_size, self.anneal_time)
        return replace(self, diffusion_constant=d)


def diffusion_constant_from_jumps(n_jumps, a, t_anneal):
    """D = a^2 N / (6 t) for a 3-D nearest-neighbour walk."""
    return a * a * n_jumps / (6.0 * t_anneal)


def jumps_from_diffusion_constant(d, a, t_anneal):
    return 6.0 * d * t_anneal / (a * a)


def capture_probability(cfg):
    """Per-co-location capture probability ``16r / ((8r)^2 / 2)``, r = a^3 / V_uc.

    Raises ``ValueError`` when the cell is too small for the formula to give a
    probability.
    """
    r = cfg.cell_size ** 3 / cfg.unit_cell_volume
    p = (16.0 * r) / ((8.0 * r) ** 2 / 2.0)
    if not 0 < p <= 1:
        raise ValueError(f"capture probability {p:.4g} outside (0, 1]; cell_size too small")
    return p


def effective_capture_probability(cfg):
    """The override when one is set, otherwise the cell-volume formula."""
    if cfg.capture_override is not None:
        return cfg.capture_override
    return capture_probability(cfg)


@dataclass
class AnnealOutcome:
    nv_positions: np.ndarray
    nv_orientations: np.ndarray
    nv_capture_steps: np.ndarray
    n_absorbed_boundary: int
    n_surviving: int
    n_initial_vacancies: int
    survivor_displacements: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    @property
    def n_nv(self):
        return len(self.nv_positions)

    @classmethod
    def empty(cls):
        return cls(np.empty((0, 3)), np.empty(0, dtype=np.int64),
                   np.empty(0, dtype=np.int64), 0, 0, 0)


def _nitrogen_index(nitrogen, a):
    """Sorted cell keys of the nitrogen atoms plus the grid used to build them."""
    if len(nitrogen) == 0:
        return (np.zeros(3, np.int64), np.ones(3, np.int64),
                np.empty(0, np.int64), np.empty(0, np.int64))
    cells = np.floor(nitrogen.positions / a).astype(np.int64)
    lo = cells.min(axis=0)
    dims = cells.max(axis=0) - lo + 1
    rel = cells - lo
    keys = (rel[:, 0] * dims[1] + rel[:, 1]) * dims[2] + rel[:, 2]
    order = np.argsort(keys, kind="stable")
    return lo, dims, keys[order], order


def run_anneal(geom, nitrogen, vacancies, cfg, rng_seed):
    """Anneal one realisation. ``nitrogen.consumed`` is updated in place."""
    if isinstance(vacancies, VacancyEnsemble):
        vac = vacancies.positions
    else:
        vac = np.asarray(vacancies, dtype=float).reshape(-1, 3)
    if len(vac) == 0:
        return AnnealOutcome.empty()
    if not np.all(geom.contains(vac)):
        raise ValueError("vacancies must start inside the device")
    a = cfg.cell_size
    p_cap = effective_capture_probability(cfg)
    cells = np.floor(vac / a).astype(np.int64)
    start = cells.copy()
    lo, dims, keys, order = _nitrogen_index(nitrogen, a)
    rng = np.random.default_rng(rng_seed)
    status, rec_n, rec_step, rec_orient = _kernel.anneal_kernel(
        rng, cells, float(a), geom.kernel_params(), cfg.total_jumps,
        cfg.jumps_per_step, p_cap, lo, dims, keys, order, nitrogen.consumed)
    alive = status == _kernel.ACTIVE
    return AnnealOutcome(
        nv_positions=nitrogen.positions[rec_n],
        nv_orientations=rec_orient,
        nv_capture_steps=rec_step,
        n_absorbed_boundary=int(np.count_nonzero(status == _kernel.ABSORBED)),
        n_surviving=int(np.count_nonzero(alive)),
        n_initial_vacancies=len(vac),
        survivor_displacements=(cells[alive] - start[alive]) * a,
    )


@dataclass(frozen=True)
class Scenario:
    """Everything needed for one simulated irradiation spot.

    ``nitrogen_window`` is the lateral half-width (nm) of nitrogen sampling
    for mesas and bulk; ``density_scale`` thins the nitrogen layer for
    desk-scale runs.
    """

    geometry: DeviceGeometry
    layers: tuple
    beam: BeamParams
    lattice: LatticeConfig
    target: Point3 = Point3(0.0, 0.0, 0.0)
    nitrogen_window: float | None = None
    density_scale: float = 1.0

    def with_dose(self, dose_pC):
        return replace(self, beam=replace(self.beam, dose_pC=dose_pC))

    def with_lattice(self, **changes):
        return replace(self, lattice=replace(self.lattice, **changes))


def run_trial(scenario, seed_seq):
    """One full trial: nitrogen, vacancies, anneal, each with its own stream."""
    s_nitrogen, s_vac, s_walk = seed_seq.spawn(3)
    layer_seeds = s_nitrogen.spawn(len(scenario.layers))
    nitrogen = NitrogenEnsemble.concat(
        sample_nitrogen(scenario.geometry, layer.scaled(scenario.density_scale), ss,
                        window=scenario.nitrogen_window)
        for layer, ss in zip(scenario.layers, layer_seeds))
    vac = generate_vacancies(scenario.beam, scenario.target, s_vac, geom=scenario.geometry)
    return run_anneal(scenario.geometry, nitrogen, vac, scenario.lattice, s_walk)


def as_seed_sequence(seed):
    """Accept an int, a sequence of ints, None or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def trial_seeds(seed, n_trials):
    return as_seed_sequence(seed).spawn(n_trials)


@dataclass
class EnsembleResult:
    outcomes: list
    mean_nv: float
    se: float

    @property
    def nv_counts(self):
        return np.array([o.n_nv for o in self.outcomes])

    def pooled_nv_positions(self):
        parts = [o.nv_positions for o in self.outcomes]
        return np.concatenate(parts) if parts else np.empty((0, 3))


def summarize(outcomes):
    counts = np.array([o.n_nv for o in outcomes], dtype=float)
    mean = float(counts.mean())
    se = float(counts.std(ddof=1) / math.sqrt(len(counts))) if len(counts) > 1 else 0.0
    return EnsembleResult(list(outcomes), mean, se)


def simulate_ensemble(scenario, n_trials, seed, workers=1):
    """Run ``n_trials`` independent trials.

    Trial ``k`` always uses the ``k``-th child of ``SeedSequence(seed)``, so
    the result does not depend on ``workers``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    seeds = trial_seeds(seed, n_trials)
    if workers <= 1:
        outcomes = [run_trial(scenario, s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda s: run_trial(scenario, s), seeds))
    return summarize(outcomes)


__all__ = [
    "AnnealOutcome", "DopedLayer", "EnsembleResult", "LatticeConfig", "Scenario",
    "capture_probability", "diffusion_constant_from_jumps", "run_anneal",
    "run_trial", "simulate_ensemble", "summarize",
]
