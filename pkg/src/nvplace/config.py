"""Run configuration: YAML with unit-suffixed keys, strict validation.

Unknown keys and wrong types are reported with the YAML line they sit on.
Every section maps onto a dataclass; ``dump_config`` writes the canonical
form, and parsing that form again gives the same config.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union, get_args, get_origin, get_type_hints

import yaml

from .diffusion import LatticeConfig, Scenario
from .geometry import INTERFACE_LAYER, DeviceGeometry, DopedLayer, Point3
from .vacancy_source import BeamParams


class ConfigError(ValueError):
    def __init__(self, message, line=None, source="<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class GeometrySection:
    kind: str = "pillar"
    top_diameter_nm: float = 480.0
    bottom_diameter_nm: float = 850.0
    height_nm: float = 1414.0
    mesa_side_nm: float = 20000.0
    slab_depth_cutoff_nm: float = 2414.0


@dataclass
class LayerSection:
    depth_nm: float = 53.0
    thickness_nm: float = 3.66
    areal_density_per_cm2: float = 1.736e12
    include_interface_layer: bool = False
    density_scale: float = 1.0
    window_half_width_nm: Optional[float] = None


@dataclass
class BeamSection:
    spot_diameter_nm: float = 20.0
    dose_pC: list = field(default_factory=lambda: [8.0])
    vacancies_per_electron_per_um: float = 8.5e-5
    alpha: float = 0.024
    depth_cutoff_nm: float = 1000.0
    target_x_nm: float = 0.0
    target_y_nm: float = 0.0


@dataclass
class LatticeSection:
    cell_size_nm: float = 1.0
    anneal_time_s: float = 660.0
    diffusion_constant_nm2_per_s: float = 17.0
    jumps_per_step: int = 1
    unit_cell_volume_nm3: float = 0.357 ** 3
    capture_probability: Optional[float] = None


@dataclass
class EstimatorSection:
    systematic_sets: int = 0
    set_size: int = 121
    lambda_max: float = 100.0


@dataclass
class LocalizeSection:
    tile_size_nm: float = 2000.0
    pixel_pitch_nm: float = 40.0
    sigma_psf_nm: float = 235.0
    sigma_sys_nm: float = 41.0
    sigma_psf_err_nm: float = 0.0
    sigma_sys_err_nm: float = 0.0
    radial_bin_nm: float = 40.0
    peak_min_distance_nm: float = 1000.0
    invert_n_min: float = 1e3
    invert_n_max: float = 1e5
    invert_points: int = 9
    invert_trials: int = 10


@dataclass
class SensitivitySection:
    n_samples: int = 100000
    threshold_nT_per_sqrtHz: float = 68.0
    readout_window_ns: float = 400.0
    t2_mean_us: float = 98.0
    t2_sd_us: float = 37.0
    contrast_mean: float = 0.18
    contrast_sd: float = 0.04
    pl_sat_mean_cps: float = 1.056e6
    pl_sat_sd_cps: float = 0.137e6
    t2_samples_csv: Optional[str] = None
    contrast_samples_csv: Optional[str] = None
    pl_sat_samples_csv: Optional[str] = None
    joint_samples_csv: Optional[str] = None
    histogram_bins: int = 60
    nv_depth_nm: float = 53.0
    dipole_kappa: float = 2.0


@dataclass
class EffmapSection:
    map_csv: Optional[str] = None
    pillar_diameter_nm: float = 280.0
    sigma0_nm: list = field(default_factory=lambda: [0.0, 10.0, 20.0, 40.0, 80.0, 160.0, 1e6])
    wavelength_weights: Optional[list] = None
    radial_nodes: int = 200
    angular_nodes: int = 64


@dataclass
class RunConfig:
    scenario: str = "custom"
    master_seed: int = 0
    trials: int = 10
    threads: int = 1
    output_dir: str = "out"
    geometry: GeometrySection = field(default_factory=GeometrySection)
    layer: LayerSection = field(default_factory=LayerSection)
    beam: BeamSection = field(default_factory=BeamSection)
    lattice: LatticeSection = field(default_factory=LatticeSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    localize: LocalizeSection = field(default_factory=LocalizeSection)
    sensitivity: SensitivitySection = field(default_factory=SensitivitySection)
    effmap: EffmapSection = field(default_factory=EffmapSection)

    def scenario_for(self, dose_pC):
        g, ly, b, lt = self.geometry, self.layer, self.beam, self.lattice
        geom = DeviceGeometry(g.kind, top_diameter=g.top_diameter_nm,
                              bottom_diameter=g.bottom_diameter_nm, height=g.height_nm,
                              mesa_side=g.mesa_side_nm, slab_depth_cutoff=g.slab_depth_cutoff_nm)
        layers = [DopedLayer(ly.depth_nm, ly.thickness_nm, ly.areal_density_per_cm2)]
        if ly.include_interface_layer:
            layers.append(INTERFACE_LAYER)
        beam = BeamParams(b.spot_diameter_nm, float(dose_pC), b.vacancies_per_electron_per_um,
                          b.alpha, b.depth_cutoff_nm)
        lattice = LatticeConfig(lt.cell_size_nm, lt.anneal_time_s,
                                lt.diffusion_constant_nm2_per_s, lt.jumps_per_step,
                                lt.unit_cell_volume_nm3, lt.capture_probability)
        return Scenario(geom, tuple(layers), beam, lattice,
                        Point3(b.target_x_nm, b.target_y_nm, 0.0),
                        ly.window_half_width_nm, ly.density_scale)


# ---------------------------------------------------------------- parsing

def _key_lines(node, prefix=()):
    """Map key paths to line numbers (1-based) from a composed YAML node."""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            lines[path] = k.start_mark.line + 1
            lines.update(_key_lines(v, path))
    return lines


def _as_number(value):
    # YAML 1.1 reads exponents without a dot ("1e12") as strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _coerce(value, tp, path, line, source):
    origin = get_origin(tp)
    if origin is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path, line, source)
    name = ".".join(path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true/false, got {value!r}", line, source)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{name} must be an integer, got {value!r}", line, source)
        return value
    if tp is float:
        value = _as_number(value)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}", line, source)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}", line, source)
        return value
    if tp is list:
        items = value if isinstance(value, list) else [value]
        out = []
        for v in map(_as_number, items):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name} entries must be numbers, got {v!r}", line, source)
            out.append(float(v))
        return out
    raise TypeError(f"unsupported config type {tp}")


def _build(cls, data, path, lines, source):
    hints = get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    if not isinstance(data, dict):
        raise ConfigError(f"{'.'.join(path) or 'config'} must be a mapping",
                          lines.get(path), source)
    for key in data:
        if key not in known:
            kp = path + (key,)
            raise ConfigError(f"unknown key '{'.'.join(kp)}'", lines.get(kp), source)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        kp = path + (f.name,)
        tp = hints[f.name]
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, data[f.name] or {}, kp, lines, source)
        else:
            kwargs[f.name] = _coerce(data[f.name], tp, kp, lines.get(kp), source)
    return cls(**kwargs)


def parse_config(text, source="<config>"):
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None, source) from exc
    lines = _key_lines(node) if node is not None else {}
    cfg = _build(RunConfig, data or {}, (), lines, source)
    try:
        for dose in cfg.beam.dose_pC:
            cfg.scenario_for(dose)
    except ValueError as exc:
        raise ConfigError(str(exc), None, source) from exc
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from exc
    return parse_config(text, str(path))


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def dump_config(cfg):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True, default_flow_style=False)


def config_hash(cfg):
    """sha256 of the canonical dump; thread count and output path do not affect results."""
    canonical = dataclasses.replace(cfg, threads=1, output_dir="")
    return hashlib.sha256(dump_config(canonical).encode()).hexdigest()


def preset_names():
    return sorted(p.name[:-5] for p in resources.files("nvplace.presets").iterdir()
                  if p.name.endswith(".yaml"))


def load_preset(name):
    res = resources.files("nvplace.presets") / f"{name}.yaml"
    if not res.is_file():
        raise ConfigError(f"unknown preset '{name}'; available: {', '.join(preset_names())}")
    return parse_config(res.read_text(), f"preset:{name}")


def apply_overrides(cfg, **overrides: Any):
    changes = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **changes)
