"""Device geometry (pillars, mesas, bulk) and the nitrogen delta-doped layer.

Coordinates are in nm. ``z`` points down from the top surface, so the
solid occupies ``z > 0``. Pillars and mesas are etched features of height
``height`` standing on a substrate that is laterally unbounded and ends at
``slab_depth_cutoff``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# atoms/cm^3 in diamond; converts ppm*nm <-> atoms/cm^2
CARBON_ATOM_DENSITY_CM3 = 1.76e23
NM_TO_CM = 1e-7


class GeometryKind(str, enum.Enum):
    PILLAR = "pillar"
    MESA = "mesa"
    BULK = "bulk"


# integer codes shared with the numba kernel
KIND_CODES = {GeometryKind.PILLAR: 0, GeometryKind.MESA: 1, GeometryKind.BULK: 2}


class Point3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class DeviceGeometry:
    kind: GeometryKind
    top_diameter: float = 0.0
    bottom_diameter: float = 0.0
    height: float = 0.0
    mesa_side: float = 0.0
    slab_depth_cutoff: float = 2000.0

    def __post_init__(self):
        object.__setattr__(self, "kind", GeometryKind(self.kind))
        if not self.slab_depth_cutoff > 0:
            raise ValueError("slab_depth_cutoff must be positive")
        if self.kind is GeometryKind.PILLAR:
            if not (self.top_diameter > 0 and self.bottom_diameter > 0 and self.height > 0):
                raise ValueError("pillar needs positive top/bottom diameter and height")
            if self.top_diameter > self.bottom_diameter:
                raise ValueError("pillar top_diameter must not exceed bottom_diameter")
        elif self.kind is GeometryKind.MESA:
            if not (self.mesa_side > 0 and self.height > 0):
                raise ValueError("mesa needs positive mesa_side and height")
        if self.kind is not GeometryKind.BULK and self.slab_depth_cutoff < self.height:
            raise ValueError("slab_depth_cutoff must be >= height")

    @classmethod
    def pillar(cls, top_diameter, bottom_diameter, height, slab_depth_cutoff=None):
        if slab_depth_cutoff is None:
            slab_depth_cutoff = height + 1000.0
        return cls(GeometryKind.PILLAR, top_diameter=top_diameter,
                   bottom_diameter=bottom_diameter, height=height,
                   slab_depth_cutoff=slab_depth_cutoff)

    @classmethod
    def mesa(cls, side, height, slab_depth_cutoff=None):
        if slab_depth_cutoff is None:
            slab_depth_cutoff = height + 1000.0
        return cls(GeometryKind.MESA, mesa_side=side, height=height,
                   slab_depth_cutoff=slab_depth_cutoff)

    @classmethod
    def bulk(cls, slab_depth_cutoff=2000.0):
        return cls(GeometryKind.BULK, slab_depth_cutoff=slab_depth_cutoff)

    def radius_at(self, z):
        """Pillar radius at depth ``z``, linear between the top and bottom diameters."""
        z = np.asarray(z, dtype=float)
        frac = z / self.height
        return 0.5 * self.top_diameter + 0.5 * (self.bottom_diameter - self.top_diameter) * frac

    def contains(self, x, y=None, z=None):
        """True where the point lies strictly inside the solid.

        Accepts either three coordinate arrays or a single ``(..., 3)`` array.
        Points exactly on a surface count as outside.
        """
        if y is None:
            p = np.asarray(x, dtype=float)
            x, y, z = p[..., 0], p[..., 1], p[..., 2]
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        inside = (z > 0) & (z < self.slab_depth_cutoff)
        if self.kind is GeometryKind.BULK:
            return inside
        in_feature = z < self.height
        if self.kind is GeometryKind.PILLAR:
            lateral = x * x + y * y < self.radius_at(z) ** 2
        else:
            half = 0.5 * self.mesa_side
            lateral = (np.abs(x) < half) & (np.abs(y) < half)
        return inside & (~in_feature | lateral)

    def kernel_params(self):
        """Flat float parameters consumed by the diffusion kernel."""
        return np.array([
            float(KIND_CODES[self.kind]),
            0.5 * self.top_diameter,
            0.5 * self.bottom_diameter,
            self.height,
            0.5 * self.mesa_side,
            self.slab_depth_cutoff,
        ])


@dataclass(frozen=True)
class DopedLayer:
    """Uniform nitrogen slab centred at ``depth`` (nm)."""

    depth: float
    thickness: float
    areal_density_cm2: float

    def __post_init__(self):
        if not (self.depth > 0 and self.thickness > 0):
            raise ValueError("layer depth and thickness must be positive")
        if self.depth - 0.5 * self.thickness <= 0:
            raise ValueError("layer extends above the top surface")
        if self.areal_density_cm2 < 0:
            raise ValueError("areal density must be non-negative")

    @classmethod
    def from_ppm_nm(cls, depth, thickness, ppm_nm):
        return cls(depth, thickness, ppm_nm_to_per_cm2(ppm_nm))

    @property
    def ppm_nm(self):
        return per_cm2_to_ppm_nm(self.areal_density_cm2)

    @property
    def z_range(self):
        return self.depth - 0.5 * self.thickness, self.depth + 0.5 * self.thickness

    @property
    def density_per_nm2(self):
        return self.areal_density_cm2 * NM_TO_CM ** 2

    def scaled(self, factor):
        return DopedLayer(self.depth, self.thickness, self.areal_density_cm2 * factor)


def ppm_nm_to_per_cm2(ppm_nm):
    return ppm_nm * 1e-6 * CARBON_ATOM_DENSITY_CM3 * NM_TO_CM


def per_cm2_to_ppm_nm(per_cm2):
    return per_cm2 / (1e-6 * CARBON_ATOM_DENSITY_CM3 * NM_TO_CM)


# Interface nitrogen peak at the substrate/epilayer boundary, 5.2 ppm*nm.
INTERFACE_LAYER = DopedLayer.from_ppm_nm(154.0, 3.66, 5.2)


@dataclass
class NitrogenEnsemble:
    positions: np.ndarray
    consumed: np.ndarray = field(default=None)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if self.consumed is None:
            self.consumed = np.zeros(len(self.positions), dtype=bool)

    def __len__(self):
        return len(self.positions)

    @classmethod
    def empty(cls):
        return cls(np.empty((0, 3)))

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(np.concatenate([p.positions for p in parts]),
                   np.concatenate([p.consumed for p in parts]))


def _lateral_box(geom, layer, window):
    """Half-widths of the sampling box and whether it is a disk."""
    z_lo, z_hi = layer.z_range
    if geom.kind is GeometryKind.PILLAR and z_hi < geom.height:
        return float(geom.radius_at(z_hi)), True
    if geom.kind is GeometryKind.MESA and z_hi < geom.height:
        half = 0.5 * geom.mesa_side
        return (half if window is None else min(half, window)), False
    if window is None:
        raise ValueError("laterally unbounded region needs a sampling window")
    return float(window), False


def expected_nitrogen_count(geom, layer, window=None):
    """Mean nitrogen count in the layer: areal density times cross-section."""
    half, disk = _lateral_box(geom, layer, window)
    if disk:
        z_lo, z_hi = layer.z_range
        # mean of pi r(z)^2 over the slab
        zs = np.linspace(z_lo, z_hi, 65)
        area = np.pi * np.mean(geom.radius_at(zs) ** 2)
    else:
        area = (2 * half) ** 2
    return layer.density_per_nm2 * area


def sample_nitrogen(geom, layer, rng_seed, window=None):
    """Place nitrogen uniformly in the layer slab intersected with the solid.

    The count is Poisson. Points are drawn as a Poisson process on a
    bounding box and thinned by containment, so the kept count is Poisson
    with mean ``areal density x cross-section``. ``window`` is the lateral
    half-width (nm) of the sampled square around the axis; it is required
    for bulk and ignored for pillars.
    """
    z_lo, z_hi = layer.z_range
    limit = geom.slab_depth_cutoff if geom.kind is GeometryKind.BULK else geom.height
    if z_hi >= limit:
        raise ValueError(f"layer bottom at {z_hi} nm lies outside the device (limit {limit} nm)")
    rng = np.random.default_rng(rng_seed)
    half, disk = _lateral_box(geom, layer, window)
    box_area = (2 * half) ** 2
    n_box = rng.poisson(layer.density_per_nm2 * box_area)
    if n_box == 0:
        return NitrogenEnsemble.empty()
    pts = np.empty((n_box, 3))
    pts[:, 0] = rng.uniform(-half, half, n_box)
    pts[:, 1] = rng.uniform(-half, half, n_box)
    pts[:, 2] = rng.uniform(z_lo, z_hi, n_box)
    keep = geom.contains(pts)
    return NitrogenEnsemble(pts[keep])
