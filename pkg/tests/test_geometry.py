import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given
from hypothesis import strategies as st

from nvplace.geometry import (CARBON_ATOM_DENSITY_CM3, DeviceGeometry, DopedLayer,
                              GeometryKind, NitrogenEnsemble, expected_nitrogen_count,
                              per_cm2_to_ppm_nm, ppm_nm_to_per_cm2, sample_nitrogen)

PILLAR = DeviceGeometry.pillar(280.0, 610.0, 1414.0)
LAYER = DopedLayer(53.0, 3.66, 1.736e12)


def test_radius_interpolates_linearly():
    assert PILLAR.radius_at(0.0) == pytest.approx(140.0)
    assert PILLAR.radius_at(1414.0) == pytest.approx(305.0)
    assert PILLAR.radius_at(707.0) == pytest.approx(222.5)


@pytest.mark.parametrize("point,inside", [
    ((0, 0, 10), True),
    ((0, 0, 0), False),            # surface itself is outside
    ((0, 0, -1), False),
    ((139, 0, 1), True),
    ((141, 0, 1), False),
    ((500, 500, 1500), True),      # substrate below the pillar
    ((0, 0, 2414), False),         # depth cutoff
])
def test_pillar_contains(point, inside):
    assert bool(PILLAR.contains(np.array(point, float))) is inside


def test_mesa_and_bulk_contains():
    mesa = DeviceGeometry.mesa(20000.0, 1414.0)
    assert mesa.contains(np.array([9999.0, -9999.0, 50.0]))
    assert not mesa.contains(np.array([10001.0, 0.0, 50.0]))
    bulk = DeviceGeometry.bulk(2000.0)
    assert bulk.kind is GeometryKind.BULK
    assert bulk.contains(np.array([1e6, -1e6, 1999.0]))


@pytest.mark.parametrize("kwargs", [
    dict(kind="pillar", top_diameter=-1, bottom_diameter=10, height=10),
    dict(kind="pillar", top_diameter=10, bottom_diameter=10, height=0),
    dict(kind="sphere"),
])
def test_invalid_geometry_rejected(kwargs):
    with pytest.raises(ValueError):
        DeviceGeometry(**kwargs)


@given(st.floats(50, 500), st.floats(1, 400), st.floats(0.1, 1400), st.floats(0, 2 * np.pi))
def test_containment_monotone_in_radius(top, extra, z, phi):
    """A wider pillar contains everything a narrower one does."""
    narrow = DeviceGeometry.pillar(top, top + 100.0, 1414.0)
    wide = DeviceGeometry.pillar(top + extra, top + 100.0 + extra, 1414.0)
    r = 0.5 * top * 0.999
    p = np.array([r * np.cos(phi), r * np.sin(phi), z])
    if narrow.contains(p):
        assert wide.contains(p)


@given(st.floats(1e-3, 1e3))
def test_ppm_conversion_round_trip(ppm_nm):
    assert per_cm2_to_ppm_nm(ppm_nm_to_per_cm2(ppm_nm)) == pytest.approx(ppm_nm, rel=1e-12)


def test_ppm_conversion_value():
    # 1 ppm over 1 nm: 1e-6 * n_C * 1e-7 cm
    assert ppm_nm_to_per_cm2(1.0) == pytest.approx(1e-13 * CARBON_ATOM_DENSITY_CM3)


def test_layer_validation():
    with pytest.raises(ValueError):
        DopedLayer(-1.0, 1.0, 1e12)
    with pytest.raises(ValueError):
        DopedLayer(10.0, 1.0, -1.0)
    assert LAYER.z_range == pytest.approx((53.0 - 1.83, 53.0 + 1.83))


def test_nitrogen_count_matches_expectation():
    counts = [len(sample_nitrogen(PILLAR, LAYER, s)) for s in range(200)]
    expected = expected_nitrogen_count(PILLAR, LAYER)
    # the tapered pillar: integrate pi r(z)^2 across the layer
    z = np.linspace(*LAYER.z_range, 2001)
    area = trapezoid(np.pi * PILLAR.radius_at(z) ** 2, z) / LAYER.thickness
    assert expected == pytest.approx(area * 1.736e12 * 1e-14, rel=1e-6)
    assert np.mean(counts) == pytest.approx(expected, rel=3 * np.sqrt(expected / 200) / expected)


def test_nitrogen_inside_device_and_layer():
    n = sample_nitrogen(PILLAR, LAYER, 3)
    assert np.all(PILLAR.contains(n.positions))
    z0, z1 = LAYER.z_range
    assert np.all((n.positions[:, 2] >= z0) & (n.positions[:, 2] <= z1))
    assert not n.consumed.any()


def test_nitrogen_deterministic():
    a = sample_nitrogen(PILLAR, LAYER, 99)
    b = sample_nitrogen(PILLAR, LAYER, 99)
    np.testing.assert_array_equal(a.positions, b.positions)


def test_unbounded_layer_needs_window():
    with pytest.raises(ValueError):
        sample_nitrogen(DeviceGeometry.bulk(), LAYER, 0)
    n = sample_nitrogen(DeviceGeometry.bulk(), LAYER, 0, window=200.0)
    assert np.all(np.abs(n.positions[:, :2]) <= 200.0)


def test_layer_outside_device_rejected():
    with pytest.raises(ValueError):
        sample_nitrogen(PILLAR, DopedLayer(5000.0, 2.0, 1e12), 0)


def test_ensemble_concat():
    a = sample_nitrogen(PILLAR, LAYER, 1)
    b = sample_nitrogen(PILLAR, LAYER, 2)
    c = NitrogenEnsemble.concat([a, b, NitrogenEnsemble.empty()])
    assert len(c) == len(a) + len(b)
