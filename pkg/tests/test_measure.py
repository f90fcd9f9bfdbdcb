import math

import numpy as np
import pytest

from wehlerlab import geometry as geo
from wehlerlab import measure as ms

from oracles import volume_single_projection


@pytest.fixture(scope="module")
def surface():
    return geo.SurfaceCoeffs.random(seed=3)


@pytest.fixture(scope="module")
def vm(surface):
    return ms.volume_model(surface, n=100_000, seed=1)


def test_volume_is_reproducible(surface, vm):
    again = ms.volume_model(surface, n=100_000, seed=1)
    assert again.normalizer == vm.normalizer


def test_volume_matches_single_projection_oracle(surface, vm):
    ref, se = volume_single_projection(surface.a, 1_000_000, seed=7)
    assert abs(vm.normalizer - ref) < 4 * math.hypot(se, vm.mc_error * vm.normalizer)


def test_real_volume_matches_single_projection_oracle(surface):
    vmr = ms.volume_model(surface, n=200_000, seed=2, real=True)
    ref, se = volume_single_projection(surface.a, 1_000_000, seed=8, real=True)
    assert abs(vmr.normalizer - ref) < 4 * math.hypot(se, vmr.mc_error * vmr.normalizer)


def test_density_chart_and_elimination_relations(surface, vm, rng):
    P = geo.random_surface_points(surface.a, 50, rng)
    for H in P:
        g = np.abs(geo.grad_arr(surface.a, H))
        d0 = ms.volume_density(vm, H, eliminate=2)
        # dropping coordinate 0 instead of 2 rescales by |F_0 / F_2|^2
        d2 = ms.volume_density(vm, H, eliminate=0)
        assert d2 * (g[0] / g[2]) ** 2 == pytest.approx(d0, rel=1e-9)
        # switching the chart of factor 0 multiplies the density by |t|^4 (t in the dominant chart)
        ch = list(geo.chart_index(H))
        flipped = ch.copy()
        flipped[0] = 1 - flipped[0]
        try:
            d1 = ms.volume_density(vm, H, eliminate=2, charts=flipped)
        except ms.ChartCriticalError:
            continue
        t = geo.chart_coord(H)[0]
        assert d1 == pytest.approx(d0 * abs(t) ** 4, rel=1e-9)


def test_invariance_small(surface):
    rng = np.random.default_rng(0)
    boxes = [ms.Box.random(rng) for _ in range(5)]
    res = ms.invariance_test(surface, 2, boxes, n=50_000, seed=3)
    assert all(r["within_3sigma"] for r in res)
    assert all(r["mass_A"] > 0 for r in res)


def test_box_contains_respects_chart_pattern():
    box = ms.Box((-1, -1, -1, -1, -1, -1, 0, 0, 0), (1, 1, 1, 1, 1, 1, 0, 0, 0))
    H = geo.normalize_pairs(np.array([[0.5, 1], [0.2j, 1], [-0.3, 1]], dtype=complex))
    assert box.contains(H[None])[0]
    H2 = geo.normalize_pairs(np.array([[1, 0.5], [0.2j, 1], [-0.3, 1]], dtype=complex))
    assert not box.contains(H2[None])[0]


def test_real_locus_sample_is_stable(surface):
    counts = {ms.real_locus_sample(surface, n, seed=1).n_components for n in (3000, 6000)}
    assert len(counts) == 1


def test_real_locus_labels_cover_every_sample():
    a = np.zeros((3, 3, 3))
    a[0, 0, 0] = -1.0
    a[2, 2, 2] = 1.0
    a[2, 0, 0] = a[0, 2, 0] = a[0, 0, 2] = 0.3
    c = geo.SurfaceCoeffs(a + 1e-3 * np.random.default_rng(0).standard_normal((3, 3, 3)))
    rs = ms.real_locus_sample(c, 4000, seed=0)
    assert rs.n_components >= 1
    assert sum(rs.sizes) == len(rs.points)


def test_empty_real_locus():
    a = np.zeros((3, 3, 3))
    for i in (0, 2):
        for j in (0, 2):
            for k in (0, 2):
                a[i, j, k] = 1
    c = geo.SurfaceCoeffs(a + 0.1 * np.random.default_rng(0).standard_normal((3, 3, 3)))
    rs = ms.real_locus_sample(c, 2000, seed=1)
    assert len(rs.points) == 0 and rs.n_components == 0


def test_null_equidistribution_complex(vm):
    emp = ms.sample_from_volume(vm, 3000, seed=3)
    d = ms.equidistribution_stat(emp, vm, seed=4, n_ref=50_000)
    # family-wise 3 sigma over all test functions
    from scipy.stats import norm

    bound = norm.isf(2 * norm.sf(3.0) / (2 * len(d.names)))
    assert d.summary < bound


def test_biased_sample_is_detected(vm):
    emp = ms.sample_from_volume(vm, 3000, seed=3)
    t = geo.chart_coord(emp.points)
    keep = t[:, 0].real > 0
    biased = ms.EmpiricalMeasure.uniform(emp.points[keep])
    d = ms.equidistribution_stat(biased, vm, seed=4, n_ref=50_000)
    assert d.summary > 6


def test_empirical_measure_validation():
    with pytest.raises(ValueError):
        ms.EmpiricalMeasure(np.zeros((2, 3, 2)), np.array([1.0, -0.5]))
    m = ms.EmpiricalMeasure(np.zeros((2, 3, 2)), np.array([2.0, 2.0]))
    assert np.allclose(m.weights, 0.5)


def test_rotation_discrepancy_decays_like_inverse_n():
    rows = ms.rotation_discrepancy((math.sqrt(5) - 1) / 2, [100, 1000, 10_000, 100_000])
    assert all(r["n_times_discrepancy"] < 5 for r in rows)
    assert rows[-1]["discrepancy"] < rows[0]["discrepancy"] / 100


def test_trajectory_points_stay_real_and_on_surface(surface):
    x0 = geo.random_point(surface, seed=2, real=True)
    from wehlerlab.randomwalk import NuMeasure

    pts = ms.trajectory_points(surface, NuMeasure.uniform(), x0, 300, seed=0)
    assert np.max(np.abs(pts.imag)) < 1e-9
    assert np.max(np.abs(geo.eval_arr(surface.a, pts))) < 1e-9
