from collections import Counter

import numpy as np
import pytest

from wehlerlab import geometry as geo
from wehlerlab import kummer as km
from wehlerlab import orbits as orb
from wehlerlab.fibration import ParabolicSpec, Region, singular_fibers
from wehlerlab.group import verify_non_elementary
from wehlerlab.randomwalk import LinearModel, NuMeasure, Torus3Params

from oracles import flat_orbit_sizes


@pytest.fixture(scope="module")
def four_torsion_points(lemniscatic):
    curve = lemniscatic.curve
    prim = [P for P in curve.torsion_points(4) if P is not km.INF and abs(P[1]) > 1e-6]
    return np.stack([km.phi(curve, a, b) for a in prim for b in prim])


def test_orbit_sizes_match_flat_model(lemniscatic, four_torsion_points):
    c = lemniscatic.coeffs
    seen, sizes = [], Counter()
    for H in four_torsion_points:
        if any(geo.fs_distance_arr(H, q) < 1e-9 for q in seen):
            continue
        seen.append(H)
        o = orb.orbit_enumerate(c, H, cap=100)
        assert o.complete and not o.warnings
        sizes[len(o)] += 1
    assert sizes == Counter(flat_orbit_sizes(km.FLAT_GENERATORS, 4).values())


def test_orbit_permutations_are_involutions(lemniscatic, four_torsion_points):
    o = orb.orbit_enumerate(lemniscatic.coeffs, four_torsion_points[1])
    for s in o.perm:
        assert np.array_equal(s[s], np.arange(len(o)))


def test_orbit_words_reach_their_points(lemniscatic, four_torsion_points):
    from wehlerlab.group import walk_arr

    o = orb.orbit_enumerate(lemniscatic.coeffs, four_torsion_points[1])
    for word, H in zip(o.words, o.points):
        Q = walk_arr(lemniscatic.coeffs.a, word, o.points[0][None])[0]
        assert geo.fs_distance_arr(Q, H) < 1e-9


def test_infinite_orbit_hits_cap(generic):
    o = orb.orbit_enumerate(generic, geo.random_point(generic, seed=0).h, cap=50)
    assert not o.complete and o.perm is None


def test_stabilizer_words_fix_base(lemniscatic, four_torsion_points):
    from wehlerlab.group import walk_arr

    o = orb.orbit_enumerate(lemniscatic.coeffs, four_torsion_points[0])
    words = orb.stabilizer_words(o, 0, budget=50)
    assert words
    for w in words:
        assert geo.fs_distance_arr(walk_arr(lemniscatic.coeffs.a, w, o.points[:1])[0], o.points[0]) < 1e-8


def test_kummer_torsion_orbits_are_non_elementary(lemniscatic, four_torsion_points):
    o = orb.orbit_enumerate(lemniscatic.coeffs, four_torsion_points[0])
    fo = orb.classify_finite_orbit(lemniscatic.coeffs, o, seed=0)
    assert fo.classification.kind == "non_elementary"
    assert fo.expanding == "yes"
    assert verify_non_elementary(fo.classification)
    other = orb.classify_finite_orbit(lemniscatic.coeffs, o, seed=0, base=len(o) - 1)
    assert other.classification.kind == "non_elementary"


def test_cover_regions_avoid_singular_values(generic):
    spec = ParabolicSpec.default(1)
    regs = orb.cover_regions(generic, spec, box=(-1, 1, -1, 1), min_radius=0.1)
    sing = [w for w in singular_fibers(generic, spec).values() if w is not None]
    assert regs
    for r in regs:
        assert all(abs(w - r.center) > r.radius for w in sing)


def test_candidates_in_one_region_belong_to_oracle(lemniscatic, four_torsion_points):
    g, h = ParabolicSpec.default(1), ParabolicSpec.default(2)
    rep = orb.finite_orbit_candidates(lemniscatic.coeffs, g, h, 2, regions=[Region(1j, 0.3)], grid_n=7)
    assert rep.points and rep.rejected == 0
    for p in rep.points:
        assert np.min(geo.fs_distance_arr(p.h[None], four_torsion_points)) < 1e-9


def test_margulis_expanding_linear_model_verified():
    A = np.array([[3.0, 0.0], [0.0, 1 / 3]])
    r = lambda t: np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    model = LinearModel((A, r(1.0) @ A @ r(-1.0), r(2.1) @ A @ r(-2.1)))
    res = orb.margulis_drift(orb.LinearFixedPoint(model), NuMeasure.uniform(3), seed=0)
    assert res.exact and res.verdict == "verified"


def test_margulis_triangular_contracting_fails():
    model = LinearModel((np.array([[0.5, 1.0], [0.0, 3.0]]), np.array([[0.6, -2.0], [0.0, 2.0]])))
    res = orb.margulis_drift(orb.LinearFixedPoint(model), NuMeasure.uniform(2), seed=0)
    assert res.verdict == "failed"


def test_margulis_torus3_fails_by_design():
    p = Torus3Params()
    res = orb.margulis_drift(orb.Torus3Target(p), p.nu(), seed=0)
    assert res.verdict == "failed"
    assert np.allclose(res.max_delta, -0.2 * np.log(0.5), atol=1e-9)


def test_real_locus_distance(generic, rng):
    P = geo.random_surface_points(generic.a, 3, rng, real=True)
    for H in P:
        assert orb.real_locus_distance(generic.a, H) < 1e-9
    target = orb.RealLocusTarget(generic)
    X = target.probes(np.exp(-4.0), 5, rng)
    d = target.distance(X)
    assert np.all((d > 0.3 * np.exp(-4.0)) & (d < 3 * np.exp(-4.0)))
