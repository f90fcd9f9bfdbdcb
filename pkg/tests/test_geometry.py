import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wehlerlab import geometry as geo
from wehlerlab.geometry import ProjCoord, SurfaceCoeffs, SurfacePoint

from oracles import affine_grad, affine_involution, poly_eval


def test_normalization_keeps_dominant_component_one():
    P = geo.normalize_pairs(np.array([[2 + 0j, 4j], [3, 1e-3]]))
    assert np.allclose(np.max(np.abs(P), axis=-1), 1)
    assert P[0, 1] == 1 and P[1, 0] == 1


def test_projcoord_affine_and_infinity():
    assert ProjCoord.affine(2.0).value == 2
    assert ProjCoord.infinity().v == 0
    assert ProjCoord.affine(0.5).chart == 0 and ProjCoord.affine(3.0).chart == 1
    with pytest.raises(geo.GeometryError):
        ProjCoord(0, 0)


def test_coefficients_normalized_and_reality_flag():
    c = SurfaceCoeffs(2 * np.ones((3, 3, 3)))
    assert np.max(np.abs(c.a)) == 1
    assert c.is_real
    assert not SurfaceCoeffs.random(seed=1, real=False).is_real
    with pytest.raises(geo.GeometryError):
        SurfaceCoeffs(np.zeros((3, 3, 3)))


def test_json_roundtrip(generic):
    again = SurfaceCoeffs.from_json(generic.to_json())
    assert np.array_equal(again.a, generic.a)


def test_eval_matches_triple_loop(generic, rng):
    for _ in range(20):
        x, y, z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        H = np.array([[x, 1], [y, 1], [z, 1]])
        assert abs(geo.eval_arr(generic.a, H) - poly_eval(generic.a, x, y, z)) < 1e-12 * max(1, abs(x * y * z) ** 2)


def test_gradient_matches_oracle(generic, rng):
    x, y, z = 0.3 + 0.1j, -0.4, 0.7j
    H = np.array([[x, 1], [y, 1], [z, 1]])
    assert np.allclose(geo.grad_arr(generic.a, H), affine_grad(generic.a, (x, y, z)), atol=1e-12)


def test_random_points_lie_on_surface(generic, rng):
    P = geo.random_surface_points(generic.a, 500, rng)
    assert np.max(np.abs(geo.eval_arr(generic.a, P))) < 1e-10


def test_real_points_are_real(generic, rng):
    P = geo.random_surface_points(generic.a, 100, rng, real=True)
    assert np.all(P.imag == 0)


def test_involution_matches_affine_oracle(generic, rng):
    P = geo.random_surface_points(generic.a, 30, rng)
    for k in range(3):
        Q = geo.involute_arr(generic.a, k, P)
        for p, q in zip(P, Q):
            if np.any(p[:, 1] == 0) or np.any(q[:, 1] == 0):
                continue
            t = p[:, 0] / p[:, 1]
            ref = affine_involution(generic.a, k, t)
            got = q[:, 0] / q[:, 1]
            assert np.allclose(got, ref, rtol=1e-8, atol=1e-10)


def test_involution_is_involutive(generic, rng):
    P = geo.random_surface_points(generic.a, 200, rng)
    for k in range(3):
        back = geo.involute_arr(generic.a, k, geo.involute_arr(generic.a, k, P))
        assert np.max(geo.fs_distance_arr(back, P)) < 1e-9


def test_tangent_frame_is_orthonormal_and_tangent(generic, rng):
    P = geo.random_surface_points(generic.a, 50, rng)
    E = geo.tangent_frame(generic.a, P)
    G = np.einsum("nk,nak->na", geo.grad_arr(generic.a, P), E)
    assert np.max(np.abs(G)) < 1e-10
    for a in range(2):
        for b in range(2):
            ip = geo.fs_inner(P, E[:, a], E[:, b])
            assert np.allclose(ip, float(a == b), atol=1e-10)


def test_lift_returns_two_points_on_surface(generic):
    lift = geo.lift_to_surface(generic, ProjCoord.affine(0.2), ProjCoord.affine(-1.3))
    assert len(lift.points) == 2 and not lift.double_root
    for p in lift.points:
        assert abs(geo.eval_form(generic, p)) < 1e-12


def test_from_array_rejects_off_surface(generic):
    with pytest.raises(geo.NotOnSurfaceError):
        SurfacePoint.affine(generic, 0.1, 0.2, 0.3)


def test_singular_point_error_at_node(lemniscatic):
    node = lemniscatic.nodes[5]
    with pytest.raises(geo.SingularPointError):
        geo.gradient(lemniscatic.coeffs, node)


def test_w0_check_flags_fiber_and_smoothness(generic):
    rep = geo.w0_check(generic, seed=0)
    assert rep.smooth_sampled and not rep.contains_fiber
    # x0 * (anything) contains the whole fiber {x = 0}
    a = np.zeros((3, 3, 3))
    a[1] = np.random.default_rng(0).standard_normal((3, 3))
    rep2 = geo.w0_check(SurfaceCoeffs(a), seed=0)
    assert rep2.contains_fiber


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_fs_distance_symmetric_and_zero_on_diagonal(seed):
    rng = np.random.default_rng(seed)
    P = geo.random_pairs(rng, (2, 3))
    d = geo.fs_distance_arr(P[0], P[1])
    assert abs(d - geo.fs_distance_arr(P[1], P[0])) < 1e-14
    assert geo.fs_distance_arr(P[0], P[0]) < 1e-7
