"""Independent reference computations.

Nothing here calls the package's numerical kernels: each oracle expands the
defining formulas directly, so agreement with the package is evidence and
not a tautology.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize_scalar


# ---------------------------------------------------------------------------
# surfaces in affine coordinates
# ---------------------------------------------------------------------------


def poly_eval(A, x, y, z) -> complex:
    """F(x, y, z) = sum A[i, j, k] x^i y^j z^k by a plain triple loop."""
    s = 0j
    for i, j, k in itertools.product(range(3), repeat=3):
        s += A[i, j, k] * x**i * y**j * z**k
    return s


def affine_involution(A, axis: int, pt) -> np.ndarray:
    """Other root of F in the coordinate ``axis`` with the other two fixed (affine points)."""
    pt = np.array(pt, dtype=complex)
    q = np.zeros(3, dtype=complex)
    for deg in range(3):
        for i, j, k in itertools.product(range(3), repeat=3):
            if (i, j, k)[axis] != deg:
                continue
            term = A[i, j, k]
            for ax, e in enumerate((i, j, k)):
                if ax != axis:
                    term *= pt[ax] ** e
            q[deg] += term
    out = pt.copy()
    out[axis] = -q[1] / q[2] - pt[axis]
    return out


def solve_axis(A, axis: int, pt, guess) -> complex:
    """Root of F in coordinate ``axis`` closest to ``guess``."""
    pt = np.array(pt, dtype=complex)
    q = np.zeros(3, dtype=complex)
    for deg in range(3):
        for i, j, k in itertools.product(range(3), repeat=3):
            if (i, j, k)[axis] != deg:
                continue
            term = A[i, j, k]
            for ax, e in enumerate((i, j, k)):
                if ax != axis:
                    term *= pt[ax] ** e
            q[deg] += term
    roots = np.roots(q[::-1])
    return complex(roots[np.argmin(np.abs(roots - guess))])


def affine_grad(A, pt) -> np.ndarray:
    x, y, z = pt
    g = np.zeros(3, dtype=complex)
    for i, j, k in itertools.product(range(3), repeat=3):
        a = A[i, j, k]
        if i:
            g[0] += a * i * x ** (i - 1) * y**j * z**k
        if j:
            g[1] += a * j * x**i * y ** (j - 1) * z**k
        if k:
            g[2] += a * k * x**i * y**j * z ** (k - 1)
    return g


def fd_tangent(A, axis: int, pt, v, h: float = 1e-5) -> np.ndarray:
    """Central finite difference of sigma_axis along the affine tangent vector v.

    The curve moves two coordinates linearly and re-solves the one with the
    largest partial derivative, so it stays on the surface.
    """
    elim = int(np.argmax(np.abs(affine_grad(A, pt))))

    def curve(s):
        q = np.array(pt, dtype=complex) + s * np.asarray(v)
        q[elim] = solve_axis(A, elim, q, pt[elim] + s * v[elim])
        return affine_involution(A, axis, q)

    return (curve(h) - curve(-h)) / (2 * h)


# ---------------------------------------------------------------------------
# random matrix products
# ---------------------------------------------------------------------------


def iid_lyapunov(mats, probs, n: int, runs: int, seed) -> tuple:
    """Top exponent of i.i.d. products by per-step renormalization, runs in parallel."""
    rng = np.random.default_rng(seed)
    M = np.stack([np.asarray(m, dtype=float) for m in mats])
    v = rng.standard_normal((runs, M.shape[1]))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    acc = np.zeros(runs)
    for _ in range(n):
        k = rng.choice(len(M), size=runs, p=probs)
        v = np.einsum("rij,rj->ri", M[k], v)
        nv = np.linalg.norm(v, axis=1)
        acc += np.log(nv)
        v /= nv[:, None]
    est = acc / n
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(runs))


def one_step_drift_extremes(mats, probs, n_angles: int = 7200) -> tuple:
    """min and max over unit directions of E log|A v| for 2x2 real matrices.

    Dense angle grid, then a bounded scalar search around the best node.
    """
    mats = [np.asarray(m, dtype=float) for m in mats]

    def f(th):
        th = np.atleast_1d(th)
        V = np.stack([np.cos(th), np.sin(th)], axis=1)
        return sum(p * np.log(np.linalg.norm(V @ m.T, axis=1)) for m, p in zip(mats, probs))

    th = np.linspace(0, np.pi, n_angles, endpoint=False)
    vals = f(th)
    step = np.pi / n_angles
    out = []
    for sign, k in ((1, np.argmin(vals)), (-1, np.argmax(vals))):
        r = minimize_scalar(lambda t: sign * f(t)[0], bounds=(th[k] - step, th[k] + step), method="bounded",
                            options={"xatol": 1e-12})
        out.append(min(sign * vals[k], r.fun) * sign)
    return float(out[0]), float(out[1])


# ---------------------------------------------------------------------------
# elliptic curves (affine Weierstrass model y^2 = 4x^3 - g2 x - g3)
# ---------------------------------------------------------------------------


def weierstrass_add(g2, P, Q):
    """Chord-tangent addition with None as the identity."""
    if P is None:
        return Q
    if Q is None:
        return P
    (x1, y1), (x2, y2) = P, Q
    if abs(x1 - x2) < 1e-12 * max(1, abs(x1)):
        if abs(y1 + y2) < 1e-9 * max(1, abs(y1)):
            return None
        lam = (12 * x1 * x1 - g2) / (2 * y1)
    else:
        lam = (y2 - y1) / (x2 - x1)
    x3 = lam * lam / 4 - x1 - x2
    return (x3, -(y1 + lam * (x3 - x1)))


def j_from_invariants(g2, g3) -> complex:
    return 1728 * g2**3 / (g2**3 - 27 * g3**2)


# ---------------------------------------------------------------------------
# exact integer arithmetic
# ---------------------------------------------------------------------------


def sym2_exact(M):
    """Action of M = [[a, b], [c, d]] on binary quadratic forms in the basis (x^2, xy, y^2), as Python ints."""
    (a, b), (c, d) = [[int(v) for v in row] for row in M]
    return [[a * a, 2 * a * b, b * b], [a * c, a * d + b * c, b * d], [c * c, 2 * c * d, d * d]]


def matmul_exact(X, Y):
    return [[sum(X[i][k] * Y[k][j] for k in range(len(Y))) for j in range(len(Y[0]))] for i in range(len(X))]


def random_unimodular(rng, length: int = 6) -> np.ndarray:
    """Product of random elementary and swap matrices (det = +-1)."""
    gens = [np.array(m, dtype=np.int64) for m in ([[1, 1], [0, 1]], [[1, 0], [1, 1]], [[1, -1], [0, 1]],
                                                 [[1, 0], [-1, 1]], [[0, 1], [1, 0]], [[-1, 0], [0, 1]])]
    M = np.eye(2, dtype=np.int64)
    for _ in range(length):
        M = M @ gens[rng.integers(len(gens))]
    return M


# ---------------------------------------------------------------------------
# genus-one fibers as double covers
# ---------------------------------------------------------------------------


def fiber_quartic(A, base_axis: int, w) -> np.ndarray:
    """Discriminant in the higher-index fiber coordinate, as a quartic in the lower one (descending powers)."""
    y_ax, z_ax = [a for a in range(3) if a != base_axis]
    # q_d(y) coefficients: F = sum_d q_d(y) z^d
    q = [np.zeros(3, dtype=complex) for _ in range(3)]
    for idx in itertools.product(range(3), repeat=3):
        e = dict(zip(range(3), idx))
        q[e[z_ax]][e[y_ax]] += A[idx] * w ** e[base_axis]
    # ascending-coefficient products
    disc = np.convolve(q[1], q[1]) - 4 * np.convolve(q[2], q[0])
    return disc[::-1]


def quartic_j(coeffs) -> complex:
    """j-invariant of y^2 = a x^4 + b x^3 + c x^2 + d x + e from its I, J invariants."""
    a, b, c, d, e = coeffs
    I = 12 * a * e - 3 * b * d + c * c
    J = 72 * a * c * e + 9 * b * c * d - 27 * a * d * d - 27 * e * b * b - 2 * c**3
    return 6912 * I**3 / (4 * I**3 - J**2)


# ---------------------------------------------------------------------------
# finite orbits of the flat model on torsion points
# ---------------------------------------------------------------------------


def flat_orbit_sizes(mats, N: int) -> dict:
    """Orbit sizes of <mats> on pairs (m1, m2) of primitive N-torsion points, up to (m1, m2) ~ (-m1, -m2).

    A pair is a 2x2 matrix over Z/N whose columns are the coordinates of m1, m2
    in a basis of E[N]; a flat generator B acts by (m1, m2) -> (m1, m2) B^T.
    Returns {pair class: orbit size}.
    """
    def key(P):
        a = tuple(int(v) % N for v in P.ravel())
        b = tuple(int(-v) % N for v in P.ravel())
        return min(a, b)

    classes = {}
    vecs = [np.array([a, b]) for a in range(N) for b in range(N)]
    prim = [v for v in vecs if np.gcd.reduce([int(v[0]), int(v[1]), N]) == 1]
    for v1 in prim:
        for v2 in prim:
            P = np.stack([v1, v2], axis=1)
            k = key(P)
            if k in classes:
                continue
            orbit = {k}
            frontier = [P]
            while frontier:
                Q = frontier.pop()
                for B in mats:
                    R = (Q @ np.asarray(B).T) % N
                    kr = key(R)
                    if kr not in orbit:
                        orbit.add(kr)
                        frontier.append(R)
            for kk in orbit:
                classes[kk] = len(orbit)
    return classes


# ---------------------------------------------------------------------------
# volume by a single projection
# ---------------------------------------------------------------------------


def _z_quadratic(A, x, y):
    q = np.zeros((3,) + np.shape(x), dtype=complex)
    for i, j, k in itertools.product(range(3), repeat=3):
        q[k] += A[i, j, k] * x**i * y**j
    return q


def volume_single_projection(A, n: int, seed, real: bool = False) -> tuple:
    """Mass of |dx dy / F_z|^2 (or of |dx dy / F_z| on real points) from the (x, y) projection alone.

    Base points are drawn from the Fubini-Study measure of each factor
    (Cauchy on the real line); both sheets contribute 1 / |F_z|^k with
    F_z = +-sqrt(disc) at the two roots.
    """
    rng = np.random.default_rng(seed)
    if real:
        x, y = (np.tan(np.pi * (rng.random(n) - 0.5)) for _ in range(2))
        dens = 1 / (np.pi * (1 + x**2)) / (np.pi * (1 + y**2))
    else:
        def sphere(m):
            v = rng.standard_normal((m, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return (v[:, 0] + 1j * v[:, 1]) / (1 - v[:, 2])

        x, y = sphere(n), sphere(n)
        dens = 1 / (np.pi * (1 + abs(x) ** 2) ** 2) / (np.pi * (1 + abs(y) ** 2) ** 2)
    q = _z_quadratic(A, x, y)
    disc = q[1] ** 2 - 4 * q[2] * q[0]
    if real:
        vals = np.where(disc.real > 0, 2 / np.sqrt(np.abs(disc.real)), 0.0) / dens
    else:
        vals = 2 / np.abs(disc) / dens
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# singular points by damped Newton on (F, grad F)
# ---------------------------------------------------------------------------


def singular_points(A, starts_per_chart: int, seed, tol: float = 1e-10) -> list:
    """Distinct singular points of F as (3, 2) homogeneous arrays.

    Every one of the eight chart combinations is searched by flipping the
    coefficient tensor, so points at infinity are found as affine zeros.
    """
    from scipy.optimize import least_squares

    rng = np.random.default_rng(seed)
    found = []
    for flips in itertools.product((0, 1), repeat=3):
        B = np.asarray(A, dtype=complex)
        for ax in range(3):
            if flips[ax]:
                B = np.flip(B, axis=ax)

        def resid(x):
            p = x[:3] + 1j * x[3:]
            r = np.concatenate([[poly_eval(B, *p)], affine_grad(B, p)])
            return np.concatenate([r.real, r.imag])

        for _ in range(starts_per_chart):
            sol = least_squares(resid, rng.uniform(-1.5, 1.5, 6), xtol=1e-15, ftol=1e-15, gtol=1e-15)
            if np.max(np.abs(sol.fun)) > tol:
                continue
            t = sol.x[:3] + 1j * sol.x[3:]
            H = np.array([[1.0, ti] if f else [ti, 1.0] for ti, f in zip(t, flips)], dtype=complex)
            found.append(H)
    distinct = []
    for H in found:
        # projective comparison per factor: u1 v2 - v1 u2
        if all(np.max(np.abs(H[:, 0] * G[:, 1] - H[:, 1] * G[:, 0])) > 1e-6 for G in distinct):
            distinct.append(H)
    return distinct
