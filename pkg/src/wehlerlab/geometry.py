"""Wehler (2,2,2) surfaces in P1 x P1 x P1.

A surface is the zero set of

    F = sum A[i, j, k] x^i y^j z^k

homogenized separately in each factor. A point of P1 is a pair [u:v] stored
with its dominant component equal to exactly 1; the other component is the
*chart coordinate* t, so t = u when v == 1 ("chart 0") and t = v when u == 1
("chart 1"). Tangent vectors are stored as chart-coordinate derivatives
(dx, dy, dz) in these canonical charts.

The module has two layers: small immutable value types for single points, and
array kernels that act on stacks of points of shape (..., 3, 2). The
randomized and batched code paths of the other modules only use the kernels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .config import tolerances


class GeometryError(ValueError):
    pass


class W0Violation(GeometryError):
    """A whole fiber of a coordinate projection lies on the surface."""


class SingularPointError(GeometryError):
    pass


class NotOnSurfaceError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# projective coordinates (array kernels)
# ---------------------------------------------------------------------------


def normalize_pairs(P) -> np.ndarray:
    """Scale homogeneous pairs so the dominant component is exactly 1."""
    P = np.asarray(P, dtype=complex)
    u = P[..., 0]
    v = P[..., 1]
    udom = np.abs(u) > np.abs(v)
    out = np.empty(P.shape, dtype=complex)
    with np.errstate(all="ignore"):
        out[..., 0] = np.where(udom, 1.0, u / v)
        out[..., 1] = np.where(udom, v / u, 1.0)
    return out


def chart_index(P) -> np.ndarray:
    """0 where the pair is (t, 1), 1 where it is (1, t)."""
    return (np.asarray(P)[..., 1] != 1.0).astype(np.int8)


def chart_coord(P) -> np.ndarray:
    P = np.asarray(P)
    return np.where(P[..., 1] != 1.0, P[..., 1], P[..., 0])


def mono(P) -> np.ndarray:
    """Degree-2 monomials (v^2, uv, u^2) of each pair; index = exponent of u."""
    P = np.asarray(P)
    u = P[..., 0]
    v = P[..., 1]
    return np.stack([v * v, u * v, u * u], axis=-1)


def dmono(P) -> np.ndarray:
    """Derivative of ``mono`` with respect to the chart coordinate."""
    P = np.asarray(P)
    u = P[..., 0]
    v = P[..., 1]
    zero = np.zeros_like(u)
    c0 = np.stack([zero, v, 2 * u], axis=-1)
    c1 = np.stack([2 * v, u, zero], axis=-1)
    return np.where((v != 1.0)[..., None], c1, c0)


def chordal(P, Q) -> np.ndarray:
    """Chordal distance on P1 (the Fubini-Study distance used throughout)."""
    P = np.asarray(P)
    Q = np.asarray(Q)
    num = np.abs(P[..., 0] * Q[..., 1] - P[..., 1] * Q[..., 0])
    return num / (np.linalg.norm(P, axis=-1) * np.linalg.norm(Q, axis=-1))


def fs_weights(P) -> np.ndarray:
    """Fubini-Study density 1/(1+|t|^2)^2 of each factor, shape (..., 3)."""
    t = chart_coord(P)
    return 1.0 / (1.0 + np.abs(t) ** 2) ** 2


def fs_norm_arr(P, D) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(D) ** 2 * fs_weights(P), axis=-1))


def fs_distance_arr(P, Q) -> np.ndarray:
    return np.sqrt(np.sum(chordal(P, Q) ** 2, axis=-1))


def random_pairs(rng: np.random.Generator, shape) -> np.ndarray:
    """Fubini-Study uniform points of P1 (complex Gaussian pairs)."""
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    g = rng.standard_normal(shape + (2, 2))
    return normalize_pairs(g[..., 0] + 1j * g[..., 1])


def random_real_pairs(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform points of RP1 (angle uniform on the circle)."""
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    th = rng.uniform(0.0, np.pi, size=shape)
    return normalize_pairs(np.stack([np.sin(th), np.cos(th)], axis=-1).astype(complex))


# ---------------------------------------------------------------------------
# the coefficient tensor
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SurfaceCoeffs:
    """Coefficients A[i, j, k] of x^i y^j z^k, scaled so the largest entry is 1."""

    a: np.ndarray
    is_real: bool = field(default=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=complex).reshape(3, 3, 3)
        flat = a.ravel()
        top = int(np.argmax(np.abs(flat)))
        big = flat[top]
        if abs(big) == 0:
            raise GeometryError("the zero tensor does not define a surface")
        a = a / big
        a.flat[top] = 1.0  # complex division may leave 1 - ulp
        a[np.abs(a) < 1e-300] = 0.0
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "is_real", bool(np.all(a.imag == 0)))

    @classmethod
    def from_monomials(cls, terms: dict) -> "SurfaceCoeffs":
        a = np.zeros((3, 3, 3), dtype=complex)
        for (i, j, k), val in terms.items():
            a[i, j, k] += val
        return cls(a)

    @classmethod
    def random(cls, seed=None, real: bool = True) -> "SurfaceCoeffs":
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((3, 3, 3))
        if not real:
            a = a + 1j * rng.standard_normal((3, 3, 3))
        return cls(a)

    def to_json(self) -> dict:
        return {
            "coefficients": [[float(z.real), float(z.imag)] for z in self.a.ravel()],
            "is_real": self.is_real,
        }

    @classmethod
    def from_json(cls, obj) -> "SurfaceCoeffs":
        if isinstance(obj, str):
            obj = json.loads(obj)
        vals = obj["coefficients"]
        if len(vals) != 27:
            raise GeometryError("expected 27 [re, im] pairs")
        return cls(np.array([complex(re, im) for re, im in vals]).reshape(3, 3, 3))

    def permuted(self, order: Sequence[int]) -> "SurfaceCoeffs":
        """The surface with coordinates reordered (new axis m = old axis order[m])."""
        return SurfaceCoeffs(np.transpose(self.a, order))

    def __repr__(self):
        return f"SurfaceCoeffs(is_real={self.is_real}, nnz={int(np.count_nonzero(self.a))})"


def _coef_array(c) -> np.ndarray:
    return c.a if isinstance(c, SurfaceCoeffs) else np.asarray(c, dtype=complex)


# ---------------------------------------------------------------------------
# evaluation kernels
# ---------------------------------------------------------------------------


def eval_arr(A, P) -> np.ndarray:
    A = _coef_array(A)
    P = np.asarray(P)
    m = mono(P)
    return np.einsum("ijk,...i,...j,...k->...", A, m[..., 0, :], m[..., 1, :], m[..., 2, :])


def grad_arr(A, P) -> np.ndarray:
    """Chart partial derivatives (F_x, F_y, F_z), shape (..., 3)."""
    A = _coef_array(A)
    P = np.asarray(P)
    m = mono(P)
    dm = dmono(P)
    fx = np.einsum("ijk,...i,...j,...k->...", A, dm[..., 0, :], m[..., 1, :], m[..., 2, :])
    fy = np.einsum("ijk,...i,...j,...k->...", A, m[..., 0, :], dm[..., 1, :], m[..., 2, :])
    fz = np.einsum("ijk,...i,...j,...k->...", A, m[..., 0, :], m[..., 1, :], dm[..., 2, :])
    return np.stack([fx, fy, fz], axis=-1)


def moved_axis_tensor(A, k: int) -> np.ndarray:
    """A with factor k moved last: axes (other, other, moved)."""
    return np.moveaxis(_coef_array(A), k, -1)


def fiber_coeffs_arr(A, k: int, P) -> np.ndarray:
    """Coefficients (c0, c1, c2) of the quadratic in factor k at the other two coordinates.

    The quadratic in [s:t] is c0 t^2 + c1 s t + c2 s^2, i.e. index = exponent of s.
    """
    Ak = moved_axis_tensor(A, k)
    others = [j for j in range(3) if j != k]
    m = mono(np.asarray(P))
    return np.einsum("abk,...a,...b->...k", Ak, m[..., others[0], :], m[..., others[1], :])


def quad_roots(c) -> tuple[np.ndarray, np.ndarray]:
    """Both roots [s:t] of c2 s^2 + c1 s t + c0 t^2 (cancellation-free)."""
    c = np.asarray(c)
    qa, qb, qc = c[..., 2], c[..., 1], c[..., 0]
    s = np.sqrt(qb * qb - 4 * qa * qc)
    plus = np.abs(qb + s) >= np.abs(qb - s)
    q = -0.5 * np.where(plus, qb + s, qb - s)
    r1 = np.stack([q, qa], axis=-1)
    r2 = np.stack([qc, q], axis=-1)
    # q == 0 only when qb == 0 and qa*qc == 0: a double root at 0 or infinity
    degenerate = np.abs(q) == 0
    if np.any(degenerate):
        zero_root = np.stack([np.zeros_like(qa), np.ones_like(qa)], axis=-1)
        inf_root = np.stack([np.ones_like(qa), np.zeros_like(qa)], axis=-1)
        fallback = np.where((np.abs(qa) > 0)[..., None], zero_root, inf_root)
        r1 = np.where(degenerate[..., None], fallback, r1)
        r2 = np.where(degenerate[..., None], fallback, r2)
    return normalize_pairs(r1), normalize_pairs(r2)


def quad_eval(c, r) -> np.ndarray:
    return np.sum(np.asarray(c) * mono(r), axis=-1)


def other_root(c, r) -> np.ndarray:
    """The second root of the fiber quadratic given one root (Vieta swap).

    Divides the quadratic by the known linear factor, using whichever of the
    two homogeneous components of the known root is larger as the divisor.
    """
    c = np.asarray(c)
    r = np.asarray(r)
    qa, qb, qc = c[..., 2], c[..., 1], c[..., 0]
    u = r[..., 0]
    v = r[..., 1]
    vdom = np.abs(v) >= np.abs(u)
    with np.errstate(all="ignore"):
        alpha_v = qa / v
        beta_v = (qb + u * alpha_v) / v
        beta_u = -qc / u
        alpha_u = (v * beta_u - qb) / u
    alpha = np.where(vdom, alpha_v, alpha_u)
    beta = np.where(vdom, beta_v, beta_u)
    new = normalize_pairs(np.stack([-beta, alpha], axis=-1))
    return _polish_root(c, new)


def _polish_root(c, r) -> np.ndarray:
    """One guarded Newton step on the quadratic in the root's own chart."""
    qa, qb, qc = c[..., 2], c[..., 1], c[..., 0]
    which = r[..., 1] != 1.0
    t = np.where(which, r[..., 1], r[..., 0])
    with np.errstate(all="ignore"):
        q0 = np.where(which, qa + qb * t + qc * t * t, qa * t * t + qb * t + qc)
        dq = np.where(which, qb + 2 * qc * t, 2 * qa * t + qb)
        tn = t - q0 / dq
        q1 = np.where(which, qa + qb * tn + qc * tn * tn, qa * tn * tn + qb * tn + qc)
    ok = np.isfinite(tn) & (np.abs(q1) < np.abs(q0))
    t = np.where(ok, tn, t)
    out = np.where(which[..., None], np.stack([np.ones_like(t), t], -1), np.stack([t, np.ones_like(t)], -1))
    return normalize_pairs(out)


def involute_arr(A, k: int, P) -> np.ndarray:
    """Apply the Vieta involution moving factor k to a stack of points."""
    P = np.asarray(P)
    c = fiber_coeffs_arr(A, k, P)
    out = P.copy()
    out[..., k, :] = other_root(c, P[..., k, :])
    scale = np.max(np.abs(c), axis=-1)
    bad = ~(scale > 1e-14)
    if np.any(bad):
        out[bad] = np.nan
    return out


def tangent_involute_arr(A, k: int, P, Pn, D) -> np.ndarray:
    """Push chart tangent components D at P to Pn = sigma_k(P)."""
    g = grad_arr(A, Pn)
    D = np.asarray(D)
    out = D.copy()
    others = [j for j in range(3) if j != k]
    with np.errstate(all="ignore"):
        out[..., k] = -(g[..., others[0]] * D[..., others[0]] + g[..., others[1]] * D[..., others[1]]) / g[..., k]
    return out


def tangent_project(A, P, R) -> np.ndarray:
    """Project raw chart vectors R onto the kernel of the gradient at P."""
    g = grad_arr(A, P)
    gg = np.sum(np.abs(g) ** 2, axis=-1)
    coef = np.sum(g * R, axis=-1) / gg
    return R - coef[..., None] * np.conj(g)


def tangent_frame(A, P) -> np.ndarray:
    """Fubini-Study orthonormal basis of T_pX, shape (..., 2, 3)."""
    A = _coef_array(A)
    P = np.asarray(P)
    g = grad_arr(A, P)
    w = fs_weights(P)
    # two kernel vectors of the bilinear form g . d = 0
    idx = np.argmax(np.abs(g), axis=-1)
    basis = []
    for j in range(3):
        e = np.zeros(P.shape[:-2] + (3,), dtype=complex)
        e[..., j] = 1.0
        basis.append(e)
    vecs = []
    for j in range(3):
        vecs.append(tangent_project(A, P, basis[j]))
    V = np.stack(vecs, axis=-2)  # (..., 3, 3) rows are projected unit vectors
    # drop the row corresponding to the dominant gradient component
    keep = np.array([[j for j in range(3) if j != m] for m in range(3)])
    sel = keep[idx]
    v1 = np.take_along_axis(V, sel[..., 0:1, None], axis=-2)[..., 0, :]
    v2 = np.take_along_axis(V, sel[..., 1:2, None], axis=-2)[..., 0, :]

    def inner(a, b):
        return np.sum(w * np.conj(a) * b, axis=-1)

    e1 = v1 / np.sqrt(inner(v1, v1).real)[..., None]
    v2 = v2 - inner(e1, v2)[..., None] * e1
    e2 = v2 / np.sqrt(inner(v2, v2).real)[..., None]
    return np.stack([e1, e2], axis=-2)


def fs_inner(P, a, b) -> np.ndarray:
    return np.sum(fs_weights(P) * np.conj(a) * b, axis=-1)


def random_surface_points(A, n: int, rng: np.random.Generator, real: bool = False) -> np.ndarray:
    """n points of X: random (x, y), then one of the two z roots at random.

    For ``real=True`` only real points are returned (rejection on real roots).
    """
    A = _coef_array(A)
    out = []
    need = n
    while need > 0:
        m = max(2 * need, 16)
        if real:
            XY = random_real_pairs(rng, (m, 2))
        else:
            XY = random_pairs(rng, (m, 2))
        P = np.concatenate([XY, np.zeros((m, 1, 2), dtype=complex)], axis=1)
        c = fiber_coeffs_arr(A, 2, P)
        r1, r2 = quad_roots(c)
        pick = rng.integers(0, 2, size=m).astype(bool)
        P[:, 2, :] = np.where(pick[:, None], r1, r2)
        ok = np.all(np.isfinite(P.reshape(m, -1)), axis=1)
        if real:
            disc = c[:, 1] ** 2 - 4 * c[:, 2] * c[:, 0]
            ok &= disc.real >= 0
            P = P.real.astype(complex)
        res = np.abs(eval_arr(A, P))
        ok &= res <= tolerances().on_surface_tol
        P = P[ok]
        out.append(P[:need])
        need -= len(P[:need])
    return np.concatenate(out, axis=0)


def random_tangents(A, P, rng: np.random.Generator) -> np.ndarray:
    """Random FS-unit tangent vectors at each point of P."""
    P = np.asarray(P)
    g = rng.standard_normal(P.shape[:-2] + (3, 2))
    R = g[..., 0] + 1j * g[..., 1]
    D = tangent_project(A, P, R)
    return D / fs_norm_arr(P, D)[..., None]


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjCoord:
    """A point [u:v] of P1, stored with max(|u|, |v|) = 1."""

    u: complex
    v: complex

    def __post_init__(self):
        if self.u == 0 and self.v == 0:
            raise GeometryError("(0, 0) is not a point of P1")
        p = normalize_pairs(np.array([self.u, self.v], dtype=complex))
        object.__setattr__(self, "u", complex(p[0]))
        object.__setattr__(self, "v", complex(p[1]))

    @classmethod
    def affine(cls, t) -> "ProjCoord":
        if t is None or (isinstance(t, float) and np.isinf(t)):
            return cls(1.0, 0.0)
        return cls(complex(t), 1.0)

    @classmethod
    def infinity(cls) -> "ProjCoord":
        return cls(1.0, 0.0)

    @property
    def pair(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=complex)

    @property
    def value(self) -> complex:
        """Affine value u/v (complex infinity as ``inf``)."""
        if self.v == 0:
            return complex(np.inf)
        return self.u / self.v

    @property
    def chart(self) -> int:
        return int(self.v != 1.0)


@dataclass(frozen=True)
class SurfacePoint:
    x: ProjCoord
    y: ProjCoord
    z: ProjCoord
    residual: float = 0.0

    @property
    def h(self) -> np.ndarray:
        return np.array([self.x.pair, self.y.pair, self.z.pair])

    @classmethod
    def from_array(cls, c, H, check: bool = True) -> "SurfacePoint":
        H = normalize_pairs(np.asarray(H, dtype=complex).reshape(3, 2))
        res = float(abs(eval_arr(c, H)))
        if check and not res <= tolerances().on_surface_tol:
            raise NotOnSurfaceError(f"residual {res:.3e} exceeds on_surface_tol")
        return cls(ProjCoord(*H[0]), ProjCoord(*H[1]), ProjCoord(*H[2]), res)

    @classmethod
    def affine(cls, c, x, y, z, check: bool = True) -> "SurfacePoint":
        H = [ProjCoord.affine(t).pair for t in (x, y, z)]
        return cls.from_array(c, H, check=check)

    def values(self) -> tuple:
        return (self.x.value, self.y.value, self.z.value)


@dataclass(frozen=True)
class TangentVec:
    base: SurfacePoint
    dx: complex
    dy: complex
    dz: complex

    @property
    def d(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz], dtype=complex)

    @classmethod
    def from_array(cls, c, base: SurfacePoint, D, check: bool = True) -> "TangentVec":
        D = np.asarray(D, dtype=complex)
        if check:
            g = grad_arr(c, base.h)
            lin = abs(np.sum(g * D))
            if lin > tolerances().tangency_tol * max(np.linalg.norm(g) * np.linalg.norm(D), 1e-300):
                raise GeometryError(f"vector is not tangent (linearized residual {lin:.3e})")
        return cls(base, complex(D[0]), complex(D[1]), complex(D[2]))


def as_pairs(p) -> np.ndarray:
    """Accept a SurfacePoint, a triple of ProjCoord, or a (3, 2) array."""
    if isinstance(p, SurfacePoint):
        return p.h
    if isinstance(p, (tuple, list)) and len(p) == 3 and all(isinstance(q, ProjCoord) for q in p):
        return np.array([q.pair for q in p])
    return normalize_pairs(np.asarray(p, dtype=complex))


# ---------------------------------------------------------------------------
# single-point operations
# ---------------------------------------------------------------------------


def eval_form(c, p) -> complex:
    """Value of the (2,2,2) form at homogeneous coordinates p (not renormalized)."""
    if isinstance(p, SurfacePoint):
        H = p.h
    elif isinstance(p, (tuple, list)) and all(isinstance(q, ProjCoord) for q in p):
        H = np.array([q.pair for q in p])
    else:
        H = np.asarray(p, dtype=complex)
    return complex(eval_arr(c, H))


def gradient(c, p) -> tuple[complex, complex, complex]:
    """Chart partials at p. Raises SingularPointError when the gradient is tiny."""
    g = grad_arr(c, as_pairs(p))
    if np.linalg.norm(g) < tolerances().singular_tol:
        raise SingularPointError(f"|grad F| = {np.linalg.norm(g):.3e} below singular_tol")
    return complex(g[0]), complex(g[1]), complex(g[2])


def gradient_norm(c, p) -> float:
    return float(np.linalg.norm(grad_arr(c, as_pairs(p))))


@dataclass(frozen=True)
class Lift:
    points: tuple
    double_root: bool = False
    diagnostic: str = ""


def lift_to_surface(c, x: ProjCoord, y: ProjCoord, k: int = 2) -> Lift:
    """Points of X over (x, y): the roots of the quadratic in the remaining factor.

    ``k`` selects which factor is solved for (default z); x and y are then the
    other two factors in increasing order.
    """
    H = np.zeros((3, 2), dtype=complex)
    others = [j for j in range(3) if j != k]
    H[others[0]] = x.pair
    H[others[1]] = y.pair
    cq = fiber_coeffs_arr(c, k, H)
    scale = np.max(np.abs(cq))
    if scale < 1e-14:
        return Lift((), False, "fiber quadratic vanishes identically: a whole fiber lies on X")
    r1, r2 = quad_roots(cq)
    disc = cq[1] ** 2 - 4 * cq[2] * cq[0]
    pts = []
    double = bool(abs(disc) <= 1e-12 * scale**2)
    for r in ([r1] if double else [r1, r2]):
        Q = H.copy()
        Q[k] = r
        pts.append(SurfacePoint.from_array(c, Q, check=False))
    return Lift(tuple(pts), double, "double root" if double else "")


def fs_norm(v: TangentVec) -> float:
    return float(fs_norm_arr(v.base.h, v.d))


def fs_distance(p, q) -> float:
    return float(fs_distance_arr(as_pairs(p), as_pairs(q)))


def random_point(c, seed=None, real: bool = False) -> SurfacePoint:
    rng = np.random.default_rng(seed)
    return SurfacePoint.from_array(c, random_surface_points(c, 1, rng, real=real)[0])


def random_tangent(c, p: SurfacePoint, seed=None) -> TangentVec:
    rng = np.random.default_rng(seed)
    return TangentVec.from_array(c, p, random_tangents(c, p.h, rng))


# ---------------------------------------------------------------------------
# W0 conditions
# ---------------------------------------------------------------------------


def _quad_resultant(p, q):
    return (p[..., 2] * q[..., 0] - p[..., 0] * q[..., 2]) ** 2 - (p[..., 2] * q[..., 1] - p[..., 1] * q[..., 2]) * (
        p[..., 1] * q[..., 0] - p[..., 0] * q[..., 1]
    )


def _binary_form_roots(values_fn, degree: int, rel_tol: float = 1e-10) -> list:
    """Roots of a binary form known through its values on the unit circle.

    Returns affine roots plus ``None`` entries for roots at infinity.
    """
    n = 4 * (degree + 1)
    t = np.exp(2j * np.pi * np.arange(n) / n)
    vals = values_fn(t)
    coef = (np.fft.fft(vals) / n)[: degree + 1]  # ascending powers of t
    scale = np.max(np.abs(coef))
    if scale == 0:
        return ["identically zero"]
    top = degree
    while top > 0 and abs(coef[top]) <= rel_tol * scale:
        top -= 1
    roots = list(np.roots(coef[: top + 1][::-1])) if top > 0 else []
    roots += [None] * (degree - top)
    return roots


@dataclass
class W0Report:
    smooth_sampled: bool
    contains_fiber: bool
    witnesses: list
    min_grad_norm: float

    def to_json(self) -> dict:
        return {
            "smooth_sampled": self.smooth_sampled,
            "contains_fiber": self.contains_fiber,
            "min_grad_norm": self.min_grad_norm,
            "witnesses": self.witnesses,
        }


def fiber_forms(c, k: int) -> np.ndarray:
    """The three (2,2) coefficient forms of the quadratic in factor k, shape (3, 3, 3) [l, a, b]."""
    return np.moveaxis(moved_axis_tensor(c, k), -1, 0)


def _common_zeros(M, tol: float) -> list:
    """Common zeros on P1 x P1 of the three (2,2) forms M[l] (l = 0, 1, 2)."""
    norms = np.array([np.max(np.abs(Ml)) for Ml in M])
    live = [l for l in range(3) if norms[l] > 1e-14]
    if not live:
        return [("any", "any")]
    Mn = [M[l] / norms[l] for l in live]

    def coeffs_in_second(Ml, s):
        # coefficient vector over the second factor's monomials, s affine in the first
        ms = np.stack([np.ones_like(s), s, s * s], axis=-1)
        return np.einsum("ab,...a->...b", Ml, ms)

    def coeffs_at(Ml, pair):
        return np.einsum("ab,a->b", Ml, mono(pair))

    candidates = []
    if len(Mn) == 1:
        return []  # a single form vanishes on a whole curve; no isolated common zero test needed
    best = None
    for a in range(len(Mn)):
        for b in range(a + 1, len(Mn)):
            roots = _binary_form_roots(lambda s: _quad_resultant(coeffs_in_second(Mn[a], s), coeffs_in_second(Mn[b], s)), 8)
            if roots == ["identically zero"]:
                continue
            best = roots
            break
        if best is not None:
            break
    if best is None:
        # every pair shares a factor: the forms have a common curve of zeros
        return [("curve", "curve")]
    for r in best:
        first = np.array([1.0, 0.0], dtype=complex) if r is None else normalize_pairs(np.array([r, 1.0]))
        qs = [coeffs_at(Ml, first) for Ml in Mn]
        lead = int(np.argmax([np.max(np.abs(q)) for q in qs]))
        if np.max(np.abs(qs[lead])) < 1e-14:
            candidates.append((first, None))
            continue
        r1, r2 = quad_roots(qs[lead])
        for second in (r1, r2):
            vals = [abs(np.sum(q * mono(second))) for q in qs]
            if max(vals) <= tol:
                candidates.append((first, second))
    out = []
    for first, second in candidates:
        if second is None:
            out.append((first, None))
            continue
        if not any(o[1] is not None and chordal(o[0], first) < 1e-6 and chordal(o[1], second) < 1e-6 for o in out):
            out.append((first, second))
    return out


def w0_check(c, n_samples: int = 200, seed=None) -> W0Report:
    """Sampled smoothness and exact-ish fiber containment test."""
    tol = tolerances()
    A = _coef_array(c)
    witnesses = []
    contains = False
    for k in range(3):
        M = fiber_forms(A, k)
        zeros = _common_zeros(M, tol.resultant_tol * 10)
        for first, second in zeros:
            contains = True
            others = [j for j in range(3) if j != k]
            if isinstance(first, str):
                witnesses.append({"moved": k + 1, "kind": first})
                continue
            witnesses.append(
                {
                    "moved": k + 1,
                    f"coord{others[0] + 1}": _pair_json(first),
                    f"coord{others[1] + 1}": _pair_json(second) if second is not None else "any",
                }
            )
    rng = np.random.default_rng(seed)
    P = random_surface_points(A, n_samples, rng)
    gn = np.linalg.norm(grad_arr(A, P), axis=-1)
    order = np.argsort(gn)[: min(8, len(gn))]
    best = float(gn.min())
    for idx in order:
        best = min(best, _descend_grad(A, P[idx]))
    return W0Report(best > tol.singular_tol, contains, witnesses, best)


def _pair_json(p):
    p = normalize_pairs(np.asarray(p))
    return [[float(p[0].real), float(p[0].imag)], [float(p[1].real), float(p[1].imag)]]


def _point_json(H):
    """A (3, 2) point as three [u, v] pairs of [re, im]."""
    return [_pair_json(q) for q in np.asarray(H)]


def _descend_grad(A, P0) -> float:
    """Local minimum of |grad F| over X starting at P0 (x, y free; z follows the root)."""
    P0 = np.asarray(P0)
    t0 = chart_coord(P0[:2])
    which = chart_index(P0[:2])
    z0 = P0[2]

    def build(xv):
        t = xv[0:2] + 1j * xv[2:4]
        H = np.zeros((3, 2), dtype=complex)
        for j in range(2):
            H[j] = [1.0, t[j]] if which[j] else [t[j], 1.0]
        H[:2] = normalize_pairs(H[:2])
        c = fiber_coeffs_arr(A, 2, H)
        r1, r2 = quad_roots(c)
        H[2] = r1 if chordal(r1, z0) <= chordal(r2, z0) else r2
        return H

    def obj(xv):
        H = build(xv)
        g = grad_arr(A, H)
        val = float(np.sum(np.abs(g) ** 2))
        return val if np.isfinite(val) else 1e6

    x0 = np.concatenate([t0.real, t0.imag])
    res = minimize(obj, x0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-24, "maxiter": 2000})
    return float(np.sqrt(min(res.fun, obj(x0))))
