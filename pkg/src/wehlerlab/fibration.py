"""Elliptic fibrations of the parabolic words g_i = sigma_j o sigma_k.

The fibration pi_i fixes coordinate i (the base coordinate w). A fiber X_w is
a (2,2) curve in the other two coordinates (y, z), viewed as a double cover
of the y-line branched over the four roots of the discriminant

    Delta(y) = b(y)^2 - 4 a(y) c(y)   of   a z^2 + b z + c.

On the fiber the holomorphic form is omega = dy / F_z = dy / sqrt(Delta),
and it is unchanged by SL2 changes of the y and z coordinates. Fibers are
therefore computed in randomly rotated (y, z) coordinates chosen so that all
branch points and sample points are finite. The base coordinate is always
the affine value w with homogeneous pair (w, 1).
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import least_squares

from . import geometry as geo
from .config import tolerances
from .geometry import ProjCoord, _coef_array
from .group import Word, walk_arr

log = logging.getLogger(__name__)


class FibrationError(ValueError):
    pass


class PrecisionError(FibrationError):
    pass


# ---------------------------------------------------------------------------
# parabolic words
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParabolicSpec:
    """Fibration index i (1-based) and the word [j, k] of g_i = sigma_j o sigma_k."""

    i: int
    word: Word

    def __post_init__(self):
        w = self.word if isinstance(self.word, Word) else Word(tuple(self.word))
        object.__setattr__(self, "word", w)
        if len(w) != 2 or {self.i, *w.letters} != {1, 2, 3}:
            raise ValueError(f"word must be [j, k] with {{i, j, k}} = {{1, 2, 3}}, got i={self.i}, word={w}")

    @classmethod
    def default(cls, i: int) -> "ParabolicSpec":
        j, k = {1: (2, 3), 2: (3, 1), 3: (1, 2)}[i]
        return cls(i, Word((j, k)))

    @property
    def base_axis(self) -> int:
        return self.i - 1

    @property
    def fiber_axes(self) -> tuple[int, int]:
        y, z = [a for a in range(3) if a != self.i - 1]
        return y, z

    def power(self, n: int) -> Word:
        return self.word**n


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def _monomial_transform(R) -> np.ndarray:
    """K with mono(R @ v) = K @ mono(v) for binary quadratics."""
    p, q = R[0]
    r, s = R[1]
    return np.array(
        [
            [s * s, 2 * r * s, r * r],
            [q * s, p * s + q * r, p * r],
            [q * q, 2 * p * q, p * p],
        ]
    )


def _rotations(count: int = 12) -> list:
    rng = np.random.default_rng(20240611)
    out = []
    for _ in range(count):
        pair = []
        for _ in range(2):
            a = rng.standard_normal(4)
            a /= np.linalg.norm(a)
            al, be = a[0] + 1j * a[1], a[2] + 1j * a[3]
            pair.append(np.array([[al, -np.conj(be)], [be, np.conj(al)]]))
        out.append(tuple(pair))
    return out


ROTATIONS = _rotations()


def _continuous_sqrt(vals: np.ndarray) -> np.ndarray:
    """Square roots of a sampled path of values, choosing branches continuously."""
    r = np.sqrt(vals.astype(complex))
    for k in range(1, len(r)):
        if abs(r[k] - r[k - 1]) > abs(r[k] + r[k - 1]):
            r[k] = -r[k]
    return r


def _seg_dist(p, a, b) -> float:
    """Distance from p to the segment [a, b] in C."""
    ab = b - a
    if ab == 0:
        return abs(p - a)
    s = ((p - a) * np.conj(ab)).real / abs(ab) ** 2
    s = min(1.0, max(0.0, s))
    return abs(p - (a + s * ab))


def reduce_tau(tau: complex) -> tuple[complex, np.ndarray]:
    """SL2(Z)-reduce tau to the standard fundamental domain; returns (tau', matrix)."""
    M = np.eye(2, dtype=np.int64)
    for _ in range(1000):
        n = round(tau.real)
        tau = tau - n
        M = np.array([[1, -n], [0, 1]]) @ M
        if abs(tau) < 1 - 1e-15:
            tau = -1 / tau
            M = np.array([[0, -1], [1, 0]]) @ M
        else:
            break
    return tau, M


def j_invariant(tau: complex, terms: int = 40) -> complex:
    """Klein j via Eisenstein series E4, E6 (after reduction)."""
    if tau.imag <= 0:
        raise ValueError("tau must lie in the upper half plane")
    tau, _ = reduce_tau(complex(tau))
    q = np.exp(2j * np.pi * tau)
    n = np.arange(1, terms + 1)
    s3 = np.array([sum(d**3 for d in range(1, k + 1) if k % d == 0) for k in n], dtype=float)
    s5 = np.array([sum(d**5 for d in range(1, k + 1) if k % d == 0) for k in n], dtype=float)
    qn = q**n
    E4 = 1 + 240 * np.sum(s3 * qn)
    E6 = 1 - 504 * np.sum(s5 * qn)
    return complex(1728 * E4**3 / (E4**3 - E6**2))


@functools.lru_cache(maxsize=None)
def _unimodular(bound: int = 3) -> np.ndarray:
    rng = range(-bound, bound + 1)
    mats = [(a, b, c, d) for a in rng for b in rng for c in rng for d in rng if a * d - b * c == 1]
    return np.array(mats, dtype=float).reshape(-1, 2, 2)


def align_basis(basis, ref) -> tuple[np.ndarray, np.ndarray]:
    """The SL2(Z) change of ``basis`` (entries in [-3, 3]) closest to ``ref``."""
    U = _unimodular()
    b = np.asarray(basis, dtype=complex)
    cand = U @ b
    err = np.sum(np.abs(cand - np.asarray(ref)[None]) ** 2, axis=1)
    k = int(np.argmin(err))
    return cand[k], U[k].astype(np.int64)


def betti_coords(t: complex, basis) -> np.ndarray:
    """Real (T1, T2) with t = T1 w1 + T2 w2 (not reduced mod 1)."""
    w1, w2 = basis
    M = np.array([[w1.real, w2.real], [w1.imag, w2.imag]])
    return np.linalg.solve(M, [t.real, t.imag])


def wrap(x):
    """Reduce reals to (-1/2, 1/2]."""
    return x - np.round(x)


# ---------------------------------------------------------------------------
# per-fiber data
# ---------------------------------------------------------------------------


@dataclass
class FiberAnalytics:
    w: ProjCoord
    tau: complex
    lattice_basis: tuple
    branch_points: tuple
    t: complex | None = None
    T: tuple | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        cj = lambda z: [float(z.real), float(z.imag)]
        return {
            "w": cj(self.w.value) if self.w.v != 0 else "inf",
            "tau": cj(self.tau),
            "lattice_basis": [cj(z) for z in self.lattice_basis],
            "branch_points": [cj(z) for z in self.branch_points],
            "t": cj(self.t) if self.t is not None else None,
            "T": list(self.T) if self.T is not None else None,
            "diagnostics": self.diagnostics,
        }

    def with_basis(self, basis) -> "FiberAnalytics":
        """Re-express tau, T in a new basis of the same lattice."""
        basis = tuple(complex(z) for z in basis)
        tau = basis[1] / basis[0]
        out = replace(self, lattice_basis=basis, tau=tau)
        if self.t is not None:
            out.T = tuple(float(v) for v in np.mod(betti_coords(self.t, basis), 1.0))
        return out


class FiberSolver:
    """Fiber computations for one surface and one parabolic word."""

    def __init__(self, c, spec: ParabolicSpec):
        self.coeffs = c
        self.A = _coef_array(c)
        self.spec = spec
        y, z = spec.fiber_axes
        self.Twyz = np.transpose(self.A, (spec.base_axis, y, z))

    # algebra of a single fiber ------------------------------------------------

    def _wpair(self, w) -> np.ndarray:
        if isinstance(w, ProjCoord):
            return np.array([w.value, 1.0]) if w.v != 0 else np.array([1.0, 0.0], dtype=complex)
        w = complex(w)
        if not np.isfinite(w):
            return np.array([1.0, 0.0], dtype=complex)
        return np.array([w, 1.0], dtype=complex)

    def fiber_matrix(self, w, rot=None) -> np.ndarray:
        """M[a, b]: coefficient of y^a z^b (in rotated coordinates when rot is given)."""
        M = np.einsum("a,abc->bc", geo.mono(self._wpair(w)), self.Twyz)
        if rot is not None:
            Ry, Rz = rot
            M = _monomial_transform(Ry).T @ M @ _monomial_transform(Rz)
        return M

    @staticmethod
    def quartic(M) -> np.ndarray:
        """Ascending coefficients of Delta(y) = b^2 - 4ac."""
        a, b, c = M[:, 2], M[:, 1], M[:, 0]
        return np.polynomial.polynomial.polymul(b, b) - 4 * np.polynomial.polynomial.polymul(a, c)

    def discriminant_values(self, wpairs) -> np.ndarray:
        """Discriminant of the binary quartic Delta_w(y) at each homogeneous w."""
        m = geo.mono(np.asarray(wpairs))
        M = np.einsum("na,abc->nbc", m, self.Twyz)
        a, b, c = M[..., 2], M[..., 1], M[..., 0]
        q = np.stack([np.convolve(bb, bb) - 4 * np.convolve(aa, cc) for aa, bb, cc in zip(a, b, c)])
        return quartic_discriminant(q[:, ::-1])

    def _setup(self, w):
        """Rotation, branch points and leading coefficient for a regular fiber."""
        best = None
        for idx, rot in enumerate(ROTATIONS):
            M = self.fiber_matrix(w, rot)
            q = self.quartic(M)
            scale = np.max(np.abs(q))
            if scale == 0:
                raise FibrationError("the fiber discriminant vanishes identically")
            if abs(q[4]) < 1e-6 * scale:
                continue
            roots = np.roots(q[::-1])
            size = np.max(np.abs(roots))
            score = size
            if best is None or score < best[0]:
                best = (score, idx, rot, M, q, roots)
            if size < 4:
                break
        if best is None:
            raise PrecisionError("no rotation puts the branch points at finite distance")
        _, idx, rot, M, q, roots = best
        roots = _polish_poly_roots(q, roots)
        gaps = [abs(roots[a] - roots[b]) for a in range(4) for b in range(a + 1, 4)]
        return idx, rot, M, q, roots, min(gaps)

    # periods --------------------------------------------------------------------

    @staticmethod
    def _half_period(lead, ea, eb, ec, ed, tol=1e-14):
        c0 = 0.5 * (ea + eb)
        R = 0.5 * (eb - ea)
        prev = None
        n = 32
        while n <= 8192:
            th = (np.arange(n) + 0.5) * np.pi / n
            y = c0 + R * np.cos(th)
            f = 1.0 / _continuous_sqrt(lead * (y - ec) * (y - ed))
            val = 2j * np.pi / n * np.sum(f)
            if prev is not None and abs(val - prev) <= tol * abs(val):
                return val, abs(val - prev)
            prev = val
            n *= 2
        return prev, float("nan")

    @staticmethod
    def _choose_cycles(e):
        """Branch-point triple (a, b, c) whose segments [a,b], [b,c] stay farthest from the rest."""
        best = None
        for b in range(4):
            rest = [k for k in range(4) if k != b]
            for d in rest:
                a, c = [k for k in rest if k != d]
                s1 = min(_seg_dist(e[k], e[a], e[b]) for k in (c, d)) / abs(e[a] - e[b])
                s2 = min(_seg_dist(e[k], e[b], e[c]) for k in (a, d)) / abs(e[b] - e[c])
                score = min(s1, s2)
                if best is None or score > best[0]:
                    best = (score, (a, b, c, d))
        return best[1], best[0]

    def periods(self, w):
        tol = tolerances()
        idx, rot, M, q, e, gap = self._setup(w)
        scale = max(1.0, float(np.max(np.abs(e))))
        if gap < tol.fiber_margin * scale * 1e-3:
            raise PrecisionError(f"branch points nearly collide (gap {gap:.3e})")
        (a, b, c, d), score = self._choose_cycles(e)
        lead = q[4]
        w1, err1 = self._half_period(lead, e[a], e[b], e[c], e[d])
        w2, err2 = self._half_period(lead, e[b], e[c], e[a], e[d])
        if (w2 / w1).imag < 0:
            w2 = -w2
        if abs((w2 / w1).imag) < 1e-12:
            raise PrecisionError("periods are numerically collinear")
        diag = {"rotation": idx, "branch_gap": gap, "cycle_score": score, "quadrature_error": max(err1, err2)}
        return (w1, w2), e, (rot, M, q), diag

    # Abel integrals -------------------------------------------------------------

    @staticmethod
    def _abel(lead, e0, rest, yq, fz, tol=1e-13):
        """Integral of dy / F_z from the branch point e0 to the point (yq, fz)."""
        x, wts = legendre.leggauss(12)
        prev = None
        panels = 16
        while panels <= 4096:
            edges = np.linspace(0.0, 1.0, panels + 1)
            mid = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * (edges[1:] - edges[:-1])
            s = (mid[:, None] + half[:, None] * x[None]).ravel()
            ws = (half[:, None] * wts[None]).ravel()
            s_all = np.concatenate([[0.0], s, [1.0]])
            y = e0 + (yq - e0) * s_all**2
            r2 = lead * (yq - e0) * np.prod([y - ek for ek in rest], axis=0)
            r = _continuous_sqrt(r2)
            if abs(r[-1] - fz) > abs(r[-1] + fz):
                r = -r
            val = np.sum(ws * 2 * (yq - e0) / r[1:-1])
            if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
                return val, abs(val - prev)
            prev = val
            panels *= 2
        return prev, float("nan")

    def _fiber_points(self, w, rot, M, e, count=24):
        """Candidate points on X_w (original homogeneous coordinates) and their rotated (y, z)."""
        Ry, Rz = rot
        ang = 2 * np.pi * (np.arange(count) + 0.37) / count
        rad = np.where(np.arange(count) % 2 == 0, 0.6, 1.4) * max(1.0, 0.5 * float(np.max(np.abs(e))))
        ys = rad * np.exp(1j * ang)
        pts = []
        for yv in ys:
            a = np.polyval(M[::-1, 2], yv)
            b = np.polyval(M[::-1, 1], yv)
            cc = np.polyval(M[::-1, 0], yv)
            r1, r2 = geo.quad_roots(np.array([cc, b, a]))
            for r in (r1, r2):
                if r[1] == 0 or abs(r[0] / r[1]) > 1e3:
                    continue
                zv = r[0] / r[1]
                pts.append((yv, zv))
        return pts

    def _to_original(self, w, rot, yv, zv) -> np.ndarray:
        Ry, Rz = rot
        H = np.zeros((3, 2), dtype=complex)
        y, z = self.spec.fiber_axes
        H[self.spec.base_axis] = self._wpair(w)
        H[y] = Ry @ np.array([yv, 1.0])
        H[z] = Rz @ np.array([zv, 1.0])
        return geo.normalize_pairs(H)

    def _to_rotated(self, rot, H) -> tuple[complex, complex]:
        Ry, Rz = rot
        y, z = self.spec.fiber_axes
        py = np.linalg.solve(Ry, H[y])
        pz = np.linalg.solve(Rz, H[z])
        with np.errstate(all="ignore"):
            return complex(py[0] / py[1]), complex(pz[0] / pz[1])

    def _fz(self, M, yv, zv) -> complex:
        a = np.polyval(M[::-1, 2], yv)
        b = np.polyval(M[::-1, 1], yv)
        return complex(2 * a * zv + b)

    def translation(self, w, power: int = 1, n_points: int = 2, seed=None):
        """Periods plus t(w) computed from the ``n_points`` best-conditioned base points."""
        basis, e, (rot, M, q), diag = self.periods(w)
        lead = q[4]
        actions = self.spec.word.actions * power
        cands = self._fiber_points(w, rot, M, e)
        if seed is not None:
            np.random.default_rng(seed).shuffle(cands)
        H = np.stack([self._to_original(w, rot, yv, zv) for yv, zv in cands])
        G = walk_arr(self.A, actions, H)
        scored = []
        for k, (yv, zv) in enumerate(cands):
            if not np.all(np.isfinite(G[k])):
                continue
            gy, gz = self._to_rotated(rot, G[k])
            if not (np.isfinite(gy) and np.isfinite(gz)) or abs(gy) > 1e3 or abs(gz) > 1e3:
                continue
            best = None
            for b0 in range(4):
                rest = [e[j] for j in range(4) if j != b0]
                sc = min(min(_seg_dist(ek, e[b0], yq) for ek in rest) / max(abs(yq - e[b0]), 1e-300) for yq in (yv, gy))
                if best is None or sc > best[0]:
                    best = (sc, b0)
            scored.append((best[0], best[1], yv, zv, gy, gz))
        if len(scored) < n_points:
            raise PrecisionError("not enough well-conditioned points on the fiber")
        scored.sort(key=lambda r: -r[0])
        ts = []
        errs = []
        for sc, b0, yv, zv, gy, gz in scored[:n_points]:
            rest = [e[j] for j in range(4) if j != b0]
            u0, er0 = self._abel(lead, e[b0], rest, yv, self._fz(M, yv, zv))
            u1, er1 = self._abel(lead, e[b0], rest, gy, self._fz(M, gy, gz))
            ts.append(u1 - u0)
            errs.append(max(er0, er1))
        diag = dict(diag)
        diag["abel_error"] = max(errs)
        diag["point_score"] = scored[0][0]
        return basis, e, ts, diag


def quartic_discriminant(q) -> np.ndarray:
    """Discriminant of a x^4 + b x^3 + c x^2 + d x + e (rows of q = [a, b, c, d, e])."""
    q = np.asarray(q)
    a, b, c, d, e = (q[..., k] for k in range(5))
    return (
        256 * a**3 * e**3
        - 192 * a**2 * b * d * e**2
        - 128 * a**2 * c**2 * e**2
        + 144 * a**2 * c * d**2 * e
        - 27 * a**2 * d**4
        + 144 * a * b**2 * c * e**2
        - 6 * a * b**2 * d**2 * e
        - 80 * a * b * c**2 * d * e
        + 18 * a * b * c * d**3
        + 16 * a * c**4 * e
        - 4 * a * c**3 * d**2
        - 27 * b**4 * e**2
        + 18 * b**3 * c * d * e
        - 4 * b**3 * d**3
        - 4 * b**2 * c**3 * e
        + b**2 * c**2 * d**2
    )


def _polish_poly_roots(q_asc, roots, steps: int = 3):
    out = []
    p = q_asc[::-1]
    dp = np.polyder(p)
    for r in roots:
        for _ in range(steps):
            d = np.polyval(dp, r)
            if d == 0:
                break
            step = np.polyval(p, r) / d
            if not np.isfinite(step) or abs(step) > 1e-3 * max(1, abs(r)):
                break
            r = r - step
        out.append(r)
    return np.array(out)


# ---------------------------------------------------------------------------
# singular fibers
# ---------------------------------------------------------------------------


@dataclass
class SingularFibers:
    roots: list  # (w, multiplicity); w = None for infinity
    total: int
    degree: int

    def values(self) -> list:
        return [w for w, _ in self.roots]

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "roots": [
                {"w": "inf" if w is None else [float(w.real), float(w.imag)], "multiplicity": m} for w, m in self.roots
            ],
        }


def singular_fibers(c, spec: ParabolicSpec) -> SingularFibers:
    """Singular values of pi_i: roots of the degree-24 discriminant in w, with multiplicities."""
    solver = FiberSolver(c, spec)
    n = 128
    wv = np.exp(2j * np.pi * np.arange(n) / n)
    pairs = np.stack([wv, np.ones(n)], axis=-1)
    vals = solver.discriminant_values(pairs)
    coef = (np.fft.fft(vals) / n)[:25]
    scale = np.max(np.abs(coef))
    if scale == 0 or not np.isfinite(scale):
        raise FibrationError("the discriminant vanishes identically (degenerate family)")
    coef = np.where(np.abs(coef) <= 1e-13 * scale, 0.0, coef)
    deg = 24
    while deg > 0 and abs(coef[deg]) <= 1e-11 * scale:
        deg -= 1
    poly = coef[: deg + 1][::-1]
    roots = np.roots(poly) if deg > 0 else np.array([])
    roots = _polish_poly_roots(coef[: deg + 1], roots)
    clusters = _cluster_roots(poly, roots)
    out = [(w, m) for w, m in clusters]
    if deg < 24:
        out.append((None, 24 - deg))
    return SingularFibers(out, sum(m for _, m in out), deg)


def _cluster_roots(poly, roots) -> list:
    """Group numerically split multiple roots; a loose group is kept only if the Taylor test agrees."""
    tol = tolerances().cluster_tol
    roots = [complex(r) for r in roots]
    out = []
    for group in _single_link(roots, lambda a, b: abs(a - b) < 2e-2 * max(1.0, abs(a))):
        m = len(group)
        center = _polish_multiple(poly, complex(np.mean(group)), m)
        if m > 1 and _is_multiple_root(poly, center, m):
            out.append((center, m))
        else:
            for sub in _single_link(group, lambda a, b: geo.chordal(np.array([a, 1]), np.array([b, 1])) < tol):
                out.append((complex(np.mean(sub)), len(sub)))
    return out


def _single_link(items, close) -> list:
    groups: list[list] = []
    for r in items:
        hit = [g for g in groups if any(close(r, s) for s in g)]
        merged = [r] + [x for g in hit for x in g]
        groups = [g for g in groups if not any(g is h for h in hit)] + [merged]
    return groups


def _polish_multiple(poly, w0, m, steps: int = 5) -> complex:
    """Newton on the (m-1)-th derivative, which has a simple root at an m-fold root."""
    p = np.polyder(np.array(poly, dtype=complex), m - 1) if m > 1 else np.array(poly, dtype=complex)
    dp = np.polyder(p)
    for _ in range(steps):
        d = np.polyval(dp, w0)
        if d == 0:
            break
        step = np.polyval(p, w0) / d
        if abs(step) > 1e-2 * max(1.0, abs(w0)):
            break
        w0 = w0 - step
    return complex(w0)


def _is_multiple_root(poly, w0, m, rel: float = 1e-9) -> bool:
    """Taylor coefficients of orders < m at w0 vanish to within coefficient noise."""
    a = np.array(poly, dtype=complex)[::-1]  # ascending
    mag = np.abs(a)
    x = abs(w0)
    p = np.array(poly, dtype=complex)
    fact = 1.0
    for k in range(m):
        ck = np.polyval(p, w0) / fact
        bound = sum(mag[j] * math.comb(j, k) * x ** (j - k) for j in range(k, len(a)))
        if abs(ck) > rel * bound:
            return False
        p = np.polyder(p)
        fact *= k + 1
    return True


@functools.lru_cache(maxsize=64)
def _singular_values_cached(key, spec):
    c = np.frombuffer(key, dtype=complex).reshape(3, 3, 3)
    return singular_fibers(c, spec)


def _singular_values(c, spec) -> SingularFibers:
    return _singular_values_cached(_coef_array(c).tobytes(), spec)


def _check_regular(c, spec, w):
    tol = tolerances()
    sf = _singular_values(c, spec)
    wp = np.array([1.0, 0.0]) if w is None or not np.isfinite(w) else np.array([w, 1.0])
    for s, _ in sf.roots:
        sp = np.array([1.0, 0.0]) if s is None else np.array([s, 1.0])
        d = geo.chordal(wp, sp)
        if d <= tol.fiber_margin:
            raise PrecisionError(f"w is within {d:.2e} of a singular fiber (fiber_margin {tol.fiber_margin})")


# ---------------------------------------------------------------------------
# public per-fiber operations
# ---------------------------------------------------------------------------


def _as_w(w) -> ProjCoord:
    return w if isinstance(w, ProjCoord) else ProjCoord.affine(complex(w))


def fiber_periods(c, spec: ParabolicSpec, w, basepoint_policy=None, check: bool = True) -> FiberAnalytics:
    """Periods of omega = dy / F_z on X_w and the normalized period ratio."""
    wv = _as_w(w)
    if check:
        _check_regular(c, spec, wv.value)
    solver = FiberSolver(c, spec)
    basis, e, _, diag = solver.periods(wv.value)
    return FiberAnalytics(wv, basis[1] / basis[0], tuple(complex(z) for z in basis), tuple(complex(z) for z in e), diagnostics=diag)


def translation_number(c, spec: ParabolicSpec, w, analytics: FiberAnalytics | None = None, check: bool = True,
                       seed=None) -> FiberAnalytics:
    """t(w) and Betti coordinates T(w), with a two-point consistency check."""
    wv = _as_w(w)
    if check:
        _check_regular(c, spec, wv.value)
    solver = FiberSolver(c, spec)
    basis, e, ts, diag = solver.translation(wv.value, seed=seed)
    T = [np.mod(betti_coords(t, basis), 1.0) for t in ts]
    defect = float(np.max(np.abs(wrap(T[0] - T[1]))))
    diag["basepoint_defect"] = defect
    if defect > 1e-7:
        log.warning("translation number at w=%s: basepoint defect %.2e", wv.value, defect)
    fa = FiberAnalytics(wv, basis[1] / basis[0], tuple(complex(z) for z in basis), tuple(complex(z) for z in e),
                        complex(ts[0]), tuple(float(v) for v in T[0]), diag)
    if analytics is not None:
        fa = fa.with_basis(align_basis(fa.lattice_basis, analytics.lattice_basis)[0])
    return fa


def translation_power(c, spec: ParabolicSpec, w, power: int, seed=None) -> complex:
    """Translation of g^power on X_w, in the basis returned by ``fiber_periods``."""
    solver = FiberSolver(c, spec)
    basis, e, ts, _ = solver.translation(complex(w), power=power, n_points=1, seed=seed)
    return complex(ts[0]), basis


# ---------------------------------------------------------------------------
# Betti map over a region
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    center: complex
    radius: float

    def contains(self, w) -> bool:
        return abs(complex(w) - self.center) <= self.radius


class BettiMap:
    """T(w) on a region with a continuous choice of lattice basis.

    The basis at any w is aligned with the basis at a reference point; the
    reference moves along with evaluations so that nearby calls stay on the
    same branch.
    """

    def __init__(self, c, spec: ParabolicSpec, center: complex):
        self.solver = FiberSolver(c, spec)
        self.coeffs = c
        self.spec = spec
        basis, _, ts, _ = self.solver.translation(center)
        self.ref_w = center
        self.ref_basis = np.array(basis)
        self.calls = 0

    def analytics(self, w, ref_basis=None):
        basis, e, ts, diag = self.solver.translation(complex(w))
        ref = self.ref_basis if ref_basis is None else ref_basis
        aligned, U = align_basis(basis, ref)
        self.calls += 1
        return aligned, ts[0], diag

    def __call__(self, w, ref_basis=None) -> np.ndarray:
        basis, t, _ = self.analytics(w, ref_basis)
        return np.mod(betti_coords(t, basis), 1.0)


def _grid(region: Region, n: int):
    xs = np.linspace(-region.radius, region.radius, n)
    W = region.center + xs[None, :] + 1j * xs[:, None]
    inside = np.abs(W - region.center) <= region.radius * (1 + 1e-12)
    return W, inside, xs[1] - xs[0]


def betti_grid(c, spec: ParabolicSpec, region: Region, grid_n: int):
    """T on a square grid clipped to the region; bases continued along a BFS tree."""
    W, inside, h = _grid(region, grid_n)
    bm = BettiMap(c, spec, region.center)
    T = np.full(W.shape + (2,), np.nan)
    bases = np.full(W.shape + (2,), np.nan, dtype=complex)
    ci = int(np.argmin(np.abs(W - region.center)))
    start = np.unravel_index(ci, W.shape)
    queue = [(start, bm.ref_basis)]
    seen = {start}
    while queue:
        node, ref = queue.pop(0)
        basis, t, _ = bm.analytics(W[node], ref)
        bases[node] = basis
        T[node] = np.mod(betti_coords(t, basis), 1.0)
        for di, dj in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            nb = (node[0] + di, node[1] + dj)
            if 0 <= nb[0] < grid_n and 0 <= nb[1] < grid_n and inside[nb] and nb not in seen:
                seen.add(nb)
                queue.append((nb, basis))
    return W, T, bases, h


def _jacobian(T_fun, w, h, ref):
    """Central-difference D_wT (rows T1, T2; columns Re w, Im w), wrap-aware."""
    cols = []
    for dw in (h, 1j * h):
        Tp = T_fun(w + dw, ref)
        Tm = T_fun(w - dw, ref)
        cols.append(wrap(Tp - Tm) / (2 * h))
    return np.stack(cols, axis=1)


def winding_number(T_fun, w0, radius, n: int = 96, ref=None) -> int:
    """Winding of T(w0 + r e^{i theta}) - T(w0) around 0 (T wrapped to nearby values)."""
    T0 = np.asarray(T_fun(w0, ref))
    th = 2 * np.pi * np.arange(n + 1) / n
    vals = np.array([wrap(np.asarray(T_fun(w0 + radius * np.exp(1j * a), ref)) - T0) for a in th])
    z = vals[:, 0] + 1j * vals[:, 1]
    ang = np.unwrap(np.angle(z))
    return int(round((ang[-1] - ang[0]) / (2 * np.pi)))


@dataclass
class NtPoint:
    w: complex
    multiplicity: int
    winding_check: int
    residual: float = 0.0

    def to_json(self):
        return {"w": [self.w.real, self.w.imag], "multiplicity": self.multiplicity, "winding": self.winding_check,
                "residual": self.residual}


@dataclass
class NtReport:
    points: list
    rejected: list
    grid_n: int

    @property
    def total_multiplicity(self) -> int:
        return sum(p.multiplicity for p in self.points)

    def to_json(self):
        return {"grid_n": self.grid_n, "points": [p.to_json() for p in self.points],
                "rejected": [r for r in self.rejected], "total_multiplicity": self.total_multiplicity}


def nt_locus(c, spec: ParabolicSpec | None, region: Region, grid_n: int = 21, T_func: Callable | None = None,
             rel_threshold: float = 0.5) -> NtReport:
    """Points of the region where D_wT vanishes, validated by winding numbers.

    ``T_func(w, ref)`` may replace the surface's Betti map (used for synthetic
    models); it must return (T1, T2).
    """
    if T_func is None:
        bm = BettiMap(c, spec, region.center)
        # precompute the grid with basis continuation, then use nearest-node bases as references
        W, T, bases, h = betti_grid(c, spec, region, grid_n)

        def T_fun(w, ref=None):
            if ref is None:
                k = np.nanargmin(np.where(np.isnan(T[..., 0]), np.inf, np.abs(W - w)))
                ref = bases.reshape(-1, 2)[k]
            return bm(w, ref)
    else:
        W, inside, h = _grid(region, grid_n)
        T = np.full(W.shape + (2,), np.nan)
        for idx in zip(*np.nonzero(inside)):
            T[idx] = T_func(W[idx], None)

        def T_fun(w, ref=None):
            return np.asarray(T_func(w, ref), dtype=float)

    n = grid_n
    norms = np.full(W.shape, np.nan)
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            nb = [T[i, j + 1], T[i, j - 1], T[i + 1, j], T[i - 1, j]]
            if np.isnan(T[i, j, 0]) or any(np.isnan(v[0]) for v in nb):
                continue
            dx = wrap(T[i, j + 1] - T[i, j - 1]) / (2 * h)
            dy = wrap(T[i + 1, j] - T[i - 1, j]) / (2 * h)
            norms[i, j] = math.sqrt(float(np.sum(dx**2) + np.sum(dy**2)))
    finite = norms[np.isfinite(norms)]
    if len(finite) == 0:
        return NtReport([], [], grid_n)
    med = float(np.median(finite))
    cands = []
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            v = norms[i, j]
            if not np.isfinite(v) or v > rel_threshold * med:
                continue
            neigh = norms[i - 1 : i + 2, j - 1 : j + 2]
            if np.all((neigh >= v) | ~np.isfinite(neigh)):
                cands.append(W[i, j])
    points, rejected = [], []
    fd = 1e-3 * h
    for w0 in cands:
        def resid(x):
            return _jacobian(T_fun, complex(x[0], x[1]), fd, None).ravel()

        sol = least_squares(resid, [w0.real, w0.imag], diff_step=1e-3 * h / max(1.0, abs(w0)), xtol=1e-14,
                            ftol=1e-14, gtol=1e-14, max_nfev=200)
        ws = complex(sol.x[0], sol.x[1])
        if abs(ws - region.center) > region.radius or abs(ws - w0) > 2 * h:
            rejected.append({"w": [w0.real, w0.imag], "reason": "refinement left the cell"})
            continue
        wn = winding_number(T_fun, ws, 0.5 * h)
        if abs(wn) >= 2:
            if not any(abs(p.w - ws) < 0.25 * h for p in points):
                points.append(NtPoint(ws, abs(wn) - 1, wn, float(np.linalg.norm(sol.fun))))
        else:
            rejected.append({"w": [ws.real, ws.imag], "reason": f"winding {wn}"})
    return NtReport(points, rejected, grid_n)


# ---------------------------------------------------------------------------
# torsion fibers
# ---------------------------------------------------------------------------


@dataclass
class TorsionFiber:
    w: complex
    target: tuple
    T: tuple
    dynamic_residual: float

    def to_json(self):
        return {"w": [self.w.real, self.w.imag], "target": list(self.target), "T": list(self.T),
                "dynamic_residual": self.dynamic_residual}


def _fiber_sample_point(c, spec, w):
    solver = FiberSolver(c, spec)
    idx, rot, M, q, e, _ = solver._setup(complex(w))
    pts = solver._fiber_points(complex(w), rot, M, e, count=4)
    return solver._to_original(complex(w), rot, *pts[0])


def dynamic_residual(c, spec: ParabolicSpec, w, N: int) -> float:
    """fs_distance(g^N x, x) for a sample point x of X_w."""
    H = _fiber_sample_point(c, spec, w)
    G = walk_arr(_coef_array(c), spec.word.actions * N, H[None])[0]
    return float(geo.fs_distance_arr(G, H))


def _triangle_seeds(W, T, bases, target) -> list:
    """Barycentric seeds from grid triangles whose linearized image contains the target mod Z^2."""
    n0, n1 = W.shape
    seeds = []
    for i in range(n0 - 1):
        for j in range(n1 - 1):
            quad = [(i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j)]
            if any(np.isnan(T[q][0]) for q in quad):
                continue
            for tri in ((quad[0], quad[1], quad[2]), (quad[0], quad[2], quad[3])):
                a, b, c = tri
                Ta = T[a]
                M = np.column_stack([wrap(T[b] - Ta), wrap(T[c] - Ta)])
                tg = target + np.round(Ta - target)
                try:
                    lam = np.linalg.solve(M, tg - Ta)
                except np.linalg.LinAlgError:
                    continue
                if lam.min() >= -0.25 and lam.sum() <= 1.25:
                    w = W[a] + lam[0] * (W[b] - W[a]) + lam[1] * (W[c] - W[a])
                    seeds.append((complex(w), bases[a]))
    return seeds


def torsion_fibers(c, spec: ParabolicSpec, N: int, region: Region, grid_n: int = 9, dyn_tol: float = 1e-7,
                   newton_iters: int = 12) -> list:
    """Base points w in the region with N T(w) = 0 mod Z^2, verified dynamically."""
    W, T, bases, h = betti_grid(c, spec, region, grid_n)
    bm = BettiMap(c, spec, region.center)
    found: list[TorsionFiber] = []
    tried: list[complex] = []
    for p in range(N):
        for q in range(N):
            tg = np.array([p / N, q / N])
            for w, ref in _triangle_seeds(W, T, bases, tg):
                if any(abs(w - v) < 0.25 * h for v in tried):
                    continue
                tried.append(w)
                res = _torsion_newton(bm, w, ref, tg, h, region, newton_iters)
                if res is None:
                    log.debug("torsion Newton did not converge from seed %s", w)
                    continue
                w, Tw = res
                if abs(w - region.center) > region.radius:
                    continue
                if any(abs(f.w - w) < 1e-8 * max(1, abs(w)) for f in found):
                    continue
                try:
                    dres = dynamic_residual(c, spec, w, N)
                except (FibrationError, geo.GeometryError) as exc:
                    log.info("dynamic check failed at %s: %s", w, exc)
                    continue
                if dres > dyn_tol:
                    log.info("torsion candidate %s rejected: dynamic residual %.2e", w, dres)
                    continue
                found.append(TorsionFiber(complex(w), (p / N, q / N), tuple(float(v) for v in Tw), dres))
    return found


def _torsion_newton(bm, w, ref, tg, h, region, iters):
    prev = np.inf
    for _ in range(iters):
        try:
            Tw = bm(w, ref)
            r = wrap(Tw - tg)
            err = float(np.max(np.abs(r)))
            if err < 1e-12:
                return w, Tw
            if err > 0.9 * prev and err > 1e-9:
                return None
            prev = err
            J = _jacobian(bm, w, 1e-6 * max(h, 1e-3), ref)
            step = np.linalg.solve(J, r)
        except (FibrationError, np.linalg.LinAlgError):
            return None
        w = w - complex(step[0], step[1])
        if abs(w - region.center) > region.radius * 1.05:
            return None
    return (w, Tw) if prev < 1e-9 else None


# ---------------------------------------------------------------------------
# local NT equation near a singular value (diagnostic only)
# ---------------------------------------------------------------------------


def nt_equation_residual(c, spec: ParabolicSpec, w, h: float = 1e-5, ref_basis=None) -> dict:
    """Both sides of -i log|k| k t' = k' Im(t), with tau = log(k)/(2 pi i) and t in the basis (1, tau).

    Derivatives are central differences; the residual vanishes where D_wT = 0.
    """
    bm = BettiMap(c, spec, complex(w))
    ref = bm.ref_basis if ref_basis is None else ref_basis

    def norm_data(x):
        basis, t, _ = bm.analytics(x, ref)
        return basis[1] / basis[0], t / basis[0]

    tau0, t0 = norm_data(w)
    taup, tp = norm_data(w + h)
    taum, tm = norm_data(w - h)
    k = np.exp(2j * np.pi * tau0)
    dtau = (taup - taum) / (2 * h)
    dt = (tp - tm) / (2 * h)
    dk = 2j * np.pi * k * dtau
    lhs = -1j * np.log(abs(k)) * k * dt
    rhs = dk * t0.imag
    return {"lhs": complex(lhs), "rhs": complex(rhs), "relative_residual": float(abs(lhs - rhs) / max(abs(lhs) + abs(rhs), 1e-300))}
