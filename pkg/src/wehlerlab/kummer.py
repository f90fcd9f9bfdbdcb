"""The Kummer surface X_E of E x E as a (2,2,2) surface.

For an elliptic curve E: y^2 = 4x^3 - g2 x - g3, the map

    phi(m1, m2) = (x(m1), x(m2), x(-m1 - m2))

is invariant under m -> -m and its image is a singular Wehler surface with 16
nodes (the images of pairs of 2-torsion points). The three involutions lift
to linear maps of E x E given by 2x2 integer matrices acting on (m1, m2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .geometry import SurfaceCoeffs, SurfacePoint
from .group import apply_involution

INF = None  # the point at infinity of E

FLAT_GENERATORS = (
    np.array([[-1, -2], [0, 1]], dtype=np.int64),
    np.array([[1, 0], [-2, -1]], dtype=np.int64),
    np.array([[1, 0], [0, -1]], dtype=np.int64),
)


class KummerError(ValueError):
    pass


# ---------------------------------------------------------------------------
# elliptic curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipticCurve:
    g2: complex
    g3: complex

    def __post_init__(self):
        object.__setattr__(self, "g2", complex(self.g2))
        object.__setattr__(self, "g3", complex(self.g3))
        if abs(self.discriminant) < 1e-12 * max(1.0, abs(self.g2) ** 3, abs(self.g3) ** 2):
            raise KummerError("singular curve: g2^3 - 27 g3^2 = 0")

    @property
    def discriminant(self) -> complex:
        return self.g2**3 - 27 * self.g3**2

    @property
    def j(self) -> complex:
        return 1728 * self.g2**3 / self.discriminant

    def rhs(self, x):
        return 4 * x**3 - self.g2 * x - self.g3

    def residual(self, P) -> float:
        if P is INF:
            return 0.0
        x, y = P
        return abs(y * y - self.rhs(x)) / max(1.0, abs(x) ** 3)

    # group law -------------------------------------------------------------

    def negate(self, P):
        return INF if P is INF else (P[0], -P[1])

    def add(self, P, Q):
        if P is INF:
            return Q
        if Q is INF:
            return P
        x1, y1 = P
        x2, y2 = Q
        scale = max(1.0, abs(x1), abs(x2))
        if abs(x1 - x2) <= 1e-13 * scale:
            if abs(y1 + y2) <= 1e-10 * max(1.0, abs(y1)):
                return INF
            return self.double(P)
        lam = (y2 - y1) / (x2 - x1)
        x3 = lam * lam / 4 - x1 - x2
        return (x3, -(y1 + lam * (x3 - x1)))

    def double(self, P):
        if P is INF:
            return INF
        x, y = P
        if abs(y) <= 1e-12 * max(1.0, abs(x) ** 1.5):
            return INF
        lam = (12 * x * x - self.g2) / (2 * y)
        x3 = lam * lam / 4 - 2 * x
        return (x3, -(y + lam * (x3 - x)))

    def mul(self, n: int, P):
        if n < 0:
            return self.mul(-n, self.negate(P))
        out = INF
        acc = P
        while n:
            if n & 1:
                out = self.add(out, acc)
            acc = self.double(acc)
            n >>= 1
        return out

    def combine(self, a: int, P, b: int, Q):
        return self.add(self.mul(a, P), self.mul(b, Q))

    @staticmethod
    def x_of(P) -> complex:
        return complex(np.inf) if P is INF else P[0]

    def two_torsion_x(self) -> np.ndarray:
        return np.roots([4, 0, -self.g2, -self.g3]).astype(complex)

    def two_torsion(self) -> list:
        """The four 2-torsion points, the point at infinity first."""
        return [INF] + [(complex(e), 0j) for e in self.two_torsion_x()]

    def point_at(self, x, sign: int = 1):
        return (complex(x), sign * np.sqrt(complex(self.rhs(x))))

    def random_point(self, rng: np.random.Generator):
        x = complex(rng.standard_normal() + 1j * rng.standard_normal())
        return self.point_at(x, 1 if rng.random() < 0.5 else -1)

    def halves(self, P) -> list:
        """All Q with 2Q = P (four points)."""
        if P is INF:
            return self.two_torsion()
        x0 = P[0]
        g2, g3 = self.g2, self.g3
        quartic = [1, -4 * x0, g2 / 2, 2 * g3 + g2 * x0, g2 * g2 / 16 + g3 * x0]
        out = []
        xs = []
        for x in _polished_roots(quartic):
            if not any(abs(x - y) < 1e-9 * max(1.0, abs(x)) for y in xs):
                xs.append(x)
        for x in xs:
            Q = self.point_at(x)
            for cand in (Q, self.negate(Q)):
                D = self.double(cand)
                if D is not INF and abs(D[0] - P[0]) < 1e-7 * max(1, abs(P[0])) and abs(D[1] - P[1]) < 1e-6 * max(1, abs(P[1])):
                    out.append(cand)
                    if abs(cand[1]) > 1e-12 and len(xs) == 4:
                        break
        return out

    def torsion_points(self, n: int) -> list:
        """E[n] for n a power of two, by repeated halving."""
        if n == 1:
            return [INF]
        if n & (n - 1):
            raise ValueError("only powers of two are supported")
        pts = [INF]
        k = 1
        while k < n:
            new = []
            for P in pts:
                new.extend(self.halves(P))
            pts = new
            k *= 2
        return pts


def _polished_roots(poly) -> list:
    """Roots with Newton polish; numerically split double roots are merged and polished through p'."""
    roots = list(np.roots(poly))
    dp = np.polyder(poly)
    out = []
    while roots:
        x = roots.pop(0)
        near = [k for k, y in enumerate(roots) if abs(y - x) < 1e-5 * max(1.0, abs(x))]
        if near:
            x = 0.5 * (x + roots.pop(near[0]))
            target, deriv = dp, np.polyder(dp)
            mult = 2
        else:
            target, deriv = poly, dp
            mult = 1
        for _ in range(4):
            d = np.polyval(deriv, x)
            if d == 0:
                break
            x = x - np.polyval(target, x) / d
        out.extend([x] * mult)
    return out


def torsion_order(curve: EllipticCurve, P, max_order: int = 64, tol: float = 1e-8) -> int:
    """Least k with kP = O, detected as (k-1)P = -P up to ``tol``; 0 if none up to ``max_order``."""
    if P is INF:
        return 1
    negP = curve.negate(P)
    scale = max(1.0, abs(P[0]), abs(P[1]))
    Q = P
    for k in range(2, max_order + 1):
        if Q is INF:
            return k - 1
        if abs(Q[0] - negP[0]) <= tol * scale and abs(Q[1] - negP[1]) <= tol * scale:
            return k
        Q = curve.add(Q, P)
    return 0


# ---------------------------------------------------------------------------
# the Kummer model
# ---------------------------------------------------------------------------


def phi(curve: EllipticCurve, m1, m2) -> np.ndarray:
    """Homogeneous coordinates (3, 2) of phi(m1, m2)."""
    m3 = curve.negate(curve.add(m1, m2))
    H = np.array([_x_pair(m) for m in (m1, m2, m3)])
    return geo.normalize_pairs(H)


def _x_pair(P):
    return np.array([1.0, 0.0], dtype=complex) if P is INF else np.array([P[0], 1.0], dtype=complex)


def _monomial_rows(H) -> np.ndarray:
    m = geo.mono(H)
    return np.einsum("ni,nj,nk->nijk", m[:, 0], m[:, 1], m[:, 2]).reshape(len(H), 27)


@dataclass(eq=False)
class KummerModel:
    curve: EllipticCurve
    coeffs: SurfaceCoeffs
    fit_residual: float
    holdout_residual: float
    symmetry_defect: float
    nodes: list
    flat_generators: tuple = FLAT_GENERATORS
    flat_check: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "curve": {"g2": [self.curve.g2.real, self.curve.g2.imag], "g3": [self.curve.g3.real, self.curve.g3.imag]},
            "surface": self.coeffs.to_json(),
            "fit_residual": self.fit_residual,
            "holdout_residual": self.holdout_residual,
            "symmetry_defect": self.symmetry_defect,
            "nodes": [_point_json(p) for p in self.nodes],
            "flat_generators": [m.tolist() for m in self.flat_generators],
            "flat_check": self.flat_check,
        }

    @classmethod
    def from_json(cls, obj) -> "KummerModel":
        curve = EllipticCurve(complex(*obj["curve"]["g2"]), complex(*obj["curve"]["g3"]))
        coeffs = SurfaceCoeffs.from_json(obj["surface"])
        nodes = [
            SurfacePoint.from_array(coeffs, np.array([[complex(*u), complex(*v)] for u, v in p]), check=False)
            for p in obj["nodes"]
        ]
        return cls(
            curve,
            coeffs,
            obj["fit_residual"],
            obj.get("holdout_residual", math.nan),
            obj.get("symmetry_defect", math.nan),
            nodes,
            tuple(np.array(m, dtype=np.int64) for m in obj["flat_generators"]),
            obj.get("flat_check", {}),
        )


def _point_json(p: SurfacePoint):
    return [[[q.u.real, q.u.imag], [q.v.real, q.v.imag]] for q in (p.x, p.y, p.z)]


def kummer_coeffs(curve: EllipticCurve, n_fit_samples: int = 200, seed=None, n_holdout: int = 200) -> KummerModel:
    """Fit the (2,2,2) equation of X_E from sampled images of phi.

    The coefficient vector is the right-singular vector of the smallest
    singular value of the monomial matrix; a rank test rejects degenerate
    samples (resampled up to three times).
    """
    rng = np.random.default_rng(seed)
    for _ in range(4):
        H = np.stack([phi(curve, curve.random_point(rng), curve.random_point(rng)) for _ in range(n_fit_samples)])
        M = _monomial_rows(H)
        _, s, Vt = np.linalg.svd(M)
        if s[-2] > 1e-6 * s[0]:
            break
    else:
        raise KummerError("sample matrix is rank deficient beyond the expected one-dimensional kernel")
    coeffs = SurfaceCoeffs(Vt[-1].conj().reshape(3, 3, 3))
    fit_res = float(np.max(np.abs(geo.eval_arr(coeffs.a, H))))
    Hh = np.stack([phi(curve, curve.random_point(rng), curve.random_point(rng)) for _ in range(n_holdout)])
    hold = float(np.max(np.abs(geo.eval_arr(coeffs.a, Hh))))
    sym = max(float(np.max(np.abs(np.transpose(coeffs.a, perm) - coeffs.a))) for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0)])
    return KummerModel(curve, coeffs, fit_res, hold, sym, kummer_nodes(curve, coeffs))


def kummer_nodes(curve: EllipticCurve, coeffs: SurfaceCoeffs) -> list:
    """phi-images of the 16 pairs of 2-torsion points."""
    T = curve.two_torsion()
    return [SurfacePoint.from_array(coeffs, phi(curve, a, b), check=False) for a in T for b in T]


def kummer_oracle_coeffs(curve: EllipticCurve) -> SurfaceCoeffs:
    """X_E from the symmetric-function identity

        (s1)(4 s3 - g3) = (s2 + g2/4)^2,  s_k the elementary symmetric functions.
    """
    g2, g3 = curve.g2, curve.g3
    a = np.zeros((3, 3, 3), dtype=complex)

    def add(poly, scale=1.0):
        for mon, val in poly.items():
            a[mon] += scale * val

    # expand with dictionaries of exponent triples
    def mul(p, q):
        out = {}
        for m1, v1 in p.items():
            for m2, v2 in q.items():
                m = tuple(i + j for i, j in zip(m1, m2))
                out[m] = out.get(m, 0) + v1 * v2
        return out

    s1 = {(1, 0, 0): 1, (0, 1, 0): 1, (0, 0, 1): 1}
    lhs2 = {(1, 1, 1): 4, (0, 0, 0): -g3}
    s2g = {(1, 1, 0): 1, (0, 1, 1): 1, (1, 0, 1): 1, (0, 0, 0): g2 / 4}
    add(mul(s1, lhs2))
    add(mul(s2g, s2g), -1.0)
    return SurfaceCoeffs(a)


def apply_flat(curve: EllipticCurve, M, m1, m2):
    """The action of an integer matrix on (m1, m2) in E x E (column convention)."""
    M = np.asarray(M, dtype=np.int64)
    return (
        curve.combine(int(M[0, 0]), m1, int(M[0, 1]), m2),
        curve.combine(int(M[1, 0]), m1, int(M[1, 1]), m2),
    )


def flat_generators(model: KummerModel, n_samples: int = 1000, seed=None, tol: float = 1e-7) -> dict:
    """Verify phi(B_i m) = sigma_i(phi(m)) on random samples for the three lifts."""
    rng = np.random.default_rng(seed)
    curve, c = model.curve, model.coeffs
    worst = [0.0, 0.0, 0.0]
    used = 0
    while used < n_samples:
        m1, m2 = curve.random_point(rng), curve.random_point(rng)
        H = phi(curve, m1, m2)
        if np.min(np.linalg.norm(geo.grad_arr(c.a, H))) < 1e-3:
            continue
        p = SurfacePoint.from_array(c, H, check=False)
        for i, B in enumerate(model.flat_generators):
            lhs = phi(curve, *apply_flat(curve, B, m1, m2))
            rhs = apply_involution(c, i + 1, p).h
            worst[i] = max(worst[i], geo.fs_distance(lhs, rhs))
        used += 1
    ok = all(w <= tol for w in worst)
    report = {"samples": n_samples, "max_fs_distance": worst, "ok": ok}
    model.flat_check = report
    if not ok:
        raise KummerError(f"flat generators do not lift the involutions: {worst}")
    return {"matrices": [m.tolist() for m in model.flat_generators], **report}


def node_tangent_action(M) -> tuple[np.ndarray, dict]:
    """phi_*(M) acting on quadratic forms, with an exact check of q-preservation.

    For M = [[a, b], [c, d]], phi_*(M) is the action on (x^2, xy, y^2)
    coefficients; the check is phi_*(M)^T Q phi_*(M) = det(M)^2 Q for the
    Gram matrix Q of q(x, y, z) = xz - y^2 (scaled by 2 to stay integral).
    """
    M = np.asarray(M)
    if M.dtype.kind not in "iu":
        raise TypeError("node_tangent_action expects an integer matrix")
    a, b, c, d = (int(v) for v in M.ravel())
    det = a * d - b * c
    if abs(det) != 1:
        raise ValueError("det M must be +-1")
    S = np.array(
        [[a * a, 2 * a * b, b * b], [a * c, a * d + b * c, b * d], [c * c, 2 * c * d, d * d]],
        dtype=object,
    )
    Q2 = np.array([[0, 0, 1], [0, -2, 0], [1, 0, 0]], dtype=object)
    lhs = S.T.dot(Q2).dot(S)
    ok = bool(np.all(lhs == det * det * Q2))
    if not ok:
        raise ArithmeticError("phi_* does not preserve q: homomorphism broken")
    return S.astype(np.int64), {"det": det, "q_preserved": ok}


def perturb_family(model: KummerModel | SurfaceCoeffs, direction: SurfaceCoeffs | np.ndarray, t: float) -> SurfaceCoeffs:
    base = model.coeffs if isinstance(model, KummerModel) else model
    d = direction.a if isinstance(direction, SurfaceCoeffs) else np.asarray(direction, dtype=complex)
    d = d / np.max(np.abs(d))
    return SurfaceCoeffs(base.a + t * d)
