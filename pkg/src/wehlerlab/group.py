"""Vieta involutions, words, the tangent cocycle, and Moebius-group classification.

Generators are indexed 1, 2, 3 in the public API (sigma_i moves coordinate i)
and 0, 1, 2 in the array kernels. A word is applied right to left: the last
letter acts first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import tolerances
from .geometry import (
    GeometryError,
    SurfacePoint,
    TangentVec,
    W0Violation,
    _coef_array,
    chordal,
    fiber_coeffs_arr,
    fs_norm_arr,
    grad_arr,
    mono,
    normalize_pairs,
    other_root,
)


class TangencyError(GeometryError):
    """The image point lies on the critical locus of the moved projection."""


# ---------------------------------------------------------------------------
# words
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Word:
    letters: tuple = ()

    def __post_init__(self):
        letters = tuple(int(a) for a in self.letters)
        if any(a not in (1, 2, 3) for a in letters):
            raise ValueError(f"letters must be in {{1,2,3}}, got {letters}")
        object.__setattr__(self, "letters", letters)

    @classmethod
    def parse(cls, s: str) -> "Word":
        return cls(tuple(int(ch) for ch in s.strip()))

    def __str__(self):
        return "".join(str(a) for a in self.letters)

    def __len__(self):
        return len(self.letters)

    def __mul__(self, other: "Word") -> "Word":
        # (w1 * w2)(p) = w1(w2(p))
        return Word(self.letters + other.letters)

    def __pow__(self, n: int) -> "Word":
        if n < 0:
            return self.inverse() ** (-n)
        return Word(self.letters * n)

    def inverse(self) -> "Word":
        return Word(self.letters[::-1])

    def reduced(self) -> "Word":
        """Cancel adjacent repeated letters (each generator is an involution)."""
        out: list[int] = []
        for a in self.letters:
            if out and out[-1] == a:
                out.pop()
            else:
                out.append(a)
        return Word(tuple(out))

    @property
    def actions(self) -> tuple:
        """0-based letters in the order they act."""
        return tuple(a - 1 for a in reversed(self.letters))


def as_word(w) -> Word:
    if isinstance(w, Word):
        return w
    if isinstance(w, str):
        return Word.parse(w)
    return Word(tuple(w))


# ---------------------------------------------------------------------------
# array kernels
# ---------------------------------------------------------------------------

OTHERS = np.array([[1, 2], [0, 2], [0, 1]])


def stacked_tensors(A) -> np.ndarray:
    """A with factor k moved last, stacked over k: shape (3, 3, 3, 3)."""
    A = _coef_array(A)
    return np.stack([np.moveaxis(A, k, -1) for k in range(3)])


def involute_mixed(A, Aperm, L, P, D=None):
    """Apply sigma_{L[n]+1} to point n of the stack P (shape (n, 3, 2)).

    Returns the new points, and when D is given the pushed tangent vectors
    (chart components, not renormalized). Degenerate fibers produce NaN.
    """
    L = np.asarray(L)
    n = len(L)
    idx = np.arange(n)
    o = OTHERS[L]
    m1 = mono(P[idx, o[:, 0]])
    m2 = mono(P[idx, o[:, 1]])
    c = np.einsum("nabk,na,nb->nk", Aperm[L], m1, m2)
    out = P.copy()
    out[idx, L] = other_root(c, P[idx, L])
    if D is None:
        return out
    g = grad_arr(A, out)
    Dn = D.copy()
    with np.errstate(all="ignore"):
        Dn[idx, L] = -(g[idx, o[:, 0]] * D[idx, o[:, 0]] + g[idx, o[:, 1]] * D[idx, o[:, 1]]) / g[idx, L]
    return out, Dn


def walk_arr(A, actions, P, D=None):
    """Apply a sequence of 0-based actions, common to all points of P.

    With D, also returns the accumulated log FS-norm gain per point; D is
    renormalized after every step.
    """
    A = _coef_array(A)
    Aperm = stacked_tensors(A)
    P = np.asarray(P, dtype=complex)
    n = P.shape[0]
    if D is None:
        for k in actions:
            P = involute_mixed(A, Aperm, np.full(n, k), P)
        return P
    D = np.asarray(D, dtype=complex)
    gain = np.zeros(n)
    norm = fs_norm_arr(P, D)
    D = D / norm[:, None]
    gain += np.log(norm)
    for k in actions:
        P, D = involute_mixed(A, Aperm, np.full(n, k), P, D)
        norm = fs_norm_arr(P, D)
        gain += np.log(norm)
        D = D / norm[:, None]
    return P, D, gain


# ---------------------------------------------------------------------------
# single-point API
# ---------------------------------------------------------------------------


def _check_index(i: int) -> int:
    if i not in (1, 2, 3):
        raise ValueError(f"generator index must be 1, 2 or 3, got {i}")
    return i - 1


def apply_involution(c, i: int, p: SurfacePoint) -> SurfacePoint:
    k = _check_index(i)
    H = p.h
    cq = fiber_coeffs_arr(c, k, H)
    if np.max(np.abs(cq)) < 1e-14:
        raise W0Violation(f"fiber of projection {i} through the point lies on the surface")
    H2 = H.copy()
    H2[k] = other_root(cq, H[k])
    return SurfacePoint.from_array(c, H2, check=False)


def tangent_involution(c, i: int, v: TangentVec) -> TangentVec:
    k = _check_index(i)
    p2 = apply_involution(c, i, v.base)
    g = grad_arr(c, p2.h)
    if abs(g[k]) <= tolerances().tangency_tol * np.linalg.norm(g):
        raise TangencyError(f"partial F_{i} vanishes at the image point")
    o = OTHERS[k]
    d = v.d.copy()
    d[k] = -(g[o[0]] * d[o[0]] + g[o[1]] * d[o[1]]) / g[k]
    return TangentVec(p2, complex(d[0]), complex(d[1]), complex(d[2]))


def apply_word(c, w, p: SurfacePoint) -> SurfacePoint:
    for a in reversed(as_word(w).letters):
        p = apply_involution(c, a, p)
    return p


def cocycle_growth(c, w, v: TangentVec) -> tuple[TangentVec, float]:
    """Push v along w, returning the image and log(|w_* v| / |v|).

    The vector is renormalized after every step; the returned image carries
    the true length |v| * exp(gain).
    """
    n0 = float(fs_norm_arr(v.base.h, v.d))
    cur = TangentVec(v.base, *(v.d / n0))
    gain = 0.0
    for a in reversed(as_word(w).letters):
        cur = tangent_involution(c, a, cur)
        nrm = float(fs_norm_arr(cur.base.h, cur.d))
        gain += math.log(nrm)
        cur = TangentVec(cur.base, *(cur.d / nrm))
    scale = n0 * math.exp(gain)
    return TangentVec(cur.base, *(cur.d * scale)), gain


# ---------------------------------------------------------------------------
# 2x2 matrices acting on P1
# ---------------------------------------------------------------------------


def as_mat2(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex).reshape(2, 2)
    if abs(np.linalg.det(m)) <= 1e-12 * max(np.sum(np.abs(m) ** 2), 1e-300):
        raise ValueError("matrix is (numerically) singular")
    return m


def det1(m) -> np.ndarray:
    """A determinant-one representative of m in PGL2."""
    m = as_mat2(m)
    return m / np.sqrt(np.linalg.det(m))


def mobius_apply(m, p) -> np.ndarray:
    return normalize_pairs(np.asarray(m) @ np.asarray(p))


@dataclass(frozen=True)
class MobiusInfo:
    kind: str
    fixed_points: tuple
    kappa: complex

    @property
    def is_loxodromic(self) -> bool:
        return self.kind == "loxodromic"


def _fixed_points(m) -> tuple:
    w, V = np.linalg.eig(m)
    pts = [normalize_pairs(V[:, j]) for j in range(2)]
    gap = abs(w[0] - w[1]) / max(abs(w[0]), abs(w[1]))
    if gap < 1e-9 or chordal(pts[0], pts[1]) < 1e-9:
        # a Jordan block: the single fixed point is the kernel of m - lambda
        lam = 0.5 * (w[0] + w[1])
        N = m - lam * np.eye(2)
        if np.max(np.abs(N)) == 0:
            return ()
        row = N[0] if np.linalg.norm(N[0]) >= np.linalg.norm(N[1]) else N[1]
        return (normalize_pairs(np.array([-row[1], row[0]])),)
    return tuple(pts)


def mobius_classify(m) -> MobiusInfo:
    m = as_mat2(m)
    m = m / np.sqrt(np.sum(np.abs(m) ** 2))
    tol = tolerances().trace_tol
    kappa = np.trace(m) ** 2 / np.linalg.det(m)
    if abs(kappa - 4) <= tol * 4:
        scalar = np.max(np.abs(m - m[0, 0] * np.eye(2))) <= 1e-12 and abs(m[0, 0]) > 0
        if scalar:
            return MobiusInfo("identity", (), complex(kappa))
        return MobiusInfo("parabolic", _fixed_points(m), complex(kappa))
    if abs(kappa.imag) <= tol and -tol <= kappa.real < 4:
        return MobiusInfo("elliptic", _fixed_points(m), complex(kappa))
    return MobiusInfo("loxodromic", _fixed_points(m), complex(kappa))


def projective_distortion(m) -> float:
    s = np.linalg.svd(as_mat2(m), compute_uv=False)
    return float(s[0] / s[1])


# ---------------------------------------------------------------------------
# group classification
# ---------------------------------------------------------------------------

KINDS = (
    "bounded",
    "reducible_one_line",
    "reducible_two_lines",
    "reducible_two_lines_swapped",
    "strictly_triangular",
    "non_elementary",
    "inconclusive",
)


@dataclass
class GroupClass:
    kind: str
    witness: dict = field(default_factory=dict)
    heuristic: bool = False

    def to_json(self) -> dict:
        def enc(v):
            if isinstance(v, np.ndarray):
                return [[float(z.real), float(z.imag)] for z in v.ravel()]
            if isinstance(v, (list, tuple)):
                return [enc(u) for u in v]
            return v

        return {"kind": self.kind, "heuristic": self.heuristic, "witness": {k: enc(v) for k, v in self.witness.items()}}


def _word_matrix(gens, inv, word) -> np.ndarray:
    m = np.eye(2, dtype=complex)
    for a in word:
        m = m @ (gens[a - 1] if a > 0 else inv[-a - 1])
    return m / np.sqrt(np.sum(np.abs(m) ** 2))


def _candidate_words(ngen: int, budget: int, rng: np.random.Generator):
    """Short words exhaustively (lengths 1 and 2), then random words."""
    letters = [a for a in range(1, ngen + 1)] + [-a for a in range(1, ngen + 1)]
    count = 0
    for a in letters:
        yield (a,)
        count += 1
    for a in letters:
        for b in letters:
            if a != -b:
                yield (a, b)
                count += 1
    while count < budget:
        length = int(rng.integers(3, 9))
        w = [int(rng.choice(letters))]
        while len(w) < length:
            b = int(rng.choice(letters))
            if b != -w[-1]:
                w.append(b)
        yield tuple(w)
        count += 1


def _fixes(g, p, tol) -> bool:
    return chordal(mobius_apply(g, p), p) <= tol


def _invariant_form(gens) -> np.ndarray | None:
    """A positive-definite Hermitian H with g^* H g = H for all g, if one is found."""
    basis = [
        np.array([[1, 0], [0, 0]], dtype=complex),
        np.array([[0, 0], [0, 1]], dtype=complex),
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, 1j], [-1j, 0]], dtype=complex),
    ]
    rows = []
    for g in gens:
        cols = [(g.conj().T @ E @ g - E).ravel() for E in basis]
        M = np.stack(cols, axis=1)
        rows.append(np.vstack([M.real, M.imag]))
    M = np.vstack(rows)
    _, s, Vt = np.linalg.svd(M)
    null = Vt[np.sum(s > 1e-8 * max(s.max(), 1.0)) :]
    if len(null) == 0:
        return None
    trial = [null.T @ (null @ np.array([1.0, 1.0, 0.0, 0.0]))]
    rng = np.random.default_rng(0)
    trial += [null.T @ rng.standard_normal(len(null)) for _ in range(200)]
    for x in trial:
        H = sum(xi * E for xi, E in zip(x, basis))
        ev = np.linalg.eigvalsh(H)
        for sgn in (1, -1):
            if np.min(sgn * ev) > 1e-8 * np.max(np.abs(ev)):
                return sgn * H
    return None


def group_classify(gens: Sequence, word_budget: int = 400, seed=None) -> GroupClass:
    """Semi-decision procedure for the type of the group generated by ``gens`` in PGL2(C)."""
    if len(gens) == 0:
        raise ValueError("need at least one generator")
    tol = tolerances().fixpt_tol
    G = [det1(g) for g in gens]
    Ginv = [np.linalg.inv(g) for g in G]
    rng = np.random.default_rng(seed)

    lox = None
    parabolic = None
    nonid = False
    for word in _candidate_words(len(G), word_budget, rng):
        m = _word_matrix(G, Ginv, word)
        info = mobius_classify(m)
        if info.kind != "identity":
            nonid = True
        if info.kind == "loxodromic":
            lox = (word, m, info)
            break
        if info.kind == "parabolic" and parabolic is None:
            parabolic = (word, m, info)

    if lox is None:
        if parabolic is not None:
            fp = parabolic[2].fixed_points[0]
            if all(_fixes(g, fp, tol) for g in G):
                return GroupClass("reducible_one_line", {"fixed_directions": [fp], "parabolic_word": parabolic[0]})
            return GroupClass("inconclusive", {"reason": "parabolic without common fixed point, no loxodromic found"})
        if not nonid:
            return GroupClass("bounded", {"reason": "trivial group"}, heuristic=True)
        H = _invariant_form(G)
        if H is not None:
            return GroupClass("bounded", {"hermitian_form": H}, heuristic=True)
        return GroupClass("inconclusive", {"reason": "no loxodromic and no invariant hermitian form"})

    word, L, info = lox
    a, b = info.fixed_points
    fix_a = [_fixes(g, a, tol) for g in G]
    fix_b = [_fixes(g, b, tol) for g in G]
    swap = [chordal(mobius_apply(g, a), b) <= tol and chordal(mobius_apply(g, b), a) <= tol for g in G]
    base = {"loxodromic_word": word, "fixed_directions": [a, b]}
    if all(fix_a) and all(fix_b):
        return GroupClass("reducible_two_lines", base)
    if all(fa and fb or s for fa, fb, s in zip(fix_a, fix_b, swap)):
        return GroupClass("reducible_two_lines_swapped", base)
    if all(fix_a):
        return GroupClass("strictly_triangular", {**base, "fixed_directions": [a]})
    if all(fix_b):
        return GroupClass("strictly_triangular", {**base, "fixed_directions": [b]})

    # some element moves {a, b} off itself: look for a conjugate of L with disjoint fixed points
    for conj in _candidate_words(len(G), word_budget, rng):
        h = _word_matrix(G, Ginv, conj)
        a2 = mobius_apply(h, a)
        b2 = mobius_apply(h, b)
        dists = [chordal(x, y) for x in (a2, b2) for y in (a, b)]
        if min(dists) > 10 * tol:
            L2 = h @ L @ np.linalg.inv(h)
            return GroupClass(
                "non_elementary",
                {
                    **base,
                    "second_word": tuple(conj) + word + tuple(-x for x in reversed(conj)),
                    "loxodromic_pair": [L, L2 / np.sqrt(np.sum(np.abs(L2) ** 2))],
                    "fixed_points_pair": [[a, b], [a2, b2]],
                },
            )
    return GroupClass("inconclusive", {**base, "reason": "no second loxodromic with disjoint fixed points"})


def verify_non_elementary(gc: GroupClass, tol: float | None = None) -> bool:
    """Check the loxodromic-pair witness of a non_elementary classification."""
    if gc.kind != "non_elementary":
        return False
    tol = tolerances().fixpt_tol if tol is None else tol
    L1, L2 = gc.witness["loxodromic_pair"]
    i1, i2 = mobius_classify(L1), mobius_classify(L2)
    if not (i1.is_loxodromic and i2.is_loxodromic):
        return False
    return min(chordal(x, y) for x in i1.fixed_points for y in i2.fixed_points) > tol
