"""Random-word dynamics: paths, Lyapunov exponents, expansion certificates,
hitting times, projective empirical measures and the 3-torus example.

Everything that iterates a tangent cocycle goes through a small *system*
interface so the same code drives a Wehler surface, a linear model (a finite
set of matrices acting on R^d or C^d) and the 3-torus example:

    system.n_gens                       number of generators (letters 1..n_gens)
    system.random_states(n, rng)        base states and unit tangent vectors
    system.step(P, D, letters0)         apply generator letters0[i] to state i
    system.norm(P, D)                   norm of tangent vectors
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.optimize import minimize
from scipy.stats import qmc

from . import geometry as geo
from ._parallel import chunk_rng, map_chunks, mean_stderr
from .config import tolerances
from .geometry import SurfaceCoeffs, SurfacePoint, TangentVec
from .group import Word, group_classify, involute_mixed, stacked_tensors

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# driving measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NuMeasure:
    """A finitely supported probability measure on words (tuples of 1-based letters)."""

    atoms: tuple

    def __post_init__(self):
        atoms = []
        for w, p in self.atoms:
            letters = w.letters if isinstance(w, Word) else tuple(int(a) for a in w)
            if p <= 0:
                raise ValueError("atom probabilities must be positive")
            atoms.append((letters, float(p)))
        total = math.fsum(p for _, p in atoms)
        if abs(total - 1) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "atoms", tuple(atoms))

    @classmethod
    def uniform(cls, n_gens: int = 3) -> "NuMeasure":
        return cls(tuple(((i,), 1.0 / n_gens) for i in range(1, n_gens + 1)))

    @classmethod
    def delta(cls, word) -> "NuMeasure":
        letters = (word,) if isinstance(word, int) else tuple(Word(word).letters if not isinstance(word, Word) else word.letters)
        return cls(((letters, 1.0),))

    @classmethod
    def weights(cls, probs: Sequence[float]) -> "NuMeasure":
        """Measure on single letters 1..len(probs)."""
        return cls(tuple(((i + 1,), p) for i, p in enumerate(probs) if p > 0))

    @classmethod
    def parse(cls, spec: str) -> "NuMeasure":
        """'uniform', 'delta:1', or 'w1:p1,w2:p2,...' with words as digit strings."""
        spec = spec.strip()
        if spec == "uniform":
            return cls.uniform()
        if spec.startswith("delta:"):
            return cls.delta(tuple(int(ch) for ch in spec[6:]))
        atoms = []
        for part in spec.split(","):
            w, p = part.split(":")
            atoms.append((tuple(int(ch) for ch in w), float(p)))
        return cls(tuple(atoms))

    def __str__(self):
        return ",".join(f"{''.join(map(str, w))}:{p:.17g}" for w, p in self.atoms)

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    @property
    def max_letter(self) -> int:
        return max(max(w) if w else 0 for w, _ in self.atoms)

    def convolve(self, other: "NuMeasure") -> "NuMeasure":
        """nu * other: first a word from ``other``, then one from ``self``."""
        atoms = [(w1 + w2, p1 * p2) for w1, p1 in self.atoms for w2, p2 in other.atoms]
        total = math.fsum(p for _, p in atoms)
        return NuMeasure(tuple((w, p / total) for w, p in atoms))

    def power(self, n: int) -> "NuMeasure":
        out = self
        for _ in range(n - 1):
            out = out.convolve(self)
        return out

    def letter_table(self) -> np.ndarray:
        """Atoms as rows of 1-based letters in acting order, padded with 0."""
        width = max(len(w) for w, _ in self.atoms) or 1
        tab = np.zeros((len(self.atoms), width), dtype=np.int64)
        for r, (w, _) in enumerate(self.atoms):
            acting = w[::-1]
            tab[r, : len(acting)] = acting
        return tab


# ---------------------------------------------------------------------------
# cocycle systems
# ---------------------------------------------------------------------------


class SurfaceSystem:
    """Tangent cocycle of the three involutions on a Wehler surface."""

    n_gens = 3

    def __init__(self, c, real: bool = False):
        self.coeffs = c if isinstance(c, SurfaceCoeffs) else SurfaceCoeffs(c)
        self.A = self.coeffs.a
        self.Aperm = stacked_tensors(self.A)
        self.real = real

    def random_states(self, n, rng):
        P = geo.random_surface_points(self.A, n, rng, real=self.real)
        return P, geo.random_tangents(self.A, P, rng)

    def step(self, P, D, letters0):
        return involute_mixed(self.A, self.Aperm, letters0, P, D)

    def norm(self, P, D):
        return geo.fs_norm_arr(P, D)

    def direction_grid(self, P, n_dir: int, real: bool):
        """Unit tangent directions at each base point, shape (n_base, n_dir, 3)."""
        E = geo.tangent_frame(self.A, P)  # (n, 2, 3)
        ab = _sphere_directions(n_dir, real)
        return np.einsum("dk,nkj->ndj", ab, E)


@dataclass(frozen=True, eq=False)
class LinearModel:
    """A finite family of invertible matrices acting linearly on R^d or C^d."""

    mats: tuple
    labels: tuple = ()

    def __post_init__(self):
        mats = tuple(np.array(m, dtype=float if np.isrealobj(np.asarray(m)) else complex) for m in self.mats)
        for m in mats:
            if m.ndim != 2 or m.shape[0] != m.shape[1] or abs(np.linalg.det(m)) < 1e-14:
                raise ValueError("linear model generators must be invertible square matrices")
        object.__setattr__(self, "mats", mats)

    @property
    def n_gens(self) -> int:
        return len(self.mats)

    @property
    def dim(self) -> int:
        return self.mats[0].shape[0]

    @property
    def real(self) -> bool:
        return all(np.isrealobj(m) for m in self.mats)

    @property
    def stack(self) -> np.ndarray:
        return np.stack(self.mats)

    def random_states(self, n, rng):
        D = rng.standard_normal((n, self.dim))
        if not self.real:
            D = D + 1j * rng.standard_normal((n, self.dim))
        D = D / np.linalg.norm(D, axis=1, keepdims=True)
        return np.zeros((n, 0)), D

    def step(self, P, D, letters0):
        return P, np.einsum("nij,nj->ni", self.stack[letters0], D)

    def norm(self, P, D):
        return np.linalg.norm(D, axis=-1)

    def direction_grid(self, P, n_dir: int, real: bool):
        if self.dim == 2:
            ab = _sphere_directions(n_dir, real or self.real)
        elif self.dim == 3 and (real or self.real):
            ab = _hemisphere(n_dir)
        else:
            raise ValueError("direction grids are implemented for dimension 2 and real dimension 3")
        return np.broadcast_to(ab, (len(P),) + ab.shape).copy()

    def word_matrix(self, letters) -> np.ndarray:
        m = np.eye(self.dim, dtype=self.stack.dtype)
        for a in letters:
            m = m @ self.mats[a - 1]
        return m


def as_system(obj, real: bool = False):
    if isinstance(obj, (SurfaceSystem, LinearModel)) or hasattr(obj, "step"):
        return obj
    return SurfaceSystem(obj, real=real)


def _sphere_directions(n: int, real: bool) -> np.ndarray:
    """Unit pairs (a, b) spread over P1: real angles or a Fibonacci sphere."""
    if real:
        th = np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=-1).astype(complex)
    k = np.arange(n) + 0.5
    theta = np.arccos(1 - 2 * k / n)
    phi = np.pi * (1 + 5**0.5) * k
    return np.stack([np.cos(theta / 2), np.sin(theta / 2) * np.exp(1j * phi)], axis=-1)


def _hemisphere(n: int) -> np.ndarray:
    """Fibonacci points on the upper unit hemisphere (directions of RP2)."""
    k = np.arange(n) + 0.5
    zc = 1 - k / n
    r = np.sqrt(1 - zc**2)
    phi = np.pi * (1 + 5**0.5) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), zc], axis=-1)


def _apply_atoms(system, P, D, table, atom_idx):
    """Apply one sampled atom per row; tangent vectors are not renormalized."""
    for col in range(table.shape[1]):
        L = table[atom_idx, col]
        act = L > 0
        if not np.any(act):
            continue
        if np.all(act):
            P, D = system.step(P, D, L - 1)
        else:
            Pa, Da = system.step(P[act], D[act], L[act] - 1)
            P = P.copy()
            D = D.copy()
            P[act] = Pa
            D[act] = Da
    return P, D


def _renormalize(system, P, D):
    nrm = system.norm(P, D)
    with np.errstate(all="ignore"):
        return D / nrm.reshape(nrm.shape + (1,) * (D.ndim - nrm.ndim)), np.log(nrm)


# ---------------------------------------------------------------------------
# paths and trajectories
# ---------------------------------------------------------------------------


def sample_path(nu: NuMeasure, n: int, seed=None, non_backtracking: bool = False) -> list:
    """n i.i.d. words from nu (optionally never repeating the previous single letter)."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(nu.atoms), size=n, p=nu.probs)
    words = [nu.atoms[i][0] for i in idx]
    if non_backtracking:
        for j in range(1, n):
            while len(words[j]) == 1 and words[j] == words[j - 1] and len(nu.atoms) > 1:
                words[j] = nu.atoms[rng.choice(len(nu.atoms), p=nu.probs)][0]
    return [Word(w) for w in words]


def trajectory(c, nu: NuMeasure, x0: SurfacePoint, n: int, seed=None) -> list:
    """The points x_0, ..., x_n of a random path; geometry errors carry the step index."""
    system = SurfaceSystem(c)
    path = sample_path(nu, n, seed)
    P = x0.h[None]
    D = np.zeros((1, 3), dtype=complex)
    out = [x0]
    for step, w in enumerate(path):
        for a in reversed(w.letters):
            P, D = system.step(P, D, np.array([a - 1]))
        if not np.all(np.isfinite(P)):
            raise geo.GeometryError(f"degenerate fiber reached at step {step + 1}")
        out.append(SurfacePoint.from_array(c, P[0], check=False))
    return out


# ---------------------------------------------------------------------------
# Lyapunov exponent
# ---------------------------------------------------------------------------


@dataclass
class LyapunovResult:
    estimate: float
    stderr: float
    trials: int
    discarded: int
    per_trial: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "trials": self.trials, "discarded": self.discarded}


def _lyap_chunk(size, rng, system, nu, n, start, block=512):
    if start is None:
        P, D = system.random_states(size, rng)
    else:
        P, D = start(size, rng)
    table = nu.letter_table()
    D, g0 = _renormalize(system, P, D)
    total = np.zeros(size)
    done = 0
    while done < n:
        b = min(block, n - done)
        idx = rng.choice(len(nu.atoms), size=(b, size), p=nu.probs)
        for j in range(b):
            P, D = _apply_atoms(system, P, D, table, idx[j])
            D, g = _renormalize(system, P, D)
            total += g
        done += b
    return total / n


def lyapunov_top(c, nu: NuMeasure | None = None, n: int = 1000, trials: int = 100, seed=None, workers: int = 1,
                 start=None, chunk: int = 256) -> LyapunovResult:
    """Top Lyapunov exponent: mean over trials of (1/n) log |f^n_* v|.

    ``c`` is a SurfaceCoeffs or any cocycle system. ``start(size, rng)`` may
    supply starting states; otherwise random states are drawn. Trials that hit
    a degenerate point (non-finite growth) are discarded and counted.
    """
    system = as_system(c)
    nu = nu or NuMeasure.uniform(system.n_gens)
    parts = map_chunks(_lyap_chunk, trials, seed, workers, chunk, (system, nu, n, start))
    vals = np.concatenate(parts)
    ok = np.isfinite(vals)
    est, se = mean_stderr(vals[ok])
    if (~ok).any():
        log.info("lyapunov_top discarded %d of %d trials", int((~ok).sum()), len(vals))
    return LyapunovResult(est, se, int(ok.sum()), int((~ok).sum()), vals)


# ---------------------------------------------------------------------------
# expansion certificate
# ---------------------------------------------------------------------------


@dataclass
class ExpansionCertificate:
    n0: int
    grid_spec: dict
    mc_samples: int
    min_value: float
    argmin: dict
    stderr_at_min: float
    verdict: str
    nodes: list = field(default_factory=list, repr=False)
    min_lower_bound: float = math.nan
    exact: bool = False

    def to_json(self, with_nodes: bool = False) -> dict:
        out = {
            "n0": self.n0,
            "grid_spec": self.grid_spec,
            "mc_samples": self.mc_samples,
            "exact": self.exact,
            "min_value": self.min_value,
            "stderr_at_min": self.stderr_at_min,
            "min_lower_bound": self.min_lower_bound,
            "argmin": self.argmin,
            "verdict": self.verdict,
        }
        if with_nodes:
            out["nodes"] = self.nodes
        return out


def _verdict(means, ses) -> str:
    atol = tolerances().verdict_atol
    if np.all(means - 3 * ses - atol > 0):
        return "certified_positive"
    if np.any(means + 3 * ses + atol < 0):
        return "refuted_negative"
    return "inconclusive"


def _grid_base_points(system, n_base: int, seed, real: bool):
    if isinstance(system, SurfaceSystem):
        sob = qmc.Sobol(d=5, scramble=True, seed=np.random.default_rng(seed))
        pts = []
        need = n_base
        while need > 0:
            U = sob.random(max(2 * need, 8))
            P = _sobol_to_surface(system.A, U, real)
            pts.append(P[:need])
            need -= len(P[:need])
        return np.concatenate(pts)
    return np.zeros((1, 0))


def _sobol_to_surface(A, U, real: bool):
    m = len(U)
    H = np.zeros((m, 3, 2), dtype=complex)
    for j in range(2):
        if real:
            th = np.pi * U[:, 2 * j]
            H[:, j] = np.stack([np.sin(th), np.cos(th)], -1)
        else:
            r = np.sqrt(U[:, 2 * j] / np.maximum(1 - U[:, 2 * j], 1e-300))
            H[:, j] = np.stack([r * np.exp(2j * np.pi * U[:, 2 * j + 1]), np.ones(m)], -1)
    H[:, :2] = geo.normalize_pairs(H[:, :2])
    cq = geo.fiber_coeffs_arr(A, 2, H)
    r1, r2 = geo.quad_roots(cq)
    H[:, 2] = np.where((U[:, 4] < 0.5)[:, None], r1, r2)
    ok = np.all(np.isfinite(H.reshape(m, -1)), axis=1)
    if real:
        disc = cq[:, 1] ** 2 - 4 * cq[:, 2] * cq[:, 0]
        ok &= disc.real >= 0
        H = H.real.astype(complex)
    ok &= np.abs(geo.eval_arr(A, H)) <= tolerances().on_surface_tol
    gn = np.linalg.norm(geo.grad_arr(A, H), axis=-1)
    ok &= gn > tolerances().singular_tol
    return H[ok]


def _all_words(k: int, n0: int) -> np.ndarray:
    return np.array(list(itertools.product(range(k), repeat=n0)), dtype=np.int64).reshape(-1, n0)


def _exact_linear_values(model: LinearModel, nu: NuMeasure, n0: int, V: np.ndarray) -> np.ndarray:
    """E_{nu^(n0)} log |M v| for each row of V, by enumerating all words."""
    table = nu.letter_table()
    probs = nu.probs
    mats = []
    for row in table:
        m = np.eye(model.dim, dtype=model.stack.dtype)
        for a in row:
            if a > 0:
                m = model.mats[a - 1] @ m
        mats.append(m)
    mats = np.stack(mats)
    prods = np.eye(model.dim, dtype=mats.dtype)[None]
    weights = np.ones(1)
    for _ in range(n0):
        prods = np.einsum("aij,bjk->abik", mats, prods).reshape(-1, model.dim, model.dim)
        weights = np.outer(probs, weights).ravel()
    MV = np.einsum("wij,dj->wdi", prods, V)
    return np.einsum("w,wd->d", weights, np.log(np.linalg.norm(MV, axis=-1)))


def expansion_certificate(c, nu: NuMeasure | None = None, n0: int = 1, grid_spec: dict | None = None,
                          mc_samples: int = 64, seed=None, exact: bool = False, real: bool | None = None,
                          workers: int = 1, refine: bool = True) -> ExpansionCertificate:
    """Grid check of min over unit (x, v) of E_{nu^(n0)} log |f_* v|.

    ``grid_spec`` keys: ``base`` (number of base points) and ``directions``.
    For linear models with ``exact=True`` the expectation is computed by
    enumerating all words, and the minimum over directions is refined by a
    local search from the best grid node.
    """
    system = as_system(c)
    nu = nu or NuMeasure.uniform(system.n_gens)
    spec = {"base": 32, "directions": 16}
    spec.update(grid_spec or {})
    if real is None:
        real = bool(getattr(system, "real", False))
    if n0 < 1:
        raise ValueError("n0 must be at least 1")

    P0 = _grid_base_points(system, int(spec["base"]), seed, real)
    V0 = system.direction_grid(P0, int(spec["directions"]), real)  # (nb, nd, dim)
    nb, nd = V0.shape[:2]
    Pn = np.repeat(P0, nd, axis=0)
    Vn = V0.reshape(nb * nd, -1)

    if exact and isinstance(system, LinearModel):
        means = _exact_linear_values(system, nu, n0, Vn)
        ses = np.zeros_like(means)
    elif exact:
        words = _all_words(len(nu.atoms), n0)
        w = np.prod(nu.probs[words], axis=1)
        P = np.repeat(Pn, len(words), axis=0)
        D = np.repeat(Vn, len(words), axis=0)
        D, g0 = _renormalize(system, P, D)
        total = np.zeros(len(P))
        table = nu.letter_table()
        allw = np.tile(words, (len(Pn), 1))
        for j in range(n0):
            P, D = _apply_atoms(system, P, D, table, allw[:, j])
            D, g = _renormalize(system, P, D)
            total += g
        means = (total.reshape(len(Pn), len(words)) * w).sum(axis=1)
        ses = np.zeros_like(means)
    else:
        def node_chunk(size, rng, lo):
            # one chunk = a block of nodes, each with mc_samples words
            P = np.repeat(Pn[lo : lo + size], mc_samples, axis=0)
            D = np.repeat(Vn[lo : lo + size], mc_samples, axis=0)
            D, _ = _renormalize(system, P, D)
            total = np.zeros(len(P))
            table = nu.letter_table()
            for _ in range(n0):
                idx = rng.choice(len(nu.atoms), size=len(P), p=nu.probs)
                P, D = _apply_atoms(system, P, D, table, idx)
                D, g = _renormalize(system, P, D)
                total += g
            return total.reshape(size, mc_samples)

        block = 32
        parts = []
        for j, lo in enumerate(range(0, len(Pn), block)):
            size = min(block, len(Pn) - lo)
            parts.append(node_chunk(size, chunk_rng(seed, j), lo))
        samples = np.concatenate(parts)
        means = samples.mean(axis=1)
        ses = samples.std(axis=1, ddof=1) / math.sqrt(mc_samples) if mc_samples > 1 else np.zeros(len(means))

    finite = np.isfinite(means)
    means_f = np.where(finite, means, np.inf)
    lower = means_f - 3 * ses
    i = int(np.argmin(means_f))
    min_value, stderr_at_min = float(means_f[i]), float(ses[i])
    argmin_dir = Vn[i]
    if exact and refine and isinstance(system, LinearModel):
        x_best, v_best = _refine_linear_min(system, nu, n0, argmin_dir)
        if v_best < min_value:
            min_value, argmin_dir = v_best, x_best
            means_f = np.append(means_f, v_best)
            ses = np.append(ses, 0.0)
    verdict = _verdict(means_f[np.isfinite(means_f)], ses[np.isfinite(means_f)])
    node_rows = []
    for j in range(len(Pn)):
        node_rows.append(
            {
                "node_id": j,
                "base": _pairs_json(Pn[j]),
                "direction": j % nd,
                "estimate": float(means[j]),
                "stderr": float(ses[j]),
            }
        )
    return ExpansionCertificate(
        n0=n0,
        grid_spec={**spec, "real": real},
        mc_samples=0 if exact else mc_samples,
        min_value=min_value,
        argmin={"node_id": i if i < len(Pn) else None, "base": _pairs_json(Pn[i // 1]) if len(Pn) else [],
                "direction": [[float(z.real), float(z.imag)] for z in np.atleast_1d(argmin_dir).astype(complex)]},
        stderr_at_min=stderr_at_min,
        verdict=verdict,
        nodes=node_rows,
        min_lower_bound=float(np.min(lower[np.isfinite(lower)])) if np.isfinite(lower).any() else math.nan,
        exact=exact,
    )


def _pairs_json(H):
    H = np.asarray(H)
    return [[float(z.real), float(z.imag)] for z in H.ravel()]


def _refine_linear_min(model: LinearModel, nu, n0, v0):
    """Local minimization of the exact expectation over unit real directions."""
    if not model.real or model.dim > 3:
        return v0, math.inf
    v0 = np.real(v0)

    def f(x):
        v = x / np.linalg.norm(x)
        return float(_exact_linear_values(model, nu, n0, v[None])[0])

    res = minimize(f, v0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    return res.x / np.linalg.norm(res.x), float(res.fun)


# ---------------------------------------------------------------------------
# hitting times
# ---------------------------------------------------------------------------


def hitting_time_stats(action: Sequence[Sequence[int]], nu: NuMeasure | Sequence[float], basepoint: int = 0,
                       trials: int = 10_000, seed=None, step_cap: int = 100_000) -> dict:
    """First return time of the random walk of a permutation action to ``basepoint``.

    ``action[g]`` is the permutation of F = {0..|F|-1} induced by generator g+1.
    Returns mean, variance and an exponential fit of the survival function.
    """
    perms = np.array(action, dtype=np.int64)
    size = perms.shape[1]
    if not isinstance(nu, NuMeasure):
        nu = NuMeasure.weights(nu)
    # compose each atom word into one permutation (last letter acts first)
    atom_perms = []
    for w, _ in nu.atoms:
        p = np.arange(size)
        for a in reversed(w):
            p = perms[a - 1][p]
        atom_perms.append(p)
    atom_perms = np.stack(atom_perms)
    _check_transitive(atom_perms, size)

    rng = np.random.default_rng(seed)
    pos = np.full(trials, basepoint)
    T = np.zeros(trials, dtype=np.int64)
    alive = np.ones(trials, dtype=bool)
    t = 0
    while alive.any() and t < step_cap:
        t += 1
        ids = np.nonzero(alive)[0]
        choice = rng.choice(len(atom_perms), size=len(ids), p=nu.probs)
        pos[ids] = atom_perms[choice, pos[ids]]
        hit = pos[ids] == basepoint
        T[ids[hit]] = t
        alive[ids[hit]] = False
    censored = int(alive.sum())
    done = T[~alive].astype(float)
    mean, se = mean_stderr(done)
    var = float(np.var(done, ddof=1)) if len(done) > 1 else 0.0
    slope, r2, fit_range = _tail_fit(done, trials)
    return {
        "orbit_size": size,
        "trials": trials,
        "mean": mean,
        "stderr": se,
        "variance": var,
        "censored": censored,
        "tail_exponent": slope,
        "tail_r2": r2,
        "tail_fit_range": fit_range,
    }


def _check_transitive(perms, size):
    seen = {0}
    frontier = [0]
    while frontier:
        x = frontier.pop()
        for p in perms:
            y = int(p[x])
            if y not in seen:
                seen.add(y)
                frontier.append(y)
    if len(seen) != size:
        raise ValueError("the action is not transitive")


def _tail_fit(T, trials, min_count: int = 30):
    """Linear regression of log P(T > t) on t over the well-sampled range."""
    if len(T) == 0:
        return math.nan, math.nan, [0, 0]
    tmax = int(T.max())
    counts = np.bincount(T.astype(np.int64), minlength=tmax + 1)
    surv = trials - np.cumsum(counts)  # number with T > t
    ts = np.arange(tmax + 1)
    keep = (ts >= 1) & (surv >= min_count)
    if keep.sum() < 3:
        return 0.0 if surv[1:].max(initial=0) == 0 else math.nan, 1.0, [1, int(ts[keep].max(initial=1))]
    fit = stats.linregress(ts[keep], np.log(surv[keep] / trials))
    return float(fit.slope), float(fit.rvalue**2), [int(ts[keep].min()), int(ts[keep].max())]


# ---------------------------------------------------------------------------
# projective empirical measures
# ---------------------------------------------------------------------------


@dataclass
class ProjectiveCloud:
    n: int
    points: np.ndarray
    directions: np.ndarray
    weights: np.ndarray
    chi: float
    chi_stderr: float


def projective_empirical_measure(c, nu: NuMeasure, u0, n_list: Sequence[int], seed=None, paths: int = 1) -> list:
    """Cesaro clouds (1/n) sum_{j<n} nu^(j) * delta_{u0}, one sample path per ``paths``.

    ``u0`` is a TangentVec (surface) or a pair (P, D) of one state. Each cloud
    reports chi: the average one-step log dilation along its points.
    """
    system = as_system(c)
    if isinstance(u0, TangentVec):
        P = np.repeat(u0.base.h[None], paths, axis=0)
        D = np.repeat(u0.d[None], paths, axis=0)
    else:
        P0, D0 = u0
        P = np.repeat(np.asarray(P0)[None], paths, axis=0)
        D = np.repeat(np.asarray(D0)[None], paths, axis=0)
    D, _ = _renormalize(system, P, D)
    rng = np.random.default_rng(seed)
    table = nu.letter_table()
    nmax = max(n_list)
    pts, dirs, gains = [], [], []
    for _ in range(nmax):
        pts.append(P)
        dirs.append(D)
        idx = rng.choice(len(nu.atoms), size=paths, p=nu.probs)
        P, D = _apply_atoms(system, P, D, table, idx)
        D, g = _renormalize(system, P, D)
        gains.append(g)
    pts = np.stack(pts)  # (nmax, paths, ...)
    dirs = np.stack(dirs)
    gains = np.stack(gains)
    out = []
    for n in n_list:
        per_path = gains[:n].mean(axis=0)
        chi, se = mean_stderr(per_path)
        m = n * paths
        out.append(
            ProjectiveCloud(
                n=n,
                points=pts[:n].reshape((m,) + pts.shape[2:]),
                directions=dirs[:n].reshape((m,) + dirs.shape[2:]),
                weights=np.full(m, 1.0 / m),
                chi=chi,
                chi_stderr=se,
            )
        )
    return out


# ---------------------------------------------------------------------------
# the 3-torus example
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Torus3Params:
    """g(x, y, z) = (A(x, y) + z c, psi(z)), h(x, y, z) = (B(x, y), psi(z)) on R^3/Z^3.

    ``probs`` are the weights of (g, h, g^-1, h^-1).
    """

    A: np.ndarray = field(default_factory=lambda: np.array([[2, 1], [1, 1]]))
    B: np.ndarray = field(default_factory=lambda: np.array([[1, 1], [1, 2]]))
    c1: float = 1.0
    c2: float = 0.5
    gamma: float = 0.5
    probs: tuple = (0.3, 0.3, 0.2, 0.2)

    def __post_init__(self):
        A = np.array(self.A, dtype=np.int64)
        B = np.array(self.B, dtype=np.int64)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if abs(round(np.linalg.det(A))) != 1 or abs(round(np.linalg.det(B))) != 1:
            raise ValueError("A and B must have determinant +-1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        pg, ph, pgi, phi = self.probs
        if min(self.probs) <= 0 or abs(math.fsum(self.probs) - 1) > 1e-12:
            raise ValueError("probabilities must be positive and sum to 1")
        if not (pgi < pg and phi < ph):
            raise ValueError("need nu(g^-1) < nu(g) and nu(h^-1) < nu(h)")
        if self.c1 == 0 and self.c2 == 0:
            raise ValueError("(c1, c2) must be nonzero")
        if np.min(np.abs(np.linalg.eigvals(A) - self.gamma)) < 1e-12:
            raise ValueError("gamma must not be an eigenvalue of A")
        gc = group_classify([A, B], word_budget=200, seed=0)
        if gc.kind != "non_elementary":
            raise ValueError(f"<A, B> must be non-elementary, got {gc.kind}")

    def tangent_model(self) -> LinearModel:
        """Derivatives along Y of g, h, g^-1, h^-1 (generators 1..4)."""
        g = np.zeros((3, 3))
        g[:2, :2] = self.A
        g[:2, 2] = (self.c1, self.c2)
        g[2, 2] = self.gamma
        h = np.zeros((3, 3))
        h[:2, :2] = self.B
        h[2, 2] = self.gamma
        return LinearModel((g, h, np.linalg.inv(g), np.linalg.inv(h)), ("g", "h", "g^-1", "h^-1"))

    def nu(self) -> NuMeasure:
        return NuMeasure.weights(self.probs)


def torus3_phi(t):
    """The conjugacy (-1/4, 1/4) -> R, equal to the identity on [-1/8, 1/8]."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    out = np.where(a <= 0.125, a, 0.125 + np.tan(4 * np.pi * np.clip(a - 0.125, 0, 0.125)) / (4 * np.pi))
    return np.sign(t) * out


def torus3_phi_inv(s):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    out = np.where(a <= 0.125, a, 0.125 + np.arctan(4 * np.pi * (a - 0.125)) / (4 * np.pi))
    return np.sign(s) * out


def torus3_psi(t, gamma: float, power: int = 1):
    return torus3_phi_inv(gamma**power * torus3_phi(t))


def _torus3_chunk(size, rng, p: Torus3Params, n: int):
    xy = rng.random((size, 2))
    z0 = rng.uniform(-0.25, 0.25, size)
    s = torus3_phi(z0)
    logzeta = np.log(np.abs(s))  # log |phi(z)|; phi(z_n) = gamma^S_n phi(z_0)
    sign = np.sign(s)
    with np.errstate(divide="ignore"):
        logd0 = np.log(np.abs(z0))
    Ainv = np.round(np.linalg.inv(p.A)).astype(np.int64)
    Binv = np.round(np.linalg.inv(p.B)).astype(np.int64)
    cvec = np.array([p.c1, p.c2])
    lg = math.log(p.gamma)
    for _ in range(n):
        k = rng.choice(4, size=size, p=p.probs)
        z = sign * torus3_phi_inv(np.exp(np.minimum(logzeta, 700.0)))
        new = xy.copy()
        m = k == 0
        new[m] = xy[m] @ p.A.T + z[m, None] * cvec
        m = k == 1
        new[m] = xy[m] @ p.B.T
        m = k == 2
        # g^-1: z' = psi^-1(z), (x, y) = A^-1((x, y) - z' c)
        zi = sign[m] * torus3_phi_inv(np.exp(np.minimum(logzeta[m] - lg, 700.0)))
        new[m] = (xy[m] - zi[:, None] * cvec) @ Ainv.T
        m = k == 3
        new[m] = xy[m] @ Binv.T
        xy = np.mod(new, 1.0)
        logzeta += np.where(k < 2, lg, -lg)
    # d(x_n, Y) = |z_n| = |phi^-1(zeta_n)|, equal to |zeta_n| once |zeta_n| <= 1/8
    near = logzeta <= math.log(0.125)
    logd = logzeta.copy()
    logd[~near] = np.log(torus3_phi_inv(np.exp(np.minimum(logzeta[~near], 700.0))))
    return (logd - logd0) / n


def torus3_simulate(p: Torus3Params, n: int = 10_000, trials: int = 200, seed=None, n0: int = 6,
                    directions: int = 64, workers: int = 1) -> dict:
    """Empirical drift of (1/n) log d(x_n, Y) and the tangent certificate along Y."""
    parts = map_chunks(_torus3_chunk, trials, seed, workers, 64, (p, n))
    vals = np.concatenate(parts)
    est, se = mean_stderr(vals)
    pg, ph, pgi, phi = p.probs
    cert = expansion_certificate(p.tangent_model(), p.nu(), n0=n0, grid_spec={"base": 1, "directions": directions},
                                 exact=True, real=True)
    return {
        "drift_estimate": est,
        "drift_stderr": se,
        "drift_expected": (pg + ph - pgi - phi) * math.log(p.gamma),
        "expansion_near_Y": cert,
    }
