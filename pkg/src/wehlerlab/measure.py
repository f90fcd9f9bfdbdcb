"""The invariant volume |Omega|^2 of a Wehler surface, the area measure of X(R),
and equidistribution statistics.

In the affine charts of the three factors, Omega = dt_a ^ dt_b / F_c for any
ordering (a, b, c) of the coordinates; the expression changes only by sign
between charts. Monte Carlo integrals use the three projections at once with
the partition of unity w_c = |F_c|^2 / sum_k |F_k|^2, which keeps the
integrand bounded on a smooth surface.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import geometry as geo
from ._parallel import chunk_rng, chunk_sizes
from .config import tolerances
from .geometry import SurfaceCoeffs, _coef_array
from .group import involute_mixed, stacked_tensors

log = logging.getLogger(__name__)

PAIRS = ((1, 2, 0), (0, 2, 1), (0, 1, 2))  # (a, b, eliminated c)


class ChartCriticalError(geo.GeometryError):
    pass


# ---------------------------------------------------------------------------
# weighted samples of the volume
# ---------------------------------------------------------------------------


def _lift(A, k: int, XY) -> np.ndarray:
    """Both lifts of points with coordinate k unknown; shape (2, n, 3, 2)."""
    cf = geo.fiber_coeffs_arr(A, k, XY)
    r1, r2 = geo.quad_roots(cf)
    out = np.repeat(XY[None], 2, axis=0)
    out[0, :, k] = r1
    out[1, :, k] = r2
    return geo.normalize_pairs(out)


def _fs_density(t, real: bool) -> np.ndarray:
    """Density of the FS-uniform chart coordinate: complex (w.r.t. d^2t) or real (w.r.t. dt)."""
    if real:
        return 1.0 / (np.pi * (1.0 + np.abs(t) ** 2))
    return 1.0 / (np.pi * (1.0 + np.abs(t) ** 2) ** 2)


def volume_samples(c, n: int, rng: np.random.Generator, real: bool = False) -> tuple:
    """Weighted points (P, W, group) with sum W ~ total mass.

    ``group`` indexes the underlying draw, so per-draw sums are i.i.d. For
    ``real`` the measure is the area form |Omega| on X(R) (only real lifts kept).
    """
    A = _coef_array(c)
    pts, wts, grp = [], [], []
    for a, b, k in PAIRS:
        XY = np.zeros((n, 3, 2), dtype=complex)
        pr = geo.random_real_pairs if real else geo.random_pairs
        XY[:, a] = pr(rng, n)
        XY[:, b] = pr(rng, n)
        L = _lift(A, k, XY)
        t = geo.chart_coord(XY)
        dens = _fs_density(t[:, a], real) * _fs_density(t[:, b], real)
        cf = geo.fiber_coeffs_arr(A, k, XY)
        disc = cf[:, 1] ** 2 - 4 * cf[:, 0] * cf[:, 2]
        for s in range(2):
            P = L[s]
            ok = np.all(np.isfinite(P.reshape(n, -1)), axis=1)
            if real:
                ok &= disc.real >= 0
                P = P.real.astype(complex)
            with np.errstate(all="ignore"):
                g = np.abs(geo.grad_arr(A, P))
            if real:
                w = 1.0 / np.sum(g, axis=1)
            else:
                w = 1.0 / np.sum(g**2, axis=1)
            w = np.where(ok, w / dens, 0.0)
            P = np.where(ok[:, None, None], P, XY)  # finite placeholder for dropped lifts
            P[~ok, k] = (1.0, 0.0)
            pts.append(P)
            wts.append(w / n)
            grp.append(np.arange(n))
    return np.concatenate(pts), np.concatenate(wts), np.concatenate(grp)


def _grouped_mean_se(values, W, grp, n):
    """Estimate of sum(values * W) and its standard error from per-draw sums."""
    per = np.bincount(grp, weights=values * W * n, minlength=n)
    return float(per.mean()), float(per.std(ddof=1) / math.sqrt(n))


@dataclass
class VolumeModel:
    coeffs: SurfaceCoeffs
    normalizer: float
    mc_error: float
    seed: int
    n_samples: int
    real: bool = False
    atlas: str = "affine charts of each P1 factor; projections (x2,x3), (x1,x3), (x1,x2) with partition of unity"

    def to_json(self) -> dict:
        return {"normalizer": self.normalizer, "mc_error": self.mc_error, "seed": self.seed,
                "n_samples": self.n_samples, "real": self.real, "atlas": self.atlas}


def volume_model(c, n: int = 200_000, seed: int = 0, real: bool = False, chunk: int = 50_000) -> VolumeModel:
    """Total mass of |Omega|^2 (or of |Omega| on X(R)) by Monte Carlo; recorded with its seed."""
    cc = c if isinstance(c, SurfaceCoeffs) else SurfaceCoeffs(c)
    if real and not cc.is_real:
        raise ValueError("the real-locus measure needs a real surface")
    sums = []
    for j, size in enumerate(chunk_sizes(n, chunk)):
        P, W, grp = volume_samples(cc, size, chunk_rng(seed, j), real)
        sums.append(np.bincount(grp, weights=W * size, minlength=size))
    per = np.concatenate(sums)
    mass = float(per.mean())
    se = float(per.std(ddof=1) / math.sqrt(len(per)))
    if not mass > 0:
        raise ValueError("zero total mass (empty real locus?)")
    return VolumeModel(cc, mass, se / mass, seed, n, real)


def volume_density(vm: VolumeModel, p, eliminate: int | None = None, charts=None) -> float:
    """Density of the normalized volume against Lebesgue measure of the two kept chart coordinates.

    ``eliminate`` picks the coordinate solved for (default: largest |F_c|);
    ``charts`` (three entries of 0/1) forces the affine chart of each factor:
    0 for t = u/v, 1 for t = v/u.
    """
    A = vm.coeffs.a
    H = geo.as_pairs(p)
    if charts is not None:
        H = H.copy()
        for k, ch in enumerate(charts):
            u, v = H[k]
            if ch == 0:
                if v == 0:
                    raise ChartCriticalError("point at infinity of the requested chart")
                H[k] = (u / v, 1.0)
            else:
                if u == 0:
                    raise ChartCriticalError("point at infinity of the requested chart")
                H[k] = (1.0, v / u)
    g = _chart_grad(A, H)
    if eliminate is None:
        if np.max(np.abs(g)) < tolerances().singular_tol:
            raise geo.SingularPointError("all chart partials vanish")
        eliminate = int(np.argmax(np.abs(g)))
    if abs(g[eliminate]) < tolerances().singular_tol:
        raise ChartCriticalError(f"F_{eliminate + 1} vanishes: choose another eliminated coordinate")
    if vm.real:
        return float(1.0 / abs(g[eliminate]) / vm.normalizer)
    return float(1.0 / abs(g[eliminate]) ** 2 / vm.normalizer)


def _chart_grad(A, H) -> np.ndarray:
    """Chart partials at pairs that are either (t, 1) or (1, t) (not necessarily dominant)."""
    m = geo.mono(H)
    dm = np.empty((3, 3), dtype=complex)
    for k in range(3):
        u, v = H[k]
        dm[k] = (0, v, 2 * u) if v == 1.0 else (2 * v, u, 0)
    fx = np.einsum("ijk,i,j,k->", A, dm[0], m[1], m[2])
    fy = np.einsum("ijk,i,j,k->", A, m[0], dm[1], m[2])
    fz = np.einsum("ijk,i,j,k->", A, m[0], m[1], dm[2])
    return np.array([fx, fy, fz])


# ---------------------------------------------------------------------------
# invariance of the volume
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis box in (Re t_k, Im t_k) of the dominant-chart coordinates, k = 0, 1, 2."""

    lo: tuple
    hi: tuple

    def contains(self, P) -> np.ndarray:
        t = geo.chart_coord(P)
        ch = geo.chart_index(P)
        X = np.concatenate([t.real, t.imag, ch.astype(float)], axis=-1)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((X >= lo) & (X <= hi), axis=-1)

    @classmethod
    def random(cls, rng, width=(0.6, 1.4)) -> "Box":
        """A box in the chart of a random chart pattern, with random centers and widths."""
        ch = rng.integers(0, 2, 3).astype(float)
        c = rng.uniform(-0.6, 0.6, 6)
        w = rng.uniform(*width, 6)
        lo = np.concatenate([c - w / 2, ch])
        hi = np.concatenate([c + w / 2, ch])
        return cls(tuple(lo), tuple(hi))


def invariance_test(c, i: int, boxes, n: int = 100_000, seed: int = 0, real: bool = False) -> list:
    """Masses of A and sigma_i^{-1}(A) with the paired standard error of their difference."""
    A = _coef_array(c)
    P, W, grp = volume_samples(c, n, np.random.default_rng(seed), real)
    Q = geo.involute_arr(A, i - 1, P)
    good = np.all(np.isfinite(Q.reshape(len(Q), -1)), axis=1)
    out = []
    for box in boxes:
        inA = box.contains(P) & good
        inPre = box.contains(np.where(good[:, None, None], Q, P)) & good
        mA, seA = _grouped_mean_se(inA.astype(float), W, grp, n)
        mB, seB = _grouped_mean_se(inPre.astype(float), W, grp, n)
        md, sed = _grouped_mean_se(inPre.astype(float) - inA.astype(float), W, grp, n)
        out.append({"mass_A": mA, "mass_preimage": mB, "se_A": seA, "se_preimage": seB, "difference": md,
                    "se_difference": sed, "within_3sigma": bool(abs(md) <= 3 * sed)})
    return out


# ---------------------------------------------------------------------------
# the real locus
# ---------------------------------------------------------------------------


def circle_embed(P) -> np.ndarray:
    """Real points of (RP1)^3 embedded in R^6 by the doubled angle."""
    P = np.asarray(P).real
    th = 2 * np.arctan2(P[..., 0], P[..., 1])
    return np.concatenate([np.cos(th), np.sin(th)], axis=-1)


@dataclass
class RealSample:
    points: np.ndarray
    labels: np.ndarray
    n_components: int
    link_radius: float
    sizes: list
    warnings: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"n_points": len(self.points), "n_components": self.n_components, "sizes": self.sizes,
                "link_radius": self.link_radius, "warnings": self.warnings}


def real_locus_points(c, n: int, rng) -> np.ndarray:
    """Real points from n random real base points of each of the three projections (all real lifts kept)."""
    A = _coef_array(c)
    out = []
    for a, b, k in PAIRS:
        XY = np.zeros((n, 3, 2), dtype=complex)
        XY[:, a] = geo.random_real_pairs(rng, n)
        XY[:, b] = geo.random_real_pairs(rng, n)
        cf = geo.fiber_coeffs_arr(A, k, XY)
        disc = (cf[:, 1] ** 2 - 4 * cf[:, 0] * cf[:, 2]).real
        L = _lift(A, k, XY)
        out += [L[0][disc >= 0], L[1][disc >= 0]]
    P = np.concatenate(out).real.astype(complex)
    if len(P) == 0:
        return P
    ok = np.all(np.isfinite(P.reshape(len(P), -1)), axis=1)
    return P[ok]


def real_locus_sample(c, n: int, seed=None, link_radius: float = 0.5, neighbors: int = 10,
                      min_samples: int = 20) -> RealSample:
    """Real points with heuristic component labels.

    Points are linked to their nearest neighbours (within ``link_radius`` in
    the circle embedding) when the midpoint lifts to a nearby real point.
    Components with fewer than ``min_samples`` points are treated as
    unresolved fragments and merged into the nearest larger component.
    """
    cc = c if isinstance(c, SurfaceCoeffs) else SurfaceCoeffs(c)
    if not cc.is_real:
        raise ValueError("real_locus_sample needs a real surface")
    rng = np.random.default_rng(seed)
    P = real_locus_points(cc, n, rng)
    if len(P) == 0:
        return RealSample(P, np.zeros(0, dtype=int), 0, link_radius, [])
    labels, ncomp = _label_components(cc.a, P, link_radius, neighbors)
    sizes = np.bincount(labels, minlength=ncomp)
    warnings = []
    major = np.nonzero(sizes >= min_samples)[0]
    minor = np.nonzero(sizes < min_samples)[0]
    if len(major) == 0:
        warnings.append(f"no component has {min_samples} samples: labeling unstable")
    elif len(minor):
        warnings.append(f"{int(sizes[minor].sum())} points in {len(minor)} fragments merged into nearest components")
        X = circle_embed(P)
        in_major = np.isin(labels, major)
        tree = cKDTree(X[in_major])
        _, idx = tree.query(X[~in_major])
        labels = labels.copy()
        labels[~in_major] = labels[in_major][idx]
        remap = -np.ones(ncomp, dtype=int)
        remap[major] = np.arange(len(major))
        labels = remap[labels]
        ncomp = len(major)
        sizes = np.bincount(labels, minlength=ncomp)
    return RealSample(P, labels, int(ncomp), float(link_radius), sizes.tolist(), warnings)


def _label_components(A, P, radius, neighbors) -> tuple:
    X = circle_embed(P)
    tree = cKDTree(X)
    k = min(neighbors + 1, len(P))
    dist, idx = tree.query(X, k=k)
    rows = np.repeat(np.arange(len(P)), k - 1)
    cols = idx[:, 1:].ravel()
    keep = dist[:, 1:].ravel() <= radius
    pairs = np.stack([rows[keep], cols[keep]], axis=1)
    n = len(P)
    if len(pairs) == 0:
        return np.arange(n), n
    ok = _real_midpoints(A, P[pairs[:, 0]], P[pairs[:, 1]])
    pairs = pairs[ok]
    G = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    ncomp, labels = connected_components(G, directed=False)
    order = np.argsort(-np.bincount(labels), kind="stable")
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[labels], ncomp


def _real_midpoints(A, P, Q) -> np.ndarray:
    """The midpoint of P, Q in the projection forgetting the coordinate with the smallest |F_k| lifts to a real point
    close to the midpoint of the third coordinate."""
    thP = np.arctan2(P.real[..., 0], P.real[..., 1])
    thQ = np.arctan2(Q.real[..., 0], Q.real[..., 1])
    d = np.angle(np.exp(1j * 2 * (thQ - thP))) / 2
    mid = thP + d / 2
    M = geo.normalize_pairs(np.stack([np.sin(mid), np.cos(mid)], axis=-1).astype(complex))
    g = np.abs(geo.grad_arr(A, P)) + np.abs(geo.grad_arr(A, Q))
    k = np.argmax(g, axis=1)
    ok = np.zeros(len(P), dtype=bool)
    for kk in range(3):
        sel = k == kk
        if not np.any(sel):
            continue
        Ms = M[sel].copy()
        cf = geo.fiber_coeffs_arr(A, kk, Ms)
        disc = (cf[:, 1] ** 2 - 4 * cf[:, 0] * cf[:, 2]).real
        L = _lift(A, kk, Ms)
        target = Ms[:, kk]
        dist = np.minimum(geo.chordal(L[0][:, kk].real, target.real), geo.chordal(L[1][:, kk].real, target.real))
        ok[sel] = (disc >= 0) & (dist < 0.5 * np.abs(d[sel, kk]) + 0.25 * np.max(np.abs(d[sel]), axis=1) + 1e-12)
    return ok


def assign_components(sample: RealSample, X) -> np.ndarray:
    """Labels of arbitrary real points by their nearest labeled sample."""
    tree = cKDTree(circle_embed(sample.points))
    _, idx = tree.query(circle_embed(np.asarray(X)))
    return sample.labels[idx]


# ---------------------------------------------------------------------------
# empirical measures and discrepancy
# ---------------------------------------------------------------------------


@dataclass
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        s = math.fsum(w)
        if abs(s - 1) > 1e-12:
            w = w / s
        self.weights = w

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        n = len(points)
        return cls(np.asarray(points), np.full(n, 1.0 / n))

    def to_csv_rows(self):
        t = geo.chart_coord(self.points)
        ch = geo.chart_index(self.points)
        for row, c_, w in zip(t, ch, self.weights):
            yield [*(f"{z.real:.17g}" for z in row), *(f"{z.imag:.17g}" for z in row), *map(int, c_), f"{w:.17g}"]


def sphere_embed(P) -> np.ndarray:
    """Points of (P1)^3 embedded in R^9 (each factor on the unit sphere)."""
    P = np.asarray(P)
    u, v = P[..., 0], P[..., 1]
    n = np.abs(u) ** 2 + np.abs(v) ** 2
    uv = u * np.conj(v)
    return np.concatenate([2 * uv.real / n, 2 * uv.imag / n, (np.abs(u) ** 2 - np.abs(v) ** 2) / n], axis=-1)


def test_functions(spec: dict | None, rng: np.random.Generator, real: bool) -> list:
    """Low-degree polynomials in embedding coordinates, some multiplied by Gaussian bumps."""
    spec = {"degree": 2, "bumps": 4, "bump_width": 0.8, **(spec or {})}
    dim = 6 if real else 9
    funcs = []
    for i in range(dim):
        funcs.append(("x%d" % i, (i,), None))
    if spec["degree"] >= 2:
        for i in range(dim):
            for j in range(i, dim):
                funcs.append((f"x{i}*x{j}", (i, j), None))
    for b in range(spec["bumps"]):
        center = rng.standard_normal(dim)
        for k in range(0, dim, 3 if not real else 2):
            center[k : k + (3 if not real else 2)] /= np.linalg.norm(center[k : k + (3 if not real else 2)])
        funcs.append((f"bump{b}", (), (center, spec["bump_width"])))
        funcs.append((f"bump{b}*x0", (0,), (center, spec["bump_width"])))
    return funcs


def _eval_tests(funcs, Y) -> np.ndarray:
    out = np.empty((len(funcs), len(Y)))
    for r, (_, idx, bump) in enumerate(funcs):
        v = np.ones(len(Y))
        for i in idx:
            v = v * Y[:, i]
        if bump is not None:
            center, width = bump
            v = v * np.exp(-np.sum((Y - center) ** 2, axis=1) / width**2)
        out[r] = v
    return out


@dataclass
class Discrepancy:
    names: list
    empirical: list
    reference: list
    sigma: list
    normalized: list
    summary: float

    def to_json(self) -> dict:
        return {"summary": self.summary, "tests": [
            {"name": n, "empirical": e, "reference": r, "sigma": s, "normalized": z}
            for n, e, r, s, z in zip(self.names, self.empirical, self.reference, self.sigma, self.normalized)]}


def equidistribution_stat(emp: EmpiricalMeasure, vm: VolumeModel, test_spec: dict | None = None, seed=None,
                          n_ref: int = 100_000, components=None, sample: RealSample | None = None,
                          emp_iid: bool = True) -> Discrepancy:
    """|int phi d(emp) - int phi d(vol)| for each test function, normalized by the combined MC error.

    For a real-locus model, ``components`` restricts the reference measure to
    those labels of ``sample``. ``emp_iid`` adds the i.i.d. sampling error of
    the empirical side to sigma (correct for the null test; conservative otherwise).
    """
    rng = np.random.default_rng(seed)
    real = vm.real
    funcs = test_functions(test_spec, rng, real)
    embed = circle_embed if real else sphere_embed
    P, W, grp = volume_samples(vm.coeffs, n_ref, rng, real)
    keep = W > 0
    if components is not None:
        if sample is None:
            raise ValueError("components need the labeled sample")
        lab = np.full(len(P), -1)
        lab[keep] = assign_components(sample, P[keep])
        keep &= np.isin(lab, list(components))
    Wk = np.where(keep, W, 0.0)
    F_ref = _eval_tests(funcs, embed(P))
    mass, mass_se = _grouped_mean_se(np.ones(len(P)), Wk, grp, n_ref)
    F_emp = _eval_tests(funcs, embed(emp.points))
    names, e_vals, r_vals, sig, z = [], [], [], [], []
    per_mass = np.bincount(grp, weights=Wk * n_ref, minlength=n_ref)
    for r, (name, _, _) in enumerate(funcs):
        per = np.bincount(grp, weights=F_ref[r] * Wk * n_ref, minlength=n_ref)
        ref = per.mean() / per_mass.mean()
        # delta-method error of a ratio estimator
        resid = per - ref * per_mass
        se_ref = resid.std(ddof=1) / math.sqrt(n_ref) / per_mass.mean()
        e = float(np.sum(emp.weights * F_emp[r]))
        se_emp = 0.0
        if emp_iid:
            var = float(np.sum(emp.weights * (F_emp[r] - e) ** 2))
            se_emp = math.sqrt(var * float(np.sum(emp.weights**2)))
        s = math.sqrt(se_ref**2 + se_emp**2)
        names.append(name)
        e_vals.append(e)
        r_vals.append(float(ref))
        sig.append(s)
        z.append(abs(e - ref) / s if s > 0 else math.inf)
    return Discrepancy(names, e_vals, r_vals, sig, z, float(max(z)))


def sample_from_volume(vm: VolumeModel, n: int, seed=None, pool: int | None = None, components=None,
                       sample: RealSample | None = None) -> EmpiricalMeasure:
    """Approximately i.i.d. points from the normalized volume by weighted resampling of a large pool."""
    rng = np.random.default_rng(seed)
    pool = pool or max(20 * n, 100_000)
    P, W, _ = volume_samples(vm.coeffs, pool, rng, vm.real)
    if components is not None:
        lab = np.full(len(P), -1)
        ok = W > 0
        lab[ok] = assign_components(sample, P[ok])
        W = np.where(np.isin(lab, list(components)), W, 0.0)
    idx = rng.choice(len(P), size=n, p=W / W.sum())
    return EmpiricalMeasure.uniform(P[idx])


def rotation_discrepancy(alpha: float, n_list, x0: float = 0.0, harmonics: int = 4) -> list:
    """max_m |(1/n) sum_k e^{2 pi i m (x0 + k alpha)}| for an irrational rotation, per n."""
    out = []
    for n in n_list:
        x = np.mod(x0 + alpha * np.arange(n), 1.0)
        vals = [abs(np.mean(np.exp(2j * np.pi * m * x))) for m in range(1, harmonics + 1)]
        out.append({"n": int(n), "discrepancy": float(max(vals)), "n_times_discrepancy": float(n * max(vals))})
    return out


def trajectory_points(c, nu, x0, n: int, seed=None) -> np.ndarray:
    """Array of the points x_1, ..., x_n of one random path from x0."""
    A = _coef_array(c)
    Aperm = stacked_tensors(A)
    rng = np.random.default_rng(seed)
    table = nu.letter_table()
    idx = rng.choice(len(nu.atoms), size=n, p=nu.probs)
    P = geo.as_pairs(x0)[None].astype(complex)
    out = np.empty((n, 3, 2), dtype=complex)
    for step in range(n):
        for a in table[idx[step]]:
            if a:
                P = involute_mixed(A, Aperm, np.array([a - 1]), P)
        if not np.all(np.isfinite(P)):
            raise geo.GeometryError(f"degenerate fiber reached at step {step + 1}")
        out[step] = P[0]
    return out


def equidistribution_trend(vm: VolumeModel, nu, x0, n_list, seed=None, test_spec: dict | None = None,
                           n_ref: int = 100_000, components=None, sample: RealSample | None = None) -> dict:
    """Discrepancy summaries of the Cesaro measures of one path at increasing lengths.

    The path is shared: the measure at length n uses its first n points. The
    report states whether the summaries decrease monotonically; no threshold
    is applied.
    """
    n_list = sorted(int(n) for n in n_list)
    pts = trajectory_points(vm.coeffs, nu, x0, n_list[-1], seed)
    rows = []
    for n in n_list:
        emp = EmpiricalMeasure.uniform(pts[:n])
        d = equidistribution_stat(emp, vm, test_spec, seed=seed, n_ref=n_ref, components=components,
                                  sample=sample, emp_iid=True)
        rows.append({"n": n, "summary": d.summary, "median_normalized": float(np.median(d.normalized))})
    s = [r["summary"] for r in rows]
    return {"rows": rows, "monotone_decreasing": bool(all(b <= a for a, b in zip(s, s[1:])))}
