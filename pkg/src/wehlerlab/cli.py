"""Command-line driver: one subcommand per pipeline, JSON config, deterministic file output.

Every run writes ``summary.json``, optional CSV tables and ``manifest.json``
into the output directory. Each file carries the resolved config, the seed
and the package version; nothing time-dependent is recorded.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np
from scipy.stats import norm

from . import __version__
from . import fibration as fib
from . import geometry as geo
from . import kummer as km
from . import measure as ms
from . import orbits as orb
from . import randomwalk as rw
from .config import DEFAULT, override
from .group import verify_non_elementary

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_PRECONDITION = 4

EXIT_HELP = """exit codes:
  0  completed run (refuted or inconclusive verdicts are results, not errors)
  1  internal error (bug)
  2  usage or config schema error
  3  missing input file
  4  precondition failure reported by a module (singular surface, bad fiber, ...)
"""


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameters: one table drives the flags, the schema and the defaults
# ---------------------------------------------------------------------------

# kind -> JSON schema fragment
_KINDS = {
    "int": {"type": "integer"},
    "float": {"type": "number"},
    "bool": {"type": "boolean"},
    "str": {"type": "string"},
    "complex": {"oneOf": [{"type": "number"}, {"type": "string"},
                          {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]},
    "json": {},
}
_KINDS["complex_list"] = {"type": "array", "items": _KINDS["complex"]}
_KINDS["int_list"] = {"type": "array", "items": {"type": "integer"}}
_KINDS["float_list"] = {"type": "array", "items": {"type": "number"}}

PARAMS = {
    "check-surface": {
        "samples": ("int", 200, "random surface points for the smoothness check"),
    },
    "lyapunov": {
        "n": ("int", 1000, "steps per trajectory"),
        "trials": ("int", 100, "independent trajectories"),
    },
    "expansion-cert": {
        "n0": ("int", 1, "convolution power of nu"),
        "mc_samples": ("int", 64, "words sampled per grid node"),
        "base": ("int", 32, "base points of the grid"),
        "directions": ("int", 16, "tangent directions per base point"),
    },
    "fibration-report": {
        "projection": ("int", 1, "fibration index i in 1..3"),
        "w": ("complex_list", ["0.3+0.2j", "-0.7+0.4j", "1.1-0.5j"], "base points (JSON list or comma list)"),
    },
    "nt-locus": {
        "projection": ("int", 1, "fibration index i"),
        "center": ("complex", "0", "region center"),
        "radius": ("float", 0.3, "region radius"),
        "grid": ("int", 21, "grid points per side"),
    },
    "torsion-fibers": {
        "projection": ("int", 1, "fibration index i"),
        "N": ("int", 2, "torsion order"),
        "center": ("complex", "0", "region center"),
        "radius": ("float", 0.5, "region radius"),
        "grid": ("int", 9, "grid points per side"),
    },
    "finite-orbits": {
        "N": ("int", 2, "torsion order"),
        "g": ("int", 1, "fibration of the first parabolic"),
        "h": ("int", 2, "fibration of the second parabolic"),
        "grid": ("int", 7, "grid points per side in each region"),
        "min_radius": ("float", 0.15, "smallest disk of the automatic region cover"),
        "box": ("float_list", [-3.0, 3.0, -3.0, 3.0], "base box (re_lo, re_hi, im_lo, im_hi)"),
        "dyn_tol": ("float", 1e-8, "dynamic residual bound for accepted points"),
        "cap": ("int", 1000, "orbit enumeration cap per candidate"),
    },
    "classify-orbit": {
        "point": ("json", None, "point as [[u,v] x 3] with complex entries as [re, im]"),
        "candidates": ("str", None, "finite-orbits summary.json to read the point from"),
        "index": ("int", 0, "candidate index when reading from --candidates"),
        "cap": ("int", 1000, "orbit enumeration cap"),
        "word_budget": ("int", 400, "stabilizer words to examine"),
    },
    "margulis-drift": {
        "target": ("str", "real-locus", "linear | torus3 | real-locus | finite-orbit"),
        "mats": ("json", None, "linear target: list of square matrices"),
        "point": ("json", None, "finite-orbit target: a point of the orbit"),
        "gamma": ("float", 0.5, "torus3 target: contraction along z"),
        "probs": ("float_list", [0.3, 0.3, 0.2, 0.2], "torus3 target: weights of g, h, g^-1, h^-1"),
        "levels": ("float_list", [4.0, 6.0, 8.0], "probe levels u = -log d"),
        "probes": ("int", 32, "probes per level"),
        "steps": ("int", 1, "convolution power of nu"),
        "mc_samples": ("int", 256, "exact below this many atoms, Monte Carlo above"),
    },
    "volume": {
        "n": ("int", 100_000, "Monte Carlo samples"),
        "real": ("bool", False, "area measure of the real locus instead of the complex volume"),
        "boxes": ("int", 20, "random boxes for the invariance test (0 to skip)"),
    },
    "equidistribute": {
        "n_list": ("int_list", [1000, 10_000, 100_000], "path lengths of the trend report"),
        "null_n": ("int", 5000, "i.i.d. volume samples of the null test"),
        "n_ref": ("int", 100_000, "reference Monte Carlo samples"),
        "volume_n": ("int", 100_000, "samples of the volume normalizer"),
    },
    "kummer-gen": {
        "g2": ("complex", "4", "Weierstrass g2"),
        "g3": ("complex", "0", "Weierstrass g3"),
        "fit_samples": ("int", 200, "sampled points of the fit"),
        "flat_samples": ("int", 200, "samples of the lifted-involution check"),
    },
    "perturb-sweep": {
        "t": ("float_list", [0.0, 0.001, 0.01, 0.1], "perturbation sizes"),
        "n": ("int", 500, "Lyapunov steps per trajectory"),
        "trials": ("int", 50, "Lyapunov trajectories"),
    },
    "torus3-demo": {
        "gamma": ("float", 0.5, "contraction along z"),
        "probs": ("float_list", [0.3, 0.3, 0.2, 0.2], "weights of g, h, g^-1, h^-1"),
        "n": ("int", 10_000, "steps per trajectory"),
        "trials": ("int", 200, "trajectories"),
        "n0": ("int", 6, "convolution power for the tangent certificate"),
        "directions": ("int", 64, "directions of the certificate grid"),
    },
    "hitting-times": {
        "action": ("json", None, "permutations of F, one list per generator"),
        "point": ("json", None, "alternatively a surface point whose finite orbit gives the action"),
        "trials": ("int", 100_000, "walks"),
        "basepoint": ("int", 0, "element of F to return to"),
        "cap": ("int", 1000, "orbit enumeration cap"),
    },
}

HELP = {
    "check-surface": "smoothness and fiber-containment check, singular fibers of each projection",
    "lyapunov": "top Lyapunov exponent of the random walk",
    "expansion-cert": "uniform expansion certificate on a grid",
    "fibration-report": "periods, j-invariant and translation numbers on chosen fibers",
    "nt-locus": "non-twisting points of a parabolic in a disk",
    "torsion-fibers": "fibers where a parabolic has finite order N",
    "finite-orbits": "finite-orbit candidates from two torsion-fiber families",
    "classify-orbit": "stabilizer type and expansion verdict of a finite orbit",
    "margulis-drift": "drift of u = -log d(x, target) on probe sets",
    "volume": "normalizer of the invariant volume and the invariance test",
    "equidistribute": "null test and trajectory trend of the discrepancy",
    "kummer-gen": "fitted Kummer surface with its 16 nodes (writes kummer.json)",
    "perturb-sweep": "Lyapunov exponent along a perturbation of the surface",
    "torus3-demo": "drift toward the invariant torus versus tangent expansion",
    "hitting-times": "return times of the walk on a finite set",
}

NEEDS_SURFACE = {"check-surface", "lyapunov", "expansion-cert", "fibration-report", "nt-locus", "torsion-fibers",
                 "finite-orbits", "classify-orbit", "margulis-drift", "volume", "equidistribute", "perturb-sweep",
                 "hitting-times"}


def config_schema() -> dict:
    complex_ = _KINDS["complex"]
    surface = {
        "type": "object",
        "oneOf": [
            {"required": ["coefficients"]},
            {"required": ["file"]},
            {"required": ["kummer"]},
            {"required": ["random"]},
        ],
        "properties": {
            "coefficients": {"type": "array", "minItems": 27, "maxItems": 27, "items": complex_},
            "file": {"type": "string"},
            "kummer": {"type": "object", "properties": {"g2": complex_, "g3": complex_}, "required": ["g2", "g3"],
                       "additionalProperties": False},
            "random": {"type": "object", "properties": {"seed": {"type": "integer"}, "real": {"type": "boolean"}},
                       "additionalProperties": False},
        },
        "additionalProperties": False,
    }
    props = {
        "schema_version": {"const": SCHEMA_VERSION},
        "surface": surface,
        "nu": {"type": "string"},
        "seed": {"type": "integer"},
        "workers": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
    }
    for cmd, table in PARAMS.items():
        props[cmd] = {
            "type": "object",
            "properties": {k: _KINDS[kind] for k, (kind, _, _) in table.items()},
            "additionalProperties": False,
        }
    return {"type": "object", "properties": props, "additionalProperties": False}


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        return complex(v.replace(" ", "").replace("i", "j"))
    return complex(v)


def _cjson(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _flag_value(kind, text):
    """Parse a command-line flag value into its JSON form."""
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            return text.lower() in ("1", "true", "yes")
        if kind in ("str", "complex"):
            return text
        if kind == "json":
            return json.loads(text)
        items = json.loads(text) if text.strip().startswith("[") else text.split(",")
        if kind == "int_list":
            return [int(v) for v in items]
        if kind == "float_list":
            return [float(v) for v in items]
        return [v if isinstance(v, (list, str)) else str(v) for v in items]
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {text!r} as {kind}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override its values)")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--workers", type=int, help="parallel worker cap (default 1)")
    common.add_argument("--out", help="output directory (default runs/<subcommand>)")
    common.add_argument("--surface", help="surface JSON file (coefficients or a kummer-gen model)")
    common.add_argument("--nu", help="'uniform', 'delta:12' or 'w1:p1,w2:p2,...'")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser = argparse.ArgumentParser(
        prog="wehlerlab",
        description="Random dynamics on Wehler K3 surfaces.",
        epilog=EXIT_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for cmd, table in PARAMS.items():
        sp = sub.add_parser(cmd, parents=[common], help=HELP[cmd], description=HELP[cmd], epilog=EXIT_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        for key, (kind, default, text) in table.items():
            sp.add_argument("--" + key.replace("_", "-"), dest="p_" + key, metavar=kind.upper(),
                            help=f"{text} (default {default})")
    return parser


def resolve_config(args) -> dict:
    """Merge file values, flags and defaults into one validated config."""
    cfg: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(cfg)
    cfg.setdefault("schema_version", SCHEMA_VERSION)
    for key in ("seed", "workers", "out", "nu"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.surface:
        cfg["surface"] = {"file": args.surface}
    section = dict(cfg.get(args.command, {}))
    for key, (kind, default, _) in PARAMS[args.command].items():
        val = getattr(args, "p_" + key)
        if val is not None:
            section[key] = _flag_value(kind, val)
        elif key not in section and default is not None:
            section[key] = default
    cfg[args.command] = section
    cfg.setdefault("seed", 0)
    cfg.setdefault("workers", 1)
    cfg.setdefault("nu", "uniform")
    cfg.setdefault("out", str(Path("runs") / args.command))
    if args.command in NEEDS_SURFACE:
        cfg.setdefault("surface", {"random": {"seed": cfg["seed"], "real": True}})
    try:
        jsonschema.validate(cfg, config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config schema violation at {where}: {exc.message}") from exc
    try:
        DEFAULT.replace(**cfg.get("tolerances", {}))
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_surface(spec: dict) -> geo.SurfaceCoeffs:
    if "coefficients" in spec:
        return geo.SurfaceCoeffs(np.array([_complex(v) for v in spec["coefficients"]]).reshape(3, 3, 3))
    if "file" in spec:
        path = Path(spec["file"])
        if not path.exists():
            raise FileNotFoundError(f"surface file not found: {path}")
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"surface file is not valid JSON: {exc}") from exc
        if isinstance(obj, dict) and "coefficients" not in obj:
            obj = obj.get("surface") or obj.get("result", {}).get("surface")
        if not isinstance(obj, dict) or "coefficients" not in obj:
            raise ConfigError(f"{path} holds no surface coefficients")
        return geo.SurfaceCoeffs.from_json(obj)
    if "kummer" in spec:
        curve = km.EllipticCurve(_complex(spec["kummer"]["g2"]), _complex(spec["kummer"]["g3"]))
        return km.kummer_coeffs(curve, seed=0).coeffs
    r = spec["random"]
    return geo.SurfaceCoeffs.random(seed=r.get("seed", 0), real=r.get("real", True))


def _point(c, obj) -> geo.SurfacePoint:
    try:
        H = np.array([[_complex(u), _complex(v)] for u, v in obj])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed point {obj!r}") from exc
    if H.shape != (3, 2):
        raise ConfigError("a point needs three [u, v] pairs")
    return geo.SurfacePoint.from_array(c, H)


def _require(section, key, cmd):
    if section.get(key) is None:
        raise ConfigError(f"{cmd} needs '{key}'")
    return section[key]


# ---------------------------------------------------------------------------
# subcommands: each returns (result, {table name: (header, rows)}, extra files)
# ---------------------------------------------------------------------------


def run_check_surface(c, p, cfg):
    rep = geo.w0_check(c, n_samples=p["samples"], seed=cfg["seed"])
    fibers = {str(i): fib.singular_fibers(c, fib.ParabolicSpec.default(i)).to_json() for i in (1, 2, 3)}
    return {"w0": rep.to_json(), "singular_fibers": fibers}, {}, {}


def run_lyapunov(c, p, cfg):
    res = rw.lyapunov_top(c, _nu(cfg), n=p["n"], trials=p["trials"], seed=cfg["seed"], workers=cfg["workers"])
    rows = [[k, f"{v:.17g}"] for k, v in enumerate(res.per_trial)]
    return res.to_json(), {"trials": (["trial", "estimate"], rows)}, {}


def run_expansion_cert(c, p, cfg):
    cert = rw.expansion_certificate(c, _nu(cfg), n0=p["n0"], grid_spec={"base": p["base"], "directions": p["directions"]},
                                    mc_samples=p["mc_samples"], seed=cfg["seed"], workers=cfg["workers"])
    return cert.to_json(), {}, {}


def run_fibration_report(c, p, cfg):
    spec = fib.ParabolicSpec.default(p["projection"])
    sing = fib.singular_fibers(c, spec)
    rows, fibers = [], []
    for w in p["w"]:
        fa = fib.translation_number(c, spec, _complex(w), seed=cfg["seed"])
        j = fib.j_invariant(fib.reduce_tau(fa.tau)[0])
        fibers.append({**fa.to_json(), "j": _cjson(j)})
        wz = _complex(w)
        rows.append([f"{wz.real:.17g}", f"{wz.imag:.17g}", f"{fa.tau.real:.17g}", f"{fa.tau.imag:.17g}",
                     f"{j.real:.17g}", f"{j.imag:.17g}", f"{fa.T[0]:.17g}", f"{fa.T[1]:.17g}",
                     f"{fa.diagnostics['basepoint_defect']:.3e}"])
    header = ["w_re", "w_im", "tau_re", "tau_im", "j_re", "j_im", "T1", "T2", "basepoint_defect"]
    return {"projection": p["projection"], "singular_fibers": sing.to_json(), "fibers": fibers}, {"fibers": (header, rows)}, {}


def run_nt_locus(c, p, cfg):
    spec = fib.ParabolicSpec.default(p["projection"])
    rep = fib.nt_locus(c, spec, fib.Region(_complex(p["center"]), p["radius"]), grid_n=p["grid"])
    return rep.to_json(), {}, {}


def run_torsion_fibers(c, p, cfg):
    spec = fib.ParabolicSpec.default(p["projection"])
    found = fib.torsion_fibers(c, spec, p["N"], fib.Region(_complex(p["center"]), p["radius"]), grid_n=p["grid"])
    rows = [[f"{f.w.real:.17g}", f"{f.w.imag:.17g}", *map(str, f.target), f"{f.dynamic_residual:.3e}"] for f in found]
    return {"fibers": [f.to_json() for f in found]}, {"fibers": (["w_re", "w_im", "k1", "k2", "dynamic_residual"], rows)}, {}


def run_finite_orbits(c, p, cfg):
    g, h = fib.ParabolicSpec.default(p["g"]), fib.ParabolicSpec.default(p["h"])
    box = tuple(p["box"])
    regions = (orb.cover_regions(c, g, box, p["min_radius"]), orb.cover_regions(c, h, box, p["min_radius"]))
    rep = orb.finite_orbit_candidates(c, g, h, p["N"], regions=regions, grid_n=p["grid"], dyn_tol=p["dyn_tol"])
    sizes = [len(orb.orbit_enumerate(c, q, cap=p["cap"])) for q in rep.points]
    out = rep.to_json()
    out["orbit_sizes"] = sizes
    rows = []
    for k, q in enumerate(rep.points):
        t = geo.chart_coord(q.h)
        rows.append([k, *(f"{v:.17g}" for z in t for v in (z.real, z.imag)), sizes[k]])
    header = ["index", "x_re", "x_im", "y_re", "y_im", "z_re", "z_im", "orbit_size"]
    return out, {"candidates": (header, rows)}, {}


def run_classify_orbit(c, p, cfg):
    if p.get("point") is not None:
        x = _point(c, p["point"])
    else:
        path = Path(_require(p, "candidates", "classify-orbit"))
        if not path.exists():
            raise FileNotFoundError(f"candidates file not found: {path}")
        pts = json.loads(path.read_text())["result"]["points"]
        if not 0 <= p["index"] < len(pts):
            raise ConfigError(f"index {p['index']} out of range ({len(pts)} candidates)")
        x = _point(c, pts[p["index"]])
    orbit = orb.orbit_enumerate(c, x, cap=p["cap"])
    if not orbit.complete:
        raise orb.OrbitError(f"orbit exceeds cap {p['cap']}")
    fo = orb.classify_finite_orbit(c, orbit, word_budget=p["word_budget"], seed=cfg["seed"], nu=_nu(cfg))
    out = fo.to_json()
    out["verified_witnesses"] = bool(fo.classification.kind == "non_elementary" and verify_non_elementary(fo.classification))
    return out, {}, {}


def run_margulis_drift(c, p, cfg):
    kind = p["target"]
    nu = _nu(cfg)
    if kind == "linear":
        model = rw.LinearModel(tuple(np.array(m, dtype=float) for m in _require(p, "mats", "margulis-drift")))
        target = orb.LinearFixedPoint(model)
        if "nu" not in cfg or cfg["nu"] == "uniform":
            nu = rw.NuMeasure.uniform(model.n_gens)
    elif kind == "torus3":
        params = rw.Torus3Params(gamma=p["gamma"], probs=tuple(p["probs"]))
        target, nu = orb.Torus3Target(params), params.nu()
    elif kind == "real-locus":
        target = orb.RealLocusTarget(c)
    elif kind == "finite-orbit":
        orbit = orb.orbit_enumerate(c, _point(c, _require(p, "point", "margulis-drift")))
        target = orb.FiniteOrbitTarget(c, orbit.points)
    else:
        raise ConfigError(f"unknown target {kind!r}")
    spec = {"levels": p["levels"], "probes": p["probes"], "steps": p["steps"]}
    res = orb.margulis_drift(target, nu, spec, mc_samples=p["mc_samples"], seed=cfg["seed"])
    rows = [[f"{u:.17g}", f"{m:.17g}", f"{s:.17g}"] for u, m, s in zip(res.levels, res.max_delta, res.stderr)]
    return res.to_json(), {"levels": (["level", "max_delta", "stderr"], rows)}, {}


def run_volume(c, p, cfg):
    vm = ms.volume_model(c, n=p["n"], seed=cfg["seed"], real=p["real"])
    out = {"volume": vm.to_json()}
    tables = {}
    if p["boxes"] > 0:
        rng = np.random.default_rng(cfg["seed"] + 1)
        boxes = [ms.Box.random(rng) for _ in range(p["boxes"])]
        rows, tests = [], {}
        for i in (1, 2, 3):
            res = ms.invariance_test(c, i, boxes, n=p["n"], seed=cfg["seed"] + 1 + i, real=p["real"])
            tests[str(i)] = res
            rows += [[i, b, f"{r['mass_A']:.17g}", f"{r['mass_preimage']:.17g}", f"{r['se_difference']:.17g}",
                      int(r["within_3sigma"])] for b, r in enumerate(res)]
        out["invariance"] = tests
        out["all_within_3sigma"] = all(r["within_3sigma"] for res in tests.values() for r in res)
        tables["invariance"] = (["involution", "box", "mass_A", "mass_preimage", "se_difference", "within_3sigma"], rows)
    return out, tables, {}


def run_equidistribute(c, p, cfg):
    seed = cfg["seed"]
    vm = ms.volume_model(c, n=p["volume_n"], seed=seed, real=True)
    null = ms.equidistribution_stat(ms.sample_from_volume(vm, p["null_n"], seed=seed + 1), vm, seed=seed + 2,
                                    n_ref=p["n_ref"])
    x0 = geo.random_point(c, seed=seed + 3, real=True)
    trend = ms.equidistribution_trend(vm, _nu(cfg), x0, p["n_list"], seed=seed + 4, n_ref=p["n_ref"])
    out = {"null_test": {"summary": null.summary, "passes_3sigma": bool(null.summary <= 3.0 * _bonferroni(len(null.names)))},
           "null_detail": null.to_json(), "trend": trend, "volume": vm.to_json()}
    rows = [[r["n"], f"{r['summary']:.17g}", f"{r['median_normalized']:.17g}"] for r in trend["rows"]]
    return out, {"trend": (["n", "summary", "median_normalized"], rows)}, {}


def _bonferroni(m: int) -> float:
    """Factor turning a 3 sigma per-test bound into a family-wise bound over m tests."""
    p_one = 2 * norm.sf(3.0)
    return float(norm.isf(p_one / (2 * m)) / 3.0)


def run_kummer_gen(c, p, cfg):
    curve = km.EllipticCurve(_complex(p["g2"]), _complex(p["g3"]))
    model = km.kummer_coeffs(curve, n_fit_samples=p["fit_samples"], seed=cfg["seed"])
    km.flat_generators(model, n_samples=p["flat_samples"], seed=cfg["seed"] + 1)
    model_json = model.to_json()
    return ({"n_nodes": len(model.nodes), "fit_residual": model.fit_residual,
             "holdout_residual": model.holdout_residual, "symmetry_defect": model.symmetry_defect,
             "nodes": model_json["nodes"], "flat_check": model.flat_check, "model_file": "kummer.json"},
            {}, {"kummer.json": model_json})


def run_perturb_sweep(c, p, cfg):
    rng = np.random.default_rng(cfg["seed"])
    direction = rng.standard_normal((3, 3, 3))
    rows, out = [], []
    for t in p["t"]:
        ct = km.perturb_family(c, direction, t)
        res = rw.lyapunov_top(ct, _nu(cfg), n=p["n"], trials=p["trials"], seed=cfg["seed"], workers=cfg["workers"])
        out.append({"t": t, **res.to_json()})
        rows.append([f"{t:.17g}", f"{res.estimate:.17g}", f"{res.stderr:.17g}", res.discarded])
    return {"direction_seed": cfg["seed"], "sweep": out}, {"sweep": (["t", "lyapunov", "stderr", "discarded"], rows)}, {}


def run_torus3_demo(c, p, cfg):
    params = rw.Torus3Params(gamma=p["gamma"], probs=tuple(p["probs"]))
    res = rw.torus3_simulate(params, n=p["n"], trials=p["trials"], seed=cfg["seed"], n0=p["n0"],
                             directions=p["directions"], workers=cfg["workers"])
    res["expansion_near_Y"] = res["expansion_near_Y"].to_json()
    return res, {}, {}


def run_hitting_times(c, p, cfg):
    if p.get("action") is not None:
        action = p["action"]
    else:
        x = _point(c, _require(p, "point", "hitting-times"))
        orbit = orb.orbit_enumerate(c, x, cap=p["cap"])
        if not orbit.complete:
            raise orb.OrbitError(f"orbit exceeds cap {p['cap']}")
        action = orbit.perm.tolist()
    res = rw.hitting_time_stats(action, _nu(cfg), basepoint=p["basepoint"], trials=p["trials"], seed=cfg["seed"])
    return res, {}, {}


RUNNERS = {
    "check-surface": run_check_surface,
    "lyapunov": run_lyapunov,
    "expansion-cert": run_expansion_cert,
    "fibration-report": run_fibration_report,
    "nt-locus": run_nt_locus,
    "torsion-fibers": run_torsion_fibers,
    "finite-orbits": run_finite_orbits,
    "classify-orbit": run_classify_orbit,
    "margulis-drift": run_margulis_drift,
    "volume": run_volume,
    "equidistribute": run_equidistribute,
    "kummer-gen": run_kummer_gen,
    "perturb-sweep": run_perturb_sweep,
    "torus3-demo": run_torus3_demo,
    "hitting-times": run_hitting_times,
}


def _nu(cfg) -> rw.NuMeasure:
    try:
        return rw.NuMeasure.parse(cfg["nu"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad nu spec {cfg['nu']!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays, complex as [re, im], non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(obj.real)), _clean(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_outputs(out_dir: Path, cmd: str, cfg: dict, result, tables: dict, extra: dict) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {k: v for k, v in cfg.items() if k != "out"}
    header = {"artifact_version": __version__, "command": cmd, "seed": cfg["seed"], "config": echo}
    files = {"summary.json": _dump({**header, "result": result})}
    for name, obj in extra.items():
        files[name] = _dump({**header, **obj})
    for name, (cols, rows) in tables.items():
        buf = io.StringIO()
        buf.write(f"# artifact_version: {__version__}\n# seed: {cfg['seed']}\n")
        buf.write("# config: " + json.dumps(_clean(echo), sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        w.writerows(rows)
        files[f"{name}.csv"] = buf.getvalue()
    listing = []
    for name in sorted(files):
        data = files[name].encode()
        (out_dir / name).write_bytes(data)
        listing.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
    (out_dir / "manifest.json").write_text(_dump({**header, "out": str(out_dir), "files": listing}))
    return [f["name"] for f in listing] + ["manifest.json"]


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        p = cfg[args.command]
        with override(cfg.get("tolerances", {})):
            c = load_surface(cfg["surface"]) if "surface" in cfg else None
            result, tables, extra = RUNNERS[args.command](c, p, cfg)
        names = write_outputs(Path(cfg["out"]), args.command, cfg, result, tables, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, ArithmeticError) as exc:
        print(f"precondition failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    print(f"{args.command}: wrote {', '.join(names)} to {cfg['out']}")
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))
