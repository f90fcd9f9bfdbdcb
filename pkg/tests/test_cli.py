import json

import numpy as np
import pytest

from wehlerlab import cli
from wehlerlab import geometry as geo
from wehlerlab import kummer as km


def _run(tmp_path, *argv):
    out = tmp_path / "out"
    code = cli.run([*argv, "--out", str(out)])
    return code, out


@pytest.fixture(scope="module")
def kummer_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("kummer")
    assert cli.run(["kummer-gen", "--out", str(out)]) == 0
    return out / "kummer.json"


def test_determinism_across_output_dirs(tmp_path):
    a = cli.run(["expansion-cert", "--n0", "2", "--seed", "7", "--base", "8", "--out", str(tmp_path / "a")])
    b = cli.run(["expansion-cert", "--n0", "2", "--seed", "7", "--base", "8", "--out", str(tmp_path / "b")])
    assert a == b == 0
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_manifest_lists_files_with_hashes(tmp_path):
    code, out = _run(tmp_path, "lyapunov", "--n", "50", "--trials", "4")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    names = {f["name"] for f in man["files"]}
    assert names == {"summary.json", "trials.csv"}
    assert man["seed"] == 0 and man["config"]["lyapunov"]["n"] == 50
    csv_text = (out / "trials.csv").read_text()
    assert csv_text.startswith("# artifact_version")
    assert "# seed: 0" in csv_text


def test_kummer_gen_lists_sixteen_nodes(kummer_file):
    summary = json.loads((kummer_file.parent / "summary.json").read_text())["result"]
    assert summary["n_nodes"] == 16
    assert summary["fit_residual"] < 1e-8


def test_finite_orbits_and_classification_on_kummer_file(tmp_path, kummer_file):
    code, out = _run(tmp_path, "finite-orbits", "--surface", str(kummer_file), "--box=-0.3,0.3,0.7,1.3")
    assert code == 0
    res = json.loads((out / "summary.json").read_text())["result"]
    assert res["points"] and set(res["orbit_sizes"]) <= {2, 8}

    curve = km.EllipticCurve(4, 0)
    prim = [P for P in curve.torsion_points(4) if P is not km.INF and abs(P[1]) > 1e-6]
    oracle = np.stack([km.phi(curve, a, b) for a in prim for b in prim])
    for pt in res["points"]:
        H = np.array([[complex(*u), complex(*v)] for u, v in pt])
        assert np.min(geo.fs_distance_arr(geo.normalize_pairs(H)[None], oracle)) < 1e-8

    code, out2 = cli.run(["classify-orbit", "--surface", str(kummer_file), "--candidates",
                          str(out / "summary.json"), "--index", "0", "--out", str(tmp_path / "cls")]), tmp_path / "cls"
    assert code == 0
    cls = json.loads((out2 / "summary.json").read_text())["result"]
    assert cls["classification"]["kind"] == "non_elementary"
    assert cls["verified_witnesses"]


def test_exit_code_missing_config(tmp_path):
    code, _ = _run(tmp_path, "lyapunov", "--config", str(tmp_path / "nope.json"))
    assert code == cli.EXIT_MISSING


def test_exit_code_unknown_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema_version": 1, "bogus": 1}))
    code, _ = _run(tmp_path, "lyapunov", "--config", str(cfg))
    assert code == cli.EXIT_CONFIG


def test_exit_code_bad_flag_value(tmp_path):
    code, _ = _run(tmp_path, "lyapunov", "--n", "many")
    assert code == cli.EXIT_CONFIG


def test_exit_code_precondition(tmp_path):
    # a constant form cuts out no surface at all
    a = np.zeros((3, 3, 3))
    a[0, 0, 0] = 1.0
    surf = tmp_path / "s.json"
    surf.write_text(json.dumps({"coefficients": [[v, 0.0] for v in a.ravel()]}))
    code, _ = _run(tmp_path, "fibration-report", "--surface", str(surf))
    assert code == cli.EXIT_PRECONDITION


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema_version": 1, "seed": 3, "lyapunov": {"n": 20, "trials": 2}}))
    code, out = _run(tmp_path, "lyapunov", "--config", str(cfg), "--trials", "3")
    assert code == 0
    echo = json.loads((out / "summary.json").read_text())["config"]
    assert echo["seed"] == 3 and echo["lyapunov"] == {"n": 20, "trials": 3}
    assert "out" not in echo


def test_help_documents_exit_codes(capsys):
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["--help"])
    assert "exit codes" in capsys.readouterr().out
