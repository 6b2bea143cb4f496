import json
import os

from gswlab import cli


def write_cfg(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_malformed_config_exit2(tmp_path):
    cfg = write_cfg(
        tmp_path,
        "bad.json",
        {
            "experiment": "target-check",
            "geometry": {"dims": [4, 4, 4, 4], "h": -1.0},
            "params": {},
        },
    )
    out = tmp_path / "out"
    os.environ["GSWLAB_OUT"] = str(out)
    try:
        assert cli.run("target-check", cfg) == 2
    finally:
        del os.environ["GSWLAB_OUT"]
    assert not out.exists()  # no outputs on validation failure


def test_unknown_key_rejected(tmp_path):
    cfg = write_cfg(
        tmp_path,
        "bad2.json",
        {"experiment": "target-check", "params": {}, "bogus": 1},
    )
    assert cli.run("target-check", cfg) == 2


def test_target_check_runs(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(
        tmp_path,
        "tc.json",
        {
            "experiment": "target-check",
            "seed": 7,
            "output_dir": str(out),
            "params": {"samples": 25},
        },
    )
    assert cli.run("target-check", cfg) == 0
    report = json.loads((out / "target_check.json").read_text())
    assert report["passed"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == 0
    assert manifest["experiment"] == "target-check"
    assert "target_check.json" in manifest["outputs"]
    assert len(manifest["config_sha256"]) == 64


def _solve_cfg(tmp_path, out, max_iter=20):
    return write_cfg(
        tmp_path,
        f"solve_{max_iter}.json",
        {
            "experiment": "solve",
            "seed": 3,
            "output_dir": str(out),
            "geometry": {"dims": [2, 2, 2, 2], "h": 0.4, "topology": "torus"},
            "group": "u1",
            "params": {
                "init": {"kind": "random", "amplitude": 0.3},
                "perturb_amplitude": 1e-3,
                "tol": 1e-11,
                "max_iter": max_iter,
            },
        },
    )


def test_solve_and_determinism(tmp_path):
    out = tmp_path / "s1"
    cfg = _solve_cfg(tmp_path, out)
    assert cli.run("solve", cfg) == 0
    first = (out / "solver_diagnostics.csv").read_bytes()
    snap1 = (out / "solution_snapshot.json").read_bytes()
    assert cli.run("solve", cfg) == 0
    assert (out / "solver_diagnostics.csv").read_bytes() == first
    assert (out / "solution_snapshot.json").read_bytes() == snap1


def test_failure_path_writes_manifest(tmp_path):
    out = tmp_path / "s2"
    cfg = write_cfg(
        tmp_path,
        "hard.json",
        {
            "experiment": "solve",
            "seed": 5,
            "output_dir": str(out),
            "geometry": {"dims": [2, 2, 2, 2], "h": 0.4, "topology": "torus"},
            "group": "u1",
            "params": {
                "init": {"kind": "random", "amplitude": 3.0},
                "perturb_amplitude": 2.0,
                "tol": 1e-14,
                "max_iter": 1,
            },
        },
    )
    assert cli.run("solve", cfg) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == 3


def test_env_override(tmp_path):
    out_env = tmp_path / "env_out"
    cfg = write_cfg(
        tmp_path,
        "tc2.json",
        {
            "experiment": "target-check",
            "seed": 1,
            "output_dir": str(tmp_path / "ignored"),
            "params": {"samples": 5},
        },
    )
    os.environ["GSWLAB_OUT"] = str(out_env)
    try:
        assert cli.run("target-check", cfg) == 0
    finally:
        del os.environ["GSWLAB_OUT"]
    assert (out_env / "manifest.json").exists()
    assert not (tmp_path / "ignored").exists()


def test_deform_cli(tmp_path):
    out = tmp_path / "d"
    cfg = write_cfg(
        tmp_path,
        "deform.json",
        {
            "experiment": "deform",
            "seed": 2,
            "output_dir": str(out),
            "geometry": {"dims": [2, 2, 2, 2], "h": 0.4, "topology": "torus"},
            "group": "u1",
            "params": {"init": {"kind": "pure_gauge_constant"}, "export_matrix": True},
        },
    )
    assert cli.run("deform", cfg) == 0
    rep = json.loads((out / "cohomology.json").read_text())
    assert rep["index_consistent"]
    assert rep["complex_norm"] <= 1e-9
    assert (out / "elliptic_op.txt").exists()


def test_frequency_cli(tmp_path):
    out = tmp_path / "f"
    cfg = write_cfg(
        tmp_path,
        "freq.json",
        {
            "experiment": "frequency",
            "seed": 0,
            "output_dir": str(out),
            "geometry": {"dims": [17, 17, 17, 17], "h": 0.0625, "topology": "box"},
            "params": {"field": "z1", "r_cells": [4, 6, 8]},
        },
    )
    assert cli.run("frequency", cfg) == 0
    lines = (out / "profile_000.csv").read_text().splitlines()
    assert lines[0] == "r,F,f,N,sigma,kappa,f_prime_check,eq14_check"
    n_col = [float(l.split(",")[3]) for l in lines[1:]]
    assert all(abs(x - 1.0) <= 0.05 for x in n_col)


def test_sequence_cli_and_main(tmp_path):
    out = tmp_path / "q"
    cfg = write_cfg(
        tmp_path,
        "seq.json",
        {
            "experiment": "sequence",
            "seed": 0,
            "output_dir": str(out),
            "geometry": {"dims": [8, 8, 8, 8], "h": 0.125, "topology": "torus"},
            "params": {"n_terms": 4},
        },
    )
    assert cli.main(["sequence", "--config", cfg]) == 0
    flags = json.loads((out / "sequence_flags.json").read_text())
    assert not flags["empty_xprime"]


def test_kuranishi_cli(tmp_path):
    out = tmp_path / "k"
    cfg = write_cfg(
        tmp_path,
        "kur.json",
        {
            "experiment": "kuranishi",
            "seed": 1,
            "output_dir": str(out),
            "geometry": {"dims": [2, 2, 2, 2], "h": 0.5, "topology": "box"},
            "group": "u1",
            "params": {"init": {"kind": "fueter_z1"}, "n_samples": 3, "radius": 5e-3},
        },
    )
    assert cli.run("kuranishi", cfg) == 0
    rep = json.loads((out / "kuranishi.json").read_text())
    assert rep["regular"] and rep["smooth"]
    assert all(s["converged"] for s in rep["samples"])


def test_curvature_cli_fixture(tmp_path):
    out = tmp_path / "c"
    cfg = write_cfg(
        tmp_path,
        "curv.json",
        {
            "experiment": "curvature",
            "seed": 1,
            "output_dir": str(out),
            "params": {"mode": "fixture", "n_samples": 1, "oracle": True, "oracle_eps": 1e-3},
        },
    )
    assert cli.run("curvature", cfg) == 0
    lines = (out / "curvature_samples.csv").read_text().splitlines()
    assert lines[0] == ",".join(
        ("sample_id", "K_C", "bracket_norm_sq", "K_B", "gauss_terms", "K_M", "oracle_K", "rel_err")
    )
    vals = lines[1].split(",")
    assert abs(float(vals[5]) - 4.0) <= 1e-9  # K_M of the fixture level set
    assert float(vals[7]) <= 1e-6
