#!/usr/bin/env python3
"""Write one example JSON config per experiment into configs/."""

import json
import os
import sys

CONFIGS = {
    "target_check.json": {
        "experiment": "target-check",
        "seed": 7,
        "output_dir": "out/target_check",
        "params": {"samples": 200},
    },
    "solve.json": {
        "experiment": "solve",
        "seed": 3,
        "output_dir": "out/solve",
        "geometry": {"dims": [3, 3, 3, 3], "h": 0.4, "topology": "torus"},
        "group": "u1",
        "params": {
            "init": {"kind": "random", "amplitude": 0.3},
            "perturb_amplitude": 1e-3,
            "tol": 1e-11,
            "max_iter": 20,
        },
    },
    "deform.json": {
        "experiment": "deform",
        "seed": 2,
        "output_dir": "out/deform",
        "geometry": {"dims": [4, 4, 4, 4], "h": 0.25, "topology": "torus"},
        "group": "u1",
        "params": {"init": {"kind": "pure_gauge_constant"}, "export_matrix": False},
    },
    "kuranishi.json": {
        "experiment": "kuranishi",
        "seed": 1,
        "output_dir": "out/kuranishi",
        "geometry": {"dims": [3, 3, 3, 3], "h": 0.3333333333333333, "topology": "box"},
        "group": "u1",
        "params": {"init": {"kind": "fueter_z1"}, "n_samples": 20, "radius": 5e-3},
    },
    "curvature_fixture.json": {
        "experiment": "curvature",
        "seed": 1,
        "output_dir": "out/curvature_fixture",
        "params": {"mode": "fixture", "n_samples": 2, "oracle": True, "oracle_eps": 1e-3},
    },
    "curvature_lattice.json": {
        "experiment": "curvature",
        "seed": 5,
        "output_dir": "out/curvature_lattice",
        "geometry": {"dims": [3, 3, 3, 3], "h": 0.3333333333333333, "topology": "box"},
        "group": "u1",
        "params": {
            "mode": "lattice",
            "init": {"kind": "fueter_z1"},
            "n_samples": 1,
            "oracle": True,
            "oracle_eps": 3e-3,
        },
    },
    "frequency.json": {
        "experiment": "frequency",
        "seed": 0,
        "output_dir": "out/frequency",
        "geometry": {"dims": [33, 33, 33, 33], "h": 0.03125, "topology": "box"},
        "params": {
            "field": "z1",
            "r_cells": [6, 8, 10, 12, 14, 16],
            "probe": True,
            "probe_eps0": 3.0,
        },
    },
    "sequence.json": {
        "experiment": "sequence",
        "seed": 0,
        "output_dir": "out/sequence",
        "geometry": {"dims": [24, 24, 24, 24], "h": 0.041666666666666664, "topology": "torus"},
        "params": {"n_terms": 6, "c1": 4.0},
    },
}


def main(target_dir="configs"):
    os.makedirs(target_dir, exist_ok=True)
    for name, payload in CONFIGS.items():
        path = os.path.join(target_dir, name)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
        print("wrote", path)


if __name__ == "__main__":
    main(*sys.argv[1:])
