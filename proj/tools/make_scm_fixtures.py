#!/usr/bin/env python3
"""Regenerate data/scm/*.json: discrete SCMs over the figure graphs with
seeded random conditional pmfs bounded away from zero."""
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "scm"


def row(rng, k):
    raw = [rng.uniform(0.2, 1.0) for _ in range(k)]
    s = sum(raw)
    p = [round(v / s, 6) for v in raw]
    p[-1] = round(1.0 - sum(p[:-1]), 6)
    return p


def scm(name, spec, seed):
    rng = random.Random(seed)
    card = {v[0]: len(v[2]) for v in spec}
    out = []
    for vname, role, values, parents, *tier in spec:
        rows = 1
        for p in parents:
            rows *= card[p]
        var = {"name": vname, "role": role, "values": values, "parents": parents,
               "cpt": [row(rng, len(values)) for _ in range(rows)]}
        if tier:
            var["tier"] = tier[0]
        out.append(var)
    body = ",\n    ".join(json.dumps(v) for v in out)
    (OUT / f"{name}.json").write_text(f'{{\n  "name": "{name}",\n  "variables": [\n    {body}\n  ]\n}}\n')


B = [0, 1]
FIXTURES = {
    "fig2a": [
        ("B1", "covariate", B, [], 0),
        ("U1", "latent", B, []),
        ("A", "exposure", B, ["B1"]),
        ("C1", "covariate", B, ["B1", "A"], 1),
        ("C2", "covariate", B, ["C1", "U1"], 1),
        ("R", "selection", B, ["A", "C2"]),
        ("Y", "outcome", [0, 1, 3], ["B1", "A", "U1"]),
    ],
    "fig2b": [
        ("U1", "latent", B, []),
        ("U2", "latent", B, []),
        ("B1", "covariate", B, ["U1"], 0),
        ("B2", "covariate", B, ["U1", "U2"], 0),
        ("A", "exposure", B, ["U1", "B1"]),
        ("R", "selection", B, ["A", "B2"]),
        ("Y", "outcome", [0, 1, 3], ["B1", "U2", "A"]),
    ],
    "fig2c": [
        ("U1", "latent", B, []),
        ("U2", "latent", B, []),
        ("A", "exposure", B, []),
        ("C1", "covariate", B, ["A", "U1", "U2"], 1),
        ("C2", "covariate", B, ["A"], 1),
        ("R", "selection", B, ["A", "C2", "U2"]),
        ("Y", "outcome", [0, 1, 3], ["A", "C2", "U1"]),
    ],
    "fig2d": [
        ("U1", "latent", B, []),
        ("U2", "latent", B, []),
        ("A", "exposure", B, []),
        ("C1", "covariate", B, ["A"], 1),
        ("C2", "covariate", B, ["A", "U1", "U2"], 1),
        ("R", "selection", B, ["A", "C1", "C2", "U2"]),
        ("Y", "outcome", [0, 1, 3], ["A", "C2", "U1"]),
    ],
    "fig3a": [
        ("W1", "covariate", B, [], 0),
        ("A", "exposure", B, ["W1"]),
        ("Z1", "covariate", B, ["A"], 1),
        ("Z2", "covariate", B, ["A", "Z1"], 1),
        ("R", "selection", B, ["Z1", "Z2"]),
        ("Y", "outcome", [0, 1, 3], ["W1", "A", "Z1", "Z2"]),
    ],
    "mar_toy": [
        ("W", "covariate", [0, 1, 2], [], 0),
        ("A", "exposure", B, ["W"]),
        ("R", "selection", B, ["W"]),
        ("Y", "outcome", [-1, 0, 2], ["W", "A"]),
    ],
}

if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for i, (name, spec) in enumerate(FIXTURES.items()):
        scm(name, spec, 1000 + i)
