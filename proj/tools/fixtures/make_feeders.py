#!/usr/bin/env python3
"""Regenerates the bundled feeder fixtures under data/feeders/.

Branch admittance blocks are the inverse of a per-mile series impedance
matrix (IEEE line configuration 601) scaled by segment length, restricted to
the phases shared by both terminals. Loads are constant-current draws at
0.9 power factor lagging.

    python3 tools/fixtures/make_feeders.py
"""

import cmath
import json
import math
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parents[2] / "data" / "feeders"

# Ohm per mile, configuration 601.
Z601 = np.array(
    [
        [0.3465 + 1.0179j, 0.1560 + 0.5017j, 0.1580 + 0.4236j],
        [0.1560 + 0.5017j, 0.3375 + 1.0478j, 0.1535 + 0.3849j],
        [0.1580 + 0.4236j, 0.1535 + 0.3849j, 0.3414 + 1.0348j],
    ]
)
V_LN = 2401.777
PHASE_INDEX = {"a": 0, "b": 1, "c": 2}
SHIFT = [0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0]
PF_ANGLE = math.acos(0.9)


def pair(z):
    return [float(np.real(z)), float(np.imag(z))]


def y_block(phases, miles):
    idx = [PHASE_INDEX[p] for p in "abc" if p in phases]
    z = Z601[np.ix_(idx, idx)] * miles
    y = np.linalg.inv(z)
    y = 0.5 * (y + y.T)
    full = np.zeros((3, 3), dtype=complex)
    for r, i in enumerate(idx):
        for c, j in enumerate(idx):
            full[i, j] = y[r, c]
    return [[pair(full[i, j]) for j in range(3)] for i in range(3)]


def slack_voltage():
    return [pair(cmath.rect(V_LN, SHIFT[k])) for k in range(3)]


def load_current(phases, amps):
    out = []
    for k, p in enumerate("abc"):
        if p in phases:
            out.append(pair(cmath.rect(amps, SHIFT[k] - PF_ANGLE)))
        else:
            out.append([0.0, 0.0])
    return out


def common(a, b):
    return "".join(p for p in "abc" if p in a and p in b)


def build(name, phases, edges, switches, observed, slack, load_amps, scenarios=None, merge=None):
    """edges: list of (from, to, miles)."""
    doc = {
        "format": "ppgn-feeder-v1",
        "name": name,
        "nodes": [{"id": i, "phases": phases[i]} for i in sorted(phases)],
        "branches": [
            {"from": a, "to": b, "y": y_block(common(phases[a], phases[b]), miles)}
            for a, b, miles in edges
        ],
        "switches": switches,
        "observed": observed,
        "slack": slack,
        "slack_voltage": slack_voltage(),
        "loads": [
            {"node": i, "current": load_current(phases[i], load_amps(i))}
            for i in sorted(phases)
            if i != slack
        ],
    }
    if scenarios:
        doc["scenarios"] = scenarios
    if merge:
        doc["label_merge"] = merge
    return doc


def feeder13():
    phases = {i: "abc" for i in range(1, 14)}
    phases.update({5: "bc", 6: "bc", 10: "ac", 11: "ac", 12: "ac"})
    edges = [
        (1, 2, 0.38), (2, 3, 0.09), (3, 4, 0.05), (2, 5, 0.09),
        (5, 6, 0.06), (2, 7, 0.38), (7, 8, 0.01), (8, 9, 0.09),
        (7, 10, 0.06), (10, 11, 0.06), (10, 12, 0.15), (7, 13, 0.19),
    ]
    switches = [{"name": "671-692", "branch": 6, "state": "closed"}]
    observed = [2, 4, 9, 11]
    return build("synthetic-13", phases, edges, switches, observed, 1,
                 lambda i: 4.0 + 2.0 * ((i * 7) % 5))


def feeder36():
    phases = {i: "abc" for i in range(1, 37)}
    for i in (20, 21, 22, 23):
        phases[i] = "ac"
    for i in (29, 30, 31, 32):
        phases[i] = "bc"
    tree = [
        (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 10),
        (3, 11), (11, 12), (12, 13), (13, 14),
        (5, 15), (15, 16), (16, 17), (15, 18), (18, 19),
        (7, 20), (20, 21), (21, 22), (22, 23),
        (9, 24), (24, 25), (25, 26), (24, 27), (27, 28),
        (10, 29), (29, 30), (30, 31), (31, 32),
        (2, 33), (33, 34), (34, 35), (35, 36),
    ]
    closed_loops = [(14, 5), (17, 6), (19, 8), (26, 10), (36, 4), (13, 33)]
    ties = [(23, 27), (32, 28)]
    lengths = [0.08, 0.12, 0.15, 0.1, 0.2, 0.06, 0.18, 0.11, 0.14, 0.09]
    edges = []
    for k, (a, b) in enumerate(tree + closed_loops + ties):
        edges.append((a, b, lengths[k % len(lengths)] * (2.5 if k >= len(tree) else 1.0)))
    base = len(tree)
    switches = [
        {"name": f"S{k + 1}", "branch": base + k, "state": "closed"}
        for k in range(len(closed_loops))
    ] + [
        {"name": f"S{len(closed_loops) + k + 1}", "branch": base + len(closed_loops) + k, "state": "open"}
        for k in range(len(ties))
    ]
    scenarios = {
        "close-7-8": [{"switch": 6, "state": "closed"}, {"switch": 7, "state": "closed"}],
        "open-1-6": [{"switch": k, "state": "open"} for k in range(6)],
        "open-1-3": [{"switch": k, "state": "open"} for k in range(3)],
    }
    observed = [2, 4, 6, 8, 10, 12, 14, 16, 19, 21, 23, 25, 28, 31, 35]
    return build("synthetic-36", phases, edges, switches, observed, 1,
                 lambda i: 2.0 + 1.5 * ((i * 5) % 4), scenarios, merge=[[33, 34]])


def fig3():
    # Void node 1 whose only physical neighbour (2) is also void.
    phases = {i: "abc" for i in range(1, 6)}
    edges = [(1, 2, 0.1), (2, 3, 0.1), (2, 4, 0.1), (3, 5, 0.1)]
    return build("fig3-chain", phases, edges, [], [3, 4, 5], 5, lambda i: 1.0)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for fname, doc in (("feeder13.json", feeder13()), ("feeder36.json", feeder36()),
                       ("fig3.json", fig3())):
        (OUT / fname).write_text(json.dumps(doc, indent=1) + "\n")
        print("wrote", OUT / fname)


if __name__ == "__main__":
    main()
