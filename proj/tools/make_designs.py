#!/usr/bin/env python3
"""Regenerates the bundled robot designs in designs/."""
import json
import os
import sys

CELL = 0.05
GROUND = 0.1
STIFFNESS = 1.0e4


def lattice(cells, actuated_edge, x0=0.0, y0=GROUND, cell=CELL):
    """Nodes at cell corners; every cell gets 4 edges and 2 diagonals (shared edges once)."""
    corners = sorted({(i + di, j + dj) for i, j in cells for di in (0, 1) for dj in (0, 1)},
                     key=lambda c: (c[1], c[0]))
    index = {c: k for k, c in enumerate(corners)}
    springs, seen = [], set()
    for i, j in sorted(cells, key=lambda c: (c[1], c[0])):
        c00, c10, c01, c11 = (i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)
        for kind, p, q in (("h", c00, c10), ("h", c01, c11), ("v", c00, c01), ("v", c10, c11),
                           ("d", c00, c11), ("d", c10, c01)):
            key = tuple(sorted((index[p], index[q])))
            if key in seen:
                continue
            seen.add(key)
            springs.append({"a": key[0], "b": key[1], "actuated": bool(actuated_edge(kind, p, q, (i, j)))})
    nodes = [[x0 + cx * cell, y0 + cy * cell] for cx, cy in corners]
    return nodes, springs


def mass_spring(name, cells, actuated_edge):
    nodes, springs = lattice(cells, actuated_edge)
    return {"name": name, "kind": "mass_spring", "node_mass": 1.0, "default_stiffness": STIFFNESS,
            "nodes": nodes, "springs": springs}


def leg_vertical(leg_cells):
    return lambda kind, p, q, cell: kind == "v" and cell in leg_cells


def square():
    return {"name": "square", "kind": "mass_spring", "node_mass": 1.0, "default_stiffness": STIFFNESS,
            "nodes": [[0.0, GROUND], [0.1, GROUND], [0.0, GROUND + 0.1], [0.1, GROUND + 0.1]],
            "springs": [{"a": 0, "b": 1, "actuated": True}, {"a": 2, "b": 3, "actuated": True},
                        {"a": 0, "b": 2, "actuated": True}, {"a": 1, "b": 3, "actuated": True},
                        {"a": 0, "b": 3, "actuated": True}, {"a": 1, "b": 2, "actuated": True}]}


def quadruped():
    legs = {(0, 0), (0, 1), (3, 0), (3, 1)}
    body = {(i, 2) for i in range(4)}
    return mass_spring("quadruped", legs | body, leg_vertical(legs))


def stool():
    legs = {(c, r) for c in (0, 2, 4) for r in (0, 1)}
    body = {(i, 2) for i in range(5)}
    return mass_spring("stool", legs | body, leg_vertical(legs))


def huge_stool():
    legs = {(c, r) for c in (0, 3, 6) for r in (0, 1)}
    body = {(i, r) for i in range(7) for r in (2, 3)}
    return mass_spring("huge_stool", legs | body, lambda kind, p, q, cell: kind == "v")


def mpm_particles(rects, spacing, x0=0.0, y0=GROUND):
    pts = []
    for (rx, ry, w, h) in rects:
        nx, ny = round(w / spacing), round(h / spacing)
        for jy in range(ny):
            for ix in range(nx):
                pts.append([x0 + rx + (ix + 0.5) * spacing, y0 + ry + (jy + 0.5) * spacing])
    return pts


def mpm_block():
    spacing = 0.1 / 32
    pts = mpm_particles([(0.0, 0.0, 4 * spacing, 4 * spacing)], spacing, x0=0.05, y0=0.2)
    left = [k for k, p in enumerate(pts) if p[0] < 0.05 + 2 * spacing]
    right = [k for k in range(len(pts)) if k not in left]
    return {"name": "mpm_block", "kind": "mpm", "node_mass": 1.0, "nodes": pts,
            "actuator_groups": [left, right]}


def mpm_quadruped():
    spacing = 0.1 / 32
    leg_w, leg_h, body_w, body_h = 0.05, 0.1, 0.2, 0.05
    rects = [(0.0, 0.0, leg_w, leg_h), (body_w - leg_w, 0.0, leg_w, leg_h), (0.0, leg_h, body_w, body_h)]
    pts = mpm_particles(rects, spacing)
    groups = [[], [], [], []]
    for k, (x, y) in enumerate(pts):
        if y >= GROUND + leg_h:
            continue
        leg = 0 if x < leg_w else 1
        half = 0 if (x - (0.0 if leg == 0 else body_w - leg_w)) < leg_w / 2 else 1
        groups[2 * leg + half].append(k)
    return {"name": "mpm_quadruped", "kind": "mpm", "node_mass": 1.0, "nodes": pts, "actuator_groups": groups}


def main(out):
    os.makedirs(out, exist_ok=True)
    for d in (square(), quadruped(), stool(), huge_stool(), mpm_block(), mpm_quadruped()):
        with open(os.path.join(out, d["name"] + ".json"), "w") as f:
            json.dump(d, f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "designs"))
