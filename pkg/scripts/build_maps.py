"""Regenerate the bundled map fixtures in src/patternnav/data/maps/."""

import json
import math
import pathlib

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "patternnav" / "data" / "maps"


def write(name, nodes, edges, title):
    doc = {
        "name": title,
        "nodes": [{"id": i, "x": round(x, 3), "y": round(y, 3)} for i, (x, y) in enumerate(nodes)],
        "edges": [{"id": i, "u": u, "v": v} for i, (u, v) in enumerate(edges)],
    }
    (OUT / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(name, len(nodes), len(edges))


def grid(cols, rows, width, height):
    nodes = [(c * width / (cols - 1), r * height / (rows - 1)) for r in range(rows) for c in range(cols)]
    idx = lambda c, r: r * cols + c
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((idx(c, r), idx(c + 1, r)))
            if r + 1 < rows:
                edges.append((idx(c, r), idx(c, r + 1)))
    return nodes, edges, idx


def prediction_map():
    # 3x3 grid plus one diagonal
    nodes, edges, idx = grid(3, 3, 10.0, 10.0)
    edges.append((idx(0, 0), idx(1, 1)))
    write("grid9", nodes, edges, "9-node prediction map")


def small_office():
    # two lobbies joined by four parallel corridors
    nodes = [(0.0, 10.0), (25.0, 10.0)]
    edges = []
    corridors = [(10.0, 3), (4.0, 4), (16.0, 4), (20.0, 3)]
    for y, k in corridors:
        ids = []
        for q in range(k):
            x = 5.0 + 15.0 * q / (k - 1) if k > 1 else 12.5
            if k == 3:
                x = 6.25 * (q + 1)
            ids.append(len(nodes))
            nodes.append((x, y))
        edges.append((0, ids[0]))
        edges.extend(zip(ids[:-1], ids[1:]))
        edges.append((ids[-1], 1))
    write("small_office", nodes, edges, "small office 25 x 20 m")


def medium_office():
    nodes, edges, idx = grid(5, 4, 30.0, 30.0)
    edges.remove((idx(2, 1), idx(2, 2)))
    write("medium_office", nodes, edges, "medium office 30 x 30 m")


def large_office():
    nodes, edges, idx = grid(6, 3, 50.0, 30.0)
    for c in range(5):
        edges.append((idx(c, 0), idx(c + 1, 1)))
        edges.append((idx(c, 1), idx(c + 1, 2)))
    write("large_office", nodes, edges, "large office 50 x 30 m")


def hospital():
    nodes, edges, idx = grid(10, 4, 125.0, 35.0)
    # remove every other vertical rung between the outer rows
    drop = [(idx(c, 0), idx(c, 1)) for c in (1, 3, 5, 7)] + \
           [(idx(c, 2), idx(c, 3)) for c in (2, 4, 6, 8)] + \
           [(idx(c, 1), idx(c, 2)) for c in (1, 4, 7)]
    for e in drop:
        edges.remove(e)
    write("hospital", nodes, edges, "hospital 125 x 35 m")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    prediction_map()
    small_office()
    medium_office()
    large_office()
    hospital()
