"""Regenerate tests/fixtures. Deterministic; rerunning rewrites identical files."""
import json
import sys
from pathlib import Path

import numpy as np

from sheafntk import io as sio
from sheafntk.ntk import gntk_reference, ntk_linear, relative_frobenius
from sheafntk.sheaf import Graph, constant_sheaf, diffusion_operator, laplacian_of, signed_sheaf
from sheafntk.synthetic import bridged_triangles, two_block_sbm

SBM_SEED = 0
FEATURE_SEED = 100
SBM_TEST_NODES = [0, 1, 10, 11]


def write_json(path: Path, obj):
    sio.atomic_write_text(path, sio.dumps_json(obj))


def sbm_fixture(out: Path, name: str, p_in: float, p_out: float):
    d = out / name
    g, y = two_block_sbm(10, p_in, p_out, SBM_SEED)
    X = np.random.default_rng(FEATURE_SEED).standard_normal((20, 4))
    sio.save_sheaf(constant_sheaf(g), d / "sheaf.json")
    sio.save_features(X, d / "features.csv")
    sio.atomic_write_text(d / "labels.txt", "".join(f"{int(v)}\n" for v in y))
    nodes = list(range(20))
    write_json(d / "manifest.json", {
        "sheaf_file": "sheaf.json", "feature_file": "features.csv", "labels_file": "labels.txt",
        "train_nodes": [v for v in nodes if v not in SBM_TEST_NODES], "test_nodes": SBM_TEST_NODES,
    })
    write_json(d / "manifest_all.json", {
        "sheaf_file": "sheaf.json", "feature_file": "features.csv", "labels_file": "labels.txt",
        "train_nodes": nodes, "test_nodes": [],
    })


def graph_dataset(out: Path):
    """Triangle-rich versus triangle-free graphs on six nodes, constant features."""
    d = out / "graphs"
    rng = np.random.default_rng(7)
    graphs = [
        (bridged_triangles(), 1),
        (Graph(6, ((0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5), (0, 5))), 1),
        (Graph(6, ((0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (0, 3), (1, 4))), 1),
        (Graph(6, ((0, 1), (1, 2), (0, 2), (2, 3), (2, 4), (3, 4), (4, 5))), 1),
        (Graph(6, tuple((i, (i + 1) % 6) for i in range(6))), -1),
        (Graph(6, tuple((i, i + 1) for i in range(5))), -1),
        (Graph(6, ((0, 1), (0, 2), (0, 3), (0, 4), (0, 5))), -1),
        (Graph(6, ((0, 3), (0, 4), (1, 4), (1, 5), (2, 5), (2, 3))), -1),
    ]
    items = []
    for i, (g, label) in enumerate(graphs):
        sio.save_sheaf(constant_sheaf(g), d / f"g{i}.json")
        sio.save_features(np.abs(rng.standard_normal((6, 2))) + 0.5, d / f"g{i}.csv")
        items.append({"id": f"g{i}", "sheaf_file": f"g{i}.json", "feature_file": f"g{i}.csv", "label": label})
    write_json(d / "manifest.json", items)
    write_json(d / "duplicate.json", [items[0], dict(items[0], id="g0_copy", label=-1)])


def small_graphs(out: Path):
    k2 = Graph(2, ((0, 1),))
    k22 = Graph(4, ((0, 2), (0, 3), (1, 2), (1, 3)))
    paw = Graph(4, ((0, 1), (1, 2), (0, 2), (2, 3)))
    sio.save_sheaf(constant_sheaf(k2), out / "k2.json")
    sio.save_sheaf(constant_sheaf(k22), out / "k22.json")
    sio.save_sheaf(signed_sheaf(k22, 1, [-1] * 4), out / "k22_signed.json")
    sio.save_sheaf(constant_sheaf(paw), out / "paw.json")
    sio.save_features(np.array([[1.0, 0.5], [-0.3, 1.2], [0.8, -0.7], [0.1, 0.4]]), out / "paw.csv")
    cycle30 = Graph(30, tuple((i, (i + 1) % 30) for i in range(30)))
    sio.save_sheaf(constant_sheaf(cycle30), out / "cycle30.json")


def golden(out: Path):
    """ntk_linear on the paw fixture, L=1, cross-checked against the graph-only reference."""
    paw = sio.load_sheaf(out / "paw.json")
    X = sio.load_features(out / "paw.csv")
    op = diffusion_operator(laplacian_of(paw))
    theta = ntk_linear(op, op, X, X, 1).theta
    ref = gntk_reference(paw.graph, paw.graph, X, X, 1, "identity")
    err = relative_frobenius(theta, ref)
    if err > 1e-12:
        sys.exit(f"golden kernel disagrees with the reference ({err:.3e})")
    sio.write_matrix(theta, out / "paw_linear_L1.csv")


def main(out: Path):
    small_graphs(out)
    sbm_fixture(out, "sbm_homophilic", 0.5, 0.05)
    sbm_fixture(out, "sbm_heterophilic", 0.05, 0.5)
    graph_dataset(out)
    golden(out)


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "tests" / "fixtures")
