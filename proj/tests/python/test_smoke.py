import math
import os
import pathlib

import numpy as np
import pytest

import hdivmm

EXAMPLES = pathlib.Path(os.environ.get("HDIVMM_EXAMPLES_DIR", pathlib.Path(__file__).parents[2] / "examples_cfg"))


def make_problem(n=4, flux=True):
    mesh = hdivmm.Mesh.unit_square(n)
    nc = mesh.num_cells
    cx = mesh.centroids[:, 0]
    flux_channels = [hdivmm.flux_channel(list(range(0, nc, 3)), np.diag([2.0, 1.0]))] if flux else []
    scalar_channels = [
        hdivmm.scalar_channel(list(range(nc // 2)), 3.0),
        hdivmm.scalar_channel([1, 2], 1.0, kernel=np.array([[1.0, 0.5], [0.5, 1.0]])),
    ]
    return mesh, hdivmm.Problem(
        mesh,
        np.eye(2),
        np.ones(nc),
        np.sin(math.pi * cx),
        np.full(nc, 1.5),
        epsilon1=1.2,
        flux_channels=flux_channels,
        scalar_channels=scalar_channels,
    )


def test_mesh_counts():
    mesh = hdivmm.Mesh.unit_square(3)
    assert (mesh.num_vertices, mesh.num_edges, mesh.num_cells) == (16, 33, 18)
    assert mesh.areas.sum() == pytest.approx(1.0, abs=1e-14)
    fine = mesh.refine()
    assert fine.num_cells == 72
    assert max(fine.parents) == 17


def test_forward_and_observe():
    mesh, p = make_problem()
    j, phi = p.forward(np.ones(mesh.num_cells))
    assert j.shape == (p.n1,) and phi.shape == (p.n2,)
    y = p.observe(j, phi)
    assert len(y["flux"]) == 1 and len(y["scalar"]) == 2
    assert np.allclose(y["scalar"][0], phi[: mesh.num_cells // 2])


def test_sigma_is_cost_and_duality():
    mesh, p = make_problem()
    nc = mesh.num_cells
    f = {"kind": "state", "l1": np.zeros((nc, 2)), "l2": mesh.centroids[:, 1]}
    sol = p.solve(f)
    assert sol["sigma"] ** 2 == pytest.approx(p.cost(f, sol["uhat"]), rel=1e-9)

    rng = np.random.default_rng(0)
    y = {k: [rng.standard_normal(v.shape) for v in sol["uhat"][k]] for k in ("flux", "scalar")}
    est, sigma = p.estimate(f, y)
    r = p.reconstruct(y)
    l_rec = float(np.dot(mesh.areas * f["l2"], r["phihat"]))
    assert est == pytest.approx(l_rec, rel=1e-9)
    assert sigma == sol["sigma"]

    g = {"kind": "rhs", "l0": np.ones(nc)}
    est_rhs, _ = p.estimate(g, y)
    assert est_rhs == pytest.approx(float(np.dot(mesh.areas, r["fhat"])), rel=1e-9)


def test_zero_weight_flux_channel_changes_nothing():
    mesh, p0 = make_problem(flux=False)
    nc = mesh.num_cells
    _, p1 = make_problem(flux=False)
    p1 = hdivmm.Problem(
        mesh,
        np.eye(2),
        np.ones(nc),
        np.sin(math.pi * mesh.centroids[:, 0]),
        np.full(nc, 1.5),
        epsilon1=1.2,
        flux_channels=[hdivmm.flux_channel([0, 1], np.zeros((2, 2)))],
        scalar_channels=[
            hdivmm.scalar_channel(list(range(nc // 2)), 3.0),
            hdivmm.scalar_channel([1, 2], 1.0, kernel=np.array([[1.0, 0.5], [0.5, 1.0]])),
        ],
    )
    f = {"kind": "state", "l2": np.ones(nc)}
    a, b = p0.solve(f), p1.solve(f)
    assert a["uhat"]["flux"] == []
    assert np.all(b["uhat"]["flux"][0] == 0.0)
    assert abs(a["sigma"] - b["sigma"]) <= 1e-12


def test_monte_carlo_worst_case():
    mesh, p = make_problem(n=3)
    r = p.monte_carlo({"kind": "rhs", "l0": np.ones(mesh.num_cells)}, "worst_case", trials=2000, seed=1, threads=2)
    assert r["policy"] == "WORST_CASE"
    assert abs(r["ratio"] - 1.0) <= 3.0 / math.sqrt(2000)


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        hdivmm.Mesh.unit_square(0)
    mesh = hdivmm.Mesh.unit_square(2)
    with pytest.raises(ValueError):
        hdivmm.Problem(mesh, np.eye(2), -np.ones(mesh.num_cells), np.zeros(mesh.num_cells), np.ones(mesh.num_cells))
    with pytest.raises(OSError):
        hdivmm.Mesh.from_triangle("missing.node", "missing.ele")


def test_run_cli(tmp_path):
    assert hdivmm.run("estimate", EXAMPLES / "estimate_zero.json", out=tmp_path) == 0
    lines = (tmp_path / "estimate.csv").read_text().splitlines()
    assert lines[0].startswith("# hdiv-minimax")
    assert lines[1:] == ["estimate,chat,sigma", "0,0,0"]
    assert hdivmm.run("forward", tmp_path / "missing.json") == 4
