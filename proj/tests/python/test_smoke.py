import math

import numpy as np
import pytest

import linkdiff


def four_bar():
    g = linkdiff.MechanismGraph.motor((0.0, 0.0), (0.3, 0.0))
    g.add_grounded(1.0, 0.0)
    g.add_revolute(0.6, 0.6, 1, 2)
    return g


def test_simulate_conserves_link_lengths():
    g = four_bar()
    traj = linkdiff.simulate(g, n_angles=50)
    assert traj.shape == (50, 4, 2)
    for a, b in g.edges():
        rest = np.linalg.norm(traj[0, a] - traj[0, b])
        lengths = np.linalg.norm(traj[:, a] - traj[:, b], axis=1)
        assert np.max(np.abs(lengths - rest)) < 1e-9
    crank = np.linalg.norm(traj[:, 1] - traj[:, 0], axis=1)
    assert np.allclose(crank, 0.3, atol=1e-12)


def test_validate_reports_locking():
    assert linkdiff.validate(four_bar())["ok"]
    g = linkdiff.MechanismGraph.motor((0.0, 0.0), (0.5, 0.0))
    g.add_grounded(1.0, 0.0)
    g.add_revolute(0.75, math.sqrt(0.3**2 - 0.25**2), 1, 2)
    report = linkdiff.validate(g)
    assert report["topology_ok"] and not report["kinematics_ok"]
    assert report["failing_node"] == 3
    with pytest.raises(linkdiff.KinematicError):
        linkdiff.simulate(g)


def test_feature_and_json_round_trip():
    g = four_bar()
    rows = g.features()
    assert rows.shape == (20, 24)
    assert rows[4, 0] == 0.0 and rows[4, 1] == -1.0
    assert linkdiff.MechanismGraph.from_features(rows[:4]) == g
    assert linkdiff.MechanismGraph.from_json(g.to_json()) == g


def test_chamfer_matches_brute_force():
    rng = np.random.default_rng(3)
    a = rng.uniform(-1, 1, (30, 2))
    b = rng.uniform(-1, 1, (17, 2))
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    expected = d.min(axis=1).mean() + d.min(axis=0).mean()
    assert linkdiff.chamfer_distance(a, b) == pytest.approx(expected, rel=1e-12)
    assert linkdiff.chamfer_distance([[0, 0]], [[3, 4]]) == 10.0


def test_dataset_is_deterministic_and_valid():
    first = linkdiff.generate_dataset(8, seed=5)
    second = linkdiff.generate_dataset(8, seed=5)
    assert first == second
    assert all(4 <= g.node_count <= 8 and linkdiff.validate(g)["ok"] for g in first)


def test_train_synthesize_evaluate(tmp_path):
    dataset = str(tmp_path / "ds.jsonl")
    checkpoint = str(tmp_path / "model.ckpt")
    linkdiff.write_dataset(dataset, linkdiff.generate_dataset(40, seed=2))
    losses = linkdiff.train(dataset, checkpoint, steps=3, batch_size=8, seed=1)
    assert len(losses) == 3 and all(math.isfinite(x) for x in losses)

    target = linkdiff.coupler_curve(four_bar())
    outcome = linkdiff.synthesize(target, checkpoint, strategy="node-retry", k=3, n_max=6, seed=4)
    assert outcome["samples"] >= 1
    assert outcome["valid"] == linkdiff.validate(outcome["graph"])["ok"]
    again = linkdiff.synthesize(target, checkpoint, strategy="node-retry", k=3, n_max=6, seed=4)
    assert again["graph"] == outcome["graph"]

    report = linkdiff.evaluate(dataset, checkpoint, runs=2, n_eval=3, k=2, seed=9)
    assert set(report) >= {"config", "cells", "summary", "diversity"}
    assert len(report["cells"]) == 6
    for cell in report["cells"]:
        assert cell["chamfer_n"] == cell["successes"] <= 3
