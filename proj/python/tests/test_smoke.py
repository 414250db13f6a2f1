import math

import numpy as np
import pytest

import epigraph as eg


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis /= np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * k @ k


def test_quaternion_matches_rodrigues():
    q = eg.Quaternion.from_axis_angle([0.3, -1.0, 0.5], 0.8)
    assert np.allclose(q.matrix(), rotation_about([0.3, -1.0, 0.5], 0.8), atol=1e-12)
    assert q.w >= 0


def test_classical_pose_on_noiseless_scene():
    pose = eg.Pose(eg.Quaternion.from_axis_angle([0, 1, 0], 0.1), [1.0, 0.0, 0.2])
    corr, inlier = eg.generate_scene(pose, seed=3, n_points=80)
    assert len(corr) == 80 and all(inlier)
    x1, x2 = eg.normalized_points(corr)
    est = eg.classical_relative_pose(x1, x2)
    assert eg.dre(est.rotation_matrix(), pose.rotation_matrix()) < 1e-6
    assert eg.dte(est.translation, pose.translation) < 1e-6


def test_graph_and_model_prediction():
    pose = eg.Pose(eg.Quaternion.from_axis_angle([0, 1, 0], 0.05), [1.0, 0.0, 0.0])
    corr, _ = eg.generate_scene(pose, seed=1, n_points=60, outlier_fraction=0.3)
    g = eg.build_graph(corr, k=5)
    assert g.num_nodes == len(g.kept_indices)
    assert g.node_features.shape == (g.num_nodes, 6)
    edges = g.edges
    assert edges.shape[1] == 3 and np.all(edges[:, 2] > 0)
    for preset in eg.presets():
        model = eg.Model(preset, hidden=8, seed=2)
        out = model.predict(g)
        assert abs(np.linalg.norm(out.rotation.vec()) - 1.0) < 1e-12
        assert np.allclose(model.predict(g).translation, out.translation)


def test_model_checkpoint_round_trip(tmp_path):
    model = eg.Model("GIN_SumPool", hidden=8, seed=5)
    path = tmp_path / "m.ckpt"
    model.save(path)
    corr, _ = eg.generate_scene(eg.Pose(translation=[1.0, 0, 0]), seed=2, n_points=40)
    g = eg.build_graph(corr)
    assert np.array_equal(eg.Model.load(path).predict(g).translation, model.predict(g).translation)


def test_errors_carry_codes():
    with pytest.raises(eg.Error) as info:
        eg.parse_config('{"bogus": 1}')
    assert info.value.code == "config"
    with pytest.raises(eg.Error):
        eg.Quaternion(0, 0, 0, 0).normalized()


def test_config_overrides():
    import json

    cfg = json.loads(eg.parse_config("{}", ["train.epochs=3"]))
    assert cfg["train"]["epochs"] == 3
