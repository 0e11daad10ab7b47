import copy

import numpy as np
import pytest

from fricfem.campaigns import (BUILTIN_NAMES, adaptive_config, builtin_config,
                               config_hash, initial_mesh, load_config,
                               newton_config, problem_factory, reference_mesh,
                               save_config, validate_config)


def test_builtin_names_validate():
    for name in BUILTIN_NAMES:
        cfg = builtin_config(name)
        validate_config(cfg)


def test_unknown_builtin_raises():
    with pytest.raises(ValueError):
        builtin_config("nonsense")


def test_config_round_trip(tmp_path):
    cfg = builtin_config("coulomb-rect")
    path = tmp_path / "c.json"
    save_config(cfg, str(path))
    back = load_config(str(path))
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)


def test_config_hash_sensitivity():
    a = builtin_config("tresca-rect")
    b = copy.deepcopy(a)
    b["friction"]["s"] = 6e-3
    assert config_hash(a) != config_hash(b)
    assert len(config_hash(a)) == 12


def test_validation_rejects_gap():
    cfg = builtin_config("tresca-rect")
    cfg["geometry"]["gap"] = 0.1
    with pytest.raises(ValueError, match="geometry.gap"):
        validate_config(cfg)


def test_validation_requires_contact_side():
    cfg = builtin_config("tresca-rect")
    cfg["geometry"]["sides"]["bottom"] = "N0"
    with pytest.raises(ValueError):
        validate_config(cfg)


def test_validation_rejects_nonfinite_load():
    cfg = builtin_config("tresca-rect")
    cfg["loads"]["body_force"] = [0.0, float("nan")]
    with pytest.raises(ValueError, match="body_force"):
        validate_config(cfg)


def test_initial_mesh_labels():
    cfg = builtin_config("tresca-rect")
    mesh = initial_mesh(cfg)
    for e in mesh.boundary_edges:
        mid = mesh.vertices[mesh.edges[e]].mean(axis=0)
        lab = str(mesh.edge_labels[e])
        if mid[1] < 1e-12:
            assert lab == "C"
        elif mid[1] > 1.0 - 1e-12:
            assert lab == "D"
        elif mid[0] < 0.0:
            assert lab == "N0"
        else:
            assert lab == "N1"


def test_square_lit_geometry():
    cfg = builtin_config("square-lit")
    mesh = initial_mesh(cfg)
    assert mesh.vertices[:, 0].min() == 0.0
    assert mesh.vertices[:, 0].max() == 1.0
    for e in mesh.edges_with_label("C"):
        assert np.allclose(mesh.vertices[mesh.edges[e]][:, 0], 1.0)
    p = problem_factory(cfg)(mesh, degree=1)
    assert p.material.E == 1e6
    assert p.friction.kind == "coulomb"
    assert p.nitsche.gamma0 == pytest.approx(1e6)


def test_gamma0_factor_and_absolute():
    cfg = builtin_config("tresca-rect")
    p = problem_factory(cfg)(initial_mesh(cfg), degree=1)
    assert p.nitsche.gamma0 == pytest.approx(10.0)
    cfg2 = copy.deepcopy(cfg)
    cfg2["nitsche"] = {"gamma0": 3.5}
    p2 = problem_factory(cfg2)(initial_mesh(cfg2), degree=1)
    assert p2.nitsche.gamma0 == pytest.approx(3.5)


def test_reference_mesh_resolution():
    cfg = builtin_config("tresca-rect")
    cfg["reference"]["h"] = 0.25
    mesh = reference_mesh(cfg)
    # extent 2 x 1 at h = 1/4 gives an 8 x 4 grid
    assert mesh.num_triangles == 2 * 8 * 4


def test_derived_configs():
    cfg = builtin_config("tresca-rect")
    ncfg = newton_config(cfg)
    assert ncfg.stopping == "estimator"
    assert ncfg.gamma_lin == pytest.approx(0.01)
    acfg = adaptive_config(cfg, "adaptive")
    assert acfg.mode == "adaptive"
    assert acfg.theta_mark == pytest.approx(0.062)
    ucfg = adaptive_config(cfg, "uniform")
    assert ucfg.mode == "uniform"
    assert ucfg.max_levels == cfg["uniform"]["max_levels"]
