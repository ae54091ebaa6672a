import json

import numpy as np
import pytest

from squintce.estimators import BernoulliGaussianPrior, gmmv_amp
from squintce.lamp import (
    LampParams,
    NonFiniteLossError,
    TrainSchedule,
    gradient_check,
    init_params,
    lamp_dictionary,
    lamp_forward,
    layer_nmse_trace,
    load_checkpoint,
    loss_nmse,
    probe_problem,
    save_checkpoint,
    train_lamp,
)

FAST = TrainSchedule(steps_per_stage=15, check_gradients=False)


def cn(rng, *shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)


def toy(seed=0, n=40, G=12, V=24, K=4, N=10, L=2, noise=0.05):
    rng = np.random.default_rng(seed)
    D = cn(rng, K, N, V)
    A = np.einsum("kgn,knv->kgv", cn(rng, K, G, N), D) / np.sqrt(G * N)
    Hs = np.zeros((n, V, K), complex)
    for s in range(n):
        Hs[s, rng.choice(V, L, replace=False)] = cn(rng, L, K)
    Y = np.einsum("kgv,svk->sgk", A, Hs) + noise * cn(rng, n, G, K)
    H = np.einsum("knv,svk->snk", D, Hs)
    return Y, H, A, D


def test_init_params_structure():
    A = np.ones((3, 4, 5), complex)
    p = init_params(A, 2)
    assert p.shape == (2, 4, 5, 3)
    assert np.array_equal(p.b_mats[1], A)
    assert np.array_equal(p.g_maps[0], np.eye(3))
    assert not p.f_maps.any()
    assert p.gamma == 1e-3 and p.epsilon == 1.0
    with pytest.raises(ValueError):
        init_params(A[0], 2)
    with pytest.raises(ValueError):
        init_params(A, -1)


def test_param_validation():
    p = init_params(np.ones((2, 3, 4)), 1)
    with pytest.raises(ValueError):
        LampParams(p.b_mats, 0.0, 1.0, p.g_maps, p.f_maps)
    with pytest.raises(ValueError):
        LampParams(p.b_mats, 0.5, -1.0, p.g_maps, p.f_maps)
    with pytest.raises(ValueError):
        LampParams(p.b_mats, 0.5, 1.0, p.g_maps[:, :1], p.f_maps)


def test_zero_layers_returns_zero_estimate():
    Y, _, A, _ = toy(n=3)
    out = lamp_forward(Y, A, init_params(A, 0))
    assert out.iterates == []
    assert out.estimate.shape == (3, 24, 4) and not out.estimate.any()


def test_initial_network_equals_undamped_amp_iterates():
    Y, _, A, _ = toy(n=5)
    prior = BernoulliGaussianPrior(0.2, 0.8)
    out = lamp_forward(Y, A, init_params(A, 4, 0.2, 0.8))
    _, trace = gmmv_amp(Y, A, prior, 4, damping=1.0, return_trace=True)
    for h, state in zip(out.iterates, trace):
        assert np.linalg.norm(h - state.estimate) <= 1e-10 * np.linalg.norm(state.estimate)


def test_forward_layer_truncation_and_shape_checks():
    Y, _, A, _ = toy(n=2)
    p = init_params(A, 3, 0.1)
    assert np.allclose(lamp_forward(Y, A, p, layers=2).estimate, lamp_forward(Y, A, p).iterates[1])
    with pytest.raises(ValueError):
        lamp_forward(Y, A, p, layers=4)
    with pytest.raises(ValueError):
        lamp_forward(Y, A[:, :5], p)


def test_loss_examples():
    H = np.ones((2, 3, 4), complex)
    assert loss_nmse(H, H) == 0.0
    assert loss_nmse(np.zeros_like(H), H) == pytest.approx(1.0)
    assert loss_nmse(1.5 * H, H) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        loss_nmse(H[:1], H)
    with pytest.raises(ValueError):
        loss_nmse(H, np.zeros_like(H))


def test_layer_trace_starts_at_one():
    Y, H, A, D = toy(n=8)
    p = init_params(A, 3, 0.1)
    tr = layer_nmse_trace(Y, H, A, p, D)
    assert tr.shape == (4,) and tr[0] == 1.0
    first = lamp_forward(Y, A, p).iterates[0]
    assert tr[1] == pytest.approx(loss_nmse(np.einsum("knv,svk->snk", D, first), H))


@pytest.mark.parametrize("with_grid", [False, True])
def test_gradients_match_finite_differences(with_grid):
    report = gradient_check(*probe_problem(0, with_grid=with_grid))
    expected = {"B", "gamma", "epsilon", "G", "F"} | ({"c_d", "c_phi"} if with_grid else set())
    assert set(report) == expected
    assert max(report.values()) < 1e-4, report


def test_zero_steps_returns_init():
    Y, H, A, D = toy()
    res = train_lamp(Y, H, A, 2, TrainSchedule(steps_per_stage=0, check_gradients=False), dictionary=D, gamma0=0.1)
    init = init_params(A, 2, 0.1)
    assert np.array_equal(res.params.b_mats, init.b_mats)
    assert res.params.gamma == pytest.approx(init.gamma)


def test_training_reduces_loss_and_stages_never_regress():
    Y, H, A, D = toy()
    res = train_lamp(Y, H, A, 2, FAST, dictionary=D, gamma0=0.1)
    for start, end in res.stage_losses:
        assert end <= start
    before = layer_nmse_trace(Y, H, A, init_params(A, 2, 0.1), D)[-1]
    after = layer_nmse_trace(Y, H, A, res.params, D)[-1]
    assert after < before
    assert 0 < res.params.gamma < 1 and res.params.epsilon > 0
    assert {h["stage"] for h in res.history} == {1, 2}


def test_stage_one_only_touches_first_layer():
    Y, H, A, D = toy()
    res = train_lamp(Y, H, A, 1, FAST, dictionary=D, init=init_params(A, 1, 0.1))
    assert not np.array_equal(res.params.b_mats[0], A)
    # stage 1 of a deeper network optimises exactly the one-layer objective
    two = train_lamp(Y, H, A, 2, FAST, dictionary=D, gamma0=0.1)
    assert two.stage_losses[0][1] == pytest.approx(res.stage_losses[0][1], rel=1e-12)


def test_training_is_deterministic():
    Y, H, A, D = toy()
    a = train_lamp(Y, H, A, 2, FAST, seed=3, dictionary=D, gamma0=0.1)
    b = train_lamp(Y, H, A, 2, FAST, seed=3, dictionary=D, gamma0=0.1)
    assert np.array_equal(a.params.b_mats, b.params.b_mats)
    assert [h["loss"] for h in a.history] == [h["loss"] for h in b.history]


def test_training_runs_gradient_probe_first():
    Y, H, A, D = toy(n=10)
    res = train_lamp(Y, H, A, 1, TrainSchedule(steps_per_stage=2), dictionary=D, gamma0=0.1)
    assert res.gradient_report is not None and max(res.gradient_report.values()) < 1e-4


def test_non_finite_loss_aborts():
    Y, H, A, D = toy(n=4)
    Y = Y.copy()
    Y[0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLossError) as err:
        train_lamp(Y, H, A, 1, FAST, dictionary=D, gamma0=0.1)
    assert err.value.stage == 1 and err.value.step == 0


def test_validation_fallback_keeps_init_when_training_hurts():
    Y, H, A, D = toy(n=20, seed=1)
    Yv, Hv, _, _ = toy(n=20, seed=2)  # different operator: validation data from another problem
    res = train_lamp(Y, H, A, 1, FAST, dictionary=D, gamma0=0.1, Y_val=Yv, H_val=Hv)
    assert res.val_final <= res.val_initial


def test_learnable_grid_moves_and_reduces_loss():
    Y, H, op, params, _ = probe_problem(1, with_grid=True)
    res = train_lamp(Y, H, op, 2, FAST, init=params)
    assert not np.array_equal(res.params.grid[0], params.grid[0])
    assert np.all(res.params.grid[0] >= 1e-3)
    assert res.stage_losses[-1][1] < res.stage_losses[0][0]
    D = lamp_dictionary(op, res.params)
    assert D.shape == (2, 6, 8)
    with pytest.raises(ValueError):
        train_lamp(Y, H, op, 2, FAST)  # grid operator without init params


def test_grid_operator_matches_near_columns():
    from squintce.dictionary import near_columns
    import torch

    Y, H, op, params, _ = probe_problem(2, with_grid=True)
    with torch.no_grad():
        A, D = op.matrices(torch.tensor(params.grid[0]), torch.tensor(params.grid[1]))
    ref = near_columns(op.geometry, *params.grid)
    assert np.allclose(D.numpy(), ref)
    assert np.allclose(A.numpy(), op.composed @ ref / op.scale)


def test_checkpoint_roundtrip(tmp_path):
    _, _, _, params, _ = probe_problem(0, with_grid=True)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, TrainSchedule(), 7, "abc", extra={"measurement_scale": 2.0})
    back = load_checkpoint(path)
    assert back.shape == params.shape
    assert np.allclose(back.b_mats, params.b_mats, rtol=1e-6, atol=1e-7)
    assert np.allclose(back.f_maps, params.f_maps, rtol=1e-6, atol=1e-7)
    assert np.allclose(back.grid[0], params.grid[0], rtol=1e-6)
    meta = json.loads((tmp_path / "m.ckpt.json").read_text())
    assert meta["seed"] == 7 and meta["dataset_hash"] == "abc" and meta["measurement_scale"] == 2.0
    assert meta["schedule"]["optimizer"] == "adam"
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(ValueError, match="payload"):
        load_checkpoint(path)
    path.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_schedule_validation():
    with pytest.raises(ValueError):
        TrainSchedule(steps_per_stage=-1)
    with pytest.raises(ValueError):
        TrainSchedule(learning_rate=0)
    with pytest.raises(ValueError):
        TrainSchedule(optimizer="lbfgs")
