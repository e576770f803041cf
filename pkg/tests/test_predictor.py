import math

import mpmath
import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from mammopos.annotations import ViewAnnotation
from mammopos.geometry import Bounds, Segment
from mammopos.imaging import GrayImage
from mammopos.phantom import PhantomSpec, generate_case
from mammopos.predictor import (Architecture, CheckpointError, ContractError, EndpointVector,
                                RegressorModel, TrainConfig, evaluate_model, forward, load_checkpoint,
                                log_cosh, log_cosh_loss, loss_gradient, order_pnl, passthrough_predictor,
                                predict_native, save_checkpoint, split_indices, target_vector,
                                to_input_frame, torch_log_cosh_loss, train, training_target,
                                write_history)

from .helpers import loss_gradient_error, model_gradient_error, tiny_arch


def mp_log_cosh(d):
    with mpmath.workdps(50):
        return float(mpmath.log(mpmath.cosh(mpmath.mpf(float(d)))))


# -- loss ------------------------------------------------------------------------

def test_zero_residual():
    assert log_cosh_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert np.array_equal(loss_gradient([1.0, 2.0], [1.0, 2.0]), [0.0, 0.0])


def test_loss_examples_against_mpmath():
    assert log_cosh_loss([1.0], [0.0]) == pytest.approx(0.433780830, abs=1e-9)
    assert log_cosh_loss([1.0], [0.0]) == pytest.approx(mp_log_cosh(1.0), abs=1e-15)
    assert log_cosh_loss([10.0], [0.0]) == pytest.approx(10 - math.log(2), abs=1e-8)
    assert log_cosh_loss([10.0], [0.0]) == pytest.approx(mp_log_cosh(10.0), abs=1e-14)


def test_large_residuals_are_stable():
    v = log_cosh(np.array([800.0, -1e6]))
    assert np.all(np.isfinite(v))
    assert v[0] == pytest.approx(800 - math.log(2), abs=1e-12)


def test_loss_shape_mismatch():
    with pytest.raises(ValueError):
        log_cosh_loss([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        loss_gradient([1.0, 2.0], [1.0])


def test_gradient_saturates():
    g = loss_gradient([100.0, -100.0], [0.0, 0.0])
    assert g.tolist() == [-1.0, 1.0]


def test_loss_bracketing_on_grid():
    d = np.linspace(-20, 20, 40001)
    v = log_cosh(d)
    eps = 1e-15
    assert np.all(d ** 2 / 2 - d ** 4 / 12 <= v + eps)
    assert np.all(v <= d ** 2 / 2 + eps)
    assert np.all(v <= np.abs(d) + eps)
    assert np.all(v >= 0)


@given(st.floats(-50, 50))
def test_loss_matches_mpmath(d):
    assert abs(float(log_cosh(d)) - mp_log_cosh(d)) <= 1e-12


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
def test_torch_loss_matches_numpy(vals):
    y = np.array(vals)
    t = torch_log_cosh_loss(torch.tensor(y)[None], torch.zeros(1, len(vals), dtype=torch.float64))
    assert float(t) == pytest.approx(log_cosh_loss(y, np.zeros_like(y)), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_loss_gradient_finite_differences(seed):
    assert loss_gradient_error(seed) < 1e-6


@pytest.mark.parametrize("head", ["softargmax", "fc"])
def test_full_model_gradient_check(head):
    err, n = model_gradient_error(3, head)
    assert n > 100
    assert err < 1e-4


# -- endpoint vectors --------------------------------------------------------------

def mlo(pec=(200, 10, 180, 240), pnl=(50, 100, 210, 95), w=250, h=250):
    return ViewAnnotation("MLO", "L", Bounds(w, h), Segment.from_coords(*pnl), Segment.from_coords(*pec))


def test_endpoint_vector_validation():
    with pytest.raises(ValueError):
        EndpointVector((1.0,) * 7)
    with pytest.raises(ValueError):
        EndpointVector((1.0,) * 7 + (math.nan,))


def test_passthrough_returns_labels():
    ann = mlo()
    ev = passthrough_predictor(ann)
    assert ev.pec == ann.pec and ev.pnl == ann.pnl
    cc = ViewAnnotation("CC", "L", Bounds(250, 250), Segment.from_coords(100, 50, 0, 50))
    with pytest.raises(ContractError):
        passthrough_predictor(cc)


def test_target_orders_pec_top_first():
    ann = mlo(pec=(180, 240, 200, 10))
    ev = target_vector(ann)
    assert ev.pec.p0.y == 10
    assert training_target(ann).tolist() == [v / 250 for v in ev.values]


def test_order_pnl_puts_nipple_first():
    pec = Segment.from_coords(200, 0, 200, 249)
    pnl = Segment.from_coords(190, 100, 40, 100)
    assert order_pnl(pec, pnl).p0.x == 40
    assert order_pnl(pec, pnl.reversed()).p0.x == 40


def test_rescaled_vector():
    ev = EndpointVector((0, 0, 249, 249, 10, 20, 30, 40))
    back = ev.rescaled(Bounds(250, 250), Bounds(500, 1000)).rescaled(Bounds(500, 1000), Bounds(250, 250))
    assert np.allclose(back.values, ev.values, atol=1e-12)


# -- forward ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def fresh():
    return RegressorModel.create(seed=0)


def test_forward_deterministic(fresh):
    img = GrayImage(np.random.default_rng(0).random((250, 250)))
    a, b = forward(fresh, img), forward(fresh, img)
    assert a.values == b.values
    again = forward(RegressorModel.create(seed=0), img)
    assert again.values == a.values


def test_forward_finite_on_zeros(fresh):
    ev = forward(fresh, GrayImage(np.zeros((250, 250))))
    assert all(math.isfinite(v) for v in ev.values)
    assert all(-1e-6 <= v <= 249 + 1e-6 for v in ev.values)


def test_forward_contract(fresh):
    with pytest.raises(ContractError):
        forward(fresh, GrayImage(np.zeros((200, 250))))
    with pytest.raises(ContractError):
        forward(fresh, GrayImage(np.full((250, 250), 2.0)))


def test_predict_native_maps_back(fresh):
    img = GrayImage(np.random.default_rng(1).random((500, 400)) * 4000)
    ev = predict_native(fresh, img)
    assert all(0 <= p.x <= 400 and 0 <= p.y <= 500 for p in ev.points())


def test_fc_head_runs():
    m = RegressorModel.create(Architecture(head="fc", channels=(4, 8, 8, 8)), seed=1)
    ev = forward(m, GrayImage(np.zeros((250, 250))))
    assert len(ev.values) == 8


def test_separate_heads_have_two_trunks():
    shared = RegressorModel.create(tiny_arch())
    split = RegressorModel.create(Architecture(**{**tiny_arch().__dict__, "separate_heads": True}))
    n = lambda m: sum(p.numel() for p in m.net.parameters())
    assert n(split) > n(shared)
    assert split.net.pnl_trunk is not None


def test_architecture_validation():
    with pytest.raises(ValueError):
        Architecture(head="transformer")
    with pytest.raises(ValueError):
        Architecture(activation="swish")
    with pytest.raises(ValueError):
        Architecture(channels=())
    assert Architecture.from_json(Architecture().to_json()) == Architecture()


# -- checkpoints ------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, fresh):
    p = tmp_path / "m.ckpt"
    save_checkpoint(fresh, p)
    back = load_checkpoint(p, expected=Architecture())
    img = GrayImage(np.random.default_rng(3).random((250, 250)))
    assert forward(back, img).values == forward(fresh, img).values


def test_checkpoint_mismatch_and_garbage(tmp_path):
    p = tmp_path / "m.ckpt"
    save_checkpoint(RegressorModel.create(tiny_arch()), p)
    with pytest.raises(CheckpointError, match="mismatch"):
        load_checkpoint(p, expected=Architecture())
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"junk")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


# -- training --------------------------------------------------------------------

def phantom_mlos(n, seed0=0):
    out = []
    for i in range(n):
        case = generate_case(PhantomSpec(seed=seed0 + i, width=128, height=128, scenario="AdequateBoth"))
        out.append((case.mlo_image, case.mlo_annotation))
    return out


def test_train_config_validation():
    for kw in ({"batch_size": 0}, {"learning_rate": 0}, {"epochs": 0}, {"validation_fraction": 1.0}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def test_train_rejects_small_datasets():
    with pytest.raises(ValueError, match="empty"):
        train([], TrainConfig())
    with pytest.raises(ValueError, match="batch"):
        train(phantom_mlos(3), TrainConfig(batch_size=12))


def test_split_indices():
    tr, va = split_indices(10, 0.2, 0)
    assert len(va) == 2 and sorted(tr + va) == list(range(10))
    assert split_indices(10, 0.2, 0) == (tr, va)
    assert split_indices(5, 0.0, 0) == ([0, 1, 2, 3, 4], [])


def small_cfg(**kw):
    arch = Architecture(input_size=32, channels=(4, 8), context=(1, 2), hidden=8)
    base = dict(batch_size=4, learning_rate=1e-3, epochs=4, seed=3, validation_fraction=0.25, arch=arch)
    base.update(kw)
    return TrainConfig(**base)


def test_history_is_deterministic():
    data = phantom_mlos(12)
    _, h1 = train(data, small_cfg())
    _, h2 = train(data, small_cfg())
    assert h1 == h2
    assert [r.epoch for r in h1] == [1, 2, 3, 4]


def test_returned_model_has_best_validation_loss():
    data = phantom_mlos(12)
    model, hist = train(data, small_cfg(epochs=6, learning_rate=3e-3))
    _, val = split_indices(len(data), 0.25, 3)
    val_loss, _ = evaluate_model(model, [data[i] for i in val])
    assert abs(val_loss - min(r.val_loss for r in hist)) <= 1e-12


def test_write_history(tmp_path):
    _, hist = train(phantom_mlos(4), small_cfg(epochs=2, validation_fraction=0.0))
    p = tmp_path / "h.csv"
    write_history(hist, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_endpoint_error_px"
    assert len(lines) == 3
    assert lines[1].endswith(",,")


@pytest.fixture(scope="module")
def overfit():
    case = generate_case(PhantomSpec(seed=5, scenario="AdequateBoth"))
    data = [(case.mlo_image, case.mlo_annotation)]
    cfg = TrainConfig(batch_size=1, learning_rate=1e-3, epochs=200, validation_fraction=0.0, augment=False)
    model, hist = train(data, cfg)
    return data, model, hist


def test_overfit_loss_and_smoothed_monotone(overfit):
    _, _, hist = overfit
    losses = np.array([r.train_loss for r in hist])
    assert len(losses) == 200
    assert losses[-1] < 0.5
    smooth = losses.reshape(20, 10).mean(axis=1)
    assert np.all(np.diff(smooth) <= 0)


def test_overfit_endpoints_within_2px(overfit):
    data, model, _ = overfit
    small, ann = to_input_frame(*data[0], 250)
    pred = np.array(forward(model, small).values)
    truth = np.array(target_vector(ann).values)
    d = (pred - truth).reshape(4, 2)
    assert np.hypot(d[:, 0], d[:, 1]).max() < 2.0
