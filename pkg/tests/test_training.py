import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_graph, sampled_fd_error
from ecgnn.eigen import power_iteration_ec
from ecgnn.graph import GeneratorSpec, complete_graph, cycle_graph, generate, star_graph
from ecgnn.numerics import ZeroNormError, make_rng
from ecgnn.training import (Checkpoint, CollapseError, LossVariant, TrainConfig, compile_scalar_decoder,
                            compute_target_x, embed, infer_scores, loss_and_grads, loss_joint, loss_joint_l1,
                            loss_mse, loss_objective_only, model_forward, orient, train_csl, train_cul)

ENCODERS = ["gcn", "sage", "gat"]
LOSSES = ["joint", "joint-l1", "obj-only"]


# ----------------------------------------------------------------- target

def test_target_row_sums():
    assert compute_target_x(complete_graph(3), np.ones(3)).tolist() == [2.0, 2.0, 2.0]


def test_target_on_star_eigenvector():
    y = np.array([np.sqrt(3), 1, 1, 1]) / np.sqrt(6)
    np.testing.assert_allclose(compute_target_x(star_graph(3), y), np.sqrt(3) * y, rtol=1e-15)


def test_zero_output_gives_zero_target_and_zero_norm_error():
    x = compute_target_x(cycle_graph(4), np.zeros(4))
    assert not x.any()
    for fn in (lambda: loss_joint(np.zeros(4), x), lambda: loss_objective_only(np.zeros(4), x),
               lambda: loss_joint_l1(np.zeros(4), x)):
        with pytest.raises(ZeroNormError):
            fn()


# ----------------------------------------------------------------- losses

def test_joint_loss_hand_values():
    x = np.array([1.0, 2.0, 2.0, 4.0])
    y = x / np.linalg.norm(x)
    assert loss_joint(y, x)[0] == pytest.approx(-0.25, abs=1e-15)
    assert loss_joint(np.array([1.0, 0.0]), np.array([0.0, 1.0]))[0] == pytest.approx(np.sqrt(2) - 0.5, abs=1e-15)


def test_joint_l1_hand_values():
    x = np.array([3.0, 4.0])
    y = x / 5
    assert loss_joint_l1(y, x, k=2.0)[0] == pytest.approx(-1.0, abs=1e-15)
    assert loss_joint_l1(np.array([1.0, 0.0]), np.array([0.0, 1.0]))[0] == pytest.approx(1.5, abs=1e-15)


def test_objective_only_zero_at_target():
    x = np.array([1.0, -2.0, 0.5])
    assert loss_objective_only(x / np.linalg.norm(x), x)[0] == 0.0


def test_joint_gradient_at_exact_target_uses_zero_subgradient():
    x = np.array([3.0, 4.0])
    _, g = loss_joint(x / 5, x)
    np.testing.assert_allclose(g, -(1 / 2) * np.array([0.6, 0.8]), rtol=1e-15)


@pytest.mark.parametrize("fn", [loss_joint, loss_joint_l1, loss_objective_only, loss_mse])
@pytest.mark.parametrize("seed", range(5))
def test_loss_gradients_with_frozen_target(fn, seed):
    rng = make_rng(seed)
    y, x = rng.standard_normal(12), rng.standard_normal(12)
    _, grad = fn(y, x)
    assert sampled_fd_error(lambda: fn(y, x)[0], {"y": y}, {"y": grad}, rng) < 1e-6


def test_loss_variant_validation():
    with pytest.raises(ValueError):
        LossVariant("joint", k=0.0)
    LossVariant("obj-only", k=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=0)


# ------------------------------------------------------ full-model gradient

def _pipeline_error(encoder, mode, loss, through_target=False, seed=0):
    g = random_graph(10, 17, p=0.35)
    cfg = TrainConfig(encoder=encoder, mode=mode, loss=LossVariant(loss), seed=seed,
                      grad_through_target=through_target)
    ckpt = Checkpoint.init(encoder, seed)
    rng = make_rng(seed + 100)
    labels = power_iteration_ec(g).values if mode == "csl" else None
    _, grads, _, x = loss_and_grads(ckpt, g, cfg, labels=labels)
    # a frozen target is held fixed in the finite differences too
    frozen = None if through_target else x

    def f():
        return loss_and_grads(ckpt, g, cfg, target=frozen, labels=labels)[0]

    return sampled_fd_error(f, ckpt.named_params(), grads, rng, per_param=40)


@pytest.mark.parametrize("loss", LOSSES)
@pytest.mark.parametrize("encoder", ENCODERS)
def test_full_pipeline_gradient(encoder, loss):
    assert _pipeline_error(encoder, "cul", loss) < 1e-4


@pytest.mark.parametrize("encoder", ENCODERS)
def test_full_pipeline_gradient_csl(encoder):
    assert _pipeline_error(encoder, "csl", "joint") < 1e-4


@pytest.mark.parametrize("loss", LOSSES)
def test_gradient_through_target_ablation(loss):
    assert _pipeline_error("gcn", "cul", loss, through_target=True) < 1e-4


def test_frozen_target_gradient_differs_from_through_target():
    g = random_graph(10, 17, p=0.35)
    ckpt = Checkpoint.init("gcn", 0)
    a = loss_and_grads(ckpt, g, TrainConfig())[1]
    b = loss_and_grads(ckpt, g, TrainConfig(grad_through_target=True))[1]
    # the extra term is orthogonal to Y, so it shows up in the bias gradients
    assert max(np.abs(a[k] - b[k]).max() for k in a) > 1e-4


# --------------------------------------------------------------- training

def test_train_on_triangle_gives_constant_output():
    g = complete_graph(3)
    res = train_cul(TrainConfig(epochs=30), [g])
    y = model_forward(res.checkpoint, g)[0]
    assert np.ptp(y) <= 1e-6
    assert len(res.loss_history) == 30


def test_csl_on_triangle_reaches_labels():
    g = complete_graph(3)
    res = train_csl(TrainConfig(mode="csl", epochs=500), [g])
    y = model_forward(res.checkpoint, g)[0]
    np.testing.assert_allclose(y, 1 / np.sqrt(3), atol=1e-3)


def test_csl_loss_mostly_decreasing():
    g = generate(GeneratorSpec("ba", 40, 2, seed=1))
    hist = np.array(train_csl(TrainConfig(mode="csl", epochs=100), [g]).loss_history)
    for start in range(0, 81, 20):
        assert np.median(np.diff(hist[start:start + 20])) <= 0


def test_training_is_deterministic_and_shuffle_is_seeded():
    gs = [generate(GeneratorSpec("ba", 30, 2, seed=s)) for s in range(3)]
    a = train_cul(TrainConfig(epochs=5, shuffle=True, seed=3), gs)
    b = train_cul(TrainConfig(epochs=5, shuffle=True, seed=3), gs)
    c = train_cul(TrainConfig(epochs=5, shuffle=False, seed=3), gs)
    assert a.loss_history == b.loss_history
    assert a.loss_history != c.loss_history
    assert a.checkpoint.metadata["config"]["shuffle"] is True


def test_mode_mismatch():
    with pytest.raises(ValueError):
        train_cul(TrainConfig(mode="csl"), [complete_graph(3)])
    with pytest.raises(ValueError):
        train_csl(TrainConfig(), [complete_graph(3)])
    with pytest.raises(ValueError):
        train_cul(TrainConfig(), [])


def test_collapse_reports_epoch_and_graph(monkeypatch):
    real_init = Checkpoint.init

    def zero_decoder(kind, seed=0, in_dim=1):
        ck = real_init(kind, seed, in_dim)
        ck.decoder.weights = {k: np.zeros_like(v) for k, v in ck.decoder.weights.items()}
        return ck

    monkeypatch.setattr(Checkpoint, "init", staticmethod(zero_decoder))
    with pytest.raises(CollapseError) as info:
        train_cul(TrainConfig(epochs=3), [complete_graph(3), cycle_graph(4)])
    assert info.value.epoch == 0 and info.value.graph_index == 0
    assert isinstance(info.value, ZeroNormError)


# ------------------------------------------------------------ checkpoints

@pytest.mark.parametrize("encoder", ENCODERS)
def test_checkpoint_roundtrip_bit_identical(encoder, tmp_path):
    g = generate(GeneratorSpec("pl", 50, 3, 0.2, seed=9))
    ckpt = train_cul(TrainConfig(encoder=encoder, epochs=3), [g]).checkpoint
    path = tmp_path / "m.json"
    ckpt.save(path)
    back = Checkpoint.load(path)
    for k, v in ckpt.named_params().items():
        assert np.array_equal(back.named_params()[k], v)
    assert back.metadata == json.loads(json.dumps(ckpt.metadata))
    assert np.array_equal(infer_scores(back, g)[0], infer_scores(ckpt, g)[0])


def test_checkpoint_document_layout(tmp_path):
    ckpt = Checkpoint.init("sage", 0)
    d = ckpt.to_dict()
    assert d["format"] == "ecgnn-checkpoint" and d["version"] == 1 and d["encoder_kind"] == "sage"
    assert d["dims"] == {"in": 1, "embedding": 128, "decoder": [128, 128, 64, 32, 1]}
    assert d["params"]["encoder"]["W0"]["shape"] == [2, 128]


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="other"),
    lambda d: d.update(version=99),
    lambda d: d["params"]["decoder"]["W0"].update(shape=[3, 3]),
    lambda d: d["params"]["encoder"]["W1"].update(shape=[128, 64], data=[0.0] * 128 * 64),
])
def test_checkpoint_rejects_bad_documents(mutate):
    d = Checkpoint.init("gcn", 0).to_dict()
    mutate(d)
    with pytest.raises(ValueError):
        Checkpoint.from_dict(d)


# -------------------------------------------------------------- inference

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_pwl_engine_matches_dense(seed):
    g = generate(GeneratorSpec("ba", 60, 3, seed=seed))
    ckpt = Checkpoint.init("gcn", seed % 1000)
    dense = infer_scores(ckpt, g, engine="dense")[0]
    pwl = infer_scores(ckpt, g, engine="pwl")[0]
    np.testing.assert_allclose(pwl, dense, rtol=1e-9, atol=1e-12 * np.abs(dense).max())


def test_compiled_decoder_is_exact_between_breaks():
    ckpt = Checkpoint.init("gcn", 5)
    u = (ckpt.encoder.weights["W0"] @ ckpt.encoder.weights["W1"])[0]
    h = compile_scalar_decoder(u, ckpt.decoder)
    s = np.linspace(-50, 50, 2001)
    from ecgnn.decoder import decoder_forward
    np.testing.assert_allclose(h(s), decoder_forward(np.outer(s, u), ckpt.decoder)[0], rtol=1e-10, atol=1e-12)


def test_pwl_engine_rejects_other_encoders():
    with pytest.raises(ValueError):
        infer_scores(Checkpoint.init("sage", 0), complete_graph(3), engine="pwl")
    with pytest.raises(ValueError):
        infer_scores(Checkpoint.init("gcn", 0), complete_graph(3), engine="gpu")


def test_orientation_removes_sign_ambiguity():
    g = generate(GeneratorSpec("ba", 80, 3, seed=0))
    ckpt = Checkpoint.init("gcn", 0)
    flipped = Checkpoint.init("gcn", 0)
    flipped.decoder.weights["W3"] = -flipped.decoder.weights["W3"]
    flipped.decoder.weights["b3"] = -flipped.decoder.weights["b3"]
    y, _ = infer_scores(ckpt, g)
    assert y.sum() >= 0
    np.testing.assert_allclose(infer_scores(flipped, g)[0], y, rtol=1e-12)
    assert np.array_equal(orient(-y), y)


@pytest.mark.parametrize("encoder", ENCODERS)
def test_inference_deterministic_and_equivariant(encoder):
    rng = make_rng(8)
    g = random_graph(18, 8)
    ckpt = Checkpoint.init(encoder, 1)
    perm = rng.permutation(g.n)
    y1, t = infer_scores(ckpt, g)
    assert t >= 0
    assert np.array_equal(y1, infer_scores(ckpt, g)[0])
    np.testing.assert_allclose(infer_scores(ckpt, g.permute(perm))[0][perm], y1, atol=1e-9)


def test_embed_shape():
    g = cycle_graph(6)
    assert embed(Checkpoint.init("gat", 0), g).shape == (6, 128)
