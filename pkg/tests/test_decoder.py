import numpy as np
import pytest

from conftest import sampled_fd_error
from ecgnn.decoder import DECODER_DIMS, DecoderParams, decoder_backward, decoder_forward
from ecgnn.numerics import make_rng


def test_dims_and_shape():
    p = DecoderParams.init(make_rng(0))
    assert p.dims == DECODER_DIMS == (128, 128, 64, 32, 1)
    y, _ = decoder_forward(make_rng(1).standard_normal((9, 128)), p)
    assert y.shape == (9,)


def test_zero_weights_give_final_bias():
    p = DecoderParams.init(make_rng(0))
    p.weights = {k: np.zeros_like(v) for k, v in p.weights.items()}
    p.weights["b3"] = np.array([[-0.75]])
    y, _ = decoder_forward(make_rng(1).standard_normal((4, 128)), p)
    assert y.tolist() == [-0.75] * 4


def test_output_layer_is_linear():
    # a negative output must not be squashed by a final LeakyReLU
    p = DecoderParams.init(make_rng(0))
    p.weights["b3"] = np.array([[-10.0]])
    y, _ = decoder_forward(np.zeros((1, 128)), p)
    assert y[0] == pytest.approx(-10.0)


def test_identical_rows_identical_outputs():
    z = np.tile(make_rng(3).standard_normal(128), (5, 1))
    y, _ = decoder_forward(z, DecoderParams.init(make_rng(0)))
    assert np.all(y == y[0])


def test_row_permutation():
    rng = make_rng(4)
    z = rng.standard_normal((12, 128))
    p = DecoderParams.init(rng)
    perm = rng.permutation(12)
    np.testing.assert_allclose(decoder_forward(z[perm], p)[0], decoder_forward(z, p)[0][perm], atol=1e-14)


def test_bad_input_width():
    with pytest.raises(ValueError):
        decoder_forward(np.ones((3, 64)), DecoderParams.init(make_rng(0)))


@pytest.mark.parametrize("seed", range(20))
def test_backward_matches_finite_differences(seed):
    rng = make_rng(seed)
    p = DecoderParams.init(rng)
    # bias the hidden layers so the kinks are visited on both sides
    for i in range(3):
        p.weights[f"b{i}"] = rng.normal(0, 0.3, p.weights[f"b{i}"].shape)
    z = rng.standard_normal((5, 128))
    probe = rng.standard_normal(5)

    def f():
        return float(decoder_forward(z, p)[0] @ probe)

    _, cache = decoder_forward(z, p)
    grads, d_z = decoder_backward(cache, probe, p)
    assert sampled_fd_error(f, p.weights, grads, rng, per_param=100) < 1e-6
    assert sampled_fd_error(f, {"z": z}, {"z": d_z}, rng, per_param=100) < 1e-6


def test_backward_linear_in_upstream():
    rng = make_rng(0)
    p = DecoderParams.init(rng)
    _, cache = decoder_forward(rng.standard_normal((5, 128)), p)
    d = rng.standard_normal(5)
    g1, dz1 = decoder_backward(cache, d, p)
    g2, dz2 = decoder_backward(cache, 2 * d, p)
    g0, dz0 = decoder_backward(cache, np.zeros(5), p)
    for k in g1:
        np.testing.assert_allclose(g2[k], 2 * g1[k], rtol=1e-14, atol=0)
        assert not g0[k].any()
    np.testing.assert_allclose(dz2, 2 * dz1, rtol=1e-14)
    assert not dz0.any()


def test_stale_cache_rejected():
    rng = make_rng(0)
    p = DecoderParams.init(rng)
    _, cache = decoder_forward(rng.standard_normal((2, 128)), p)
    p.weights["W0"] = p.weights["W0"].copy()
    with pytest.raises(ValueError, match="stale"):
        decoder_backward(cache, np.ones(2), p)
