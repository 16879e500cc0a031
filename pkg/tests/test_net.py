import numpy as np
import pytest

import oracles
from conftest import params_from_dicts, random_phases
from hankel_doa.array_signal import ArrayConfig, generate_dataset
from hankel_doa.hankel_ops import build_index_map, complex_to_stacked
from hankel_doa.net import (
    NetParams,
    forward,
    gradient_module,
    init_layer,
    init_params,
    lowrank_module,
    operators,
    predict,
)


def identity_params(hmap, k, beta0=1.0):
    p = init_params(hmap, k, noise_scale=0.0)
    p.phases[0].beta = beta0
    return p


@pytest.fixture
def small_inputs(small_config):
    ds = generate_dataset(small_config, 4, 2, (15, 15), seed=3)
    return ds


def test_init_params_shapes_and_defaults(small_map):
    p = init_params(small_map, 3, seed=1)
    assert p.k_phases == 3 and p.beta0 == 1.0
    assert all(ph.beta == 0.5 and ph.gamma == 0.0 for ph in p.phases[1:])
    ph = p.phases[2]
    assert [w.shape for w in ph.enc_w] == [(12, 12)] * 3
    assert [w.shape for w in ph.dec_w] == [(18, 18)] * 3
    assert all(np.all(b == 0) for b in ph.enc_b + ph.dec_b)
    assert np.max(np.abs(ph.enc_w[0] - np.eye(12))) <= 1e-2
    roundtrip = NetParams.from_tensors(p.tensors())
    for a, b in zip(roundtrip.tensors(), p.tensors()):
        np.testing.assert_array_equal(a, b)


def test_dimensional_ledger(sla18):
    full = build_index_map(ArrayConfig(21))
    assert len(full.phi) == 242 and 2 * full.hankel_size == 242
    hm = build_index_map(sla18)
    missing = sorted(set(range(1, 22)) - set(sla18.omega))
    expected = 121 - sum(int(hm.anti_diag_len[t - 1]) for t in missing)
    assert hm.n_theta == expected
    p = init_params(hm, 1)
    assert p.phases[1].enc_w[0].shape == (2 * expected, 2 * expected)


def test_identity_init_layer_reaverages_masked_input(small_map, small_inputs):
    # with positive-only inputs the identity ReLU net is exactly the identity
    p = identity_params(small_map, 0)
    xs = np.abs(small_inputs.inputs)
    x_hat, x_tilde, target, _ = init_layer(complex_to_stacked(xs), p.phases[0], small_map)
    np.testing.assert_allclose(x_hat, complex_to_stacked(xs), atol=1e-14)
    np.testing.assert_allclose(target, complex_to_stacked(xs), atol=1e-14)


def test_init_layer_zero_beta(small_map, small_inputs):
    p = init_params(small_map, 0, seed=2)
    p.phases[0].beta = 0.0
    x_hat, *_ = init_layer(complex_to_stacked(small_inputs.inputs), p.phases[0], small_map)
    assert np.all(x_hat == 0)


def test_gradient_module_examples(small_map, small_inputs, rng):
    xs = complex_to_stacked(small_inputs.inputs)
    ops = operators(small_map)
    x_hat = rng.standard_normal(xs.shape)
    np.testing.assert_array_equal(gradient_module(x_hat, xs, 0.0, small_map), x_hat @ ops.lift.T)
    consistent = np.where(ops.mask > 0, xs, x_hat)
    np.testing.assert_allclose(gradient_module(consistent, xs, 0.7, small_map), consistent @ ops.lift.T)
    # oracle: lift of x + beta * mask * (x_s - x), one sample
    x_c = x_hat[0, :5] + 1j * x_hat[0, 5:]
    s_c = small_inputs.inputs[0]
    mask = small_map.mask
    expected = oracles.hankel_stack(np.where(mask, x_c + 0.3 * (s_c - x_c), x_c))
    np.testing.assert_allclose(gradient_module(x_hat[0], xs[0], 0.3, small_map)[0], expected, atol=1e-14)


def test_lowrank_module_zero_gamma(small_map, rng):
    p = init_params(small_map, 1, seed=4)
    X = rng.standard_normal((3, 18))
    x_prev = rng.standard_normal((3, 10))
    x_next, x_tilde, _ = lowrank_module(X, x_prev, p.phases[1], small_map)
    np.testing.assert_array_equal(x_next, x_tilde)


def test_lowrank_module_identity_on_consistent_hankel(small_map):
    p = init_params(small_map, 1, noise_scale=0.0)
    x = np.array([1.0, 2.0, 0.0, 0.5, 3.0, 0.25, 1.5, 0.0, 2.5, 1.0])  # masked, nonnegative
    X = x @ operators(small_map).lift.T
    x_next, x_tilde, _ = lowrank_module(X, x, p.phases[1], small_map)
    np.testing.assert_allclose(x_tilde[0], x, atol=1e-14)


@pytest.mark.parametrize("mode", ["masked", "literal"])
def test_forward_matches_oracle(small_config, small_map, small_inputs, mode):
    phases = random_phases(small_map, 2)
    params = params_from_dicts(phases, mode)
    trace = forward(complex_to_stacked(small_inputs.inputs), params, small_map)
    for b, x_s in enumerate(small_inputs.inputs):
        x_hat, x_tilde, targets = oracles.net_forward(
            x_s, phases, 5, set(small_config.omega), masked=(mode == "masked")
        )
        for k in range(3):
            np.testing.assert_allclose(trace.x_hat[k][b], x_hat[k], atol=1e-12)
            np.testing.assert_allclose(trace.x_tilde[k][b], x_tilde[k], atol=1e-12)
            np.testing.assert_allclose(trace.consistency_target[k][b], targets[k], atol=1e-12)


def test_forward_k0_is_init_layer(small_map, small_inputs):
    p = init_params(small_map, 0, seed=5)
    xs = complex_to_stacked(small_inputs.inputs)
    trace = forward(xs, p, small_map)
    x_hat, *_ = init_layer(xs, p.phases[0], small_map)
    assert len(trace.x_hat) == 1
    np.testing.assert_array_equal(trace.output, x_hat)


def test_forward_zero_input_zero_output(small_map):
    p = init_params(small_map, 3, seed=6, noise_scale=0.2)
    assert np.all(forward(np.zeros((2, 10)), p, small_map).output == 0)


def test_forward_deterministic(sla18, sla18_map):
    ds = generate_dataset(sla18, 3, 2, seed=0)
    p = init_params(sla18_map, 2, seed=1)
    xs = complex_to_stacked(ds.inputs)
    a = forward(xs, p, sla18_map).output
    b = forward(xs, p, sla18_map).output
    np.testing.assert_array_equal(a, b)


def test_masked_residual_zero_at_perfect_input(small_map, small_inputs):
    from hankel_doa.net import phase_residual

    xs = complex_to_stacked(small_inputs.inputs)
    assert np.all(phase_residual(xs, xs, small_map) == 0)


def test_predict_complex_roundtrip(small_map, small_inputs):
    p = init_params(small_map, 2, seed=8)
    out = predict(small_inputs.inputs, p, small_map)
    trace = forward(complex_to_stacked(small_inputs.inputs), p, small_map)
    np.testing.assert_array_equal(out, trace.output[:, :5] + 1j * trace.output[:, 5:])
    np.testing.assert_allclose(predict(small_inputs.inputs[0], p, small_map), out[0], atol=1e-13)
