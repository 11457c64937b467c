import math

import numpy as np
import pytest

from smcae.channel import ChannelParams, SparsityConfig, channel_value_grad
from smcae.model import (SMCAE, SmcaeConfig, SmcaeLayer, SmcaeModel, Variant,
                         build_variant, fine_tune, init_layer, load_model,
                         pack_layer, save_model, smcae_gradient, smcae_objective,
                         train_layer, train_stack, transform, unpack_layer,
                         unrolled_objective, _unrolled_value_grad)
from smcae.optim import LbfgsOptions, finite_diff

S = SparsityConfig(delta=0.05, rho=0.3, weight_decay=0.01)
LAYER_FIELDS = ("W_e", "b_e", "W_d_L", "b_d_L", "W_d_R", "b_d_R")


def paired_data(seed, n=8, m=6):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1, 0.9, (n, m)), rng.uniform(0.1, 0.9, (n, m))


def grad_vector(g):
    return np.concatenate([g.W_e.ravel(), g.b_e, g.W_d_L.ravel(), g.b_d_L,
                           g.W_d_R.ravel(), g.b_d_R])


def layers_equal(a, b):
    return all(np.array_equal(getattr(a, f), getattr(b, f)) for f in LAYER_FIELDS)


# --------------------------------------------------------------------------
# objective


def test_objective_combination_identity():
    X_s, X_r = paired_data(0)
    layer = init_layer(6, 4, np.random.default_rng(1))
    for gamma in (0.0, 1.0, 50.0):
        E, J_L, J_R = smcae_objective(layer, X_s, X_r, S, gamma)
        assert math.isclose(E, J_L + J_R + 0.5 * gamma * (J_L - J_R) ** 2,
                            rel_tol=1e-12)


def test_balance_term_vanishes_for_symmetric_channels():
    # Same data on both channels and identical decoders force J_L == J_R.
    X = paired_data(2)[0]
    rng = np.random.default_rng(3)
    base = init_layer(6, 4, rng)
    layer = SmcaeLayer(W_e=base.W_e, b_e=base.b_e,
                       W_d_L=base.W_d_L, b_d_L=base.b_d_L,
                       W_d_R=base.W_d_L.copy(), b_d_R=base.b_d_L.copy())
    E, J_L, J_R = smcae_objective(layer, X, X, S, gamma=50.0)
    assert J_L == J_R
    assert E == J_L + J_R


def test_stubbed_objective_values():
    # J_L = 3, J_R = 1, gamma = 1: E = 3 + 1 + 0.5 * 4 = 6.
    assert 3 + 1 + 1 * 0.5 * (3 - 1) ** 2 == 6


def test_gamma_zero_reduces_to_channel_sum():
    X_s, X_r = paired_data(4)
    layer = init_layer(6, 4, np.random.default_rng(5))
    E, J_L, J_R = smcae_objective(layer, X_s, X_r, S, gamma=0.0)
    left, _ = channel_value_grad(layer.left(), X_s, X_r, S)
    right, _ = channel_value_grad(layer.right(), X_r, X_r, S)
    assert math.isclose(E, left + right, rel_tol=1e-12)
    assert E == J_L + J_R


def test_unpaired_data_errors():
    layer = init_layer(6, 4, np.random.default_rng(6))
    with pytest.raises(ValueError, match="paired"):
        smcae_objective(layer, np.zeros((3, 6)), np.zeros((4, 6)), S, 1.0)


# --------------------------------------------------------------------------
# gradient


def test_gradient_gamma_zero_is_plain_channel_split():
    X_s, X_r = paired_data(7)
    layer = init_layer(6, 4, np.random.default_rng(8))
    g = smcae_gradient(layer, X_s, X_r, S, gamma=0.0)
    _, gL = channel_value_grad(layer.left(), X_s, X_r, S)
    _, gR = channel_value_grad(layer.right(), X_r, X_r, S)
    assert np.allclose(g.W_e, gL.W_e + gR.W_e, atol=1e-14)
    assert np.allclose(g.b_e, gL.b_e + gR.b_e, atol=1e-14)
    assert np.array_equal(g.W_d_L, gL.W_d)
    assert np.array_equal(g.W_d_R, gR.W_d)


def test_gradient_correction_vanishes_when_channels_agree():
    X = paired_data(9)[0]
    rng = np.random.default_rng(10)
    base = init_layer(6, 4, rng)
    layer = SmcaeLayer(W_e=base.W_e, b_e=base.b_e,
                       W_d_L=base.W_d_L, b_d_L=base.b_d_L,
                       W_d_R=base.W_d_L.copy(), b_d_R=base.b_d_L.copy())
    g50 = smcae_gradient(layer, X, X, S, gamma=50.0)
    g0 = smcae_gradient(layer, X, X, S, gamma=0.0)
    for f in LAYER_FIELDS:
        assert np.allclose(getattr(g50, f), getattr(g0, f), atol=1e-12)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 50.0])
def test_gradient_matches_finite_differences(gamma):
    m, k = 6, 4
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X_s = rng.uniform(0.1, 0.9, (8, m))
        X_r = rng.uniform(0.1, 0.9, (8, m))
        layer = init_layer(m, k, rng)
        g = grad_vector(smcae_gradient(layer, X_s, X_r, S, gamma))

        def value(v):
            E, _, _ = smcae_objective(unpack_layer(v, m, k), X_s, X_r, S, gamma)
            return E

        fd = finite_diff(value, pack_layer(layer))
        rel = np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(g) + np.abs(fd)))
        assert rel < 1e-6


# --------------------------------------------------------------------------
# training


def test_train_layer_constant_data_converges():
    X = np.full((10, 5), 0.5)
    layer, log = train_layer(X, X, k=3, s=SparsityConfig(0.05, 0.0, 0.0),
                             gamma=1.0, options=LbfgsOptions(max_iterations=100),
                             seed=0)
    _, J_L, J_R = smcae_objective(layer, X, X, SparsityConfig(0.05, 0.0, 0.0), 1.0)
    assert J_L <= 1e-3 and J_R <= 1e-3
    assert len(log) - 1 <= 100


def test_train_layer_descends():
    X_s, X_r = paired_data(11, n=12)
    layer, log = train_layer(X_s, X_r, k=4, s=S, gamma=50.0,
                             options=LbfgsOptions(max_iterations=30), seed=1)
    values = [e[1] for e in log]
    assert values[-1] <= values[0]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_train_layer_seed_reproducible():
    X_s, X_r = paired_data(12, n=10)
    opts = LbfgsOptions(max_iterations=20)
    l1, _ = train_layer(X_s, X_r, k=3, s=S, gamma=1.0, options=opts, seed=5)
    l2, _ = train_layer(X_s, X_r, k=3, s=S, gamma=1.0, options=opts, seed=5)
    assert layers_equal(l1, l2)


def config(layer_sizes, seed=0, fine_tune=False, gamma=1.0, max_iterations=25):
    return SmcaeConfig(layer_sizes=layer_sizes, sparsity=S, gamma=gamma,
                       max_iterations=max_iterations, fine_tune=fine_tune,
                       rng_seed=seed)


def test_stack_of_one_equals_train_layer():
    X_s, X_r = paired_data(13, n=10)
    cfg = config((4,), seed=9)
    model = train_stack(X_s, X_r, cfg, Variant.SMCAE)
    layer, _ = train_layer(X_s, X_r, k=4, s=S, gamma=1.0,
                           options=cfg.lbfgs_options(), seed=[9, 0])
    assert layers_equal(model.layers[0], layer)


def test_two_layer_stack_chains_dimensions():
    X_s, X_r = paired_data(14, n=10)
    model = train_stack(X_s, X_r, config((5, 3)), Variant.SMCAE)
    assert model.layers[0].k == 5
    assert model.layers[1].m == 5
    assert model.layers[1].k == 3


def test_fine_tune_never_increases_unrolled_objective():
    X_s, X_r = paired_data(15, n=10)
    for variant in Variant:
        greedy = train_stack(X_s, X_r, config((4, 3), seed=2), variant)
        before = unrolled_objective(greedy, X_s, X_r)[0]
        tuned = fine_tune(greedy, X_s, X_r)
        after = unrolled_objective(tuned, X_s, X_r)[0]
        assert after <= before + 1e-12
        assert tuned.training_log[-1][0] == "fine-tune"


def test_train_stack_deterministic():
    X_s, X_r = paired_data(16, n=10)
    m1 = train_stack(X_s, X_r, config((4, 3), fine_tune=True), Variant.SMCAE)
    m2 = train_stack(X_s, X_r, config((4, 3), fine_tune=True), Variant.SMCAE)
    assert all(layers_equal(a, b) for a, b in zip(m1.layers, m2.layers))
    assert m1.training_log == m2.training_log


def test_single_channel_variants_mirror_decoders():
    X_s, X_r = paired_data(17, n=10)
    model = train_stack(X_s, X_r, config((4,)), Variant.SAE_II)
    layer = model.layers[0]
    assert np.array_equal(layer.W_d_L, layer.W_d_R)
    assert math.isnan(model.training_log[0][1][0][3])  # J_R logged as NaN


# --------------------------------------------------------------------------
# unrolled stack vs the single-layer channel


def test_unrolled_single_layer_matches_channel():
    rng = np.random.default_rng(18)
    X, T = paired_data(19, n=9, m=5)
    layer = init_layer(5, 3, rng)
    J, g_enc, g_dec = _unrolled_value_grad(
        [(layer.W_e, layer.b_e)], [(layer.W_d_L, layer.b_d_L)], X, T, S)
    p = ChannelParams(layer.W_e, layer.b_e, layer.W_d_L, layer.b_d_L)
    J_ref, g_ref = channel_value_grad(p, X, T, S)
    assert math.isclose(J, J_ref, rel_tol=1e-12)
    assert np.allclose(g_enc[0][0], g_ref.W_e, atol=1e-12)
    assert np.allclose(g_enc[0][1], g_ref.b_e, atol=1e-12)
    assert np.allclose(g_dec[0][0], g_ref.W_d, atol=1e-12)
    assert np.allclose(g_dec[0][1], g_ref.b_d, atol=1e-12)


# --------------------------------------------------------------------------
# transform


def test_transform_shape_and_range():
    X_s, X_r = paired_data(20, n=10)
    model = train_stack(X_s, X_r, config((4, 3), fine_tune=True), Variant.SMCAE)
    Z = transform(model, X_s)
    assert Z.shape == X_s.shape
    assert ((Z > 0) & (Z < 1)).all()


def test_transform_degenerate_gap_approximates_identity():
    # With identical source and real data the unrolled left channel is the
    # trained reconstruction path, so transform error matches it.
    X = paired_data(21, n=20, m=5)[0]
    cfg = SmcaeConfig(layer_sizes=(4,), sparsity=SparsityConfig(0.05, 0.0, 0.0),
                      gamma=1.0, max_iterations=150, fine_tune=False, rng_seed=0)
    model = train_stack(X, X, cfg, Variant.SMCAE)
    mse = float(np.mean(np.sum((transform(model, X) - X) ** 2, axis=1)))
    _, J_L, _ = smcae_objective(model.layers[0], X, X,
                                SparsityConfig(0.05, 0.0, 0.0), 1.0)
    assert mse <= J_L + 1e-12


def test_transform_bridges_shifted_gaussian_gap():
    rng = np.random.default_rng(22)
    X_r = np.clip(rng.normal(0.6, 0.05, (60, 8)), 0.01, 0.99)
    X_s = np.clip(X_r - 0.2, 0.01, 0.99)
    cfg = SmcaeConfig(layer_sizes=(6,), sparsity=SparsityConfig(0.05, 0.01, 1e-5),
                      gamma=50.0, max_iterations=150, fine_tune=False, rng_seed=0)
    model = train_stack(X_s, X_r, cfg, Variant.SMCAE)
    before = float(np.mean(np.linalg.norm(X_s - X_r, axis=1)))
    after = float(np.mean(np.linalg.norm(transform(model, X_s) - X_r, axis=1)))
    assert after < before


def test_transform_validates_input():
    X_s, X_r = paired_data(23, n=8)
    model = train_stack(X_s, X_r, config((3,)), Variant.SMCAE)
    with pytest.raises(ValueError):
        transform(model, np.zeros((2, 99)))


# --------------------------------------------------------------------------
# variants


def test_build_variant_bindings():
    X_s, X_r = paired_data(24, n=6)
    smcae = build_variant(Variant.SMCAE, X_s, X_r)
    assert len(smcae) == 2
    assert np.array_equal(smcae[0][0], X_s) and np.array_equal(smcae[0][1], X_r)
    assert np.array_equal(smcae[1][0], X_r) and np.array_equal(smcae[1][1], X_r)

    smcae2 = build_variant(Variant.SMCAE_II, X_s, X_r)
    assert np.array_equal(smcae2[0][0], X_s) and np.array_equal(smcae2[0][1], X_s)

    (pool_in, pool_out), = build_variant(Variant.SAE_I, X_s, X_r)
    assert pool_in.shape[0] == 2 * len(X_s)
    assert np.array_equal(pool_in, np.vstack([X_s, X_r]))
    assert np.array_equal(pool_out, np.vstack([X_r, X_r]))

    (sae2_in, sae2_out), = build_variant(Variant.SAE_II, X_s, X_r)
    assert np.array_equal(sae2_in, X_s) and np.array_equal(sae2_out, X_r)


# --------------------------------------------------------------------------
# serialization


def test_save_load_round_trip_bit_exact(tmp_path):
    X_s, X_r = paired_data(25, n=10)
    model = train_stack(X_s, X_r, config((4, 3), fine_tune=True, seed=3),
                        Variant.SMCAE_II)
    path = tmp_path / "model.npz"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.variant == model.variant
    assert loaded.config == model.config
    assert loaded.training_log == model.training_log
    assert all(layers_equal(a, b) for a, b in zip(model.layers, loaded.layers))
    assert np.array_equal(transform(model, X_s), transform(loaded, X_s))


def test_save_load_extras(tmp_path):
    X_s, X_r = paired_data(26, n=8)
    model = train_stack(X_s, X_r, config((3,)), Variant.SMCAE)
    path = tmp_path / "model.npz"
    save_model(model, path, extras={"scaler_mins": np.arange(3.0)})
    with np.load(path) as z:
        assert np.array_equal(z["scaler_mins"], np.arange(3.0))
    load_model(path)  # unknown keys ignored


def test_load_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.npz"
    np.savez(path, meta=np.array('{"format": "other"}'))
    with pytest.raises(ValueError, match="format"):
        load_model(path)


# --------------------------------------------------------------------------
# config and layer validation


def test_config_validation():
    with pytest.raises(ValueError):
        SmcaeConfig(layer_sizes=())
    with pytest.raises(ValueError):
        SmcaeConfig(layer_sizes=(4,), gamma=-1.0)


def test_layer_validation():
    with pytest.raises(ValueError):
        SmcaeLayer(W_e=np.zeros((3, 2)), b_e=np.zeros(3),
                   W_d_L=np.zeros((2, 3)), b_d_L=np.zeros(2),
                   W_d_R=np.zeros((3, 2)), b_d_R=np.zeros(3))
    with pytest.raises(ValueError, match="chained"):
        layer = init_layer(4, 3, np.random.default_rng(0))
        SmcaeModel(layers=[layer, layer], config=SmcaeConfig(layer_sizes=(3, 3)),
                   variant=Variant.SMCAE)


def test_init_layer_scale_and_zero_biases():
    layer = init_layer(10, 6, np.random.default_rng(0))
    r = np.sqrt(6.0 / 16.0)
    for W in (layer.W_e, layer.W_d_L, layer.W_d_R):
        assert np.abs(W).max() <= r
    assert np.array_equal(layer.b_e, np.zeros(6))
    assert np.array_equal(layer.b_d_L, np.zeros(10))


# --------------------------------------------------------------------------
# estimator facade


def test_estimator_fit_transform():
    X_s, X_r = paired_data(27, n=12)
    est = SMCAE(layer_sizes=(4,), gamma=1.0, rho=0.1, weight_decay=1e-4,
                max_iterations=30, random_state=0)
    Z = est.fit(X_s, X_r).transform(X_s)
    assert Z.shape == X_s.shape
    assert est.n_features_in_ == X_s.shape[1]


def test_estimator_get_set_params():
    est = SMCAE(gamma=7.0)
    params = est.get_params()
    assert params["gamma"] == 7.0
    est.set_params(gamma=3.0, variant="sae-ii")
    assert est.gamma == 3.0 and est.variant == "sae-ii"


def test_estimator_rejects_out_of_range_features():
    est = SMCAE(layer_sizes=(3,), max_iterations=5)
    X = np.full((4, 3), 1.7)
    with pytest.raises(ValueError, match="rescale"):
        est.fit(X, X)


def test_estimator_rejects_mismatched_pairs():
    est = SMCAE(layer_sizes=(3,), max_iterations=5)
    with pytest.raises(ValueError, match="shape"):
        est.fit(np.zeros((4, 3)), np.zeros((5, 3)))


def test_estimator_requires_fit_before_transform():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        SMCAE().transform(np.zeros((2, 3)))
