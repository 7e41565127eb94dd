import numpy as np
import pytest

from helpers import assert_grad_close, central_diff_grad
from saelstm.errors import ConsistencyError, DomainError, ShapeError
from saelstm.lstm import (
    GATES,
    CellState,
    LSTMCell,
    LSTMClassifier,
    LSTMTrainConfig,
    build_classifier,
    lstm_backward,
    lstm_cell_forward,
    lstm_forward,
    predict,
    train_classifier,
    zero_state,
)
from saelstm.numerics import DenseLayer, count_params, dense_backward, dense_forward
from saelstm.sae import build_sae, encode
from saelstm.errors import NumericError


def zero_cell(input_dim=3, units=4):
    return LSTMCell(
        w={g: np.zeros((units, input_dim)) for g in GATES},
        u={g: np.zeros((units, units)) for g in GATES},
        b={g: np.zeros(units) for g in GATES},
    )


def small_classifier(seed, input_dim=3, units=4, classes=3, depth=1):
    return build_classifier(
        input_dim=input_dim, units=units, classes=classes, seed=seed, depth=depth
    )


def classifier_params(clf):
    items = []
    for li, cell in enumerate(clf.cells):
        for name, arr in cell.parameter_items():
            items.append((f"cell{li}.{name}", arr))
    items.append(("head.w", clf.head.weights))
    items.append(("head.b", clf.head.bias))
    return items


def set_classifier_param(clf, name, value):
    if name.startswith("cell"):
        prefix, pname = name.split(".")
        clf.cells[int(prefix[4:])].set_parameter(pname, value)
    elif name == "head.w":
        clf.head.weights = value
    else:
        clf.head.bias = value


# ----------------------------------------------------------------- cell step


def test_zero_cell_zero_state_hand_values():
    cell = zero_cell()
    state, cache = lstm_cell_forward(cell, np.array([1.0, -2.0, 0.5]), zero_state(cell))
    for gate in ("i", "f", "o"):
        assert np.all(cache[gate] == 0.5)
    assert np.all(cache["g"] == 0.0)
    assert np.all(state.c == 0.0)
    assert np.all(state.h == 0.0)


def test_zero_cell_with_prior_cell_state():
    cell = zero_cell()
    c0 = np.array([0.8, -0.4, 1.2, 0.0])
    state, _ = lstm_cell_forward(
        cell, np.ones(3), CellState(h=np.zeros(4), c=c0.copy())
    )
    np.testing.assert_allclose(state.c, 0.5 * c0, atol=1e-15)
    np.testing.assert_allclose(state.h, 0.5 * np.tanh(0.5 * c0), atol=1e-15)


def test_gate_codomains_on_random_inputs():
    rng = np.random.default_rng(3)
    clf = small_classifier(seed=1, input_dim=5, units=6)
    cell = clf.cells[0]
    state = zero_state(cell)
    for _ in range(20):
        state, cache = lstm_cell_forward(cell, rng.normal(scale=2.0, size=5), state)
        for gate in ("i", "f", "o"):
            assert np.all((cache[gate] > 0.0) & (cache[gate] < 1.0))
        assert np.all((cache["g"] > -1.0) & (cache["g"] < 1.0))
        assert np.all(np.abs(state.h) < 1.0)


def test_cell_forward_shape_error():
    cell = zero_cell(input_dim=3)
    with pytest.raises(ShapeError):
        lstm_cell_forward(cell, np.ones(4), zero_state(cell))


# ------------------------------------------------------------------- forward


def test_forward_probabilities_sum_to_one():
    clf = small_classifier(seed=5)
    rng = np.random.default_rng(6)
    probs, _ = lstm_forward(clf, rng.normal(size=(8, 4, 3)))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert np.all(probs > 0)


def test_single_step_forward_equals_cell_plus_head():
    clf = small_classifier(seed=7)
    x = np.random.default_rng(8).normal(size=3)
    probs, _ = lstm_forward(clf, x[None, :])
    state, _ = lstm_cell_forward(clf.cells[0], x, zero_state(clf.cells[0]))
    manual = dense_forward(clf.head, state.h)
    np.testing.assert_allclose(probs, manual, atol=1e-15)


def test_all_zero_model_predicts_uniform():
    clf = LSTMClassifier(
        cells=[zero_cell()],
        head=DenseLayer(weights=np.zeros((3, 4)), bias=np.zeros(3), activation="softmax"),
    )
    probs, _ = lstm_forward(clf, np.ones((1, 3)))
    np.testing.assert_allclose(probs, np.full(3, 1.0 / 3.0), atol=1e-15)


# ------------------------------------------------------------------ backward


@pytest.mark.parametrize("steps", [1, 3])
@pytest.mark.parametrize("seed", range(10))
def test_bptt_matches_finite_differences(steps, seed):
    rng = np.random.default_rng(seed)
    clf = small_classifier(seed=seed + 40)
    seq = rng.normal(size=(2, steps, 3))
    labels = rng.integers(0, 3, size=2)
    probs, fc = lstm_forward(clf, seq)
    grads = lstm_backward(clf, fc, labels)

    def loss_with(name, value):
        probe = small_classifier(seed=seed + 40)
        set_classifier_param(probe, name, value)
        from saelstm.numerics import sparse_cce_loss

        p, _ = lstm_forward(probe, seq)
        return sparse_cce_loss(p, labels)[0]

    analytic = dict(
        [(f"cell0.{k}", v) for k, v in grads.cells[0].items()]
        + [("head.w", grads.head_w), ("head.b", grads.head_b)]
    )
    for name, arr in classifier_params(clf):
        numeric = central_diff_grad(lambda v, n=name: loss_with(n, v), arr)
        assert_grad_close(analytic[name], numeric)


@pytest.mark.parametrize("seed", range(3))
def test_bptt_input_gradient_matches_finite_differences(seed):
    # dx drives encoder fine-tuning, so it gets its own check
    rng = np.random.default_rng(seed + 60)
    clf = small_classifier(seed=seed)
    seq = rng.normal(size=(2, 3, 3))
    labels = np.array([1, 2])
    _, fc = lstm_forward(clf, seq)
    grads = lstm_backward(clf, fc, labels)

    def loss_of_seq(s):
        from saelstm.numerics import sparse_cce_loss

        p, _ = lstm_forward(clf, s)
        return sparse_cce_loss(p, labels)[0]

    numeric = central_diff_grad(loss_of_seq, seq)
    assert_grad_close(grads.dx, numeric)


def test_bptt_depth2_matches_finite_differences():
    rng = np.random.default_rng(77)
    clf = small_classifier(seed=13, depth=2)
    seq = rng.normal(size=(2, 2, 3))
    labels = np.array([0, 2])
    _, fc = lstm_forward(clf, seq)
    grads = lstm_backward(clf, fc, labels)

    def loss_with(layer, name, value):
        probe = small_classifier(seed=13, depth=2)
        if layer is None:
            set_classifier_param(probe, name, value)
        else:
            probe.cells[layer].set_parameter(name, value)
        from saelstm.numerics import sparse_cce_loss

        p, _ = lstm_forward(probe, seq)
        return sparse_cce_loss(p, labels)[0]

    for layer in (0, 1):
        for name, arr in clf.cells[layer].parameter_items():
            numeric = central_diff_grad(
                lambda v, l=layer, n=name: loss_with(l, n, v), arr
            )
            assert_grad_close(grads.cells[layer][name], numeric)


def test_saturated_one_hot_probability_gives_near_zero_gradients():
    clf = small_classifier(seed=2)
    clf.head.weights = np.zeros_like(clf.head.weights)
    clf.head.bias = np.array([60.0, -60.0, -60.0])
    x = np.random.default_rng(4).normal(size=(1, 1, 3))
    probs, fc = lstm_forward(clf, x)
    assert probs[0, 0] == 1.0
    grads = lstm_backward(clf, fc, np.array([0]))
    for arr in grads.flat():
        assert np.all(np.abs(arr) < 1e-9)


def test_backward_rejects_mismatched_cache():
    clf_a = small_classifier(seed=1)
    clf_b = small_classifier(seed=1, units=5)
    _, fc = lstm_forward(clf_a, np.ones((1, 1, 3)))
    with pytest.raises(ConsistencyError):
        lstm_backward(clf_b, fc, np.array([0]))


def test_backward_rejects_wrong_label_count():
    clf = small_classifier(seed=1)
    _, fc = lstm_forward(clf, np.ones((2, 1, 3)))
    with pytest.raises(ConsistencyError):
        lstm_backward(clf, fc, np.array([0, 1, 2]))


# ------------------------------------------------------------------- building


def test_build_matches_expected_param_counts():
    clf = build_classifier()
    per_layer, total = count_params([clf.cells[0], clf.head])
    assert per_layer == [122304, 507]
    assert total == 122811
    assert clf.param_count == 122811


def test_build_tiny_hand_counts():
    clf = build_classifier(input_dim=1, units=1, classes=2, seed=0)
    assert clf.cells[0].param_count == 12
    assert clf.head.param_count == 4
    assert clf.param_count == 16


def test_build_deterministic():
    a, b = build_classifier(seed=3), build_classifier(seed=3)
    for (n1, p1), (n2, p2) in zip(classifier_params(a), classifier_params(b)):
        assert n1 == n2 and np.array_equal(p1, p2)


def test_forget_bias_initialized_to_one():
    clf = build_classifier(seed=0)
    assert np.all(clf.cells[0].b["f"] == 1.0)
    for gate in ("i", "c", "o"):
        assert np.all(clf.cells[0].b[gate] == 0.0)


def test_build_rejects_bad_dims():
    with pytest.raises(DomainError):
        build_classifier(units=0)


# ------------------------------------------------------------------- training


def clustered_data(n_per_class=20, seed=0, spread=0.05):
    rng = np.random.default_rng(seed)
    centers = np.array(
        [[0.2] * 13, [0.5] * 13, [0.8] * 13]
    )
    xs, ys = [], []
    for c in range(3):
        xs.append(centers[c] + rng.normal(scale=spread, size=(n_per_class, 13)))
        ys.append(np.full(n_per_class, c))
    return np.clip(np.concatenate(xs), 0, 1), np.concatenate(ys)


def test_overfit_oracle_three_separable_clusters():
    features, labels = clustered_data(n_per_class=20, seed=1)
    clf = build_classifier(seed=2)
    train_classifier(clf, features, labels, LSTMTrainConfig(epochs=200, seed=3))
    pred, _ = predict(clf, features)
    assert np.mean(pred == labels) == 1.0


def test_zero_epochs_is_noop():
    clf = build_classifier(seed=4)
    before = [(n, p.copy()) for n, p in classifier_params(clf)]
    history = train_classifier(
        clf, np.zeros((4, 13)), np.zeros(4, dtype=int), LSTMTrainConfig(epochs=0)
    )
    assert history.epochs_completed == 0
    for (_, old), (_, new) in zip(before, classifier_params(clf)):
        assert np.array_equal(old, new)


def test_training_deterministic():
    features, labels = clustered_data(n_per_class=10, seed=5)
    cfg = LSTMTrainConfig(epochs=3, seed=6)
    a, b = build_classifier(seed=7), build_classifier(seed=7)
    ha = train_classifier(a, features, labels, cfg)
    hb = train_classifier(b, features, labels, cfg)
    assert ha.losses == hb.losses
    for (n1, p1), (n2, p2) in zip(classifier_params(a), classifier_params(b)):
        assert np.array_equal(p1, p2)


def test_loss_decreases_over_first_five_full_batch_steps():
    wins = 0
    for seed in range(10):
        features, labels = clustered_data(n_per_class=8, seed=seed + 30, spread=0.08)
        clf = build_classifier(seed=seed)
        history = train_classifier(
            clf,
            features,
            labels,
            LSTMTrainConfig(epochs=5, batch_size=features.shape[0], seed=seed),
        )
        if np.all(np.diff(history.losses) < 0):
            wins += 1
    assert wins >= 9


def test_nan_loss_raises_with_location():
    clf = build_classifier(seed=0)
    clf.head.weights[0, 0] = np.nan
    with pytest.raises(NumericError, match="epoch 1, batch 1"):
        train_classifier(
            clf, np.zeros((4, 13)), np.zeros(4, dtype=int), LSTMTrainConfig(epochs=1)
        )


def test_fine_tune_encoder_updates_encoder_weights():
    features, labels = clustered_data(n_per_class=8, seed=9)
    sae_model = build_sae(seed=10)
    frozen = [l.weights.copy() for l in sae_model.encoder]
    clf = build_classifier(seed=11)
    train_classifier(
        clf,
        features,
        labels,
        LSTMTrainConfig(epochs=2, seed=12, fine_tune_encoder=True),
        encoder=sae_model,
    )
    assert any(
        not np.array_equal(old, layer.weights)
        for old, layer in zip(frozen, sae_model.encoder)
    )
    # decoder stays untouched: only the encoder feeds the classifier
    rebuilt = build_sae(seed=10)
    for trained, fresh in zip(sae_model.decoder, rebuilt.decoder):
        assert np.array_equal(trained.weights, fresh.weights)


def test_fine_tune_requires_encoder():
    with pytest.raises(DomainError):
        train_classifier(
            build_classifier(seed=0),
            np.zeros((4, 13)),
            np.zeros(4, dtype=int),
            LSTMTrainConfig(epochs=1, fine_tune_encoder=True),
        )


def test_fine_tune_gradient_chain_matches_finite_differences():
    # the dx -> dense_backward chain used by the training loop, checked
    # end to end against numeric differentiation of the composite loss
    from saelstm.numerics import sparse_cce_loss

    rng = np.random.default_rng(13)
    sae_model = build_sae(seed=14)
    clf = build_classifier(seed=15)
    x = rng.uniform(size=(2, 13))
    labels = np.array([0, 2])

    acts = [x]
    for layer in sae_model.encoder:
        acts.append(dense_forward(layer, acts[-1]))
    _, fc = lstm_forward(clf, acts[-1][:, None, :])
    grads = lstm_backward(clf, fc, labels)
    upstream = grads.dx[:, 0, :]
    analytic = {}
    for li in reversed(range(3)):
        upstream, gw, gb = dense_backward(sae_model.encoder[li], acts[li], upstream)
        analytic[li] = gw

    def loss_with_enc_weights(li, value):
        probe = build_sae(seed=14)
        probe.layers[li].weights = value
        p, _ = lstm_forward(clf, encode(probe, x)[:, None, :])
        return sparse_cce_loss(p, labels)[0]

    for li in range(3):
        numeric = central_diff_grad(
            lambda v, l=li: loss_with_enc_weights(l, v), sae_model.encoder[li].weights
        )
        assert_grad_close(analytic[li], numeric)


# ------------------------------------------------------------------ prediction


def test_predict_argmax():
    clf = LSTMClassifier(
        cells=[zero_cell(input_dim=13, units=4)],
        head=DenseLayer(
            weights=np.zeros((3, 4)),
            bias=np.log(np.array([0.2, 0.5, 0.3])),
            activation="softmax",
        ),
    )
    cls, probs = predict(clf, np.zeros(13))
    assert cls == 1
    np.testing.assert_allclose(probs, [0.2, 0.5, 0.3], atol=1e-15)


def test_predict_tie_breaks_to_lowest_index():
    clf = LSTMClassifier(
        cells=[zero_cell(input_dim=13, units=4)],
        head=DenseLayer(
            weights=np.zeros((3, 4)),
            bias=np.array([0.0, 0.0, -50.0]),
            activation="softmax",
        ),
    )
    cls, probs = predict(clf, np.zeros(13))
    assert probs[0] == probs[1]
    assert cls == 0


def test_predict_agrees_with_forward_argmax():
    clf = build_classifier(seed=20)
    rng = np.random.default_rng(21)
    table = rng.uniform(size=(16, 13))
    classes, probs = predict(clf, table)
    ref_probs, _ = lstm_forward(clf, table[:, None, :])
    assert np.array_equal(classes, np.argmax(ref_probs, axis=1))
    np.testing.assert_allclose(probs, ref_probs, atol=0)


def test_logit_scaling_never_changes_predicted_class():
    clf = build_classifier(seed=22)
    rng = np.random.default_rng(23)
    table = rng.uniform(size=(32, 13))
    base, _ = predict(clf, table)
    for scale in (0.1, 3.0, 40.0):
        scaled = LSTMClassifier(
            cells=clf.cells,
            head=DenseLayer(
                weights=clf.head.weights * scale,
                bias=clf.head.bias * scale,
                activation="softmax",
            ),
        )
        got, _ = predict(scaled, table)
        assert np.array_equal(got, base)
