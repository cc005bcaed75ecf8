import numpy as np
import numpy.testing as npt
import pytest

from fedsim import nn
from fedsim.errors import CheckpointError, EmptyShard, LayoutMismatch, ModelError, ShapeMismatch
from fedsim.model import (
    Batch,
    ModelArch,
    ParamVector,
    forward,
    init_params,
    load_params,
    local_train,
    local_train_stats,
    loss_and_grad,
    predict,
    save_params,
)

TOY_MLP = ModelArch(kind="mlp", input_dims=6, n_classes=3, hidden=5)
TOY_CONV = ModelArch(kind="conv_gru", input_dims=8, n_classes=3, hidden=4, channels=(2, 3), gru_width=4)


def _shard(arch, n, frames, seed=0):
    rng = np.random.default_rng(seed)
    return [(rng.standard_normal((frames, arch.input_dims)), int(rng.integers(arch.n_classes))) for _ in range(n)]


def _numeric_check(arch, frames):
    params = init_params(arch, seed=7)
    # non-zero biases so their gradients are exercised too
    params.values += np.random.default_rng(3).normal(0, 0.05, params.values.size)
    batch = Batch.from_examples(_shard(arch, 3, frames, seed=1))
    _, grad = loss_and_grad(params, arch, batch)
    eps = 1e-5
    for i in range(len(params)):
        plus, minus = params.copy(), params.copy()
        plus.values[i] += eps
        minus.values[i] -= eps
        lp, _ = loss_and_grad(plus, arch, batch)
        lm, _ = loss_and_grad(minus, arch, batch)
        numeric = (lp - lm) / (2 * eps)
        analytic = grad.values[i]
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)
        assert rel < 1e-4, f"coordinate {i}: analytic {analytic}, numeric {numeric}"


def test_mlp_gradient_matches_finite_differences():
    _numeric_check(TOY_MLP, frames=4)


def test_conv_gru_gradient_matches_finite_differences():
    assert len(init_params(TOY_CONV)) == 244
    _numeric_check(TOY_CONV, frames=8)


def test_parameter_count_and_layout():
    params = init_params(ModelArch(kind="mlp", input_dims=128, hidden=64, n_classes=4))
    assert len(params) == 128 * 64 + 64 + 64 * 4 + 4 == 8516
    assert [s.name for s in params.layout] == ["dense1.W", "dense1.b", "dense2.W", "dense2.b"]
    assert not params.tensor("dense1.b").any()

    conv = init_params(TOY_CONV)
    assert conv.tensor("gru.Wzx").shape == (3 * 2, 8)
    assert conv.tensor("conv2.W").shape == (3, 2, 3, 3)


def test_init_is_seeded():
    a, b, c = init_params(TOY_CONV, 1), init_params(TOY_CONV, 1), init_params(TOY_CONV, 2)
    npt.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_forward_shapes_and_errors():
    params = init_params(TOY_CONV)
    logits = forward(params, TOY_CONV, Batch.from_examples(_shard(TOY_CONV, 5, 9)))
    assert logits.shape == (5, 3)
    assert predict(params, TOY_CONV, [x for x, _ in _shard(TOY_CONV, 5, 9)], chunk=2).shape == (5, 3)

    with pytest.raises(ShapeMismatch):
        forward(params, TOY_CONV, Batch([np.zeros((8, 7))], [0]))
    with pytest.raises(ShapeMismatch):
        forward(params, TOY_CONV, Batch([np.zeros((2, 8))], [0]))
    with pytest.raises(ShapeMismatch):
        forward(params, TOY_CONV, Batch([np.zeros((8, 8))], [3]))
    with pytest.raises(ShapeMismatch):
        Batch([], [])
    with pytest.raises(ModelError):
        ModelArch(kind="transformer").validate()


def test_uniform_logits_give_log_k_loss():
    params = init_params(TOY_MLP).zeros_like()
    loss, _ = loss_and_grad(params, TOY_MLP, Batch.from_examples(_shard(TOY_MLP, 4, 3)))
    assert loss == pytest.approx(np.log(3), abs=1e-12)


def test_duplicated_batch_keeps_loss_and_gradient():
    params = init_params(TOY_CONV, seed=2)
    shard = _shard(TOY_CONV, 3, 8, seed=6)
    loss, grad = loss_and_grad(params, TOY_CONV, Batch.from_examples(shard))
    loss2, grad2 = loss_and_grad(params, TOY_CONV, Batch.from_examples(shard + shard))
    assert loss2 == pytest.approx(loss, rel=1e-12)
    npt.assert_allclose(grad2.values, grad.values, rtol=1e-10, atol=1e-14)


def test_batch_order_does_not_matter():
    params = init_params(TOY_MLP, seed=2)
    shard = _shard(TOY_MLP, 7, 4, seed=8)
    loss, grad = loss_and_grad(params, TOY_MLP, Batch.from_examples(shard))
    permuted = [shard[i] for i in np.random.default_rng(0).permutation(7)]
    loss_p, grad_p = loss_and_grad(params, TOY_MLP, Batch.from_examples(permuted))
    assert loss_p == pytest.approx(loss, rel=1e-12)
    npt.assert_allclose(grad_p.values, grad.values, rtol=1e-10, atol=1e-14)


def test_softmax_is_stable_under_constant_offset():
    logits = np.array([[1.0, -2.0, 0.5], [3.0, 3.0, -1.0]])
    targets = np.array([0, 2])
    loss, dlogits = nn.softmax_cross_entropy(logits, targets)
    for offset in (1e3, -1e3, 1e6):
        shifted_loss, shifted_grad = nn.softmax_cross_entropy(logits + offset, targets)
        assert np.isfinite(shifted_loss)
        assert shifted_loss == pytest.approx(loss, rel=1e-9)
        npt.assert_allclose(shifted_grad, dlogits, atol=1e-9)


def test_full_size_conv_gru_forward():
    arch = ModelArch(kind="conv_gru", input_dims=128, n_classes=4, hidden=64, channels=(16, 32))
    x = np.random.default_rng(0).standard_normal((94, 128))
    logits = forward(init_params(arch, seed=0), arch, Batch([x], [0]))
    assert logits.shape == (1, 4)
    assert np.isfinite(logits).all()


@pytest.mark.parametrize("arch, frames", [(TOY_MLP, 3), (TOY_CONV, 8)])
def test_zero_input_or_zero_weights_give_zero_logits(arch, frames):
    params = init_params(arch, seed=4)
    zeros = Batch([np.zeros((frames, arch.input_dims))] * 2, [0, 1])
    npt.assert_array_equal(forward(params, arch, zeros), 0.0)
    inputs = Batch.from_examples(_shard(arch, 2, frames))
    npt.assert_array_equal(forward(params.zeros_like(), arch, inputs), 0.0)


def test_single_example_step_is_plain_sgd():
    params = init_params(TOY_CONV, seed=1)
    shard = _shard(TOY_CONV, 1, 8, seed=3)
    _, grad = loss_and_grad(params, TOY_CONV, Batch.from_examples(shard))
    stepped = local_train(params, TOY_CONV, shard, lr=0.05, epochs=1, batch_size=16, seed=0)
    npt.assert_allclose(stepped.values, params.values - 0.05 * grad.values, rtol=1e-12, atol=1e-15)


def test_epoch_is_sequence_of_minibatch_steps():
    shard = _shard(TOY_MLP, 10, 3, seed=5)
    params = init_params(TOY_MLP, seed=0)
    trained = local_train(params, TOY_MLP, shard, lr=0.1, epochs=1, batch_size=4, seed=17)

    expected = params.copy()
    order = np.random.default_rng(17).permutation(10)
    for start in (0, 4, 8):
        batch = Batch.from_examples([shard[i] for i in order[start : start + 4]])
        _, grad = loss_and_grad(expected, TOY_MLP, batch)
        expected = expected.with_values(expected.values - 0.1 * grad.values)
    npt.assert_allclose(trained.values, expected.values, rtol=1e-12, atol=1e-15)


def test_local_training_lowers_loss_and_respects_lr_zero():
    shard = _shard(TOY_MLP, 40, 5, seed=2)
    params = init_params(TOY_MLP, seed=0)
    batch = Batch.from_examples(shard)
    before, _ = loss_and_grad(params, TOY_MLP, batch)
    trained, mean_loss, steps = local_train_stats(params, TOY_MLP, shard, lr=0.2, epochs=20, batch_size=8, seed=1)
    after, _ = loss_and_grad(trained, TOY_MLP, batch)
    assert after < before
    assert steps == 20 * 5
    assert np.isfinite(mean_loss)

    frozen = local_train(params, TOY_MLP, shard, lr=0.0, epochs=3, seed=1)
    npt.assert_array_equal(frozen.values, params.values)
    assert frozen is not params


def test_local_training_is_deterministic_and_does_not_mutate():
    shard = _shard(TOY_CONV, 6, 8, seed=4)
    params = init_params(TOY_CONV, seed=0)
    snapshot = params.values.copy()
    a = local_train(params, TOY_CONV, shard, lr=0.05, batch_size=4, seed=9)
    b = local_train(params, TOY_CONV, shard, lr=0.05, batch_size=4, seed=9)
    npt.assert_array_equal(a.values, b.values)
    npt.assert_array_equal(params.values, snapshot)


def test_local_training_errors():
    params = init_params(TOY_MLP)
    with pytest.raises(EmptyShard):
        local_train(params, TOY_MLP, [], lr=0.1)
    with pytest.raises(ModelError):
        local_train(params, TOY_MLP, _shard(TOY_MLP, 2, 3), lr=-1.0)


def test_checkpoint_round_trip(tmp_path):
    params = init_params(TOY_CONV, seed=11)
    path = tmp_path / "global.params"
    save_params(path, params)
    loaded = load_params(path)
    assert loaded.layout == params.layout
    npt.assert_array_equal(loaded.values, params.values)


def test_checkpoint_rejects_bad_files(tmp_path):
    short = tmp_path / "short.params"
    short.write_text("tensor=w shape=2x2 offset=0\n1.0\n2.0\n")
    with pytest.raises(CheckpointError):
        load_params(short)

    junk = tmp_path / "junk.params"
    junk.write_text("tensor=w shape=1 offset=0\nabc\n")
    with pytest.raises(CheckpointError):
        load_params(junk)


def test_layout_mismatch():
    a = ParamVector.from_shapes([("w", (2,))])
    b = ParamVector.from_shapes([("w", (3,))])
    with pytest.raises(LayoutMismatch):
        a.check_layout(b)
    with pytest.raises(LayoutMismatch):
        ParamVector(np.zeros(3), a.layout)
