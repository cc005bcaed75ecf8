from collections import Counter

import numpy as np
import numpy.testing as npt
import pytest

from fedsim.errors import EmptyTestSet, FederationError, LayoutMismatch
from fedsim.fl_core import (
    CENTRALIZED_CLIENT,
    FedConfig,
    RoundRecord,
    ServerState,
    client_seed,
    evaluate,
    fedavg_aggregate,
    fedopt_step,
    run_centralized,
    run_federation,
    sample_clients,
    sampled_count,
)
from fedsim.model import ModelArch, ParamVector, init_params, local_train
from fedsim.partition import FederatedDataset
from fedsim.utils import derive_seed, make_rng

ARCH = ModelArch(kind="mlp", input_dims=6, n_classes=3, hidden=8)


def _examples(n, seed):
    rng = np.random.default_rng(seed)
    centers = np.eye(3, 6) * 3.0
    out = []
    for i in range(n):
        y = i % 3
        out.append((centers[y] + rng.standard_normal((4, 6)), y))
    return out


def _dataset(n_clients=5, per_client=12):
    clients = {f"client_{i:03d}": _examples(per_client, seed=i) for i in range(n_clients)}
    return FederatedDataset(clients, _examples(30, seed=99), 3)


def _vec(values):
    return ParamVector.from_shapes([("w", (len(values),))], np.array(values, dtype=np.float64))


def test_sampled_count():
    assert sampled_count(2112, 0.05) == 106
    assert sampled_count(2112, 0.2) == 422
    assert sampled_count(2112, 0.2, override=424) == 424
    assert sampled_count(10, 1.0) == 10
    assert sampled_count(10, 0.01) == 1
    assert sampled_count(10, 0.25) == 3
    assert sampled_count(5, 0.5, override=9) == 5


def test_sample_clients_is_uniform_and_sorted():
    ids = [f"c{i:02d}" for i in range(20)]
    rounds = 10_000
    counts = Counter()
    for r in range(rounds):
        chosen = sample_clients(ids, 0.5, make_rng(0, r))
        assert len(chosen) == len(set(chosen)) == 10
        assert chosen == sorted(chosen)
        counts.update(chosen)
    freq = np.array([counts[c] for c in ids]) / rounds
    sigma = np.sqrt(0.5 * 0.5 / rounds)
    assert np.max(np.abs(freq - 0.5)) <= 3 * sigma

    assert sample_clients(ids, 1.0, make_rng(0, 0)) == sorted(ids)
    with pytest.raises(FederationError):
        sample_clients([], 0.5, make_rng(0))


def test_consecutive_rounds_overlap_like_independent_draws():
    ids = [f"c{i:02d}" for i in range(20)]
    draws = [set(sample_clients(ids, 0.5, make_rng(1, r))) for r in range(10_000)]
    overlaps = np.array([len(a & b) for a, b in zip(draws, draws[1:])])
    # hypergeometric: mean m*m/n = 5, variance m*(m/n)*((n-m)/n)*((n-m)/(n-1)) = 25/19
    assert abs(overlaps.mean() - 5.0) < 0.05
    assert abs(overlaps.var() - 25 / 19) < 0.1


def test_fedavg_examples():
    npt.assert_allclose(fedavg_aggregate([(_vec([1.0, 2.0]), 1), (_vec([3.0, 4.0]), 3)]).values, [2.5, 3.5])
    npt.assert_allclose(fedavg_aggregate([(_vec([0.0]), 1), (_vec([10.0]), 1)]).values, [5.0])
    single = _vec([0.1, -7.3, 1e-9])
    npt.assert_array_equal(fedavg_aggregate([(single, 37)]).values, single.values)


def test_fedavg_matches_weighted_mean_and_ignores_order(rng):
    params = [_vec(rng.standard_normal(50)) for _ in range(7)]
    counts = [int(c) for c in rng.integers(1, 200, size=7)]
    expected = np.average(np.stack([p.values for p in params]), axis=0, weights=counts)
    updates = list(zip(params, counts))
    npt.assert_allclose(fedavg_aggregate(updates).values, expected, rtol=1e-12, atol=1e-12)
    shuffled = [updates[i] for i in rng.permutation(7)]
    npt.assert_allclose(fedavg_aggregate(shuffled).values, expected, rtol=1e-12, atol=1e-12)


def test_fedavg_of_identical_params_is_a_fixed_point(rng):
    params = _vec(rng.standard_normal(40))
    updates = [(params.copy(), int(n)) for n in (1, 7, 250, 3, 19)]
    npt.assert_allclose(fedavg_aggregate(updates).values, params.values, rtol=1e-14, atol=1e-15)


def test_fedavg_errors():
    with pytest.raises(FederationError):
        fedavg_aggregate([])
    with pytest.raises(FederationError):
        fedavg_aggregate([(_vec([1.0]), 0)])
    with pytest.raises(LayoutMismatch):
        fedavg_aggregate([(_vec([1.0]), 1), (_vec([1.0, 2.0]), 1)])


def test_fedopt_zero_delta_and_zero_lr():
    global_params = _vec([0.5, -1.0, 2.0])
    state = ServerState.fresh(global_params)
    same = fedopt_step(state, global_params.copy(), FedConfig(optimizer="fedopt", server_lr=0.01))
    npt.assert_array_equal(same.global_params.values, global_params.values)
    assert same.step_count == 1

    moved = _vec([3.0, 3.0, 3.0])
    frozen = fedopt_step(state, moved, FedConfig(optimizer="fedopt", server_lr=0.0))
    npt.assert_array_equal(frozen.global_params.values, global_params.values)


def test_fedopt_first_step_moves_by_server_lr_towards_clients():
    global_params = _vec([0.0, 0.0, 0.0])
    aggregated = _vec([0.3, -2.0, 1e-3])
    state = fedopt_step(ServerState.fresh(global_params), aggregated, FedConfig(optimizer="fedopt", server_lr=0.01))
    # bias-corrected first step is server_lr * sign(aggregated - global)
    npt.assert_allclose(state.global_params.values, [0.01, -0.01, 0.01], rtol=1e-4)
    g = global_params.values - aggregated.values
    npt.assert_allclose(state.adam_m.values, 0.1 * g)
    npt.assert_allclose(state.adam_v.values, 0.001 * g * g)
    # input state untouched
    assert not global_params.values.any()


def test_fedopt_accumulates_moments():
    cfg = FedConfig(optimizer="fedopt", server_lr=0.05)
    state = ServerState.fresh(_vec([0.0]))
    for _ in range(3):
        state = fedopt_step(state, _vec([state.global_params.values[0] + 1.0]), cfg)
    assert state.step_count == 3
    npt.assert_allclose(state.global_params.values, [0.15], rtol=1e-6)


def test_single_client_federation_matches_sequential_training():
    dataset = FederatedDataset({"solo": _examples(20, seed=1)}, _examples(9, seed=2), 3)
    cfg = FedConfig(rounds=3, sample_ratio=1.0, client_lr=0.1, batch_size=4, master_seed=5)
    result = run_federation(dataset, ARCH, cfg)

    params = init_params(ARCH, derive_seed(5, "init"))
    for r in range(3):
        params = local_train(params, ARCH, dataset.clients["solo"], 0.1, batch_size=4, seed=client_seed(5, r, "solo"))
    npt.assert_array_equal(result.params.values, params.values)


def test_federation_records_and_determinism(monkeypatch):
    dataset = _dataset()
    cfg = FedConfig(rounds=4, sample_ratio=0.6, client_lr=0.1, batch_size=4, master_seed=3)
    seen = []
    records, params = run_federation(dataset, ARCH, cfg, on_round=seen.append)
    assert [r.round for r in records] == [0, 1, 2, 3]
    assert seen == records
    for record in records:
        assert len(record.sampled_clients) == 3
        assert set(record.sampled_clients) <= set(dataset.client_ids)
        assert 0.0 <= record.test_accuracy <= 1.0
        assert np.isfinite(record.mean_train_loss)

    monkeypatch.setenv("FEDAUDIO_SIM_WORKERS", "4")
    again, params_again = run_federation(dataset, ARCH, cfg)
    assert [r.to_dict() for r in again] == [r.to_dict() for r in records]
    npt.assert_array_equal(params_again.values, params.values)

    other, _ = run_federation(dataset, ARCH, FedConfig(rounds=4, sample_ratio=0.6, master_seed=4))
    assert [r.sampled_clients for r in other] != [r.sampled_clients for r in records]


def test_fedopt_with_zero_server_lr_keeps_initial_params():
    dataset = _dataset(n_clients=3)
    initial = init_params(ARCH, seed=0)
    result = run_federation(dataset, ARCH, FedConfig(optimizer="fedopt", rounds=2, server_lr=0.0), initial=initial)
    npt.assert_array_equal(result.params.values, initial.values)


def test_federation_learns_separable_classes():
    dataset = _dataset()
    records, _ = run_federation(dataset, ARCH, FedConfig(rounds=20, client_lr=0.1, batch_size=4))
    assert records[-1].test_accuracy > 0.9


def test_centralized_baseline():
    dataset = _dataset(n_clients=3)
    records, params = run_centralized(dataset, ARCH, FedConfig(rounds=3, client_lr=0.1, batch_size=4))
    assert len(records) == 3
    assert all(r.sampled_clients == [CENTRALIZED_CLIENT] for r in records)
    acc, f1, loss = evaluate(params, ARCH, dataset.test_set, 3)
    assert acc == records[-1].test_accuracy and f1 == records[-1].test_macro_f1


def test_record_round_trip_and_errors():
    record = RoundRecord(2, ["a", "b"], 0.5, 0.75, 0.7, 0.9)
    assert RoundRecord.from_dict(record.to_dict()) == record

    with pytest.raises(EmptyTestSet):
        run_federation(FederatedDataset({"a": _examples(3, 0)}, [], 3), ARCH, FedConfig(rounds=1))
    with pytest.raises(EmptyTestSet):
        evaluate(init_params(ARCH), ARCH, [], 3)
    with pytest.raises(FederationError):
        FedConfig(sample_ratio=0).validate()
    with pytest.raises(FederationError):
        FedConfig(optimizer="sgd").validate()
