"""End-to-end training scenarios on the synthetic corpus. Run with `pytest -m slow`.

Every comparison is on the median over three seeds.
"""
import math
import statistics

import pytest

from fedsim.metrics import first_crossing
from fedsim.runner import build_config, run_experiment

pytestmark = pytest.mark.slow

ROUNDS = 100
TARGET = 0.8


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    cache = {}

    def _run(name, corruption=None, partition=None):
        if name not in cache:
            raw = {
                "experiment_id": name,
                "dataset": {"kind": "synthetic", "synthetic": {"n_classes": 4, "n_speakers": 20, "clips_per_speaker_per_class": 5}},
                "partition": partition or {"method": "by_key"},
                "corruption": corruption or {},
                "arch": {"kind": "mlp", "hidden": 32},
                "fed": {"rounds": ROUNDS, "sample_ratio": 0.5, "client_lr": 0.1, "batch_size": 16},
                "n_seeds": 3,
                "targets": [TARGET],
                "output_dir": str(tmp_path_factory.mktemp(name)),
            }
            cache[name] = run_experiment(build_config(raw))
        return cache[name]

    return _run


def _final_accuracy(result):
    return statistics.median(stream[-1].test_accuracy for stream in result.streams)


def _mean_accuracy(result):
    return statistics.median(statistics.fmean(r.test_accuracy for r in stream) for stream in result.streams)


def _rounds(result, target=TARGET):
    def one(stream):
        hit = first_crossing([r.test_accuracy for r in stream], target)
        return math.inf if hit is None else hit

    return statistics.median(one(stream) for stream in result.streams)


def _labels(ratio):
    return {"label_errors": {"error_ratio": ratio, "error_sparsity": 0.4}}


def test_clean_run_is_accurate(run):
    clean = run("clean")
    assert len(clean.streams) == 3
    assert all(len(stream) == ROUNDS for stream in clean.streams)
    assert _final_accuracy(clean) >= 0.9
    assert _rounds(clean) < ROUNDS


def test_lower_snr_hurts(run):
    clean = run("clean")
    high = run("snr30", corruption={"noise": {"snr_db": 30}})
    low = run("snr10", corruption={"noise": {"snr_db": 10}})
    assert _final_accuracy(low) < _final_accuracy(clean)
    assert _rounds(low) > _rounds(clean)
    assert _final_accuracy(low) <= _final_accuracy(high) <= _final_accuracy(clean)


def test_more_label_errors_hurt(run):
    results = [run(f"errors{ratio}", corruption=_labels(ratio)) for ratio in (0.1, 0.3, 0.5)]
    accuracies = [_final_accuracy(r) for r in results]
    rounds = [_rounds(r) for r in results]
    assert accuracies[0] >= accuracies[1] >= accuracies[2]
    assert rounds[0] <= rounds[1] <= rounds[2]
    assert accuracies[2] < _final_accuracy(run("clean"))


def test_combined_corruption_is_no_better_than_either(run):
    noise = {"noise": {"snr_db": 20}}
    only_noise = run("snr20", corruption=noise)
    only_errors = run("errors0.3", corruption=_labels(0.3))
    both = run("snr20_errors0.3", corruption={**noise, **_labels(0.3)})
    assert _final_accuracy(both) <= min(_final_accuracy(only_noise), _final_accuracy(only_errors))
    assert _rounds(both) >= max(_rounds(only_noise), _rounds(only_errors))


def test_skewed_partition_scores_lower(run):
    def partition(alpha):
        return {"method": "dirichlet", "alpha": alpha, "n_clients": 10, "test_fraction": 0.2}

    mild = run("alpha0.5", partition=partition(0.5))
    skewed = run("alpha0.1", partition=partition(0.1))
    assert _mean_accuracy(skewed) < _mean_accuracy(mild)
    assert _rounds(skewed, 0.7) >= _rounds(mild, 0.7)
