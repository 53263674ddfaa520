import numpy as np
import pytest

from shared.errors import InvalidArgumentError, InvalidConfigurationError, PartitionFailureError
from simulator.partitioner import Partition, PartitionMode, PartitionSpec, apply, heterogeneity_report, split
from simulator.tasks import Dataset


def _labelled(n, num_classes, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    return Dataset(rng.standard_normal((n, 3)), labels, labels=labels, num_classes=num_classes)


def _dirichlet(alpha, num_clients=4, seed=0, **kwargs):
    return PartitionSpec(mode=PartitionMode.DIRICHLET, alpha=alpha, num_clients=num_clients, seed=seed, **kwargs)


def test_iid_split_is_balanced():
    partition = split(_labelled(100, 2), PartitionSpec(num_clients=2, seed=3))
    assert partition.sizes == [50, 50]
    assert partition.attempts == 1


@pytest.mark.parametrize(
    "spec",
    [PartitionSpec(num_clients=7, seed=1), _dirichlet(0.5, num_clients=5, seed=1)],
    ids=["iid", "dirichlet"],
)
def test_every_example_lands_in_exactly_one_shard(spec):
    partition = split(_labelled(503, 4), spec)
    merged = np.concatenate(partition.indices)
    np.testing.assert_array_equal(np.sort(merged), np.arange(503))
    assert all(size > 0 for size in partition.sizes)
    assert all(np.all(np.diff(idx) > 0) for idx in partition.indices)


def test_split_is_deterministic_per_seed():
    data = _labelled(400, 4)
    a, b, c = split(data, _dirichlet(0.3, seed=9)), split(data, _dirichlet(0.3, seed=9)), split(data, _dirichlet(0.3, seed=10))
    assert all(np.array_equal(x, y) for x, y in zip(a.indices, b.indices))
    assert not all(np.array_equal(x, y) for x, y in zip(a.indices, c.indices))


def test_label_skew_is_non_increasing_in_alpha():
    data = _labelled(3000, 10)

    def mean_tv(alpha):
        reports = [heterogeneity_report(apply(data, _dirichlet(alpha, num_clients=10, seed=s))) for s in range(20)]
        return np.mean([r.mean_tv for r in reports])

    skew = [mean_tv(alpha) for alpha in (0.1, 0.25, 0.5, 1.0, 10.0)]
    assert all(a >= b for a, b in zip(skew, skew[1:]))
    assert skew[0] > skew[-1]


def test_iid_split_has_low_skew():
    report = heterogeneity_report(apply(_labelled(4000, 4), PartitionSpec(num_clients=4, seed=2)))
    assert report.mean_tv < 0.05
    assert sum(report.global_histogram) == 4000


def test_one_class_per_client_reaches_maximal_distance():
    C = 5
    shards = [Dataset(np.zeros((10, 2)), np.full(10, c), labels=np.full(10, c), num_classes=C) for c in range(C)]
    report = heterogeneity_report(shards)
    np.testing.assert_allclose(report.tv_distances, 1 - 1 / C)
    assert report.histograms[2] == [0, 0, 10, 0, 0]
    assert "| 2 | 10 |" in report.to_markdown()


def test_exhausted_retries_raise_partition_failure():
    with pytest.raises(PartitionFailureError):
        split(_labelled(20, 2), _dirichlet(0.01, num_clients=8, max_retries=2))


def test_dirichlet_needs_labels_and_alpha():
    unlabelled = Dataset(np.zeros((10, 2)), np.zeros((10, 1)))
    with pytest.raises(InvalidConfigurationError):
        split(unlabelled, _dirichlet(1.0, num_clients=2))
    with pytest.raises(ValueError):
        PartitionSpec(mode=PartitionMode.DIRICHLET, num_clients=2)


def test_more_clients_than_examples_is_rejected():
    with pytest.raises(InvalidArgumentError):
        split(_labelled(3, 2), PartitionSpec(num_clients=4))


def test_partition_json_replays_exactly():
    data = _labelled(300, 3)
    partition = split(data, _dirichlet(0.5, num_clients=3, seed=4))
    restored = Partition.from_json(partition.to_json())
    assert restored.spec == partition.spec
    assert restored.attempts == partition.attempts
    for a, b in zip(restored.shards(data), partition.shards(data)):
        np.testing.assert_array_equal(a.labels, b.labels)
