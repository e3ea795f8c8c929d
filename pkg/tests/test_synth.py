import json

import numpy as np
import pytest

from genval import (
    ExperimentSpec,
    batch_match,
    component_means,
    load_embeddings,
    make_ra2_experiment,
    sample_mixture,
    simulate_generated,
)
from genval.errors import ConfigError


def test_experiment_spec_validation():
    ExperimentSpec().validate()
    for bad in (
        dict(dim=0),
        dict(n_per_split=0),
        dict(mixture_components=0),
        dict(component_spread=0.0),
        dict(component_spread=float("inf")),
        dict(noise_sigma=-0.1),
        dict(m_generated=0),
    ):
        with pytest.raises(ConfigError):
            ExperimentSpec(**bad).validate()


def test_component_means_respect_separation():
    spec = ExperimentSpec(dim=8, mixture_components=6, component_spread=5.0, seed=3)
    means = component_means(spec)
    assert means.shape == (6, 8)
    for i in range(6):
        for j in range(i + 1, 6):
            assert np.linalg.norm(means[i] - means[j]) >= 5.0


def test_component_means_terminate_when_separation_is_hard():
    # cramming 8 well-separated means into 2 dimensions forces the
    # proposal scale to grow; this must still finish and satisfy the floor
    spec = ExperimentSpec(dim=2, mixture_components=8, component_spread=6.0, seed=1)
    means = component_means(spec)
    d = np.linalg.norm(means[:, None] - means[None, :], axis=-1)
    assert d[np.triu_indices(8, 1)].min() >= 6.0


def test_single_draw():
    spec = ExperimentSpec(dim=16, seed=5)
    m = sample_mixture(spec, 1)
    assert (m.count, m.dim) == (1, 16)
    assert np.isfinite(m.data).all()


def test_sampling_is_deterministic():
    spec = ExperimentSpec(seed=11)
    a = sample_mixture(spec, 50)
    b = sample_mixture(spec, 50)
    assert a == b
    assert sample_mixture(spec, 50, stream=1) != a
    assert sample_mixture(ExperimentSpec(seed=12), 50) != a


def test_law_of_large_numbers_single_component():
    spec = ExperimentSpec(dim=32, mixture_components=1, seed=21)
    mu = component_means(spec)[0]
    draws = sample_mixture(spec, 10_000)
    sample_mean = draws.data.astype(np.float64).mean(axis=0)
    # unit component variance: the mean of 10k draws sits within 5 sigma/sqrt(n)
    assert np.all(np.abs(sample_mean - mu) <= 5.0 / np.sqrt(10_000))


def test_zero_noise_generator_memorizes_exactly():
    spec = ExperimentSpec(dim=6, n_per_split=40, noise_sigma=0.0, m_generated=25, seed=2)
    train = sample_mixture(spec, 40)
    gen = simulate_generated(train, spec)
    assert gen.count == 25
    train_rows = {r.tobytes() for r in train.data}
    for row in gen.data:
        assert row.tobytes() in train_rows
    # composition with exact search: every top-1 distance is zero
    t = batch_match(train, gen, k=1)
    assert np.all(t.distances[:, 0] == 0.0)


def test_generator_noise_scale(rng):
    spec = ExperimentSpec(dim=64, n_per_split=50, noise_sigma=0.3, m_generated=400, seed=8)
    train = sample_mixture(spec, 50)
    gen = simulate_generated(train, spec)
    d = batch_match(train, gen, k=1).distances[:, 0]
    # nearest-neighbour distance concentrates around sigma*sqrt(dim) = 2.4
    assert 1.5 < np.median(d) < 3.5


def test_experiment_directory_contents(tmp_path):
    spec = ExperimentSpec(dim=8, n_per_split=20, m_generated=15, seed=4)
    files = make_ra2_experiment(spec, tmp_path / "exp")
    v1 = load_embeddings(files["x_v1"])
    v2 = load_embeddings(files["x_v2"])
    train = load_embeddings(files["x_train"])
    hat = load_embeddings(files["x_hat"])
    assert v1.count == v2.count == 20
    assert train.count == 40
    assert hat.count == 15
    # the matching corpus is the two splits stacked, split-1 rows first
    np.testing.assert_array_equal(train.data[:20], v1.data)
    np.testing.assert_array_equal(train.data[20:], v2.data)

    partition = json.loads(files["partition"].read_text())
    assert partition == {"v1": list(range(20)), "v2": list(range(20, 40))}

    manifest = json.loads(files["manifest"].read_text())
    assert manifest["counts"] == {"x_v1": 20, "x_v2": 20, "x_train": 40, "x_hat": 15}
    assert manifest["spec"]["seed"] == 4


def test_splits_share_no_row(tmp_path):
    files = make_ra2_experiment(ExperimentSpec(seed=42), tmp_path / "exp")
    v1 = load_embeddings(files["x_v1"])
    v2 = load_embeddings(files["x_v2"])
    rows1 = {r.tobytes() for r in v1.data}
    assert all(r.tobytes() not in rows1 for r in v2.data)


def test_rerun_is_byte_identical(tmp_path):
    spec = ExperimentSpec(dim=8, n_per_split=12, m_generated=9, seed=33)
    a = make_ra2_experiment(spec, tmp_path / "a")
    b = make_ra2_experiment(spec, tmp_path / "b")
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes(), name
