from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectralnet.affinity import AffinityBatch, AffinityConfig
from spectralnet.cluster import acc, kmeans
from spectralnet.data import DatasetSpec, generate
from spectralnet.errors import DimensionMismatch, RankDeficientBatch, ZeroDegree
from spectralnet.linalg import grassmann_sq
from spectralnet.nn import LayerSpec, Mlp, backward, forward
from spectralnet.oracle import laplacian_eigs
from spectralnet.trainer import (
    SpectralConfig,
    embed,
    ortho_error,
    orthonorm_backward,
    orthonorm_forward,
    orthonorm_step,
    orthonorm_weights,
    spectral_loss,
    train_spectralnet,
)


def batch_of(w):
    w = np.asarray(w, dtype=float)
    return AffinityBatch(w, w.sum(axis=1))


def random_affinity(r, m, sparsity=0.5):
    w = r.random((m, m)) * (r.random((m, m)) < sparsity)
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 0.0)
    w[np.arange(m), (np.arange(m) + 1) % m] += 0.1  # keep degrees positive
    w = 0.5 * (w + w.T)
    return batch_of(w)


def test_orthonorm_already_orthonormal():
    m = 4
    yt = np.sqrt(m) * np.eye(m)[:, :2]
    np.testing.assert_allclose(orthonorm_weights(yt), np.eye(2), atol=1e-15)


def test_orthonorm_hand_case():
    f = orthonorm_weights(np.array([[1.0], [1.0]]))
    np.testing.assert_allclose(f, [[1.0]], rtol=1e-15)
    y = np.array([[1.0], [1.0]]) @ f
    assert (y.T @ y / 2)[0, 0] == pytest.approx(1.0)


def test_orthonorm_zero_output():
    with pytest.raises(RankDeficientBatch):
        orthonorm_weights(np.zeros((5, 2)))


def test_orthonorm_step_installs_map(rng):
    model = Mlp.init(3, [LayerSpec(6, "tanh"), LayerSpec(2, "tanh")], rng)
    x = rng.standard_normal((40, 3))
    orthonorm_step(model, x)
    assert ortho_error(forward(model, x)[0]) < 1e-6


def test_loss_constant_map_is_zero(rng):
    w = random_affinity(rng, 6)
    assert spectral_loss(np.ones((6, 2)) * 3.0, w)[0] == 0.0


def test_loss_two_points():
    w = batch_of([[0.0, 1.0], [1.0, 0.0]])
    y = np.array([[0.0], [1.0]])
    assert spectral_loss(y, w, scaling="inverse_m_squared")[0] == pytest.approx(0.5, abs=1e-15)
    lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert (2 / 4) * np.trace(y.T @ lap @ y) == pytest.approx(0.5, abs=1e-15)


def test_loss_scaling_choice():
    w = batch_of([[0.0, 1.0], [1.0, 0.0]])
    y = np.array([[0.0], [1.0]])
    assert spectral_loss(y, w, scaling="inverse_m")[0] == pytest.approx(1.0)


def test_loss_dimension_check():
    with pytest.raises(DimensionMismatch):
        spectral_loss(np.ones((3, 1)), batch_of(np.zeros((2, 2))))


def test_normalized_loss_needs_degrees():
    w = batch_of([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(ZeroDegree):
        spectral_loss(np.ones((3, 1)), w, variant="normalized")


@given(st.integers(2, 30), st.integers(1, 4), st.sampled_from(["inverse_m", "inverse_m_squared"]), st.integers(0, 2**32 - 1))
def test_loss_equals_trace_form(m, k, scaling, seed):
    r = np.random.default_rng(seed)
    y = r.standard_normal((m, k))
    w = random_affinity(r, m)
    s = 1 / m if scaling == "inverse_m" else 1 / m**2
    trace = 2 * s * np.trace(y.T @ (np.diag(w.degrees) - w.w) @ y)
    assert spectral_loss(y, w, scaling=scaling)[0] == pytest.approx(trace, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("variant", ["unnormalized", "normalized"])
def test_loss_gradient_finite_differences(variant):
    r = np.random.default_rng(0)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        m, k = int(r.integers(2, 10)), int(r.integers(1, 4))
        y = r.standard_normal((m, k))
        w = random_affinity(r, m)
        _, g = spectral_loss(y, w, variant)
        num = np.zeros_like(y)
        for idx in np.ndindex(y.shape):
            e = np.zeros_like(y)
            e[idx] = h
            num[idx] = (spectral_loss(y + e, w, variant)[0] - spectral_loss(y - e, w, variant)[0]) / (2 * h)
        worst = max(worst, np.abs(num - g).max() / max(np.abs(g).max(), 1e-8))
    assert worst < 1e-4


def _net_fd(loss_of_model, model, h=1e-6):
    out = []
    for p in model.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_of_model()
            p[idx] = old - h
            down = loss_of_model()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


@pytest.mark.parametrize("mode", ["frozen", "batch"])
def test_end_to_end_gradient(mode):
    r = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        model = Mlp.init(2, [LayerSpec(5, "tanh"), LayerSpec(2, "tanh")], r)
        x = r.standard_normal((8, 2))
        w = random_affinity(r, 8)
        orthonorm_step(model, r.standard_normal((8, 2)))

        def loss():
            if mode == "frozen":
                return spectral_loss(forward(model, x)[0], w)[0]
            return spectral_loss(orthonorm_forward(forward(model, x, frozen=False)[0])[0], w)[0]

        if mode == "frozen":
            y, cache = forward(model, x)
            grads = backward(model, cache, spectral_loss(y, w)[1])
        else:
            yt, cache = forward(model, x, frozen=False)
            y, f = orthonorm_forward(yt)
            grads = backward(model, cache, orthonorm_backward(y, f, spectral_loss(y, w)[1]))
        num = _net_fd(loss, model)
        scale = max(max(np.abs(g).max() for g in grads), 1e-8)
        worst = max(worst, max(np.abs(a - b).max() for a, b in zip(grads, num)) / scale)
    assert worst < 1e-4


def test_orthonorm_backward_matches_finite_differences(rng):
    yt = rng.standard_normal((7, 3))
    gy = rng.standard_normal((7, 3))
    y, f = orthonorm_forward(yt)
    analytic = orthonorm_backward(y, f, gy)
    h = 1e-6
    num = np.zeros_like(yt)
    for idx in np.ndindex(yt.shape):
        e = np.zeros_like(yt)
        e[idx] = h
        num[idx] = (np.sum(gy * orthonorm_forward(yt + e)[0]) - np.sum(gy * orthonorm_forward(yt - e)[0])) / (2 * h)
    np.testing.assert_allclose(analytic, num, rtol=1e-6, atol=1e-8)


def test_config_validation():
    with pytest.raises(ValueError):
        SpectralConfig(k=0)
    with pytest.raises(ValueError):
        SpectralConfig(k=4, batch_size=3)
    with pytest.raises(ValueError):
        SpectralConfig(loss_variant="other")
    with pytest.raises(ValueError):
        SpectralConfig(output_grad="other")


def test_embed_needs_output_map(rng):
    with pytest.raises(ValueError):
        embed(Mlp.init(2, [LayerSpec(2, "tanh")], rng), np.ones((3, 2)))


def test_embed_is_rowwise(rng):
    model = Mlp.init(2, [LayerSpec(4, "relu"), LayerSpec(2, "tanh")], rng)
    orthonorm_step(model, rng.standard_normal((20, 2)))
    x = rng.standard_normal((9, 2))
    y = embed(model, x)
    p = rng.permutation(9)
    np.testing.assert_allclose(embed(model, x[p]), y[p], atol=1e-15)
    dup = embed(model, np.repeat(x[:1], 5, axis=0))
    np.testing.assert_allclose(dup, np.repeat(y[:1], 5, axis=0), atol=1e-15)
    with pytest.raises(DimensionMismatch):
        embed(model, np.ones((3, 5)))


SMALL = SpectralConfig(
    hidden=(LayerSpec(32, "relu"), LayerSpec(32, "relu")),
    batch_size=100,
    ortho_batch_size=100,
    iters_per_epoch=20,
    max_epochs=15,
)


def blobs():
    return generate(DatasetSpec("blobs", 400, noise=0.5, seed=0))


def test_blobs_recovered_exactly():
    data = blobs()
    result = train_spectralnet(data.features, SMALL)
    y = embed(result.model, data.features)
    assert acc(data.labels, kmeans(y, 2).labels) == 1.0
    assert result.max_ortho_error < 1e-6


def test_fresh_batches_roughly_orthonormal():
    # two clusters: a batch with cluster share p has error 2*sqrt(2)*|p - p_full|, so
    # stratify the fresh batches and leave only the within-cluster spread to measure
    data = blobs()
    cfg = replace(SMALL, ortho_batch_size=data.n)
    model = train_spectralnet(data.features, cfg).model
    r = np.random.default_rng(99)
    groups = [np.flatnonzero(data.labels == c) for c in np.unique(data.labels)]
    for _ in range(10):
        idx = np.concatenate([r.choice(g, len(g) // 2, replace=False) for g in groups])
        assert ortho_error(embed(model, data.features[idx])) < 0.1


def test_training_deterministic():
    x = blobs().features
    cfg = replace(SMALL, max_epochs=2)
    assert train_spectralnet(x, cfg).model == train_spectralnet(x, cfg).model


def test_history_rows_and_callback():
    x = blobs().features
    seen = []
    result = train_spectralnet(x, replace(SMALL, max_epochs=3), callback=lambda e, m, row: seen.append(e))
    assert seen == [0, 1, 2]
    assert [row["iter"] for row in result.history] == [20, 40, 60]
    assert set(result.history[0]) == {"iter", "loss", "val_loss", "lr"}
    assert result.checkpoints[-1][1] == result.model


def test_collapsed_network_reports_iteration():
    x = blobs().features
    result = train_spectralnet(x, replace(SMALL, max_epochs=1))
    model = result.model
    for w in model.weights:
        w[:] = 0.0
    with pytest.raises(RankDeficientBatch):
        orthonorm_step(model, x[:50])


@pytest.mark.slow
def test_permutation_equivariance():
    # full batches make every draw the same set, so only the row order differs
    x = generate(DatasetSpec("moons", 200, seed=2)).features
    cfg = replace(SMALL, batch_size=200, ortho_batch_size=200, val_frac=0.0, max_epochs=3)
    p = np.random.default_rng(1).permutation(200)
    a = embed(train_spectralnet(x, cfg).model, x)
    b = embed(train_spectralnet(x[p], cfg).model, x[p])
    np.testing.assert_allclose(b, a[p], atol=1e-6)


@pytest.mark.slow
def test_full_batch_minimizer_fidelity():
    data = generate(DatasetSpec("moons", 300, seed=0))
    x = data.features
    vectors = laplacian_eigs(x, AffinityConfig()).vectors[:, :2]
    cfg = SpectralConfig(batch_size=300, ortho_batch_size=300, val_frac=0.0, iters_per_epoch=20, max_epochs=100, patience=5)
    result = train_spectralnet(x, cfg)
    dists = [grassmann_sq(embed(m, x), vectors) for _, m in result.checkpoints]
    assert len(dists) >= 2
    assert all(b <= a + 1e-6 for a, b in zip(dists, dists[1:]))
    assert dists[-1] < 0.1
