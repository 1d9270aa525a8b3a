"""Acceptance suite: one test per acceptance criterion, with its stated tolerance."""

import itertools
import time
from dataclasses import replace

import numpy as np
import pytest

from spectralnet.affinity import AffinityBatch, AffinityConfig
from spectralnet.cli import main
from spectralnet.cluster import acc, kmeans, nmi
from spectralnet.config import TrainConfig
from spectralnet.data import DatasetSpec, generate, load_labels, save_csv
from spectralnet.linalg import cholesky_qr
from spectralnet.nn import LayerSpec, Mlp, backward, forward
from spectralnet.oracle import exact_spectral_clustering, grassmann_vs_oracle, laplacian_eigs
from spectralnet.pipeline import fit
from spectralnet.shatter import build_shatter_instance, dichotomies, separation_holds, sigma_sweep, verify_shattering
from spectralnet.siamese import contrastive_loss
from spectralnet.trainer import SpectralConfig, embed, ortho_error, orthonorm_step, spectral_loss, train_spectralnet

EUCLIDEAN = AffinityConfig()
SEEDS = range(5)


def euclidean_config(**spectral):
    return TrainConfig(spectral=SpectralConfig(affinity=EUCLIDEAN, **spectral))


def fd_rel_error(f, x, analytic, h=1e-6):
    num = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        num[idx] = (up - down) / (2 * h)
    return np.abs(num - analytic).max() / max(np.abs(analytic).max(), 1e-8)


def random_affinity(r, m):
    w = r.random((m, m)) * (r.random((m, m)) < 0.5)
    w = w + w.T + 0.05
    np.fill_diagonal(w, 0.0)
    return AffinityBatch(w, w.sum(axis=1))


@pytest.fixture(scope="module")
def nested_c():
    return generate(DatasetSpec("nested_c", 1500, seed=0))


@pytest.fixture(scope="module")
def fidelity_run(nested_c):
    # gradient batch 256; a 1024-point orthogonalization batch for the fresh-batch check
    cfg = SpectralConfig(affinity=EUCLIDEAN, ortho_batch_size=1024)
    return train_spectralnet(nested_c.features, cfg)


@pytest.mark.slow
def test_c01_nested_c_recovery(nested_c):
    x, truth = nested_c.features, nested_c.labels
    start = time.perf_counter()
    oracle = exact_spectral_clustering(x, 2, EUCLIDEAN)
    net = fit(x, euclidean_config())
    elapsed = time.perf_counter() - start
    baseline = kmeans(x, 2, seed=0).labels
    assert acc(truth, oracle.labels) >= 0.99
    assert acc(truth, net.labels) >= 0.95
    assert acc(truth, baseline) <= 0.75
    assert elapsed < 120.0


@pytest.mark.slow
def test_c02_eigenvector_fidelity(nested_c, fidelity_run):
    x = nested_c.features
    vectors = laplacian_eigs(x, EUCLIDEAN).vectors[:, :2]
    assert grassmann_vs_oracle(fidelity_run.model, x, 2, EUCLIDEAN, vectors=vectors) < 0.1
    quarter = len(fidelity_run.history) / 4
    late = [grassmann_vs_oracle(m, x, 2, EUCLIDEAN, vectors=vectors) for e, m in fidelity_run.checkpoints if e >= quarter]
    assert len(late) >= 2
    assert all(b <= a + 1e-6 for a, b in zip(late, late[1:]))


def test_c03_trace_identity():
    r = np.random.default_rng(3)
    for _ in range(1000):
        m, k = int(r.integers(2, 40)), int(r.integers(1, 5))
        y = r.standard_normal((m, k))
        w = random_affinity(r, m)
        loss = spectral_loss(y, w, scaling="inverse_m_squared")[0]
        trace = 2 / m**2 * np.trace(y.T @ (np.diag(w.degrees) - w.w) @ y)
        assert abs(loss - trace) <= 1e-10 * max(abs(trace), 1.0)


@pytest.mark.slow
def test_c04_orthonormality(nested_c, fidelity_run):
    assert fidelity_run.max_ortho_error < 1e-6
    r = np.random.default_rng(44)
    size = 1024
    for _ in range(10):
        idx = r.choice(nested_c.n, size, replace=False)
        assert ortho_error(embed(fidelity_run.model, nested_c.features[idx])) < 0.1


def test_c05_cholesky_qr():
    def gram_schmidt(a):
        q = np.array(a, dtype=float)
        for j in range(q.shape[1]):
            for i in range(j):
                q[:, j] -= (q[:, i] @ q[:, j]) * q[:, i]
            q[:, j] /= np.linalg.norm(q[:, j])
        return q

    r = np.random.default_rng(5)
    for _ in range(100):
        a = r.standard_normal((50, 5))
        q = cholesky_qr(a)
        assert np.linalg.norm(q.T @ q - np.eye(5)) < 1e-8
        g = gram_schmidt(a)
        signs = np.sign(np.sum(q * g, axis=0))
        assert np.abs(q - g * signs).max() < 1e-8


def test_c06_shattering():
    sweep = sigma_sweep()
    start = time.perf_counter()
    realized = 0
    for m in range(1, 7):
        for _, bits in dichotomies(m):
            inst = build_shatter_instance(m, bits)
            cert = inst.certificates
            assert cert.property_a and cert.property_b
            res = verify_shattering(inst, sweep)
            assert res.success, (m, bits)
            assert separation_holds(inst, res.sigma)
            realized += 1
    assert realized == 126
    assert time.perf_counter() - start < 60.0


def test_c07_gradients():
    r = np.random.default_rng(7)
    worst = {"contrastive": 0.0, "unnormalized": 0.0, "normalized": 0.0, "frozen": 0.0}
    for _ in range(100):
        zi, zj = r.standard_normal((5, 3)), 0.5 * r.standard_normal((5, 3))
        pos = r.random(5) < 0.5
        if np.all(np.abs(np.linalg.norm(zi - zj, axis=1) - 1.0) > 1e-3):
            g = contrastive_loss(zi, zj, pos)[1]
            worst["contrastive"] = max(worst["contrastive"], fd_rel_error(lambda: contrastive_loss(zi, zj, pos)[0], zi, g))

        m = int(r.integers(3, 10))
        y = r.standard_normal((m, 2))
        w = random_affinity(r, m)
        for variant in ("unnormalized", "normalized"):
            g = spectral_loss(y, w, variant)[1]
            worst[variant] = max(worst[variant], fd_rel_error(lambda: spectral_loss(y, w, variant)[0], y, g))

        model = Mlp.init(2, [LayerSpec(6, "tanh"), LayerSpec(2, "tanh")], r)
        orthonorm_step(model, r.standard_normal((12, 2)))
        x = r.standard_normal((m, 2))
        out, cache = forward(model, x)
        grads = backward(model, cache, spectral_loss(out, w)[1])
        w0 = model.weights[0]
        worst["frozen"] = max(worst["frozen"], fd_rel_error(lambda: spectral_loss(forward(model, x)[0], w)[0], w0, grads[0]))
    assert max(worst.values()) < 1e-4, worst


def test_c08_metrics():
    def brute(truth, pred):
        names_t, names_p = np.unique(truth), np.unique(pred)
        size = max(len(names_t), len(names_p))
        best = 0
        for perm in itertools.permutations(range(size), len(names_p)):
            hits = 0
            for t, p in zip(truth, pred):
                j = perm[np.searchsorted(names_p, p)]
                hits += j < len(names_t) and names_t[j] == t
            best = max(best, hits)
        return best / len(truth)

    r = np.random.default_rng(8)
    for _ in range(200):
        k = int(r.integers(1, 6))
        n = int(r.integers(1, 40))
        truth, pred = r.integers(0, k, n), r.integers(0, k, n)
        assert acc(truth, pred) == pytest.approx(brute(truth, pred), abs=1e-15)
    assert nmi([0, 1, 0, 1], [0, 1, 0, 1]) == 1.0
    assert nmi([1, 1, 2, 2], [1, 2, 1, 2]) == 0.0
    assert nmi([1, 1, 2, 2], [5, 5, 9, 9]) == 1.0


@pytest.mark.slow
def test_c09_siamese_benefit():
    euclid, siamese = [], []
    for seed in SEEDS:
        data = generate(DatasetSpec("nested_c", 1500, seed=seed, noise_dims=8, noise_dim_std=0.5))
        euclid.append(acc(data.labels, fit(data.features, euclidean_config(seed=seed)).labels))
        siamese.append(acc(data.labels, fit(data.features, TrainConfig().with_seed(seed)).labels))
    print(f"euclidean {euclid} siamese {siamese}")
    assert np.median(euclid) <= 0.9
    assert np.median(siamese) > np.median(euclid)


@pytest.mark.slow
def test_c10_semi_supervised():
    unsup, semi = [], []
    for seed in SEEDS:
        data = generate(DatasetSpec("concentric_circles", 1500, noise=0.2, seed=seed))
        cfg = euclidean_config(seed=seed, batch_size=512, ortho_batch_size=512)
        unsup.append(acc(data.labels, fit(data.features, cfg).labels))
        semi.append(acc(data.labels, fit(data.features, replace(cfg, labels_frac=0.02), truth=data.labels).labels))
    print(f"unsupervised {unsup} semi-supervised {semi}")
    assert np.median(unsup) <= 0.8
    assert np.median(semi) >= 0.9


@pytest.mark.slow
def test_c11_generalization(tmp_path, capsys):
    data = generate(DatasetSpec("nested_c", 1500, seed=11))
    order = np.random.default_rng(11).permutation(data.n)
    train, test = data.subset(np.sort(order[:1350])), data.subset(np.sort(order[1350:]))
    save_csv(train, tmp_path / "train.csv")
    save_csv(test, tmp_path / "test.csv")
    assert main(["train", "--data", str(tmp_path / "train.csv"), "--k", "2", "--out", str(tmp_path / "model")]) == 0
    assert main(["predict", "--model", str(tmp_path / "model"), "--data", str(tmp_path / "test.csv"), "--out", str(tmp_path / "pred.csv")]) == 0
    capsys.readouterr()
    train_acc = acc(train.labels, load_labels(tmp_path / "model" / "labels.csv"))
    test_acc = acc(test.labels, load_labels(tmp_path / "pred.csv"))
    assert abs(test_acc - train_acc) <= 0.03
