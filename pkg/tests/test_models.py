import math

import numpy as np
import pytest
import scipy.sparse as sp

from dqnsbl import maps
from dqnsbl.ard import SblConfig
from dqnsbl.data_io import SparseDataset, binary_problem, fit_scaler, ovo_decompose
from dqnsbl.datasets import clusters, known_support_split, load_bundled
from dqnsbl.models import (
    BinaryModel,
    OvoEnsemble,
    accuracy,
    binary_dataset_problem,
    dumps_model,
    load_model,
    loads_model,
    lr_l2_fit,
    ovo_predict,
    predict_proba,
    save_model,
    train_binary,
    train_lr_l2,
    train_ovo,
)
from dqnsbl.objective import DesignMatrix
from dqnsbl.selection import (
    best_iteration,
    early_stopping_fit,
    lr_l2_cv,
    selected_features,
    sparsity_ratio,
)


def separable_toy(n=40, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    X[:, 0] += np.where(np.arange(n) % 2 == 0, 1.5, -1.5)
    labels = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return SparseDataset(sp.csr_matrix(X), labels)


class TestKernelMap:
    def test_zero_distance(self):
        r = np.array([[1.0, 2.0], [0.0, 0.0]])
        K = maps.gaussian_kernel_map(r, r[:1], sigma=0.7)
        assert K[0, 0] == 1.0

    def test_unit_scaled_distance(self):
        K = maps.gaussian_kernel_map(np.array([[0.0, 0.0]]), np.array([[0.6, 0.8]]), sigma=1.0)
        assert K[0, 0] == pytest.approx(math.exp(-1.0), rel=1e-14)

    def test_large_radius(self, rng):
        K = maps.gaussian_kernel_map(rng.standard_normal((5, 3)), rng.standard_normal((4, 3)),
                                     sigma=1e4)
        np.testing.assert_allclose(K, 1.0, atol=1e-6)

    def test_symmetry(self, rng):
        x, r = rng.standard_normal((1, 4)), rng.standard_normal((1, 4))
        assert maps.gaussian_kernel_map(r, x, 0.5)[0, 0] == pytest.approx(
            maps.gaussian_kernel_map(x, r, 0.5)[0, 0], rel=1e-14
        )

    def test_range_and_loop_oracle(self, rng):
        X, R = rng.standard_normal((6, 3)), rng.standard_normal((5, 3))
        K = maps.gaussian_kernel_map(R, X, 2.0)
        for i in range(6):
            for j in range(5):
                d2 = sum((X[i, k] - R[j, k]) ** 2 for k in range(3))
                assert K[i, j] == pytest.approx(math.exp(-d2 / 4.0), rel=1e-12)
        assert np.all((K > 0) & (K <= 1))

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            maps.gaussian_kernel_map(np.zeros((1, 1)), np.zeros((1, 1)), 0.0)

    def test_grid(self):
        assert len(maps.SIGMA_GRID) == 11
        assert maps.SIGMA_GRID[0] == 2.0**-5 and maps.SIGMA_GRID[-1] == 32.0


class TestRandomLayer:
    def test_zero_weights(self, rng):
        out = maps.random_layer_map(rng.standard_normal((3, 4)), np.zeros((5, 4)), np.zeros(5))
        np.testing.assert_array_equal(out, 0.5)

    def test_reproducible(self):
        a1, b1 = maps.random_layer_weights(50, 3, 7)
        a2, b2 = maps.random_layer_weights(50, 3, 7)
        assert a1.tobytes() == a2.tobytes() and b1.tobytes() == b2.tobytes()
        a3, _ = maps.random_layer_weights(50, 4, 7)
        assert not np.array_equal(a1, a3)

    def test_generator_layout(self):
        a, b = maps.random_layer_weights(3, 11, 2)
        stream = np.random.Generator(np.random.PCG64(11)).uniform(-1, 1, 3 * 2 + 3)
        np.testing.assert_array_equal(a.ravel(), stream[:6])
        np.testing.assert_array_equal(b, stream[6:])
        assert np.all(np.abs(stream) <= 1)

    def test_activations_in_unit_interval(self, rng):
        fm = maps.FeatureMap(maps.SBELM, 4, n_hidden=100, seed=1)
        H = fm.transform(rng.standard_normal((20, 4)))
        assert H.shape == (20, 100)
        assert np.all((H > 0) & (H < 1))

    def test_grids(self):
        assert maps.HIDDEN_GRID_SMALL == (50, 100, 150, 200)
        assert maps.HIDDEN_GRID_LARGE == (100, 500, 900, 1300)
        assert maps.SEED_GRID == (1, 2, 3, 4, 5)


class TestBinaryModel:
    def test_zero_weights(self):
        fm = maps.FeatureMap(maps.LINEAR, 3)
        m = BinaryModel(fm, None, np.array([0]), np.array([0.0]), (1.0, -1.0), 3)
        np.testing.assert_array_equal(predict_proba(m, np.ones((4, 3))), 0.5)
        np.testing.assert_array_equal(m.predict(np.ones((2, 3))), [1.0, 1.0])

    def test_linear_separable(self):
        ds = separable_toy()
        model, report = train_binary(binary_dataset_problem(ds), maps.LINEAR)
        assert accuracy(model.predict(ds), ds.labels) == 100.0
        assert model.n_weights <= ds.n_features + 1

    def test_width_handling(self):
        ds = separable_toy()
        model, _ = train_binary(binary_dataset_problem(ds), maps.LINEAR, scale=False)
        narrow = np.array([[2.0]])
        assert model.predict(narrow).shape == (1,)
        with pytest.raises(ValueError, match="3 features .* 2"):
            model.predict(np.zeros((1, 3)))

    def test_single_class_rejected(self):
        ds = SparseDataset(sp.csr_matrix(np.ones((3, 2))), np.array([1.0, 1.0, 1.0]))
        prob = binary_problem(ds, 1.0, 0.0)
        with pytest.raises(ValueError):
            train_binary(prob, maps.LINEAR)

    def test_rvm_keeps_relevance_vectors(self):
        ds = load_bundled("breast")
        prob = binary_dataset_problem(ds.subset(np.arange(0, 683, 3)))
        model, _ = train_binary(prob, maps.RVM, {"sigma": 2.0})
        scaler = fit_scaler(prob.dataset.subset(prob.rows))
        Xs = scaler.transform_dense(prob.X)
        # every stored reference is one of the scaled training rows
        for r in model.map.references:
            assert np.any(np.all(Xs == r, axis=1))
        assert model.n_bases == len(model.map.references)
        assert model.n_weights <= prob.rows.size + 1
        np.testing.assert_array_equal(model.active[model.active != 0],
                                      np.arange(1, model.n_bases + 1))

    def test_sbelm_size_bound(self):
        ds = load_bundled("iris")
        prob = ovo_decompose(ds)[0]
        model, _ = train_binary(prob, maps.SBELM, {"n_hidden": 50, "seed": 2})
        assert model.n_weights <= 51

    def test_flipped_targets_symmetry(self):
        diffs = []
        for seed in range(3):
            tr, te, _, _ = known_support_split(150, 100, 5, seed=seed)
            a, _ = train_binary(binary_problem(tr, 1.0, -1.0), maps.LINEAR)
            b, _ = train_binary(binary_problem(tr, -1.0, 1.0), maps.LINEAR)
            diffs.append(np.max(np.abs(a.predict_proba(te) + b.predict_proba(te) - 1.0)))
        assert max(diffs) <= 0.05


class TestOvo:
    def test_two_class_reduction(self):
        ds = separable_toy(seed=3)
        ens, _ = train_ovo(ds, maps.LINEAR)
        (m,) = ens.models
        grid = np.array([[x, y] for x in np.linspace(-3, 3, 25) for y in np.linspace(-2, 2, 9)])
        np.testing.assert_array_equal(ens.predict(grid), m.predict(grid))

    def test_tie_goes_to_smallest(self):
        classes = np.array([1.0, 2.0, 3.0])
        fm = maps.FeatureMap(maps.LINEAR, 2)
        models = [BinaryModel(fm, None, np.array([0]), np.array([0.0]), (b, a), 2)
                  for a, b in [(1.0, 2.0), (1.0, 3.0), (2.0, 3.0)]]
        ens = OvoEnsemble(classes, models)
        np.testing.assert_array_equal(ovo_predict(ens, np.zeros((3, 2))), [1.0, 1.0, 1.0])

    def test_clusters_perfect(self):
        ds = clusters(30, n_classes=3, seed=1)
        ens, _ = train_ovo(ds, maps.LINEAR)
        assert accuracy(ens.predict(ds), ds.labels) == 100.0
        scores = ens.scores(ds)
        np.testing.assert_allclose(scores.sum(axis=1), 3.0, atol=1e-12)

    def test_wrong_pair_count(self):
        fm = maps.FeatureMap(maps.LINEAR, 1)
        m = BinaryModel(fm, None, np.array([0]), np.array([0.0]), (2.0, 1.0), 1)
        with pytest.raises(ValueError):
            OvoEnsemble(np.array([1.0, 2.0, 3.0]), [m])


class TestSerialization:
    @pytest.mark.parametrize(
        "kind, hyper",
        [(maps.LINEAR, {}), (maps.RVM, {"sigma": 1.0}), (maps.SBELM, {"n_hidden": 50, "seed": 1})],
    )
    def test_round_trip_bitwise(self, tmp_path, kind, hyper):
        ds = load_bundled("iris")
        ens, _ = train_ovo(ds, kind, hyper)
        path = tmp_path / "m.json"
        save_model(ens, path)
        again = load_model(path)
        assert again.scores(ds).tobytes() == ens.scores(ds).tobytes()
        assert dumps_model(again) == dumps_model(ens)

    def test_document_fields(self):
        import json

        ens, _ = train_ovo(separable_toy(), maps.LINEAR)
        doc = json.loads(dumps_model(ens))
        assert doc["format"] == "dqnsbl-model" and doc["version"] == 1
        assert doc["config"]["sbl"]["alpha_max"] == 1e6
        assert set(doc["models"][0]) >= {"active", "w", "map", "scaler", "class_pair"}

    def test_rejects_foreign_document(self):
        with pytest.raises(ValueError):
            loads_model('{"format": "other", "version": 1}')
        with pytest.raises(ValueError):
            loads_model('{"format": "dqnsbl-model", "version": 99}')

    def test_deterministic_training(self):
        ds = load_bundled("iris")
        a, _ = train_ovo(ds, maps.SBELM, {"n_hidden": 50, "seed": 3})
        b, _ = train_ovo(ds, maps.SBELM, {"n_hidden": 50, "seed": 3})
        assert dumps_model(a) == dumps_model(b)


class TestLrBaseline:
    def test_ridge_limit(self):
        tr, te, _, _ = known_support_split(200, 200, 10, seed=0)
        prob = binary_dataset_problem(tr)
        w = lr_l2_fit(DesignMatrix(prob.X), prob.targets, lam=1e8)
        assert np.linalg.norm(w) < 1e-3
        m = train_lr_l2(prob, 1e8)
        np.testing.assert_allclose(m.predict_proba(te), 0.5, atol=1e-4)
        norms = [np.linalg.norm(lr_l2_fit(DesignMatrix(prob.X), prob.targets, lam))
                 for lam in (0.1, 10.0, 1e3, 1e5)]
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_bad_lambda(self):
        with pytest.raises(ValueError):
            lr_l2_fit(DesignMatrix(np.ones((2, 1))), [0.0, 1.0], 0.0)

    def test_cv_grid_and_head_to_head(self):
        tr, te, _, _ = known_support_split(300, 500, 20, seed=1)
        lr, lam, means = lr_l2_cv(tr, folds=3)
        assert len(means) == 11 and lam in maps.LAMBDA_GRID
        ens, _ = train_ovo(tr, maps.LINEAR, scale=False)
        assert abs(accuracy(lr.predict(te), te.labels) - accuracy(ens.predict(te), te.labels)) <= 2


class TestEarlyStopping:
    def test_first_maximum(self):
        assert best_iteration([80, 90, 90, 85]) == 2
        assert best_iteration([70, 70, 70]) == 1

    def test_sparsity_ratio(self):
        assert sparsity_ratio(np.array([5.0, 0, 1, 0, 2]), 4) == 0.5
        assert sparsity_ratio(np.array([5.0, 0, 0]), 2) == 1.0

    def test_curve_and_snapshot(self):
        tr, te, support, _ = known_support_split(200, 200, 30, seed=2)
        cfg = SblConfig(max_iterations=15)
        res = early_stopping_fit(tr, cfg, folds=3, test=te)
        ratios = [p.sparsity_ratio for p in res.curve]
        assert all(b >= a for a, b in zip(ratios, ratios[1:]))
        assert all(0 <= r <= 1 for r in ratios)
        assert 1 <= res.best_iteration <= 15
        snap = res.curve[res.best_iteration - 1]
        assert res.binary.n_bases == snap.n_selected
        feats = selected_features(res.binary)
        assert len(feats) == snap.n_selected
        w = dict(zip(res.binary.active, np.abs(res.binary.w)))
        assert all(w[a] >= w[b] for a, b in zip(feats, feats[1:]))

    def test_late_iterations_underfit(self):
        # every feature carries a little signal and a low prune threshold keeps
        # removing them, so validation accuracy drifts down after the first steps
        tr, te, _, _ = known_support_split(200, 200, 20, n_informative=20, scale=0.4, seed=0)
        cfg = SblConfig(max_iterations=30, alpha_max=10.0)
        res = early_stopping_fit(tr, cfg, folds=3, test=te)
        assert res.best_iteration < len(res.curve)
        best = res.curve[res.best_iteration - 1]
        assert best.validation_accuracy > res.curve[-1].validation_accuracy
        assert best.n_selected >= res.curve[-1].n_selected
