"""Numeric kernels: cosine matrix, tree growth, forest prediction.

The two implementations (compiled and plain numpy) must agree: bit-for-bit
on tree growth and prediction, to float tolerance on the cosine matrix. The
in-process tests compare the plain path against whichever path is active;
the subprocess test forces both backends and compares serialized forests.
"""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from tablerank import kernels


def naive_cosine(A, B):
    out = np.zeros((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            na = math.sqrt(sum(x * x for x in A[i]))
            nb = math.sqrt(sum(x * x for x in B[j]))
            if na == 0.0 or nb == 0.0:
                out[i, j] = 0.0
            else:
                out[i, j] = sum(x * y for x, y in zip(A[i], B[j])) / (na * nb)
    return out


class TestPairwiseCosine:
    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            A = rng.normal(size=(int(rng.integers(1, 6)), 4))
            B = rng.normal(size=(int(rng.integers(1, 6)), 4))
            got = kernels.pairwise_cosine(A, B)
            np.testing.assert_allclose(got, naive_cosine(A, B), atol=1e-12)

    def test_zero_rows_give_zero(self):
        A = np.array([[0.0, 0.0], [1.0, 0.0]])
        B = np.array([[0.0, 0.0], [0.0, 2.0]])
        got = kernels.pairwise_cosine(A, B)
        assert got[0, 0] == 0.0 and got[0, 1] == 0.0 and got[1, 0] == 0.0

    def test_bounded(self):
        rng = np.random.default_rng(1)
        A = rng.normal(size=(50, 3)) * 1e8
        B = rng.normal(size=(40, 3)) * 1e-8
        got = kernels.pairwise_cosine(A, B)
        assert np.all(got <= 1.0) and np.all(got >= -1.0)

    def test_backends_agree_to_tolerance(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(30, 8))
        B = rng.normal(size=(25, 8))
        np.testing.assert_allclose(
            kernels.pairwise_cosine(A, B), kernels.pairwise_cosine_py(A, B),
            atol=5e-15,
        )


def random_problem(rng, n=None, p=None):
    n = n or int(rng.integers(5, 60))
    p = p or int(rng.integers(2, 6))
    X = rng.normal(size=(n, p))
    if rng.random() < 0.5:
        # inject duplicate feature values to exercise tie handling
        X[:, 0] = np.round(X[:, 0] * 2) / 2
    y = X[:, 0] + 0.1 * rng.normal(size=n)
    cap = 2 * n + 1
    mtry = min(3, p)
    order = np.argsort(rng.random((cap, p)), axis=1, kind="stable")
    feat_cand = np.ascontiguousarray(order[:, :mtry])
    return X, y, feat_cand


class TestGrowTree:
    def test_active_path_matches_plain_path(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            X, y, cand = random_problem(rng)
            a = kernels.grow_tree(X, y, cand, 1)
            b = kernels.grow_tree_py(X, y, cand, 1)
            for got, want in zip(a, b):
                np.testing.assert_array_equal(got, want)

    def test_leaves_predict_node_means(self):
        rng = np.random.default_rng(4)
        X, y, cand = random_problem(rng, n=40)
        feature, threshold, left, right, value, count, n_nodes, _ = kernels.grow_tree(
            X, y, cand, 1
        )
        # walk every sample down the tree; leaf value must equal the mean of
        # the samples that land there
        assign = np.zeros(len(y), dtype=int)
        for i, x in enumerate(X):
            node = 0
            while feature[node] >= 0:
                node = left[node] if x[feature[node]] <= threshold[node] else right[node]
            assign[i] = node
        for node in np.unique(assign):
            landed = y[assign == node]
            assert count[node] == len(landed)
            assert value[node] == pytest.approx(np.mean(landed), rel=1e-9)

    def test_min_leaf_respected(self):
        rng = np.random.default_rng(5)
        X, y, cand = random_problem(rng, n=50)
        feature, _, _, _, _, count, n_nodes, _ = kernels.grow_tree(X, y, cand, 5)
        leaves = [i for i in range(n_nodes) if feature[i] < 0]
        assert all(count[i] >= 5 for i in leaves)

    def test_importance_equals_sse_reduction(self):
        rng = np.random.default_rng(6)
        X, y, cand = random_problem(rng, n=30)
        feature, threshold, left, right, value, count, n_nodes, imp = kernels.grow_tree(
            X, y, cand, 1
        )

        def node_sse(idx):
            if len(idx) == 0:
                return 0.0
            return float(np.sum((y[idx] - np.mean(y[idx])) ** 2))

        # recompute each split's SSE reduction from the raw data
        expected = np.zeros(X.shape[1])
        idx_of = {0: np.arange(len(y))}
        for node in range(n_nodes):
            f = feature[node]
            if f < 0:
                continue
            idx = idx_of[node]
            go_left = X[idx, f] <= threshold[node]
            idx_of[left[node]] = idx[go_left]
            idx_of[right[node]] = idx[~go_left]
            gain = node_sse(idx) - node_sse(idx[go_left]) - node_sse(idx[~go_left])
            expected[f] += gain
        np.testing.assert_allclose(imp, expected, rtol=1e-6, atol=1e-8)


class TestPredictForest:
    def test_paths_bit_identical(self):
        rng = np.random.default_rng(7)
        X, y, cand = random_problem(rng, n=50)
        feature, threshold, left, right, value, count, n_nodes, _ = kernels.grow_tree(
            X, y, cand, 1
        )
        # duplicate the tree three times to exercise tree accumulation
        reps = 3
        f = np.tile(feature, reps)
        th = np.tile(threshold, reps)
        le = np.tile(left, reps)
        ri = np.tile(right, reps)
        va = np.tile(value, reps)
        offsets = np.arange(reps + 1, dtype=np.int64) * n_nodes
        Q = rng.normal(size=(20, X.shape[1]))
        a = kernels.predict_forest(Q, f, th, le, ri, va, offsets)
        b = kernels.predict_forest_py(Q, f, th, le, ri, va, offsets)
        np.testing.assert_array_equal(a, b)
        # three copies of one tree average to that tree's own prediction
        single = kernels.predict_forest_py(
            Q, feature, threshold, left, right, value,
            np.array([0, n_nodes], dtype=np.int64),
        )
        np.testing.assert_allclose(a, single, rtol=1e-12)


class TestBackendSelection:
    def test_env_flag_names_backend(self):
        assert kernels.active_backend() in ("numba", "numpy")

    def test_disable_values(self, monkeypatch):
        for value in ("0", "false", "no", "off", "False", "NO", " Off "):
            monkeypatch.setenv(kernels.NUMBA_ENV, value)
            assert not kernels._env_allows_numba()
        for value in ("1", "true", "yes", "anything"):
            monkeypatch.setenv(kernels.NUMBA_ENV, value)
            assert kernels._env_allows_numba()
        monkeypatch.delenv(kernels.NUMBA_ENV)
        assert kernels._env_allows_numba()


SUBPROCESS_SCRIPT = """
import sys
import numpy as np
from tablerank.ltr import TrainingInstance, fit_forest_instances, save_model
from tablerank.features import FeatureVector

rng = np.random.default_rng(42)
X = rng.normal(size=(80, 4))
y = X[:, 1] - X[:, 3] + 0.05 * rng.normal(size=80)
schema = tuple(f"f{i}" for i in range(4))
insts = [
    TrainingInstance(f"q{i % 5}", f"d{i}", FeatureVector(schema, X[i]), float(y[i]))
    for i in range(80)
]
model = fit_forest_instances(insts, n_trees=15, mtry=2, seed=9)
save_model(model, sys.argv[1])
"""


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
        return True
    except ImportError:
        return False


@pytest.mark.skipif(not _numba_available(), reason="compiled backend not installed")
def test_forests_identical_across_backends(tmp_path):
    """Same seed, same data: both backends must serialize identical models."""
    paths = {}
    for flag in ("0", "1"):
        out = tmp_path / f"model_{flag}.npz"
        env = dict(os.environ, TABLERANK_NUMBA=flag)
        subprocess.run(
            [sys.executable, "-c", SUBPROCESS_SCRIPT, str(out)],
            check=True, env=env, timeout=300,
        )
        paths[flag] = out
    import zipfile
    with zipfile.ZipFile(paths["0"]) as za, zipfile.ZipFile(paths["1"]) as zb:
        assert sorted(za.namelist()) == sorted(zb.namelist())
        for name in za.namelist():
            assert za.read(name) == zb.read(name), f"member {name} differs"
