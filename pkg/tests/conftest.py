"""Shared synthetic-data builders and scoring helpers for the test suite."""

import csv

import numpy as np

from tabcl.data import Column, Dataset, Schema
from tabcl.numerics import RngStream


def auroc(scores, is_positive):
    """Rank-based AUROC with midrank tie handling."""
    scores = np.asarray(scores, dtype=np.float64)
    is_positive = np.asarray(is_positive, dtype=bool)
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    ranks[order] = np.arange(1, scores.size + 1)
    s = scores[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    n_pos = int(is_positive.sum())
    n_neg = scores.size - n_pos
    return float((ranks[is_positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def numeric_schema(d, classes=("0", "1"), task="classification", target="y"):
    cols = tuple(Column(f"x{i}", "numeric") for i in range(d))
    if task == "classification":
        return Schema(cols, target, task, tuple(classes))
    return Schema(cols, target, task)


def shifted_cluster_data(n_id=9000, n_ood=1000, d=6, sep=4.0, shift=4.0, seed=1234):
    """Two linearly separable classes plus a mean-shifted contaminating
    cluster whose labeling rule is flipped.

    Returns (Dataset, is_ood mask).  The shift is ``shift`` standard
    deviations along a direction orthogonal to the class structure.
    """
    rng = RngStream(seed, 0)
    y_id = (rng.uniform(n_id, 1)[:, 0] < 0.5).astype(np.int64)
    x_id = rng.normal(n_id, d)
    x_id[:, 0] += sep * (2 * y_id - 1)
    x_ood = rng.normal(n_ood, d)
    x_ood[:, 1] += shift
    y_ood = (x_ood[:, 0] < 0).astype(np.int64)  # flipped labeling rule

    X = np.vstack([x_id, x_ood])
    y = np.concatenate([y_id, y_ood])
    is_ood = np.zeros(len(X), dtype=bool)
    is_ood[n_id:] = True
    perm = RngStream(seed, 1).permutation(len(X))
    dataset = Dataset(X[perm], y[perm], numeric_schema(d), None)
    return dataset, is_ood[perm]


def xor_data(n=4000, d=2, seed=2024):
    """Gaussian blob labeled by the sign of x0*x1: a nonlinear decision
    boundary no linear model can beat chance on."""
    rng = RngStream(seed, 0)
    X = rng.normal(n, d)
    y = ((X[:, 0] * X[:, 1]) > 0).astype(np.int64)
    return X, y


def two_cluster_matrix(n=600, d=5, gap=4.0, seed=3):
    """Unlabeled two-cluster matrix for unsupervised training tests."""
    rng = RngStream(seed, 0)
    X = rng.normal(n, d)
    X[: n // 2, 0] -= gap / 2
    X[n // 2 :, 0] += gap / 2
    return X


def write_classification_csv(path, X, y, target="label"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(X.shape[1])] + [target])
        for i in range(len(X)):
            writer.writerow([repr(float(v)) for v in X[i]] + [f"c{int(y[i])}"])


def write_regression_csv(path, X, y, target="value"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(X.shape[1])] + [target])
        for i in range(len(X)):
            writer.writerow([repr(float(v)) for v in X[i]] + [repr(float(y[i]))])
