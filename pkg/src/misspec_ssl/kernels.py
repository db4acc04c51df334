"""Kernel functions, per-feature-type distances, and Gram matrix construction.

Three distances are supported inside a generalized RBF wrapper (euclidean,
manhattan, chi-square) alongside the plain linear kernel and the standard
squared-euclidean RBF. The feature map is never materialized: the kernel
k-means solver works purely off Gram matrix entries.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, InputError, derive_seed, require_valid

KERNEL_KINDS = ("linear", "rbf", "generalized_rbf")
DISTANCES = ("euclidean", "manhattan", "chi_square")

CHI_SQUARE_EPS = 1e-12
MEDIAN_SUBSAMPLE = 512


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selection: linear, rbf(gamma), or generalized_rbf(gamma, distance).

    ``gamma=None`` requests the median heuristic: 1/(median pairwise distance)
    computed on a seeded subsample of at most 512 points, in the same distance
    the kernel uses (squared euclidean for rbf).
    """

    kind: str = "rbf"
    gamma: float | None = None
    distance: str = "euclidean"

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise InputError(f"kernel kind must be one of {KERNEL_KINDS}, got {self.kind!r}")
        if self.kind != "linear" and self.gamma is not None and self.gamma <= 0:
            raise InputError(f"gamma must be positive, got {self.gamma}")
        if self.kind == "generalized_rbf" and self.distance not in DISTANCES:
            raise InputError(f"distance must be one of {DISTANCES}, got {self.distance!r}")

    @property
    def is_rbf_kind(self) -> bool:
        return self.kind in ("rbf", "generalized_rbf")


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric N x N Gram matrix tagged with the spec that produced it.

    Symmetry is exact (values are computed once and mirrored); for rbf kinds
    the diagonal is exactly 1.
    """

    values: np.ndarray
    spec: KernelSpec
    n: int

    @property
    def diag(self) -> np.ndarray:
        return np.diagonal(self.values)


def _pair_distance(x: np.ndarray, y: np.ndarray, distance: str) -> float:
    diff = x - y
    if distance == "euclidean":
        return float(np.sqrt(np.dot(diff, diff)))
    if distance == "manhattan":
        return float(np.sum(np.abs(diff)))
    return float(np.sum(diff * diff / (x + y + CHI_SQUARE_EPS)))


def _check_chi_square_inputs(*arrays: np.ndarray) -> None:
    for a in arrays:
        if np.any(a < 0):
            raise InputError("chi_square distance requires nonnegative feature values")


def kernel_eval(x: np.ndarray, y: np.ndarray, spec: KernelSpec) -> float:
    """Evaluate k(x, y) for a single pair of feature vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if spec.kind == "linear":
        return float(np.dot(x, y))
    gamma = spec.gamma
    if gamma is None:
        raise InputError("gamma unresolved; call resolve_gamma or pass an explicit value")
    if spec.kind == "rbf":
        diff = x - y
        return float(np.exp(-gamma * np.dot(diff, diff)))
    if spec.distance == "chi_square":
        _check_chi_square_inputs(x, y)
    return float(np.exp(-gamma * _pair_distance(x, y, spec.distance)))


def _distance_matrix(x: np.ndarray, y: np.ndarray, distance: str, squared: bool) -> np.ndarray:
    """All-pairs distances between rows of x and rows of y."""
    if distance == "euclidean":
        xx = np.sum(x * x, axis=1)[:, None]
        yy = np.sum(y * y, axis=1)[None, :]
        d2 = np.maximum(xx + yy - 2.0 * (x @ y.T), 0.0)
        return d2 if squared else np.sqrt(d2)
    if distance == "manhattan":
        return np.sum(np.abs(x[:, None, :] - y[None, :, :]), axis=2)
    _check_chi_square_inputs(x, y)
    diff = x[:, None, :] - y[None, :, :]
    denom = x[:, None, :] + y[None, :, :] + CHI_SQUARE_EPS
    return np.sum(diff * diff / denom, axis=2)


def _kernel_distance_kind(spec: KernelSpec) -> tuple[str, bool]:
    """Which distance the rbf-kind kernel exponentiates (and whether squared)."""
    if spec.kind == "rbf":
        return "euclidean", True
    return spec.distance, False


def resolve_gamma(spec: KernelSpec, features: np.ndarray, seed: int = 0) -> KernelSpec:
    """Fill in gamma via the median heuristic when it was left unspecified.

    The median is taken over pairwise distances of a subsample of at most 512
    points (seeded), in the distance the kernel itself uses.
    """
    if spec.kind == "linear" or spec.gamma is not None:
        return spec
    x = np.asarray(features, dtype=float)
    n = x.shape[0]
    if n > MEDIAN_SUBSAMPLE:
        rng = np.random.default_rng(derive_seed(seed, "median-gamma"))
        x = x[rng.choice(n, size=MEDIAN_SUBSAMPLE, replace=False)]
    distance, squared = _kernel_distance_kind(spec)
    d = _distance_matrix(x, x, distance, squared)
    iu = np.triu_indices(x.shape[0], k=1)
    med = float(np.median(d[iu])) if iu[0].size else 0.0
    gamma = 1.0 / med if med > 0 else 1.0
    return KernelSpec(kind=spec.kind, gamma=gamma, distance=spec.distance)


def cross_matrix(x: np.ndarray, y: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel values between rows of x (queries) and rows of y (training)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[1] != y.shape[1]:
        raise InputError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if spec.kind == "linear":
        return x @ y.T
    if spec.gamma is None:
        raise InputError("gamma unresolved; call resolve_gamma first")
    distance, squared = _kernel_distance_kind(spec)
    return np.exp(-spec.gamma * _distance_matrix(x, y, distance, squared))


def kernel_diag(x: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """k(x, x) per row; exactly 1 for rbf kinds."""
    x = np.asarray(x, dtype=float)
    if spec.kind == "linear":
        return np.sum(x * x, axis=1)
    return np.ones(x.shape[0])


def gram_matrix(d: Dataset, spec: KernelSpec) -> KernelMatrix:
    """Precompute the full Gram matrix over all dataset points.

    The upper triangle is computed once and mirrored so symmetry holds
    bit-exactly; for rbf kinds the diagonal is set to exactly 1.
    """
    require_valid(d)
    spec = resolve_gamma(spec, d.features)
    values = cross_matrix(d.features, d.features, spec)
    values = np.triu(values)
    values = values + np.triu(values, k=1).T
    if spec.is_rbf_kind:
        np.fill_diagonal(values, 1.0)
    return KernelMatrix(values=values, spec=spec, n=d.n_points)


def check_psd(m: KernelMatrix, tol: float) -> bool:
    """True iff the smallest eigenvalue is >= -tol (symmetric eigensolve)."""
    smallest = float(np.linalg.eigvalsh(m.values)[0])
    return smallest >= -tol


def save_gram(m: KernelMatrix, path: str | Path) -> None:
    """Write a Gram matrix as CSV plus a JSON sidecar carrying the spec.

    ``path`` is the CSV file; the sidecar is ``path`` with a .json suffix.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in m.values:
            writer.writerow([repr(v) for v in row.tolist()])
    sidecar = {
        "kind": m.spec.kind,
        "gamma": m.spec.gamma,
        "distance": m.spec.distance,
        "n": m.n,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_gram(path: str | Path) -> KernelMatrix:
    """Inverse of save_gram."""
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    spec = KernelSpec(kind=side["kind"], gamma=side["gamma"], distance=side["distance"])
    with open(path, newline="") as fh:
        values = np.array([[float(v) for v in row] for row in csv.reader(fh)])
    if values.shape != (side["n"], side["n"]):
        raise InputError(f"Gram shape {values.shape} does not match sidecar n={side['n']}")
    return KernelMatrix(values=values, spec=spec, n=side["n"])
