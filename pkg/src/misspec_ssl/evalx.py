"""Evaluation: 11-point interpolated average precision, mAP, and the
learning-curve harness sweeping unlabeled-set sizes over seeds and methods.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .askkm import AskkmOptions, fit_askkm
from .askkm import predict as askkm_predict
from .core import Dataset, InputError, SolverOptions, derive_seed
from .datagen import GenSpec, generate, sample_eval_set
from .kernels import KernelSpec, cross_matrix, gram_matrix, kernel_diag
from .misspec import LabelMap
from .semgmm import bayes_classify_batch, class_posteriors_batch, fit_sem
from .sskkm import classify_batch, fit_sskkm, score_batch

RECALL_POINTS = 11

CURVE_METHODS = (
    "original_sskkm",
    "unbiased_sskkm",
    "askkm",
    "original_sem",
    "unbiased_sem",
    "supervised",
)
METHOD_ALIASES = {"supervised_sem": "supervised"}


class UndefinedMetricError(InputError):
    """Average precision is undefined without a single relevant item."""


def interpolated_precision_points(scores: np.ndarray, relevance: np.ndarray) -> list[float]:
    """Interpolated precision at the 11 recall points {0, 0.1, ..., 1.0}.

    Items are ranked by descending score (ties keep original order); the
    interpolated precision at recall r is the maximum precision over all
    ranking prefixes reaching recall >= r.
    """
    scores = np.asarray(scores, dtype=float)
    relevance = np.asarray(relevance).astype(int)
    if scores.ndim != 1 or scores.shape != relevance.shape or scores.size < 1:
        raise InputError("scores and relevance must be equal-length nonempty vectors")
    if not relevance.any():
        raise UndefinedMetricError("no relevant items; average precision undefined")
    order = np.argsort(-scores, kind="stable")
    hits = np.cumsum(relevance[order])
    total = int(hits[-1])
    ranks = np.arange(1, scores.size + 1)
    precision = hits / ranks
    recall = hits / total
    return [float(np.max(precision[recall >= i / 10])) for i in range(RECALL_POINTS)]


def average_precision(scores: np.ndarray, relevance: np.ndarray) -> float:
    """Mean of the 11 interpolated precision points."""
    return sum(interpolated_precision_points(scores, relevance)) / RECALL_POINTS


def mean_ap(per_class_ap: list[float] | np.ndarray) -> float:
    """Arithmetic mean of per-class AP values."""
    values = np.asarray(per_class_ap, dtype=float)
    if values.size == 0:
        raise InputError("mean_ap of an empty list")
    return float(np.mean(values))


@dataclass(frozen=True)
class LearningCurve:
    """Per-method metric series over an increasing unlabeled-size grid.

    ``raw`` holds the full (grid, seed) matrix per method; mean and std are
    aggregated over seeds.
    """

    n_unlabeled_grid: tuple[int, ...]
    methods: tuple[str, ...]
    n_seeds: int
    metric_name: str
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    raw: dict[str, np.ndarray]

    def to_json_dict(self) -> dict:
        return {
            "n_unlabeled_grid": list(self.n_unlabeled_grid),
            "methods": list(self.methods),
            "n_seeds": self.n_seeds,
            "metric": self.metric_name,
            "series": {
                m: {
                    "mean": self.mean[m].tolist(),
                    "std": self.std[m].tolist(),
                    "raw": self.raw[m].tolist(),
                }
                for m in self.methods
            },
        }

    def csv_rows(self) -> list[tuple[str, int, int, float]]:
        """Long-format rows (method, n_unlabeled, seed, metric)."""
        rows = []
        for m in self.methods:
            for gi, nu in enumerate(self.n_unlabeled_grid):
                for si in range(self.n_seeds):
                    rows.append((m, int(nu), si, float(self.raw[m][gi, si])))
        return rows


def _canonical_method(name: str) -> str:
    name = METHOD_ALIASES.get(name, name)
    if name not in CURVE_METHODS:
        raise InputError(f"unknown method {name!r}; choose from {CURVE_METHODS}")
    return name


def _sem_scores(train: Dataset, mode: str, seed: int, test_x: np.ndarray,
                solver: SolverOptions) -> tuple[np.ndarray, np.ndarray]:
    if mode == "supervised":
        opts = replace(solver, seed=seed, unlabeled_weight_mode="custom", custom_weight=0.0)
    else:
        opts = replace(solver, seed=seed, unlabeled_weight_mode=mode, custom_weight=None)
    model = fit_sem(train, train.n_classes, np.arange(train.n_classes), opts)
    return bayes_classify_batch(model, test_x), class_posteriors_batch(model, test_x)


def _evaluate_cell(
    scenario: GenSpec,
    methods: tuple[str, ...],
    nu: int,
    seed_index: int,
    eval_size: int,
    base_seed: int,
    kernel: KernelSpec,
    solver: SolverOptions,
) -> dict[str, float]:
    spec = replace(scenario, n_unlabeled=nu, seed=derive_seed(base_seed, "scenario", seed_index))
    train, _ = generate(spec)
    test_x, test_y = sample_eval_set(spec, eval_size, derive_seed(base_seed, "eval", seed_index))
    binary = train.n_classes == 2

    need_kernel = any(m in ("original_sskkm", "unbiased_sskkm", "askkm") for m in methods)
    km = rows = diag = None
    if need_kernel:
        km = gram_matrix(train, kernel)
        rows = cross_matrix(test_x, train.features, km.spec)
        diag = kernel_diag(test_x, km.spec)
    identity = LabelMap.identity(train.labels, train.n_classes)

    out: dict[str, float] = {}
    for method in methods:
        seed = derive_seed(base_seed, "fit", seed_index, method)
        if method in ("original_sem", "unbiased_sem", "supervised"):
            mode = method.replace("_sem", "")
            preds, scores = _sem_scores(train, mode, seed, test_x, solver)
        elif method == "askkm":
            opts = AskkmOptions(solver=replace(solver, seed=seed))
            model = fit_askkm(km, train, opts)
            preds, scores = askkm_predict(model, rows, diag)
        else:
            mode = method.replace("_sskkm", "")
            opts = replace(solver, seed=seed, unlabeled_weight_mode=mode, custom_weight=None)
            fitted = fit_sskkm(km, train, identity, train.n_classes, opts)
            preds = classify_batch(fitted, rows, diag)
            scores = score_batch(fitted, rows, diag)
        if binary:
            out[method] = average_precision(scores[:, 1], test_y == 1)
        else:
            out[method] = float(np.mean(preds == test_y))
    return out


def learning_curve(
    scenario: GenSpec,
    methods: list[str],
    grid: list[int],
    n_seeds: int,
    eval_size: int,
    base_seed: int = 0,
    kernel: KernelSpec = KernelSpec(),
    solver: SolverOptions = SolverOptions(),
    workers: int = 1,
) -> LearningCurve:
    """Sweep (seed, grid point) cells, fitting every method on a shared train
    split and scoring on a held-out sample of the same scenario.

    Binary scenarios record average precision of the positive class, others
    accuracy. Fully reproducible from (scenario, grid, n_seeds, base_seed);
    cells are independent, so the worker count never changes the result.
    """
    canon = tuple(_canonical_method(m) for m in methods)
    if len(set(canon)) != len(canon):
        raise InputError("duplicate methods requested")
    grid = [int(g) for g in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError(f"grid must be strictly increasing, got {grid}")
    if n_seeds < 1 or eval_size < 1:
        raise InputError("n_seeds and eval_size must be >= 1")

    cells = [(gi, si) for gi in range(len(grid)) for si in range(n_seeds)]

    def run(cell: tuple[int, int]) -> dict[str, float]:
        gi, si = cell
        return _evaluate_cell(
            scenario, canon, grid[gi], si, eval_size, base_seed, kernel, solver
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]

    raw = {m: np.empty((len(grid), n_seeds)) for m in canon}
    for (gi, si), res in zip(cells, results):
        for m in canon:
            raw[m][gi, si] = res[m]
    metric = "average_precision" if scenario.n_classes == 2 else "accuracy"
    return LearningCurve(
        n_unlabeled_grid=tuple(grid),
        methods=canon,
        n_seeds=n_seeds,
        metric_name=metric,
        mean={m: raw[m].mean(axis=1) for m in canon},
        std={m: raw[m].std(axis=1) for m in canon},
        raw=raw,
    )
