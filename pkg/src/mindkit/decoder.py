"""Transfer-learning decoder: MAP ridge regression under a shared prior.

Each task (one subject/day/strategy) supplies a matrix of normalized
feature vectors, bias-augmented to 17 dimensions, with +/-1 labels.
Decoding weights are the MAP estimate under a Gaussian prior N(mu,
Sigma):

    w = (X'X + lambda * inv(Sigma))^-1 (X'y + lambda * inv(Sigma) mu)

The prior itself is learned from a corpus of laboratory tasks by
alternating (a) MAP fits of every task under the current prior with
(b) moment updates of the prior: mu becomes the mean weight vector and
Sigma the trace-normalized matrix square root of the mean outer
product of the centered weights, floored by a small ridge so it stays
invertible.  The update is iterated to a fixed point with a hard cap
of 10,000 rounds.

Accuracy is evaluated by leave-one-trial-out cross-validation with the
sign rule; a prediction of exactly zero counts as incorrect.  By
default lambda is chosen per fold by an inner leave-one-out grid
search on the remaining trials.
"""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .features import FEATURE_NAMES

logger = logging.getLogger(__name__)

N_WEIGHTS = len(FEATURE_NAMES) + 1  # 16 features + bias
LAMBDA_GRID = (1e-2, 1e-1, 1.0, 10.0, 1e2)
EPS_RIDGE = 1e-6
MAX_PRIOR_ITERATIONS = 10_000
PRIOR_CONVERGENCE_TOL = 1e-8
DEFAULT_PRIOR_LAMBDA = 1.0
MIN_GRID_TRIALS = 3  # inner grid search needs enough trials to cross-validate

PRIOR_MAGIC = b"MYNP"
PRIOR_VERSION = 1
_PRIOR_STRUCT = struct.Struct("<4sHI")


class DecoderError(ValueError):
    pass


class SingularSystemError(DecoderError):
    """Unregularized fit on a rank-deficient design."""


class ZeroVarianceError(DecoderError):
    """Correlation input without variance."""


@dataclass(frozen=True)
class TaskDataset:
    """Bias-augmented features and labels for one decodable task.

    Labels are +1/-1 for accuracy evaluation; continuous targets are
    accepted for prior fitting.
    """

    X: np.ndarray
    y: np.ndarray
    subject: str = ""
    day: int = 0
    strategy: str = ""

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
            raise DecoderError("X must be (n, d) aligned with n targets")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_trials(self) -> int:
        return int(self.y.size)


def augment_bias(features: np.ndarray) -> np.ndarray:
    """Append the constant bias column (last dimension of the weights)."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return np.hstack([features, np.ones((features.shape[0], 1))])


class GaussianPrior:
    """N(mu, Sigma) over decoding weights; Sigma kept symmetric PD."""

    def __init__(self, mean: np.ndarray, cov: np.ndarray) -> None:
        mean = np.asarray(mean, dtype=np.float64)
        cov = np.asarray(cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DecoderError("prior needs mean (d,) and covariance (d, d)")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise DecoderError("prior covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        min_eig = float(np.linalg.eigvalsh(cov).min())
        if min_eig < 0.5 * EPS_RIDGE:
            raise DecoderError(f"prior covariance not positive definite "
                               f"(min eigenvalue {min_eig:.3g})")
        self.mean = mean
        self.cov = cov
        self._precision: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    @property
    def precision(self) -> np.ndarray:
        if self._precision is None:
            self._precision = np.linalg.inv(self.cov)
        return self._precision

    @classmethod
    def uninformative(cls, dim: int = N_WEIGHTS) -> "GaussianPrior":
        return cls(np.zeros(dim), np.eye(dim))


def fit_map(X: np.ndarray, y: np.ndarray, prior: GaussianPrior, lam: float) -> np.ndarray:
    """MAP weights under the Gaussian prior; lam=0 is the unregularized fit."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise DecoderError("lambda must be non-negative")
    if X.shape[1] != prior.dim:
        raise DecoderError(f"design has {X.shape[1]} columns, prior has {prior.dim}")
    A = X.T @ X + lam * prior.precision
    b = X.T @ y + lam * (prior.precision @ prior.mean)
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"normal equations singular: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise SingularSystemError("normal equations produced non-finite weights")
    return w


@dataclass
class PriorFitInfo:
    iterations_run: int
    converged: bool
    residual: float
    clipped_eigenvalues: int = 0


def _psd_sqrt(matrix: np.ndarray) -> tuple[np.ndarray, int]:
    """Symmetric matrix square root with negative eigenvalues clipped."""
    vals, vecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    clipped = int(np.sum(vals < 0))
    vals = np.clip(vals, 0.0, None)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (root + root.T), clipped


def learn_prior(tasks: Sequence[TaskDataset],
                iterations: int = MAX_PRIOR_ITERATIONS,
                lam: float = DEFAULT_PRIOR_LAMBDA,
                eps_ridge: float = EPS_RIDGE,
                tol: float = PRIOR_CONVERGENCE_TOL,
                zero_mean: bool = False) -> tuple[GaussianPrior, PriorFitInfo]:
    """Alternate MAP fits and moment updates until Sigma stops moving.

    With `zero_mean` the prior mean is pinned at zero and only the
    feature covariance is learned, for sensitivity checks.
    """
    if len(tasks) < 2:
        raise DecoderError("learning a prior needs at least two tasks")
    dim = tasks[0].X.shape[1]
    for t in tasks:
        if t.X.shape[1] != dim:
            raise DecoderError("all tasks must share the feature dimension")
    mean = np.zeros(dim)
    cov = np.eye(dim)
    info = PriorFitInfo(iterations_run=0, converged=False, residual=np.inf)
    for it in range(1, iterations + 1):
        prior = GaussianPrior(mean, cov)
        weights = np.stack([fit_map(t.X, t.y, prior, lam) for t in tasks])
        mean = np.zeros(dim) if zero_mean else weights.mean(axis=0)
        centered = weights - mean
        moment = centered.T @ centered / len(tasks)
        root, clipped = _psd_sqrt(moment)
        info.clipped_eigenvalues += clipped
        if clipped:
            logger.debug("iteration %d clipped %d negative eigenvalue(s)", it, clipped)
        trace = float(np.trace(root))
        if trace > 0:
            new_cov = root / trace + eps_ridge * np.eye(dim)
        else:
            # Degenerate corpus (all weights identical): collapse to the floor.
            new_cov = eps_ridge * np.eye(dim)
        info.residual = float(np.linalg.norm(new_cov - cov, ord="fro"))
        cov = new_cov
        info.iterations_run = it
        if info.residual < tol:
            info.converged = True
            break
    return GaussianPrior(mean, cov), info


def _loo_predictions(task: TaskDataset, prior: GaussianPrior, lam: float) -> np.ndarray:
    preds = np.empty(task.n_trials)
    for i in range(task.n_trials):
        keep = np.arange(task.n_trials) != i
        w = fit_map(task.X[keep], task.y[keep], prior, lam)
        preds[i] = task.X[i] @ w
    return preds


def _select_lambda(task: TaskDataset, prior: GaussianPrior,
                   grid: Sequence[float]) -> float:
    """Inner leave-one-out accuracy over the grid; ties pick the smaller lambda."""
    if task.n_trials < MIN_GRID_TRIALS or np.unique(np.sign(task.y)).size < 2:
        return DEFAULT_PRIOR_LAMBDA
    best_lam = grid[0]
    best_acc = -1.0
    for lam in grid:
        preds = _loo_predictions(task, prior, lam)
        acc = float(np.mean((np.sign(preds) == np.sign(task.y)) & (preds != 0)))
        if acc > best_acc:
            best_acc = acc
            best_lam = lam
    return float(best_lam)


def loo_accuracy(task: TaskDataset, prior: GaussianPrior,
                 lam: float | None = None,
                 lambda_grid: Sequence[float] = LAMBDA_GRID) -> float:
    """Leave-one-trial-out accuracy with the sign rule; ties are incorrect.

    With lam=None every outer fold picks its own lambda by an inner
    leave-one-out grid search on the training trials.
    """
    labels = np.sign(task.y)
    if np.unique(labels).size < 2:
        raise DecoderError("accuracy evaluation needs both labels present")
    correct = 0
    for i in range(task.n_trials):
        keep = np.arange(task.n_trials) != i
        train = TaskDataset(task.X[keep], task.y[keep], task.subject,
                            task.day, task.strategy)
        fold_lam = lam if lam is not None else _select_lambda(train, prior, lambda_grid)
        w = fit_map(train.X, train.y, prior, fold_lam)
        pred = float(task.X[i] @ w)
        if pred != 0.0 and np.sign(pred) == labels[i]:
            correct += 1
    return correct / task.n_trials


def pearson(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Pearson r with a two-sided p from the t distribution (n-2 df)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise DecoderError("inputs must be 1-D and equally long")
    n = a.size
    if n < 3:
        raise DecoderError("need at least 3 pairs")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = float(np.sqrt(np.sum(ac ** 2) * np.sum(bc ** 2)))
    if denom == 0.0:
        raise ZeroVarianceError("correlation undefined for constant input")
    r = float(np.clip(np.dot(ac, bc) / denom, -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(stats.t.sf(abs(t), n - 2))
    return r, p


# --- prior serialization --------------------------------------------------

def write_prior(prior: GaussianPrior, info: PriorFitInfo | None = None,
                lambda_grid: Sequence[float] = LAMBDA_GRID,
                feature_names: Sequence[str] = FEATURE_NAMES) -> bytes:
    """Versioned prior file: JSON header plus float64 mean and covariance.

    Layout: magic b"MYNP", version u16, header length u32, canonical
    JSON header, mean (d float64 LE), covariance (d*d float64 LE,
    row-major).
    """
    header = {
        "dim": prior.dim,
        "feature_order": list(feature_names) + ["bias"],
        "lambda_grid": list(lambda_grid),
        "eps_ridge": EPS_RIDGE,
        "iterations_run": info.iterations_run if info else None,
        "converged": info.converged if info else None,
        "residual": info.residual if info else None,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return (_PRIOR_STRUCT.pack(PRIOR_MAGIC, PRIOR_VERSION, len(head)) + head
            + np.ascontiguousarray(prior.mean, dtype="<f8").tobytes()
            + np.ascontiguousarray(prior.cov, dtype="<f8").tobytes())


def read_prior(blob: bytes) -> tuple[GaussianPrior, dict]:
    if len(blob) < _PRIOR_STRUCT.size:
        raise DecoderError("prior file truncated")
    magic, version, header_len = _PRIOR_STRUCT.unpack_from(blob, 0)
    if magic != PRIOR_MAGIC:
        raise DecoderError(f"bad prior magic {magic!r}")
    if version != PRIOR_VERSION:
        raise DecoderError(f"unsupported prior version {version}")
    pos = _PRIOR_STRUCT.size
    header = json.loads(blob[pos:pos + header_len].decode("utf-8"))
    pos += header_len
    dim = int(header["dim"])
    mean_bytes = dim * 8
    cov_bytes = dim * dim * 8
    if len(blob) != pos + mean_bytes + cov_bytes:
        raise DecoderError("prior payload length mismatch")
    mean = np.frombuffer(blob[pos:pos + mean_bytes], dtype="<f8").copy()
    cov = np.frombuffer(blob[pos + mean_bytes:], dtype="<f8").reshape(dim, dim).copy()
    return GaussianPrior(mean, cov), header


# --- decoding results and mediators ----------------------------------------

@dataclass(frozen=True)
class DecodingResult:
    subject: str
    day: int
    strategy: str
    accuracy: float
    n_trials: int
    mean_quality: float = np.nan
    motivation: float = np.nan
    meditation: float = np.nan


MEDIATOR_COLUMNS = ("mean_quality", "day", "motivation", "meditation")


@dataclass
class MediatorReport:
    """Correlates decoding accuracy with session-level mediators."""

    correlations: dict[str, tuple[float, float] | None] = field(default_factory=dict)
    notes: dict[str, str] = field(default_factory=dict)
    per_strategy_mean: dict[str, float] = field(default_factory=dict)
    per_day_median: dict[int, float] = field(default_factory=dict)
    n_results: int = 0

    def rows(self) -> list[tuple[str, float, float]]:
        return [(name, rp[0], rp[1]) for name, rp in self.correlations.items()
                if rp is not None]


def mediator_report(results: Sequence[DecodingResult]) -> MediatorReport:
    """Accuracy-vs-mediator correlations plus per-strategy and per-day summaries.

    Mediators without variance (or with missing values) are skipped with
    a note instead of failing the whole report.
    """
    if not results:
        raise DecoderError("results table is empty")
    report = MediatorReport(n_results=len(results))
    acc = np.array([r.accuracy for r in results])
    columns = {
        "mean_quality": np.array([r.mean_quality for r in results]),
        "day": np.array([float(r.day) for r in results]),
        "motivation": np.array([r.motivation for r in results]),
        "meditation": np.array([r.meditation for r in results]),
    }
    for name, values in columns.items():
        ok = np.isfinite(values) & np.isfinite(acc)
        if ok.sum() < 3:
            report.correlations[name] = None
            report.notes[name] = "fewer than 3 usable pairs"
            continue
        try:
            report.correlations[name] = pearson(acc[ok], values[ok])
        except ZeroVarianceError:
            report.correlations[name] = None
            report.notes[name] = "zero variance"
    strategies = sorted({r.strategy for r in results})
    for s in strategies:
        vals = [r.accuracy for r in results if r.strategy == s]
        report.per_strategy_mean[s] = float(np.mean(vals))
    for d in sorted({r.day for r in results}):
        vals = [r.accuracy for r in results if r.day == d]
        report.per_day_median[d] = float(np.median(vals))
    return report


def write_results_table(results: Sequence[DecodingResult], path: str | Path) -> None:
    """Delimited accuracy table, one row per (subject, day, strategy)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("subject", "day", "strategy", "accuracy", "n_trials",
                         "mean_quality", "motivation", "meditation"))
        for r in sorted(results, key=lambda r: (r.subject, r.day, r.strategy)):
            writer.writerow((r.subject, r.day, r.strategy, repr(r.accuracy),
                             r.n_trials, repr(r.mean_quality),
                             repr(r.motivation), repr(r.meditation)))
