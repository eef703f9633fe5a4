"""Error metrics, percentile summaries, and result tables.

The headline metric is the maximum over time of the snapshot-wise relative
l2 error between a reference trajectory and a prediction.  Summaries use
nearest-rank percentiles (the order statistic at index ceil(q * n / 100),
1-based), so they are exact on small sets.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MlasdiError, UndefinedMetricError, ValidationError
from .multistage import predict


def max_relative_error(truth, pred):
    """max_j ||truth_j - pred_j|| / ||truth_j|| over time snapshots.

    Both arguments are (T, Nu).  Raises UndefinedMetricError naming the
    first time index whose truth snapshot has zero norm.
    """
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise ValidationError(
            f"trajectory shapes differ: truth {truth.shape} vs pred {pred.shape}"
        )
    norms = np.sqrt((truth * truth).sum(axis=1))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise UndefinedMetricError(
            f"truth snapshot at time index {zero[0]} has zero norm; relative "
            f"error undefined"
        )
    diff = truth - pred
    rel = np.sqrt((diff * diff).sum(axis=1)) / norms
    return float(rel.max())


def nearest_rank(sorted_values, q):
    """Nearest-rank percentile of an ascending-sorted sequence."""
    n = len(sorted_values)
    idx = math.ceil(q * n / 100.0)
    return float(sorted_values[max(idx, 1) - 1])


def percentile_summary(errors):
    """(max, p90, p75) of a non-empty error list, nearest-rank convention."""
    if len(errors) == 0:
        raise ValidationError("cannot summarize an empty error list")
    values = np.sort(np.asarray(errors, dtype=np.float64))
    return float(values[-1]), nearest_rank(values, 90), nearest_rank(values, 75)


@dataclass
class ErrorReport:
    """Per-parameter max relative errors plus their summary statistics."""

    params: np.ndarray
    errors: np.ndarray
    max: float
    p90: float
    p75: float
    train_seconds: list = field(default_factory=list)
    param_count: int = 0

    def __post_init__(self):
        if np.any(self.errors < 0):
            raise ValidationError("relative errors must be non-negative")


def evaluate_stack(stack, test_tensor, stage_cutoff=None, train_seconds=None,
                   threads=1):
    """Run predictions for every test parameter and aggregate errors.

    ``stage_cutoff`` truncates the stage composition, so one stack yields
    stage-1 and stage-2 reports for comparison.  Prediction failures are
    annotated with the parameter that caused them.
    """
    if test_tensor.n_params == 0:
        raise ValidationError("test set is empty; nothing to evaluate")
    n_steps = test_tensor.n_times - 1
    dt = test_tensor.dt

    def one(i):
        mu = test_tensor.params[i]
        try:
            pred = predict(
                stack, mu, test_tensor.values[i, 0], n_steps, dt,
                stage_cutoff=stage_cutoff,
            )
            return max_relative_error(test_tensor.values[i], pred)
        except MlasdiError as exc:
            raise type(exc)(f"parameter {mu.tolist()}: {exc}") from exc

    indices = range(test_tensor.n_params)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            errors = np.array(list(pool.map(one, indices)))
    else:
        errors = np.array([one(i) for i in indices])
    mx, p90, p75 = percentile_summary(errors)
    seconds = list(train_seconds if train_seconds is not None
                   else stack.train_seconds)
    return ErrorReport(
        params=test_tensor.params.copy(),
        errors=errors,
        max=mx,
        p90=p90,
        p75=p75,
        train_seconds=seconds,
        param_count=stack.parameter_count,
    )


def _fmt(v):
    return f"{v:.17g}"


def write_error_csv(report, path):
    """One row per parameter: mu components then its max relative error."""
    n_mu = report.params.shape[1]
    header = ",".join(f"mu_{i + 1}" for i in range(n_mu)) + ",max_rel_error"
    lines = [header]
    for row, err in zip(report.params, report.errors):
        lines.append(",".join(_fmt(v) for v in row) + "," + _fmt(err))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def summary_text(report):
    lines = [
        f"max={_fmt(report.max)}",
        f"p90={_fmt(report.p90)}",
        f"p75={_fmt(report.p75)}",
    ]
    for k, sec in enumerate(report.train_seconds, start=1):
        lines.append(f"train_seconds_stage_{k}={_fmt(sec)}")
    lines.append(f"param_count={report.param_count}")
    return "\n".join(lines) + "\n"


def write_summary(report, path):
    """key=value summary block (max, p90, p75, timings, parameter count)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(summary_text(report))
