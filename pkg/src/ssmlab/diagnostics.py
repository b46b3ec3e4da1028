"""Prediction-error decomposition and cross-engine comparison metrics.

Splits an observed series into cumulative predicted changes plus a
running sum of one-step prediction errors; when the predictor is the true
conditional mean the error increments have mean zero and are serially
uncorrelated, which the orthogonality check tests empirically.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .kalman import FilterTrace
from .model import ObservationSeries

Predictor = Union[Callable[[np.ndarray], float], Sequence[float], np.ndarray]


@dataclass(frozen=True)
class DoobDecomposition:
    """y_t = u[t] + m[t] + baseline for every t (reconstruction identity)."""

    ys: np.ndarray
    predicted_changes: np.ndarray  # one-step predicted change of y at each t
    m_increments: np.ndarray  # one-step prediction errors
    u: np.ndarray  # running sum of predicted changes
    m: np.ndarray  # running sum of prediction errors, anchored at m[0-] = 0
    baseline: float

    def reconstruction_error(self) -> np.ndarray:
        """|u[t] + m[t] + baseline - y_t| at every t, via compensated summation.

        Uses a Neumaier running sum over the interleaved increments so the
        check stays O(T) on long series.
        """
        errs = np.empty(len(self.ys))
        total, comp = self.baseline, 0.0
        for t in range(len(self.ys)):
            for inc in (float(self.predicted_changes[t]), float(self.m_increments[t])):
                s = total + inc
                if abs(total) >= abs(inc):
                    comp += (total - s) + inc
                else:
                    comp += (inc - s) + total
                total = s
            errs[t] = abs(total + comp - self.ys[t])
        return errs

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "y", "v", "u", "m_increment", "m"])
        for t in range(len(self.ys)):
            writer.writerow(
                [
                    t + 1,
                    repr(float(self.ys[t])),
                    repr(float(self.predicted_changes[t])),
                    repr(float(self.u[t])),
                    repr(float(self.m_increments[t])),
                    repr(float(self.m[t])),
                ]
            )
        return buf.getvalue()


def doob_decompose(
    ys: ObservationSeries, predictor: Predictor, baseline: float = 0.0
) -> DoobDecomposition:
    """Split the series into predicted changes and prediction-error increments.

    `predictor` is either a function of the observed history prefix returning
    the one-step predictive mean, or a precomputed array of the T predictive
    means (prediction at t uses only y_1..y_{t-1}).
    """
    y = np.asarray(ys.observations, dtype=float)
    n = len(y)
    if n < 1:
        raise ValueError("need at least one observation")
    if callable(predictor):
        predictions = np.array([float(predictor(y[:t])) for t in range(n)])
    else:
        predictions = np.asarray(predictor, dtype=float)
        if predictions.shape != y.shape:
            raise ValueError(
                f"predictions length {predictions.shape} does not match series {y.shape}"
            )
    if not np.all(np.isfinite(predictions)):
        raise ValueError("predictor returned a non-finite value")
    prev = np.concatenate([[baseline], y[:-1]])
    predicted_changes = predictions - prev
    m_increments = y - predictions
    u = np.cumsum(predicted_changes)
    m = np.cumsum(m_increments)
    return DoobDecomposition(y, predicted_changes, m_increments, u, m, baseline)


@dataclass(frozen=True)
class OrthogonalityCheck:
    mean_increment: float
    lag1_cov: float
    se_bounds: tuple  # (se of the mean, se of the lag-1 covariance)

    def mean_within(self, n_se: float = 3.0) -> bool:
        return abs(self.mean_increment) <= n_se * self.se_bounds[0]

    def lag1_within(self, n_se: float = 3.0) -> bool:
        return abs(self.lag1_cov) <= n_se * self.se_bounds[1]


def martingale_orthogonality_check(decomp: DoobDecomposition) -> OrthogonalityCheck:
    """Sample mean and lag-1 covariance of the error increments, with SE bounds."""
    d = decomp.m_increments
    n = len(d)
    if n < 3:
        raise ValueError(f"need at least 3 increments, got {n}")
    mean = float(d.mean())
    se_mean = float(d.std(ddof=1) / math.sqrt(n))
    products = d[1:] * d[:-1]
    lag1 = float(products.mean())
    se_lag1 = float(products.std(ddof=1) / math.sqrt(len(products)))
    return OrthogonalityCheck(mean, lag1, (se_mean, se_lag1))


@dataclass(frozen=True)
class OracleComparison:
    rmse: float
    max_abs: float
    per_t: np.ndarray


def compare_to_oracle(engine_means, oracle_trace) -> OracleComparison:
    """RMSE and max absolute deviation of engine means from the exact filter's means."""
    engine = np.asarray(engine_means, dtype=float)
    if isinstance(oracle_trace, FilterTrace):
        oracle = oracle_trace.posterior_means
    else:
        oracle = np.asarray(oracle_trace, dtype=float)
    if engine.shape != oracle.shape:
        raise ValueError(f"length mismatch: {engine.shape} vs {oracle.shape}")
    dev = engine - oracle
    return OracleComparison(
        rmse=float(np.sqrt(np.mean(dev**2))),
        max_abs=float(np.max(np.abs(dev))) if len(dev) else 0.0,
        per_t=np.abs(dev),
    )
