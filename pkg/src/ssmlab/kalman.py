"""Exact Gaussian filtering and smoothing for the local-level model.

These closed forms are the ground-truth oracle that every Monte Carlo
engine in the package is validated against.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import List

import numpy as np

from .model import LocalLevelParams, ObservationSeries


class DegenerateUpdateError(ValueError):
    """Raised when an observation arrives under a fully deterministic belief."""


@dataclass(frozen=True)
class GaussianBelief:
    """Univariate Gaussian state belief (mean, variance)."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.mean):
            raise ValueError(f"mean must be finite, got {self.mean}")
        if not np.isfinite(self.variance) or self.variance < 0.0:
            raise ValueError(f"variance must be finite and >= 0, got {self.variance}")


@dataclass(frozen=True)
class FilterStep:
    t: int
    predicted: GaussianBelief
    predictive_obs: GaussianBelief
    posterior: GaussianBelief


@dataclass(frozen=True)
class FilterTrace:
    """Per-timestep filtering record, ordered by t, one entry per observation."""

    steps: tuple

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    @property
    def posterior_means(self) -> np.ndarray:
        return np.array([s.posterior.mean for s in self.steps])

    @property
    def posterior_variances(self) -> np.ndarray:
        return np.array([s.posterior.variance for s in self.steps])

    @property
    def predictive_obs_means(self) -> np.ndarray:
        return np.array([s.predictive_obs.mean for s in self.steps])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["t", "pred_mean", "pred_var", "predobs_mean", "predobs_var", "post_mean", "post_var"]
        )
        for s in self.steps:
            writer.writerow(
                [
                    s.t,
                    repr(s.predicted.mean),
                    repr(s.predicted.variance),
                    repr(s.predictive_obs.mean),
                    repr(s.predictive_obs.variance),
                    repr(s.posterior.mean),
                    repr(s.posterior.variance),
                ]
            )
        return buf.getvalue()


def predict_state(belief: GaussianBelief, state_var: float) -> GaussianBelief:
    """One-step state prediction: the random walk adds state_var to the variance."""
    return GaussianBelief(belief.mean, belief.variance + state_var)


def predict_observation(belief: GaussianBelief, state_var: float, obs_var: float) -> GaussianBelief:
    """One-step observation prediction: both noise variances add on."""
    return GaussianBelief(belief.mean, belief.variance + state_var + obs_var)


def update(predicted: GaussianBelief, y: float, obs_var: float) -> GaussianBelief:
    """Conjugate Gaussian measurement update of a predicted belief.

    With R the predicted variance and gain K = R / (R + obs_var), the
    posterior is N(m + K*(y - m), (1 - K)*R).
    """
    r = predicted.variance
    total = r + obs_var
    if total == 0.0:
        if y == predicted.mean:
            return predicted
        raise DegenerateUpdateError(
            f"deterministic belief N({predicted.mean}, 0) with obs_var=0 "
            f"cannot absorb observation y={y}"
        )
    gain = r / total
    mean = predicted.mean + gain * (y - predicted.mean)
    variance = (1.0 - gain) * r
    return GaussianBelief(mean, variance)


def filter_series(params: LocalLevelParams, ys: ObservationSeries) -> FilterTrace:
    """Fold predict_state then update over y_1..y_T from the N(m_0, C_0) prior."""
    belief = GaussianBelief(params.prior_mean, params.prior_var)
    steps: List[FilterStep] = []
    for t, y in enumerate(ys.observations, start=1):
        predicted = predict_state(belief, params.state_var)
        predictive_obs = predict_observation(belief, params.state_var, params.obs_var)
        belief = update(predicted, float(y), params.obs_var)
        steps.append(FilterStep(t, predicted, predictive_obs, belief))
    return FilterTrace(tuple(steps))


def smooth_series(params: LocalLevelParams, ys: ObservationSeries) -> List[GaussianBelief]:
    """Fixed-interval smoothed marginals P(theta_t | y_1..y_T) for t = 1..T.

    Backward-gain recursion over the forward filter trace; smoothed variance
    never exceeds the filtered variance at the same t.
    """
    trace = filter_series(params, ys)
    n = len(trace)
    if n == 0:
        return []
    smoothed = [trace[-1].posterior]
    for t in range(n - 2, -1, -1):
        filt = trace[t].posterior
        pred_next = trace[t + 1].predicted
        nxt = smoothed[0]
        if pred_next.variance == 0.0:
            # no information flows backward through a deterministic prediction
            smoothed.insert(0, filt)
            continue
        gain = filt.variance / pred_next.variance
        mean = filt.mean + gain * (nxt.mean - pred_next.mean)
        variance = filt.variance + gain * gain * (nxt.variance - pred_next.variance)
        smoothed.insert(0, GaussianBelief(mean, max(variance, 0.0)))
    return smoothed
