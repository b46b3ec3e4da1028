"""MCMC posterior sampling for the local-level model.

Two samplers over the latent path theta_1..theta_T given y_1..y_T:
single-site Gibbs (each theta_t redrawn from its Gaussian full
conditional) and a joint forward-filtering backward-sampling draw.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kalman
from .gauss import gaussian_product
from .model import LocalLevelParams, ObservationSeries


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int
    burn_in: int = 0
    seed: int = 0
    init_states: Optional[Sequence[float]] = None

    def __post_init__(self) -> None:
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.iterations <= self.burn_in:
            raise ValueError(
                f"iterations ({self.iterations}) must exceed burn_in ({self.burn_in})"
            )


@dataclass(frozen=True)
class GibbsSamples:
    """Retained draws: one theta-vector per row, (iterations - burn_in) rows."""

    draws: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("non-finite draw in Gibbs output")

    @property
    def means(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    @property
    def variances(self) -> np.ndarray:
        return self.draws.var(axis=0, ddof=1)

    def to_csv(self) -> str:
        n_cols = self.draws.shape[1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iter"] + [f"theta_{j + 1}" for j in range(n_cols)])
        for i, row in enumerate(self.draws):
            writer.writerow([i] + [repr(float(v)) for v in row])
        return buf.getvalue()


def _check_proper(params: LocalLevelParams) -> None:
    if params.obs_var == 0.0 and params.state_var == 0.0:
        raise ValueError("improper full conditionals: obs_var and state_var are both zero")


def _initial_path(ys: np.ndarray, config: GibbsConfig) -> np.ndarray:
    if config.init_states is not None:
        init = np.asarray(config.init_states, dtype=float)
        if init.shape != ys.shape:
            raise ValueError(
                f"init_states length {init.shape} does not match series length {ys.shape}"
            )
        return init.copy()
    return ys.copy()  # data-adjacent start shortens burn-in


def gibbs_chain(
    ys: ObservationSeries,
    params: LocalLevelParams,
    config: GibbsConfig,
    method: str = "single_site",
) -> GibbsSamples:
    """Run one seeded chain and return the retained draws.

    method "single_site" sweeps t = 1..T redrawing each theta_t from the
    Gaussian product of its neighbours' transition terms and its own
    likelihood term; "ffbs" redraws the whole path jointly from the forward
    Kalman trace each iteration.
    """
    _check_proper(params)
    y = np.asarray(ys.observations, dtype=float)
    n = len(y)
    if n < 1:
        raise ValueError("need at least one observation")
    if method == "single_site":
        return _single_site_chain(y, params, config)
    if method == "ffbs":
        return _ffbs_chain(ys, params, config)
    raise ValueError(f"unknown Gibbs method {method!r}")


def gibbs_two_step(
    y1: float, y2: float, params: LocalLevelParams, config: GibbsConfig
) -> GibbsSamples:
    """Two-observation sampler: alternate the theta_1 and theta_2 full conditionals."""
    return gibbs_chain(ObservationSeries([y1, y2]), params, config)


def _single_site_chain(
    y: np.ndarray, params: LocalLevelParams, config: GibbsConfig
) -> GibbsSamples:
    n = len(y)
    theta = _initial_path(y, config)
    rng = np.random.default_rng(config.seed)
    z = rng.standard_normal((config.iterations, n))

    m0, c0 = params.prior_mean, params.prior_var
    sw, sv = params.state_var, params.obs_var
    retained = np.empty((config.iterations - config.burn_in, n))
    th = theta.tolist()
    yl = y.tolist()
    for k in range(config.iterations):
        zk = z[k]
        for t in range(n):
            components = []
            if t == 0:
                components.append((m0, c0 + sw))
            else:
                components.append((th[t - 1], sw))
            if t < n - 1:
                components.append((th[t + 1], sw))
            components.append((yl[t], sv))
            mean, var = gaussian_product(components)
            th[t] = mean + math.sqrt(var) * zk[t]
        if k >= config.burn_in:
            retained[k - config.burn_in] = th
    return GibbsSamples(retained)


def _ffbs_chain(
    ys: ObservationSeries, params: LocalLevelParams, config: GibbsConfig
) -> GibbsSamples:
    trace = kalman.filter_series(params, ys)
    n = len(trace)
    rng = np.random.default_rng(config.seed)
    z = rng.standard_normal((config.iterations, n))

    sw = params.state_var
    filt = [(s.posterior.mean, s.posterior.variance) for s in trace.steps]
    retained = np.empty((config.iterations - config.burn_in, n))
    path = np.empty(n)
    for k in range(config.iterations):
        zk = z[k]
        m, c = filt[n - 1]
        path[n - 1] = m + math.sqrt(c) * zk[n - 1]
        for t in range(n - 2, -1, -1):
            mean, var = gaussian_product([filt[t], (path[t + 1], sw)])
            path[t] = mean + math.sqrt(var) * zk[t]
        if k >= config.burn_in:
            retained[k - config.burn_in] = path
    return GibbsSamples(retained.copy())
