"""Importance sampling, resampling schemes, and the particle-filter protocols.

Weights are carried in the log domain and normalized by max-subtraction;
the linear-domain weight formula overflows on long runs.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .gauss import gaussian_product, normal_logpdf
from .model import LocalLevelParams, ObservationSeries

RESAMPLING_SCHEMES = ("multinomial", "systematic", "stratified", "residual")
PROTOCOLS = ("propagate_first", "update_first", "sis", "apf")


class TotalDegeneracyError(RuntimeError):
    """All particles carry zero likelihood: no particle explains the data."""


class ParticleEnsemble:
    """N weighted particle locations approximating a posterior.

    log_weights are canonical; `weights` is their normalized exponential
    (log-sum-exp with max-subtraction, then renormalized in the linear
    domain so the simplex sum is exact to float rounding).
    """

    def __init__(self, values, log_weights=None):
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 1:
            raise ValueError("need a one-dimensional ensemble with N >= 1 particles")
        n = len(self.values)
        if log_weights is None:
            self.log_weights = np.full(n, -math.log(n))
        else:
            self.log_weights = np.asarray(log_weights, dtype=float)
            if self.log_weights.shape != self.values.shape:
                raise ValueError("values and log_weights must have equal length")
            total = logsumexp(self.log_weights)
            if not np.isfinite(total):
                raise TotalDegeneracyError("all log-weights are -inf")
            self.log_weights = self.log_weights - total
        w = np.exp(self.log_weights)
        self.weights = w / w.sum()

    def __len__(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    @property
    def variance(self) -> float:
        mu = self.mean
        return float(np.dot(self.weights, (self.values - mu) ** 2))


@dataclass(frozen=True)
class ResamplingPolicy:
    """Which scheme to use and when to trigger it.

    ess_fraction None means resample at every step; a value f in (0, 1]
    means resample only when ESS < f * N.
    """

    scheme: str = "systematic"
    ess_fraction: Optional[float] = 0.5

    def __post_init__(self) -> None:
        if self.scheme not in RESAMPLING_SCHEMES:
            raise ValueError(f"unknown resampling scheme {self.scheme!r}")
        if self.ess_fraction is not None and not (0.0 < self.ess_fraction <= 1.0):
            raise ValueError(f"ess_fraction must lie in (0, 1], got {self.ess_fraction}")

    def should_resample(self, ess_value: float, n: int) -> bool:
        if self.ess_fraction is None:
            return True
        return ess_value < self.ess_fraction * n


@dataclass(frozen=True)
class PfConfig:
    n_particles: int
    protocol: str = "propagate_first"
    resampling: ResamplingPolicy = field(default_factory=ResamplingPolicy)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")


def normalized_weights(log_likelihoods) -> np.ndarray:
    """Exp-normalize log-likelihoods into simplex weights via max-subtraction."""
    ll = np.asarray(log_likelihoods, dtype=float)
    if ll.ndim != 1 or len(ll) < 1:
        raise ValueError("need at least one log-likelihood")
    total = logsumexp(ll)
    if not np.isfinite(total):
        raise TotalDegeneracyError("all log-likelihoods are -inf")
    w = np.exp(ll - total)
    return w / w.sum()


def importance_estimate(integrand_values, weights) -> float:
    """Weighted sum sum_i f_i * w_i, accumulated with compensated summation."""
    f = np.asarray(integrand_values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if f.shape != w.shape:
        raise ValueError(f"length mismatch: {f.shape} values vs {w.shape} weights")
    return math.fsum(fi * wi for fi, wi in zip(f, w))


def ess(weights) -> float:
    """Effective sample size 1 / sum(w^2), clamped into [1, N] against rounding."""
    w = np.asarray(weights, dtype=float)
    return float(min(max(1.0 / np.dot(w, w), 1.0), len(w)))


def _counts_from_positions(weights: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Per-row copy-counts of positions in [0,1) against the weight CDF."""
    cum = np.cumsum(weights)
    cum[-1] = 1.0  # guard the last bin against rounding
    reps, n = positions.shape
    idx = np.searchsorted(cum, positions.ravel(), side="right")
    flat = np.ravel_multi_index((np.repeat(np.arange(reps), n), idx), (reps, n))
    return np.bincount(flat, minlength=reps * n).reshape(reps, n)


def resample_counts_batch(
    weights: np.ndarray, scheme: str, rng: np.random.Generator, reps: int
) -> np.ndarray:
    """`reps` independent copy-count vectors (each sums to N) under `scheme`."""
    weights = np.asarray(weights, dtype=float)
    n = len(weights)
    if scheme == "multinomial":
        return rng.multinomial(n, weights, size=reps)
    if scheme == "systematic":
        positions = (rng.random((reps, 1)) + np.arange(n)) / n
        return _counts_from_positions(weights, positions)
    if scheme == "stratified":
        positions = (rng.random((reps, n)) + np.arange(n)) / n
        return _counts_from_positions(weights, positions)
    if scheme == "residual":
        scaled = n * weights
        base = np.floor(scaled).astype(int)
        n_rest = n - int(base.sum())
        if n_rest > 0:
            residual = scaled - base
            rest = rng.multinomial(n_rest, residual / residual.sum(), size=reps)
            return base + rest
        return np.tile(base, (reps, 1))
    raise ValueError(f"unknown resampling scheme {scheme!r}")


def resample_counts(weights: np.ndarray, scheme: str, rng: np.random.Generator) -> np.ndarray:
    """Copy-count vector (sums to N) for one resampling draw under `scheme`."""
    return resample_counts_batch(weights, scheme, rng, 1)[0]


def resample(
    ensemble: ParticleEnsemble, scheme: str, rng: np.random.Generator
) -> ParticleEnsemble:
    """Draw N particles with probability proportional to weight; weights reset to 1/N."""
    counts = resample_counts(ensemble.weights, scheme, rng)
    values = np.repeat(ensemble.values, counts)
    return ParticleEnsemble(values)


def _maybe_resample(
    ensemble: ParticleEnsemble, policy: ResamplingPolicy, rng: np.random.Generator
) -> Tuple[ParticleEnsemble, float, bool]:
    ess_before = ess(ensemble.weights)
    if policy.should_resample(ess_before, len(ensemble)):
        return resample(ensemble, policy.scheme, rng), ess_before, True
    return ensemble, ess_before, False


def pf_step_propagate_first(
    ensemble: ParticleEnsemble,
    y_next: float,
    params: LocalLevelParams,
    policy: ResamplingPolicy,
    rng: np.random.Generator,
) -> Tuple[ParticleEnsemble, float]:
    """Advance through the state equation, then weight by the filtering likelihood.

    Returns the new ensemble and the ESS measured before any resampling.
    """
    moved = ensemble.values + math.sqrt(params.state_var) * rng.standard_normal(len(ensemble))
    if params.obs_var > 0.0:
        logw = ensemble.log_weights + normal_logpdf(y_next, moved, params.obs_var)
    else:
        logw = ensemble.log_weights + np.where(moved == y_next, 0.0, -np.inf)
    new = ParticleEnsemble(moved, logw)
    new, ess_before, _ = _maybe_resample(new, policy, rng)
    return new, ess_before


def pf_step_update_first(
    ensemble: ParticleEnsemble,
    y_next: float,
    params: LocalLevelParams,
    policy: ResamplingPolicy,
    rng: np.random.Generator,
) -> Tuple[ParticleEnsemble, float]:
    """Weight by the smoothing likelihood P(y_next | theta_t), then propagate
    survivors from the data-conditioned transition.

    The marginal likelihood of y_next given theta_t has variance
    obs_var + state_var; the conditioned transition is the Gaussian product
    of the transition density and the filtering likelihood.
    """
    sv, sw = params.obs_var, params.state_var
    total = sv + sw
    if total == 0.0:
        raise ValueError("update-first step needs obs_var + state_var > 0")
    logw = ensemble.log_weights + normal_logpdf(y_next, ensemble.values, total)
    weighted = ParticleEnsemble(ensemble.values, logw)
    weighted, ess_before, _ = _maybe_resample(weighted, policy, rng)
    if sw == 0.0:
        moved = weighted.values  # degenerate transition: particles stay put
    elif sv == 0.0:
        moved = np.full(len(weighted), y_next)  # exact observation pins the next state
    else:
        cond_var = 1.0 / (1.0 / sw + 1.0 / sv)
        cond_mean = cond_var * (weighted.values / sw + y_next / sv)
        moved = cond_mean + math.sqrt(cond_var) * rng.standard_normal(len(weighted))
    return ParticleEnsemble(moved, weighted.log_weights), ess_before


def sis_step(
    ensemble: ParticleEnsemble,
    y_next: float,
    params: LocalLevelParams,
    rng: np.random.Generator,
) -> Tuple[ParticleEnsemble, float]:
    """Propagate-first step with resampling disabled; weights accumulate."""
    never = ResamplingPolicy(scheme="systematic", ess_fraction=None)
    moved = ensemble.values + math.sqrt(params.state_var) * rng.standard_normal(len(ensemble))
    if params.obs_var > 0.0:
        logw = ensemble.log_weights + normal_logpdf(y_next, moved, params.obs_var)
    else:
        logw = ensemble.log_weights + np.where(moved == y_next, 0.0, -np.inf)
    new = ParticleEnsemble(moved, logw)
    return new, ess(new.weights)


def apf_step(
    ensemble: ParticleEnsemble,
    y_next: float,
    params: LocalLevelParams,
    rng: np.random.Generator,
    scheme: str = "systematic",
) -> Tuple[ParticleEnsemble, float]:
    """Auxiliary step: resample on predictive likelihood, propagate, reweight.

    First-stage weights multiply the carried weight by the exact predictive
    likelihood N(y_next; theta_t, obs_var + state_var). The second-stage
    weight of each offspring is filtering likelihood over the ancestor's
    predictive likelihood, so the approximation stays unbiased even if a
    point-estimate first stage is substituted later.
    """
    sv, sw = params.obs_var, params.state_var
    total = sv + sw
    if total == 0.0:
        raise ValueError("auxiliary step needs obs_var + state_var > 0")
    log_predictive = normal_logpdf(y_next, ensemble.values, total)
    aux = ParticleEnsemble(ensemble.values, ensemble.log_weights + log_predictive)
    ess_before = ess(aux.weights)
    counts = resample_counts(aux.weights, scheme, rng)
    parents = np.repeat(np.arange(len(ensemble)), counts)
    moved = ensemble.values[parents] + math.sqrt(sw) * rng.standard_normal(len(parents))
    if sv > 0.0:
        log_filtering = normal_logpdf(y_next, moved, sv)
    else:
        log_filtering = np.where(moved == y_next, 0.0, -np.inf)
    logw = log_filtering - log_predictive[parents]
    return ParticleEnsemble(moved, logw), ess_before


@dataclass(frozen=True)
class ParticleTraceStep:
    t: int
    mean: float
    variance: float
    ess: float
    resampled: bool


@dataclass(frozen=True)
class ParticleTrace:
    steps: tuple
    ensembles: Optional[tuple] = None  # populated only when keep_ensembles is set

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    @property
    def means(self) -> np.ndarray:
        """Posterior-mean estimates for t = 1..T (initialization record excluded)."""
        return np.array([s.mean for s in self.steps if s.t > 0])

    @property
    def ess_values(self) -> np.ndarray:
        return np.array([s.ess for s in self.steps if s.t > 0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "mean", "var", "ess", "resampled"])
        for s in self.steps:
            writer.writerow(
                [s.t, repr(s.mean), repr(s.variance), repr(s.ess), int(s.resampled)]
            )
        return buf.getvalue()

    def ensembles_to_csv(self) -> str:
        if self.ensembles is None:
            raise ValueError("per-step ensembles were not retained")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "i", "value", "weight"])
        for step, ens in zip(self.steps, self.ensembles):
            for i, (v, w) in enumerate(zip(ens.values, ens.weights)):
                writer.writerow([step.t, i, repr(float(v)), repr(float(w))])
        return buf.getvalue()


def run_filter(
    ys: ObservationSeries,
    params: LocalLevelParams,
    config: PfConfig,
    keep_ensembles: bool = False,
) -> ParticleTrace:
    """Initialize N particles from the prior and fold the configured step over y_1..y_T."""
    if params.obs_var == 0.0 and params.state_var == 0.0:
        raise ValueError("degenerate model: obs_var and state_var are both zero")
    rng = np.random.default_rng(config.seed)
    values = params.prior_mean + math.sqrt(params.prior_var) * rng.standard_normal(
        config.n_particles
    )
    ensemble = ParticleEnsemble(values)
    steps: List[ParticleTraceStep] = [
        ParticleTraceStep(0, ensemble.mean, ensemble.variance, float(len(ensemble)), False)
    ]
    ensembles = [ensemble]
    n = config.n_particles
    for t, y in enumerate(ys.observations, start=1):
        y = float(y)
        if config.protocol == "propagate_first":
            ensemble, ess_before = pf_step_propagate_first(
                ensemble, y, params, config.resampling, rng
            )
            resampled = config.resampling.should_resample(ess_before, n)
        elif config.protocol == "update_first":
            ensemble, ess_before = pf_step_update_first(
                ensemble, y, params, config.resampling, rng
            )
            resampled = config.resampling.should_resample(ess_before, n)
        elif config.protocol == "sis":
            ensemble, ess_before = sis_step(ensemble, y, params, rng)
            resampled = False
        else:  # apf
            ensemble, ess_before = apf_step(
                ensemble, y, params, rng, scheme=config.resampling.scheme
            )
            resampled = True
        steps.append(
            ParticleTraceStep(t, ensemble.mean, ensemble.variance, ess_before, resampled)
        )
        if keep_ensembles:
            ensembles.append(ensemble)
    return ParticleTrace(tuple(steps), tuple(ensembles) if keep_ensembles else None)
