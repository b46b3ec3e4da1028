"""Independent numerical-integration oracles used to verify the closed forms.

Everything here works on dense theta grids with trapezoid integration and
kernel convolutions; nothing imports the recursions under test.
"""
from __future__ import annotations

import numpy as np
from numpy import trapezoid
from scipy.signal import fftconvolve

from ssmlab.model import LocalLevelParams


def _normal_pdf(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def _moments(grid, density, step):
    total = trapezoid(density, dx=step)
    mean = trapezoid(grid * density, dx=step) / total
    var = trapezoid((grid - mean) ** 2 * density, dx=step) / total
    return float(mean), float(var)


def _build_grid(params: LocalLevelParams, ys: np.ndarray):
    horizon = len(ys)
    max_var = params.prior_var + horizon * params.state_var + params.obs_var
    max_sd = np.sqrt(max_var)
    anchors = np.concatenate([[params.prior_mean], ys]) if horizon else np.array(
        [params.prior_mean]
    )
    lo = anchors.min() - 10.0 * max_sd
    hi = anchors.max() + 10.0 * max_sd
    min_var = min(v for v in (params.prior_var, params.state_var, params.obs_var) if v > 0)
    step = 1e-3 * np.sqrt(min_var)
    n = int(np.ceil((hi - lo) / step))
    if n % 2 == 0:
        n += 1  # odd length keeps the convolution kernel centered
    return np.linspace(lo, lo + n * step, n + 1), step


def grid_filter_smoother(params: LocalLevelParams, ys):
    """Filtered and smoothed (mean, var) pairs by dense-grid integration.

    Returns (filtered, smoothed), each a list of (mean, var) for t = 1..T.
    """
    y = np.asarray(ys, dtype=float)
    grid, step = _build_grid(params, y)
    offsets = grid - grid[(len(grid) - 1) // 2]
    kernel = _normal_pdf(offsets, 0.0, params.state_var) if params.state_var > 0 else None

    def propagate(density):
        if kernel is None:
            return density
        return np.maximum(fftconvolve(density, kernel, mode="same") * step, 0.0)

    filtered_densities = []
    density = _normal_pdf(grid, params.prior_mean, params.prior_var)
    for obs in y:
        density = propagate(density)
        density = density * _normal_pdf(obs, grid, params.obs_var)
        density = density / trapezoid(density, dx=step)
        filtered_densities.append(density)

    filtered = [_moments(grid, d, step) for d in filtered_densities]

    smoothed = [None] * len(y)
    beta = np.ones_like(grid)
    for t in range(len(y) - 1, -1, -1):
        post = filtered_densities[t] * beta
        smoothed[t] = _moments(grid, post, step)
        if t > 0:
            beta = propagate(_normal_pdf(y[t], grid, params.obs_var) * beta)
    return filtered, smoothed


def grid_posterior_update(prior_mean, prior_var, y, obs_var, lo=-10.0, hi=10.0, step=1e-3):
    """Posterior (mean, var) of a single conjugate update by direct integration."""
    grid = np.arange(lo, hi + step, step)
    density = _normal_pdf(grid, prior_mean, prior_var) * _normal_pdf(y, grid, obs_var)
    return _moments(grid, density, step)


def grid_joint_two_step(params: LocalLevelParams, y1, y2, n_points=1201, span=8.0):
    """Joint posterior of (theta_1, theta_2) given two observations, on a 2-D grid.

    Returns (grid, step, joint) with joint normalized to integrate to one.
    """
    center = 0.5 * (y1 + y2)
    width = span * np.sqrt(
        params.prior_var + 2 * params.state_var + params.obs_var
    ) + abs(y1 - y2)
    grid = np.linspace(center - width, center + width, n_points)
    step = grid[1] - grid[0]
    t1 = grid[:, None]
    t2 = grid[None, :]
    joint = (
        _normal_pdf(t1, params.prior_mean, params.prior_var + params.state_var)
        * _normal_pdf(t2, t1, params.state_var)
        * _normal_pdf(y1, t1, params.obs_var)
        * _normal_pdf(y2, t2, params.obs_var)
    )
    joint = joint / (joint.sum() * step * step)
    return grid, step, joint


def joint_marginal_moments(grid, step, joint, axis):
    """(mean, var) of one coordinate of a normalized 2-D grid density."""
    marginal = joint.sum(axis=1 - axis) * step
    total = marginal.sum() * step
    mean = (grid * marginal).sum() * step / total
    var = ((grid - mean) ** 2 * marginal).sum() * step / total
    return float(mean), float(var)


def batch_means_se(draws, n_batches: int = 50):
    """Autocorrelation-robust MC standard error of a chain mean, per coordinate."""
    draws = np.asarray(draws)
    k = len(draws) // n_batches
    batches = draws[: k * n_batches].reshape(n_batches, k, -1).mean(axis=1)
    return batches.std(axis=0, ddof=1) / np.sqrt(n_batches)
