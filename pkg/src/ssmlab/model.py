"""Local-level state-space model and AR(1) process: parameters and seeded simulation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class LocalLevelParams:
    """Constants of the scalar local-level model.

    The observed series is y_t = theta_t + v_t with v_t ~ N(0, obs_var);
    the latent level follows the random walk theta_t = theta_{t-1} + w_t
    with w_t ~ N(0, state_var); theta_0 ~ N(prior_mean, prior_var).
    """

    obs_var: float
    state_var: float
    prior_mean: float = 0.0
    prior_var: float = 1.0

    def __post_init__(self) -> None:
        for name in ("obs_var", "state_var", "prior_var"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not np.isfinite(self.prior_mean):
            raise ValueError(f"prior_mean must be finite, got {self.prior_mean}")

    @property
    def fully_degenerate(self) -> bool:
        """All three variances zero: simulation still works, inference engines reject."""
        return self.obs_var + self.state_var + self.prior_var == 0.0


@dataclass(frozen=True)
class Ar1Params:
    """AR(1) recursion y_t = (1 + alpha) * y_{t-1} + e_t, e_t ~ N(0, noise_var)."""

    alpha: float
    start_value: float = 0.0
    noise_var: float = 1.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.noise_var) or self.noise_var < 0.0:
            raise ValueError(f"noise_var must be finite and >= 0, got {self.noise_var}")


class ObservationSeries:
    """Time-indexed observations y_1..y_T, optionally paired with the latent truth."""

    def __init__(
        self,
        observations: Sequence[float],
        latent_states: Optional[Sequence[float]] = None,
        seed: Optional[int] = None,
    ):
        self.observations = np.asarray(observations, dtype=float)
        if self.observations.ndim != 1:
            raise ValueError("observations must be one-dimensional")
        if latent_states is not None:
            latent = np.asarray(latent_states, dtype=float)
            if latent.shape != self.observations.shape:
                raise ValueError(
                    f"latent_states length {latent.shape} does not match "
                    f"observations length {self.observations.shape}"
                )
            self.latent_states: Optional[np.ndarray] = latent
        else:
            self.latent_states = None
        self.seed = seed

    def __len__(self) -> int:
        return len(self.observations)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObservationSeries):
            return NotImplemented
        if not np.array_equal(self.observations, other.observations):
            return False
        if (self.latent_states is None) != (other.latent_states is None):
            return False
        if self.latent_states is not None and not np.array_equal(
            self.latent_states, other.latent_states
        ):
            return False
        return True

    def to_csv(self) -> str:
        """Serialize as `t,y,theta` rows (theta column omitted when absent)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if self.latent_states is not None:
            writer.writerow(["t", "y", "theta"])
            for t, (y, theta) in enumerate(zip(self.observations, self.latent_states), start=1):
                writer.writerow([t, repr(float(y)), repr(float(theta))])
        else:
            writer.writerow(["t", "y"])
            for t, y in enumerate(self.observations, start=1):
                writer.writerow([t, repr(float(y))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ObservationSeries":
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty CSV: missing header") from None
        if header[:2] != ["t", "y"]:
            raise ValueError(f"expected header starting with t,y; got {header}")
        has_theta = len(header) >= 3 and header[2] == "theta"
        ys, thetas = [], []
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            for col_name, col_idx in (("y", 1), ("theta", 2)) if has_theta else (("y", 1),):
                try:
                    float(row[col_idx])
                except (ValueError, IndexError):
                    raise ValueError(
                        f"non-numeric or missing value at row {row_num}, column {col_name!r}"
                    ) from None
            ys.append(float(row[1]))
            if has_theta:
                thetas.append(float(row[2]))
        return cls(ys, thetas if has_theta else None)


def simulate_local_level(params: LocalLevelParams, horizon: int, seed: int) -> ObservationSeries:
    """Draw theta_0 from the prior, then run the random walk and observation noise forward.

    Deterministic given (params, horizon, seed).
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    rng = np.random.default_rng(seed)
    theta0 = params.prior_mean + np.sqrt(params.prior_var) * rng.standard_normal()
    state_noise = np.sqrt(params.state_var) * rng.standard_normal(horizon)
    obs_noise = np.sqrt(params.obs_var) * rng.standard_normal(horizon)
    theta = theta0 + np.cumsum(state_noise)
    y = theta + obs_noise
    return ObservationSeries(y, theta, seed=seed)


def simulate_ar1(params: Ar1Params, horizon: int, seed: int) -> ObservationSeries:
    """Simulate y_t = (1 + alpha) * y_{t-1} + e_t with i.i.d. Gaussian increments."""
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    rng = np.random.default_rng(seed)
    noise = np.sqrt(params.noise_var) * rng.standard_normal(horizon)
    phi = 1.0 + params.alpha
    y = np.empty(horizon)
    prev = params.start_value
    for t in range(horizon):
        prev = phi * prev + noise[t]
        y[t] = prev
    return ObservationSeries(y, seed=seed)


def check_ar1_stationary(alpha: float) -> bool:
    """True iff the AR(1) coefficient lies strictly inside (-2, 0)."""
    return -2.0 < alpha < 0.0
