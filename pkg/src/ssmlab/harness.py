"""Experiment configuration, execution, and artifact persistence.

Configs are TOML. A run loads or simulates one data series, runs every
configured engine on it, and writes per-engine trace CSVs, a summary CSV
of deviations from the exact filter, and a manifest with content hashes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__, diagnostics, gibbs, kalman, particle
from .model import LocalLevelParams, ObservationSeries, simulate_local_level


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"- {v}" for v in self.violations))


@dataclass(frozen=True)
class SimulateSpec:
    horizon: int
    seed: int


@dataclass(frozen=True)
class EngineSpec:
    label: str
    kind: str  # kalman | gibbs | particle
    gibbs_config: Optional[gibbs.GibbsConfig] = None
    gibbs_method: str = "single_site"
    pf_config: Optional[particle.PfConfig] = None


@dataclass(frozen=True)
class ExperimentConfig:
    model: LocalLevelParams
    data: Union[SimulateSpec, Path]
    engines: List[EngineSpec]
    output_dir: Path
    emit_plots: bool = False


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment config; collects all violations."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"TOML syntax error: {exc}"]) from None

    violations: List[str] = []

    model = None
    model_doc = doc.get("model")
    if not isinstance(model_doc, dict):
        violations.append("missing [model] table")
    else:
        try:
            model = LocalLevelParams(
                obs_var=float(model_doc.get("obs_var", 1.0)),
                state_var=float(model_doc.get("state_var", 1.0)),
                prior_mean=float(model_doc.get("prior_mean", 0.0)),
                prior_var=float(model_doc.get("prior_var", 1.0)),
            )
        except (TypeError, ValueError) as exc:
            violations.append(f"model parameters violate LocalLevelParams invariants: {exc}")

    data: Union[SimulateSpec, Path, None] = None
    data_doc = doc.get("data")
    if not isinstance(data_doc, dict):
        violations.append("missing [data] table (needs either 'simulate' or 'file')")
    elif "simulate" in data_doc:
        sim = data_doc["simulate"]
        if not isinstance(sim, dict) or "horizon" not in sim or "seed" not in sim:
            violations.append("[data.simulate] needs integer 'horizon' and 'seed'")
        else:
            data = SimulateSpec(int(sim["horizon"]), int(sim["seed"]))
            if data.horizon < 0:
                violations.append("simulate horizon must be >= 0")
    elif "file" in data_doc:
        path = Path(str(data_doc["file"]))
        if not path.exists():
            violations.append(f"data file does not exist: {path}")
        data = path
    else:
        violations.append("[data] must contain either a [data.simulate] table or a 'file' key")

    engines: List[EngineSpec] = []
    engine_docs = doc.get("engines")
    if not isinstance(engine_docs, list) or not engine_docs:
        violations.append("need at least one [[engines]] entry")
        engine_docs = []
    labels = set()
    for i, e in enumerate(engine_docs):
        label = str(e.get("label", f"engine{i}"))
        if label in labels:
            violations.append(f"duplicate engine label {label!r}")
        labels.add(label)
        kind = e.get("kind")
        if kind == "kalman":
            engines.append(EngineSpec(label, "kalman"))
        elif kind == "gibbs":
            if "seed" not in e:
                violations.append(f"engine {label!r}: gibbs engines require an explicit seed")
                continue
            try:
                cfg = gibbs.GibbsConfig(
                    iterations=int(e.get("iterations", 10000)),
                    burn_in=int(e.get("burn_in", int(e.get("iterations", 10000)) // 10)),
                    seed=int(e["seed"]),
                )
            except ValueError as exc:
                violations.append(f"engine {label!r}: {exc}")
                continue
            method = str(e.get("method", "single_site"))
            if method not in ("single_site", "ffbs"):
                violations.append(f"engine {label!r}: unknown gibbs method {method!r}")
                continue
            engines.append(EngineSpec(label, "gibbs", gibbs_config=cfg, gibbs_method=method))
        elif kind == "particle":
            if "seed" not in e:
                violations.append(f"engine {label!r}: particle engines require an explicit seed")
                continue
            try:
                frac = e.get("resample_ess_fraction", 0.5)
                policy = particle.ResamplingPolicy(
                    scheme=str(e.get("resample_scheme", "systematic")),
                    ess_fraction=None if frac is None else float(frac),
                )
                cfg = particle.PfConfig(
                    n_particles=int(e.get("n_particles", 1000)),
                    protocol=str(e.get("protocol", "propagate_first")),
                    resampling=policy,
                    seed=int(e["seed"]),
                )
            except ValueError as exc:
                violations.append(f"engine {label!r}: {exc}")
                continue
            engines.append(EngineSpec(label, "particle", pf_config=cfg))
        else:
            violations.append(f"engine {label!r}: unknown kind {kind!r}")

    output_dir = Path(str(doc.get("output_dir", "out")))
    emit_plots = bool(doc.get("emit_plots", False))

    if violations:
        raise ConfigError(violations)
    assert model is not None and data is not None
    return ExperimentConfig(model, data, engines, output_dir, emit_plots)


def load_config(path: Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


@dataclass
class ExperimentResult:
    exit_status: int
    files: List[Path] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every engine on one shared data series and persist all artifacts."""
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    result = ExperimentResult(exit_status=0)

    if isinstance(config.data, SimulateSpec):
        series = simulate_local_level(config.model, config.data.horizon, config.data.seed)
    else:
        series = ObservationSeries.from_csv(Path(config.data).read_text())
    data_path = out / "data.csv"
    data_path.write_text(series.to_csv())
    result.files.append(data_path)

    kalman_trace = None
    engine_means = {}
    for spec in config.engines:
        if spec.kind == "kalman":
            kalman_trace = kalman.filter_series(config.model, series)
            break

    manifest_lines = [
        f"version={__version__}",
        "config_hash="
        + hashlib.sha256(
            repr((config.model, config.data, config.engines, config.emit_plots)).encode()
        ).hexdigest(),
    ]
    if isinstance(config.data, SimulateSpec):
        manifest_lines.append(f"data_seed={config.data.seed}")

    for spec in config.engines:
        trace_path = out / f"{spec.label}_trace.csv"
        try:
            if spec.kind == "kalman":
                trace = kalman.filter_series(config.model, series)
                trace_path.write_text(trace.to_csv())
                engine_means[spec.label] = ("filtered", trace.posterior_means)
            elif spec.kind == "particle":
                trace = particle.run_filter(series, config.model, spec.pf_config)
                trace_path.write_text(trace.to_csv())
                engine_means[spec.label] = ("filtered", trace.means)
                manifest_lines.append(f"seed.{spec.label}={spec.pf_config.seed}")
            else:
                samples = gibbs.gibbs_chain(
                    series, config.model, spec.gibbs_config, method=spec.gibbs_method
                )
                trace_path.write_text(samples.to_csv())
                engine_means[spec.label] = ("smoothed", samples.means)
                manifest_lines.append(f"seed.{spec.label}={spec.gibbs_config.seed}")
            result.files.append(trace_path)
        except Exception as exc:  # engine failures are isolated
            result.exit_status = 1
            result.errors.append(f"{spec.label}: {exc}")
            manifest_lines.append(f"error.{spec.label}={exc}")

    if kalman_trace is not None and len(series) > 0:
        smoothed_means = np.array(
            [b.mean for b in kalman.smooth_series(config.model, series)]
        )
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["engine", "reference", "rmse", "max_abs"])
        for label, (flavour, means) in engine_means.items():
            reference = kalman_trace.posterior_means if flavour == "filtered" else smoothed_means
            cmp = diagnostics.compare_to_oracle(means, reference)
            writer.writerow([label, flavour, repr(cmp.rmse), repr(cmp.max_abs)])
        summary_path = out / "summary.csv"
        summary_path.write_text(buf.getvalue())
        result.files.append(summary_path)

    if config.emit_plots:
        plot_path = out / "plots.py"
        plot_path.write_text(_plot_script(config))
        result.files.append(plot_path)

    for path in result.files:
        manifest_lines.append(f"sha256.{path.name}={_sha256(path)}")
    manifest_path = out / "manifest.txt"
    manifest_path.write_text("\n".join(manifest_lines) + "\n")
    return result


def _plot_script(config: ExperimentConfig) -> str:
    labels = [s.label for s in config.engines if s.kind in ("kalman", "particle")]
    return f'''"""Plot engine traces produced by this experiment. Run from the output directory."""
import csv

import matplotlib.pyplot as plt

LABELS = {labels!r}


def read_means(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    key = "post_mean" if rows and "post_mean" in rows[0] else "mean"
    return [int(r["t"]) for r in rows], [float(r[key]) for r in rows]


fig, ax = plt.subplots()
with open("data.csv") as fh:
    data = list(csv.DictReader(fh))
ax.plot([int(r["t"]) for r in data], [float(r["y"]) for r in data], ".", label="y", alpha=0.5)
for label in LABELS:
    ts, means = read_means(f"{{label}}_trace.csv")
    ax.plot(ts, means, label=label)
ax.legend()
ax.set_xlabel("t")
fig.savefig("traces.png", dpi=150)
'''
