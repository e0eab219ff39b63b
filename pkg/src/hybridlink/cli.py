"""Command-line runner for configured link experiments.

Configuration is an INI-style file (sections, ``key = value``, ``#``
comments). Every key is optional; see ``docs/config.md`` for the schema.

    hybridlink witness --config run.ini --seed 7 --shots 5000000 --out results/
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hybridlink import budget, estimation
from hybridlink.event_sim import LinkConfig, hbt_counts, analytic_g2, simulate_decay_curve, simulate_run
from hybridlink.protocol import DephasingParams, LinkTimings, combined_half_time, run_protocol
from hybridlink.quantum_core import SETTINGS_9, SETTINGS_WITNESS

log = logging.getLogger("hybridlink")

MODES = ("witness", "tomography", "decay_curve", "budget", "g2")
OUTPUT_DIR_ENV = "HYBRIDLINK_OUTPUT_DIR"

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE, EXIT_IO = 0, 2, 3, 4

DEFAULT_SWEEP = (1e-6, 25e-6, 50e-6, 75e-6, 100e-6, 150e-6, 200e-6)


class SpecError(ValueError):
    """Invalid experiment configuration; ``errors`` lists one message per field."""

    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    mode: str = "budget"
    config: LinkConfig = field(default_factory=LinkConfig)
    timings: LinkTimings = field(default_factory=LinkTimings)
    dephasing: DephasingParams | None = None
    shots: int = 5_000_000
    seed: int = 0
    output_dir: str = "."
    f0: float = 0.95
    bootstrap: int = 1000
    resamples: int = 10**6
    confidence_method: str = "quadrature"
    sweep_points: tuple = DEFAULT_SWEEP
    sweep_axis: str = "both"
    sweep_fixed: float = 1e-6
    observed_rate: float | None = 2.5e-6
    target_coincidences: float = 60.0
    photon_statistics: str = "admixture"
    mean_photon_number: float | None = None
    workers: int = 1

    def canonical(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        d.pop("workers")
        return d

    def spec_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def time_points(self) -> list[tuple[float, float]]:
        if self.sweep_axis == "both":
            return [(t, t) for t in self.sweep_points]
        if self.sweep_axis == "at":
            return [(t, self.sweep_fixed) for t in self.sweep_points]
        return [(self.sweep_fixed, t) for t in self.sweep_points]


# key -> parser for each section; LinkConfig/DephasingParams/LinkTimings keys are filled in below
_EXPERIMENT_KEYS = {
    "name": str,
    "mode": str,
    "shots": int,
    "seed": int,
    "output_dir": str,
    "f0": float,
    "bootstrap": int,
    "resamples": int,
    "confidence_method": str,
    "workers": int,
}
_SWEEP_KEYS = {"points": "floats", "axis": str, "fixed": float}
_BUDGET_KEYS = {"observed_rate": float, "target_coincidences": float}
_G2_KEYS = {"photon_statistics": str, "mean_photon_number": float}


def _field_parsers(cls):
    out = {}
    for f in dataclasses.fields(cls):
        default = f.default
        if isinstance(default, bool):
            out[f.name] = bool
        elif isinstance(default, int):
            out[f.name] = int
        else:
            out[f.name] = float
    return out


SECTIONS = {
    "experiment": _EXPERIMENT_KEYS,
    "link": _field_parsers(LinkConfig),
    "timings": _field_parsers(LinkTimings),
    "dephasing": _field_parsers(DephasingParams),
    "sweep": _SWEEP_KEYS,
    "budget": _BUDGET_KEYS,
    "g2": _G2_KEYS,
}


def _convert(raw: str, kind):
    raw = raw.strip()
    if kind == "floats":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    return kind(raw)


def _build(cls, values: dict, section: str, errors: list):
    try:
        return cls(**values)
    except ValueError as exc:
        msg = str(exc)
        errors.append(f"[{section}] {msg}")
        return None


def validate_spec(text: str, overrides: dict | None = None) -> ExperimentSpec:
    """Parse configuration text into an :class:`ExperimentSpec`.

    ``overrides`` (from the command line) replace file values. Raises
    :class:`SpecError` listing every problem found.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                       interpolation=None)
    parser.optionxform = str
    errors = []
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise SpecError([f"unreadable configuration: {exc}"]) from exc

    values = {name: {} for name in SECTIONS}
    for section in parser.sections():
        if section not in SECTIONS:
            errors.append(f"unknown section [{section}]")
            continue
        for key, raw in parser.items(section):
            kind = SECTIONS[section].get(key)
            if kind is None:
                errors.append(f"[{section}] unknown key {key!r}")
                continue
            try:
                values[section][key] = _convert(raw, kind)
            except ValueError as exc:
                errors.append(f"[{section}] {key}: {exc}")

    for key, value in (overrides or {}).items():
        if value is not None:
            values["experiment"][key] = value

    exp = values["experiment"]
    mode = exp.get("mode", "budget")
    if mode not in MODES:
        errors.append(f"[experiment] mode must be one of {', '.join(MODES)}, got {mode!r}")

    for name in ("shots", "bootstrap", "resamples", "workers"):
        if name in exp and exp[name] < (0 if name == "bootstrap" else 1):
            errors.append(f"[experiment] {name} must be positive")
    if "resamples" in exp and exp["resamples"] < 10**4:
        errors.append("[experiment] resamples must be at least 10000")
    if "f0" in exp and not 0.5 < exp["f0"] <= 1.0:
        errors.append(f"[experiment] f0 must lie in (0.5, 1], got {exp['f0']}")
    if exp.get("confidence_method", "quadrature") not in ("quadrature", "monte_carlo"):
        errors.append("[experiment] confidence_method must be 'quadrature' or 'monte_carlo'")

    config = _build(LinkConfig, values["link"], "link", errors)
    timings = _build(LinkTimings, values["timings"], "timings", errors)
    dephasing = None
    if parser.has_section("dephasing"):
        dephasing = _build(DephasingParams, values["dephasing"], "dephasing", errors)
    elif mode == "decay_curve":
        errors.append("[dephasing] section is required in decay_curve mode")

    sweep = values["sweep"]
    if sweep.get("axis", "both") not in ("both", "at", "bec"):
        errors.append("[sweep] axis must be one of both, at, bec")
    if any(t < 0 for t in sweep.get("points", ())) or sweep.get("fixed", 0.0) < 0:
        errors.append("[sweep] times must be non-negative")
    if "points" in sweep and len(sweep["points"]) < 3:
        errors.append("[sweep] points needs at least 3 storage times")

    g2 = values["g2"]
    if g2.get("photon_statistics", "admixture") not in ("admixture", "poisson"):
        errors.append("[g2] photon_statistics must be 'admixture' or 'poisson'")
    bud = values["budget"]
    for key in ("observed_rate", "target_coincidences"):
        if key in bud and not bud[key] > 0:
            errors.append(f"[budget] {key} must be positive")

    if errors:
        raise SpecError(errors)

    kwargs = {k: v for k, v in exp.items()}
    kwargs.setdefault("output_dir", os.environ.get(OUTPUT_DIR_ENV, "."))
    if "points" in sweep:
        kwargs["sweep_points"] = sweep["points"]
    if "axis" in sweep:
        kwargs["sweep_axis"] = sweep["axis"]
    if "fixed" in sweep:
        kwargs["sweep_fixed"] = sweep["fixed"]
    kwargs.update(bud)
    kwargs.update(g2)
    return ExperimentSpec(config=config, timings=timings, dephasing=dephasing, **kwargs)


# -- running ------------------------------------------------------------------


def _state_for(spec: ExperimentSpec):
    params = spec.dephasing or DephasingParams(sigma_b_at=0.0, sigma_b_bec=0.0)
    return run_protocol(spec.f0, params, spec.timings)


class _Writer:
    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.tag = f"{spec.name}_{spec.mode}_{spec.spec_hash()}_s{spec.seed}"
        self.dir = Path(spec.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, suffix: str) -> Path:
        p = self.dir / f"{self.tag}_{suffix}"
        self.files.append(p)
        return p

    def text(self, suffix: str, content: str):
        self.path(suffix).write_text(content, encoding="utf-8")

    def json(self, suffix: str, payload: dict):
        payload = {"spec_hash": self.spec.spec_hash(), "seed": self.spec.seed, **payload}
        self.text(suffix, json.dumps(payload, indent=2) + "\n")


def _run_witness(spec, out):
    table = simulate_run(_state_for(spec), spec.config, SETTINGS_WITNESS, spec.shots, spec.seed,
                         workers=spec.workers)
    out.text("counts.csv", table.to_csv())
    res = estimation.witness_fidelity(table, confidence=spec.confidence_method,
                                      resamples=spec.resamples, seed=spec.seed)
    out.json("witness.json", json.loads(res.to_json(coincidences=table.coincidences, shots=spec.shots)))
    return res


def _run_tomography(spec, out):
    table = simulate_run(_state_for(spec), spec.config, SETTINGS_9, spec.shots, spec.seed, workers=spec.workers)
    out.text("counts.csv", table.to_csv())
    res = estimation.mle_tomography(table, bootstrap=spec.bootstrap, seed=spec.seed, workers=spec.workers)
    out.json("tomography.json", res.to_dict())
    m = res.rho.matrix
    out.text("matrices.txt", estimation.render_matrix(m.real, "Re(rho)") + "\n"
             + estimation.render_matrix(m.imag, "Im(rho)"))
    return res


def _run_decay(spec, out):
    curve = simulate_decay_curve(spec.f0, spec.dephasing, spec.config, spec.time_points(), spec.shots,
                                 spec.seed, tau=spec.timings.tau, workers=spec.workers)
    axis = {"both": "max", "at": "at", "bec": "bec"}[spec.sweep_axis]
    points = estimation.decay_points(curve, axis=axis)
    lines = ["t,f_hat,f_err"] + [f"{t!r},{f!r},{e!r}" for t, f, e in points]
    out.text("points.csv", "\n".join(lines) + "\n")
    fit = estimation.fit_gaussian_decay(points)
    p = spec.dephasing
    model = {
        "both": combined_half_time(p),
        "at": math.sqrt(2 * math.log(2)) / p.omega_at if p.omega_at else math.inf,
        "bec": math.sqrt(2 * math.log(2)) / p.omega_bec if p.omega_bec else math.inf,
    }[spec.sweep_axis]
    payload = json.loads(fit.to_json())
    payload["model_half_time"] = model
    payload["sweep_axis"] = spec.sweep_axis
    out.json("decay_fit.json", payload)
    return fit


def _run_budget(spec, out):
    chain = spec.config.chain()
    rate = budget.expected_coincidence_rate(chain)
    observed = spec.observed_rate
    acq_rate = observed if observed is not None else rate
    t_acq = budget.acquisition_time(spec.target_coincidences, acq_rate, spec.config.shots_per_bec,
                                    spec.config.bec_cycle_time)
    eit = budget.eit_window()
    report = budget.budget_report(chain, observed)
    report.update({
        "acquisition_time_s": t_acq,
        "acquisition_target_coincidences": spec.target_coincidences,
        "eit_window_hz": eit / (2 * math.pi),
    })
    out.json("budget.json", report)
    table = budget.budget_table(chain, observed)
    table += f"acquisition time for {spec.target_coincidences:g} coincidences: {t_acq:.0f} s ({t_acq / 3600:.2f} h)\n"
    out.text("budget.txt", table)
    return report


def _run_g2(spec, out):
    h = hbt_counts(spec.config, spec.shots, spec.seed, photon_statistics=spec.photon_statistics,
                   mean_photon_number=spec.mean_photon_number, workers=spec.workers)
    out.json("g2.json", {
        "g2": h.g2, "std_err": h.std_err, "analytic_g2": analytic_g2(spec.config),
        "triggers": h.triggers, "singles_1": h.singles_1, "singles_2": h.singles_2,
        "coincidences": h.coincidences, "photon_statistics": spec.photon_statistics,
    })
    return h


RUNNERS = {
    "witness": _run_witness,
    "tomography": _run_tomography,
    "decay_curve": _run_decay,
    "budget": _run_budget,
    "g2": _run_g2,
}


def run_experiment(spec: ExperimentSpec) -> tuple[int, list]:
    """Run one experiment, returning (exit status, written paths)."""
    try:
        out = _Writer(spec)
        RUNNERS[spec.mode](spec, out)
    except (estimation.NonConvergenceError, estimation.DegenerateFitError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NONCONVERGENCE, []
    except ValueError as exc:
        # too few coincidences for the estimator; nothing meaningful to report
        log.error("estimation failed: %s", exc)
        return EXIT_NONCONVERGENCE, []
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO, []
    return EXIT_OK, out.files


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridlink", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        s = sub.add_parser(mode)
        s.add_argument("--config", type=Path, help="INI configuration file")
        s.add_argument("--seed", type=int)
        s.add_argument("--shots", type=int)
        s.add_argument("--out", dest="output_dir", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(asctime)s %(levelname)s %(message)s", level=logging.INFO, stream=sys.stderr)
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            log.error("cannot read config: %s", exc)
            return EXIT_IO
    overrides = {"mode": args.mode, "seed": args.seed, "shots": args.shots, "output_dir": args.output_dir}
    try:
        spec = validate_spec(text, overrides)
    except SpecError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    status, files = run_experiment(spec)
    if status == EXIT_OK:
        log.info("run %s (%s, seed %d) wrote %d files", spec.spec_hash(), spec.mode, spec.seed, len(files))
        for f in files:
            print(f)
    return status


if __name__ == "__main__":
    sys.exit(main())
