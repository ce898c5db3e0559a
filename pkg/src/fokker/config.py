"""Experiment configuration: INI sections [params], [boundary], [numerics], [output].

Every default lives in ``DEFAULTS`` below; a resolved config always carries
all of them. The only environment override is ``FOKKER_OUT`` for the output
directory.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass

from fokker.minkowski import SystemParams
from fokker.solver import BoundaryConditions

EXPERIMENTS = ("action-eval", "gradient-check", "extremize", "propagate", "equivalence", "sigma-scaling")
MODE_NAMES = {"uniform-hbar": "uniform", "mixed-hbar": "mixed"}
REQUIRED = object()


class ConfigError(ValueError):
    """Invalid or missing configuration value; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _vector(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    return _vector(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (default, parser, description)
DEFAULTS: dict[str, dict[str, tuple]] = {
    "params": {
        "m1": (REQUIRED, float, "rest mass of particle 1"),
        "m2": (REQUIRED, float, "rest mass of particle 2"),
        "e1": (REQUIRED, float, "charge of particle 1"),
        "e2": (REQUIRED, float, "charge of particle 2"),
        "c": (1.0, float, "speed of light"),
        "hbar": (1.0, float, "Planck constant"),
        "D": (1.0, float, "nonlocality length; sigma = D/c, hbar_tilde = hbar*sigma"),
        "eta": (0.05, float, "width of the smeared light-cone delta (interval-squared units)"),
        "r_min": (1e-6, float, "near-collision cutoff"),
        "dimension": (2, int, "spacetime dimension (2 or 4)"),
    },
    "boundary": {
        "start1": (REQUIRED, _vector, "initial vertex of particle 1 (ct, x...)"),
        "end1": (REQUIRED, _vector, "final vertex of particle 1"),
        "start2": (REQUIRED, _vector, "initial vertex of particle 2"),
        "end2": (REQUIRED, _vector, "final vertex of particle 2"),
        "S1": (None, float, "total affine parameter of particle 1 (default: straight proper length)"),
        "S2": (None, float, "total affine parameter of particle 2 (default: straight proper length)"),
        "N1": (16, int, "segments of particle 1"),
        "N2": (16, int, "segments of particle 2"),
    },
    "numerics": {
        "seed": (None, int, "RNG seed; required by stochastic experiments"),
        "mode": ("both", str, "constant mode: uniform-hbar, mixed-hbar or both"),
        "order": ("free", str, "propagator order: free or first"),
        "action_mode": ("smeared", str, "interaction evaluation: smeared or lightcone"),
        "free_form": ("quadratic", str, "free action: quadratic (einbein) or sqrt"),
        "tol": (1e-10, float, "solver gradient tolerance"),
        "max_iter": (200, int, "solver iteration cap"),
        "continuation_steps": (10, int, "coupling ramp steps when the direct solve fails"),
        "coulomb_check": (False, _bool, "compare extremals with the Coulomb oracle"),
        "coulomb_steps": (4000, int, "RK4 steps of the Coulomb oracle"),
        "fd_step": (1e-4, float, "five-point central finite-difference step"),
        "gradient_tol": (1e-6, float, "relative tolerance of the gradient check"),
        "perturbation": (0.02, float, "amplitude of random vertex perturbations"),
        "trials": (1, int, "random configurations in gradient-check"),
        "method": ("quadrature", str, "propagate method: quadrature, monte_carlo or both"),
        "samples": (65536, int, "Monte Carlo samples"),
        "damping": (0.006, float, "free-chain damping (smallest ladder value)"),
        "interaction_damping": (0.4, float, "first-order grid damping (smallest ladder value)"),
        "refinement_ladder": ([1.6, 0.8, 0.4], _floats, "interaction damping ladder of the equivalence run"),
        "equivalence_tol_free": (1e-6, float, "free-case equivalence tolerance"),
        "equivalence_tol_first": (1e-3, float, "first-order equivalence tolerance"),
        "gh_nodes": (96, int, "Gauss-Hermite nodes of the closed-form first-order mean"),
        "sigma_min": (0.01, float, "smallest sigma of the scaling ladder"),
        "sigma_max": (0.316, float, "largest sigma of the scaling ladder"),
        "sigma_points": (7, int, "sigma ladder points (log spaced)"),
        "slope_tol": (0.05, float, "allowed deviation of the fitted exponent from -1"),
    },
    "output": {
        "dir": ("fokker-out", str, "output directory (FOKKER_OUT overrides)"),
        "formats": ("json,csv", str, "comma list of json and csv"),
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    params: SystemParams
    boundary: BoundaryConditions
    numerics: dict
    output: dict
    resolved: dict

    @property
    def modes(self) -> list[str]:
        m = self.numerics["mode"]
        return ["uniform", "mixed"] if m == "both" else [MODE_NAMES[m]]


def _parse_section(cp, section):
    raw = dict(cp[section]) if cp.has_section(section) else {}
    table = DEFAULTS[section]
    # configparser lower-cases keys; map back to the canonical spelling
    canon = {k.lower(): k for k in table}
    unknown = [k for k in raw if k not in canon]
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", "unknown key")
    out = {}
    for key, (default, parse, _) in table.items():
        text = raw.get(key.lower())
        if text is None:
            if default is REQUIRED:
                raise ConfigError(f"{section}.{key}", "missing required key")
            out[key] = list(default) if isinstance(default, list) else default
            continue
        try:
            out[key] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}", str(exc)) from None
    return out


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def load_config(path: str | None, experiment: str, seed: int | None = None, mode: str | None = None,
                out: str | None = None, text: str | None = None) -> ExperimentConfig:
    """Parse and validate; command-line values override file values."""
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str.lower
    try:
        if text is not None:
            cp.read_string(text)
        else:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError("config", f"malformed config: {exc}") from None
    unknown = [s for s in cp.sections() if s not in DEFAULTS]
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    sec = {s: _parse_section(cp, s) for s in DEFAULTS}
    num, bnd, outp = sec["numerics"], sec["boundary"], sec["output"]
    if seed is not None:
        num["seed"] = seed
    if mode is not None:
        num["mode"] = mode
    if out is not None:
        outp["dir"] = out
    elif os.environ.get("FOKKER_OUT"):
        outp["dir"] = os.environ["FOKKER_OUT"]

    _validate_numerics(num, experiment)
    try:
        params = SystemParams(**sec["params"])
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from None
    d = params.dimension
    for key in ("start1", "end1", "start2", "end2"):
        if len(bnd[key]) != d:
            raise ConfigError(f"boundary.{key}", f"expected {d} components, got {len(bnd[key])}")
    for key in ("N1", "N2"):
        if bnd[key] < 1:
            raise ConfigError(f"boundary.{key}", "must be at least 1")
    for k in ("S1", "S2"):
        if bnd[k] is None:
            start, end = bnd["start" + k[-1]], bnd["end" + k[-1]]
            tau2 = (end[0] - start[0]) ** 2 - sum((e - s) ** 2 for e, s in zip(end[1:], start[1:]))
            if tau2 <= 0:
                raise ConfigError(f"boundary.{k}", "endpoints are not timelike separated")
            bnd[k] = math.sqrt(tau2)
    try:
        boundary = BoundaryConditions(**bnd)
    except ValueError as exc:
        raise ConfigError("boundary", str(exc)) from None
    formats = [f.strip() for f in outp["formats"].split(",") if f.strip()]
    if not formats or any(f not in ("json", "csv") for f in formats):
        raise ConfigError("output.formats", "must list json and/or csv")
    outp["formats"] = ",".join(formats)
    resolved = {
        "experiment": experiment,
        "params": {k: _jsonable(v) for k, v in sec["params"].items()},
        "boundary": {k: _jsonable(v) for k, v in bnd.items()},
        "numerics": {k: _jsonable(v) for k, v in num.items()},
        "output": {"formats": outp["formats"]},
    }
    return ExperimentConfig(experiment, params, boundary, num, outp, resolved)


def _validate_numerics(num: dict, experiment: str) -> None:
    for key in ("tol", "fd_step", "gradient_tol", "perturbation", "damping", "interaction_damping",
                "equivalence_tol_free", "equivalence_tol_first", "sigma_min", "sigma_max", "slope_tol"):
        if not (math.isfinite(num[key]) and num[key] > 0):
            raise ConfigError(f"numerics.{key}", "must be positive")
    for key in ("max_iter", "trials", "samples", "gh_nodes", "sigma_points", "coulomb_steps"):
        if num[key] < 1:
            raise ConfigError(f"numerics.{key}", "must be at least 1")
    if num["continuation_steps"] < 0:
        raise ConfigError("numerics.continuation_steps", "must be non-negative")
    if num["mode"] not in ("uniform-hbar", "mixed-hbar", "both"):
        raise ConfigError("numerics.mode", "expected uniform-hbar, mixed-hbar or both")
    choices = {"order": ("free", "first"), "action_mode": ("smeared", "lightcone"),
               "free_form": ("quadratic", "sqrt"), "method": ("quadrature", "monte_carlo", "both")}
    for key, allowed in choices.items():
        if num[key] not in allowed:
            raise ConfigError(f"numerics.{key}", f"expected one of {allowed}")
    if not num["refinement_ladder"] or any(not k > 0 for k in num["refinement_ladder"]):
        raise ConfigError("numerics.refinement_ladder", "needs positive damping values")
    stochastic = experiment in ("gradient-check",) or (
        experiment == "propagate" and num["method"] in ("monte_carlo", "both"))
    if stochastic and num["seed"] is None:
        raise ConfigError("numerics.seed", f"{experiment} is stochastic and needs a seed")


def describe_defaults() -> str:
    """Markdown table of every default (used by the README and --help)."""
    rows = ["| key | default | meaning |", "|---|---|---|"]
    for section, table in DEFAULTS.items():
        for key, (default, _, doc) in table.items():
            shown = "required" if default is REQUIRED else ("derived" if default is None else default)
            rows.append(f"| {section}.{key} | {shown} | {doc} |")
    return "\n".join(rows)
