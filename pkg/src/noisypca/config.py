"""Experiment config files: flat key=value sections, strictly validated.

Format::

    [model]
    n = 100
    r = 5
    signal_distribution = bounded_uniform   # or gaussian
    signal_lambdas = 12                     # scalar or comma list, descending
    noise_rv = r                            # r | n | <int> | none
    noise_distribution = bounded_uniform    # required unless noise_rv = none
    noise_scale_base = 1.1                  # amplitude q_i = base + slope*i/r_v
    noise_scale_slope = -0.1
    sddn = on                               # on | off
    sddn_s = 5
    sddn_b0 = 0.05
    sddn_rho = 1
    sddn_q = 0.001

    [experiment]
    alpha_grid = logspace:29:7000:12        # or comma list of ints
    trials = 100
    seed = 0                                # optional
    c = 1.0                                 # optional
    epsilon_rule = floor                    # optional: floor | fixed:<value>
    r_grid = 5,10,20                        # optional
    n_grid = 100,200                        # optional

    [refine]                                # optional section
    q0 = 0.06
    stages = 4
    alpha_constant = 16

Unknown sections or keys are errors; so are missing required keys.
"""

import importlib.resources
import os

import numpy as np

from .errors import ConfigError
from .experiments import ExperimentConfig

_MODEL_KEYS = {
    "n",
    "r",
    "signal_distribution",
    "signal_lambdas",
    "noise_rv",
    "noise_distribution",
    "noise_scale_base",
    "noise_scale_slope",
    "sddn",
    "sddn_s",
    "sddn_b0",
    "sddn_rho",
    "sddn_q",
}
_EXPERIMENT_KEYS = {"alpha_grid", "trials", "seed", "c", "epsilon_rule", "r_grid", "n_grid"}
_REFINE_KEYS = {"q0", "stages", "alpha_constant"}
_SECTIONS = {"model": _MODEL_KEYS, "experiment": _EXPERIMENT_KEYS, "refine": _REFINE_KEYS}

PRESETS = (
    "fig1a",
    "fig1b",
    "fig2a",
    "fig2b",
    "fig2c",
    "fig2d",
    "adversarial",
    "refine",
    "missing",
)


def _parse_sections(text, source):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise ConfigError(f"{source}:{lineno}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{source}:{lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside any section")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SECTIONS[current]:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        sections[current][key] = value
    if not sections:
        raise ConfigError(f"{source}: empty config")
    return sections


def _require(section, name, key):
    if key not in section:
        raise ConfigError(f"missing key {key!r} in [{name}]")
    return section[key]


def _as_int(value, key):
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected integer, got {value!r}") from exc


def _as_float(value, key):
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected number, got {value!r}") from exc


def _as_flag(value, key):
    if value in ("on", "off"):
        return value == "on"
    raise ConfigError(f"key {key!r}: expected on/off, got {value!r}")


def _float_list(value, key):
    return tuple(_as_float(part.strip(), key) for part in value.split(","))


def _int_list(value, key):
    return tuple(_as_int(part.strip(), key) for part in value.split(","))


def _alpha_grid(value):
    if value.startswith("logspace:"):
        parts = value.split(":")
        if len(parts) != 4:
            raise ConfigError("alpha_grid logspace needs logspace:lo:hi:count")
        lo = _as_float(parts[1], "alpha_grid")
        hi = _as_float(parts[2], "alpha_grid")
        count = _as_int(parts[3], "alpha_grid")
        if not 0 < lo <= hi or count < 1:
            raise ConfigError("alpha_grid logspace bounds must satisfy 0 < lo <= hi")
        grid = np.unique(np.rint(np.geomspace(lo, hi, count)).astype(int))
        return tuple(int(a) for a in grid)
    return _int_list(value, "alpha_grid")


def parse_config_text(text, source="<config>"):
    """Parse and validate config text into an ExperimentConfig."""
    sections = _parse_sections(text, source)
    model = sections.get("model")
    if model is None:
        raise ConfigError(f"{source}: missing [model] section")
    experiment = sections.get("experiment")
    if experiment is None:
        raise ConfigError(f"{source}: missing [experiment] section")
    refine = sections.get("refine", {})

    rv_raw = _require(model, "model", "noise_rv")
    if rv_raw == "none":
        noise_rv = None
    elif rv_raw in ("r", "n"):
        noise_rv = rv_raw
    else:
        noise_rv = _as_int(rv_raw, "noise_rv")
    kwargs = {
        "n": _as_int(_require(model, "model", "n"), "n"),
        "r": _as_int(_require(model, "model", "r"), "r"),
        "signal_distribution": _require(model, "model", "signal_distribution"),
        "signal_lambdas": _float_list(_require(model, "model", "signal_lambdas"), "signal_lambdas"),
        "noise_rv": noise_rv,
    }
    if noise_rv is not None:
        kwargs["noise_distribution"] = _require(model, "model", "noise_distribution")
        kwargs["noise_scale_base"] = _as_float(_require(model, "model", "noise_scale_base"), "noise_scale_base")
        kwargs["noise_scale_slope"] = _as_float(_require(model, "model", "noise_scale_slope"), "noise_scale_slope")
    sddn_on = _as_flag(_require(model, "model", "sddn"), "sddn")
    kwargs["sddn_enabled"] = sddn_on
    if sddn_on:
        kwargs["sddn_s"] = _as_int(_require(model, "model", "sddn_s"), "sddn_s")
        kwargs["sddn_b0"] = _as_float(_require(model, "model", "sddn_b0"), "sddn_b0")
        kwargs["sddn_rho"] = _as_int(_require(model, "model", "sddn_rho"), "sddn_rho")
        kwargs["sddn_q"] = _as_float(_require(model, "model", "sddn_q"), "sddn_q")

    kwargs["alpha_grid"] = _alpha_grid(_require(experiment, "experiment", "alpha_grid"))
    kwargs["n_trials"] = _as_int(_require(experiment, "experiment", "trials"), "trials")
    if "seed" in experiment:
        kwargs["master_seed"] = _as_int(experiment["seed"], "seed")
    else:
        kwargs["master_seed"] = None  # resolved by seed precedence later
    if "c" in experiment:
        kwargs["c"] = _as_float(experiment["c"], "c")
    if "r_grid" in experiment:
        kwargs["r_grid"] = _int_list(experiment["r_grid"], "r_grid")
    if "n_grid" in experiment:
        kwargs["n_grid"] = _int_list(experiment["n_grid"], "n_grid")
    if "epsilon_rule" in experiment:
        rule = experiment["epsilon_rule"]
        if rule == "floor":
            kwargs["epsilon_rule"] = "floor_factor_1_5"
        elif rule.startswith("fixed:"):
            kwargs["epsilon_rule"] = "fixed"
            kwargs["epsilon_value"] = _as_float(rule.split(":", 1)[1], "epsilon_rule")
        else:
            raise ConfigError(f"epsilon_rule must be 'floor' or 'fixed:<value>', got {rule!r}")

    if refine:
        kwargs["refine_q0"] = _as_float(_require(refine, "refine", "q0"), "q0")
        kwargs["refine_stages"] = _as_int(_require(refine, "refine", "stages"), "stages")
        kwargs["refine_alpha_constant"] = _as_float(
            _require(refine, "refine", "alpha_constant"), "alpha_constant"
        )

    config_seed = kwargs.pop("master_seed")
    cfg = ExperimentConfig(master_seed=config_seed if config_seed is not None else 0, **kwargs)
    return cfg, config_seed


def resolve_config_path(name_or_path):
    """Interpret the --config argument: a file path or a shipped preset name."""
    if os.path.exists(name_or_path):
        with open(name_or_path, "r", encoding="utf-8") as fh:
            return fh.read(), name_or_path
    if name_or_path in PRESETS:
        resource = importlib.resources.files("noisypca.presets").joinpath(f"{name_or_path}.cfg")
        return resource.read_text(encoding="utf-8"), f"preset:{name_or_path}"
    raise ConfigError(f"config {name_or_path!r}: no such file or preset (presets: {', '.join(PRESETS)})")


def parse_config(name_or_path):
    """Load a config file or preset. Returns (ExperimentConfig, config_seed)."""
    text, source = resolve_config_path(name_or_path)
    return parse_config_text(text, source)


def describe(cfg):
    """Resolved config as deterministic key=value lines (for run logs)."""
    pairs = []
    for field_name in cfg.__dataclass_fields__:
        value = getattr(cfg, field_name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        pairs.append(f"{field_name}={value}")
    return "\n".join(pairs)
