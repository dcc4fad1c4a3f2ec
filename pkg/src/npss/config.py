"""Line-oriented experiment configuration.

Format: ``key = value`` lines grouped under ``[section]`` headers, ``#``
comments, blank lines ignored.  The schema below is the single source of
truth: unknown sections or keys are errors, every error names the
offending line, and defaults are rendered into the CLI help text from the
same table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "schema_help"]


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_parse_bool.__name__ = "bool"  # friendlier parse-error messages


# (type, default, help); default None means "required when the section is used"
SCHEMA = {
    "experiment": {
        "method": (str, None, "npss | hisd | gd | mep"),
        "output_dir": (str, "runs/out", "artifact directory"),
        "snapshot_stride": (int, 0, "write a field snapshot every this many iterations (0 = off)"),
        "seed": (int, 0, "RNG seed for eigensolver initialization"),
    },
    "model": {
        "type": (str, None, "toy | lb | lp"),
        "tau": (float, None, "LB reduced temperature"),
        "gamma": (float, None, "LB cubic coefficient"),
        "epsilon": (float, None, "LP reduced-temperature-like coefficient"),
        "alpha": (float, None, "LP cubic coefficient"),
    },
    "domain": {
        "L": (float, None, "cell scale: the box is [0, 2*pi*L)^n"),
        "N": (int, None, "grid points per direction (even, >= 8)"),
        "dimensions": (int, 2, "number of spatial directions"),
    },
    "initial": {
        "pattern": (str, "dis", "dis | lam | hex | bcc | lq | ddqc or a snapshot file path"),
        "amplitude": (float, 0.3, "seed ansatz amplitude"),
        "relax": (_parse_bool, True, "relax the ansatz to a minimum before searching"),
        "relax_tol": (float, 1e-7, "gradient tolerance for the preparatory descent"),
        "relax_beta": (float, 0.5, "semi-implicit step for the preparatory descent"),
        "perturb_scale": (float, 0.0, "optional random mean-zero perturbation added to the ansatz"),
    },
    "npss": {
        "beta": (float, 0.01, "state-dynamics step scale"),
        "zeta": (float, 0.01, "direction-dynamics step scale"),
        "xi": (float, 0.01, "initial perturbation magnitude"),
        "eps_lambda": (float, 0.05, "segment-refresh threshold on <v,Hv>"),
        "eps_T": (float, 1e-7, "gradient-norm convergence tolerance"),
        "eps0": (float, 1e-10, "zero-eigenvalue census tolerance"),
        "max_iter_stage1": (int, 100000, "stage-I iteration budget"),
        "max_iter_stage2": (int, 200000, "stage-II iteration budget"),
        "v_flow_steps": (int, 5, "direction-flow steps per state step"),
        "nullspace_probe": (int, 0, "eigenpairs probed for nullspace detection (0 = auto)"),
        "eig_tol": (float, 1e-8, "eigensolver residual tolerance"),
        "record_stride": (int, 1, "trajectory rows every this many iterations"),
    },
    "hisd": {
        "k": (int, 0, "ascent dimension (0 = detected nullspace dimension + 1)"),
        "beta": (float, 0.01, "state-dynamics step scale"),
        "zeta": (float, 0.01, "direction-dynamics step scale"),
        "xi": (float, 0.01, "perturbation magnitude for escape and downward legs"),
        "eps_T": (float, 1e-7, "gradient-norm convergence tolerance"),
        "eps0": (float, 1e-10, "zero-eigenvalue census tolerance"),
        "max_iterations": (int, 200000, "iteration budget per leg"),
        "v_flow_steps": (int, 5, "direction-flow steps per state step"),
        "eig_tol": (float, 1e-8, "eigensolver residual tolerance"),
        "record_stride": (int, 1, "trajectory rows every this many iterations"),
    },
    "mep": {
        "xi": (float, 0.01, "push-off magnitude along the unstable direction"),
        "tol": (float, 1e-7, "descent gradient tolerance"),
        "beta": (float, 0.01, "descent step scale"),
        "stride_fraction": (float, 0.01, "path sampling stride as a fraction of endpoint distance"),
        "saddle": (str, "", "snapshot file of the saddle (empty = run NPSS first)"),
    },
    "gd": {
        "tol": (float, 1e-7, "gradient tolerance"),
        "beta": (float, 0.5, "semi-implicit step"),
        "max_iterations": (int, 500000, "iteration budget"),
    },
}

_METHODS = ("npss", "hisd", "gd", "mep")
_MODELS = ("toy", "lb", "lp")
_PATTERNS = ("dis", "lam", "hex", "bcc", "lq", "ddqc")


@dataclass
class ExperimentConfig:
    """Fully resolved configuration: one value for every schema key."""

    values: dict = field(default_factory=dict)
    source: str = ""

    def get(self, section: str, key: str):
        return self.values[section][key]

    @property
    def method(self) -> str:
        return self.get("experiment", "method")

    @property
    def model_type(self) -> str:
        return self.get("model", "type")

    def as_dict(self) -> dict:
        return {s: dict(kv) for s, kv in self.values.items()}


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate; every error names the offending line."""
    values = {section: {} for section in SCHEMA}
    seen = {section: set() for section in SCHEMA}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in SCHEMA:
                raise ConfigError(f"{source}:{lineno}: unknown section [{name}]")
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if key not in SCHEMA[current]:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in section [{current}]")
        if key in seen[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} in section [{current}]")
        caster = SCHEMA[current][key][0]
        try:
            values[current][key] = caster(value)
        except ValueError:
            raise ConfigError(
                f"{source}:{lineno}: invalid value {value!r} for {current}.{key}"
                f" (expected {getattr(caster, '__name__', 'value')})"
            ) from None
        seen[current].add(key)

    for section, keys in SCHEMA.items():
        for key, (_, default, _help) in keys.items():
            values[section].setdefault(key, default)

    cfg = ExperimentConfig(values=values, source=source)
    _validate(cfg)
    return cfg


def _require(cfg: ExperimentConfig, section: str, key: str):
    if cfg.get(section, key) is None:
        raise ConfigError(f"{cfg.source}: missing required key {section}.{key}")


def _validate(cfg: ExperimentConfig):
    _require(cfg, "experiment", "method")
    _require(cfg, "model", "type")
    method = cfg.method
    if method not in _METHODS:
        raise ConfigError(f"{cfg.source}: unknown method {method!r} (choose from {_METHODS})")
    model = cfg.model_type
    if model not in _MODELS:
        raise ConfigError(f"{cfg.source}: unknown model {model!r} (choose from {_MODELS})")
    if model == "lb":
        _require(cfg, "model", "tau")
        _require(cfg, "model", "gamma")
    elif model == "lp":
        _require(cfg, "model", "epsilon")
        _require(cfg, "model", "alpha")
    if model != "toy":
        _require(cfg, "domain", "L")
        _require(cfg, "domain", "N")
        L = cfg.get("domain", "L")
        N = cfg.get("domain", "N")
        n = cfg.get("domain", "dimensions")
        if L <= 0:
            raise ConfigError(f"{cfg.source}: domain.L must be positive")
        if N < 8 or N % 2 != 0:
            raise ConfigError(f"{cfg.source}: domain.N must be even and >= 8")
        if n < 1 or n > 3:
            raise ConfigError(f"{cfg.source}: domain.dimensions must be 1, 2, or 3")
        pattern = cfg.get("initial", "pattern")
        if pattern in _PATTERNS:
            pass
        elif "/" in pattern or pattern.endswith(".fld"):
            pass
        else:
            raise ConfigError(
                f"{cfg.source}: unknown initial.pattern {pattern!r}"
                f" (named patterns: {_PATTERNS}; otherwise a snapshot path)"
            )
    stride = cfg.get("experiment", "snapshot_stride")
    if stride < 0:
        raise ConfigError(f"{cfg.source}: experiment.snapshot_stride must be >= 0")


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def schema_help() -> str:
    """Render the schema (keys, defaults, meanings) for --help."""
    lines = ["configuration keys (defaults in parentheses):"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, (_, default, text) in keys.items():
            shown = "required" if default is None else repr(default)
            lines.append(f"    {key} ({shown}): {text}")
    return "\n".join(lines)
