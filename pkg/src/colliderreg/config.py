"""Experiment configuration: a documented INI-style key/value format.

The schema is small enough to embed here; ``default_config()`` returns the
built-in defaults and ``DEFAULT_CONFIG_TEXT`` is the same thing as text.
Parsing is strict: unknown sections or keys are errors naming the field, and
parse -> serialize -> parse round-trips to an identical config.

Sections and keys::

    [experiment]
    name    = free-form run name
    seeds   = "0:100" (half-open range) or comma list "0,1,2"
    jobs    = worker processes; 0 means min(#seeds, cpu count)

    [generator]
    kind        = simple | general | indicator
    d1, d2, d3  = block dimensionalities (d3 used by kind=general)
    sigma_noise = children-block observation noise scale
    train, semi, validation, test, oracle_test = split sizes

    [models]
    enabled            = comma list out of rf, p-rf, krr, p-krr, hp-krr,
                         general-two-stage, general-pkrr, general-hpkrr
    theta_multipliers  = lengthscale grid as multiples of the median heuristic
    lambda_grid        = ridge weights
    gamma_grid         = embedding regularizers
    rf_n_estimators, rf_max_depth, rf_min_samples_split, rf_min_samples_leaf
                       = forest grids (max_depth accepts "none")

    [oracle]
    m       = inner Monte-Carlo draws per outer point
    n_test  = outer points for the gap columns

    [output]
    directory = output root (the COLLIDERREG_OUT env var overrides the
                built-in default)
    formats   = comma list out of csv, json
"""

from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import dataclass, field, fields

from .datagen import SplitSizes

VALID_MODELS = (
    "rf",
    "p-rf",
    "krr",
    "p-krr",
    "hp-krr",
    "general-two-stage",
    "general-pkrr",
    "general-hpkrr",
)
VALID_KINDS = ("simple", "general", "indicator")
OUTPUT_ROOT_ENV = "COLLIDERREG_OUT"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _log_grid(lo: float, hi: float, count: int) -> tuple[float, ...]:
    step = (math.log10(hi) - math.log10(lo)) / (count - 1)
    return tuple(10.0 ** (math.log10(lo) + i * step) for i in range(count))


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "simple"
    d1: int = 3
    d2: int = 3
    d3: int = 2
    sigma_noise: float = 0.1
    train: int = 50
    semi: int = 100
    validation: int = 500
    test: int = 500
    oracle_test: int = 500

    def sizes(self) -> SplitSizes:
        return SplitSizes(
            train=self.train,
            semi=self.semi,
            validation=self.validation,
            test=self.test,
            oracle_test=self.oracle_test,
        )


@dataclass(frozen=True)
class ModelConfig:
    enabled: tuple[str, ...] = ("rf", "p-rf", "krr", "p-krr", "hp-krr")
    theta_multipliers: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
    lambda_grid: tuple[float, ...] = _log_grid(1e-4, 1.0, 7)
    # The embedding regularizer enters as (L + gamma I) with no 1/n scaling,
    # so useful gamma grows with the anchor count; the top decades double as
    # a near-no-op endpoint where projected models degrade to the baseline.
    gamma_grid: tuple[float, ...] = _log_grid(1e-4, 1e6, 11)
    rf_n_estimators: tuple[int, ...] = (50,)
    rf_max_depth: tuple[int | None, ...] = (3, 6)
    rf_min_samples_split: tuple[int, ...] = (2,)
    rf_min_samples_leaf: tuple[int, ...] = (1, 3)


@dataclass(frozen=True)
class OracleConfig:
    m: int = 200
    n_test: int = 500


@dataclass(frozen=True)
class OutputConfig:
    directory: str = ""
    formats: tuple[str, ...] = ("csv", "json")

    def root(self) -> str:
        if self.directory:
            return self.directory
        return os.environ.get(OUTPUT_ROOT_ENV, "results")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "default"
    seeds: tuple[int, ...] = tuple(range(100))
    jobs: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    models: ModelConfig = field(default_factory=ModelConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def effective_jobs(self) -> int:
        if self.jobs > 0:
            return self.jobs
        return max(1, min(len(self.seeds), os.cpu_count() or 1))

    def validate(self) -> "ExperimentConfig":
        if not self.seeds:
            raise ConfigError("experiment.seeds must be nonempty")
        gen = self.generator
        if gen.kind not in VALID_KINDS:
            raise ConfigError(f"generator.kind must be one of {VALID_KINDS}, got {gen.kind!r}")
        if gen.d1 < 1 or gen.d2 < 1 or (gen.kind == "general" and gen.d3 < 1):
            raise ConfigError("generator dimensions must be positive")
        if gen.sigma_noise < 0:
            raise ConfigError("generator.sigma_noise must be nonnegative")
        for name in ("train", "validation", "test", "oracle_test"):
            if getattr(gen, name) < 1:
                raise ConfigError(f"generator.{name} must be positive")
        if gen.semi < 0:
            raise ConfigError("generator.semi must be nonnegative")
        for model in self.models.enabled:
            if model not in VALID_MODELS:
                raise ConfigError(f"models.enabled contains unknown model {model!r}")
        for grid_name in ("theta_multipliers", "lambda_grid", "gamma_grid"):
            values = getattr(self.models, grid_name)
            if not values or any(v <= 0 for v in values):
                raise ConfigError(f"models.{grid_name} must be a nonempty list of positive values")
        if self.oracle.m < 1 or self.oracle.n_test < 1:
            raise ConfigError("oracle.m and oracle.n_test must be positive")
        for fmt in self.output.formats:
            if fmt not in ("csv", "json"):
                raise ConfigError(f"output.formats contains unknown format {fmt!r}")
        return self


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


# -- parsing -----------------------------------------------------------------


def _parse_seeds(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ":" in text:
        lo, _, hi = text.partition(":")
        try:
            return tuple(range(int(lo), int(hi)))
        except ValueError as exc:
            raise ConfigError(f"experiment.seeds: bad range {text!r}") from exc
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"experiment.seeds: bad list {text!r}") from exc


def _parse_list(text: str, convert, fieldname: str) -> tuple:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(convert(tok))
        except ValueError as exc:
            raise ConfigError(f"{fieldname}: bad value {tok!r}") from exc
    return tuple(out)


def _maybe_none_int(tok: str):
    if tok.lower() == "none":
        return None
    return int(tok)


def _scalar(convert, fieldname: str):
    def parse(tok: str):
        try:
            return convert(tok.strip())
        except ValueError as exc:
            raise ConfigError(f"{fieldname}: bad value {tok!r}") from exc

    return parse


_SCHEMA = {
    "experiment": {"name", "seeds", "jobs"},
    "generator": {"kind", "d1", "d2", "d3", "sigma_noise", "train", "semi", "validation", "test", "oracle_test"},
    "models": {
        "enabled",
        "theta_multipliers",
        "lambda_grid",
        "gamma_grid",
        "rf_n_estimators",
        "rf_max_depth",
        "rf_min_samples_split",
        "rf_min_samples_leaf",
    },
    "oracle": {"m", "n_test"},
    "output": {"directory", "formats"},
}


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable configuration: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")

    def get(section: str, key: str, default):
        if parser.has_option(section, key):
            return parser.get(section, key)
        return default

    base = default_config()

    name = str(get("experiment", "name", base.name)).strip()
    seeds = _parse_seeds(get("experiment", "seeds", "")) if parser.has_option("experiment", "seeds") else base.seeds
    jobs = _scalar(int, "experiment.jobs")(get("experiment", "jobs", str(base.jobs)))

    g = base.generator
    generator = GeneratorConfig(
        kind=str(get("generator", "kind", g.kind)).strip(),
        d1=_scalar(int, "generator.d1")(get("generator", "d1", str(g.d1))),
        d2=_scalar(int, "generator.d2")(get("generator", "d2", str(g.d2))),
        d3=_scalar(int, "generator.d3")(get("generator", "d3", str(g.d3))),
        sigma_noise=_scalar(float, "generator.sigma_noise")(get("generator", "sigma_noise", str(g.sigma_noise))),
        train=_scalar(int, "generator.train")(get("generator", "train", str(g.train))),
        semi=_scalar(int, "generator.semi")(get("generator", "semi", str(g.semi))),
        validation=_scalar(int, "generator.validation")(get("generator", "validation", str(g.validation))),
        test=_scalar(int, "generator.test")(get("generator", "test", str(g.test))),
        oracle_test=_scalar(int, "generator.oracle_test")(get("generator", "oracle_test", str(g.oracle_test))),
    )

    m = base.models
    models = ModelConfig(
        enabled=(
            _parse_list(get("models", "enabled", ""), str, "models.enabled")
            if parser.has_option("models", "enabled")
            else m.enabled
        ),
        theta_multipliers=(
            _parse_list(get("models", "theta_multipliers", ""), float, "models.theta_multipliers")
            if parser.has_option("models", "theta_multipliers")
            else m.theta_multipliers
        ),
        lambda_grid=(
            _parse_list(get("models", "lambda_grid", ""), float, "models.lambda_grid")
            if parser.has_option("models", "lambda_grid")
            else m.lambda_grid
        ),
        gamma_grid=(
            _parse_list(get("models", "gamma_grid", ""), float, "models.gamma_grid")
            if parser.has_option("models", "gamma_grid")
            else m.gamma_grid
        ),
        rf_n_estimators=(
            _parse_list(get("models", "rf_n_estimators", ""), int, "models.rf_n_estimators")
            if parser.has_option("models", "rf_n_estimators")
            else m.rf_n_estimators
        ),
        rf_max_depth=(
            _parse_list(get("models", "rf_max_depth", ""), _maybe_none_int, "models.rf_max_depth")
            if parser.has_option("models", "rf_max_depth")
            else m.rf_max_depth
        ),
        rf_min_samples_split=(
            _parse_list(get("models", "rf_min_samples_split", ""), int, "models.rf_min_samples_split")
            if parser.has_option("models", "rf_min_samples_split")
            else m.rf_min_samples_split
        ),
        rf_min_samples_leaf=(
            _parse_list(get("models", "rf_min_samples_leaf", ""), int, "models.rf_min_samples_leaf")
            if parser.has_option("models", "rf_min_samples_leaf")
            else m.rf_min_samples_leaf
        ),
    )

    oracle = OracleConfig(
        m=_scalar(int, "oracle.m")(get("oracle", "m", str(base.oracle.m))),
        n_test=_scalar(int, "oracle.n_test")(get("oracle", "n_test", str(base.oracle.n_test))),
    )
    output = OutputConfig(
        directory=str(get("output", "directory", base.output.directory)).strip(),
        formats=(
            _parse_list(get("output", "formats", ""), str, "output.formats")
            if parser.has_option("output", "formats")
            else base.output.formats
        ),
    )
    config = ExperimentConfig(
        name=name, seeds=seeds, jobs=jobs, generator=generator, models=models, oracle=oracle, output=output
    )
    return config.validate()


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- serialization ------------------------------------------------------------


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_list(values) -> str:
    return ", ".join(_fmt_value(v) for v in values)


def _fmt_seeds(seeds: tuple[int, ...]) -> str:
    if len(seeds) > 1 and seeds == tuple(range(seeds[0], seeds[-1] + 1)):
        return f"{seeds[0]}:{seeds[-1] + 1}"
    return ", ".join(str(s) for s in seeds)


def serialize_config(config: ExperimentConfig) -> str:
    out = io.StringIO()
    out.write("[experiment]\n")
    out.write(f"name = {config.name}\n")
    out.write(f"seeds = {_fmt_seeds(config.seeds)}\n")
    out.write(f"jobs = {config.jobs}\n\n")
    g = config.generator
    out.write("[generator]\n")
    for key in ("kind",):
        out.write(f"{key} = {getattr(g, key)}\n")
    for key in ("d1", "d2", "d3", "train", "semi", "validation", "test", "oracle_test"):
        out.write(f"{key} = {getattr(g, key)}\n")
    out.write(f"sigma_noise = {_fmt_value(g.sigma_noise)}\n\n")
    m = config.models
    out.write("[models]\n")
    out.write(f"enabled = {_fmt_list(m.enabled)}\n")
    out.write(f"theta_multipliers = {_fmt_list(m.theta_multipliers)}\n")
    out.write(f"lambda_grid = {_fmt_list(m.lambda_grid)}\n")
    out.write(f"gamma_grid = {_fmt_list(m.gamma_grid)}\n")
    out.write(f"rf_n_estimators = {_fmt_list(m.rf_n_estimators)}\n")
    out.write(f"rf_max_depth = {_fmt_list(m.rf_max_depth)}\n")
    out.write(f"rf_min_samples_split = {_fmt_list(m.rf_min_samples_split)}\n")
    out.write(f"rf_min_samples_leaf = {_fmt_list(m.rf_min_samples_leaf)}\n\n")
    out.write("[oracle]\n")
    out.write(f"m = {config.oracle.m}\n")
    out.write(f"n_test = {config.oracle.n_test}\n\n")
    out.write("[output]\n")
    out.write(f"directory = {config.output.directory}\n")
    out.write(f"formats = {_fmt_list(config.output.formats)}\n")
    return out.getvalue()


DEFAULT_CONFIG_TEXT = serialize_config(default_config())


def config_to_dict(config: ExperimentConfig) -> dict:
    def plain(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {f.name: plain(getattr(obj, f.name)) for f in fields(obj)}
        if isinstance(obj, tuple):
            return list(obj)
        return obj

    return plain(config)
