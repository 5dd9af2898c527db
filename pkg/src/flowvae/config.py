"""Run configuration: INI-style file, command-line overrides, environment seed fallback."""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields

from flowvae.errors import ConfigError
from flowvae.presets import Preset, get_preset

SEED_ENV = "FLOWVAE_SEED"

# preset fields settable from a config file or flags, with their parsers
_INT_TUPLE = lambda s: tuple(int(v) for v in str(s).replace("-", ",").split(",") if v.strip())  # noqa: E731
_OPT_FLOAT = lambda s: None if str(s).strip().lower() in ("", "none") else float(s)  # noqa: E731
_OPT_INT = lambda s: None if str(s).strip().lower() in ("", "none") else int(s)  # noqa: E731
PRESET_OVERRIDES = {
    "lr": float,
    "klm": _OPT_FLOAT,
    "steps": _OPT_INT,
    "steps1": _OPT_INT,
    "steps2": _OPT_INT,
    "scaling": str,
    "layer_type": str,
    "feature_set": str,
    "classification": str,
    "kernel_sizes": _INT_TUPLE,
    "strides": _INT_TUPLE,
    "filters": int,
    "losses_enabled": lambda s: frozenset(v.strip() for v in str(s).split(",") if v.strip()),
}


@dataclass
class RunConfig:
    command: str = ""
    preset: str = ""
    overrides: dict = field(default_factory=dict)
    train: str | None = None
    val: str | None = None
    test: str | None = None
    synthetic: str | None = None
    seed: int | None = None
    out: str = "runs/out"
    batch_size: int = 1024
    log_interval: int = 50
    checkpoint: str | None = None
    lr2: float | None = None
    threshold: float = 0.5
    capacity: int | None = None
    window: int | None = None
    iterations: int = 50
    repeats: int = 5
    oracle: bool = False
    output: str | None = None
    spec_out: str | None = None

    def resolve_seed(self) -> int:
        if self.seed is None:
            env = os.environ.get(SEED_ENV)
            if env is None or not env.strip():
                raise ConfigError(f"a seed is required (--seed, config file, or {SEED_ENV})")
            try:
                self.seed = int(env)
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
        return self.seed

    def check_data_source(self, required: bool = True) -> None:
        has_paths = any((self.train, self.val, self.test))
        if has_paths and self.synthetic:
            raise ConfigError("give either dataset paths or --synthetic, not both")
        if required and not has_paths and not self.synthetic:
            raise ConfigError("no data source: give --train/--test paths or --synthetic")

    def resolved_preset(self) -> Preset:
        if not self.preset:
            raise ConfigError("no preset given")
        base = get_preset(self.preset)
        try:
            return base.replace(**self.overrides) if self.overrides else base
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid preset override: {exc}") from None

    def dump(self) -> str:
        cp = configparser.ConfigParser()
        run = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("overrides", "command", "preset")}
        cp["run"] = {k: "" if v is None else str(v) for k, v in run.items()}
        if self.preset:
            p = self.resolved_preset()
            cp["preset"] = {"name": self.preset, **{k: _fmt_field(getattr(p, k)) for k in PRESET_OVERRIDES}}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue().rstrip() + "\n"


def _fmt_field(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (tuple, frozenset)):
        return ",".join(str(x) for x in sorted(v, key=str)) if isinstance(v, frozenset) else ",".join(map(str, v))
    return str(v)


_RUN_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, text: str):
    kind = _RUN_TYPES[name]
    if text.strip().lower() in ("", "none"):
        return None
    if "bool" in kind:
        return text.strip().lower() in ("1", "true", "yes", "on")
    if "int" in kind:
        return int(text)
    if "float" in kind:
        return float(text)
    return text


def load_config_file(path, cfg: RunConfig | None = None) -> RunConfig:
    """Read ``[run]`` and ``[preset]`` sections into ``cfg`` (file values only)."""
    cfg = cfg or RunConfig()
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    unknown = [s for s in cp.sections() if s not in ("run", "preset")]
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    if cp.has_section("run"):
        for key, text in cp["run"].items():
            if key not in _RUN_TYPES or key in ("overrides", "command", "preset"):
                raise ConfigError(f"unknown run key {key!r}")
            try:
                setattr(cfg, key, _coerce(key, text))
            except ValueError:
                raise ConfigError(f"bad value for {key}: {text!r}") from None
    if cp.has_section("preset"):
        for key, text in cp["preset"].items():
            if key == "name":
                cfg.preset = text.strip()
                continue
            if key not in PRESET_OVERRIDES:
                raise ConfigError(f"unknown preset key {key!r}")
            try:
                cfg.overrides[key] = PRESET_OVERRIDES[key](text)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {text!r}") from None
    return cfg
