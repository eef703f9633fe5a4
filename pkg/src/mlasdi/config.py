"""Run configuration: strict sectioned key=value files.

Four sections drive the pipeline: ``[data]`` (generator parameters or an
import path), ``[model]`` (latent dimension and per-stage hidden widths,
"500-50" style), ``[train]`` (loss weights, learning rate, per-stage
iteration counts, seed) and ``[eval]`` (test selection and output paths).
Unknown sections or keys are rejected; command-line flags override keys.
"""

import configparser
from dataclasses import dataclass

from .data import ParamGrid
from .errors import ConfigError
from .multistage import TrainConfig

_SCHEMA = {
    "data": {
        "kind", "path", "speed_min", "speed_max", "speed_step",
        "width_min", "width_max", "width_step", "nx", "nt", "dt",
    },
    "model": {"latent_dim", "hidden"},
    "train": {
        "beta1", "beta2", "lr", "iterations", "seed", "train_params", "threads",
    },
    "eval": {"test", "csv", "summary", "stages"},
}

_DEFAULTS = {
    "data": {
        "kind": "pulse",
        "path": "",
        "speed_min": "0.8", "speed_max": "1.2", "speed_step": "0.05",
        "width_min": "0.08", "width_max": "0.12", "width_step": "0.005",
        "nx": "64", "nt": "100", "dt": "0.01",
    },
    "model": {"latent_dim": "4", "hidden": "50"},
    "train": {
        "beta1": "0.1", "beta2": "0.001", "lr": "0.001",
        "iterations": "3000,3000", "seed": "0", "train_params": "9",
        "threads": "1",
    },
    "eval": {"test": "all", "csv": "errors.csv", "summary": "summary.txt",
             "stages": "0"},
}


@dataclass
class RunConfig:
    """Fully resolved pipeline configuration (defaults filled in)."""

    kind: str
    path: str
    speed: tuple
    width: tuple
    nx: int
    nt: int
    dt: float
    latent_dim: int
    hidden: tuple
    beta1: float
    beta2: float
    lr: float
    iterations: tuple
    seed: int
    train_params: int
    threads: int
    eval_test: str
    eval_csv: str
    eval_summary: str
    eval_stages: int

    def grid(self):
        if self.kind != "pulse":
            raise ConfigError("no parameter grid: data kind is not 'pulse'")
        return ParamGrid((self.speed, self.width))

    def train_config(self):
        hidden = self.hidden
        if len(hidden) == 1 and len(self.iterations) > 1:
            hidden = hidden * len(self.iterations)
        return TrainConfig(
            latent_dim=self.latent_dim,
            hidden=hidden,
            iterations=self.iterations,
            beta1=self.beta1,
            beta2=self.beta2,
            lr=self.lr,
            seed=self.seed,
            threads=self.threads,
        )

    def resolved_text(self):
        """Canonical dump of every resolved key, reproducible from logs."""
        lines = ["[data]"]
        lines.append(f"kind={self.kind}")
        if self.path:
            lines.append(f"path={self.path}")
        for name, triple in (("speed", self.speed), ("width", self.width)):
            for part, v in zip(("min", "max", "step"), triple):
                lines.append(f"{name}_{part}={v!r}")
        lines += [f"nx={self.nx}", f"nt={self.nt}", f"dt={self.dt!r}"]
        lines.append("[model]")
        lines.append(f"latent_dim={self.latent_dim}")
        lines.append("hidden=" + ",".join("-".join(str(w) for w in h)
                                          for h in self.hidden))
        lines.append("[train]")
        lines += [
            f"beta1={self.beta1!r}", f"beta2={self.beta2!r}", f"lr={self.lr!r}",
            "iterations=" + ",".join(str(n) for n in self.iterations),
            f"seed={self.seed}", f"train_params={self.train_params}",
            f"threads={self.threads}",
        ]
        lines.append("[eval]")
        lines += [
            f"test={self.eval_test}", f"csv={self.eval_csv}",
            f"summary={self.eval_summary}", f"stages={self.eval_stages}",
        ]
        return "\n".join(lines) + "\n"


def _parse_int(section, key, raw, minimum=None):
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}={raw!r} is not an integer") from None
    if minimum is not None and value < minimum:
        raise ConfigError(f"[{section}] {key}={value} must be >= {minimum}")
    return value


def _parse_float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}={raw!r} is not a number") from None


def _parse_hidden(raw):
    stages = []
    for spec in raw.split(","):
        spec = spec.strip()
        widths = tuple(int(w) for w in spec.split("-") if w != "")
        if any(w < 1 for w in widths):
            raise ConfigError(f"[model] hidden widths must be positive: {spec!r}")
        stages.append(widths)
    if not stages:
        raise ConfigError("[model] hidden must name at least one stage")
    return tuple(stages)


def parse_config(text, overrides=None):
    """Parse and validate config text; ``overrides`` maps section.key -> str."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    raw = {sec: dict(vals) for sec, vals in _DEFAULTS.items()}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            raw[section][key] = value.strip()
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown override {dotted!r}")
        raw[section][key] = str(value)

    kind = raw["data"]["kind"]
    if kind not in ("pulse", "import"):
        raise ConfigError(f"[data] kind must be 'pulse' or 'import', got {kind!r}")
    if kind == "import" and not raw["data"]["path"]:
        raise ConfigError("[data] kind=import requires a path")

    speed = tuple(_parse_float("data", f"speed_{p}", raw["data"][f"speed_{p}"])
                  for p in ("min", "max", "step"))
    width = tuple(_parse_float("data", f"width_{p}", raw["data"][f"width_{p}"])
                  for p in ("min", "max", "step"))
    if kind == "pulse":
        if speed[2] <= 0 or width[2] <= 0:
            raise ConfigError("[data] grid steps must be positive")

    try:
        iterations = tuple(
            _parse_int("train", "iterations", part.strip(), minimum=1)
            for part in raw["train"]["iterations"].split(",")
        )
    except ConfigError:
        raise
    hidden = _parse_hidden(raw["model"]["hidden"])
    if len(hidden) not in (1, len(iterations)):
        raise ConfigError(
            f"[model] hidden names {len(hidden)} stages but [train] iterations "
            f"names {len(iterations)}"
        )

    dt = _parse_float("data", "dt", raw["data"]["dt"])
    if dt <= 0:
        raise ConfigError(f"[data] dt must be positive, got {dt}")
    lr = _parse_float("train", "lr", raw["train"]["lr"])
    if lr <= 0:
        raise ConfigError(f"[train] lr must be positive, got {lr}")
    beta1 = _parse_float("train", "beta1", raw["train"]["beta1"])
    beta2 = _parse_float("train", "beta2", raw["train"]["beta2"])
    if beta1 < 0 or beta2 < 0:
        raise ConfigError("[train] beta1/beta2 must be >= 0")
    eval_test = raw["eval"]["test"]
    if eval_test not in ("all", "train"):
        raise ConfigError(f"[eval] test must be 'all' or 'train', got {eval_test!r}")

    return RunConfig(
        kind=kind,
        path=raw["data"]["path"],
        speed=speed,
        width=width,
        nx=_parse_int("data", "nx", raw["data"]["nx"], minimum=16),
        nt=_parse_int("data", "nt", raw["data"]["nt"], minimum=3),
        dt=dt,
        latent_dim=_parse_int("model", "latent_dim", raw["model"]["latent_dim"],
                              minimum=1),
        hidden=hidden,
        beta1=beta1,
        beta2=beta2,
        lr=lr,
        iterations=iterations,
        seed=_parse_int("train", "seed", raw["train"]["seed"]),
        train_params=_parse_int("train", "train_params",
                                raw["train"]["train_params"], minimum=1),
        threads=_parse_int("train", "threads", raw["train"]["threads"], minimum=1),
        eval_test=eval_test,
        eval_csv=raw["eval"]["csv"],
        eval_summary=raw["eval"]["summary"],
        eval_stages=_parse_int("eval", "stages", raw["eval"]["stages"], minimum=0),
    )


def load_config(path, overrides=None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)
