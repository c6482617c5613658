"""Flat ``key = value`` run configuration.

Keys carry a section prefix (``run.``, ``net.``, ``data.``).  Blank lines and
``#`` comments are ignored.  Command-line flags override file keys, and any
key not listed in :data:`DEFAULTS` is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .datasets import Dataset, gen_synthetic, read_cifar10_bin
from .nn import ACTIVATIONS, LOSSES, NetworkSpec
from .topology import TopologyError, build_mixing_matrix, named_edges, parse_edges
from .trainer import StepSchedule, TrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "run.s": 1,
    "run.k": 1,
    "run.batch": 32,
    "run.iters": 1000,
    "run.seed": 0,
    "run.alpha": None,
    "run.topology": "ring",
    "run.edges": None,
    "run.schedule": "strategy1",
    "run.split": "balanced",
    "run.eval_interval": 50,
    "run.eval_size": 512,
    "run.init_noise": 0.0,
    "run.workers": 1,
    "run.record_wall": False,
    "run.lipschitz_probes": 64,
    "run.inject_fault_at": None,
    "run.out": "out",
    "net.hidden": "16,8",
    "net.activation": "tanh",
    "net.output_activation": "identity",
    "net.loss": "softmax-cross-entropy",
    "data.kind": "synthetic",
    "data.n": 4096,
    "data.classes": 4,
    "data.dim": 20,
    "data.seed": 0,
    "data.path": None,
}

_INT_KEYS = {
    "run.s", "run.k", "run.batch", "run.iters", "run.seed", "run.eval_interval", "run.eval_size",
    "run.workers", "run.lipschitz_probes", "run.inject_fault_at", "data.n", "data.classes", "data.dim", "data.seed",
}
_FLOAT_KEYS = {"run.alpha", "run.init_noise"}
_BOOL_KEYS = {"run.record_wall"}
_POSITIVE = {"run.s", "run.k", "run.batch", "run.eval_interval", "run.eval_size", "run.workers", "data.n",
             "data.classes", "data.dim"}


def read_config_file(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def _coerce(key: str, value: Any) -> Any:
    if value is None or not isinstance(value, str):
        return value
    if value.lower() in ("", "none", "null") and DEFAULTS[key] is None:
        return None
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        kind = "integer" if key in _INT_KEYS else "number"
        raise ConfigError(f"{key}: expected {kind}, got {value!r}") from None
    if key in _BOOL_KEYS:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected boolean, got {value!r}")
    return value


@dataclass
class RunConfig:
    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def S(self) -> int:
        return self.values["run.s"]

    @property
    def K(self) -> int:
        return self.values["run.k"]

    @property
    def B(self) -> int:
        return self.values["run.batch"]

    @property
    def T(self) -> int:
        return self.values["run.iters"]

    @property
    def seed(self) -> int:
        return self.values["run.seed"]

    @property
    def schedule(self) -> StepSchedule:
        return StepSchedule.parse(self.values["run.schedule"])

    @property
    def out(self) -> Path:
        return Path(self.values["run.out"])

    def model_edges(self) -> list[tuple[int, int]]:
        if self.values["run.edges"] is not None:
            return parse_edges(self.values["run.edges"])
        if self.S == 1:
            return []
        return named_edges(self.values["run.topology"], self.S)

    def dataset(self) -> Dataset:
        v = self.values
        if v["data.kind"] == "cifar10":
            return read_cifar10_bin(v["data.path"])
        return gen_synthetic(v["data.n"], v["data.classes"], v["data.dim"], v["data.seed"])

    def network(self, ds: Dataset) -> NetworkSpec:
        v = self.values
        hidden = [int(x) for x in str(v["net.hidden"]).replace(" ", "").split(",") if x]
        return NetworkSpec.mlp(
            [ds.dim, *hidden, ds.classes], v["net.activation"], v["net.output_activation"], v["net.loss"]
        )

    def train_config(self, ds: Dataset | None = None) -> TrainConfig:
        ds = self.dataset() if ds is None else ds
        v = self.values
        return TrainConfig(
            spec=self.network(ds),
            dataset=ds,
            S=self.S,
            K=self.K,
            B=self.B,
            T=self.T,
            seed=self.seed,
            edges=self.model_edges(),
            alpha=v["run.alpha"],
            schedule=self.schedule,
            split=v["run.split"],
            eval_interval=v["run.eval_interval"],
            eval_size=v["run.eval_size"],
            init_noise=v["run.init_noise"],
            record_wall=v["run.record_wall"],
            workers=v["run.workers"],
            lipschitz_probes=v["run.lipschitz_probes"],
            fault_at=v["run.inject_fault_at"],
        )


def parse_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Merge defaults, an optional config file and overrides, then validate."""
    raw: dict[str, Any] = {}
    if path is not None:
        raw.update(read_config_file(path))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = dict(DEFAULTS)
    for key, value in raw.items():
        values[key] = _coerce(key, value)
    cfg = RunConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    v = cfg.values
    for key in _POSITIVE:
        if v[key] < 1:
            raise ConfigError(f"{key} must be >= 1, got {v[key]}")
    if v["run.iters"] < 0:
        raise ConfigError("run.iters must be >= 0")
    if v["run.init_noise"] < 0:
        raise ConfigError("run.init_noise must be >= 0")
    try:
        cfg.schedule
    except ValueError as exc:
        raise ConfigError(f"run.schedule: {exc}") from None
    if v["run.split"] not in ("balanced", "even"):
        raise ConfigError(f"run.split must be 'balanced' or 'even', got {v['run.split']!r}")
    if v["net.activation"] not in ACTIVATIONS or v["net.output_activation"] not in ACTIVATIONS:
        raise ConfigError(f"activations must be one of {ACTIVATIONS}")
    if v["net.loss"] not in LOSSES:
        raise ConfigError(f"net.loss must be one of {LOSSES}")
    try:
        hidden = [int(x) for x in str(v["net.hidden"]).replace(" ", "").split(",") if x]
    except ValueError:
        raise ConfigError(f"net.hidden: expected comma-separated widths, got {v['net.hidden']!r}") from None
    if any(h < 1 for h in hidden):
        raise ConfigError("net.hidden widths must be >= 1")
    if cfg.K > len(hidden) + 1:
        raise ConfigError(f"run.k={cfg.K} exceeds the {len(hidden) + 1} network layers")
    if v["data.kind"] == "cifar10":
        if v["data.path"] is None or not Path(v["data.path"]).exists():
            raise ConfigError(f"data.path {v['data.path']!r} does not exist")
    elif v["data.kind"] != "synthetic":
        raise ConfigError(f"data.kind must be 'synthetic' or 'cifar10', got {v['data.kind']!r}")
    elif cfg.S > v["data.n"]:
        raise ConfigError(f"run.s={cfg.S} exceeds data.n={v['data.n']}")
    try:
        edges = cfg.model_edges()
        if cfg.S > 1 or v["run.alpha"] is not None:
            build_mixing_matrix(edges, cfg.S, v["run.alpha"])
    except TopologyError as exc:
        raise ConfigError(str(exc)) from None
