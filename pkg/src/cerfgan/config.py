"""Strict YAML experiment configuration with dotted-path overrides.

Every section maps onto a dataclass; unknown keys and ill-typed values are
errors that name the offending key and, for file input, its line. The
resolved configuration is written back as YAML so a run can be repeated
from its snapshot alone.
"""

from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import yaml

from . import losses
from .baselines.cgan_mnist import CGANConfig
from .baselines.stargan import BaselineSpec
from .data import TOY_KINDS, AugmentSpec
from .domains import DomainRegistry, build_registry
from .trainer import STANDARD, WGAN_GP, TrainConfig

DATA_ROOT_ENV = "CERFGAN_DATA_ROOT"
MODELS = ("cerfgan", "stargan", "stargan-mcd")


class ConfigError(ValueError):
    pass


@dataclass
class RegistrySection:
    domains: list[str] = field(default_factory=lambda: ["A", "B"])
    pairs: Union[str, list[list[Union[int, str]]]] = "all"


@dataclass
class ToySection:
    kind: str = "color-inversion"
    n: int = 256
    size: int = 64
    seed: int = 0
    test_n: int = 64
    test_seed: int = 123


@dataclass
class AugmentSection:
    crop: Optional[int] = None  # None -> train.resolution
    resize_to: Optional[int] = None  # None -> round(resolution * 143 / 128)
    mirror_prob: float = 0.5


@dataclass
class DataSection:
    root: Optional[str] = None  # None -> $CERFGAN_DATA_ROOT
    toy: Optional[ToySection] = None
    augment: AugmentSection = field(default_factory=AugmentSection)


@dataclass
class TrainSection:
    resolution: int = 128
    batch_size: int = 4
    total_epochs: Optional[int] = None
    iterations_per_epoch: Optional[int] = None
    max_steps: Optional[int] = None
    base_lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_rec: float = losses.DEFAULT_LAMBDA_REC
    seed: int = 0
    deterministic: bool = True
    check_freeze: bool = False


@dataclass
class BaselineSection:
    lambda_cls: float = 1.0
    lambda_rec: float = 10.0
    width: float = 0.5
    n_res: int = 6


@dataclass
class VariantSection:
    model: str = "cerfgan"
    loss_mode: str = STANDARD
    decoder_adv_mode: str = losses.NON_SATURATING
    lambda_gp: float = losses.DEFAULT_LAMBDA_GP
    n_critic: Optional[int] = None
    skip_depth: Optional[int] = None
    width: float = 1.0
    n_down: int = 6
    baseline: BaselineSection = field(default_factory=BaselineSection)


@dataclass
class OutputSection:
    run_dir: str = "runs/default"
    checkpoint_every: int = 1
    sample_every: int = 0


@dataclass
class AblationSection:
    skip_depths: list[int] = field(default_factory=lambda: [1, 3, 5])
    lambda_grid: list[float] = field(default_factory=lambda: [0.0, 10.0])
    mnist: CGANConfig = field(default_factory=CGANConfig)
    classifier_epochs: int = 15
    fidelity_samples: int = 1000


@dataclass
class ExperimentConfig:
    registry: RegistrySection = field(default_factory=RegistrySection)
    data: DataSection = field(default_factory=DataSection)
    train: TrainSection = field(default_factory=TrainSection)
    variant: VariantSection = field(default_factory=VariantSection)
    output: OutputSection = field(default_factory=OutputSection)
    ablation: AblationSection = field(default_factory=AblationSection)

    def __post_init__(self):
        if self.variant.model not in MODELS:
            raise ConfigError(f"variant.model: unknown model {self.variant.model!r}; choose from {', '.join(MODELS)}")
        if self.variant.loss_mode not in (STANDARD, WGAN_GP):
            raise ConfigError(f"variant.loss_mode: unknown mode {self.variant.loss_mode!r}")
        if self.data.toy is not None and self.data.toy.kind not in TOY_KINDS:
            raise ConfigError(f"data.toy.kind: unknown kind {self.data.toy.kind!r}; choose from {', '.join(TOY_KINDS)}")
        # fail at load time rather than when a run starts
        self.registry_obj()
        self.train_config()
        self.augment_spec()
        if self.variant.model != "cerfgan":
            self.baseline_spec()

    def registry_obj(self) -> DomainRegistry:
        try:
            return build_registry({"domains": self.registry.domains, "pairs": self.registry.pairs})
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"registry: {e}") from None

    def train_config(self) -> TrainConfig:
        t, v, o = self.train, self.variant, self.output
        try:
            return TrainConfig(
                resolution=t.resolution, batch_size=t.batch_size, total_epochs=t.total_epochs,
                iterations_per_epoch=t.iterations_per_epoch, base_lr=t.base_lr, beta1=t.beta1, beta2=t.beta2,
                lambda_rec=t.lambda_rec, loss_mode=v.loss_mode, decoder_adv_mode=v.decoder_adv_mode,
                lambda_gp=v.lambda_gp, n_critic=v.n_critic, skip_depth=v.skip_depth, width=v.width,
                n_down=v.n_down, seed=t.seed, checkpoint_every=o.checkpoint_every, sample_every=o.sample_every,
                deterministic=t.deterministic, check_freeze=t.check_freeze)
        except ValueError as e:
            raise ConfigError(f"train: {e}") from None

    def baseline_spec(self) -> BaselineSpec:
        b = self.variant.baseline
        variant = self.variant.model if self.variant.model != "cerfgan" else "stargan"
        try:
            return BaselineSpec(variant, b.lambda_cls, b.lambda_rec, b.width, b.n_res)
        except ValueError as e:
            raise ConfigError(f"variant.baseline: {e}") from None

    def augment_spec(self) -> AugmentSpec:
        a, res = self.data.augment, self.train.resolution
        crop = a.crop or res
        resize_to = a.resize_to or max(crop, round(res * 143 / 128))
        try:
            return AugmentSpec(crop=crop, resize_to=resize_to, mirror_prob=a.mirror_prob)
        except ValueError as e:
            raise ConfigError(f"data.augment: {e}") from None

    def data_root(self) -> Optional[Path]:
        root = self.data.root or os.environ.get(DATA_ROOT_ENV)
        return Path(root) if root else None


# --- parsing -------------------------------------------------------------

def _key_lines(node: yaml.Node, prefix: str = "", out: Optional[dict] = None) -> dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _key_lines(v, path, out)
    return out


def _where(path: str, lines: dict[str, int]) -> str:
    return f"line {lines[path]}: " if path in lines else ""


def _is_dataclass_type(tp: Any) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(value: Any, tp: Any, path: str, lines: dict[str, int]) -> Any:
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        errors = []
        for a in args:
            if a is type(None):
                continue
            try:
                return _coerce(value, a, path, lines)
            except ConfigError as e:
                errors.append(str(e))
        raise ConfigError(errors[-1] if errors else f"{_where(path, lines)}{path}: invalid value {value!r}")
    if _is_dataclass_type(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{_where(path, lines)}{path}: expected a mapping, got {value!r}")
        return _build(tp, value, path, lines)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{_where(path, lines)}{path}: expected a list, got {value!r}")
        (item,) = typing.get_args(tp)
        return [_coerce(v, item, f"{path}[{j}]", lines) for j, v in enumerate(value)]
    ok = {
        bool: lambda v: isinstance(v, bool),
        int: lambda v: isinstance(v, int) and not isinstance(v, bool),
        float: lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        str: lambda v: isinstance(v, str),
    }[tp](value)
    if not ok:
        raise ConfigError(f"{_where(path, lines)}{path}: expected {tp.__name__}, got {value!r}")
    return float(value) if tp is float else value


def _build(cls: type, raw: dict, prefix: str, lines: dict[str, int]) -> Any:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in raw:
        if key not in names:
            path = f"{prefix}.{key}" if prefix else str(key)
            raise ConfigError(f"{_where(path, lines)}unknown key {path!r}; valid keys under "
                              f"{prefix or 'top level'}: {', '.join(sorted(names))}")
    kwargs = {k: _coerce(v, hints[k], f"{prefix}.{k}" if prefix else k, lines) for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{_where(prefix, lines)}{prefix or 'config'}: {e}") from None


def _set_dotted(tree: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        elif not isinstance(nxt, dict):
            raise ConfigError(f"override {dotted!r}: {p!r} is not a section")
        node = nxt
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    """``--train.total_epochs=4`` or ``train.total_epochs=4`` -> (path, parsed value)."""
    body = text[2:] if text.startswith("--") else text
    if "=" not in body:
        raise ConfigError(f"override {text!r} must look like --section.key=value")
    key, raw = body.split("=", 1)
    if not key or any(not p for p in key.split(".")):
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw else None
    except yaml.YAMLError as e:
        raise ConfigError(f"override {text!r}: cannot parse value ({e})") from None
    return key, value


def load_config(path: Optional[Path | str] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """File values over defaults, override flags over file values."""
    raw: dict = {}
    lines: dict[str, int] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f"line {mark.line + 1}: " if mark is not None else ""
            raise ConfigError(f"{path}: {where}invalid YAML ({getattr(e, 'problem', e)})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        if node is not None:
            lines = _key_lines(node)
    for o in overrides:
        key, value = parse_override(o)
        _set_dotted(raw, key, value)
        lines.pop(key, None)
    return _build(ExperimentConfig, raw, "", lines)


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def resolved(cfg: ExperimentConfig) -> dict:
    """Snapshot with environment-derived values filled in."""
    out = to_dict(cfg)
    root = cfg.data_root()
    out["data"]["root"] = str(root) if root is not None else None
    return out


def write_snapshot(cfg: ExperimentConfig, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(resolved(cfg), sort_keys=False))
    return path
