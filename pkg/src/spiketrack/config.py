"""Run configuration: five INI sections, strict keys, serializable snapshots.

Defaults carry the published training recipe where one is stated (batch 32,
lr 4e-5, weight decay 1e-4, lambda_base 0.1, beta 0.5, eta 10, template 128,
search 256); step counts and scene parameters are desk-scale. Unknown keys
or sections are rejected by name, so sweep grids cannot silently typo.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields, replace

from .adaptive_weight import AdaptiveWeightConfig
from .energy import E_AC_DEFAULT, E_MAC_DEFAULT
from .head import LossWeights
from .model import ModelConfig
from .tracking import TrackingConfig
from .training import DataConfig, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class TrainSection:
    batch_size: int = 32
    steps: int = 2000
    lr: float = 4e-5
    weight_decay: float = 1e-4
    grad_clip: float = 0.0
    seed: int = 0
    mi_enabled: bool = True
    lambda_iou: float = 2.0
    lambda_l1: float = 5.0
    lambda_sim: float = 0.1
    lambda_base: float = 0.1
    beta: float = 0.5
    eta: float = 10.0
    ema_momentum: float = 0.9
    sign_mode: str = "as_written"

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            steps=self.steps,
            lr=self.lr,
            weight_decay=self.weight_decay,
            grad_clip=self.grad_clip,
            seed=self.seed,
            mi_enabled=self.mi_enabled,
            loss_weights=LossWeights(
                lambda_iou=self.lambda_iou,
                lambda_l1=self.lambda_l1,
                lambda_sim=self.lambda_sim,
            ),
            amim=AdaptiveWeightConfig(
                lambda_base=self.lambda_base,
                beta=self.beta,
                eta=self.eta,
                ema_momentum=self.ema_momentum,
                sign_mode=self.sign_mode,
            ),
        )


@dataclass
class EvalSection:
    precision_threshold: float = 20.0
    num_sequences: int = 4
    sequence_length: int = 40
    eval_seed: int = 9000
    search_scale: float = 4.0
    template_scale: float = 2.0
    template_update_interval: int = 25
    template_update_score: float = 0.7
    window_penalty: bool = True

    def tracking_config(self) -> TrackingConfig:
        return TrackingConfig(
            search_scale=self.search_scale,
            template_scale=self.template_scale,
            template_update_interval=self.template_update_interval,
            template_update_score=self.template_update_score,
            window_penalty=self.window_penalty,
        )


@dataclass
class EnergySection:
    e_mac: float = E_MAC_DEFAULT
    e_ac: float = E_AC_DEFAULT


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainSection
    data: DataConfig
    eval: EvalSection
    energy: EnergySection

    @staticmethod
    def defaults() -> "RunConfig":
        return RunConfig(
            model=ModelConfig(),
            train=TrainSection(),
            data=DataConfig(),
            eval=EvalSection(),
            energy=EnergySection(),
        )

    def replace_train(self, **kwargs) -> "RunConfig":
        return RunConfig(
            model=self.model,
            train=replace(self.train, **kwargs),
            data=self.data,
            eval=self.eval,
            energy=self.energy,
        )


_SECTIONS = {
    "model": ModelConfig,
    "train": TrainSection,
    "data": DataConfig,
    "eval": EvalSection,
    "energy": EnergySection,
}


def _parse_value(raw: str, default) -> object:
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def parse_config(text: str) -> RunConfig:
    """Parse INI text; any unknown section or key is an error naming it."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep case; keys are lowercase by convention
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    sections = {}
    for section_name in parser.sections():
        if section_name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section_name}]")
        cls = _SECTIONS[section_name]
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in parser.items(section_name):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section_name}]")
            default = getattr(cls(), key)
            try:
                kwargs[key] = _parse_value(raw, default)
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"bad value for {key!r} in [{section_name}]: {raw!r} ({exc})"
                ) from exc
        try:
            sections[section_name] = cls(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid [{section_name}] configuration: {exc}") from exc

    return RunConfig(
        model=sections.get("model", ModelConfig()),
        train=sections.get("train", TrainSection()),
        data=sections.get("data", DataConfig()),
        eval=sections.get("eval", EvalSection()),
        energy=sections.get("energy", EnergySection()),
    )


def load_config(path) -> RunConfig:
    from pathlib import Path

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Deterministic INI snapshot with every key written explicitly."""
    out = io.StringIO()
    for section_name, section_cls in _SECTIONS.items():
        section = getattr(cfg, section_name)
        out.write(f"[{section_name}]\n")
        for f in fields(section_cls):
            out.write(f"{f.name} = {_format_value(getattr(section, f.name))}\n")
        out.write("\n")
    return out.getvalue()


def save_config(cfg: RunConfig, path) -> None:
    from pathlib import Path

    Path(path).write_text(dump_config(cfg))
