"""
Run configuration.
A plain-text key=value file plus command-line overrides resolve into one
RunConfig, which is then projected onto the engine's own config objects.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from app.core.denoiser import DenoiserConfig
from app.core.training import TrainConfig
from app.core.vocab import Vocabulary
from app.errors import ConfigError

logger = logging.getLogger(__name__)

LIST_FIELDS = ("accumulation_epochs", "accumulation_steps", "seeds", "ablation_steps", "generated_paths")


class RunConfig(BaseModel):
    """Every key a command may read; unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid")

    # artifacts
    output_dir: str = "runs/default"
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    corpus_path: Optional[str] = None
    vocab_path: str = "runs/default/vocab.json"
    checkpoint_path: str = "runs/default/model.ckpt"
    init_checkpoint: Optional[str] = None
    resume: bool = False
    generated_paths: List[str] = []
    reference_path: Optional[str] = None

    # vocabulary and chemistry
    min_count: int = 1
    extra_elements: str = ""

    # toy corpus
    n_train: int = 2000
    n_test: int = 200

    # denoiser
    layers: int = 4
    hidden: int = 128
    heads: int = 4
    max_positions: int = 512
    max_target_length: int = 128
    position_embedding: bool = True
    bias_recursion: bool = True

    # training
    learning_rate: float = 5e-5
    batch_size: int = 16
    accumulation_epochs: List[int] = [0, 90, 150, 180]
    accumulation_steps: List[int] = [1, 4, 16, 64]
    T: int = 1000
    text_mask_probability: float = 0.15
    mlm_probability: float = 0.15
    seed: int = 42
    max_epochs: int = 200
    max_steps: Optional[int] = None
    weight_decay: float = 0.01
    checkpoint_every: int = 0
    eval_every: int = 0
    eval_samples: int = 32
    pretrain_mix: str = "all"
    progress: bool = True

    # sampling
    steps: int = 100
    top_k: int = 15
    seeds: List[int] = []
    workers: int = 1
    permute_positions: bool = True
    ablation_steps: List[int] = [1, 10, 100, 1000]

    @field_validator(*LIST_FIELDS, mode="before")
    @classmethod
    def _split_lists(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("pretrain_mix")
    @classmethod
    def _mix(cls, value: str) -> str:
        if value not in ("all", "pair"):
            raise ValueError("pretrain_mix must be 'all' or 'pair'")
        return value

    @property
    def output(self) -> Path:
        return Path(self.output_dir)

    def denoiser_config(self, vocab: Vocabulary) -> DenoiserConfig:
        return DenoiserConfig(
            layers=self.layers,
            hidden=self.hidden,
            heads=self.heads,
            max_positions=self.max_positions,
            token_vocab_size=vocab.size,
            edge_vocab_size=vocab.num_edge_categories,
            max_target_length=self.max_target_length,
            position_embedding=self.position_embedding,
            bias_recursion=self.bias_recursion,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            accumulation_epochs=self.accumulation_epochs,
            accumulation_steps=self.accumulation_steps,
            T=self.T,
            text_mask_probability=self.text_mask_probability,
            mlm_probability=self.mlm_probability,
            seed=self.seed,
            max_epochs=self.max_epochs,
            max_steps=self.max_steps,
            weight_decay=self.weight_decay,
            checkpoint_every=self.checkpoint_every,
            eval_every=self.eval_every,
            progress=self.progress,
        )

    @property
    def sampling_seeds(self) -> List[int]:
        return self.seeds or [self.seed]


def parse_assignment(line: str, source: str = "<override>") -> Tuple[str, str]:
    """Split 'key=value'; whitespace around both sides is stripped."""
    if "=" not in line:
        raise ConfigError(f"{source}: expected key=value, got '{line}'")
    key, value = line.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"{source}: empty key in '{line}'")
    return key, value.strip()


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read key=value lines; '#' starts a comment, blank lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    values: Dict[str, str] = {}
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = parse_assignment(line, f"{path}:{number}")
        values[key] = value
    return values


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Resolve a RunConfig.

    Args:
        path: Optional key=value file
        overrides: 'key=value' strings applied after the file

    Raises:
        ConfigError: On malformed lines, unknown keys or invalid values
    """
    values: Dict[str, str] = read_config_file(path) if path is not None else {}
    for item in overrides:
        key, value = parse_assignment(item)
        values[key] = value
    # Empty values fall back to defaults.
    values = {k: v for k, v in values.items() if v != ""}
    try:
        config = RunConfig(**values)
        config.train_config()
    except ValidationError as e:
        keys = sorted({".".join(str(p) for p in err["loc"]) for err in e.errors()})
        raise ConfigError(f"Invalid configuration for {keys}: {e}") from e
    logger.debug(f"Resolved config: {config.model_dump()}")
    return config
