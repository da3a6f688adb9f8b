"""Training configuration."""

import json
from dataclasses import asdict, dataclass, fields

from ..exceptions import ValidationError

MODEL_TAGS = ("ae", "ae_rtm", "ae_rtm_corr", "nnreg")


@dataclass
class TrainConfig:
    model: str = "ae_rtm_corr"
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    max_epochs: int = 100
    lr_drop_epoch: int = 50
    lr_drop_factor: float = 0.1
    patience: int = 10
    seed: int = 0
    hidden: int = 64
    stabilizer: bool = True
    stabilizer_strict_nan: bool = False
    inject_nan_steps: tuple = ()
    max_nonfinite_losses: int = 3
    check_ranges: bool = True

    def __post_init__(self):
        if self.model not in MODEL_TAGS:
            raise ValidationError(f"unknown model {self.model!r}; expected one of {MODEL_TAGS}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValidationError("batch_size, max_epochs and patience must be positive")
        self.inject_nan_steps = tuple(int(s) for s in self.inject_nan_steps)

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_mapping(json.load(fh))

    def to_dict(self):
        d = asdict(self)
        d["inject_nan_steps"] = list(self.inject_nan_steps)
        return d
