from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from domain.errors import ConfigError


class NullApprox(str, Enum):
    """
    Approximation of the weighted chi-square null distribution used by RCoT.
    """
    HBE = "hbe"
    GAMMA2 = "gamma2"


class RcotConfig(BaseModel):
    """
    Settings of the randomized conditional correlation test.
    Feature counts and the HBE null match the customary RCoT defaults.
    """
    model_config = ConfigDict(frozen=True)

    num_features_xy: int = Field(5, ge=1, description="Random Fourier features for X and Y")
    num_features_z: int = Field(25, ge=1, description="Random Fourier features for the conditioning set")
    null_approx: NullApprox = Field(NullApprox.HBE, description="Null distribution approximation")
    seed: int = Field(0, ge=0, lt=2**64, description="Feature seed shared by target and sources")


class PcConfig(BaseModel):
    """
    PC-stable / PCS-TL settings.
    """
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(0.05, gt=0.0, lt=1.0, description="Significance level")
    max_sepset_size: Optional[int] = Field(None, ge=0, description="Cap on conditioning-set size (None = unlimited)")
    rcot: RcotConfig = Field(default_factory=RcotConfig)


class HcConfig(BaseModel):
    """
    Hill-climbing / HC-TL settings.
    """
    model_config = ConfigDict(frozen=True)

    k_folds: int = Field(5, ge=2, description="Cross-validation folds")
    patience: int = Field(3, ge=0, description="Consecutive non-improving steps tolerated")
    tabu_size: int = Field(5, ge=0, description="Inverse operations kept in the tabu list")
    max_indegree: Optional[int] = Field(None, ge=0, description="Cap on parents per node (None = unlimited)")
    max_iterations: int = Field(10_000, ge=1, description="Hard iteration guard")
    seed: int = Field(0, ge=0, lt=2**64, description="Fold-assignment seed")


class CorruptionSpec(BaseModel):
    """
    How a source is derived from the generating network: arc relocation then additive Gaussian noise.
    """
    model_config = ConfigDict(frozen=True)

    modified_fraction: float = Field(0.0, ge=0.0, le=1.0)
    noise_mean: float = 0.0
    noise_std: float = Field(1.0, ge=0.0)
    seed: int = Field(0, ge=0, lt=2**64)


class Algorithm(str, Enum):
    PC = "pc"
    PCS_TL = "pcs-tl"
    HC = "hc"
    HC_TL = "hc-tl"

    @property
    def is_transfer(self) -> bool:
        return self in (Algorithm.PCS_TL, Algorithm.HC_TL)

    @property
    def family(self) -> str:
        return "pc" if self in (Algorithm.PC, Algorithm.PCS_TL) else "hc"


class NetworkKind(str, Enum):
    SPBN = "spbn"
    LGBN = "lgbn"
    CSV = "csv"


class ExperimentConfig(BaseModel):
    """
    Declarative description of one experiment: where data comes from, how sources are
    corrupted, the target-size grid, and which learners run.
    """
    model_config = ConfigDict(frozen=True)

    network: str = Field(..., description="spbn:<1-4> | lgbn:<path> | csv:<path>")
    source_fractions: Tuple[float, ...] = Field((0.0, 0.10), description="Arc-modification fraction per source")
    source_n: int = Field(3000, ge=2)
    noise_mean: float = 0.0
    noise_std: float = Field(1.0, ge=0.0)
    grid_start: int = Field(25, ge=2)
    grid_step: int = Field(100, ge=1)
    grid_end: int = Field(1025, ge=2)
    test_n: int = Field(1024, ge=1)
    repeats: int = Field(3, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    seeds: Optional[Tuple[int, ...]] = Field(None, description="Explicit seed per repeat")
    algorithms: Tuple[Algorithm, ...] = (Algorithm.PC, Algorithm.PCS_TL, Algorithm.HC, Algorithm.HC_TL)
    output_dir: Path = Path("results")
    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    max_sepset_size: Optional[int] = Field(5, ge=0)
    max_indegree: Optional[int] = Field(5, ge=0)
    k_folds: int = Field(5, ge=2)
    patience: int = Field(3, ge=0)
    tabu_size: int = Field(5, ge=0)
    reference_n: int = Field(10_000, ge=2)
    trace: bool = False

    @field_validator("source_fractions")
    @classmethod
    def _fractions_in_range(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        for f in v:
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"source fraction {f} outside [0, 1]")
        return v

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if self.grid_start >= self.grid_end:
            raise ValueError("grid_start must be smaller than grid_end")
        if self.seeds is not None and len(self.seeds) != self.repeats:
            raise ValueError(f"{len(self.seeds)} seeds given for {self.repeats} repeats")
        self.network_source()
        return self

    def network_source(self) -> Tuple[NetworkKind, str]:
        kind, _, value = self.network.partition(":")
        try:
            return NetworkKind(kind.strip().lower()), value.strip()
        except ValueError:
            raise ValueError(f"unknown network source '{self.network}'") from None

    def grid(self) -> List[int]:
        return list(range(self.grid_start, self.grid_end + 1, self.grid_step))

    def pc_config(self, rcot_seed: int) -> PcConfig:
        return PcConfig(alpha=self.alpha, max_sepset_size=self.max_sepset_size, rcot=RcotConfig(seed=rcot_seed))

    def hc_config(self, fold_seed: int) -> HcConfig:
        return HcConfig(k_folds=self.k_folds, patience=self.patience, tabu_size=self.tabu_size,
                        max_indegree=self.max_indegree, seed=fold_seed)


_LIST_KEYS = {"source_fractions", "seeds", "algorithms"}
_OPTIONAL_KEYS = {"max_sepset_size", "max_indegree", "seeds"}


def _coerce(raw: Dict[str, Optional[str]]) -> Dict[str, Union[str, List[str], None]]:
    out: Dict[str, Union[str, List[str], None]] = {}
    for key, value in raw.items():
        key = key.strip().lower()
        value = (value or "").strip()
        if key in _OPTIONAL_KEYS and value.lower() in ("", "none", "unlimited"):
            out[key] = None
        elif key in _LIST_KEYS:
            out[key] = [p.strip() for p in value.split(",") if p.strip()]
        else:
            out[key] = value
    return out


def load_experiment_config(path: Union[str, Path], overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    """
    Read an experiment config written in dotenv syntax (KEY=VALUE lines).
    Args:
        path (str | Path): Config file path.
        overrides (Optional[Dict[str, str]]): KEY=VALUE pairs that replace file values.
    Returns:
        ExperimentConfig: Validated configuration.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file '{path}' not found")
    raw = dict(dotenv_values(path))
    raw.update(overrides or {})
    try:
        return ExperimentConfig.model_validate(_coerce(raw))
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(f"{where}: {first['msg']}") from e
