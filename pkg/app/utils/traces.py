from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd
from pydantic import BaseModel, Field

RESULT_COLUMNS = ["dataset", "algorithm", "target_n", "seed", "test_loglik", "shd", "dhd", "wall_time_s"]


class PooledPValueTrace(BaseModel):
    """
    One pooled CI decision: the target p-value, each source's p-value and weight, and the pooled value.
    Sources that were not consulted carry p = None and weight 0.
    """
    x: str
    y: str
    z: List[str]
    target_p: float = Field(ge=0.0, le=1.0)
    source_p: List[Optional[float]]
    local_similarity: List[float]
    weights: List[float]
    eta: float
    pooled_p: float = Field(ge=0.0, le=1.0)


class MoveTrace(BaseModel):
    """
    One applied hill-climbing move.
    """
    iteration: int
    move: str
    delta: float
    score: float
    best_score: float
    improved: bool
    transfer_nodes: List[str] = Field(default_factory=list, description="Touched nodes scored with the blended term")


class ResultRow(BaseModel):
    """
    One (dataset, algorithm, target size, seed) measurement.
    """
    dataset: str
    algorithm: str
    target_n: int = Field(ge=1)
    seed: int = Field(ge=0)
    test_loglik: float
    shd: Optional[int] = Field(None, ge=0)
    dhd: Optional[float] = Field(None, ge=0.0)
    wall_time_s: float = Field(ge=0.0)


class GroupingReport(BaseModel):
    """
    Friedman / Bergmann-Hommel outcome for one metric, serialized as the grouping JSON.
    """
    metric: str
    direction: str
    blocks: int
    friedman_statistic: float
    friedman_p: float
    mean_ranks: Dict[str, float]
    rejected: List[List[str]]
    groups: List[List[str]]


class EvaluationReport(BaseModel):
    structure: str
    test_loglik: float
    arcs: int
    shd: Optional[int] = None
    dhd: Optional[float] = None
    transfer: bool = False


def _flatten(value):
    if isinstance(value, list):
        return ";".join("" if v is None else str(v) for v in value)
    if isinstance(value, dict):
        return ";".join(f"{k}={v}" for k, v in value.items())
    return value


def write_traces(records: Sequence[BaseModel], path: Union[str, Path]) -> None:
    """
    Write trace records as CSV, one row per record; list fields are ';'-joined.
    """
    rows = [{k: _flatten(v) for k, v in r.model_dump().items()} for r in records]
    columns = list(type(records[0]).model_fields) if records else []
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator="\n")


def results_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    df = pd.DataFrame([r.model_dump() for r in rows], columns=RESULT_COLUMNS)
    # nullable integers keep shd as "3" rather than "3.0" when a row has no reference
    return df.astype({"target_n": "int64", "seed": "uint64", "shd": "Int64"})
