from pathlib import Path
from typing import Dict, List, Literal, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from density.kde import CkdeCpd, KdeBayesianNetwork, KdeModel
from density.params import TlKdeBayesianNetwork
from domain.errors import KdeError
from domain.graph import Dag, read_graph, write_graph

FLOAT = np.dtype("<f8")
MANIFEST = "manifest.json"
GRAPH = "graph.txt"

Network = Union[KdeBayesianNetwork, TlKdeBayesianNetwork]


class NodeEntry(BaseModel):
    name: str
    parents: List[str] = Field(description="Parent order of the joint/marginal columns")
    n_train: int = Field(ge=1, description="Rows in <name>.train.f64")


class BundleManifest(BaseModel):
    """
    Index of a network bundle. Matrices are raw little-endian float64, row-major:
    <node>.train.f64 is n_train × (1 + |parents|) with the child first,
    <node>.joint_bw.f64 and <node>.marginal_bw.f64 are square bandwidth matrices.
    A CKDE-TL bundle stores each kept source as a plain bundle in source_<k>/.
    """
    kind: Literal["kdebn", "tl-kdebn"]
    nodes: List[NodeEntry]
    eta: float = 1.0
    sources: int = 0
    weights: Dict[str, List[float]] = Field(default_factory=dict)


def _write_matrix(path: Path, m: np.ndarray) -> None:
    np.ascontiguousarray(m, dtype=FLOAT).tofile(path)


def _read_matrix(path: Path, cols: int) -> np.ndarray:
    try:
        flat = np.fromfile(path, dtype=FLOAT)
    except OSError as e:
        raise KdeError(f"cannot read '{path}': {e}") from e
    if cols < 1 or flat.size % cols:
        raise KdeError(f"'{path}' holds {flat.size} values, not a multiple of {cols}")
    return flat.reshape(-1, cols).astype(np.float64)


def _save_kdebn(bn: KdeBayesianNetwork, root: Path) -> List[NodeEntry]:
    root.mkdir(parents=True, exist_ok=True)
    write_graph(bn.dag, root / GRAPH)
    entries = []
    for node in bn.dag.nodes:
        cpd = bn.cpds[node]
        _write_matrix(root / f"{node}.train.f64", cpd.joint.training_points)
        _write_matrix(root / f"{node}.joint_bw.f64", cpd.joint.bandwidth)
        if cpd.marginal is not None:
            _write_matrix(root / f"{node}.marginal_bw.f64", cpd.marginal.bandwidth)
        entries.append(NodeEntry(name=node, parents=list(cpd.parents), n_train=cpd.joint.n_points))
    return entries


def _load_kdebn(root: Path, entries: List[NodeEntry]) -> KdeBayesianNetwork:
    dag = read_graph(root / GRAPH)
    if not isinstance(dag, Dag):
        raise KdeError(f"'{root / GRAPH}' is not a DAG")
    cpds = {}
    for e in entries:
        d = 1 + len(e.parents)
        train = _read_matrix(root / f"{e.name}.train.f64", d)
        if train.shape[0] != e.n_train:
            raise KdeError(f"'{e.name}' has {train.shape[0]} training rows, manifest says {e.n_train}")
        joint = KdeModel.fit(train, bandwidth=_read_matrix(root / f"{e.name}.joint_bw.f64", d))
        marginal = None
        if e.parents:
            marginal = KdeModel.fit(train[:, 1:],
                                    bandwidth=_read_matrix(root / f"{e.name}.marginal_bw.f64", d - 1))
        cpds[e.name] = CkdeCpd(e.name, tuple(e.parents), joint, marginal)
    return KdeBayesianNetwork(dag, cpds)


def save_bundle(net: Network, directory: Union[str, Path]) -> Path:
    """
    Write a fitted network to a bundle directory.
    Args:
        net (KdeBayesianNetwork | TlKdeBayesianNetwork): Network to store.
        directory (str | Path): Target directory, created if missing.
    Returns:
        Path: The bundle directory.
    """
    root = Path(directory)
    if isinstance(net, TlKdeBayesianNetwork):
        entries = _save_kdebn(net.target, root)
        for k, src in enumerate(net.sources):
            save_bundle(src, root / f"source_{k}")
        manifest = BundleManifest(
            kind="tl-kdebn", nodes=entries, eta=net.eta, sources=len(net.sources),
            weights={n: [float(w) for w in net.weights[n]] for n in net.dag.nodes},
        )
    else:
        manifest = BundleManifest(kind="kdebn", nodes=_save_kdebn(net, root))
    (root / MANIFEST).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return root


def load_bundle(directory: Union[str, Path]) -> Network:
    """
    Read a bundle written by save_bundle. Bandwidths are restored exactly, not refitted.
    """
    root = Path(directory)
    try:
        manifest = BundleManifest.model_validate_json((root / MANIFEST).read_text(encoding="utf-8"))
    except OSError as e:
        raise KdeError(f"cannot read bundle '{root}': {e}") from e
    except ValidationError as e:
        raise KdeError(f"invalid bundle manifest in '{root}': {e.errors()[0]['msg']}") from e
    target = _load_kdebn(root, manifest.nodes)
    if manifest.kind == "kdebn":
        return target
    sources = tuple(load_bundle(root / f"source_{k}") for k in range(manifest.sources))
    if not all(isinstance(s, KdeBayesianNetwork) for s in sources):
        raise KdeError(f"nested CKDE-TL bundle in '{root}'")
    weights = {n: np.asarray(manifest.weights.get(n, []), dtype=np.float64) for n in target.dag.nodes}
    return TlKdeBayesianNetwork(target.dag, target, sources, weights, manifest.eta)
