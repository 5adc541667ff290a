import math
from pathlib import Path
from typing import Dict, List, Tuple, Union

from domain.errors import GraphError, NetworkSpecError
from domain.graph import Dag
from synthetic.networks import LinearTerm, MixtureComponent, NodeCpd, StructuralNetwork

# Grammar, one node per line ('#' starts a comment):
#   <node> [| <parent>, <parent>, ...]: intercept <v>, var <v>[, <parent> <coefficient>]...
# Parents listed without a coefficient get coefficient 0.


def _number(token: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise NetworkSpecError(f"line {lineno}: '{token}' is not a number") from None
    if not math.isfinite(value):
        raise NetworkSpecError(f"line {lineno}: '{token}' is not finite")
    return value


def _parse_line(line: str, lineno: int) -> Tuple[str, List[str], NodeCpd]:
    head, sep, body = line.partition(":")
    if not sep:
        raise NetworkSpecError(f"line {lineno}: missing ':'")
    node, _, parent_part = head.partition("|")
    node = node.strip()
    if not node or " " in node:
        raise NetworkSpecError(f"line {lineno}: invalid node name '{node}'")
    parents = [p.strip() for p in parent_part.split(",") if p.strip()]
    if len(set(parents)) != len(parents):
        raise NetworkSpecError(f"line {lineno}: duplicate parent of '{node}'")
    intercept, variance = 0.0, None
    coefficients: Dict[str, float] = {}
    for item in body.split(","):
        parts = item.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise NetworkSpecError(f"line {lineno}: cannot parse '{item.strip()}'")
        key, value = parts[0], _number(parts[1], lineno)
        if key == "intercept":
            intercept = value
        elif key == "var":
            variance = value
        elif key in parents:
            coefficients[key] = value
        else:
            raise NetworkSpecError(f"line {lineno}: coefficient for '{key}', which is not a parent of '{node}'")
    if variance is None or variance <= 0:
        raise NetworkSpecError(f"line {lineno}: '{node}' needs a positive variance")
    terms = (LinearTerm(intercept),) + tuple(LinearTerm(c, (p,)) for p, c in coefficients.items() if c != 0)
    return node, parents, NodeCpd(node, (MixtureComponent(1.0, terms, math.sqrt(variance)),))


def parse_lgbn(text: str) -> StructuralNetwork:
    """
    Parse a linear-Gaussian network description into single-component structural equations.
    """
    nodes: List[str] = []
    arcs = set()
    cpds: Dict[str, NodeCpd] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        node, parents, cpd = _parse_line(line, lineno)
        if node in cpds:
            raise NetworkSpecError(f"line {lineno}: node '{node}' defined twice")
        nodes.append(node)
        cpds[node] = cpd
        arcs.update((p, node) for p in parents)
    if not nodes:
        raise NetworkSpecError("network file defines no node")
    unknown = sorted({p for p, _ in arcs} - set(nodes))
    if unknown:
        raise NetworkSpecError(f"undefined parents: {', '.join(unknown)}")
    try:
        dag = Dag(tuple(nodes), frozenset(arcs))
    except GraphError as e:
        raise NetworkSpecError(str(e)) from e
    return StructuralNetwork(dag, cpds)


def load_lgbn(path: Union[str, Path]) -> StructuralNetwork:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise NetworkSpecError(f"cannot read network file '{path}': {e}") from e
    return parse_lgbn(text)
