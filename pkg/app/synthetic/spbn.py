from typing import Callable, Dict

from domain.errors import NetworkSpecError
from synthetic.networks import LinearTerm, MixtureComponent, NodeCpd, StructuralNetwork


def _t(coefficient: float, *factors: str) -> LinearTerm:
    return LinearTerm(coefficient, tuple(factors))


def _c(weight: float, std: float, *terms: LinearTerm) -> MixtureComponent:
    return MixtureComponent(weight, tuple(terms), std)


def _g(std: float, *terms: LinearTerm) -> MixtureComponent:
    return _c(1.0, std, *terms)


def _net(**nodes: tuple) -> StructuralNetwork:
    return StructuralNetwork.from_cpds({n: NodeCpd(n, comps) for n, comps in nodes.items()})


def spbn1() -> StructuralNetwork:
    return _net(
        a=(_g(2, _t(3)),),
        b=(_g(2, _t(0.5, "a")),),
        c=(_c(0.45, 1.5, _t(0.5, "a")), _c(0.55, 1, _t(5))),
        d=(_c(0.5, 1, _t(0.5, "c", "b")), _c(0.5, 1, _t(3.5))),
        e=(_c(0.5, 1, _t(1, "d"), _t(1, "c")), _c(0.5, 1, _t(2))),
        f=(_c(0.5, 1, _t(1, "e"), _t(1, "d")), _c(0.5, 0.5, _t(0.7, "a"))),
        g=(_g(2, _t(0.3, "c")),),
    )


def spbn2() -> StructuralNetwork:
    return _net(
        a=(_g(1.5, _t(4)),),
        b=(_c(0.4, 1.1, _t(1.2, "a")), _c(0.6, 1, _t(1))),
        c=(_c(0.5, 1.2, _t(1, "a"), _t(1)), _c(0.5, 1, _t(1))),
        d=(_g(1.3, _t(0.8, "a")),),
        e=(_c(0.6, 1.3, _t(1.2, "c")), _c(0.4, 1.5, _t(-1))),
        f=(_c(0.5, 1, _t(1.1, "c"), _t(1, "h")), _c(0.5, 1.2, _t(15))),
        g=(_c(0.5, 1, _t(0.8, "d"), _t(1, "j")), _c(0.5, 1, _t(0))),
        h=(_c(0.6, 1.2, _t(2, "d")), _c(0.4, 1.8, _t(0))),
        i=(_g(2, _t(0.6, "b")),),
        j=(_g(1.7, _t(0.7, "e")),),
        k=(_g(2, _t(0.3, "f")),),
        l=(_c(0.5, 1, _t(1, "a"), _t(1, "c"), _t(1, "f")), _c(0.5, 1.5, _t(0.6, "h"), _t(1, "d"))),
        m=(_c(0.4, 1.2, _t(1, "b"), _t(1, "e"), _t(1, "g")), _c(0.6, 1.3, _t(0.7, "j"))),
    )


def spbn3() -> StructuralNetwork:
    return _net(
        a=(_c(0.5, 2, _t(4)), _c(0.5, 1, _t(1))),
        b=(_g(2, _t(0.5, "a")),),
        c=(_g(1.5, _t(2, "b")),),
        d=(_c(0.5, 1, _t(1, "b"), _t(-1)), _c(0.5, 1.5, _t(10))),
        e=(_c(0.5, 1.5, _t(2, "d")), _c(0.5, 1, _t(3))),
        f=(_c(0.6, 1.5, _t(1.5, "d")), _c(0.4, 1, _t(0))),
        g=(_g(1, _t(0.3, "c"), _t(5)),),
        h=(_c(0.5, 1, _t(0.5, "c")), _c(0.5, 1, _t(10))),
    )


def spbn4() -> StructuralNetwork:
    return _net(
        a=(_g(2, _t(5)),),
        b=(_g(1.5, _t(1, "a"), _t(2)),),
        c=(_c(0.4, 1, _t(1, "a"), _t(2)), _c(0.6, 1.5, _t(1))),
        d=(_c(0.5, 1.5, _t(0.8, "b")), _c(0.5, 1.5, _t(15))),
        e=(_g(2, _t(0.7, "c")),),
        f=(_c(0.5, 1.5, _t(1.2, "c")), _c(0.5, 1, _t(-3))),
        g=(_c(0.6, 1, _t(1, "d"), _t(4)), _c(0.4, 1.5, _t(8))),
        h=(_g(2, _t(0.4, "d")),),
        i=(_c(0.55, 2, _t(1.3, "e")), _c(0.45, 1, _t(0))),
        j=(_g(2, _t(0.5, "e")),),
        k=(_g(2.5, _t(0.5, "d")),),
        l=(_c(0.5, 1.1, _t(0.3, "h")), _c(0.5, 1.4, _t(5))),
        m=(_c(0.6, 1, _t(1.5, "j")), _c(0.4, 1.5, _t(7))),
        n=(_c(0.4, 1.2, _t(1.1, "j")), _c(0.6, 1.3, _t(-1))),
        o=(_c(0.3, 1.4, _t(1, "f"), _t(1)), _c(0.7, 0.7, _t(-2))),
    )


SPBNS: Dict[int, Callable[[], StructuralNetwork]] = {1: spbn1, 2: spbn2, 3: spbn3, 4: spbn4}


def build_spbn(network_id: int) -> StructuralNetwork:
    """
    One of the four synthetic semiparametric networks used in the experiments.
    Args:
        network_id (int): 1, 2, 3 or 4.
    Returns:
        StructuralNetwork: The exact structural equations of that network.
    """
    try:
        return SPBNS[int(network_id)]()
    except (KeyError, ValueError, TypeError):
        raise NetworkSpecError(f"unknown synthetic network id '{network_id}' (expected 1-4)") from None
