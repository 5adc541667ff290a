class KdebnError(ValueError):
    """
    Base class of every error raised by the library. The CLI reports these as one-line reasons.
    """


class DataError(KdebnError):
    """Dataset ingestion, splitting or column-coverage failure."""


class GraphError(KdebnError):
    """Invalid graph construction, node-set mismatch or missing arc."""


class RejectedMove(GraphError):
    """
    Signals that a search move would introduce a cycle. Search loops catch it
    (or pre-check with Dag.can_apply) and move on.
    """


class KdeError(KdebnError):
    """Dimension mismatch, insufficient rows or singular covariance in a KDE."""


class TransferError(KdebnError):
    """Source/target variable mismatch or unknown variable in a transfer query."""


class NetworkSpecError(KdebnError):
    """Unknown synthetic network id or malformed network file."""


class StatsError(KdebnError):
    """Insufficient blocks or algorithms for a statistical comparison."""


class ConfigError(KdebnError):
    """Invalid or unresolvable experiment configuration."""
