"""Edge sign prediction in signed social networks.

Learns, for every node, a small set of trusted peers with positive or
negative influence by minimizing a quadratic (QUBO) objective over binary
selection variables, then predicts the sign of a directed link as the sign
of the summed trusted-peer opinions.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, InternalError, ParseError, PeersignError

__all__ = [
    "ConfigError",
    "DataError",
    "InternalError",
    "ParseError",
    "PeersignError",
    "__version__",
]
