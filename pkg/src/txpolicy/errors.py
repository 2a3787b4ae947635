"""Exception types raised across the toolkit."""


class InvalidRates(ValueError):
    """Rate/loss ordering between the two transmit paths is violated."""


class BufferTooSmall(ValueError):
    """Buffer must hold at least two packets."""


class NonStochasticRow(ValueError):
    """A transition-matrix row does not sum to one."""


class OutOfRange(IndexError):
    """State or index outside the model's ranges."""


class NonPositiveRate(ValueError):
    """A rate parameter that must be positive is not."""


class InvalidSupport(ValueError):
    """Uniform-distribution support is empty or negative."""


class DimensionMismatch(ValueError):
    """Value vector length does not match the state space."""


class MissingServiceEntry(KeyError):
    """No service distribution for a (channel, size, action) combination."""


class NoConvergence(RuntimeError):
    """Fixed-point iteration did not reach tolerance within max_iter."""


class ReducibleChain(ValueError):
    """Markov chain has no unique stationary distribution."""


class ConfigError(ValueError):
    """Malformed or unsupported configuration document."""
