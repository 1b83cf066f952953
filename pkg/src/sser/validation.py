"""Input-validation helpers shared by the estimator and the command line."""
import numbers

import numpy as np

from .event_io import EventSequence
from .exceptions import ConfigurationError, ValidationError


def check_event_sequence(X, name="X"):
    if not isinstance(X, EventSequence):
        raise ValidationError(f"{name} must be an EventSequence, got {type(X).__name__}")
    return X


def check_dataset(X, name="X", allow_empty=False):
    """Normalise ``X`` (one EventSequence or an iterable of them) to a list."""
    seqs = [X] if isinstance(X, EventSequence) else list(X) if X is not None else []
    for i, s in enumerate(seqs):
        if not isinstance(s, EventSequence):
            raise ValidationError(f"{name}[{i}] must be an EventSequence, got {type(s).__name__}", index=i)
    if not allow_empty and not any(len(s) for s in seqs):
        raise ConfigurationError(f"{name} contains no events")
    sizes = {(s.width, s.height) for s in seqs}
    if len(sizes) > 1:
        raise ValidationError(f"{name} mixes sensor sizes {sorted(sizes)}")
    return seqs


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_bits(bits, name="bits"):
    return check_positive_int(bits, name, 2) if bits <= 12 else _too_wide(name, bits)


def _too_wide(name, bits):
    raise ConfigurationError(f"{name} must lie in 2..12, got {bits}")


def check_dims(dims, name="dims"):
    dims = tuple(dims) if np.iterable(dims) else (dims,)
    if not dims:
        raise ConfigurationError(f"{name} must not be empty")
    return tuple(check_positive_int(d, name) for d in dims)


def check_random_state(seed):
    """Integer seed for the trainer (None -> 0, Generator -> a drawn integer)."""
    if seed is None:
        return 0
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(2**31))
    return check_positive_int(seed, "random_state", 0)
