from .formats import FORMATS, dumps_events, guess_format, read_events, write_events
from .sequence import EVENT_DTYPE, Event, EventSequence, validate_events
from .synthetic import (
    MovingBar,
    MovingDot,
    PixelRamp,
    SceneConfig,
    generate_synthetic,
    log_brightness,
    scene_shapes,
)
from .tensorize import (
    TensorizedWindow,
    crop,
    detensorize,
    normalize_timestamps,
    slice_window,
    tensorize,
)

__all__ = [
    "EVENT_DTYPE",
    "FORMATS",
    "Event",
    "EventSequence",
    "MovingBar",
    "MovingDot",
    "PixelRamp",
    "SceneConfig",
    "TensorizedWindow",
    "crop",
    "detensorize",
    "dumps_events",
    "generate_synthetic",
    "guess_format",
    "log_brightness",
    "normalize_timestamps",
    "read_events",
    "scene_shapes",
    "slice_window",
    "tensorize",
    "validate_events",
    "write_events",
]
