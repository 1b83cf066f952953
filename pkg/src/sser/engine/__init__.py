from .ssrp import (
    dumps_representation,
    load_representation,
    loads_representation,
    save_representation,
    to_real,
)
from .stream import (
    EMISSION,
    RESET,
    EngineConfig,
    HiddenStateMap,
    StreamingEncoder,
    emit_representation,
    process_event,
    run_stream,
)

__all__ = [
    "EMISSION", "RESET", "EngineConfig", "HiddenStateMap", "StreamingEncoder",
    "emit_representation", "process_event", "run_stream",
    "dumps_representation", "loads_representation", "save_representation",
    "load_representation", "to_real",
]
