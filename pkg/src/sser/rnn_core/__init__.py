from .cells import (
    GATE_NAMES,
    KINDS,
    STEPS,
    CellParams,
    StateVec,
    affine,
    cell_step,
    gru_step,
    init_cell,
    lstm_step,
    mgu_step,
    rnn_step,
    sigmoid,
)
from .model import (
    DecoderModel,
    EncoderModel,
    decode,
    encode_sequence,
    encode_window,
    init_decoder,
    init_encoder,
    stack_step,
)
from .serialization import dumps_model, load_model, loads_model, save_model

__all__ = [
    "GATE_NAMES", "KINDS", "STEPS", "CellParams", "DecoderModel", "EncoderModel",
    "StateVec", "affine", "cell_step", "decode", "dumps_model", "encode_sequence",
    "encode_window", "gru_step", "init_cell", "init_decoder", "init_encoder",
    "load_model", "loads_model", "lstm_step", "mgu_step", "rnn_step", "save_model",
    "sigmoid", "stack_step",
]
