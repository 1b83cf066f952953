from .grid import (
    gate_scale,
    max_abs_scale,
    qrange,
    quantize_symmetric,
    round_half_away,
    state_scale,
)
from .lut import ActivationLUT, build_activation_lut
from .model import (
    Q_STEPS,
    QuantizedLayer,
    QuantizedModel,
    QuantScheme,
    calibrate,
    dequantize_representation,
    div_round,
    q_encode_window,
    q_gru_step,
    q_mgu_step,
    q_stack_step,
    quantize_input,
    quantize_model,
)
from .serialization import dumps_quantized, load_quantized, loads_quantized, save_quantized
