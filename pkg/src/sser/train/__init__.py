from .backprop import (
    GradientSet,
    LossConfig,
    QATHooks,
    backward,
    flatten,
    forward_loss,
    masked_mse_loss,
    unflatten,
)
from .optim import AdamState, adam_step
from .qat import fake_quant, fake_quant_grad
from .trainer import (
    Sample,
    TrainConfig,
    TrainResult,
    evaluate,
    load_optimizer_state,
    sample_windows,
    train_encoder,
    write_loss_csv,
)
from .ablation import (
    AXES,
    ablation_sweep,
    evaluate_quantized,
    quantized_loss,
    summarize,
    write_sweep_csv,
)
