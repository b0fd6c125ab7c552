from .network import (
    AdamHyper,
    AdamState,
    EncoderConfig,
    MultiTaskModel,
    adam_step,
    forward,
    init_model,
    loss_and_grads,
    multitask_loss,
)
from .predict import aggregate, select_heads, with_fallback
from .svm import SvmModel, fit_platt, hinge_loss, pegasos, svm_predict, svm_train
from .training import (
    EpochRecord,
    Features,
    TrainConfig,
    TrainedModel,
    head_distributions,
    predict_arrays,
    predict_hard,
    predict_soft,
    prepare_features,
    train,
)

__all__ = [
    "AdamHyper", "AdamState", "EncoderConfig", "MultiTaskModel", "adam_step", "forward", "init_model",
    "loss_and_grads", "multitask_loss", "aggregate", "select_heads", "with_fallback", "SvmModel",
    "fit_platt", "hinge_loss", "pegasos", "svm_predict", "svm_train", "EpochRecord", "Features",
    "TrainConfig", "TrainedModel", "head_distributions", "predict_arrays", "predict_hard", "predict_soft",
    "prepare_features", "train",
]
