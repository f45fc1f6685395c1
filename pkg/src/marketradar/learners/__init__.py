from .base import (
    LinearModel,
    ModelError,
    NeuralNetModel,
    TrainedModel,
    TreeEnsembleModel,
    TreeNode,
    model_from_json,
    model_to_json,
    predict,
)
from .linear import ConvergenceError, fit_elastic_net, fit_lasso, fit_ols, lasso_kkt_gap
from .nn import TrainingDiverged, fit_nn, init_layers, loss_and_grads
from .params import (
    ALGORITHMS,
    BoostParams,
    ElasticNetParams,
    ForestParams,
    HyperparameterError,
    LassoParams,
    NetParams,
    OlsParams,
    default_params,
    params_from_mapping,
)
from .tree import fit_gradient_boosting, fit_random_forest, staged_training_mse

__all__ = [
    "ALGORITHMS",
    "BoostParams",
    "ConvergenceError",
    "ElasticNetParams",
    "ForestParams",
    "HyperparameterError",
    "LassoParams",
    "LinearModel",
    "ModelError",
    "NetParams",
    "NeuralNetModel",
    "OlsParams",
    "TrainedModel",
    "TrainingDiverged",
    "TreeEnsembleModel",
    "TreeNode",
    "default_params",
    "fit_elastic_net",
    "fit_gradient_boosting",
    "fit_lasso",
    "fit_nn",
    "fit_ols",
    "fit_random_forest",
    "init_layers",
    "lasso_kkt_gap",
    "loss_and_grads",
    "model_from_json",
    "model_to_json",
    "params_from_mapping",
    "predict",
    "staged_training_mse",
]
