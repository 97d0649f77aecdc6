"""Federated isolation-forest anomaly detection for univariate sensor data.

Clients grow isolation trees together, layer by layer: each round every
client proposes a split for the tree node it is working on, an aggregation
server averages the proposals, and the averaged value becomes the node's
split on every client. Raw readings never leave a client. A sequential
pooled-data isolation forest is included as the comparison baseline,
together with the evaluation harness and metrics used to compare them.
"""

from .data import gen_test_set, gen_training_set
from .forest import (ANOMALY, DEFAULT_THRESHOLD, NORMAL, Forest, Tree, TreeNode,
                     anomaly_score, anomaly_scores, build_iforest_baseline,
                     c_factor, classify)
from .messages import Phase, RoundMessage
from .metrics import (ConfusionMatrix, best_threshold_by_f1, confusion, f1, fpr,
                      ppv, pr_auc, pr_curve, roc_auc, roc_curve, tpr)
from .model_io import load_model, save_model
from .protocol import (build_iforest_federated, build_itree_federated,
                       client_process_layer, fl_centralized, server_aggregate_layer)
from .runner import run_federated_loopback, run_federated_tcp

__version__ = "1.0.0"

__all__ = [
    "ANOMALY", "NORMAL", "DEFAULT_THRESHOLD", "Phase", "RoundMessage",
    "Forest", "Tree", "TreeNode", "ConfusionMatrix",
    "c_factor", "classify", "anomaly_score", "anomaly_scores",
    "build_iforest_baseline", "build_iforest_federated", "build_itree_federated",
    "client_process_layer", "server_aggregate_layer", "fl_centralized",
    "run_federated_loopback", "run_federated_tcp",
    "gen_training_set", "gen_test_set",
    "confusion", "tpr", "fpr", "ppv", "f1",
    "roc_curve", "roc_auc", "pr_curve", "pr_auc", "best_threshold_by_f1",
    "load_model", "save_model",
    "__version__",
]
