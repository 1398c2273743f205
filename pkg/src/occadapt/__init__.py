"""Feature adaptation toolkit for one-class classification on embeddings."""

from .adapt import (AdapterParams, TrainConfig, TrainLog, adapter_forward,
                    ca2_loss_and_grad, center_loss_and_grad, hard_weight,
                    init_adapter, load_adapter, save_adapter, train)
from .features import (FeatureMatrix, SyntheticSpec, gen_synthetic,
                       load_features, save_features)
from .metrics import (EvalReport, ProbeConfig, auroc, evaluate_scores,
                      fpr_at_95tpr, linear_probe)
from .neighbors import NeighborPlan, build_plan, knn_query, load_plan, save_plan
from .numeric import SgdState, cosine, l2_normalize, make_rng, sgd_step
from .scoring import ScoreResult, occ_score

from . import reference

__version__ = "0.1.0"
