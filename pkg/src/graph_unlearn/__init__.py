"""Node-unlearning toolkit for two-layer GCN/SGC node classification.

Train a model, replace the targets of nodes to be forgotten (class-mean,
neighbor-mean, or class-consistent filtered neighbor-mean variants),
fine-tune briefly, and quantify forgetting with a membership-inference
attack.  Everything runs on numpy/scipy with explicit seeds.
"""

from .dataset_io import DatasetBundle, generate_synthetic, load_dataset, save_dataset
from .errors import (
    GraphUnlearnError,
    NumericError,
    ShapeError,
    UnsupportedClassError,
    ValidationError,
)
from .graph import (
    Graph,
    NormalizedAdjacency,
    SplitIndices,
    build_adjacency,
    merge_train_val,
    neighbors,
    sample_unlearning_set,
)
from .mia import (
    AttackModel,
    MiaReport,
    evaluate_mia,
    extract_features,
    run_membership_attack,
    split_attack_sets,
    train_attack,
)
from .models import (
    ForwardCache,
    ModelConfig,
    ModelParams,
    TargetTable,
    TrainReport,
    accuracy,
    gcn_backward,
    gcn_forward,
    load_checkpoint,
    masked_cross_entropy,
    model_forward,
    save_checkpoint,
    sgc_forward,
    train,
)
from .numerics import (
    AdamState,
    adam_step,
    derive_seed,
    glorot_init,
    make_rng,
    relu,
    softmax_rows,
    spmm,
)
from .unlearning import (
    ClassMeanTable,
    FineTuneConfig,
    UnlearningResult,
    class_mean_posteriors,
    clr_targets,
    cnnf_targets,
    fine_tune,
    naive_unlearn,
    retrain,
    tnmpp_targets,
)

__version__ = "0.1.0"
