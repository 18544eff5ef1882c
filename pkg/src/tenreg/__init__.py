"""Low-rank tensor regression layers with exact analytic gradients.

The package provides CP, Tucker, and tensor-train weight representations
for the linear map ``f(X) = W_(last) vec(X) + b``, factorized forward and
backward passes that never materialize the dense weight, the exact
rewrite of global average pooling as a Tucker TRL, bottleneck-rank and
compression analysis, IDX dataset ingestion, and a deterministic
SGD-with-momentum trainer.
"""

from .decompositions import (
    CpFactors,
    RankSpec,
    TtCores,
    TuckerFactors,
    compression_rate,
    cp_reconstruct,
    cp_unfold,
    param_count,
    random_weight,
    tt_left_part,
    tt_reconstruct,
    tt_right_part,
    tt_unfold,
    tucker_reconstruct,
    tucker_unfold,
)
from .data_io import (
    Dataset,
    SplitSpec,
    load_dataset,
    parse_idx_images,
    parse_idx_labels,
    split,
)
from .gap import GapSpec, gap_as_tucker_trl, gap_fc_as_tucker_trl, gap_forward
from .rank_analysis import (
    RankReport,
    bottleneck_rank,
    empirical_image_dim,
    rank_report,
)
from .tensor_core import (
    fold,
    hadamard,
    khatri_rao,
    kronecker,
    mode_n_matrix_product,
    mode_n_vector_product,
    outer_product,
    unfold,
    vectorize,
)
from .trainer import TrainConfig, TrainLog, evaluate, sgd_momentum_step, softmax_cross_entropy, train
from .trl import (
    TrlGradients,
    TrlLayer,
    backward,
    backward_batch,
    dense_weight,
    forward,
    forward_batch,
    load_layer,
    save_layer,
)

__version__ = "0.1.0"
