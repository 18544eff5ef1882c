"""Bottleneck ranks, image-dimension bounds, and compression reports.

For a TRL the single rank entry adjacent to the output mode (CP's R,
Tucker's last rank, TT's next-to-last link) caps the dimension of the
layer's image: stacking bias-free outputs of any number of inputs gives a
matrix of rank at most that entry.  ``empirical_image_dim`` measures the
achieved dimension by numerical rank of sampled outputs, which for random
(generic) factors meets the cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decompositions import RankSpec, compression_rate, param_count
from .trl import TrlLayer, forward_batch


def bottleneck_rank(spec: RankSpec, output_dim: int) -> int:
    """The rank entry adjacent to the output mode of an order-(N+1) weight:
    CP's R, Tucker's last entry, TT's next-to-last interior entry."""
    output_dim = int(output_dim)
    if output_dim < 1:
        raise ValueError("output dimension must be positive")
    if spec.format == "cp":
        return int(spec.values)
    if spec.format == "tucker":
        return int(spec.values[-1])
    return int(spec.values[-2])


def empirical_image_dim(layer: TrlLayer, num_samples: int, seed: int) -> int:
    """Numerical rank of the matrix stacking ``f(x) - b`` over
    ``num_samples`` seeded standard-normal inputs.

    Tolerance is the usual ``max(rows, cols) * eps * sigma_max``.  An
    all-zero weight gives 0.
    """
    num_samples = int(num_samples)
    spec = layer.rank_spec
    needed = layer.output_dim + bottleneck_rank(spec, layer.output_dim)
    if num_samples < needed:
        raise ValueError(
            f"need at least output_dim + bottleneck = {needed} samples "
            f"so the rank is not sample-limited; got {num_samples}"
        )
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((num_samples,) + layer.input_dims)
    stacked = forward_batch(layer, xs) - layer.bias
    if not np.any(stacked):
        return 0
    svals = np.linalg.svd(stacked, compute_uv=False)
    tol = max(stacked.shape) * np.finfo(np.float64).eps * svals[0]
    return int(np.count_nonzero(svals > tol))


@dataclass(frozen=True)
class RankReport:
    """Summary of one rank configuration against a dense weight."""

    format: str
    rank: object
    dims: tuple
    bottleneck_rank: int
    image_dim_upper_bound: int
    param_count: int
    compression_rate: float
    expressiveness_warning: bool

    def to_dict(self) -> dict:
        rank = self.rank
        return {
            "format": self.format,
            "rank": rank if isinstance(rank, int) else list(rank),
            "dims": list(self.dims),
            "bottleneck_rank": self.bottleneck_rank,
            "image_dim_upper_bound": self.image_dim_upper_bound,
            "param_count": self.param_count,
            "compression_rate": round(self.compression_rate, 1),
            "expressiveness_warning": self.expressiveness_warning,
        }


def rank_report(spec: RankSpec, dims) -> RankReport:
    """Bottleneck, parameter count, and compression rate for a weight of
    the given dims (last entry is the output dimension).  The
    expressiveness flag marks bottlenecks below the output dimension,
    where the layer cannot produce full-dimensional logits."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ValueError("dims must include at least one input mode and the output mode")
    output_dim = dims[-1]
    bneck = bottleneck_rank(spec, output_dim)
    params = param_count(spec, dims)
    return RankReport(
        format=spec.format,
        rank=spec.values,
        dims=dims,
        bottleneck_rank=bneck,
        image_dim_upper_bound=min(bneck, output_dim),
        param_count=params,
        compression_rate=compression_rate(spec, dims),
        expressiveness_warning=bneck < output_dim,
    )


def gap_report(dims) -> dict:
    """Compression summary for a GAP+FC head over the same dims: the head
    stores only the channel x classes FC weight."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 3:
        raise ValueError(
            "GAP needs at least one pooled mode, a channel mode, and the "
            "output dimension"
        )
    dense = int(np.prod(dims, dtype=np.int64))
    params = dims[-2] * dims[-1]
    return {
        "format": "gap",
        "rank": None,
        "dims": list(dims),
        "bottleneck_rank": min(dims[-2], dims[-1]),
        "image_dim_upper_bound": min(dims[-2], dims[-1]),
        "param_count": params,
        "compression_rate": round(dense / params, 1),
        "expressiveness_warning": dims[-2] < dims[-1],
    }
