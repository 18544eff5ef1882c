"""Global average pooling and its exact rewrite as a Tucker TRL.

A GAP head keeps one mode of the feature tensor (the channel mode) and
averages over every other mode.  The same map is a Tucker-format TRL
whose non-channel factors are averaging column vectors, whose channel and
output factors are identities, and whose core is an identity matrix
embedded in a rank tuple of ones; composing with a fully connected layer
only swaps the output factor for the FC weight and the zero bias for the
FC bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decompositions import TuckerFactors
from .trl import TrlLayer


@dataclass(frozen=True)
class GapSpec:
    """Input dims plus which mode holds channels (default: the last)."""

    input_dims: tuple
    channel_mode: int

    def __init__(self, input_dims, channel_mode=None):
        input_dims = tuple(int(d) for d in input_dims)
        if not input_dims or any(d < 1 for d in input_dims):
            raise ValueError(f"bad input dims {input_dims}")
        if channel_mode is None:
            channel_mode = len(input_dims) - 1
        channel_mode = int(channel_mode)
        if not 0 <= channel_mode < len(input_dims):
            raise ValueError(
                f"channel mode {channel_mode} out of range for "
                f"{len(input_dims)} modes"
            )
        object.__setattr__(self, "input_dims", input_dims)
        object.__setattr__(self, "channel_mode", channel_mode)

    @property
    def channel_dim(self) -> int:
        return self.input_dims[self.channel_mode]


def gap_forward(spec: GapSpec, x: np.ndarray) -> np.ndarray:
    """Per-channel mean over all non-channel modes; returns a vector of
    length channel_dim.  Reduction is numpy's pairwise summation over the
    non-channel axes in ascending order."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != spec.input_dims:
        raise ValueError(
            f"input of shape {x.shape} does not match {spec.input_dims}"
        )
    axes = tuple(
        n for n in range(len(spec.input_dims)) if n != spec.channel_mode
    )
    if not axes:
        return x.copy()
    return x.mean(axis=axes)


def _gap_core(spec: GapSpec) -> np.ndarray:
    c = spec.channel_dim
    shape = [1] * len(spec.input_dims) + [c]
    shape[spec.channel_mode] = c
    return np.eye(c).reshape(shape)


def gap_as_tucker_trl(spec: GapSpec) -> TrlLayer:
    """Tucker TRL computing exactly gap_forward: averaging vectors on the
    non-channel modes, identities on the channel and output modes, zero
    bias.  The rank tuple is all ones except channel_dim on the channel
    and output slots."""
    c = spec.channel_dim
    factors = []
    for n, d in enumerate(spec.input_dims):
        if n == spec.channel_mode:
            factors.append(np.eye(c))
        else:
            factors.append(np.full((d, 1), 1.0 / d))
    factors.append(np.eye(c))
    weight = TuckerFactors(_gap_core(spec), factors)
    return TrlLayer(weight, np.zeros(c))


def gap_fc_as_tucker_trl(spec: GapSpec, fc_weight, fc_bias) -> TrlLayer:
    """Tucker TRL computing ``fc_weight^T gap(x) + fc_bias`` in one map:
    the GAP construction with the output factor replaced by the FC weight
    (stored channel x classes) and the FC bias as layer bias."""
    fc_weight = np.asarray(fc_weight, dtype=np.float64)
    fc_bias = np.asarray(fc_bias, dtype=np.float64)
    c = spec.channel_dim
    if fc_weight.ndim != 2 or fc_weight.shape[0] != c:
        raise ValueError(
            f"fc weight of shape {fc_weight.shape} needs {c} rows"
        )
    if fc_bias.shape != (fc_weight.shape[1],):
        raise ValueError(
            f"fc bias of shape {fc_bias.shape} does not match "
            f"{fc_weight.shape[1]} outputs"
        )
    factors = []
    for n, d in enumerate(spec.input_dims):
        if n == spec.channel_mode:
            factors.append(np.eye(c))
        else:
            factors.append(np.full((d, 1), 1.0 / d))
    factors.append(fc_weight.T.copy())
    weight = TuckerFactors(_gap_core(spec), factors)
    return TrlLayer(weight, fc_bias)
