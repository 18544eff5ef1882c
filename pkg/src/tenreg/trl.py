"""Tensor regression layers: f(X) = W_(last) vec(X) + b with W stored in
CP, Tucker, or TT form.

The forward pass contracts the input with the factor arrays directly
(right-to-left, so intermediates stay rank-sized) and never materializes
the dense weight.  The backward pass contracts the layer's Jacobian
structure with an upstream cotangent vector, again without materializing
anything larger than the parameter arrays themselves.

All contractions go through ``np.einsum(..., optimize=False)``; with a
fixed operand order that keeps per-sample summation order identical
between batched and single-sample evaluation, which is what makes the
batch path agree with a sample loop bit for bit.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass

import numpy as np

from .decompositions import (
    CpFactors,
    TtCores,
    TuckerFactors,
    reconstruct,
    replace_arrays,
    weight_arrays,
    weight_format,
    weight_rank_spec,
    weight_to_dict,
    weight_from_dict,
)

# subscript letters for mode axes; i/o/q/r/s/z are reserved for the batch,
# rank, and output axes in the hand-written einsum strings below
_MODE_LETTERS = "".join(
    c for c in string.ascii_lowercase if c not in "ioqrsz"
)[:18]


def _einsum(*args):
    return np.einsum(*args, optimize=False)


@dataclass(frozen=True)
class TrlLayer:
    """A decomposed weight tensor over (input_dims..., output_dim) plus a
    bias vector of length output_dim."""

    weight: object
    bias: np.ndarray

    def __init__(self, weight, bias):
        weight_format(weight)  # raises on foreign types
        if len(weight.shape) < 2:
            raise ValueError(
                "TRL weight needs at least one input mode and one output mode"
            )
        bias = np.asarray(bias, dtype=np.float64)
        if bias.ndim != 1 or bias.shape[0] != weight.shape[-1]:
            raise ValueError(
                f"bias of shape {bias.shape} does not match output dimension "
                f"{weight.shape[-1]}"
            )
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def input_dims(self) -> tuple:
        return self.weight.shape[:-1]

    @property
    def output_dim(self) -> int:
        return self.weight.shape[-1]

    @property
    def format(self) -> str:
        return weight_format(self.weight)

    @property
    def rank_spec(self):
        return weight_rank_spec(self.weight)


@dataclass(frozen=True)
class TrlGradients:
    """Cotangents for every parameter array; ``weight`` reuses the layer's
    container type so shapes mirror the parameters one for one."""

    weight: object
    bias: np.ndarray
    x: object = None


def _check_batch(layer: TrlLayer, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    want = layer.input_dims
    if xs.ndim != len(want) + 1 or xs.shape[1:] != want:
        raise ValueError(
            f"batch of shape {xs.shape} does not match input dims {want}"
        )
    return xs


# ---------------------------------------------------------------------------
# forward


def _cp_contract(factors, xs):
    """Contract a batch with the input-mode factors, keeping the rank axis.

    Returns (S, R).  ``factors`` are the input-mode factor matrices.
    """
    y = _einsum("...i,ir->...r", xs, factors[-1])
    for mat in reversed(factors[:-1]):
        y = _einsum("...ir,ir->...r", y, mat)
    return y


def _tucker_project(xs, factors, skip: int = -1):
    """Contract each input mode with its factor transpose (x_n U_n^T),
    optionally leaving mode ``skip`` untouched.  Batch axis leads."""
    y = xs
    for n, mat in enumerate(factors):
        if n == skip:
            continue
        y = np.moveaxis(y, n + 1, -1)
        y = _einsum("...i,ir->...r", y, mat)
        y = np.moveaxis(y, -1, n + 1)
    return y


def _tucker_core_contract(core, y):
    """Contract projected inputs (S, R_1..R_N) with the core over all input
    ranks, leaving (S, R_out)."""
    n = core.ndim - 1
    if n > len(_MODE_LETTERS):
        raise ValueError(f"tensor order {n} beyond supported range")
    modes = _MODE_LETTERS[:n]
    return _einsum(f"s{modes},{modes}z->sz", y, core)


def _tt_sweep(cores, xs):
    """Left-to-right TT contraction over the input modes; returns (S, R_N)."""
    b = xs[:, None]
    for core in cores[:-1]:
        b = _einsum("riq,sri...->sq...", core, b)
    return b


def forward_batch(layer: TrlLayer, xs: np.ndarray) -> np.ndarray:
    """Apply the layer to a batch with leading sample axis; returns the
    (S, output_dim) logit matrix.  Row s is bit-identical to
    ``forward(layer, xs[s])``."""
    xs = _check_batch(layer, xs)
    w = layer.weight
    if isinstance(w, CpFactors):
        z = _cp_contract(w.factors[:-1], xs)
        out = _einsum("sr,or->so", z, w.factors[-1])
    elif isinstance(w, TuckerFactors):
        y = _tucker_project(xs, w.factors[:-1])
        h = _tucker_core_contract(w.core, y)
        out = _einsum("sz,oz->so", h, w.factors[-1])
    else:
        b = _tt_sweep(w.cores, xs)
        out = _einsum("ro,sr->so", w.cores[-1][:, :, 0], b)
    return out + layer.bias


def forward(layer: TrlLayer, x: np.ndarray) -> np.ndarray:
    """Apply the layer to a single input tensor; returns a vector of
    length output_dim."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != layer.input_dims:
        raise ValueError(
            f"input of shape {x.shape} does not match input dims "
            f"{layer.input_dims}"
        )
    return forward_batch(layer, x[None])[0]


def dense_weight(layer: TrlLayer) -> np.ndarray:
    """Dense reconstruction of the decomposed weight (debug/oracle path)."""
    return reconstruct(layer.weight)


# ---------------------------------------------------------------------------
# backward


def _cp_backward(w: CpFactors, xs, ups, with_x):
    ins, out_factor = w.factors[:-1], w.factors[-1]
    n = len(ins)
    z = _cp_contract(ins, xs)                       # (S, R)
    wr = _einsum("or,so->sr", out_factor, ups)      # (S, R)
    grads = []
    for mode in range(n):
        y = np.moveaxis(xs, mode + 1, 1)
        rest = [ins[m] for m in range(n) if m != mode]
        if rest:
            y = _einsum("...i,ir->...r", y, rest[-1])
            for mat in reversed(rest[:-1]):
                y = _einsum("...ir,ir->...r", y, mat)
        else:
            y = y[..., None] * np.ones(w.rank)
        grads.append(_einsum("sir,sr->ir", y, wr))
    grads.append(_einsum("so,sr->or", ups, z))
    gx = None
    if with_x:
        t = wr
        for mat in reversed(ins):
            t = _einsum("s...r,ir->si...r", t, mat)
        gx = t.sum(axis=-1)
    return CpFactors(grads), gx


def _tucker_backward(w: TuckerFactors, xs, ups, with_x):
    ins, out_factor = w.factors[:-1], w.factors[-1]
    n = len(ins)
    y = _tucker_project(xs, ins)                    # (S, R_1..R_N)
    h = _tucker_core_contract(w.core, y)            # (S, R_out)
    ut = _einsum("oz,so->sz", out_factor, ups)      # (S, R_out)
    modes = _MODE_LETTERS[:n]
    core_grad = _einsum(f"s{modes},sz->{modes}z", y, ut)
    d = _einsum(f"{modes}z,sz->s{modes}", w.core, ut)   # (S, R_1..R_N)
    factor_grads = []
    for mode in range(n):
        part = _tucker_project(xs, ins, skip=mode)  # i at slot `mode`
        left = modes[:mode] + "i" + modes[mode + 1:]
        right = modes[:mode] + "r" + modes[mode + 1:]
        factor_grads.append(_einsum(f"s{left},s{right}->ir", part, d))
    factor_grads.append(_einsum("so,sz->oz", ups, h))
    gx = None
    if with_x:
        g = d
        for mode, mat in enumerate(ins):
            g = np.moveaxis(g, mode + 1, -1)
            g = _einsum("...r,ir->...i", g, mat)
            g = np.moveaxis(g, -1, mode + 1)
        gx = g
    return TuckerFactors(core_grad, factor_grads), gx


def _tt_backward(w: TtCores, xs, ups, with_x):
    cores = w.cores
    n = len(cores) - 1
    parts = [xs[:, None]]                           # B_k: (S, R_k, I_{k+1}..)
    for core in cores[:-1]:
        parts.append(_einsum("riq,sri...->sq...", core, parts[-1]))
    last = cores[-1][:, :, 0]                       # (R_N, O)
    grads = [None] * (n + 1)
    grads[n] = _einsum("sr,so->ro", parts[n], ups)[:, :, None]
    suffix = _einsum("ro,so->sr", last, ups)        # (S, R_N)
    for k in range(n - 1, -1, -1):
        # trailing input modes are summed, so they need explicit letters
        tail = _MODE_LETTERS[: n - k - 1]
        grads[k] = _einsum(f"sri{tail},sq{tail}->riq", parts[k], suffix)
        suffix = _einsum("riq,sq...->sri...", cores[k], suffix)
    gx = suffix[:, 0] if with_x else None
    return TtCores(grads), gx


def backward_batch(layer: TrlLayer, xs, upstream, with_input_grad=False):
    """Accumulated parameter cotangents for a batch.

    ``upstream`` has shape (S, output_dim) and holds dLoss/dlogits; the
    returned gradients are summed over the batch.  When
    ``with_input_grad`` is set the per-sample input cotangents (same shape
    as ``xs``) are included.
    """
    xs = _check_batch(layer, xs)
    ups = np.asarray(upstream, dtype=np.float64)
    if ups.shape != (xs.shape[0], layer.output_dim):
        raise ValueError(
            f"upstream of shape {ups.shape} does not match "
            f"({xs.shape[0]}, {layer.output_dim})"
        )
    w = layer.weight
    if isinstance(w, CpFactors):
        wgrad, gx = _cp_backward(w, xs, ups, with_input_grad)
    elif isinstance(w, TuckerFactors):
        wgrad, gx = _tucker_backward(w, xs, ups, with_input_grad)
    else:
        wgrad, gx = _tt_backward(w, xs, ups, with_input_grad)
    return TrlGradients(weight=wgrad, bias=ups.sum(axis=0), x=gx)


def backward(layer: TrlLayer, x, upstream, with_input_grad=False):
    """Parameter cotangents for one sample: contracts the layer's Jacobians
    with ``upstream`` (length output_dim).  The bias cotangent is
    ``upstream`` itself; the input cotangent, when requested, equals the
    dense ``W_(last)^T upstream`` reshaped to the input dims."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != layer.input_dims:
        raise ValueError(
            f"input of shape {x.shape} does not match input dims "
            f"{layer.input_dims}"
        )
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (layer.output_dim,):
        raise ValueError(
            f"upstream of shape {upstream.shape} does not match output "
            f"dimension {layer.output_dim}"
        )
    g = backward_batch(layer, x[None], upstream[None], with_input_grad)
    return TrlGradients(
        weight=g.weight,
        bias=g.bias,
        x=None if g.x is None else g.x[0],
    )


# ---------------------------------------------------------------------------
# parameter plumbing shared by trainer and gradient checks


def param_list(layer: TrlLayer) -> tuple:
    """All trainable arrays: weight arrays in storage order, then bias."""
    return weight_arrays(layer.weight) + (layer.bias,)


def param_names(layer: TrlLayer) -> tuple:
    fmt = layer.format
    if fmt == "cp":
        names = [f"factor_{n}" for n in range(len(layer.weight.factors))]
    elif fmt == "tucker":
        names = ["core"] + [
            f"factor_{n}" for n in range(len(layer.weight.factors))
        ]
    else:
        names = [f"core_{n}" for n in range(len(layer.weight.cores))]
    return tuple(names) + ("bias",)


def replace_params(layer: TrlLayer, arrays) -> TrlLayer:
    """Rebuild the layer from replacement arrays (see :func:`param_list`)."""
    arrays = tuple(arrays)
    return TrlLayer(
        weight=replace_arrays(layer.weight, arrays[:-1]),
        bias=arrays[-1],
    )


def grad_list(grads: TrlGradients) -> tuple:
    return weight_arrays(grads.weight) + (grads.bias,)


# ---------------------------------------------------------------------------
# checkpoint serialization


def layer_to_dict(layer: TrlLayer) -> dict:
    return {
        "version": 1,
        "kind": "trl-layer",
        "weight": weight_to_dict(layer.weight),
        "bias": [float(b) for b in layer.bias],
    }


def layer_from_dict(obj) -> TrlLayer:
    if obj.get("kind") != "trl-layer" or obj.get("version") != 1:
        raise ValueError("not a recognized layer checkpoint")
    return TrlLayer(
        weight=weight_from_dict(obj["weight"]),
        bias=np.asarray(obj["bias"], dtype=np.float64),
    )


def save_layer(layer: TrlLayer, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(layer_to_dict(layer), fh)


def load_layer(path) -> TrlLayer:
    with open(path, "r", encoding="utf-8") as fh:
        return layer_from_dict(json.load(fh))
