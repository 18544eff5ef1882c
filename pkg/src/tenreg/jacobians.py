"""Materialized Jacobians and finite-difference oracles.

Everything in this module exists to cross-check the efficient backward
pass in :mod:`tenreg.trl` and is only meant for tiny instances: the
functions build full Jacobian tensors ``J[o, ...] = d f(X)_o / d theta``
either numerically (central differences) or from the closed matricized
forms (Khatri-Rao / Kronecker products of the factor arrays).

The matricized forms produce a matrix whose column enumeration is fixed
by the Kronecker structure; each function documents the enumeration it
unpacks so the returned tensors are always in natural (output, *param
shape*) layout.
"""

from __future__ import annotations

import numpy as np

from .decompositions import (
    CpFactors,
    TtCores,
    TuckerFactors,
    tt_left_part,
    tt_right_part,
    tucker_reconstruct,
)
from .tensor_core import khatri_rao, khatri_rao_list, kronecker, unfold, vectorize
from .trl import TrlLayer, forward, param_list, replace_params


# ---------------------------------------------------------------------------
# numerical oracles


def finite_difference_grads(layer: TrlLayer, x, upstream, step=1e-5):
    """Central-difference gradients of ``upstream . f(x)`` for every
    parameter array (ordered as :func:`tenreg.trl.param_list`)."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    arrays = [a.copy() for a in param_list(layer)]
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(*a.shape):
            orig = a[idx]
            a[idx] = orig + step
            up = upstream @ forward(replace_params(layer, arrays), x)
            a[idx] = orig - step
            down = upstream @ forward(replace_params(layer, arrays), x)
            a[idx] = orig
            g[idx] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def finite_difference_jacobian(layer: TrlLayer, x, array_index, step=1e-5):
    """Central-difference Jacobian d f(x) / d arrays[array_index], shape
    (output_dim, *array shape*)."""
    x = np.asarray(x, dtype=np.float64)
    arrays = [a.copy() for a in param_list(layer)]
    a = arrays[array_index]
    jac = np.zeros((layer.output_dim,) + a.shape)
    for idx in np.ndindex(*a.shape):
        orig = a[idx]
        a[idx] = orig + step
        up = forward(replace_params(layer, arrays), x)
        a[idx] = orig - step
        down = forward(replace_params(layer, arrays), x)
        a[idx] = orig
        jac[(slice(None),) + idx] = (up - down) / (2.0 * step)
    return jac


def gradient_mismatch(analytic, reference, rel_tol=1e-6, abs_tol=1e-8):
    """Compare gradient arrays elementwise: relative error where the
    reference is above abs_tol, absolute error below it.  Returns a dict
    with max_rel, max_abs (over the small entries), and ok."""
    a = np.asarray(analytic, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if a.shape != r.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {r.shape}")
    diff = np.abs(a - r)
    big = np.abs(r) > abs_tol
    max_rel = float((diff[big] / np.abs(r[big])).max()) if big.any() else 0.0
    max_abs = float(diff[~big].max()) if (~big).any() else 0.0
    return {
        "max_rel": max_rel,
        "max_abs": max_abs,
        "ok": bool(max_rel < rel_tol and max_abs < abs_tol),
    }


# ---------------------------------------------------------------------------
# closed matricized forms


def cp_factor_jacobian(layer: TrlLayer, x, mode: int) -> np.ndarray:
    """Jacobian wrt input-mode CP factor ``mode`` from the product
    ``X_(n) (KR of the other input factors, descending) (A_out kr I_R)^T``.

    The product's columns enumerate (output, rank) with rank fastest;
    returns natural layout (O, I_mode, R).
    """
    w = layer.weight
    assert isinstance(w, CpFactors)
    ins, out_factor = w.factors[:-1], w.factors[-1]
    n = len(ins)
    if not 0 <= mode < n:
        raise ValueError(f"input mode {mode} out of range for order {n}")
    r = w.rank
    xn = unfold(np.asarray(x, dtype=np.float64), mode)
    if n == 1:
        others = np.ones((1, r))
    else:
        others = khatri_rao_list(
            [ins[k] for k in range(n - 1, -1, -1) if k != mode]
        )
    m = xn @ others @ khatri_rao(out_factor, np.eye(r)).T
    return m.reshape(x.shape[mode], layer.output_dim, r).transpose(1, 0, 2)


def cp_output_jacobian(layer: TrlLayer, x) -> np.ndarray:
    """Jacobian wrt the output-mode CP factor from
    ``I_O kron (vec(X)^T (KR of input factors, descending))``; natural
    layout (O, O, R)."""
    w = layer.weight
    assert isinstance(w, CpFactors)
    ins = w.factors[:-1]
    o = layer.output_dim
    z = vectorize(x) @ khatri_rao_list(list(reversed(ins)))
    m = kronecker(np.eye(o), z[None, :])
    return m.reshape(o, o, w.rank)


def tucker_first_factor_jacobian(layer: TrlLayer, x) -> np.ndarray:
    """Jacobian wrt the first input-mode Tucker factor from
    ``(core with identity in slot 0)_(last) (X_(0) kron I_{R_0})^T``;
    natural layout (O, I_0, R_0).

    Only the first input mode admits this literal form; the Kronecker
    column order matches the unfolding column order just for slot 0.
    """
    w = layer.weight
    assert isinstance(w, TuckerFactors)
    r0 = w.core.shape[0]
    mats = [np.eye(r0)] + list(w.factors[1:])
    m = tucker_reconstruct(TuckerFactors(w.core, mats))
    lhs = unfold(m, m.ndim - 1) @ kronecker(
        unfold(np.asarray(x, dtype=np.float64), 0), np.eye(r0)
    ).T
    return lhs.reshape(layer.output_dim, x.shape[0], r0)


def tucker_output_factor_jacobian(layer: TrlLayer, x) -> np.ndarray:
    """Jacobian wrt the output-mode Tucker factor from
    ``((core with identity in the output slot)_(last) vec(X))^T kron I_O``;
    the Kronecker columns enumerate (rank, output-row) with the row
    fastest.  Natural layout (O, O, R_out)."""
    w = layer.weight
    assert isinstance(w, TuckerFactors)
    k = w.core.shape[-1]
    o = layer.output_dim
    mats = list(w.factors[:-1]) + [np.eye(k)]
    t = tucker_reconstruct(TuckerFactors(w.core, mats))
    h = unfold(t, t.ndim - 1) @ vectorize(np.asarray(x, dtype=np.float64))
    m = kronecker(h[None, :], np.eye(o))
    return m.reshape(o, k, o).transpose(0, 2, 1)


def tucker_core_jacobian(layer: TrlLayer, x) -> np.ndarray:
    """Jacobian wrt the Tucker core from
    ``U_out kron vec(X projected through every input factor)^T``; the
    columns enumerate (r_out, input ranks) with the input-rank vec index
    fastest, itself enumerating the first rank fastest.  Natural layout
    (O, R_1..R_N, R_out)."""
    w = layer.weight
    assert isinstance(w, TuckerFactors)
    ins, out_factor = w.factors[:-1], w.factors[-1]
    xt = np.asarray(x, dtype=np.float64)
    for n, mat in enumerate(ins):
        xt = np.moveaxis(
            np.tensordot(mat.T, np.moveaxis(xt, n, 0), axes=(1, 0)), 0, n
        )
    o = layer.output_dim
    k = w.core.shape[-1]
    rin = w.core.shape[:-1]
    m = kronecker(out_factor, vectorize(xt)[None, :])
    # columns: r_out slow, then the input-rank tuple with the first rank
    # fastest; C-order reshape makes the last axis fastest, so expand to the
    # reversed rank tuple and flip those axes back afterwards
    j = m.reshape((o, k) + tuple(reversed(rin)))
    j = j.transpose((0, 1) + tuple(range(j.ndim - 1, 1, -1)))
    return np.moveaxis(j, 1, -1)


def tt_core_jacobian(layer: TrlLayer, x, mode: int) -> np.ndarray:
    """Jacobian wrt input-mode TT core ``mode`` assembled class by class
    from ``X_(n) ((right part sliced at the class)_​(0) kron
    (left part)_(last))^T``; its columns enumerate the two link ranks with
    the left one fastest.  Natural layout (O, R_left, I_mode, R_right)."""
    w = layer.weight
    assert isinstance(w, TtCores)
    n = len(w.cores) - 1
    if not 0 <= mode < n:
        raise ValueError(f"input mode {mode} out of range for order {n}")
    rl, i_n, rr = w.cores[mode].shape
    o = layer.output_dim
    left = tt_left_part(w, mode)
    right = tt_right_part(w, mode + 1)
    left_m = unfold(left, left.ndim - 1)
    xn = unfold(np.asarray(x, dtype=np.float64), mode)
    jac = np.zeros((o, rl, i_n, rr))
    for i in range(o):
        right_m = unfold(right[..., i], 0)
        m = xn @ kronecker(right_m, left_m).T
        jac[i] = m.reshape(i_n, rr, rl).transpose(2, 0, 1)
    return jac


def tt_output_core_jacobian(layer: TrlLayer, x) -> np.ndarray:
    """Jacobian wrt the output TT core from
    ``((left part of all input cores)_(last) vec(X)) kron I_O``; rows
    enumerate (link rank, output column) with the column fastest.  Natural
    layout (O, R_N, O, 1)."""
    w = layer.weight
    assert isinstance(w, TtCores)
    o = layer.output_dim
    rn = w.cores[-1].shape[0]
    left = tt_left_part(w, len(w.cores) - 1)
    f = unfold(left, left.ndim - 1) @ vectorize(np.asarray(x, dtype=np.float64))
    m = kronecker(f[:, None], np.eye(o))
    return m.reshape(rn, o, o).transpose(2, 0, 1)[..., None]
