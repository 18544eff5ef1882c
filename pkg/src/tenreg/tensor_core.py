"""Dense tensor primitives: unfolding, mode products, Kronecker/Khatri-Rao.

Conventions used throughout the package:

* Tensors are plain ``numpy.ndarray`` values of dtype float64.  Modes are
  numbered 0..N-1 in code (mathematical texts count 1..N).
* ``unfold(t, n)`` arranges the mode-n fibers of ``t`` as columns.  Columns
  enumerate the remaining modes in increasing mode order with the lowest
  remaining mode varying fastest.  This is the ordering under which the
  classical matricization identities hold verbatim:

  - CP:      unfold(T, n) = A_n (A_N kr ... kr A_{n+1} kr A_{n-1} kr ... kr A_1)^T
  - Tucker:  unfold(T, n) = U_n unfold(G, n) (U_N kron ... skip n ... kron U_1)^T
  - TT:      unfold(T, n) = unfold(G_n, 1) (unfold(right_part, 0) kron unfold(left_part, n-1))

  where ``kr`` is the Khatri-Rao product and ``kron`` the Kronecker product.
* ``vectorize(t)`` enumerates entries in the same order as the columns of an
  unfolding with the mode removed: the first index varies fastest
  (Fortran order).

Storage stays row-major (numpy default); only the fiber *enumeration* order
is Fortran-like, and the two never need to agree.
"""

from __future__ import annotations

import functools

import numpy as np


def _check_mode(t: np.ndarray, mode: int) -> None:
    if not 0 <= mode < t.ndim:
        raise ValueError(
            f"mode {mode} out of range for tensor of order {t.ndim}"
        )


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n unfolding (matricization) of a tensor.

    Parameters
    ----------
    t : ndarray
        Tensor of order >= 1.
    mode : int
        Mode whose fibers become the columns, 0-based.

    Returns
    -------
    ndarray
        Matrix of shape ``(t.shape[mode], prod(other dims))``.  Column j
        is the fiber obtained by fixing the remaining indices to the j-th
        combination, lowest remaining mode varying fastest.
    """
    t = np.asarray(t)
    _check_mode(t, mode)
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order="F")


def fold(m: np.ndarray, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild a tensor of ``shape`` from its
    mode-n unfolding."""
    m = np.asarray(m)
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1:]
    if m.shape != (shape[mode], int(np.prod(rest, dtype=np.int64))):
        raise ValueError(
            f"matrix of shape {m.shape} does not match mode-{mode} "
            f"unfolding of shape {shape}"
        )
    t = np.reshape(m, (shape[mode],) + rest, order="F")
    return np.moveaxis(t, 0, mode)


def mode_n_matrix_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """n-mode product ``t x_mode m``: contract mode ``mode`` of ``t`` with
    the columns of matrix ``m``.

    Satisfies ``unfold(result, mode) == m @ unfold(t, mode)``.
    """
    t = np.asarray(t)
    m = np.asarray(m)
    _check_mode(t, mode)
    if m.ndim != 2:
        raise ValueError("second operand of a mode product must be a matrix")
    if m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix with {m.shape[1]} columns cannot contract mode {mode} "
            f"of size {t.shape[mode]}"
        )
    out = np.tensordot(m, t, axes=(1, mode))
    return np.moveaxis(out, 0, mode)


def mode_n_vector_product(t: np.ndarray, v: np.ndarray, mode: int) -> np.ndarray:
    """Contract mode ``mode`` with a vector, dropping that mode."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError("expected a vector")
    out = mode_n_matrix_product(t, v[None, :], mode)
    return np.squeeze(out, axis=mode)


def multi_mode_product(t: np.ndarray, matrices, modes) -> np.ndarray:
    """Apply several mode products; matrices[i] contracts modes[i]."""
    out = np.asarray(t)
    for m, mode in zip(matrices, modes):
        out = mode_n_matrix_product(out, m, mode)
    return out


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two matrices: the block matrix ``(a_ij * b)``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("kronecker expects two matrices")
    return np.kron(a, b)


def kronecker_list(mats) -> np.ndarray:
    mats = list(mats)
    if not mats:
        raise ValueError("need at least one matrix")
    return functools.reduce(kronecker, mats)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product of two matrices with equal column
    counts: column k is ``kron(a[:, k], b[:, k])``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"column counts differ: {a.shape[1]} vs {b.shape[1]}"
        )
    out = a[:, None, :] * b[None, :, :]
    return out.reshape(a.shape[0] * b.shape[0], a.shape[1])


def khatri_rao_list(mats) -> np.ndarray:
    mats = list(mats)
    if not mats:
        raise ValueError("need at least one matrix")
    return functools.reduce(khatri_rao, mats)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Entrywise product; shapes must agree exactly."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def outer_product(vs) -> np.ndarray:
    """Outer product ``v_1 o v_2 o ... o v_K`` of one or more vectors."""
    vs = [np.asarray(v) for v in vs]
    if not vs:
        raise ValueError("need at least one vector")
    for v in vs:
        if v.ndim != 1:
            raise ValueError("outer_product expects vectors")
    return functools.reduce(np.multiply.outer, vs)


def vectorize(t: np.ndarray) -> np.ndarray:
    """Flatten with the first index varying fastest, consistent with the
    column enumeration of :func:`unfold`."""
    return np.asarray(t).flatten(order="F")


def unvectorize(v: np.ndarray, shape) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    shape = tuple(int(s) for s in shape)
    v = np.asarray(v)
    if v.size != int(np.prod(shape, dtype=np.int64)):
        raise ValueError(f"vector of size {v.size} does not fill shape {shape}")
    return np.reshape(v, shape, order="F")
