"""CP, Tucker, and tensor-train weight representations.

Each representation stores the parameter arrays of a decomposed tensor and
knows how to reconstruct the dense tensor, how to produce its mode-n
unfolding directly from the factors (without materializing the dense
tensor), and how many parameters it holds.  No fitting algorithms live
here; factors are produced by random initialization and trained by
gradient descent elsewhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .tensor_core import (
    khatri_rao_list,
    kronecker,
    kronecker_list,
    mode_n_matrix_product,
    unfold,
)

FORMATS = ("cp", "tucker", "tt")


def _as_float_array(a, name: str, ndim: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got {a.ndim}")
    return a


@dataclass(frozen=True)
class CpFactors:
    """Sum of R rank-one terms: factor n has shape (I_n, R)."""

    factors: tuple

    def __init__(self, factors):
        factors = tuple(_as_float_array(f, "CP factor", 2) for f in factors)
        if not factors:
            raise ValueError("CP representation needs at least one factor")
        rank = factors[0].shape[1]
        if rank < 1:
            raise ValueError("CP rank must be at least 1")
        for f in factors:
            if f.shape[1] != rank:
                raise ValueError(
                    "all CP factors must share one column count, got "
                    f"{[f.shape for f in factors]}"
                )
        object.__setattr__(self, "factors", factors)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def shape(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)


@dataclass(frozen=True)
class TuckerFactors:
    """Core of shape (R_1..R_N) with factor n of shape (I_n, R_n)."""

    core: np.ndarray
    factors: tuple

    def __init__(self, core, factors):
        factors = tuple(
            _as_float_array(f, "Tucker factor", 2) for f in factors
        )
        core = np.asarray(core, dtype=np.float64)
        if core.ndim != len(factors):
            raise ValueError(
                f"core of order {core.ndim} does not match "
                f"{len(factors)} factors"
            )
        for n, f in enumerate(factors):
            if core.shape[n] != f.shape[1]:
                raise ValueError(
                    f"core dimension {n} is {core.shape[n]} but factor {n} "
                    f"has {f.shape[1]} columns"
                )
            if f.shape[1] > f.shape[0]:
                warnings.warn(
                    f"Tucker rank {f.shape[1]} exceeds dimension "
                    f"{f.shape[0]} on mode {n}; the extra columns only add "
                    "redundancy",
                    stacklevel=3,
                )
        if min(core.shape, default=0) < 1:
            raise ValueError("Tucker ranks must be at least 1")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def rank(self) -> tuple:
        return self.core.shape

    @property
    def shape(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)


@dataclass(frozen=True)
class TtCores:
    """Chain of order-3 cores; core n has shape (R_{n-1}, I_n, R_n) with
    boundary ranks R_0 = R_N = 1."""

    cores: tuple

    def __init__(self, cores):
        cores = tuple(_as_float_array(c, "TT core", 3) for c in cores)
        if not cores:
            raise ValueError("TT representation needs at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("TT boundary ranks must both equal 1")
        for a, b in zip(cores, cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError(
                    f"adjacent TT cores disagree on the link rank: "
                    f"{a.shape} -> {b.shape}"
                )
        object.__setattr__(self, "cores", cores)

    @property
    def rank(self) -> tuple:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def shape(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)


@dataclass(frozen=True)
class RankSpec:
    """Rank hyperparameters for one format.

    ``values`` is a single integer for CP, an N-tuple for a Tucker tensor
    of order N, and an (N+1)-tuple with boundary 1s for a TT tensor of
    order N.
    """

    format: str
    values: object

    def __init__(self, format: str, values):
        format = str(format).lower()
        if format not in FORMATS:
            raise ValueError(f"unknown format {format!r}; expected {FORMATS}")
        if format == "cp":
            values = int(values)
            if values < 1:
                raise ValueError("CP rank must be at least 1")
        else:
            values = tuple(int(v) for v in values)
            if any(v < 1 for v in values):
                raise ValueError("rank entries must be at least 1")
            if format == "tt":
                if len(values) < 3:
                    raise ValueError(
                        "TT rank tuple needs at least 3 entries "
                        "(boundaries included)"
                    )
                if values[0] != 1 or values[-1] != 1:
                    raise ValueError(
                        f"TT boundary ranks must be 1, got {values}"
                    )
        object.__setattr__(self, "format", format)
        object.__setattr__(self, "values", values)

    def order(self) -> int:
        """Tensor order this spec describes, or None for CP (any order)."""
        if self.format == "cp":
            return None
        if self.format == "tucker":
            return len(self.values)
        return len(self.values) - 1


# ---------------------------------------------------------------------------
# reconstruction and factor-side unfoldings


def cp_reconstruct(f: CpFactors) -> np.ndarray:
    """Dense tensor of a CP representation: sum of rank-one outer products."""
    n = len(f.factors)
    operands = []
    for mode, mat in enumerate(f.factors):
        operands.append(mat)
        operands.append([mode, n])
    return np.einsum(*operands, list(range(n)))


def cp_unfold(f: CpFactors, mode: int) -> np.ndarray:
    """Mode-n unfolding straight from the factors:
    ``A_n (A_N kr ... kr A_{n+1} kr A_{n-1} kr ... kr A_1)^T``."""
    n = len(f.factors)
    if not 0 <= mode < n:
        raise ValueError(f"mode {mode} out of range for order {n}")
    if n == 1:
        return f.factors[0] @ np.ones((f.rank, 1), dtype=np.float64)
    others = [f.factors[k] for k in range(n - 1, -1, -1) if k != mode]
    return f.factors[mode] @ khatri_rao_list(others).T


def tucker_reconstruct(f: TuckerFactors) -> np.ndarray:
    """Dense tensor of a Tucker representation: core times each factor."""
    out = f.core
    for mode, mat in enumerate(f.factors):
        out = mode_n_matrix_product(out, mat, mode)
    return out


def tucker_unfold(f: TuckerFactors, mode: int) -> np.ndarray:
    """Mode-n unfolding straight from core and factors:
    ``U_n unfold(G, n) (U_N kron ... skip n ... kron U_1)^T``."""
    n = len(f.factors)
    if not 0 <= mode < n:
        raise ValueError(f"mode {mode} out of range for order {n}")
    if n == 1:
        return f.factors[0] @ unfold(f.core, 0)
    others = [f.factors[k] for k in range(n - 1, -1, -1) if k != mode]
    return f.factors[mode] @ unfold(f.core, mode) @ kronecker_list(others).T


def tt_reconstruct(f: TtCores) -> np.ndarray:
    """Dense tensor of a TT representation: entry (i_1..i_N) is the chained
    product of the cores' index-i_n slices."""
    out = f.cores[0][0]
    for core in f.cores[1:]:
        out = np.tensordot(out, core, axes=(-1, 0))
    return out[..., 0]


def tt_left_part(f: TtCores, k: int) -> np.ndarray:
    """Contraction of the leading k cores, shape (I_1..I_k, R_k).

    k = 0 yields the empty product, a one-vector of shape (1,).
    """
    n = len(f.cores)
    if not 0 <= k <= n:
        raise ValueError(f"left part takes 0..{n} cores, got {k}")
    out = np.ones((1,), dtype=np.float64)
    for core in f.cores[:k]:
        out = np.tensordot(out, core, axes=(-1, 0))
    return out


def tt_right_part(f: TtCores, k: int) -> np.ndarray:
    """Contraction of the cores after position k, shape (R_k, I_{k+1}..I_N).

    k = N yields the empty product, a one-vector of shape (1,).
    """
    n = len(f.cores)
    if not 0 <= k <= n:
        raise ValueError(f"right part starts after core 0..{n}, got {k}")
    out = np.ones((1,), dtype=np.float64)
    for core in reversed(f.cores[k:]):
        out = np.tensordot(core, out, axes=(-1, 0))
    return out


def tt_unfold(f: TtCores, mode: int) -> np.ndarray:
    """Mode-n unfolding straight from the cores:
    ``unfold(G_n, 1) (unfold(right, 0) kron unfold(left, last))``.

    No transpose on the Kronecker factor: the two part matrices already
    carry ranks on rows and index combinations on columns, and the
    Kronecker product keeps both enumerations (left fastest) aligned with
    the unfolding's column order and the core unfolding's column order.
    """
    n = len(f.cores)
    if not 0 <= mode < n:
        raise ValueError(f"mode {mode} out of range for order {n}")
    left = tt_left_part(f, mode)
    right = tt_right_part(f, mode + 1)
    left_m = unfold(left, left.ndim - 1)
    right_m = unfold(right, 0)
    return unfold(f.cores[mode], 1) @ kronecker(right_m, left_m)


# ---------------------------------------------------------------------------
# parameter accounting


def param_count(spec: RankSpec, dims) -> int:
    """Number of stored parameters for a weight tensor of the given dims
    (bias excluded)."""
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ValueError(f"dimensions must be positive, got {dims}")
    if spec.format == "cp":
        return int(spec.values) * sum(dims)
    if spec.format == "tucker":
        if len(spec.values) != len(dims):
            raise ValueError(
                f"Tucker rank tuple of length {len(spec.values)} does not "
                f"match {len(dims)} dimensions"
            )
        core = int(np.prod(spec.values, dtype=np.int64))
        return core + sum(d * r for d, r in zip(dims, spec.values))
    if len(spec.values) != len(dims) + 1:
        raise ValueError(
            f"TT rank tuple needs {len(dims) + 1} entries for "
            f"{len(dims)} dimensions, got {len(spec.values)}"
        )
    r = spec.values
    return sum(r[i] * dims[i] * r[i + 1] for i in range(len(dims)))


def compression_rate(spec: RankSpec, dims) -> float:
    """Dense parameter count divided by the decomposition's count."""
    dims = tuple(int(d) for d in dims)
    dense = int(np.prod(dims, dtype=np.int64))
    return dense / param_count(spec, dims)


# ---------------------------------------------------------------------------
# construction helpers shared by the trainer, the CLI, and tests


def random_weight(spec: RankSpec, dims, rng, std: float = 0.1):
    """Draw a weight representation with N(0, std^2) entries.

    Arrays are drawn in the storage order reported by
    :func:`weight_arrays` so a fixed generator state yields a fixed weight.
    """
    dims = tuple(int(d) for d in dims)
    if spec.format == "cp":
        r = int(spec.values)
        return CpFactors([rng.normal(0.0, std, (d, r)) for d in dims])
    if spec.format == "tucker":
        if len(spec.values) != len(dims):
            raise ValueError(
                f"Tucker rank arity {len(spec.values)} != order {len(dims)}"
            )
        core = rng.normal(0.0, std, spec.values)
        factors = [
            rng.normal(0.0, std, (d, r)) for d, r in zip(dims, spec.values)
        ]
        return TuckerFactors(core, factors)
    if len(spec.values) != len(dims) + 1:
        raise ValueError(
            f"TT rank arity {len(spec.values)} != order+1 {len(dims) + 1}"
        )
    r = spec.values
    cores = [
        rng.normal(0.0, std, (r[i], dims[i], r[i + 1]))
        for i in range(len(dims))
    ]
    return TtCores(cores)


def zero_weight(spec: RankSpec, dims):
    """All-zero weight representation with the spec's shapes."""

    class _Zero:
        def normal(self, loc, scale, size):
            return np.zeros(size, dtype=np.float64)

    return random_weight(spec, dims, _Zero(), std=0.0)


def weight_format(w) -> str:
    if isinstance(w, CpFactors):
        return "cp"
    if isinstance(w, TuckerFactors):
        return "tucker"
    if isinstance(w, TtCores):
        return "tt"
    raise TypeError(f"not a weight representation: {type(w).__name__}")


def weight_rank_spec(w) -> RankSpec:
    fmt = weight_format(w)
    return RankSpec(fmt, w.rank)


def weight_arrays(w) -> tuple:
    """Parameter arrays of a representation in canonical storage order
    (Tucker: core first, then factors; CP/TT: factors/cores in mode order)."""
    fmt = weight_format(w)
    if fmt == "cp":
        return w.factors
    if fmt == "tucker":
        return (w.core,) + w.factors
    return w.cores


def replace_arrays(w, arrays):
    """Rebuild a representation of the same kind from replacement arrays
    (shapes must match :func:`weight_arrays` output)."""
    fmt = weight_format(w)
    arrays = tuple(np.asarray(a, dtype=np.float64) for a in arrays)
    old = weight_arrays(w)
    if len(arrays) != len(old):
        raise ValueError(f"expected {len(old)} arrays, got {len(arrays)}")
    for a, b in zip(arrays, old):
        if a.shape != b.shape:
            raise ValueError(f"array shape {a.shape} != expected {b.shape}")
    if fmt == "cp":
        return CpFactors(arrays)
    if fmt == "tucker":
        return TuckerFactors(arrays[0], arrays[1:])
    return TtCores(arrays)


def reconstruct(w) -> np.ndarray:
    fmt = weight_format(w)
    if fmt == "cp":
        return cp_reconstruct(w)
    if fmt == "tucker":
        return tucker_reconstruct(w)
    return tt_reconstruct(w)


# ---------------------------------------------------------------------------
# checkpoint serialization (versioned JSON-friendly dicts)

SERIAL_VERSION = 1


def _array_to_obj(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _array_from_obj(obj) -> np.ndarray:
    a = np.asarray(obj["data"], dtype=np.float64)
    return a.reshape([int(s) for s in obj["shape"]])


def weight_to_dict(w) -> dict:
    """JSON-ready description of a weight representation (exact float64
    round trip; see :func:`weight_from_dict`)."""
    return {
        "version": SERIAL_VERSION,
        "format": weight_format(w),
        "arrays": [_array_to_obj(a) for a in weight_arrays(w)],
    }


def weight_from_dict(obj):
    version = obj.get("version")
    if version != SERIAL_VERSION:
        raise ValueError(
            f"unsupported serialization version {version!r}; "
            f"expected {SERIAL_VERSION}"
        )
    fmt = obj["format"]
    arrays = [_array_from_obj(o) for o in obj["arrays"]]
    if fmt == "cp":
        return CpFactors(arrays)
    if fmt == "tucker":
        return TuckerFactors(arrays[0], arrays[1:])
    if fmt == "tt":
        return TtCores(arrays)
    raise ValueError(f"unknown format {fmt!r} in checkpoint")
