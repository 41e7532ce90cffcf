"""Tucker and CP representations of the sixth-order coefficient tensor."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Literal, Sequence

import numpy as np
from scipy import linalg

from btar.services.tensor_ops import kron_chain, mode_multiply, unfold
from btar.utils.errors import ShapeMismatchError


@dataclass(frozen=True)
class TuckerFactors:
    """``[[core; B_1, ..., B_n]]`` with ``B_i`` of shape ``I_i x R_i``."""

    core: np.ndarray
    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.core.ndim != len(self.factors):
            raise ShapeMismatchError(
                f"core of order {self.core.ndim} needs {self.core.ndim} factors, got {len(self.factors)}"
            )
        for i, (b, r) in enumerate(zip(self.factors, self.core.shape), start=1):
            if b.ndim != 2 or b.shape[1] != r:
                raise ShapeMismatchError(f"factor {i} has shape {b.shape}, core rank is {r}")
            if r > b.shape[0]:
                raise ShapeMismatchError(f"rank {r} of mode {i} exceeds dimension {b.shape[0]}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.factors)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(self.core.shape)

    def replace(self, *, core: np.ndarray | None = None, mode: int | None = None,
                factor: np.ndarray | None = None) -> "TuckerFactors":
        """Copy with a new core and/or the factor of 1-based ``mode`` swapped."""
        factors = list(self.factors)
        if mode is not None:
            factors[mode - 1] = factor
        return TuckerFactors(core=self.core if core is None else core, factors=tuple(factors))


@dataclass(frozen=True)
class CPFactors:
    factors: tuple[np.ndarray, ...]
    rank: int = field(init=False)

    def __post_init__(self):
        ranks = {b.shape[1] for b in self.factors}
        if len(ranks) != 1:
            raise ShapeMismatchError(f"CP factors must share one rank, got {sorted(ranks)}")
        object.__setattr__(self, "rank", ranks.pop())


def superdiagonal(rank: int, order: int) -> np.ndarray:
    core = np.zeros((rank,) * order)
    for r in range(rank):
        core[(r,) * order] = 1.0
    return core


def cp_to_tucker(f: CPFactors) -> TuckerFactors:
    return TuckerFactors(core=superdiagonal(f.rank, len(f.factors)), factors=tuple(f.factors))


def tucker_reconstruct(f: TuckerFactors) -> np.ndarray:
    out = f.core
    for mode, b in enumerate(f.factors, start=1):
        out = mode_multiply(out, b, mode)
    return out


def cp_reconstruct(f: CPFactors) -> np.ndarray:
    shape = tuple(b.shape[0] for b in f.factors)
    out = np.zeros(shape)
    for r in range(f.rank):
        out += reduce(np.multiply.outer, [b[:, r] for b in f.factors])
    return out


def remaining_kron(factors: Sequence[np.ndarray], mode: int) -> np.ndarray:
    """``B_n ⊗ ... ⊗ B_{mode+1} ⊗ B_{mode-1} ⊗ ... ⊗ B_1``."""
    rest = [b for k, b in enumerate(factors, start=1) if k != mode]
    return kron_chain(rest[::-1])


def coeff_unfold(f: TuckerFactors, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding of the reconstructed tensor, ``B_i G_(i) B_{-i}'``."""
    if not 1 <= mode <= len(f.factors):
        raise ShapeMismatchError(f"mode {mode} out of range for {len(f.factors)} factors")
    return f.factors[mode - 1] @ unfold(f.core, mode) @ remaining_kron(f.factors, mode).T


def hosvd(t: np.ndarray, ranks: Sequence[int]) -> TuckerFactors:
    """Truncated higher-order SVD: per-mode leading left singular vectors."""
    if len(ranks) != t.ndim:
        raise ShapeMismatchError(f"need {t.ndim} ranks, got {len(ranks)}")
    factors = []
    for mode, r in enumerate(ranks, start=1):
        if not 1 <= r <= t.shape[mode - 1]:
            raise ShapeMismatchError(f"rank {r} invalid for mode {mode} of size {t.shape[mode - 1]}")
        u, _, _ = linalg.svd(unfold(t, mode), full_matrices=False)
        factors.append(u[:, :r])
    core = t
    for mode, u in enumerate(factors, start=1):
        core = mode_multiply(core, u.T, mode)
    return TuckerFactors(core=core, factors=tuple(factors))


def is_all_orthogonal(core: np.ndarray, tol: float = 1e-8) -> bool:
    scale = max(float(np.sum(core * core)), 1.0)
    for mode in range(1, core.ndim + 1):
        g = unfold(core, mode)
        gram = g @ g.T
        off = gram - np.diag(np.diag(gram))
        if np.max(np.abs(off), initial=0.0) > tol * scale:
            return False
    return True


def sign_normalize(f: TuckerFactors) -> TuckerFactors:
    """Make the largest-magnitude loading of every factor column positive.

    Ties go to the lowest row index. Each flip is compensated on the matching
    core slice so the reconstruction is unchanged.
    """
    core = f.core.copy()
    factors = []
    for axis, b in enumerate(f.factors):
        b = b.copy()
        for r in range(b.shape[1]):
            lead = int(np.argmax(np.abs(b[:, r])))
            if b[lead, r] < 0:
                b[:, r] = -b[:, r]
                index = [slice(None)] * core.ndim
                index[axis] = r
                core[tuple(index)] *= -1.0
        factors.append(b)
    return TuckerFactors(core=core, factors=tuple(factors))


def projection_matrix(b: np.ndarray) -> np.ndarray:
    return b @ b.T


def param_count(dims: Sequence[int], ranks: Sequence[int] | int,
                kind: Literal["tucker", "cp", "full"] = "tucker") -> int:
    """Free parameters of the coefficient tensor for response dims ``(I_1, I_2, I_3)``."""
    dims = [int(d) for d in dims]
    big_i = int(np.prod(dims))
    if kind == "full":
        return big_i * big_i
    if kind == "cp":
        rank = int(ranks) if np.isscalar(ranks) else int(ranks[0])
        return 2 * rank * sum(dims)
    if kind == "tucker":
        ranks = [int(r) for r in ranks]
        if len(ranks) != 2 * len(dims):
            raise ShapeMismatchError(f"need {2 * len(dims)} ranks, got {len(ranks)}")
        six = dims + dims
        return int(np.prod(ranks)) + sum(i * r for i, r in zip(six, ranks))
    raise ShapeMismatchError(f"unknown decomposition kind {kind!r}")
