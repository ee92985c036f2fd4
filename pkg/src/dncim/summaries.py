"""Block partitioning, block summaries and their Gaussian working combination."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DomainError, NotPositiveDefinite, SingularInformation
from .models.base import Model, as_data, check_pd

COND_LIMIT = 1e12


@dataclass(frozen=True)
class BlockSummary:
    """``(n_b, theta_hat, info)`` for one block."""

    n_b: int
    theta_hat: np.ndarray
    info: np.ndarray

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        J = np.atleast_2d(np.asarray(self.info, dtype=float))
        if int(self.n_b) < 1:
            raise DomainError("block size must be positive")
        if J.shape != (th.size, th.size):
            raise DomainError(f"information shape {J.shape} does not match dimension {th.size}")
        if not np.allclose(J, J.T, rtol=1e-10, atol=0.0):
            raise NotPositiveDefinite("information matrix is not symmetric")
        check_pd(J)
        th.flags.writeable = False
        J.flags.writeable = False
        object.__setattr__(self, "n_b", int(self.n_b))
        object.__setattr__(self, "theta_hat", th)
        object.__setattr__(self, "info", J)

    @property
    def dim(self) -> int:
        return self.theta_hat.size

    def to_dict(self) -> dict:
        return {"n_b": self.n_b, "theta_hat": self.theta_hat.tolist(), "info": self.info.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BlockSummary":
        return cls(d["n_b"], d["theta_hat"], d["info"])


@dataclass(frozen=True)
class AggregatedSummary:
    """Block summaries with the combined estimator and total information."""

    blocks: tuple
    theta_check: np.ndarray = field(repr=True)
    total_info: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.theta_check.size

    @property
    def B(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(b.n_b for b in self.blocks)

    def to_dict(self) -> dict:
        return {
            "blocks": [b.to_dict() for b in self.blocks],
            "theta_check": self.theta_check.tolist(),
            "total_info": self.total_info.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AggregatedSummary":
        # recomputed rather than trusted, so a hand-edited file cannot disagree with its blocks
        return combine([BlockSummary.from_dict(b) for b in d["blocks"]])


def partition(data, B: int, rng: np.random.Generator, sizes: Sequence[int] | None = None) -> list[np.ndarray]:
    """Random split into ``B`` blocks.

    A uniform random permutation is cut into contiguous chunks whose sizes
    differ by at most one (larger chunks last).  Explicit ``sizes`` override
    the even split.
    """
    y = np.asarray(data, dtype=float)
    n = y.shape[0]
    if sizes is not None:
        sizes = [int(s) for s in sizes]
        if len(sizes) != B or sum(sizes) != n or min(sizes) < 1:
            raise DomainError(f"block sizes {sizes} do not split {n} observations into {B} blocks")
    else:
        if not 1 <= B <= n:
            raise DomainError(f"cannot split {n} observations into {B} blocks")
        base, extra = divmod(n, B)
        sizes = [base] * (B - extra) + [base + 1] * extra
    perm = y[rng.permutation(n)]
    cuts = np.cumsum(sizes)[:-1]
    return np.split(perm, cuts)


def summarize_block(model: Model, block) -> BlockSummary:
    """MLE and observed information for one block.  Failures propagate."""
    y = as_data(block)
    theta_hat, info = model.summarize(y)
    return BlockSummary(y.size, theta_hat, info)


def _summarize_task(args):
    model, block = args
    return summarize_block(model, block)


def summarize_blocks(model: Model, blocks: Sequence, workers: int = 1) -> list[BlockSummary]:
    if workers <= 1 or len(blocks) <= 1:
        return [summarize_block(model, b) for b in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_summarize_task, [(model, b) for b in blocks]))


def combine_arrays(hats: np.ndarray, infos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched information-weighted combination.

    ``hats`` has shape ``(..., B, p)`` and ``infos`` ``(..., B, p, p)``.
    Returns ``theta_check`` ``(..., p)`` and ``total_info`` ``(..., p, p)``.
    """
    total = infos.sum(axis=-3)
    rhs = np.einsum("...bij,...bj->...i", infos, hats)
    if total.shape[-1] == 1:
        t = total[..., 0, 0]
        if np.any(~(t > 0)):
            raise SingularInformation("total information is not positive")
        return rhs / total[..., 0], total
    cond = np.linalg.cond(total)
    if np.any(~(cond <= COND_LIMIT)):
        raise SingularInformation(f"total information condition number {np.max(cond):.3e} exceeds {COND_LIMIT:.0e}")
    L = np.linalg.cholesky(total)
    # forward then backward substitution through the Cholesky factor
    u = np.linalg.solve(L, rhs[..., None])
    theta = np.linalg.solve(np.swapaxes(L, -1, -2), u)[..., 0]
    return theta, total


def combine(blocks: Sequence[BlockSummary]) -> AggregatedSummary:
    """Combined estimator ``(sum J_b)^{-1} sum J_b theta_b`` and total information."""
    blocks = tuple(blocks)
    if not blocks:
        raise DomainError("need at least one block summary")
    p = blocks[0].dim
    if any(b.dim != p for b in blocks):
        raise DomainError("block summaries have different dimensions")
    # sum in a canonical order so the result does not depend on block order
    order = sorted(range(len(blocks)), key=lambda i: (blocks[i].n_b, blocks[i].theta_hat.tobytes(),
                                                       blocks[i].info.tobytes()))
    hats = np.array([blocks[i].theta_hat for i in order])
    infos = np.array([blocks[i].info for i in order])
    theta, total = combine_arrays(hats, infos)
    if len(blocks) == 1:
        theta = hats[0].copy()
    theta.flags.writeable = False
    total.flags.writeable = False
    return AggregatedSummary(blocks, theta, total)


def quadratic_form(center, info, theta) -> np.ndarray:
    """``(center - theta)' J (center - theta)`` batched over leading axes of ``theta``."""
    d = np.asarray(center, dtype=float) - np.asarray(theta, dtype=float)
    return np.einsum("...i,ij,...j->...", d, np.asarray(info, dtype=float), d)


def _theta_vec(agg: AggregatedSummary, theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    if th.ndim == 0:
        th = th[None]
    if th.shape[-1] != agg.dim:
        raise DomainError(f"parameter dimension {th.shape[-1]} does not match summary dimension {agg.dim}")
    return th


def gauss_relative_likelihood(agg: AggregatedSummary, theta):
    """Gaussian working relative likelihood ``exp(-q/2)`` with ``q`` the information quadratic form."""
    q = quadratic_form(agg.theta_check, agg.total_info, _theta_vec(agg, theta))
    out = np.exp(-0.5 * q)
    return float(out) if np.ndim(out) == 0 else out


def _check_coordinate(agg_dim: int, q: int) -> int:
    if not isinstance(q, (int, np.integer)) or not 0 <= q < agg_dim:
        raise DomainError(f"coordinate index {q!r} out of range for dimension {agg_dim}")
    return int(q)


def profile_quadratic(agg: AggregatedSummary, q: int, theta_q):
    q = _check_coordinate(agg.dim, q)
    d = agg.theta_check[q] - np.asarray(theta_q, dtype=float)
    return agg.total_info[q, q] * d * d


def profile_gauss_relative_likelihood(agg: AggregatedSummary, q: int, theta_q):
    """``exp(-(theta_check_q - theta_q)^2 J_qq / 2)`` using the diagonal entry of the total information.

    ``q`` is a zero-based coordinate index.
    """
    out = np.exp(-0.5 * profile_quadratic(agg, q, theta_q))
    return float(out) if np.ndim(out) == 0 else out
