"""Composite segmentation loss with analytic gradients.

The training objective is a weighted sum of focal, boundary and dice losses.
Every function here returns ``(value, grad)`` where ``grad`` is the exact
derivative of ``value`` with respect to each probability voxel, so the
module can serve as a numerical reference for any training framework.
Losses are evaluated over the whole voxel grid regardless of whether it
holds a slice or a volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import (
    DegenerateMaskError,
    DomainError,
    GeometryError,
    VoxelGrid,
    check_same_lattice,
)

EPS = 1e-7

# 6-connectivity
_FACE_STRUCTURE = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the focal, boundary and dice terms."""

    alpha: float = 3.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"loss weight {name} must be finite")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class FocalParams:
    """Focusing exponent and class balance of the focal term.

    ``alpha_balance`` weights positive voxels (negatives get ``1 - alpha``).
    ``None`` disables balancing, weighting both classes by 1.
    """

    gamma_focal: float = 2.0
    alpha_balance: float | None = 0.25

    def __post_init__(self):
        if not (math.isfinite(self.gamma_focal) and self.gamma_focal >= 0):
            raise DomainError(f"gamma_focal must be >= 0, got {self.gamma_focal!r}")
        if self.alpha_balance is not None and not 0.0 <= self.alpha_balance <= 1.0:
            raise DomainError(f"alpha_balance must lie in [0, 1], got {self.alpha_balance!r}")


def _arrays(p, g):
    if isinstance(p, VoxelGrid) and isinstance(g, VoxelGrid):
        check_same_lattice(p, g, spacing=False)
    p = np.asarray(p.data if isinstance(p, VoxelGrid) else p, dtype=np.float64)
    g = np.asarray(g.data if isinstance(g, VoxelGrid) else g).astype(bool)
    if p.shape != g.shape:
        raise GeometryError(f"dims mismatch: {p.shape} vs {g.shape}")
    return p, g


def focal_loss(p, g, params: FocalParams = FocalParams()):
    """Mean of ``-a_t (1 - p_t)**gamma * log(p_t)`` over all voxels.

    ``p`` is clamped to ``[EPS, 1 - EPS]``; the gradient is zero where the
    clamp is active.
    """
    p, g = _arrays(p, g)
    n = p.size
    gam = params.gamma_focal
    pc = np.clip(p, EPS, 1.0 - EPS)
    pt = np.where(g, pc, 1.0 - pc)
    if params.alpha_balance is None:
        at = np.ones_like(pc)
    else:
        at = np.where(g, params.alpha_balance, 1.0 - params.alpha_balance)
    q = 1.0 - pt
    log_pt = np.log(pt)
    value = float(np.sum(-at * q**gam * log_pt) / n)

    # d/dpt of -(1-pt)^g log(pt) = g (1-pt)^(g-1) log(pt) - (1-pt)^g / pt
    if gam == 0:
        d_pt = -1.0 / pt
    else:
        d_pt = gam * q ** (gam - 1) * log_pt - q**gam / pt
    grad = at * np.where(g, d_pt, -d_pt) / n
    grad = np.where((p >= EPS) & (p <= 1.0 - EPS), grad, 0.0)
    return value, grad


def dice_loss(p, g, smooth: float = 1.0):
    """``1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s)``."""
    if not smooth > 0:
        raise DomainError(f"smooth must be positive, got {smooth!r}")
    p, g = _arrays(p, g)
    gf = g.astype(np.float64)
    inter = float(np.sum(p * gf))
    union = float(np.sum(p) + np.sum(gf)) + smooth
    num = 2.0 * inter + smooth
    value = 1.0 - num / union
    grad = -(2.0 * gf * union - num) / union**2
    return value, grad


@dataclass(frozen=True, eq=False)
class SignedDistanceField(VoxelGrid):
    """Signed distance (voxel units) to the boundary of a mask.

    Negative inside, positive outside, zero on boundary voxels. When the mask
    is uniform there is no boundary; ``degenerate`` is then set and the field
    holds distances to the virtual boundary just outside the grid.
    """

    degenerate: bool = False

    def _coerce(self, arr):
        return arr.astype(np.float64)


def boundary_voxels(g: np.ndarray) -> np.ndarray:
    """Set voxels with at least one unset face neighbour inside the grid."""
    g = np.asarray(g, dtype=bool)
    eroded = ndimage.binary_erosion(g, structure=_FACE_STRUCTURE, border_value=1)
    return g & ~eroded


def signed_distance(g) -> SignedDistanceField:
    """Exact Euclidean signed distance to the mask boundary."""
    spacing = g.spacing if isinstance(g, VoxelGrid) else None
    g = np.asarray(g.data if isinstance(g, VoxelGrid) else g, dtype=bool)
    bnd = boundary_voxels(g)
    kwargs = {} if spacing is None else {"spacing": spacing}
    if bnd.any():
        # Distances are taken from the indices of the nearest boundary voxel so
        # the result is sqrt of an exact integer sum of squares.
        idx = ndimage.distance_transform_edt(~bnd, return_distances=False, return_indices=True)
        grid = np.indices(g.shape)
        dist = np.sqrt(np.sum((idx - grid) ** 2, axis=0, dtype=np.int64).astype(np.float64))
        return SignedDistanceField(np.where(g, -dist, dist) + 0.0, degenerate=False, **kwargs)

    padded = np.pad(np.ones(g.shape, dtype=bool), 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1, 1:-1]
    sign = -1.0 if g.all() else 1.0
    return SignedDistanceField(sign * dist, degenerate=True, **kwargs)


def boundary_loss(p, g, phi: SignedDistanceField | None = None):
    """Mean of ``p * phi`` where ``phi`` is the signed distance of ``g``.

    A precomputed ``phi`` may be passed to skip the distance transform.
    """
    p_arr, g_arr = _arrays(p, g)
    if phi is None:
        phi = signed_distance(g_arr)
    elif phi.dims != g_arr.shape:
        raise GeometryError(f"dims mismatch: {phi.dims} vs {g_arr.shape}")
    if phi.degenerate:
        raise DegenerateMaskError("boundary loss is undefined for a uniform ground-truth mask")
    n = p_arr.size
    grad = phi.data / n
    return float(np.sum(p_arr * grad)), grad


@dataclass(frozen=True)
class LossTerms:
    focal: float
    boundary: float
    dice: float
    total: float


def combined_loss(
    p,
    g,
    weights: LossWeights = LossWeights(),
    focal: FocalParams = FocalParams(),
    smooth: float = 1.0,
    *,
    phi: SignedDistanceField | None = None,
    terms: bool = False,
):
    """Weighted sum ``alpha*focal + beta*boundary + gamma*dice``.

    With ``terms=True`` the first element is a :class:`LossTerms` instead of
    the bare total.
    """
    l1, g1 = focal_loss(p, g, focal)
    l2, g2 = boundary_loss(p, g, phi)
    l3, g3 = dice_loss(p, g, smooth)
    total = weights.alpha * l1 + weights.beta * l2 + weights.gamma * l3
    grad = weights.alpha * g1 + weights.beta * g2 + weights.gamma * g3
    if terms:
        return LossTerms(l1, l2, l3, total), grad
    return total, grad


# -- gradient checking -------------------------------------------------------


def numerical_gradient(fn, p: np.ndarray, indices=None, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``fn`` at ``p``.

    ``indices`` restricts the check to a subset of flat voxel indices; the
    returned array has one entry per checked index.
    """
    p = np.array(p, dtype=np.float64, order="C")
    flat = p.reshape(-1)  # a view only because p is C-contiguous
    if indices is None:
        indices = range(flat.size)
    out = []
    for i in indices:
        orig = flat[i]
        flat[i] = orig + step
        fp = fn(p)
        flat[i] = orig - step
        fm = fn(p)
        flat[i] = orig
        out.append((fp - fm) / (2.0 * step))
    return np.array(out, dtype=np.float64)


def relative_error(analytic, numeric) -> float:
    """Norm-wise ``||a - n|| / max(||a||, ||n||)``; 0/0 counts as 0.

    A per-entry ratio would be dominated by cancellation noise on entries
    many orders below the largest one.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    return float(np.linalg.norm(a - n) / denom) if denom > 0 else 0.0


def gradient_check(loss_fn, p, indices=None, step: float = 1e-5) -> float:
    """Relative error between ``loss_fn``'s gradient and finite differences.

    ``loss_fn(p)`` must return ``(value, grad)``.
    """
    p = np.array(p, dtype=np.float64, order="C")
    _, grad = loss_fn(p)
    flat_idx = list(range(p.size)) if indices is None else list(indices)
    numeric = numerical_gradient(lambda x: loss_fn(x)[0], p, flat_idx, step)
    return relative_error(np.asarray(grad).reshape(-1)[flat_idx], numeric)
