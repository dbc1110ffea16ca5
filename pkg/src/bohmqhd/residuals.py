"""Masked L2 norms and the residual record shared by the checkers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def l2(values: np.ndarray, cell: float, mask: np.ndarray | None = None, lead: int = 0) -> float:
    """Grid L2 norm ``sqrt(sum |f|^2 dV)`` over points outside ``mask``.

    ``lead`` leading axes (vector components) are summed as well; the mask
    applies to the trailing grid axes.
    """
    sq = (np.abs(np.asarray(values)) ** 2).astype(np.float64)
    if lead:
        sq = sq.reshape((-1, *sq.shape[lead:])).sum(axis=0)
    if mask is not None:
        sq = np.where(mask, 0.0, sq)
    return float(np.sqrt(sq.sum() * cell))


@dataclass
class Residual:
    """Residual field of one equation with its norms.

    ``norm`` is relative (``absolute / denominator``) unless ``relative`` is
    False, which happens when the denominator sits at the numerical floor.
    ``terms`` maps each term of the equation to its norm.
    """

    field: np.ndarray
    norm: float
    absolute: float
    denominator: float
    coverage: float
    relative: bool = True
    terms: dict[str, float] = field(default_factory=dict)
    mask: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)


def make_residual(res: np.ndarray, terms: dict[str, np.ndarray], cell: float, *,
                  mask: np.ndarray | None = None, lead: int = 0,
                  denominator: tuple[str, ...] | None = None, floor: float = 1e-8) -> Residual:
    """Assemble a :class:`Residual`.

    The denominator is the largest norm among the ``denominator`` terms (all
    terms if omitted).  Below ``floor`` the absolute norm is reported instead
    and the record is flagged ``"absolute"``.
    """
    tn = {k: l2(v, cell, mask, lead) for k, v in terms.items()}
    absn = l2(res, cell, mask, lead)
    names = denominator or tuple(tn)
    den = max(tn[k] for k in names)
    total = mask.size if mask is not None else int(np.prod(res.shape[lead:]))
    cov = 100.0 * (1.0 - (np.count_nonzero(mask) / total if mask is not None else 0.0))
    flags = []
    if den < floor:
        flags.append("absolute")
        return Residual(res, absn, absn, den, cov, False, tn, mask, flags)
    return Residual(res, absn / den, absn, den, cov, True, tn, mask, flags)
