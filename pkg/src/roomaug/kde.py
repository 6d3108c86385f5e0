"""Product-kernel density estimation over mixed continuous / ordered-discrete data.

Continuous dimensions use a Gaussian kernel, ordered-discrete dimensions the
Wang-van Ryzin kernel::

    k(x, X; lam) = 1 - lam                       if x == X
                   0.5 * (1 - lam) * lam**|x - X|  otherwise

Bandwidths default to the normal-reference rule ``1.06 * sigma * n**(-1/(4+d))``.
Densities are evaluated in log space; values far from every observation
underflow in linear space long before they lose meaning as log-likelihoods.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import DensityError

SIGMA_FLOOR = 0.01
MAX_DISCRETE_BANDWIDTH = 0.999


class VariableKind(str, Enum):
    CONTINUOUS = "c"
    ORDERED = "o"


@dataclass(frozen=True)
class DensityModel:
    observations: np.ndarray
    kinds: tuple[VariableKind, ...]
    bandwidths: np.ndarray
    dimension_labels: tuple[str, ...] = ()

    def __post_init__(self):
        obs = np.ascontiguousarray(self.observations, dtype=np.float64)
        if obs.ndim != 2 or obs.shape[0] < 1:
            raise DensityError("density needs at least one observation")
        bw = np.ascontiguousarray(self.bandwidths, dtype=np.float64).reshape(-1)
        kinds = tuple(VariableKind(k) for k in self.kinds)
        if not (obs.shape[1] == len(kinds) == len(bw)):
            raise DensityError("observations, kinds and bandwidths disagree on dimension")
        if not np.all(bw > 0) or not np.all(np.isfinite(bw)):
            raise DensityError("bandwidths must be positive")
        disc = np.array([k is VariableKind.ORDERED for k in kinds], dtype=bool)
        if np.any(bw[disc] >= 1.0):
            raise DensityError("ordered-discrete bandwidths must lie in (0, 1)")
        obs.setflags(write=False)
        bw.setflags(write=False)
        labels = tuple(self.dimension_labels) or tuple(f"x{j}" for j in range(len(kinds)))
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "bandwidths", bw)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "dimension_labels", labels)

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def d(self) -> int:
        return self.observations.shape[1]

    @property
    def discrete_mask(self) -> np.ndarray:
        return np.array([k is VariableKind.ORDERED for k in self.kinds], dtype=bool)

    def log_pdf(self, x) -> np.ndarray:
        """Log density at one query (d,) or many (q, d)."""
        q = np.asarray(x, dtype=np.float64)
        single = q.ndim == 1
        q = np.atleast_2d(q)
        if q.shape[1] != self.d:
            raise DensityError(f"query has dimension {q.shape[1]}, model has {self.d}")
        if not np.all(np.isfinite(q)):
            raise DensityError("query has non-finite values")
        out = _kernels.kde_log_pdf(q, self.observations, self.bandwidths, self.discrete_mask)
        return out[0] if single else out

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.log_pdf(x))


def normal_reference_bandwidths(samples: np.ndarray) -> np.ndarray:
    """``1.06 * sigma_j * n**(-1/(4+d))`` with sigma floored at SIGMA_FLOOR."""
    n, d = samples.shape
    sigma = np.std(samples, axis=0, ddof=1) if n > 1 else np.zeros(d)
    sigma = np.maximum(sigma, SIGMA_FLOOR)
    return 1.06 * sigma * n ** (-1.0 / (4 + d))


def fit(
    samples,
    kinds: Sequence[VariableKind | str],
    overrides: Mapping[int, float] | None = None,
    labels: Sequence[str] = (),
) -> DensityModel:
    """Fit a product-kernel density with rule-of-thumb bandwidths.

    Parameters
    ----------
    samples : (n, d) array
    kinds : per-dimension variable kinds
    overrides : optional ``{dimension: bandwidth}``; wins over the rule
    labels : optional dimension names
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise DensityError("cannot fit a density to an empty sample set")
    if not np.all(np.isfinite(x)):
        raise DensityError("samples contain non-finite values")
    kinds = tuple(VariableKind(k) for k in kinds)
    if len(kinds) != x.shape[1]:
        raise DensityError("one kind per dimension is required")
    bw = normal_reference_bandwidths(x)
    disc = np.array([k is VariableKind.ORDERED for k in kinds])
    bw[disc] = np.minimum(bw[disc], MAX_DISCRETE_BANDWIDTH)
    for j, h in (overrides or {}).items():
        if not h > 0:
            raise DensityError("bandwidth overrides must be positive")
        bw[int(j)] = float(h)
    return DensityModel(x, kinds, bw, tuple(labels))


def pdf(model: DensityModel, x) -> float:
    return float(model.pdf(np.asarray(x, dtype=float).reshape(-1)))
