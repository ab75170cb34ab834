"""Weak-type and extrapolation ratios, and the dyadic level splitter."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError
from ..grid import GranularFunction, iterated_log
from ..maximal import ScaleRange, lacunary_maximal

_log_n = np.vectorize(iterated_log, otypes=[float])


def _orlicz(f: GranularFunction, alpha: float, eps: float | None = None) -> float:
    v = np.abs(f.values)
    nz = v[v > 0]
    if nz.size == 0:
        return 0.0
    w = nz * _log_n(3, nz / alpha)
    if eps is not None:
        w = w * _log_n(4, nz / alpha) ** (1 + eps)
    return float(w.sum()) * f.lattice.cell_area


def _level_measure(f, alpha, rng, Mf):
    Mf = lacunary_maximal(f, rng) if Mf is None else Mf
    return float(np.count_nonzero(Mf.values > alpha)) * f.lattice.cell_area


def weak_type_ratio(f: GranularFunction, alpha: float, rng: ScaleRange | None = None,
                    Mf: GranularFunction | None = None) -> float | None:
    """alpha |{Mf > alpha}| / int |f| Log^3(|f| / alpha); None when f = 0."""
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    den = _orlicz(f, alpha)
    if den == 0:
        return None
    return alpha * _level_measure(f, alpha, rng, Mf) / den


def extrapolation_ratio(f: GranularFunction, alpha: float, eps: float, rng: ScaleRange | None = None,
                        Mf: GranularFunction | None = None) -> float | None:
    """alpha |{Mf > alpha}| / int |f| Log^3(|f|/alpha) Log^4(|f|/alpha)^{1+eps}."""
    if not eps > 0:
        raise ConfigError("eps must be positive")
    den = _orlicz(f, alpha, eps)
    if den == 0:
        return None
    return alpha * _level_measure(f, alpha, rng, Mf) / den


def level_split(f: GranularFunction, alpha: float) -> list[tuple[int, GranularFunction]]:
    """Split f by the dyadic level i = floor(log2(v / alpha)) of its values, with v
    clamped to [alpha, 1] first.  The pieces carry the original values, so they
    add up to f exactly."""
    v = np.abs(f.values)
    nz = v > 0
    if not nz.any():
        return []
    clamped = np.clip(v, alpha, 1.0)
    lvl = np.full(v.shape, -1, dtype=np.int64)
    _, e = np.frexp(clamped[nz] / alpha)
    lvl[nz] = e - 1
    out = []
    for i in np.unique(lvl[nz]):
        out.append((int(i), GranularFunction(np.where(lvl == i, f.values, 0.0), f.lattice)))
    return out


def level_count_bound(alpha: float) -> float:
    """Number of possible levels divided by Log^4(1/alpha)."""
    return (math.floor(math.log2(1 / alpha)) + 1) / iterated_log(4, 1 / alpha)
