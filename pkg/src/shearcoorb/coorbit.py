"""Weighted ``L_(p, v_r)`` norms of coefficient fields and shearlet coorbit norms.

The discrete norm of a coefficient field ``F`` is
``(sum_m w_m sum_t (v_r(alpha_m) |F_m(t)|)^p (L/n)^d)^(1/p)`` with the plane
weights ``w_m`` of the parameter grid; ``p = inf`` takes the weighted maximum
over planes of positive weight. The coorbit norm of a signal is the norm of
its analysis coefficients. Definitions restrict ``p`` by an auxiliary
exponent of the test-function space; that exponent is not modelled and every
``p`` in ``[1, inf]`` is accepted.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text
from .grid import VolumeField
from .paramspace import v_r
from .transform import CoeffField, TransformConfig, analyze


class CoorbitError(ValueError):
    """Invalid norm request."""


def _check_p(p: float) -> float:
    p = float(p)
    if not (p >= 1):
        raise CoorbitError(f"p must satisfy p >= 1, got {p}")
    return p


def _check_r(r: float) -> float:
    r = float(r)
    if not (r >= 0):
        raise CoorbitError(f"r must be non-negative, got {r}")
    return r


def lpv_norm(F: CoeffField, p: float, r: float) -> float:
    """Discrete ``L_(p, v_r)(X, mu)`` norm of a coefficient field."""
    p, r = _check_p(p), _check_r(r)
    pgrid = F.pgrid
    reps, ids = F.distinct()
    if math.isinf(p):
        peaks = [float(np.max(np.abs(F.planes[m]))) for m in reps]
        vals = [v_r(pl, r) * peaks[ids[m]] for m, pl in enumerate(pgrid.planes) if pl.weight > 0]
        return max(vals, default=0.0)
    sums = [float(np.sum(np.abs(F.planes[m]) ** p)) for m in reps]
    cell = pgrid.translation_weight
    terms = [pl.weight * v_r(pl, r) ** p * sums[ids[m]] * cell for m, pl in enumerate(pgrid.planes)]
    total = math.fsum(terms)
    return total ** (1.0 / p)


def coorbit_norm(f: VolumeField, cfg: TransformConfig, p: float, r: float) -> float:
    """Coorbit norm ``||analyze(f)||_(L_(p, v_r))``."""
    _check_p(p)
    _check_r(r)
    return lpv_norm(analyze(f, cfg), p, r)


@dataclass(frozen=True)
class EmbeddingReport:
    """Norms on a ``(p, r)`` grid.

    ``monotone_in_r`` states that for every ``p`` the norms do not decrease
    as ``r`` grows. Behaviour in ``p`` is tabulated without an assertion.
    """

    p_list: tuple[float, ...]
    r_list: tuple[float, ...]
    norms: np.ndarray  # shape (len(p_list), len(r_list))
    config_hash: str

    @property
    def monotone_in_r(self) -> bool:
        order = np.argsort(np.asarray(self.r_list), kind="stable")
        cols = self.norms[:, order]
        return bool(np.all(np.diff(cols, axis=1) >= -1e-14 * np.abs(cols[:, 1:])))

    def rows(self) -> list[dict]:
        return [
            {"p": p, "r": r, "norm": float(self.norms[i, j]), "config_hash": self.config_hash}
            for i, p in enumerate(self.p_list)
            for j, r in enumerate(self.r_list)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["p", "r", "norm", "config_hash"], lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        return atomic_write_text(path, self.to_csv())


def embedding_report(f: VolumeField | CoeffField, cfg: TransformConfig, p_list: Sequence[float],
                     r_list: Sequence[float]) -> EmbeddingReport:
    """Tabulate coorbit norms for every ``(p, r)``; the analysis runs once."""
    p_list = tuple(float(p) for p in p_list)
    r_list = tuple(float(r) for r in r_list)
    if not p_list or not r_list:
        raise CoorbitError("empty request")
    for p in p_list:
        _check_p(p)
    for r in r_list:
        _check_r(r)
    F = f if isinstance(f, CoeffField) else analyze(f, cfg)
    norms = np.array([[lpv_norm(F, p, r) for r in r_list] for p in p_list])
    return EmbeddingReport(p_list, r_list, norms, cfg.config_hash)
