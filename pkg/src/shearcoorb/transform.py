"""Analysis, synthesis, Parseval and reproducing checks on a periodic grid.

Analysis computes, for every plane ``(alpha, s)`` of the parameter grid, the
coefficients ``t -> <f, psi_(alpha,s,t)>`` on the spatial lattice as one
inverse FFT of ``f_hat * psi_hat_(alpha,s,0)`` (the elements are real in
frequency). Synthesis is the adjoint: it sums ``w * FFT(plane) * psi_hat``
over planes, where ``w`` is the plane's scale-cell and shear weight.

The windows are even in each frequency coordinate, so the planes of ``-a``
and ``+a`` are bit-identical. Analysis computes such planes once and lets the
enumerated entries share one array; synthesis and all reductions merge shared
entries before summing. Per-plane work runs on a thread pool; every
reduction is sequential in enumeration order with compensated summation, so
results do not depend on the worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ._io import atomic_write_bytes, pack_header, unpack_header
from .frame import check_nyquist, element_on_mesh
from .grid import SPATIAL, SPECTRAL, GridSpec, VolumeField, make_grid, spectral_mesh
from .paramspace import ParamGrid, build_param_grid
from .windows import SpectralWindowPair

SCF_MAGIC = b"SHCOSCF1"
SCF_DTYPE = "c128-le"
IN_BAND_THRESHOLD = 0.99


class TransformError(ValueError):
    """Configuration mismatch or invalid transform input."""


def pmap(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Order-preserving map, threaded when ``workers > 1``."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(fn, items))


class KahanSum:
    """Compensated elementwise accumulator for arrays (fixed call order)."""

    def __init__(self, shape, dtype=float):
        self.total = np.zeros(shape, dtype=dtype)
        self._comp = np.zeros(shape, dtype=dtype)

    def add(self, x) -> None:
        y = x - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t


def _chunks(seq: Sequence, size: int) -> Iterable[Sequence]:
    for i in range(0, len(seq), size):
        yield seq[i : i + size]


@dataclass(eq=False)
class TransformConfig:
    """Grid, window pair and parameter grid of one transform.

    Construction validates that every fine cell representative keeps the
    dilated band ``a1/|a| * (1 + margin)`` inside the lattice.
    """

    grid: GridSpec
    pair: SpectralWindowPair
    pgrid: ParamGrid
    margin: float = 0.25
    workers: int = 1
    chunk: int = 64

    def __post_init__(self):
        if self.pgrid.grid != self.grid or self.pair.d != self.grid.d:
            raise TransformError("grid, window pair and parameter grid disagree")
        if self.margin < 0:
            raise TransformError("nyquist margin must be non-negative")
        check_nyquist(math.inf, self.pair, self.grid, 0.0)
        for cell in self.pgrid.cells:
            check_nyquist(cell.rep, self.pair, self.grid, self.margin)

    @cached_property
    def config_hash(self) -> str:
        desc = {
            "grid": self.grid.to_dict(),
            "window": self.pair.params.to_dict(),
            "scales": [float(self.pair.psi.scale1), float(self.pair.psi.scale2)],
            "paramgrid": self.pgrid.describe(),
            "margin": float(self.margin),
        }
        blob = json.dumps(desc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @cached_property
    def _mesh(self) -> list[np.ndarray]:
        return spectral_mesh(self.grid, centered=False)

    @cached_property
    def element_keys(self) -> tuple[tuple, ...]:
        """Per enumerated plane, a key equal for bit-identical elements."""
        keys = []
        for pl in self.pgrid.planes:
            a = math.inf if pl.is_coarse else abs(pl.alpha)
            keys.append((a, tuple(float(v) for v in pl.shear)))
        return tuple(keys)

    @cached_property
    def unique_elements(self) -> tuple[list[int], list[int]]:
        """``(representative plane per unique element, unique id per plane)``."""
        first: dict[tuple, int] = {}
        reps: list[int] = []
        ids: list[int] = []
        for m, key in enumerate(self.element_keys):
            if key not in first:
                first[key] = len(reps)
                reps.append(m)
            ids.append(first[key])
        return reps, ids

    @property
    def weights(self) -> np.ndarray:
        return np.array([pl.weight for pl in self.pgrid.planes])

    def element(self, m: int) -> np.ndarray:
        """Real spectral element of plane ``m`` in FFT-natural order."""
        pl = self.pgrid.planes[m]
        out = element_on_mesh(pl.alpha, pl.shear, self.pair, self._mesh)
        return np.broadcast_to(out, self.grid.shape)

    def with_workers(self, workers: int) -> "TransformConfig":
        return TransformConfig(self.grid, self.pair, self.pgrid, self.margin, workers, self.chunk)

    @cached_property
    def symbol(self) -> np.ndarray:
        """Discrete frame symbol ``sum_m w_m psi_hat_m^2`` (natural order)."""
        reps, ids = self.unique_elements
        wsum = [0.0] * len(reps)
        for m, u in enumerate(ids):
            wsum[u] = math.fsum([wsum[u], self.pgrid.planes[m].weight])
        acc = KahanSum(self.grid.shape)
        order = list(range(len(reps)))
        for block in _chunks(order, self.chunk):
            parts = pmap(lambda u: wsum[u] * self.element(reps[u]) ** 2, block, self.workers)
            for p in parts:
                acc.add(p)
        out = acc.total
        out.setflags(write=False)
        return out


def make_config(grid: GridSpec, pair: SpectralWindowPair, J: int, shear_spacing, shear_radius,
                cells_per_octave: int = 1, representative: str = "midpoint",
                margin: float = 0.25, workers: int = 1) -> TransformConfig:
    pgrid = build_param_grid(J, shear_spacing, shear_radius, grid, cells_per_octave, representative)
    return TransformConfig(grid, pair, pgrid, margin, workers)


@dataclass(frozen=True, eq=False)
class CoeffField:
    """Coefficient planes in enumeration order (entries may share arrays)."""

    pgrid: ParamGrid
    planes: tuple[np.ndarray, ...] = field(repr=False)
    config_hash: str

    def __post_init__(self):
        if len(self.planes) != self.pgrid.n_planes:
            raise TransformError("plane count does not match the parameter grid")
        shape = self.pgrid.grid.shape
        for p in self.planes:
            if p.shape != shape:
                raise TransformError("plane shape does not match the signal grid")

    def distinct(self) -> tuple[list[int], list[int]]:
        """``(first index per distinct array, distinct id per plane)``."""
        first: dict[int, int] = {}
        reps, ids = [], []
        for m, arr in enumerate(self.planes):
            key = id(arr)
            if key not in first:
                first[key] = len(reps)
                reps.append(m)
            ids.append(first[key])
        return reps, ids

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "CoeffField":
        """Apply ``fn`` planewise, preserving sharing."""
        reps, ids = self.distinct()
        out = [fn(self.planes[m]) for m in reps]
        return CoeffField(self.pgrid, tuple(out[u] for u in ids), self.config_hash)

    def scaled(self, c: complex) -> "CoeffField":
        return self.map(lambda p: c * p)

    @staticmethod
    def combine(alpha: complex, F: "CoeffField", beta: complex, G: "CoeffField") -> "CoeffField":
        if F.pgrid is not G.pgrid and F.config_hash != G.config_hash:
            raise TransformError("cannot combine coefficient fields of different grids")
        planes = tuple(alpha * p + beta * q for p, q in zip(F.planes, G.planes))
        return CoeffField(F.pgrid, planes, F.config_hash)

    @staticmethod
    def zeros(cfg: TransformConfig) -> "CoeffField":
        z = np.zeros(cfg.grid.shape, dtype=complex)
        return CoeffField(cfg.pgrid, (z,) * cfg.pgrid.n_planes, cfg.config_hash)

    @staticmethod
    def random(cfg: TransformConfig, seed: int = 0) -> "CoeffField":
        rng = np.random.default_rng(seed)
        shape = cfg.grid.shape
        planes = tuple(rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
                       for _ in range(cfg.pgrid.n_planes))
        return CoeffField(cfg.pgrid, planes, cfg.config_hash)


def _spectrum_natural(f: VolumeField) -> np.ndarray:
    if f.domain == SPECTRAL:
        return np.fft.ifftshift(f.values)
    return np.fft.fftn(f.values) * f.spec.cell_volume


def _plane_from_spectrum(ghat: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``sum_xi ghat e^{2 pi i xi.t} (1/L)^d`` on the spatial lattice."""
    return np.fft.ifftn(ghat) * (grid.size * grid.dual_cell_volume)


def analyze(f: VolumeField, cfg: TransformConfig) -> CoeffField:
    """Shearlet coefficients of ``f`` on every plane of ``cfg``."""
    if f.spec != cfg.grid:
        raise TransformError("signal grid does not match the transform grid")
    fhat = _spectrum_natural(f)
    reps, ids = cfg.unique_elements
    grid = cfg.grid

    def one(u: int) -> np.ndarray:
        out = _plane_from_spectrum(fhat * cfg.element(reps[u]), grid)
        out.setflags(write=False)
        return out

    unique = pmap(one, list(range(len(reps))), cfg.workers)
    return CoeffField(cfg.pgrid, tuple(unique[u] for u in ids), cfg.config_hash)


def _merged_terms(coeffs: CoeffField, cfg: TransformConfig) -> list[tuple[int, float]]:
    """Group planes sharing both the coefficient array and the element.

    Returns ``(first plane index, summed weight)`` per group, in order of
    first appearance.
    """
    _, elem_ids = cfg.unique_elements
    _, arr_ids = coeffs.distinct()
    groups: dict[tuple[int, int], list] = {}
    for m, pl in enumerate(cfg.pgrid.planes):
        key = (arr_ids[m], elem_ids[m])
        if key not in groups:
            groups[key] = [m, []]
        groups[key][1].append(pl.weight)
    return [(m, math.fsum(w)) for m, w in groups.values()]


def synthesize_spectrum(coeffs: CoeffField, cfg: TransformConfig) -> np.ndarray:
    """Adjoint of :func:`analyze` as a spectrum in FFT-natural order."""
    if coeffs.config_hash != cfg.config_hash:
        raise TransformError("coefficient field was produced under a different configuration")
    grid = cfg.grid
    terms = _merged_terms(coeffs, cfg)

    def one(term):
        m, w = term
        spec = np.fft.fftn(coeffs.planes[m]) * grid.cell_volume
        return w * spec * cfg.element(m)

    acc = KahanSum(grid.shape, complex)
    for block in _chunks(terms, cfg.chunk):
        for part in pmap(one, block, cfg.workers):
            acc.add(part)
    return acc.total


def synthesize(coeffs: CoeffField, cfg: TransformConfig) -> VolumeField:
    """Adjoint of :func:`analyze`; for a Parseval frame ``synthesize(analyze(f)) ~ f``."""
    ghat = synthesize_spectrum(coeffs, cfg)
    values = np.fft.ifftn(ghat) / cfg.grid.cell_volume
    return VolumeField(cfg.grid, values, SPATIAL)


def coeff_inner(F: CoeffField, G: CoeffField) -> complex:
    """Discrete ``L2(X, mu)`` inner product ``sum w_m sum_t F conj(G) (L/n)^d``."""
    grid = F.pgrid.grid
    re, im = [], []
    for pl, p, q in zip(F.pgrid.planes, F.planes, G.planes):
        v = pl.weight * np.vdot(q, p) * grid.cell_volume
        re.append(v.real)
        im.append(v.imag)
    return complex(math.fsum(re), math.fsum(im))


def coeff_norm_sq(F: CoeffField) -> float:
    """``sum_m w_m sum_t |F_m|^2 (L/n)^d`` (shared planes evaluated once)."""
    grid = F.pgrid.grid
    reps, ids = F.distinct()
    energy = [float(np.sum(np.abs(F.planes[m]) ** 2)) for m in reps]
    terms = [pl.weight * energy[ids[m]] * grid.cell_volume for m, pl in enumerate(F.pgrid.planes)]
    return math.fsum(terms)


frame_energy = coeff_norm_sq


@dataclass(frozen=True)
class ParsevalResult:
    ratio: float
    energy: float
    norm_sq: float
    in_band_fraction: float
    flags: tuple[str, ...] = ()


def parseval_ratio(f: VolumeField, cfg: TransformConfig) -> ParsevalResult:
    """Discrete frame energy of ``f`` divided by ``||f||^2``.

    The energy ``sum_m w_m sum_t |<f, psi_(m,t)>|^2 (L/n)^d`` equals
    ``sum_xi |f_hat|^2 C(xi) (1/L)^d`` with the frame symbol ``C`` by the
    discrete Plancherel identity, so no coefficient planes are stored. The
    in-band fraction is the share of ``|f_hat|^2`` on bins with ``C >= 1/2``;
    below 0.99 the result carries the flag ``out-of-band``.
    """
    if f.spec != cfg.grid:
        raise TransformError("signal grid does not match the transform grid")
    power = np.abs(_spectrum_natural(f)) ** 2
    w = cfg.grid.dual_cell_volume
    norm_sq = float(np.sum(power)) * w
    if norm_sq == 0:
        return ParsevalResult(math.nan, 0.0, 0.0, math.nan, ("zero-signal",))
    C = cfg.symbol
    energy = float(np.sum(power * C)) * w
    in_band = float(np.sum(power[C >= 0.5])) * w / norm_sq
    flags = () if in_band >= IN_BAND_THRESHOLD else ("out-of-band",)
    return ParsevalResult(energy / norm_sq, energy, norm_sq, in_band, flags)


@dataclass(frozen=True)
class ReproduceResult:
    rel_error: float
    residual_norm: float
    norm: float
    flags: tuple[str, ...] = ()


def frame_kernel_residual(coeffs: CoeffField, cfg: TransformConfig) -> tuple[float, float]:
    """``(||K(F) - F||^2, ||F||^2)`` for the frame's reproducing kernel ``K``.

    ``K(F) = analyze(synthesize(F))``; the residual is accumulated plane by
    plane without storing ``K(F)``.
    """
    ghat = synthesize_spectrum(coeffs, cfg)
    grid = cfg.grid
    terms = _merged_terms(coeffs, cfg)

    def one(term):
        m = term[0]
        kf = _plane_from_spectrum(ghat * cfg.element(m), grid)
        return float(np.sum(np.abs(kf - coeffs.planes[m]) ** 2))

    parts = []
    for block in _chunks(terms, cfg.chunk):
        parts.extend(pmap(one, block, cfg.workers))
    resid = math.fsum(w * r * grid.cell_volume for (_, w), r in zip(terms, parts))
    return resid, coeff_norm_sq(coeffs)


def reproduce_check(coeffs: CoeffField, kernel_op, cfg: TransformConfig) -> ReproduceResult:
    """Relative discrete ``L2(X, mu)`` error ``||K(F) - F|| / ||F||``.

    ``kernel_op`` is a kernel from :mod:`shearcoorb.kernel`; the frame's own
    reproducing kernel is applied in factorized, streaming form.
    """
    if coeffs.config_hash != cfg.config_hash:
        raise TransformError("grid mismatch: coefficients belong to another configuration")
    if getattr(kernel_op, "is_frame_kernel", False):
        if kernel_op.cfg.config_hash != cfg.config_hash:
            raise TransformError("grid mismatch: kernel belongs to another configuration")
        resid, norm = frame_kernel_residual(coeffs, cfg)
    else:
        from .kernel import kernel_apply

        out = kernel_apply(kernel_op, coeffs)
        resid = coeff_norm_sq(CoeffField.combine(1.0, out, -1.0, coeffs))
        norm = coeff_norm_sq(coeffs)
    if norm == 0:
        return ReproduceResult(math.nan, math.sqrt(resid), 0.0, ("zero-field",))
    return ReproduceResult(math.sqrt(resid / norm), math.sqrt(resid), math.sqrt(norm))


# ------------------------------------------------------------ SCF files

def _plane_table(pgrid: ParamGrid) -> list:
    return [[None if pl.is_coarse else pl.alpha, [float(v) for v in pl.shear], pl.weight]
            for pl in pgrid.planes]


def write_scf(path, coeffs: CoeffField) -> Path:
    """Write coefficients; distinct arrays are stored once, in first-use order.

    The header's ``plane_map`` gives, per enumerated plane, the index of its
    stored block; without sharing it is the identity.
    """
    reps, ids = coeffs.distinct()
    pgrid = coeffs.pgrid
    header = {
        "config_hash": coeffs.config_hash,
        "grid": pgrid.grid.to_dict(),
        "paramgrid": pgrid.describe(),
        "planes": _plane_table(pgrid),
        "plane_map": ids,
        "n_blocks": len(reps),
        "dtype": SCF_DTYPE,
    }
    def chunks():
        yield pack_header(SCF_MAGIC, header)
        for m in reps:
            yield memoryview(np.ascontiguousarray(coeffs.planes[m], dtype="<c16")).cast("B")

    return atomic_write_bytes(path, chunks())


def read_scf(path) -> CoeffField:
    blob = Path(path).read_bytes()
    header, offset = unpack_header(blob, SCF_MAGIC)
    if header.get("dtype") != SCF_DTYPE:
        raise TransformError("unsupported coefficient dtype")
    g = header["grid"]
    grid = make_grid(g["d"], g["n"], g["L"])
    pg = header["paramgrid"]
    pgrid = build_param_grid(pg["J"], pg["shear_spacing"], pg["shear_radius"], grid,
                             pg["cells_per_octave"], pg["scale_representative"])
    if _plane_table(pgrid) != header["planes"]:
        raise TransformError("plane enumeration in file does not match its parameter grid")
    nb = int(header["n_blocks"])
    size = grid.size * 16
    if len(blob) - offset != nb * size:
        raise TransformError("payload size mismatch")
    blocks = []
    for k in range(nb):
        arr = np.frombuffer(blob, dtype="<c16", count=grid.size, offset=offset + k * size)
        arr = arr.reshape(grid.shape).astype(np.complex128, copy=False)
        arr.setflags(write=False)
        blocks.append(arr)
    planes = tuple(blocks[i] for i in header["plane_map"])
    return CoeffField(pgrid, planes, header["config_hash"])
