"""Periodic grids, spectral lattices, volume fields and test phantoms.

Conventions
-----------
The Fourier transform uses the kernel ``exp(-2*pi*i*xi.x)``. A grid with ``n``
samples per axis and period ``L`` has spatial nodes ``x_j = j*L/n`` for
``j = 0..n-1`` and the spectral lattice ``xi_k = k/L`` with ``k`` running over
the centered range ``-n/2 .. n/2-1``. Arrays are C-ordered with axis order
``(x_1, ..., x_d)``, so the last axis varies fastest.

Spectral fields are stored *centered* (the zero frequency sits at index
``n//2`` on every axis). The forward transform is the DFT scaled by
``(L/n)**d``, which makes the discrete Plancherel identity

    sum |f|^2 (L/n)^d == sum |f_hat|^2 (1/L)^d

hold exactly up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ._io import atomic_write_bytes, pack_header, unpack_header

if TYPE_CHECKING:  # pragma: no cover
    from .windows import SpectralWindowPair

VOL_MAGIC = b"SHCOVOL1"
VOL_DTYPE = "c128-le"

SPATIAL = "spatial"
SPECTRAL = "spectral"


class GridError(ValueError):
    """Invalid grid parameters or a field/grid mismatch."""


@dataclass(frozen=True)
class GridSpec:
    """A ``d``-dimensional periodic grid with ``n`` samples per axis.

    Parameters
    ----------
    d : int
        Space dimension (odd, at least 3).
    n : int
        Samples per axis (power of two, at least 8).
    L : float
        Spatial period per axis.
    """

    d: int
    n: int
    L: float

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def dx(self) -> float:
        """Spatial step ``L/n``."""
        return self.L / self.n

    @property
    def dxi(self) -> float:
        """Spectral step ``1/L``."""
        return 1.0 / self.L

    @property
    def nyquist(self) -> float:
        """``n/(2L)``; the lattice covers ``[-nyquist, nyquist)``."""
        return self.n / (2.0 * self.L)

    @property
    def cell_volume(self) -> float:
        """Spatial quadrature weight ``(L/n)**d``."""
        return self.dx**self.d

    @property
    def dual_cell_volume(self) -> float:
        """Spectral quadrature weight ``(1/L)**d``."""
        return self.dxi**self.d

    def frequencies(self, centered: bool = True) -> np.ndarray:
        """1-D spectral lattice ``k/L``.

        ``centered=True`` gives ascending order ``-n/2 .. n/2-1``; otherwise
        the FFT-natural order of :func:`numpy.fft.fftfreq`.
        """
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        if centered:
            k = np.fft.fftshift(k)
        return k / self.L

    def positions(self) -> np.ndarray:
        """1-D spatial nodes ``j*L/n``."""
        return np.arange(self.n) * self.dx

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "L": float(self.L)}


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def make_grid(d: int, n: int, L: float) -> GridSpec:
    """Validate and build a :class:`GridSpec`.

    Raises
    ------
    GridError
        ``"odd dimension required"`` for even or too small ``d``; a message
        naming the problem for a bad ``n`` or ``L``.
    """
    if isinstance(d, bool) or int(d) != d:
        raise GridError("dimension must be an integer")
    d = int(d)
    if d < 3 or d % 2 == 0:
        raise GridError("odd dimension required (d odd and >= 3)")
    if isinstance(n, bool) or int(n) != n or not _is_power_of_two(int(n)):
        raise GridError(f"samples per axis must be a power of two, got {n}")
    n = int(n)
    if n < 8:
        raise GridError(f"samples per axis must be at least 8, got {n}")
    L = float(L)
    if not np.isfinite(L) or L <= 0:
        raise GridError(f"period must be positive, got {L}")
    return GridSpec(d, n, L)


def spectral_mesh(grid: GridSpec, centered: bool = True) -> list[np.ndarray]:
    """Open (broadcastable) mesh of the spectral lattice, one array per axis."""
    xi = grid.frequencies(centered)
    out = []
    for axis in range(grid.d):
        shape = [1] * grid.d
        shape[axis] = grid.n
        out.append(xi.reshape(shape))
    return out


def translation_phase(grid: GridSpec, t, centered: bool = True) -> np.ndarray:
    """``exp(-2*pi*i*xi.t)`` on the spectral lattice (full array)."""
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size != grid.d:
        raise GridError(f"translation must have {grid.d} components")
    phase = np.ones(grid.shape, dtype=complex)
    xi = grid.frequencies(centered)
    for axis in range(grid.d):
        shape = [1] * grid.d
        shape[axis] = grid.n
        phase = phase * np.exp(-2j * np.pi * xi * t[axis]).reshape(shape)
    return phase


@dataclass(frozen=True)
class VolumeField:
    """A complex field on a grid, in the spatial or (centered) spectral domain."""

    spec: GridSpec
    values: np.ndarray
    domain: str = SPATIAL

    def __post_init__(self):
        if self.domain not in (SPATIAL, SPECTRAL):
            raise GridError(f"unknown domain tag {self.domain!r}")
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.spec.shape:
            raise GridError(
                f"field shape {values.shape} does not match grid {self.spec.shape}"
            )
        values = np.array(values, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def to_spectral(self) -> "VolumeField":
        return self if self.domain == SPECTRAL else fft_forward(self)

    def to_spatial(self) -> "VolumeField":
        return self if self.domain == SPATIAL else fft_inverse(self)

    def norm(self) -> float:
        """Continuous-normalized L2 norm (same value in either domain)."""
        w = self.spec.cell_volume if self.domain == SPATIAL else self.spec.dual_cell_volume
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * w))


def fft_forward(field: VolumeField) -> VolumeField:
    """Spatial field to centered spectral field, scaled by ``(L/n)**d``."""
    if field.domain != SPATIAL:
        raise GridError("fft_forward expects a spatial field")
    spec = field.spec
    hat = np.fft.fftshift(np.fft.fftn(field.values)) * spec.cell_volume
    return VolumeField(spec, hat, SPECTRAL)


def fft_inverse(field: VolumeField) -> VolumeField:
    """Centered spectral field back to the spatial domain."""
    if field.domain != SPECTRAL:
        raise GridError("fft_inverse expects a spectral field")
    spec = field.spec
    values = np.fft.ifftn(np.fft.ifftshift(field.values)) / spec.cell_volume
    return VolumeField(spec, values, SPATIAL)


# ---------------------------------------------------------------- phantoms

PHANTOM_KINDS = ("band-limited-annulus", "shifted-frame-element", "spectral-bump")


@dataclass(frozen=True)
class PhantomSpec:
    """Description of a synthetic test signal.

    Parameters
    ----------
    kind : str
        One of ``band-limited-annulus`` (seeded random spectrum on a band of
        ``|xi_1|`` inside a cone around the ``xi_1`` axis),
        ``shifted-frame-element`` (a translated frame element, needs a window
        pair), or ``spectral-bump`` (smooth even bump pair centered at
        ``+-center``).
    seed : int
        Seed of the random spectrum.
    band : (float, float)
        ``(xi_min, xi_max)`` along ``xi_1`` in physical frequency units.
    amplitude : float
        Overall scale of the signal.
    cone : float or None
        For the annulus: keep bins with ``max_i |xi_i| <= cone * |xi_1|``
        over the cross axes. ``None`` keeps the whole cross section.
    center, width : sequence of float
        Bump center and per-axis half widths (``spectral-bump``).
    scale, shear, translation
        Parameters of the frame element (``shifted-frame-element``); a scale
        of ``inf`` selects the coarse window.
    """

    kind: str = "band-limited-annulus"
    seed: int = 0
    band: tuple[float, float] = (0.125, 0.25)
    amplitude: float = 1.0
    cone: float | None = 0.25
    center: tuple[float, ...] | None = None
    width: tuple[float, ...] | None = None
    scale: float = 1.0
    shear: tuple[float, ...] | None = None
    translation: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise GridError(f"unknown phantom kind {self.kind!r}")
        lo, hi = (float(v) for v in self.band)
        if not (0 <= lo <= hi):
            raise GridError(f"phantom band must satisfy 0 <= xi_min <= xi_max, got {self.band}")
        object.__setattr__(self, "band", (lo, hi))


def _bump(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u, dtype=float)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(1.0 / (u[inside] ** 2 - 1.0))
    return out


def _negate_index(a: np.ndarray) -> np.ndarray:
    """``a(-k)`` on the periodic centered lattice (the -n/2 bin is its own partner)."""
    out = a
    for axis in range(a.ndim):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def make_phantom(
    spec: PhantomSpec, grid: GridSpec, pair: "SpectralWindowPair | None" = None
) -> VolumeField:
    """Generate a phantom as a spectral field with exactly the declared support.

    The annulus and bump phantoms are Hermitian in frequency, so their spatial
    representation is real up to rounding.

    Raises
    ------
    GridError
        If the declared band reaches the Nyquist frequency.
    """
    lo, hi = spec.band
    if hi >= grid.nyquist:
        raise GridError(
            f"band exceeds Nyquist: xi_max={hi} >= n/(2L)={grid.nyquist}"
        )
    mesh = spectral_mesh(grid)
    tol = 1e-9 * grid.dxi
    if spec.kind == "band-limited-annulus":
        ax1 = np.abs(mesh[0])
        mask = (ax1 >= lo - tol) & (ax1 <= hi + tol)
        if spec.cone is not None:
            cross = np.zeros(grid.shape)
            for m in mesh[1:]:
                cross = np.maximum(cross, np.abs(m))
            mask = mask & (cross <= spec.cone * ax1 + tol)
        mask = np.broadcast_to(mask, grid.shape)
        rng = np.random.default_rng(spec.seed)
        raw = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        raw = np.where(mask, raw, 0.0)
        hat = 0.5 * (raw + np.conj(_negate_index(raw)))
        hat = np.where(mask, hat, 0.0) * spec.amplitude
    elif spec.kind == "spectral-bump":
        if spec.center is None or spec.width is None:
            raise GridError("spectral-bump needs center and width")
        c = np.asarray(spec.center, float)
        w = np.asarray(spec.width, float)
        if c.size != grid.d or w.size != grid.d or np.any(w <= 0):
            raise GridError("center/width must have d components, width > 0")
        if abs(c[0]) - w[0] < lo - tol or abs(c[0]) + w[0] > hi + tol:
            raise GridError("bump support does not fit the declared band")
        plus = np.ones(grid.shape)
        minus = np.ones(grid.shape)
        for axis, m in enumerate(mesh):
            plus = plus * _bump((m - c[axis]) / w[axis])
            minus = minus * _bump((m + c[axis]) / w[axis])
        hat = spec.amplitude * (plus + minus).astype(complex)
    else:  # shifted-frame-element
        if pair is None:
            raise GridError("shifted-frame-element needs a window pair")
        from .frame import frame_element_spectral
        from .paramspace import ParamPoint

        shear = np.zeros(grid.d - 1) if spec.shear is None else np.asarray(spec.shear, float)
        trans = np.zeros(grid.d) if spec.translation is None else np.asarray(spec.translation, float)
        point = ParamPoint(float(spec.scale), shear, trans)
        hat = spec.amplitude * frame_element_spectral(point, pair, grid)
        hat = hat * translation_phase(grid, trans)
        ax1 = np.broadcast_to(np.abs(mesh[0]), grid.shape)
        outside = (ax1 < lo - tol) | (ax1 > hi + tol)
        if np.any(np.abs(hat[outside]) > 0):
            raise GridError("frame element is not supported inside the declared band")
    return VolumeField(grid, hat, SPECTRAL)


# ---------------------------------------------------------------- VOL files

def write_volume(path, field: VolumeField) -> Path:
    """Write a field in the VOL format (atomic)."""
    header = dict(field.spec.to_dict(), domain=field.domain, dtype=VOL_DTYPE)
    payload = np.ascontiguousarray(field.values, dtype="<c16").tobytes()
    return atomic_write_bytes(path, pack_header(VOL_MAGIC, header) + payload)


def read_volume(path) -> VolumeField:
    """Read a VOL file; the round trip with :func:`write_volume` is bit exact.

    Raises
    ------
    GridError
        On a malformed header, an invalid grid or a payload size mismatch.
    """
    blob = Path(path).read_bytes()
    try:
        header, offset = unpack_header(blob, VOL_MAGIC)
    except ValueError as exc:
        raise GridError(str(exc)) from exc
    missing = {"d", "n", "L", "domain", "dtype"} - set(header)
    if missing:
        raise GridError(f"malformed header: missing keys {sorted(missing)}")
    if header["dtype"] != VOL_DTYPE:
        raise GridError(f"malformed header: unsupported dtype {header['dtype']!r}")
    grid = make_grid(header["d"], header["n"], header["L"])
    expected = grid.size * 16
    payload = blob[offset:]
    if len(payload) != expected:
        raise GridError(
            f"payload size mismatch: expected {expected} bytes, found {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<c16").reshape(grid.shape)
    return VolumeField(grid, values.astype(np.complex128), header["domain"])

