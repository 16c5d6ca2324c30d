"""Inhomogeneous shearlet transform on periodic grids in odd dimension.

Modules
-------
grid        grids, FFT conventions, phantoms, VOL files
windows     the spectral window pair, Calderon and support checks, PAIR files
paramspace  the parameter space, its discretization and weights
frame       scaling/shear matrices, operators, frame elements, group law
transform   analysis, synthesis, Parseval and reproducing checks, SCF files
kernel      reproducing kernel, discrete kernels, kernel-class estimates
coorbit     weighted norms and coorbit norms
cli         command-line front end
"""

from .grid import GridSpec, PhantomSpec, VolumeField, make_grid, make_phantom
from .paramspace import ParamPoint, build_param_grid, coarse_point
from .transform import CoeffField, TransformConfig, analyze, make_config, parseval_ratio, reproduce_check, synthesize
from .windows import SpectralWindowPair, WindowParams, default_pair

__all__ = [
    "CoeffField",
    "GridSpec",
    "ParamPoint",
    "PhantomSpec",
    "SpectralWindowPair",
    "TransformConfig",
    "VolumeField",
    "WindowParams",
    "analyze",
    "build_param_grid",
    "coarse_point",
    "default_pair",
    "make_config",
    "make_grid",
    "make_phantom",
    "parseval_ratio",
    "reproduce_check",
    "synthesize",
]

__version__ = "0.1.0"
