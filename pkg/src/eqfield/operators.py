"""Named equivariant operators: differential stencils, Green's functions,
and the diffusion smoother.

Sign and unit conventions (Gaussian units, eps0 = 1):

* ``inverse_laplacian(u)`` returns v with lap(v) = -u, the potential of a
  charge density; its kernel is 1/(4 pi r) in 3d and -ln(r)/(2 pi) in 2d.
* ``gauss_law(u)`` returns the outward Coulomb field of the density, equal
  to -grad(inverse_laplacian(u)) up to discretization error.  Divergence
  has a null space, so this is the curl-free representative.
* Green's-function operators always use the zero (free-space) boundary;
  differential stencils and diffusion follow the grid's boundary mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convolve import DIRECT, FOURIER, conv
from .fields import RuleError, TensorField, product_rule
from .grid import ZERO, Grid
from .kernels import (KernelField, delta_stencil, gaussian_diffusion,
                      gradient_stencil, inverse_r, inverse_r2, kernel_grid,
                      laplacian_stencil, log_r, sample_kernel)


@dataclass
class EquivariantOp:
    """A kernel bundled with its product rule and convolution path."""

    name: str
    kernel: KernelField
    kind: str
    l_h: int
    path: str
    boundary: str | None = None   # None: follow the input grid
    input_l: int | None = None    # None: any order the rule accepts

    def apply(self, u: TensorField) -> TensorField:
        if self.input_l is not None and u.l != self.input_l:
            raise RuleError(f"operator {self.name!r} expects l={self.input_l} input, "
                            f"got l={u.l}")
        rule = product_rule(self.kind, u.l, self.l_h, u.grid.dim)
        return conv(u, self.kernel, rule, path=self.path, boundary=self.boundary)

    def __call__(self, u: TensorField) -> TensorField:
        return self.apply(u)


def _greens_kernel_grid(grid: Grid) -> Grid:
    """Centered kernel grid spanning every displacement between field voxels."""
    return kernel_grid(tuple(2 * n - 1 for n in grid.shape), grid.spacing)


def identity_op(grid: Grid) -> EquivariantOp:
    return EquivariantOp("identity", delta_stencil(grid), "scalar", 0, DIRECT)


def grad_op(grid: Grid) -> EquivariantOp:
    return EquivariantOp("grad", gradient_stencil(grid), "scalar", 1, DIRECT, input_l=0)


def div_op(grid: Grid) -> EquivariantOp:
    return EquivariantOp("div", gradient_stencil(grid), "dot", 1, DIRECT, input_l=1)


def curl_op(grid: Grid) -> EquivariantOp:
    # conv(u, h, cross) contracts u x h, which is the negative of curl for
    # the central-difference kernel; flip the stencil so curl(u) = nabla x u.
    stencil = gradient_stencil(grid).scaled(-1.0)
    return EquivariantOp("curl", stencil, "cross", 1, DIRECT, input_l=1)


def laplacian_op(grid: Grid) -> EquivariantOp:
    return EquivariantOp("laplacian", laplacian_stencil(grid), "scalar", 0, DIRECT,
                         input_l=0)


def inverse_laplacian_op(grid: Grid) -> EquivariantOp:
    profile = inverse_r() if grid.dim == 3 else log_r()
    kernel = sample_kernel(_greens_kernel_grid(grid), profile, 0)
    return EquivariantOp("inverse_laplacian", kernel, "scalar", 0, FOURIER,
                         boundary=ZERO, input_l=0)


def gauss_law_op(grid: Grid) -> EquivariantOp:
    if grid.dim != 3:
        raise RuleError("gauss_law is defined for 3d grids only")
    kernel = sample_kernel(_greens_kernel_grid(grid), inverse_r2(), 1)
    return EquivariantOp("gauss_law", kernel, "scalar", 1, FOURIER,
                         boundary=ZERO, input_l=0)


def diffusion_op(grid: Grid, D: float, t: float) -> EquivariantOp:
    """Smoothing by the heat kernel for diffusivity D over time t.

    The sampled kernel is renormalized to unit discrete mass (sum times
    voxel volume), so total mass is conserved exactly under the periodic
    boundary; the renormalization is the voxel-quadrature factor and tends
    to 1 as the kernel width grows past the spacing.
    """
    profile = gaussian_diffusion(D, t, grid.dim)
    kernel = sample_kernel(_greens_kernel_grid(grid), profile, 0)
    mass = float(np.sum(kernel.field.components)) * grid.voxel_volume
    kernel = kernel.scaled(1.0 / mass)
    return EquivariantOp("diffusion", kernel, "scalar", 0, FOURIER)


REGISTRY = {
    "identity": identity_op,
    "grad": grad_op,
    "div": div_op,
    "curl": curl_op,
    "laplacian": laplacian_op,
    "inverse_laplacian": inverse_laplacian_op,
    "gauss_law": gauss_law_op,
    "diffusion": diffusion_op,
}


_op_cache: dict = {}


def make_operator(name: str, grid: Grid, **params) -> EquivariantOp:
    """Build a registered operator for a grid; diffusion takes D and t.

    Instances are cached per (name, grid, params): kernels are immutable, and
    Green's-function kernels are expensive enough to be worth reusing.
    """
    if name not in REGISTRY:
        raise KeyError(f"unknown operator {name!r}; registry: {sorted(REGISTRY)}")
    key = (name, grid, tuple(sorted(params.items())))
    if key not in _op_cache:
        _op_cache[key] = REGISTRY[name](grid, **params)
    return _op_cache[key]


_cached = make_operator


def grad(u: TensorField) -> TensorField:
    return _cached("grad", u.grid).apply(u)


def div(u: TensorField) -> TensorField:
    return _cached("div", u.grid).apply(u)


def curl(u: TensorField) -> TensorField:
    return _cached("curl", u.grid).apply(u)


def laplacian(u: TensorField) -> TensorField:
    return _cached("laplacian", u.grid).apply(u)


def inverse_laplacian(u: TensorField) -> TensorField:
    return _cached("inverse_laplacian", u.grid).apply(u)


def gauss_law(u: TensorField) -> TensorField:
    return _cached("gauss_law", u.grid).apply(u)


def diffusion(u: TensorField, D: float, t: float) -> TensorField:
    return _cached("diffusion", u.grid, D=float(D), t=float(t)).apply(u)
