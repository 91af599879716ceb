"""Runtime property checks: equivariance, linearity, path equivalence,
calculus identities.  Used by the CLI check command and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convolve import DIRECT, FOURIER, conv
from .fields import TensorField, rotate_field, supported_rules
from .grid import PERIODIC, ZERO, Grid
from .kernels import gaussian, kernel_grid, sample_kernel
from .operators import curl, div, grad, laplacian
from .rotations import all_rotations

EQUIVARIANCE_TOL = 1e-10
LINEARITY_TOL = 1e-10
PATH_TOL = 1e-10
CALCULUS_TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.deviation < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} deviation={self.deviation:.3e} tol={self.tolerance:.1e}"


def all_passed(results) -> bool:
    return all(r.passed for r in results)


def _relative(diff: TensorField, ref: TensorField) -> float:
    scale = ref.max_abs()
    if scale == 0.0:
        return diff.max_abs()
    return diff.max_abs() / scale


def compatible_rotations(grid: Grid) -> list:
    """Lattice rotations that map the grid's index box onto itself."""
    out = []
    for rot in all_rotations(grid.dim):
        ok = True
        for i in range(grid.dim):
            j = int(np.argmax(np.abs(rot.matrix[i])))
            if grid.shape[i] != grid.shape[j]:
                ok = False
                break
        if ok:
            out.append(rot)
    return out


def _check_kernel(grid: Grid, l_h: int, corrupt: bool = False):
    """Smooth test kernel for property checks, capped at 9 voxels per axis."""
    kshape = tuple(min(2 * n - 1, 9) for n in grid.shape)
    kern = sample_kernel(kernel_grid(kshape, grid.spacing),
                         gaussian(2.0 * min(grid.spacing)), l_h)
    if corrupt:
        comps = kern.field.components.copy()
        bump = tuple([0] + [1] * grid.dim)
        comps[bump] += 0.1 * max(np.max(np.abs(comps)), 1.0)
        kern = type(kern)(TensorField(kern.grid, l_h, comps), l_h, kern.kind)
    return kern


def check_equivariance(u: TensorField, corrupt: bool = False) -> list:
    """rot(conv(u, h)) = conv(rot u, h) for every compatible rotation.

    The kernel is the same on both sides: a radial profile times a solid
    harmonic is exactly steerable, so rotating it reproduces itself.  A
    kernel without that symmetry (the corrupt control) must fail here.
    """
    results = []
    rots = compatible_rotations(u.grid)
    for rule in supported_rules(u.grid.dim):
        if rule.l_u != u.l:
            continue
        kern = _check_kernel(u.grid, rule.l_h, corrupt)
        ref = conv(u, kern, rule)
        worst = 0.0
        for rot in rots:
            left = rotate_field(ref, rot)
            right = conv(rotate_field(u, rot), kern, rule)
            worst = max(worst, _relative(left - right, ref))
        results.append(CheckResult(
            f"equivariance {rule.kind}({rule.l_u},{rule.l_h})->{rule.l_v}"
            f" [{len(rots)} rotations]", worst, EQUIVARIANCE_TOL))
    return results


def check_linearity(u: TensorField, rng: np.random.Generator) -> list:
    results = []
    v = TensorField.random(u.grid, u.l, rng)
    alpha, beta = 0.7, -1.3
    for rule in supported_rules(u.grid.dim):
        if rule.l_u != u.l:
            continue
        kern = _check_kernel(u.grid, rule.l_h)
        combined = conv(u * alpha + v * beta, kern, rule)
        separate = conv(u, kern, rule) * alpha + conv(v, kern, rule) * beta
        results.append(CheckResult(
            f"linearity {rule.kind}({rule.l_u},{rule.l_h})->{rule.l_v}",
            _relative(combined - separate, combined), LINEARITY_TOL))
    return results


def check_path_equivalence(u: TensorField) -> list:
    results = []
    for rule in supported_rules(u.grid.dim):
        if rule.l_u != u.l:
            continue
        kern = _check_kernel(u.grid, rule.l_h)
        worst = 0.0
        for boundary in (ZERO, PERIODIC):
            d = conv(u, kern, rule, path=DIRECT, boundary=boundary)
            f = conv(u, kern, rule, path=FOURIER, boundary=boundary)
            worst = max(worst, _relative(d - f, d))
        results.append(CheckResult(
            f"path_equivalence {rule.kind}({rule.l_u},{rule.l_h})->{rule.l_v}",
            worst, PATH_TOL))
    return results


def _interior(values: np.ndarray, margin: int) -> np.ndarray:
    sl = (slice(None),) + tuple(slice(margin, -margin) for _ in values.shape[1:])
    return values[sl]


def check_calculus(grid: Grid, rng: np.random.Generator) -> list:
    """curl(grad f) = 0, div(curl v) = 0 (3d), div(grad f) = laplacian f."""
    results = []
    f = TensorField.random(grid, 0, rng)
    margin = 2
    g = grad(f)
    scale = g.max_abs() / min(grid.spacing)

    dg = div(g)
    lap = laplacian(f)
    dev = np.max(np.abs(_interior((dg - lap).components, margin)))
    ref = max(np.max(np.abs(_interior(lap.components, margin))), 1e-300)
    results.append(CheckResult("div(grad f) = laplacian f (interior)",
                               dev / ref, CALCULUS_TOL))

    cg = curl(g)
    dev = np.max(np.abs(_interior(cg.components, margin)))
    results.append(CheckResult("curl(grad f) = 0 (interior)",
                               dev / max(scale, 1e-300), CALCULUS_TOL))

    if grid.dim == 3:
        v = TensorField.random(grid, 1, rng)
        dc = div(curl(v))
        vscale = v.max_abs() / min(grid.spacing) ** 2
        dev = np.max(np.abs(_interior(dc.components, margin)))
        results.append(CheckResult("div(curl v) = 0 (interior)",
                                   dev / max(vscale, 1e-300), CALCULUS_TOL))
    return results


def run_checks(u: TensorField, rng: np.random.Generator | None = None,
               corrupt: bool = False) -> list:
    """Full property suite on one field; corrupt=True is the negative
    control that breaks the radial symmetry of the equivariance kernels."""
    if rng is None:
        rng = np.random.default_rng(0)
    results = []
    results += check_equivariance(u, corrupt=corrupt)
    results += check_linearity(u, rng)
    results += check_path_equivalence(u)
    results += check_calculus(u.grid, rng)
    return results
