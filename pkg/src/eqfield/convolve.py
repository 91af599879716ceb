"""Tensor-field convolution: direct path for compact stencils, Fourier path
for long-range kernels.

A tensor convolution decomposes into scalar convolutions of component
fields weighted by the product-expansion coefficients C_mnp:

    v[p] = sum_{m,n} C_mnp (u[m] * h[n]) * voxel_volume

where * is the discrete convolution (kernel indexed by r - r~) and the
voxel-volume factor makes the sum approximate the continuum integral.
The coefficient tables are defined here independently of the pointwise
product implementations in ``fields`` and are cross-checked against them
in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .fields import (FieldError, ProductRule, RuleError, TensorField,
                     components_for, l2_basis)
from .grid import PERIODIC, ZERO, Grid
from .kernels import STENCIL, KernelField

DIRECT = "direct"
FOURIER = "fourier"


def rule_coefficients(rule: ProductRule, dim: int) -> np.ndarray:
    """Expansion coefficients C_mnp with (u (x) h)[p] = sum C_mnp u[m] h[n]."""
    c_u = components_for(rule.l_u, dim)
    c_h = components_for(rule.l_h, dim)
    c_v = components_for(rule.l_v, dim)
    coeff = np.zeros((c_u, c_h, c_v))
    if rule.kind == "scalar":
        if rule.l_u == 0:
            coeff[0] = np.eye(c_h)
        else:
            coeff[:, 0, :] = np.eye(c_u)
    elif rule.kind == "dot":
        scale = 2.0 if rule.l_u == 2 else 1.0
        coeff[:, :, 0] = scale * np.eye(c_u)
    elif rule.kind == "cross" and rule.l_v == 0:
        coeff[0, 1, 0] = 1.0
        coeff[1, 0, 0] = -1.0
    elif rule.kind == "cross":
        eps = np.zeros((3, 3, 3))
        for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            eps[i, j, k] = 1.0
            eps[i, k, j] = -1.0
        coeff = eps
    elif rule.kind == "matvec":
        # v_p = sum_m c_m (B_m h)_p = sum_{m,n} c_m B_m[p,n] h_n
        coeff = np.transpose(l2_basis(), (0, 2, 1))
    else:
        raise RuleError(f"unknown product kind {rule.kind!r}")
    return coeff


@dataclass
class ConvPlan:
    rule: ProductRule
    path: str
    boundary: str
    coefficients: np.ndarray


def make_plan(u: TensorField, kernel: KernelField, rule: ProductRule,
              path: str | None = None, boundary: str | None = None) -> ConvPlan:
    dim = u.grid.dim
    if kernel.grid.dim != dim:
        raise FieldError("field and kernel dimensions differ")
    for a in range(dim):
        hu, hk = u.grid.spacing[a], kernel.grid.spacing[a]
        if abs(hu - hk) > 1e-12 * max(hu, hk):
            raise FieldError(f"field and kernel spacing differ on axis {a}: {hu} vs {hk}")
    if rule.l_u != u.l:
        raise RuleError(f"rule expects input order {rule.l_u}, field has l={u.l}")
    if rule.l_h != kernel.l_h:
        raise RuleError(f"rule expects kernel order {rule.l_h}, kernel has l={kernel.l_h}")
    if path is None:
        path = DIRECT if kernel.kind == STENCIL else FOURIER
    if path not in (DIRECT, FOURIER):
        raise ValueError(f"path must be direct|fourier, got {path!r}")
    if boundary is None:
        boundary = u.grid.boundary
    return ConvPlan(rule, path, boundary, rule_coefficients(rule, dim))


def conv(u: TensorField, kernel: KernelField, rule: ProductRule,
         path: str | None = None, boundary: str | None = None) -> TensorField:
    """Tensor-field convolution with automatic path selection.

    Stencil kernels go through the direct path, sampled kernels through the
    Fourier path unless overridden.
    """
    plan = make_plan(u, kernel, rule, path, boundary)
    if plan.path == DIRECT:
        return conv_direct(u, kernel, plan)
    return conv_fourier(u, kernel, plan)


def _shifted(arr: np.ndarray, shift, boundary: str) -> np.ndarray:
    """out[r] = arr[r - shift] with zero fill or periodic wrap.

    The leading component axis is untouched; ``shift`` is per spatial axis.
    """
    spatial = arr.shape[1:]
    if boundary == PERIODIC:
        return np.roll(arr, tuple(int(s) for s in shift), axis=tuple(range(1, arr.ndim)))
    out = np.zeros_like(arr)
    dst = [slice(None)]
    src = [slice(None)]
    for n, s in zip(spatial, shift):
        s = int(s)
        lo_d, hi_d = max(s, 0), n + min(s, 0)
        if lo_d >= hi_d:
            return out
        dst.append(slice(lo_d, hi_d))
        src.append(slice(lo_d - s, hi_d - s))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def conv_direct(u: TensorField, kernel: KernelField, plan: ConvPlan) -> TensorField:
    """Direct-space convolution, O(N * kernel support)."""
    karr = kernel.field.components
    coeff = plan.coefficients
    kcenter = ((np.asarray(kernel.grid.shape) - 1) // 2)
    c_v = coeff.shape[2]
    out = np.zeros((c_v,) + u.grid.shape)
    nonzero = np.argwhere(np.any(karr != 0.0, axis=0))
    for idx in nonzero:
        w = karr[(slice(None),) + tuple(idx)]
        mix = np.einsum("mnp,n->mp", coeff, w)
        if not np.any(mix):
            continue
        shifted = _shifted(u.components, idx - kcenter, plan.boundary)
        out += np.einsum("mp,m...->p...", mix, shifted)
    out *= u.grid.voxel_volume
    return TensorField(u.grid, plan.rule.l_v, out)


def _circular_kernel(karr_n: np.ndarray, kshape, kcenter, target_shape) -> np.ndarray:
    """Lay one kernel component out circularly (center at index 0).

    Offsets that alias onto the same target voxel are summed, which is the
    image-sum treatment a periodic domain calls for when the kernel extent
    exceeds the field.
    """
    out = np.zeros(target_shape)
    mesh = np.meshgrid(*(np.arange(n) for n in kshape), indexing="ij")
    target = tuple((mesh[a] - kcenter[a]) % target_shape[a] for a in range(len(kshape)))
    np.add.at(out, target, karr_n)
    return out


def conv_fourier(u: TensorField, kernel: KernelField, plan: ConvPlan) -> TensorField:
    """FFT-path convolution via the tensor convolution theorem.

    Zero-pad boundary pads to the linear-convolution size (next fast FFT
    length); periodic boundary uses same-size circular transforms.
    """
    coeff = plan.coefficients
    karr = kernel.field.components
    kshape = kernel.grid.shape
    kcenter = ((np.asarray(kshape) - 1) // 2)
    ushape = u.grid.shape
    if plan.boundary == ZERO:
        work = tuple(sfft.next_fast_len(nu + nk - 1)
                     for nu, nk in zip(ushape, kshape))
    else:
        work = ushape

    mn_pairs = np.argwhere(np.any(coeff != 0, axis=2))
    needed_m = sorted({int(m) for m, _ in mn_pairs})
    needed_n = sorted({int(n) for _, n in mn_pairs})
    axes = tuple(range(u.grid.dim))

    u_hat = {}
    for m in needed_m:
        upad = np.zeros(work)
        upad[tuple(slice(0, n) for n in ushape)] = u.components[m]
        u_hat[m] = sfft.rfftn(upad, axes=axes)
    h_hat = {}
    for n in needed_n:
        h_hat[n] = sfft.rfftn(_circular_kernel(karr[n], kshape, kcenter, work), axes=axes)

    c_v = coeff.shape[2]
    out = np.zeros((c_v,) + ushape)
    crop = tuple(slice(0, n) for n in ushape)
    for p in range(c_v):
        acc = None
        for m in needed_m:
            for n in needed_n:
                c = coeff[m, n, p]
                if c == 0.0:
                    continue
                term = c * u_hat[m] * h_hat[n]
                acc = term if acc is None else acc + term
        if acc is None:
            continue
        out[p] = sfft.irfftn(acc, s=work, axes=axes)[crop]
    out *= u.grid.voxel_volume
    return TensorField(u.grid, plan.rule.l_v, out)
