"""Tensor fields over regular grids and their pointwise algebra.

A tensor field stores one real array per component with the component axis
leading, so shape is (C, *grid.shape).  Rotation order l fixes C:

    l = 0   scalar          C = 1
    l = 1   vector          C = dim
    l = 2   traceless symmetric matrix (3d only), C = 5

The l = 2 basis is five traceless symmetric matrices of equal Frobenius
norm sqrt(2) (see ``l2_basis``), so the component tuple's Euclidean norm is
rotation invariant and component extraction is <M, B_k> / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid


class FieldError(ValueError):
    pass


class RuleError(ValueError):
    """Unsupported tensor product for the requested orders/dimension."""
    pass


_SQRT3 = math.sqrt(3.0)

# Traceless symmetric basis: xx-yy, (2zz-xx-yy)/sqrt(3), xy, xz, yz.
_L2_BASIS = np.array([
    [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]],
    [[-1.0 / _SQRT3, 0.0, 0.0], [0.0, -1.0 / _SQRT3, 0.0], [0.0, 0.0, 2.0 / _SQRT3]],
    [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
    [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
])
_L2_BASIS.setflags(write=False)


def l2_basis() -> np.ndarray:
    """The five order-2 basis matrices, shape (5, 3, 3)."""
    return _L2_BASIS


def matrix_from_l2(c: np.ndarray) -> np.ndarray:
    """Reconstruct the 3x3 traceless symmetric matrix from 5 components."""
    return np.einsum("k...,kij->ij...", c, _L2_BASIS)


def l2_from_matrix(m: np.ndarray) -> np.ndarray:
    """Extract the 5 components of a traceless symmetric matrix."""
    return np.einsum("ij...,kij->k...", m, _L2_BASIS) / 2.0


def components_for(l: int, dim: int) -> int:
    """Number of stored components for rotation order l in dimension dim."""
    if l == 0:
        return 1
    if l == 1:
        return dim
    if l == 2:
        if dim != 3:
            raise FieldError("l=2 fields are supported in 3d only")
        return 5
    raise FieldError(f"rotation order {l} unsupported (l <= 2)")


def unit_harmonic(l: int, rhat: np.ndarray) -> np.ndarray:
    """Angular tensor Y_l of unit directions.

    rhat has the direction axis leading, shape (dim, ...); the result has
    the component axis leading, shape (C, ...).  Y_0 = 1, Y_1 = rhat,
    Y_2 = 3 rhat rhat^T - I in the l=2 component basis.
    """
    rhat = np.asarray(rhat, dtype=float)
    dim = rhat.shape[0]
    if l == 0:
        return np.ones((1,) + rhat.shape[1:])
    if l == 1:
        return rhat.copy()
    if l == 2 and dim == 3:
        outer = np.einsum("i...,j...->ij...", rhat, rhat)
        eye = np.zeros_like(outer)
        for i in range(3):
            eye[i, i] = 1.0
        return l2_from_matrix(3.0 * outer - eye)
    raise FieldError(f"unit harmonic l={l} unsupported in {dim}d")


@dataclass
class TensorField:
    """Rotation order plus per-voxel component array over a grid."""

    grid: Grid
    l: int
    components: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.components, dtype=float)
        want = (components_for(self.l, self.grid.dim),) + self.grid.shape
        if arr.shape != want:
            raise FieldError(f"component array shape {arr.shape} != expected {want}")
        if not np.all(np.isfinite(arr)):
            raise FieldError("field contains non-finite values")
        self.components = arr

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @classmethod
    def zeros(cls, grid: Grid, l: int) -> "TensorField":
        c = components_for(l, grid.dim)
        return cls(grid, l, np.zeros((c,) + grid.shape))

    @classmethod
    def from_scalar(cls, grid: Grid, values: np.ndarray) -> "TensorField":
        return cls(grid, 0, np.asarray(values, dtype=float)[None])

    @classmethod
    def random(cls, grid: Grid, l: int, rng: np.random.Generator) -> "TensorField":
        c = components_for(l, grid.dim)
        return cls(grid, l, rng.standard_normal((c,) + grid.shape))

    def copy(self) -> "TensorField":
        return TensorField(self.grid, self.l, self.components.copy())

    def __add__(self, other: "TensorField") -> "TensorField":
        self._check_same(other)
        return TensorField(self.grid, self.l, self.components + other.components)

    def __sub__(self, other: "TensorField") -> "TensorField":
        self._check_same(other)
        return TensorField(self.grid, self.l, self.components - other.components)

    def __mul__(self, scalar: float) -> "TensorField":
        return TensorField(self.grid, self.l, self.components * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "TensorField":
        return TensorField(self.grid, self.l, -self.components)

    def _check_same(self, other: "TensorField"):
        if self.grid != other.grid or self.l != other.l:
            raise FieldError("fields differ in grid or rotation order")

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.components)))


@dataclass(frozen=True)
class ProductRule:
    """A tensor product (l_u, l_h) -> l_v, keyed by kind.

    The kind disambiguates signatures that collide in 2d: (1,1)->0 is the
    dot product as kind="dot" and the pseudo-scalar cross as kind="cross".
    """

    kind: str
    l_u: int
    l_h: int
    l_v: int


def supported_rules(dim: int) -> list[ProductRule]:
    rules = []
    max_l = 2 if dim == 3 else 1
    for l in range(max_l + 1):
        rules.append(ProductRule("scalar", 0, l, l))
        if l > 0:
            rules.append(ProductRule("scalar", l, 0, l))
    rules.append(ProductRule("dot", 1, 1, 0))
    if dim == 3:
        rules.append(ProductRule("dot", 2, 2, 0))
        rules.append(ProductRule("cross", 1, 1, 1))
        rules.append(ProductRule("matvec", 2, 1, 1))
    else:
        rules.append(ProductRule("cross", 1, 1, 0))
    return rules


def product_rule(kind: str, l_u: int, l_h: int, dim: int) -> ProductRule:
    """Resolve and validate a product rule for the given orders and dimension."""
    for rule in supported_rules(dim):
        if rule.kind == kind and rule.l_u == l_u and rule.l_h == l_h:
            return rule
    listing = ", ".join(f"{r.kind}({r.l_u},{r.l_h})->{r.l_v}" for r in supported_rules(dim))
    raise RuleError(
        f"no product {kind!r} for (l_u={l_u}, l_h={l_h}) in {dim}d; supported: {listing}")


def tensor_product(u: np.ndarray, h: np.ndarray, rule: ProductRule) -> np.ndarray:
    """Pointwise tensor product of component arrays (component axis leading).

    Bilinear in both arguments.  The l=2 dot product is the Frobenius
    product of the underlying matrices, which is 2 * (component dot) in the
    equal-norm basis.
    """
    u = np.asarray(u, dtype=float)
    h = np.asarray(h, dtype=float)
    if rule.kind == "scalar":
        return u[0] * h if rule.l_u == 0 else u * h[0]
    if rule.kind == "dot":
        scale = 2.0 if rule.l_u == 2 else 1.0
        return scale * np.sum(u * h, axis=0)[None]
    if rule.kind == "cross":
        if rule.l_v == 0:  # 2d pseudo-scalar
            return (u[0] * h[1] - u[1] * h[0])[None]
        return np.stack([
            u[1] * h[2] - u[2] * h[1],
            u[2] * h[0] - u[0] * h[2],
            u[0] * h[1] - u[1] * h[0],
        ])
    if rule.kind == "matvec":
        m = matrix_from_l2(u)
        return np.einsum("ij...,j...->i...", m, h)
    raise RuleError(f"unknown product kind {rule.kind!r}")


def pointwise_product(u: TensorField, w: TensorField, rule: ProductRule) -> TensorField:
    """Apply the tensor product voxel by voxel."""
    if u.grid != w.grid:
        raise FieldError("pointwise product requires identical grids")
    if rule.l_u != u.l or rule.l_h != w.l:
        raise RuleError(f"rule expects orders ({rule.l_u},{rule.l_h}), "
                        f"fields have ({u.l},{w.l})")
    return TensorField(u.grid, rule.l_v, tensor_product(u.components, w.components, rule))


def field_norm(u: TensorField) -> TensorField:
    """Per-voxel Euclidean norm of the component tuple (an l=0 field)."""
    return TensorField(u.grid, 0, np.sqrt(np.sum(u.components ** 2, axis=0))[None])


def _rotated_index_map(grid: Grid, rot) -> tuple:
    """Advanced-index tuple picking the source voxel g^-1(i) for each output i."""
    ginv = rot.matrix.T
    center = grid.center_index()
    idx = np.indices(grid.shape, dtype=float)
    rel = idx - center.reshape((-1,) + (1,) * grid.dim)
    src = np.einsum("ab,b...->a...", ginv.astype(float), rel) + \
        center.reshape((-1,) + (1,) * grid.dim)
    src_int = np.rint(src).astype(int)
    if np.max(np.abs(src - src_int)) > 1e-9:
        raise FieldError("rotation incompatible with grid shape (non-square/cube domain)")
    for a in range(grid.dim):
        if src_int[a].min() < 0 or src_int[a].max() >= grid.shape[a]:
            raise FieldError("rotation incompatible with grid shape (non-square/cube domain)")
    return tuple(src_int)


def rotate_field(u: TensorField, rot) -> TensorField:
    """Rotate a field about the domain center: out(i) = D_l(g) u(g^-1 i).

    Positions are permuted exactly (lattice rotations only); tensor values
    transform in their order-l representation.
    """
    if rot.dim != u.grid.dim:
        raise FieldError("rotation dimension does not match the grid")
    src = _rotated_index_map(u.grid, rot)
    permuted = u.components[(slice(None),) + src]
    rep = rot.representation(u.l)
    rotated = np.einsum("ab,b...->a...", rep, permuted)
    return TensorField(u.grid, u.l, rotated)


def rotate_vector(v, rot) -> np.ndarray:
    """Rotate a plain dim-vector (e.g. a wind velocity) as an l=1 quantity."""
    return rot.matrix.astype(float) @ np.asarray(v, dtype=float)
