"""Learnable equivariant operators.

A NeuralOp is a convolution whose radial function is a weighted sum of
fixed basis shapes (Gaussian bumps, inverse power laws, compact difference
stencils).  The output is linear in the amplitude vector, so fitting is a
linear least-squares problem; gradient descent is provided alongside for
the same objective.  The norm nonlinearity and pairwise attention layers
act voxel-by-voxel and are equivariant by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convolve import FOURIER, conv
from .fields import (FieldError, ProductRule, RuleError, TensorField,
                     field_norm, pointwise_product, product_rule,
                     supported_rules)
from .formats import FormatError, read_keyvalues, write_keyvalues
from .grid import ZERO, Grid
from .kernels import (SAMPLED, KernelField, RadialProfile, delta_stencil,
                      gaussian, gradient_stencil, kernel_grid, sample_kernel)

RELU = "relu"
IDENTITY = "identity"


def power_profile(exponent: int, r_min: float) -> RadialProfile:
    """r^(-exponent) outside r_min, zero inside (regularized power law)."""
    if exponent <= 0:
        raise ValueError("power-law exponent must be a positive integer")
    if r_min <= 0:
        raise ValueError("power-law inner cutoff must be positive")
    k = int(exponent)

    def fn(r):
        safe = np.where(r >= r_min, r, 1.0)
        return np.where(r >= r_min, safe ** (-float(k)), 0.0)

    return RadialProfile(fn, name=f"power({k})")


@dataclass
class ParamRadial:
    """Radial function linear in its amplitudes.

    gaussians: (amplitude, width) pairs, R += A exp(-r^2/sigma^2)
    powers:    (amplitude, exponent, r_min), R += B r^-k for r >= r_min
    stencils:  (amplitude, order), realized as compact difference kernels
               rather than smooth radial terms; order 0 is the delta
               (valid for l_h = 0), order 1 the gradient stencil (l_h = 1)
    trainable: boolean mask over the amplitude vector, None = all trainable
    """

    gaussians: tuple = ()
    powers: tuple = ()
    stencils: tuple = ()
    trainable: np.ndarray | None = None

    def __post_init__(self):
        self.gaussians = tuple((float(a), float(s)) for a, s in self.gaussians)
        self.powers = tuple((float(a), int(k), float(r)) for a, k, r in self.powers)
        self.stencils = tuple((float(a), int(o)) for a, o in self.stencils)
        for _, s in self.gaussians:
            if s <= 0:
                raise ValueError("gaussian width must be positive")
        for _, o in self.stencils:
            if o not in (0, 1):
                raise ValueError("stencil order must be 0 or 1")
        if self.trainable is not None:
            self.trainable = np.asarray(self.trainable, dtype=bool)
            if self.trainable.shape != (self.n_params,):
                raise ValueError("trainable mask length does not match amplitudes")

    @property
    def n_params(self) -> int:
        return len(self.gaussians) + len(self.powers) + len(self.stencils)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for a, _ in self.gaussians]
                        + [a for a, _, _ in self.powers]
                        + [a for a, _ in self.stencils])

    @property
    def trainable_mask(self) -> np.ndarray:
        if self.trainable is None:
            return np.ones(self.n_params, dtype=bool)
        return self.trainable

    def with_amplitudes(self, p) -> "ParamRadial":
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} amplitudes, got {p.shape}")
        ng, npw = len(self.gaussians), len(self.powers)
        return ParamRadial(
            tuple((p[i], s) for i, (_, s) in enumerate(self.gaussians)),
            tuple((p[ng + i], k, r) for i, (_, k, r) in enumerate(self.powers)),
            tuple((p[ng + npw + i], o) for i, (_, o) in enumerate(self.stencils)),
            self.trainable)

    def hyper_key(self) -> tuple:
        """Hashable identity of the basis shapes (amplitudes excluded)."""
        return (tuple(s for _, s in self.gaussians),
                tuple((k, r) for _, k, r in self.powers),
                tuple(o for _, o in self.stencils))

    def evaluate(self, r) -> np.ndarray:
        """The smooth part R(r); stencil terms live on the lattice, not here."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for a, s in self.gaussians:
            out += a * np.exp(-((r / s) ** 2))
        for a, k, r_min in self.powers:
            safe = np.where(r >= r_min, r, 1.0)
            out += np.where(r >= r_min, a * safe ** (-float(k)), 0.0)
        return out


def default_param_radial(grid: Grid, l_h: int, n_gaussians: int = 8) -> ParamRadial:
    """Default basis: log-spaced Gaussians over [spacing, extent/4], power
    laws r^-1 and r^-2 cut off inside one spacing, and the compact stencil
    matching l_h (delta for scalars, gradient for vectors).  Amplitudes
    start at zero."""
    h = min(grid.spacing)
    extent = min(n * s for n, s in zip(grid.shape, grid.spacing))
    widths = np.geomspace(h, extent / 4.0, n_gaussians)
    gaussians = tuple((0.0, float(w)) for w in widths)
    powers = tuple((0.0, k, h) for k in (1, 2))
    if l_h == 0:
        stencils = ((0.0, 0),)
    elif l_h == 1:
        stencils = ((0.0, 1),)
    else:
        stencils = ()
    return ParamRadial(gaussians, powers, stencils)


@dataclass
class NeuralOp:
    """Learnable convolution: kernel = sum of amplitude-weighted basis kernels.

    Applies with the free-space (zero) boundary; the kernel grid spans every
    displacement between field voxels, so nothing is truncated.
    """

    param: ParamRadial
    rule: ProductRule
    grid: Grid
    path: str = FOURIER

    @property
    def l_h(self) -> int:
        return self.rule.l_h

    def with_params(self, amplitudes) -> "NeuralOp":
        return NeuralOp(self.param.with_amplitudes(amplitudes), self.rule,
                        self.grid, self.path)

    def kernel(self) -> KernelField:
        basis = basis_kernels(self)
        comps = np.zeros_like(basis[0].field.components)
        for a, k in zip(self.param.amplitudes, basis):
            if a != 0.0:
                comps = comps + a * k.field.components
        return KernelField(TensorField(basis[0].grid, self.l_h, comps),
                           self.l_h, SAMPLED)


def make_neural_op(grid: Grid, kind: str = "scalar", l_u: int = 0, l_h: int = 0,
                   param: ParamRadial | None = None) -> NeuralOp:
    rule = product_rule(kind, l_u, l_h, grid.dim)
    if param is None:
        param = default_param_radial(grid, l_h)
    for _, order in param.stencils:
        if order != l_h:
            raise RuleError(f"order-{order} stencil cannot serve an l_h={l_h} kernel")
    return NeuralOp(param, rule, grid)


def _embed_stencil(small: KernelField, kgrid: Grid) -> np.ndarray:
    """Place a 3-wide stencil at the center of a larger kernel grid."""
    comp = small.field.components
    big = np.zeros((comp.shape[0],) + kgrid.shape)
    c = kgrid.center_index()
    block = tuple(slice(int(ci) - 1, int(ci) + 2) for ci in c)
    big[(slice(None),) + block] = comp
    return big


def _build_basis(grid: Grid, l_h: int, param: ParamRadial) -> list:
    kgrid = kernel_grid(tuple(2 * n - 1 for n in grid.shape), grid.spacing)
    basis = []
    for _, sigma in param.gaussians:
        basis.append(sample_kernel(kgrid, gaussian(sigma), l_h))
    for _, k, r_min in param.powers:
        basis.append(sample_kernel(kgrid, power_profile(k, r_min), l_h))
    for _, order in param.stencils:
        if order == 0:
            if l_h != 0:
                raise RuleError("order-0 stencil (delta) is an l_h=0 kernel")
            small = delta_stencil(grid)
        else:
            if l_h != 1:
                raise RuleError("order-1 stencil (gradient) is an l_h=1 kernel")
            small = gradient_stencil(grid)
        comps = _embed_stencil(small, kgrid)
        basis.append(KernelField(TensorField(kgrid, l_h, comps), l_h, SAMPLED))
    return basis


_basis_cache: dict = {}


def basis_kernels(op: NeuralOp) -> list:
    """One KernelField per amplitude, in amplitude order, cached per basis."""
    key = (op.grid, op.l_h, op.param.hyper_key())
    if key not in _basis_cache:
        _basis_cache[key] = _build_basis(op.grid, op.l_h, op.param)
    return _basis_cache[key]


def apply_neural(op: NeuralOp, u: TensorField) -> TensorField:
    if u.grid != op.grid:
        raise FieldError("field grid does not match the operator grid")
    if u.l != op.rule.l_u:
        raise RuleError(f"operator expects l={op.rule.l_u} input, got l={u.l}")
    return conv(u, op.kernel(), op.rule, path=op.path, boundary=ZERO)


def _check_dataset(op: NeuralOp, dataset) -> None:
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    for u, v in dataset:
        if u.grid != op.grid or v.grid != op.grid:
            raise ValueError("dataset fields must live on the operator grid")
        if u.l != op.rule.l_u or v.l != op.rule.l_v:
            raise RuleError("dataset orders do not match the operator rule")


def _design(op: NeuralOp, dataset) -> tuple:
    """Stack basis responses into a design matrix: column i is conv(u, basis_i)
    over all samples, so predictions are X @ amplitudes."""
    _check_dataset(op, dataset)
    if op.param.n_params == 0:
        raise ValueError("operator has an empty basis")
    basis = basis_kernels(op)
    blocks = []
    targets = []
    for u, v in dataset:
        cols = [conv(u, b, op.rule, path=op.path, boundary=ZERO).components.ravel()
                for b in basis]
        blocks.append(np.stack(cols, axis=1))
        targets.append(v.components.ravel())
    X = np.concatenate(blocks, axis=0)
    b = np.concatenate(targets)
    norm = float(b @ b)
    if norm == 0.0:
        raise ValueError("dataset target is identically zero; relative loss undefined")
    return X, b, norm


def loss(op: NeuralOp, dataset) -> float:
    """Relative mean squared error: sum |v - v_target|^2 / sum |v_target|^2."""
    _check_dataset(op, dataset)
    num = 0.0
    den = 0.0
    for u, v in dataset:
        pred = apply_neural(op, u)
        num += float(np.sum((pred.components - v.components) ** 2))
        den += float(np.sum(v.components ** 2))
    if den == 0.0:
        raise ValueError("dataset target is identically zero; relative loss undefined")
    return num / den


def grad_params(op: NeuralOp, dataset) -> np.ndarray:
    """Analytic gradient of loss over the amplitude vector.

    By linearity dv/dp_i = conv(u, basis_i), so the gradient is
    2 <residual, basis response> / normalizer, accumulated over samples.
    """
    X, b, norm = _design(op, dataset)
    r = X @ op.param.amplitudes - b
    return 2.0 * (X.T @ r) / norm


@dataclass
class FitResult:
    amplitudes: np.ndarray
    residual: float          # relative MSE at the fitted amplitudes
    condition: float         # condition estimate of the (regularized) normal matrix
    flagged: bool            # singular-beyond-ridge or divergence warning
    trace: list = field(default_factory=list)   # loss per step (gradient descent)


def fit_least_squares(op: NeuralOp, dataset, ridge: float = 1e-10) -> FitResult:
    """Solve the normal equations over the trainable amplitudes.

    ridge scales a Tikhonov term by trace(A)/n so the default 1e-10 is
    dimensionless; a condition estimate above 1e12 flags the result.
    """
    X, b, norm = _design(op, dataset)
    p0 = op.param.amplitudes
    mask = op.param.trainable_mask
    if not mask.any():
        raise ValueError("no trainable amplitudes")
    Xt = X[:, mask]
    b_eff = b - X[:, ~mask] @ p0[~mask]
    A = Xt.T @ Xt
    n_t = A.shape[0]
    lam = ridge * (np.trace(A) / n_t if np.trace(A) > 0 else 1.0)
    A_reg = A + lam * np.eye(n_t)
    flagged = False
    try:
        sol = np.linalg.solve(A_reg, Xt.T @ b_eff)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(A_reg, Xt.T @ b_eff, rcond=None)
        flagged = True
    condition = float(np.linalg.cond(A_reg))
    if not np.isfinite(condition) or condition > 1e12:
        flagged = True
    p = p0.copy()
    p[mask] = sol
    residual = float(np.sum((X @ p - b) ** 2) / norm)
    return FitResult(p, residual, condition, flagged)


def fit_gradient_descent(op: NeuralOp, dataset, steps: int = 500,
                         step_size: float | None = None) -> FitResult:
    """Plain gradient descent on the same relative-MSE objective.

    step_size None picks 1/L from the largest normal-matrix eigenvalue,
    which guarantees descent on this quadratic.  Divergence (loss above
    1e6 times the initial value) aborts with the trace recorded.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    X, b, norm = _design(op, dataset)
    mask = op.param.trainable_mask
    if step_size is None:
        A = X[:, mask].T @ X[:, mask]
        top = float(np.linalg.eigvalsh(A)[-1])
        if top <= 0:
            raise ValueError("basis responses vanish on this dataset")
        step_size = norm / (2.0 * top)
    elif step_size <= 0:
        raise ValueError("step_size must be positive")
    p = op.param.amplitudes.copy()

    def current_loss():
        return float(np.sum((X @ p - b) ** 2) / norm)

    trace = [current_loss()]
    flagged = False
    for _ in range(steps):
        g = 2.0 * (X.T @ (X @ p - b)) / norm
        p[mask] -= step_size * g[mask]
        val = current_loss()
        trace.append(val)
        if not math.isfinite(val) or val > 1e6 * max(trace[0], 1e-300):
            flagged = True
            break
    A_reg = X[:, mask].T @ X[:, mask]
    condition = float(np.linalg.cond(A_reg)) if A_reg.size else float("inf")
    return FitResult(p, trace[-1], condition, flagged, trace)


@dataclass
class NonlinearLayer:
    """Norm nonlinearity: u -> act(a |u| + b) * u/|u| per channel and voxel."""

    a: np.ndarray
    b: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        self.a = np.atleast_1d(np.asarray(self.a, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.a.shape != self.b.shape:
            raise ValueError("a and b must have one value per channel")
        if self.activation not in (RELU, IDENTITY):
            raise ValueError(f"activation must be relu|identity, got {self.activation!r}")


def apply_nonlinear(layer: NonlinearLayer, fields: list) -> list:
    if len(fields) != len(layer.a):
        raise ValueError(f"layer has {len(layer.a)} channels, got {len(fields)} fields")
    out = []
    for j, u in enumerate(fields):
        n = field_norm(u).components[0]
        s = layer.a[j] * n + layer.b[j]
        if layer.activation == RELU:
            s = np.maximum(s, 0.0)
        scale = np.where(n > 0.0, s / np.where(n > 0.0, n, 1.0), 0.0)
        out.append(TensorField(u.grid, u.l, u.components * scale[None]))
    return out


@dataclass
class AttentionLayer:
    """Pairwise products of channels, weighted per output channel.

    Channel index len(input_l) is an implicit identity scalar field (all
    ones), so a pair (a, identity) passes channel a through.  Every stored
    pair carries a valid rule for the dimension; weights into an output
    channel whose order differs from the pair's product order must be zero.
    """

    input_l: tuple
    output_l: tuple
    dim: int
    pairs: list
    weights: np.ndarray

    def __post_init__(self):
        self.input_l = tuple(int(l) for l in self.input_l)
        self.output_l = tuple(int(l) for l in self.output_l)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.output_l), len(self.pairs)):
            raise ValueError("weights must be (n_output_channels, n_pairs)")
        orders = self.input_l + (0,)
        for j, lo in enumerate(self.output_l):
            for k, (a, b, kind) in enumerate(self.pairs):
                rule = product_rule(kind, orders[a], orders[b], self.dim)
                if self.weights[j, k] != 0.0 and rule.l_v != lo:
                    raise RuleError(
                        f"pair {kind}({orders[a]},{orders[b]})->{rule.l_v} cannot "
                        f"feed output channel {j} of order {lo}")

    @classmethod
    def create(cls, input_l, output_l, dim: int) -> "AttentionLayer":
        """Enumerate every valid ordered pair (identity channel included);
        weights start at zero."""
        input_l = tuple(int(l) for l in input_l)
        orders = input_l + (0,)
        pairs = []
        for a in range(len(orders)):
            for b in range(len(orders)):
                for rule in supported_rules(dim):
                    if rule.l_u == orders[a] and rule.l_h == orders[b]:
                        pairs.append((a, b, rule.kind))
        weights = np.zeros((len(output_l), len(pairs)))
        return cls(input_l, tuple(int(l) for l in output_l), dim, pairs, weights)

    def pair_index(self, a: int, b: int, kind: str) -> int:
        return self.pairs.index((a, b, kind))

    @property
    def identity_channel(self) -> int:
        return len(self.input_l)


def apply_attention(layer: AttentionLayer, fields: list) -> list:
    if len(fields) != len(layer.input_l):
        raise ValueError(f"layer has {len(layer.input_l)} input channels, "
                         f"got {len(fields)} fields")
    for u, l in zip(fields, layer.input_l):
        if u.l != l:
            raise RuleError("field orders do not match the layer's input channels")
    grid = fields[0].grid if fields else None
    if grid is None:
        raise ValueError("attention needs at least one input field")
    ones = TensorField.from_scalar(grid, np.ones(grid.shape))
    chans = list(fields) + [ones]
    orders = layer.input_l + (0,)
    out = []
    for j, lo in enumerate(layer.output_l):
        acc = TensorField.zeros(grid, lo)
        for k, (a, b, kind) in enumerate(layer.pairs):
            w = layer.weights[j, k]
            if w == 0.0:
                continue
            rule = product_rule(kind, orders[a], orders[b], layer.dim)
            acc = acc + pointwise_product(chans[a], chans[b], rule) * w
        out.append(acc)
    return out


def save_model(path, op: NeuralOp) -> None:
    """Text manifest: grid header, rule, basis hyperparameters, amplitudes."""
    g = op.grid
    p = op.param
    entries = {
        "model": "eqfield-neural-v1",
        "dim": g.dim,
        "shape": list(g.shape),
        "spacing": list(g.spacing),
        "origin": list(g.origin),
        "boundary": g.boundary,
        "kind": op.rule.kind,
        "l_u": op.rule.l_u,
        "l_h": op.rule.l_h,
        "path": op.path,
        "gaussian_widths": [s for _, s in p.gaussians],
        "gaussian_amps": [a for a, _ in p.gaussians],
        "power_exponents": [k for _, k, _ in p.powers],
        "power_rmins": [r for _, _, r in p.powers],
        "power_amps": [a for a, _, _ in p.powers],
        "stencil_orders": [o for _, o in p.stencils],
        "stencil_amps": [a for a, _ in p.stencils],
        "trainable": [int(t) for t in p.trainable_mask],
    }
    write_keyvalues(path, entries)


def _floats(s: str) -> list:
    return [float(x) for x in s.split(",") if x]


def _ints(s: str) -> list:
    return [int(x) for x in s.split(",") if x]


def load_model(path) -> NeuralOp:
    kv = read_keyvalues(path)
    if kv.get("model") != "eqfield-neural-v1":
        raise FormatError(f"{path}: not a neural-operator manifest")
    grid = Grid(tuple(_ints(kv["shape"])), tuple(_floats(kv["spacing"])),
                tuple(_floats(kv["origin"])), kv["boundary"])
    widths = _floats(kv["gaussian_widths"])
    g_amps = _floats(kv["gaussian_amps"])
    exps = _ints(kv["power_exponents"])
    rmins = _floats(kv["power_rmins"])
    p_amps = _floats(kv["power_amps"])
    orders = _ints(kv["stencil_orders"])
    s_amps = _floats(kv["stencil_amps"])
    trainable = np.array(_ints(kv["trainable"]), dtype=bool)
    param = ParamRadial(tuple(zip(g_amps, widths)),
                        tuple(zip(p_amps, exps, rmins)),
                        tuple(zip(s_amps, orders)),
                        trainable)
    rule = product_rule(kv["kind"], int(kv["l_u"]), int(kv["l_h"]), grid.dim)
    return NeuralOp(param, rule, grid, kv["path"])
