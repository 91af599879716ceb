"""Radial profiles, harmonic sampling, and the named stencils."""

import math

import numpy as np
import pytest

import eqfield as eq


def test_gaussian_profile_values():
    p = eq.gaussian(2.0)
    r = np.array([0.0, 2.0, 4.0])
    assert np.allclose(p(r), [1.0, math.exp(-1.0), math.exp(-4.0)])
    with pytest.raises(eq.KernelError):
        eq.gaussian(0.0)


def test_greens_profile_values():
    r = np.array([1.0, 2.0])
    assert np.allclose(eq.inverse_r()(r), 1.0 / (4.0 * math.pi * r))
    assert np.allclose(eq.inverse_r2()(r), 1.0 / (4.0 * math.pi * r ** 2))
    assert np.allclose(eq.log_r()(r), -np.log(r) / (2.0 * math.pi))
    # singular profiles evaluate to 0 at the origin voxel
    assert eq.inverse_r()(np.array([0.0]))[0] == 0.0
    assert eq.inverse_r2()(np.array([0.0]))[0] == 0.0
    assert eq.log_r()(np.array([0.0]))[0] == 0.0


def test_heat_profile_values():
    D, t = 0.7, 1.3
    p = eq.gaussian_diffusion(D, t, 3)
    r = np.array([0.0, 1.0])
    norm = (4.0 * math.pi * D * t) ** -1.5
    assert np.allclose(p(r), norm * np.exp(-r ** 2 / (4.0 * D * t)))
    with pytest.raises(eq.KernelError):
        eq.gaussian_diffusion(0.7, 0.0, 3)


def test_named_profile_lookup():
    p = eq.named_profile("gaussian", sigma=1.5)
    assert p(np.array([1.5]))[0] == pytest.approx(math.exp(-1.0))
    with pytest.raises(eq.KernelError):
        eq.named_profile("sinc")


def test_kernel_grid_is_centered_and_odd():
    kg = eq.kernel_grid((5, 5, 5), 0.5)
    assert np.allclose(kg.world(kg.center_index()), 0.0)
    with pytest.raises(eq.KernelError):
        eq.kernel_grid((4, 5, 5), 0.5)


def test_unit_harmonics():
    rhat = np.array([0.0, 0.0, 1.0])
    assert np.allclose(eq.unit_harmonic(0, rhat), 1.0)
    assert np.allclose(eq.unit_harmonic(1, rhat), rhat)
    # Y_2(zhat) is the traceless quadrupole 3 z z^T - I
    y2 = eq.matrix_from_l2(eq.unit_harmonic(2, rhat))
    assert np.allclose(y2, np.diag([-1.0, -1.0, 2.0]), atol=1e-14)
    assert np.sum(y2 * y2) == pytest.approx(6.0)


def test_sample_kernel_separates_radial_and_angular():
    kg = eq.kernel_grid((7, 7, 7), 1.0)
    k = eq.sample_kernel(kg, eq.gaussian(2.0), 1)
    assert k.l_h == 1
    # at offset (3,0,0) the vector kernel points along +x with R(3)
    c = tuple(int(i) for i in kg.center_index())
    v = k.field.components[:, c[0] + 3, c[1], c[2]]
    assert np.allclose(v, [math.exp(-2.25), 0.0, 0.0])
    # origin voxel of an l>0 kernel is zero (no direction defined)
    assert np.allclose(k.field.components[:, c[0], c[1], c[2]], 0.0)


def test_sampled_kernel_parity():
    kg = eq.kernel_grid((5, 5, 5), 1.0)
    even = eq.sample_kernel(kg, eq.gaussian(1.0), 0).field.components[0]
    assert np.allclose(even, even[::-1, ::-1, ::-1])  # l=0 kernels are even
    odd = eq.sample_kernel(kg, eq.gaussian(1.0), 1).field.components
    assert np.allclose(odd, -odd[:, ::-1, ::-1, ::-1])  # l=1 kernels are odd


def test_delta_stencil_identity_weight():
    g = eq.Grid.centered((5, 5), spacing=0.5)
    k = eq.delta_stencil(g)
    assert k.kind == eq.STENCIL
    vals = k.field.components[0]
    c = tuple(int(i) for i in k.field.grid.center_index())
    assert vals[c] == pytest.approx(1.0 / g.voxel_volume)
    assert np.sum(vals != 0.0) == 1


def test_gradient_stencil_weights():
    g = eq.Grid.centered((5, 5, 5), spacing=(0.5, 1.0, 2.0))
    k = eq.gradient_stencil(g)
    assert k.kind == eq.STENCIL and k.l_h == 1
    vals = k.field.components
    vol = g.voxel_volume
    c = tuple(int(i) for i in k.field.grid.center_index())
    # conv reverses offsets, so the +h voxel carries the -1/(2h) coefficient
    for a in range(3):
        plus = list(c)
        plus[a] += 1
        w = vals[(a,) + tuple(plus)]
        assert w == pytest.approx(-1.0 / (2.0 * g.spacing[a] * vol))
    # antisymmetric under inversion
    assert np.allclose(vals, -vals[:, ::-1, ::-1, ::-1])


def test_laplacian_stencil_structure():
    g = eq.Grid.centered((9, 9), spacing=(0.5, 1.0))
    k = eq.laplacian_stencil(g)
    vals = k.field.components[0]
    assert vals.shape == (5, 5)  # reaches +-2 voxels per axis
    assert np.sum(vals != 0.0) == 2 * g.dim + 1
    assert abs(np.sum(vals)) < 1e-12  # annihilates constants
    vol = g.voxel_volume
    # weight at +-2h per axis is 1/(2h)^2, scaled by the voxel volume split
    assert vals[4, 2] == pytest.approx(1.0 / ((2.0 * 0.5) ** 2 * vol))
    assert vals[2, 4] == pytest.approx(1.0 / ((2.0 * 1.0) ** 2 * vol))


def test_kernel_save_load_round_trip(tmp_path):
    kg = eq.kernel_grid((5, 5, 5), 0.5)
    k = eq.sample_kernel(kg, eq.inverse_r(), 1)
    path = tmp_path / "k.eqf"
    eq.save_kernel(path, k)
    back = eq.load_kernel(path)
    assert back.l_h == 1
    assert back.kind == k.kind
    assert np.array_equal(back.field.components, k.field.components)


def test_kernel_scaled():
    kg = eq.kernel_grid((5, 5, 5), 1.0)
    k = eq.sample_kernel(kg, eq.gaussian(1.0), 0)
    s = k.scaled(-2.5)
    assert np.allclose(s.field.components, -2.5 * k.field.components)
    assert s.kind == k.kind and s.l_h == k.l_h
