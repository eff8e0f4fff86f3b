"""Zero location by closed form, eigen route and determinant oracle."""

import numpy as np
import pytest

from analysis.margin import bounds
from analysis.zerocalc import (
    attach_directions,
    dominant_zero,
    eigen_route_d,
    track_zero,
    zero_direction,
    zeros_closed_form,
    zeros_eigen_route,
    zeros_oracle,
)
from core.errors import InputError, NotAZeroError
from core.netjac import apply_droop, assemble_jnet, build_jacobian
from core.network import (
    build_operating_matrices,
    build_reduced,
    matrices_from_d,
    operating_point_from_d,
)
from core.types import BranchStatus, ReducedNetwork
from fixtures import fixture_jacobian, load_fixture

OMEGA0 = 100 * np.pi


def _single_node(d: float):
    net = ReducedNetwork(node_order=["n1"], B_r=[[2.0]], omega0_rad_s=OMEGA0)
    return net, matrices_from_d(net, [d])


def _oracle_roots(jac, zs):
    s_max = max(10 * OMEGA0, 2 * zs.nmp_zeros()[-1].z_rad_s)
    return [r.z_rad_s for r in zeros_oracle(jac, 1.0, s_max)]


def test_sqrt2_branch_sits_at_nominal_frequency():
    net, mats = _single_node(np.sqrt(2.0) / 2.0)
    zs = zeros_closed_form(mats, OMEGA0)
    assert zs.branches[0].sigma == pytest.approx(np.sqrt(2.0))
    assert zs.dominant == pytest.approx(OMEGA0, rel=1e-9)


def test_unit_branch_is_marginal():
    _, mats = _single_node(0.5)
    zs = zeros_closed_form(mats, OMEGA0)
    assert zs.branches[0].status == BranchStatus.MARGINAL
    assert zs.dominant is None


def test_small_sigma_is_minimum_phase():
    _, mats = _single_node(0.2)
    assert zeros_closed_form(mats, OMEGA0).branches[0].status == BranchStatus.MINIMUM_PHASE


def test_case1_dominant_zero(case1):
    net = build_reduced(case1.network)
    zs = zeros_closed_form(build_operating_matrices(net, case1.op), net.omega0_rad_s)
    expected = case1.expected["z0_rad_s"]
    assert zs.dominant == pytest.approx(expected.value, rel=expected.tol_rel)


def test_published_d_gives_loading_case3_zero(case1):
    net = build_reduced(case1.network)
    mats = matrices_from_d(net, [p.value for p in case1.published_d])
    expected = case1.expected["published_d_z0_rad_s"]
    assert zeros_closed_form(mats, net.omega0_rad_s).dominant == pytest.approx(
        expected.value, rel=expected.tol_rel
    )


@pytest.mark.parametrize("name", ["case2", "case3"])
def test_reconstructed_cases(name):
    fixture = load_fixture(name)
    net = build_reduced(fixture.network)
    zs = zeros_closed_form(build_operating_matrices(net, fixture.op), net.omega0_rad_s)
    expected = fixture.expected["z0_rad_s"]
    assert zs.dominant == pytest.approx(expected.value, rel=expected.tol_rel)


def test_loading_orders_zeros():
    dominant = []
    for name in ("case1", "case2", "case3"):
        fixture = load_fixture(name)
        net = build_reduced(fixture.network)
        mats = build_operating_matrices(net, fixture.op)
        dominant.append(zeros_closed_form(mats, net.omega0_rad_s).dominant)
    assert dominant[0] > dominant[1] > dominant[2]


def test_scaling_d_scales_sigma_and_moves_threshold(case1):
    net = build_reduced(case1.network)
    d = np.array([p.value for p in case1.published_d])
    base = zeros_closed_form(matrices_from_d(net, d), net.omega0_rad_s)
    sigmas = np.sort([b.sigma for b in base.branches])
    for sigma in sigmas:
        for t in (0.999 / sigma, 1.001 / sigma):
            zs = zeros_closed_form(matrices_from_d(net, t * d), net.omega0_rad_s)
            scaled = np.sort([b.sigma for b in zs.branches])
            np.testing.assert_allclose(scaled, t * sigmas, rtol=1e-9)
            assert sum(b.is_nmp for b in zs.branches) == int(np.sum(t * sigmas > 1.0))


def test_heavier_d_raises_zero_and_lowers_bound(case1):
    net = build_reduced(case1.network)
    d = np.array([p.value for p in case1.published_d])
    dominant, limits = [], []
    for t in (1.0, 1.2, 1.5, 2.0):
        zs = zeros_closed_form(matrices_from_d(net, t * d), net.omega0_rad_s)
        dominant.append(zs.dominant)
        limits.append(bounds(zs, omega_c=50.0).bound_scalar)
    assert dominant == sorted(dominant) and len(set(dominant)) == 4
    assert limits == sorted(limits, reverse=True) and len(set(limits)) == 4


def test_case1_oracle_agrees(case1):
    jac = fixture_jacobian(case1)
    net = build_reduced(case1.network)
    zs = zeros_closed_form(build_operating_matrices(net, case1.op), net.omega0_rad_s)
    roots = _oracle_roots(jac, zs)
    for z in zs.nmp_zeros():
        assert min(abs(r - z.z_rad_s) for r in roots) <= 1e-6 * z.z_rad_s


@pytest.mark.parametrize("seed", [1, 2, 5, 42])
def test_three_routes_agree(random_network, seed):
    net, mats, jac = random_network(seed)
    zs = zeros_closed_form(mats, net.omega0_rad_s)
    closed = [z.z_rad_s for z in zs.nmp_zeros()]
    eigen = sorted(z for _, z in zeros_eigen_route(mats, net.omega0_rad_s) if z is not None)
    np.testing.assert_allclose(eigen, closed, rtol=1e-6)
    roots = _oracle_roots(jac, zs)
    for z in closed:
        assert min(abs(r - z) for r in roots) <= 1e-6 * z


@pytest.mark.slow
def test_three_routes_agree_on_many_instances(random_network):
    for seed in range(100, 200):
        net, mats, jac = random_network(seed)
        zs = zeros_closed_form(mats, net.omega0_rad_s)
        closed = [z.z_rad_s for z in zs.nmp_zeros()]
        roots = _oracle_roots(jac, zs)
        assert len(roots) == len(closed), f"seed {seed}"
        np.testing.assert_allclose(roots, closed, rtol=1e-6, err_msg=f"seed {seed}")


def test_eigen_route_equals_sigma_squared(random_network):
    net, mats, _ = random_network(7)
    sigmas = np.array([b.sigma for b in zeros_closed_form(mats, net.omega0_rad_s).branches])
    lam = np.array([value for value, _ in zeros_eigen_route(mats, net.omega0_rad_s)])
    np.testing.assert_allclose(lam.real, sigmas**2, rtol=1e-8)
    np.testing.assert_allclose(lam.imag, 0.0, atol=1e-8 * sigmas[0] ** 2)
    np.testing.assert_allclose(np.sort(eigen_route_d(mats).real), np.sort(sigmas**2), rtol=1e-8)


def test_direction_annihilates_jacobian(random_network):
    net, mats, jac = random_network(9)
    zs = attach_directions(zeros_closed_form(mats, net.omega0_rad_s), jac)
    for b in zs.branches:
        if not b.is_nmp:
            continue
        w = np.array([complex(*pair) for pair in b.direction])
        J = assemble_jnet(jac, b.z_rad_s)
        assert np.linalg.norm(w.conj() @ J) < 1e-7 * np.linalg.norm(J, 2)
        assert np.linalg.norm(w) == pytest.approx(1.0)
        first = w[np.flatnonzero(np.abs(w) > 1e-12)[0]]
        assert first.imag == pytest.approx(0.0, abs=1e-12) and first.real > 0


def test_single_node_direction_at_nominal_frequency():
    net, mats = _single_node(np.sqrt(2.0) / 2.0)
    jac = build_jacobian(net, operating_point_from_d(net.node_order, [np.sqrt(2.0) / 2.0]))
    d = zero_direction(jac, OMEGA0)
    assert d.basis.shape == (2, 1)
    assert not d.multiple


def test_non_zero_frequency_rejected(random_network):
    net, mats, jac = random_network(9)
    z = zeros_closed_form(mats, net.omega0_rad_s).dominant
    with pytest.raises(NotAZeroError):
        zero_direction(jac, 0.5 * z)


def test_oracle_range_validated(case3_jacobian):
    with pytest.raises(InputError):
        zeros_oracle(case3_jacobian, 100.0, 10.0)


def test_track_zero_refines_to_closed_form(random_network):
    net, mats, jac = random_network(13)
    z = zeros_closed_form(mats, net.omega0_rad_s).dominant
    assert track_zero(jac, 1.02 * z) == pytest.approx(z, rel=1e-9)


@pytest.mark.parametrize("name", ["droop-node1", "droop-node2"])
def test_droop_fixtures(name):
    fixture = load_fixture(name)
    expected = fixture.expected["z0_rad_s"]
    assert dominant_zero(fixture_jacobian(fixture)) == pytest.approx(
        expected.value, rel=expected.tol_rel
    )


def test_droop_placement_ordering(case3_jacobian):
    base = dominant_zero(case3_jacobian, 1.0, 1e5)
    shifted = []
    for name in ("droop-node1", "droop-node2", "droop-node3"):
        shifted.append(dominant_zero(fixture_jacobian(load_fixture(name)), 1.0, 1e5))
    assert shifted[2] > shifted[1] > shifted[0] > base


def test_small_droop_moves_zero_continuously(case3_jacobian):
    z = dominant_zero(case3_jacobian)
    moved = track_zero(apply_droop(case3_jacobian, 2, 1e-3), z)
    assert moved != z
    assert moved == pytest.approx(z, rel=1e-3)
