"""Kron reduction, definiteness checks and operating matrices."""

import cmath
import math

import numpy as np
import pytest
from scipy import linalg

from core.errors import DefinitenessError, DegenerateInjectionError, InputError
from core.network import (
    build_operating_matrices,
    build_reduced,
    check_psd,
    kron_reduce,
    kron_reduce_sequential,
    matrices_from_d,
    nodal_laplacian,
    operating_point_from_d,
    principal_sqrt,
)
from core.types import GridModel, OperatingPoint, ReducedNetwork
from fixtures import load_fixture


def _random_grid(rng: np.random.Generator, n: int = 8) -> GridModel:
    """Chain plus random chords; first three buses are converters, last is slack."""
    ids = [f"b{k}" for k in range(n)]
    roles = ["converter"] * 3 + ["interior"] * (n - 4) + ["slack"]
    branches = [
        {"from": ids[k], "to": ids[k + 1], "x_pu": rng.uniform(0.01, 0.2)} for k in range(n - 1)
    ]
    for _ in range(4):
        i, k = rng.choice(n, size=2, replace=False)
        branches.append({"from": ids[i], "to": ids[k], "x_pu": rng.uniform(0.01, 0.2)})
    return GridModel.model_validate(
        {
            "omega0_rad_s": 100 * math.pi,
            "buses": [{"id": i, "role": r} for i, r in zip(ids, roles)],
            "branches": branches,
        }
    )


def _op(labels, values):
    return OperatingPoint.model_validate(
        {
            "converters": [
                {"bus": label, "U_pu": u, "theta_rad": t, "P_pu": p, "Q_pu": q}
                for label, (u, t, p, q) in zip(labels, values)
            ]
        }
    )


def test_laplacian_rows_sum_to_zero(rng):
    B, ids = nodal_laplacian(_random_grid(rng))
    assert len(ids) == 8
    np.testing.assert_allclose(B.sum(axis=1), 0.0, atol=1e-9)
    np.testing.assert_allclose(B, B.T)


def test_sequential_elimination_matches_block_schur(rng):
    B, _ = nodal_laplacian(_random_grid(rng))
    grounded = B[:-1, :-1]
    keep = [0, 1, 2]
    np.testing.assert_allclose(
        kron_reduce_sequential(grounded, keep), kron_reduce(grounded, keep), rtol=1e-10, atol=1e-10
    )


def test_reduction_preserves_boundary_response(rng):
    B, _ = nodal_laplacian(_random_grid(rng))
    grounded = B[:-1, :-1]
    keep = [0, 1, 2]
    B_r = kron_reduce(grounded, keep)
    currents = rng.normal(size=3)
    injected = np.zeros(grounded.shape[0])
    injected[keep] = currents
    full = linalg.solve(grounded, injected)
    np.testing.assert_allclose(full[keep], linalg.solve(B_r, currents), rtol=1e-9)


def test_build_reduced_from_line_data():
    fixture = load_fixture("ieee9-lines")
    net = build_reduced(fixture.network)
    assert net.node_order == ["node1", "node2", "node3"]
    B_r = net.matrix
    np.testing.assert_allclose(B_r, B_r.T)
    assert linalg.eigvalsh(B_r)[0] > 0


def test_supplied_reduction_passes_through(case1):
    net = build_reduced(case1.network)
    np.testing.assert_array_equal(net.matrix, np.asarray(case1.network.B_r))


def test_indefinite_matrix_rejected():
    with pytest.raises(DefinitenessError):
        check_psd(np.diag([1.0, -1.0]))


def test_principal_sqrt_squares_back(case1):
    B_r = np.asarray(case1.network.B_r)
    root = principal_sqrt(B_r)
    np.testing.assert_allclose(root @ root, B_r, atol=1e-12)


def test_grounded_slack_leaves_nonnegative_row_sums(rng):
    for model in (load_fixture("ieee9-lines").network, _random_grid(rng)):
        B_r = build_reduced(model).matrix
        assert np.all(B_r.sum(axis=1) >= -1e-10 * np.max(np.abs(B_r)))


def test_principal_sqrt_is_symmetric_psd_and_commutes(case1):
    B_r = np.asarray(case1.network.B_r)
    root = principal_sqrt(B_r)
    scale = np.max(np.abs(B_r))
    np.testing.assert_allclose(root, root.T, atol=1e-12)
    assert linalg.eigvalsh(root)[0] >= -1e-10 * np.max(np.abs(root))
    np.testing.assert_allclose(root @ B_r, B_r @ root, atol=1e-10 * scale)


def test_asymmetric_reduction_rejected():
    with pytest.raises(ValueError):
        ReducedNetwork(node_order=["a", "b"], B_r=[[1.0, 0.5], [0.4, 1.0]], omega0_rad_s=1.0)


def test_operating_matrices_definitions():
    net = ReducedNetwork(
        node_order=["a", "b"], B_r=[[3.0, -1.0], [-1.0, 2.0]], omega0_rad_s=100 * math.pi
    )
    op = _op(["a", "b"], [(1.05, 0.1, 0.8, 0.2), (0.97, -0.05, 0.6, 0.0)])
    mats = build_operating_matrices(net, op)
    u = np.array([cmath.rect(1.05, 0.1), cmath.rect(0.97, -0.05)])
    s = np.array([0.8 + 0.2j, 0.6])
    np.testing.assert_allclose(np.diag(mats.D), u**2 / s)
    np.testing.assert_allclose(mats.Y, np.outer(u, np.conj(u)) * net.matrix)


def test_case3_voltages_reproduce_published_d(case1, case3):
    net = build_reduced(case3.network)
    d = np.diag(build_operating_matrices(net, case3.op).D)
    for value, published in zip(d, case1.published_d):
        assert abs(value) == pytest.approx(published.magnitude, rel=0.02)
        assert math.degrees(cmath.phase(value)) == pytest.approx(published.angle_deg, abs=0.1)


def test_uniform_angle_shift_is_invisible(case3):
    net = build_reduced(case3.network)
    shifted = case3.op.model_copy(
        update={
            "converters": [
                c.model_copy(update={"theta_rad": c.theta_rad + 0.37}) for c in case3.op.converters
            ]
        }
    )
    base, moved = build_operating_matrices(net, case3.op), build_operating_matrices(net, shifted)
    np.testing.assert_allclose(np.abs(moved.Y), np.abs(base.Y), rtol=1e-12)
    sv = lambda m: linalg.svd(m.B_half @ m.D @ m.B_half, compute_uv=False)  # noqa: E731
    np.testing.assert_allclose(sv(moved), sv(base), rtol=1e-12)


def test_zero_injection_rejected():
    net = ReducedNetwork(node_order=["a"], B_r=[[2.0]], omega0_rad_s=1.0)
    with pytest.raises(DegenerateInjectionError):
        build_operating_matrices(net, _op(["a"], [(1.0, 0.0, 0.0, 0.0)]))


def test_missing_converter_rejected():
    net = ReducedNetwork(node_order=["a", "b"], B_r=[[2.0, 0.0], [0.0, 2.0]], omega0_rad_s=1.0)
    with pytest.raises(InputError):
        build_operating_matrices(net, _op(["a"], [(1.0, 0.0, 1.0, 0.0)]))


def test_equivalent_operating_point_reproduces_d(case1):
    net = build_reduced(case1.network)
    d = [p.value for p in case1.published_d]
    np.testing.assert_allclose(np.diag(matrices_from_d(net, d).D), d, rtol=1e-12)
    op = operating_point_from_d(net.node_order, d)
    assert all(c.U_pu == 1.0 and c.theta_rad == 0.0 for c in op.converters)
