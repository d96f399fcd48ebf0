"""Stored-energy densities: axioms, derivatives, and the linearized tensor."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rodlimit.material import (
    EnergyDensity,
    EnergyDomainError,
    check_axioms,
    energy,
    energy_and_stress,
    isotropic_elasticity,
    linearized_tensor,
    q3,
    squared_distance_to_rotations,
    stress,
)
from rodlimit.rotations import random_rotations

RNG = np.random.default_rng(20240817)

DIST2 = EnergyDensity("dist2")
SVK11 = EnergyDensity("svk", lame_lambda=1.0, lame_mu=1.0)
SVK01 = EnergyDensity("svk", lame_lambda=0.0, lame_mu=1.0)

ALL_KINDS = [DIST2, SVK11, SVK01]


def _near_identity(n: int, spread: float = 0.05) -> np.ndarray:
    return np.eye(3) + spread * RNG.standard_normal((n, 3, 3))


# ---------------------------------------------------------------------------
# constructor validation


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown density kind"):
        EnergyDensity("neo-hookean")


def test_nonpositive_mu_rejected():
    with pytest.raises(ValueError, match="lame_mu"):
        EnergyDensity("svk", lame_lambda=1.0, lame_mu=0.0)


def test_negative_lambda_rejected():
    with pytest.raises(ValueError, match="lame_lambda"):
        EnergyDensity("svk", lame_lambda=-0.5, lame_mu=1.0)


def test_nonfinite_input_rejected():
    F = np.eye(3).copy()
    F[0, 0] = np.nan
    for W in ALL_KINDS:
        with pytest.raises(ValueError, match="non-finite"):
            energy(W, F)


# ---------------------------------------------------------------------------
# energy values


@pytest.mark.parametrize("W", ALL_KINDS, ids=lambda w: f"{w.kind}-{w.lame_lambda:g}")
def test_energy_zero_at_identity(W):
    assert energy(W, np.eye(3)) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("W", ALL_KINDS, ids=lambda w: f"{w.kind}-{w.lame_lambda:g}")
def test_energy_vanishes_on_rotations(W):
    rots = random_rotations(50, np.random.default_rng(7))
    vals = energy(W, rots)
    assert np.max(np.abs(vals)) <= 1e-12


@pytest.mark.parametrize("t", [1e-2, 1e-3, 1e-4])
def test_dist2_uniaxial_stretch(t):
    # singular values of diag(1+t, 1, 1) are (1+t, 1, 1), so dist^2 = t^2
    F = np.diag([1.0 + t, 1.0, 1.0])
    assert energy(DIST2, F) == pytest.approx(t**2, rel=1e-12)


def test_dist2_equals_distance_function():
    F = _near_identity(200, spread=0.2)
    assert np.allclose(energy(DIST2, F), squared_distance_to_rotations(F), rtol=1e-13)


def test_svk_closed_form_value():
    # direct evaluation of (mu/4)|C|^2 + (lambda/8) tr(C)^2 on one matrix
    F = np.array([[1.1, 0.2, 0.0], [0.0, 0.9, 0.1], [0.05, 0.0, 1.0]])
    C = F.T @ F - np.eye(3)
    expected = 0.25 * np.sum(C * C) + (1.0 / 8.0) * np.trace(C) ** 2
    assert energy(SVK11, F) == pytest.approx(expected, rel=1e-14)


def test_frame_indifference_sampled():
    # |energy(QF) - energy(F)| <= 1e-10 (1 + energy) over 1000 samples
    n = 1000
    F = _near_identity(n, spread=0.3)
    det = np.linalg.det(F)
    F = F[det > 0.0]
    Q = random_rotations(F.shape[0], np.random.default_rng(11))
    for W in ALL_KINDS:
        base = energy(W, F)
        rotated = energy(W, Q @ F)
        assert np.max(np.abs(rotated - base) / (1.0 + np.abs(base))) <= 1e-10


def test_energy_nonnegative_sampled():
    F = _near_identity(500, spread=0.4)
    for W in ALL_KINDS:
        assert float(np.min(energy(W, F))) >= -1e-15


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=-0.4, max_value=0.4), st.floats(min_value=-0.4, max_value=0.4))
def test_dist2_diagonal_stretch_property(s, t):
    # for diagonal F with positive entries the singular values are the entries
    F = np.diag([1.0 + s, 1.0 + t, 1.0])
    assert energy(DIST2, F) == pytest.approx(s**2 + t**2, abs=1e-12)


# ---------------------------------------------------------------------------
# stress


@pytest.mark.parametrize("W", ALL_KINDS, ids=lambda w: f"{w.kind}-{w.lame_lambda:g}")
def test_stress_zero_at_identity(W):
    assert np.max(np.abs(stress(W, np.eye(3)))) <= 1e-14


@pytest.mark.parametrize("W", ALL_KINDS, ids=lambda w: f"{w.kind}-{w.lame_lambda:g}")
def test_stress_matches_finite_differences(W):
    # central differences at step 1e-5, 100 samples near the identity
    step = 1e-5
    samples = _near_identity(100, spread=0.1)
    samples = samples[np.linalg.det(samples) > 0.1]
    for F in samples:
        P = stress(W, F)
        fd = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                E = np.zeros((3, 3))
                E[i, j] = step
                fd[i, j] = (energy(W, F + E) - energy(W, F - E)) / (2.0 * step)
        scale = max(1.0, float(np.max(np.abs(fd))))
        assert np.max(np.abs(P - fd)) / scale <= 1e-5


@pytest.mark.parametrize("t", [1e-3, 1e-4])
def test_svk_stress_linearizes_to_tensor_action(t):
    # stress(Id + tH) = t L H + O(t^2)
    L = linearized_tensor(SVK11)
    H = RNG.standard_normal((3, 3))
    P = stress(SVK11, np.eye(3) + t * H)
    remainder = np.max(np.abs(P - t * L.apply(H)))
    assert remainder <= 10.0 * t**2 * max(1.0, np.max(np.abs(H)) ** 2)


def test_dist2_stress_at_conformal_stretch():
    # nearest rotation to 2 Id is Id, so DW = 2(F - Id) = 2 Id
    P = stress(DIST2, 2.0 * np.eye(3))
    assert np.allclose(P, 2.0 * np.eye(3), atol=1e-12)
    # finite-difference cross-check along the conformal direction
    step = 1e-6
    fd = (energy(DIST2, (2.0 + step) * np.eye(3)) - energy(DIST2, (2.0 - step) * np.eye(3))) / (
        2.0 * step
    )
    assert np.trace(P) == pytest.approx(fd, rel=1e-8)


def test_dist2_stress_rejects_nonpositive_determinant():
    F = np.diag([-1.0, 1.0, 1.0])
    with pytest.raises(EnergyDomainError, match="det"):
        stress(DIST2, F)


@pytest.mark.parametrize("W", ALL_KINDS, ids=lambda w: f"{w.kind}-{w.lame_lambda:g}")
def test_energy_and_stress_consistent(W):
    F = _near_identity(64, spread=0.15)
    F = F[np.linalg.det(F) > 0.1]
    v, P = energy_and_stress(W, F)
    assert np.allclose(v, energy(W, F), rtol=1e-13, atol=1e-15)
    assert np.allclose(P, stress(W, F), rtol=1e-12, atol=1e-14)


def test_energy_and_stress_scalar_shape():
    v, P = energy_and_stress(SVK01, np.eye(3) * 1.1)
    assert isinstance(v, float)
    assert P.shape == (3, 3)


# ---------------------------------------------------------------------------
# linearized tensor


def test_linearized_tensor_closed_form_svk11():
    # L(e1 x e1) = 2 mu e1 x e1 + lambda Id at lambda = mu = 1
    L = linearized_tensor(SVK11)
    E11 = np.zeros((3, 3))
    E11[0, 0] = 1.0
    assert np.allclose(L.apply(E11), 2.0 * E11 + np.eye(3), atol=1e-14)


def test_linearized_tensor_kills_skew():
    A = np.array([[0.0, 1.0, -2.0], [-1.0, 0.0, 0.5], [2.0, -0.5, 0.0]])
    for W in ALL_KINDS:
        assert np.max(np.abs(linearized_tensor(W).apply(A))) <= 1e-14


def test_linearized_tensor_svk01_is_twice_sym():
    L = linearized_tensor(SVK01)
    H = RNG.standard_normal((3, 3))
    sym = 0.5 * (H + H.T)
    assert np.allclose(L.apply(H), 2.0 * sym, atol=1e-14)


def test_dist2_linearization_is_twice_sym():
    L = linearized_tensor(DIST2)
    H = RNG.standard_normal((3, 3))
    assert np.allclose(L.apply(H), H + H.T, atol=1e-14)


@pytest.mark.parametrize("W", [DIST2, SVK11, SVK01], ids=lambda w: f"{w.kind}-{w.lame_lambda:g}")
def test_linearized_tensor_matches_fd_hessian(W):
    # entrywise agreement with second differences of the energy at Id
    L = linearized_tensor(W).matrix
    step = 1e-4
    basis = np.zeros((9, 3, 3))
    for k in range(9):
        basis[k, k // 3, k % 3] = 1.0
    H = np.zeros((9, 9))
    eye = np.eye(3)
    for i in range(9):
        for j in range(9):
            # central stencil kills the odd-order terms of the density
            H[i, j] = (
                energy(W, eye + step * (basis[i] + basis[j]))
                - energy(W, eye + step * (basis[i] - basis[j]))
                - energy(W, eye + step * (basis[j] - basis[i]))
                + energy(W, eye - step * (basis[i] + basis[j]))
            ) / (4.0 * step**2)
    scale = max(1.0, float(np.max(np.abs(L))))
    assert np.max(np.abs(H - L)) / scale <= 1e-5


def test_elasticity_tensor_shape_validation():
    from rodlimit.material import ElasticityTensor

    with pytest.raises(ValueError, match="9x9"):
        ElasticityTensor(np.eye(3))


def test_elasticity_tensor_symmetric_valued_and_self_adjoint():
    L = isotropic_elasticity(0.7, 1.3)
    F = RNG.standard_normal((3, 3))
    G = RNG.standard_normal((3, 3))
    LF = L.apply(F)
    assert np.allclose(LF, LF.T, atol=1e-14)
    assert np.allclose(LF, L.apply(0.5 * (F + F.T)), atol=1e-14)
    assert np.sum(LF * G) == pytest.approx(np.sum(F * L.apply(G)), rel=1e-12)


def test_elasticity_tensor_positive_on_symmetric():
    # eigenvalues on symmetric matrices: 2 mu (multiplicity 5) and 2 mu + 3 lambda
    lam, mu = 1.0, 1.0
    evals = isotropic_elasticity(lam, mu).symmetric_eigenvalues()
    assert np.min(evals) == pytest.approx(2.0 * mu, rel=1e-12)
    assert np.max(evals) == pytest.approx(2.0 * mu + 3.0 * lam, rel=1e-12)


# ---------------------------------------------------------------------------
# q3


def test_q3_vanishes_on_skew():
    A = np.array([[0.0, 2.0, -1.0], [-2.0, 0.0, 3.0], [1.0, -3.0, 0.0]])
    for W in ALL_KINDS:
        assert q3(linearized_tensor(W), A) == pytest.approx(0.0, abs=1e-13)


def test_q3_uniaxial_value():
    # 2 mu |sym F|^2 + lambda (tr F)^2 = 2 + 1 at lambda = mu = 1, F = e1 x e1
    E11 = np.zeros((3, 3))
    E11[0, 0] = 1.0
    assert q3(linearized_tensor(SVK11), E11) == pytest.approx(3.0, rel=1e-14)


def test_q3_shear_value():
    S = np.zeros((3, 3))
    S[0, 1] = S[1, 0] = 1.0
    assert q3(linearized_tensor(SVK01), S) == pytest.approx(4.0, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(
    st.tuples(*(st.floats(min_value=-2.0, max_value=2.0) for _ in range(9))),
)
def test_q3_depends_only_on_symmetric_part(entries):
    F = np.array(entries).reshape(3, 3)
    L = linearized_tensor(SVK11)
    assert q3(L, F) == pytest.approx(q3(L, 0.5 * (F + F.T)), abs=1e-10)


def test_q3_coercive_on_symmetric_samples():
    L = linearized_tensor(SVK11)
    c_min = float(np.min(L.symmetric_eigenvalues()))
    assert c_min > 0.0
    for _ in range(100):
        H = RNG.standard_normal((3, 3))
        sym = 0.5 * (H + H.T)
        assert q3(L, H) >= c_min * np.sum(sym * sym) - 1e-12


# ---------------------------------------------------------------------------
# axiom report


def test_check_axioms_dist2_passes_with_unit_coercivity():
    report = check_axioms(DIST2, sample_count=100, tol=1e-8)
    assert report.passed
    assert report.coercivity_constant == pytest.approx(1.0, rel=1e-6)


def test_check_axioms_svk_near_identity_passes():
    report = check_axioms(SVK11, sample_count=100, tol=1e-6)
    names = {c.name: c for c in report.checks}
    assert names["frame indifference"].passed
    assert names["vanishes on rotations"].passed
    assert names["Hessian symmetry at Id"].passed


def test_check_axioms_svk_compression_flags_coercivity():
    # wide scans include a compression path through det F <= 0 where the
    # quartic density degenerates
    report = check_axioms(SVK11, sample_count=200, tol=1e-6, spread=0.8)
    names = {c.name: c for c in report.checks}
    assert not names["coercivity W >= c dist^2"].passed
    assert not report.passed


def test_check_axioms_rejects_empty_sample():
    with pytest.raises(ValueError, match="sample_count"):
        check_axioms(DIST2, sample_count=0, tol=1e-8)


def test_check_axioms_report_renders():
    report = check_axioms(DIST2, sample_count=10, tol=1e-8)
    text = str(report)
    assert "coercivity constant estimate" in text
    assert "frame indifference" in text
