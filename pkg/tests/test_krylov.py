import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.linalg import aslinearoperator

from mlfetidp.krylov import (
    Breakdown,
    NoConvergence,
    NotSymmetric,
    Stagnation,
    arnoldi_topk,
    check_symmetric,
    compare_spectra,
    dense_spectrum,
    gmres_right,
    pcg,
)


def spd(n, seed, cond=50.0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * np.geomspace(1.0, cond, n)) @ Q.T


def test_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    for solver in (pcg, gmres_right):
        rep = solver(np.eye(5), None, b, tol=1e-12)
        assert rep.iterations == 1 and np.allclose(rep.x, b)


def test_zero_rhs():
    assert pcg(np.eye(3), None, np.zeros(3)).iterations == 0
    assert gmres_right(np.eye(3), None, np.zeros(3)).iterations == 0


@given(st.integers(2, 30), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_pcg_and_gmres_solve(n, seed):
    A = spd(n, seed)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    x = np.linalg.solve(A, b)
    for solver in (pcg, gmres_right):
        rep = solver(A, np.diag(1 / np.diag(A)), b, tol=1e-10)
        assert rep.converged
        assert np.linalg.norm(A @ rep.x - b) <= 1e-9 * np.linalg.norm(b)
        assert np.linalg.norm(rep.x - x) <= 1e-6 * np.linalg.norm(x)


@given(st.integers(3, 40), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_gmres_history_monotone(n, seed):
    rng = np.random.default_rng(seed)
    A = np.eye(n) * 3 + rng.standard_normal((n, n)) / np.sqrt(n)
    rep = gmres_right(A, None, rng.standard_normal(n), tol=1e-10)
    h = np.array(rep.residual_history)
    assert np.all(np.diff(h) <= 1e-12)


@given(st.integers(3, 40), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_pcg_energy_error_monotone(n, seed):
    A = spd(n, seed, cond=1e3)
    b = np.random.default_rng(seed).standard_normal(n)
    x = np.linalg.solve(A, b)
    errs = []
    for k in range(1, n + 1):
        try:
            rep = pcg(A, None, b, tol=1e-300, maxiter=k, check_symmetry=False)
        except Breakdown:
            break
        e = rep.x - x
        errs.append(np.sqrt(e @ A @ e))
    assert np.all(np.diff(errs) <= 1e-9 * errs[0])


@pytest.mark.parametrize("L,ratio", [(2, 3), (3, 3), (2, 4)])
def test_gmres_pcg_parity_on_model_problems(L, ratio, constraints):
    from mlfetidp.precond import BddcPreconditioner, SchurOperator, condensed_rhs, make_coarse_solver

    from .conftest import multilevel

    ml = multilevel(L, ratio, constraints)
    lv = ml.level(1)
    fg, _ = condensed_rhs(lv, ml.problem.f)
    M = BddcPreconditioner(lv, make_coarse_solver(ml, 1))
    p = pcg(SchurOperator(lv), M, fg, 1e-8)
    g = gmres_right(SchurOperator(lv), M, fg, 1e-8)
    assert p.converged and g.converged
    assert abs(p.iterations - g.iterations) <= 2


def test_breakdown_on_indefinite():
    with pytest.raises(Breakdown):
        pcg(np.diag([1.0, -1.0]), None, np.array([0.0, 1.0]))


def test_not_symmetric():
    A = np.array([[2.0, 1.0], [0.0, 2.0]])
    assert not check_symmetric(aslinearoperator(A))
    with pytest.raises(NotSymmetric):
        pcg(A, None, np.ones(2))


def test_stagnation():
    # the cyclic shift needs n steps; cap below that
    n = 8
    A = np.roll(np.eye(n), 1, axis=0)
    b = np.zeros(n)
    b[0] = 1.0
    with pytest.raises(Stagnation):
        gmres_right(A, None, b, tol=1e-10, maxiter=n - 1)
    assert gmres_right(A, None, b, tol=1e-10).iterations == n


def test_gmres_singular_consistent_stops_on_invariant_subspace():
    A = np.diag([1.0, 2.0, 0.0])
    rep = gmres_right(A, None, np.array([1.0, 1.0, 0.0]), tol=1e-12)
    assert rep.converged and np.allclose(rep.x, [1.0, 0.5, 0.0])
    with pytest.raises(Stagnation):
        gmres_right(A, None, np.array([1.0, 1.0, 1.0]), tol=1e-12)


def test_arnoldi_diagonal():
    rep = arnoldi_topk(np.diag(np.arange(1.0, 11.0)), k=1)
    assert rep.lambda_max == pytest.approx(10.0, rel=1e-10)


@given(st.integers(0, 1000))
@settings(max_examples=10, deadline=None)
def test_arnoldi_full_matches_dense(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((25, 25))
    a = arnoldi_topk(A, k=25, tol=1e-8)
    d = dense_spectrum(A)
    assert compare_spectra(a, d, drop=(), tol=1e-6).matched


def test_arnoldi_topk_leading():
    A = spd(200, 9, cond=1e3)
    top = arnoldi_topk(A, k=5, tol=1e-10).eigenvalues
    assert np.allclose(top.real, np.sort(np.linalg.eigvalsh(A))[::-1][:5], rtol=1e-8)


def test_arnoldi_bad_k_and_budget():
    with pytest.raises(ValueError):
        arnoldi_topk(np.eye(3), k=4)
    A = spd(100, 1, cond=1e6)
    with pytest.raises(NoConvergence):
        arnoldi_topk(A, k=10, tol=1e-14, maxdim=12)


def test_arnoldi_reproducible():
    A = spd(80, 2)
    assert np.array_equal(arnoldi_topk(A, 3).eigenvalues, arnoldi_topk(A, 3).eigenvalues)


def test_compare_spectra_drops_zero_and_one():
    m = compare_spectra([1, 1, 2, 3], [2, 3])
    assert m.matched and m.compared == 2
    m = compare_spectra([0, 1, 2, 3.5], [2, 3])
    assert not m.matched
    assert list(m.unmatched_a) == [3.5] and list(m.unmatched_b) == [3]


def test_compare_spectra_complex_pairs_and_truncation():
    a = [2 + 1j, 2 - 1j, 0.5]
    assert compare_spectra(a, [2 - 1j, 0.5, 2 + 1j]).matched
    assert not compare_spectra(a, [2 + 1j, 2 + 1j, 0.5]).matched
    assert compare_spectra([5, 4, 3], [5, 4], truncated=True).matched
    assert not compare_spectra([5, 4, 3], [5, 4]).matched


def test_spectrum_order_is_by_magnitude():
    ev = dense_spectrum(np.diag([1.0, -3.0, 2.0])).eigenvalues
    assert np.allclose(np.abs(ev), [3, 2, 1])
