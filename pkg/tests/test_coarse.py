import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from mlfetidp.coarse import (
    build_edge_averages,
    compute_coarse_basis,
    make_constraint_set,
    select_corners,
)
from mlfetidp.fem import assemble_subdomain
from mlfetidp.linalg import Singular, cholesky_factor

from .conftest import multilevel


def _global_schur(lv):
    A = lv.A.toarray()
    g, i = lv.gamma, lv.interior
    return A[np.ix_(g, g)] - A[np.ix_(g, i)] @ np.linalg.solve(A[np.ix_(i, i)], A[np.ix_(i, g)])


def test_schur_blocks_psd_and_floating():
    ml = multilevel(2, 3)
    blocks = ml.level(1).schur.blocks
    for s, S in enumerate(blocks):
        assert np.allclose(S, S.T)
        ev = np.linalg.eigvalsh(S)
        assert ev.min() > -1e-12
        floating = s == 4  # the middle subdomain touches no boundary
        assert (ev.min() < 1e-10) == floating
    assert np.allclose(blocks[4] @ np.ones(len(blocks[4])), 0.0, atol=1e-12)


def test_schur_block_matches_dense_condensation():
    ml = multilevel(2, 3)
    lv, p = ml.level(1), ml.problem
    s = 4
    Ks, l2g = assemble_subdomain(p.grid, ml.hierarchy.box(1, s), p.dofmap)
    g = np.isin(l2g, lv.cls.sub_interface[s])
    S = Ks[np.ix_(g, g)] - Ks[np.ix_(g, ~g)] @ np.linalg.solve(Ks[np.ix_(~g, ~g)], Ks[np.ix_(~g, g)])
    assert np.allclose(S, lv.schur.blocks[s], atol=1e-12)


@pytest.mark.parametrize("L", [2, 3])
def test_assembled_schur_equals_global_condensation(L, rng):
    lv = multilevel(L, 3).level(1)
    R = lv.maps.R
    Shat = (R.T @ lv.schur.as_sparse() @ R).toarray()
    assert np.allclose(Shat, _global_schur(lv), atol=1e-10)
    w = rng.standard_normal(lv.maps.nGamma)
    assert np.allclose(R.T @ lv.S(R @ w), Shat @ w, atol=1e-12)


def test_condensed_solve_matches_direct():
    ml = multilevel(2, 3)
    lv, p = ml.level(1), ml.problem
    fg, uI0 = lv.condense(p.f)
    w = np.linalg.solve(_global_schur(lv), fg)
    u = lv.extend(w, uI0)
    ref = spla.spsolve(p.K.tocsc(), p.f)
    assert np.linalg.norm(u - ref) <= 1e-8 * np.linalg.norm(ref)


def test_corner_selection_ratio3():
    lv = multilevel(2, 3).level(1)
    corners = select_corners(lv.hierarchy, 1, lv.mesh, lv.cls)
    assert len(corners) == 4
    assert all(len(c.subdomains) == 4 for c in corners)
    cs = make_constraint_set(lv.cls, lv.maps, corners)
    assert cs.nc == 4
    assert cs.C.shape[0] == 16
    assert np.array_equal(np.asarray(cs.Rc.sum(axis=0)).ravel(), [4, 4, 4, 4])


def test_edge_averages_ratio3():
    lv = multilevel(2, 3, "c+e").level(1)
    edges = build_edge_averages(lv.hierarchy, 1, lv.mesh, lv.cls)
    assert len(edges) == 12
    for e in edges:
        assert len(e.subdomains) == 2
        assert e.weights @ np.ones(len(e.dofs)) == pytest.approx(1.0)
    assert lv.constraints.nc == 16
    # each constraint row of C touches one subdomain only
    C = lv.constraints.C.tocsr()
    w_sub = lv.maps.w_sub
    for r in range(C.shape[0]):
        assert len(set(w_sub[C.indices[C.indptr[r]:C.indptr[r + 1]]])) == 1


def test_every_row_has_one_subdomain_on_coarse_levels():
    lv = multilevel(3, 3, "c+e").level(2)
    C = lv.constraints.C.tocsr()
    for r in range(C.shape[0]):
        assert len(set(lv.maps.w_sub[C.indices[C.indptr[r]:C.indptr[r + 1]]])) == 1


@pytest.fixture(params=[(2, 1), (3, 1), (3, 2)], ids=str)
def level(request, constraints):
    L, lv = request.param
    return multilevel(L, 3, constraints).level(lv)


def test_coarse_basis_constraints(level):
    cs, co = level.constraints, level.coarse
    assert abs(cs.C @ co.Psi - cs.Rc).max() <= 1e-12
    Sc = co.Sc.toarray()
    assert np.abs(Sc - Sc.T).max() <= 1e-12 * np.abs(Sc).max()
    Psi = co.Psi.toarray()
    S = level.schur.as_sparse().toarray()
    assert np.allclose(Psi.T @ S @ Psi, Sc, atol=1e-10)
    cholesky_factor(Sc)


def test_bordered_elimination_formula(level):
    cs, co = level.constraints, level.coarse
    S = level.schur.as_sparse().toarray()
    C, Rc = cs.C.toarray(), cs.Rc.toarray()
    Phi = np.linalg.lstsq(C, Rc, rcond=None)[0]  # any particular solution of C Phi = R_c
    assert np.allclose(C @ Phi, Rc)
    nW, nX = C.shape[1], C.shape[0]
    K = np.block([[S, C.T], [C, np.zeros((nX, nX))]])
    rhs = np.vstack([S @ Phi, np.zeros((nX, Phi.shape[1]))])
    Sc = Phi.T @ S @ Phi - rhs.T @ np.linalg.solve(K, rhs)
    assert np.allclose(Sc, co.Sc.toarray(), atol=1e-10)


def test_energy_minimality(level):
    S = level.schur.as_sparse().toarray()
    N = sla.null_space(level.constraints.C.toarray())
    assert np.abs(N.T @ S @ level.coarse.Psi.toarray()).max() <= 1e-10


def test_splitting_roundtrip(level, rng):
    cs, co = level.constraints, level.coarse
    N = sla.null_space(cs.C.toarray())
    Psi = co.Psi.toarray()
    Rc = cs.Rc.toarray()
    for _ in range(3):
        a = rng.standard_normal(cs.nc)
        w = Psi @ a + N @ rng.standard_normal(N.shape[1])
        u = np.linalg.lstsq(Rc, cs.C @ w, rcond=None)[0]
        w_delta = w - Psi @ u
        assert np.allclose(u, a, atol=1e-10)
        assert np.abs(cs.C @ w_delta).max() <= 1e-10


def test_s_delta_inverse(level, rng):
    x = rng.standard_normal(level.maps.nW)
    y = level.S_Delta_inv(x)
    assert x @ y > 0
    assert np.abs(level.constraints.C @ y).max() <= 1e-10
    # solves S y + C^T mu = x on null(C)
    w, mu = level.coarse.solve_saddle(x, np.zeros(level.constraints.C.shape[0]))
    assert np.allclose(w, y)
    assert np.allclose(level.S(w) + level.constraints.C.T @ mu, x, atol=1e-10)


def test_s_delta_inverse_kills_coarse_basis(level):
    Psi = level.coarse.Psi.toarray()
    for j in range(min(5, Psi.shape[1])):
        assert np.abs(level.S_Delta_inv(level.S(Psi[:, j]))).max() <= 1e-10


@pytest.mark.parametrize("alpha", [2.5, -0.3])
def test_constraint_scaling_invariance(alpha, constraints):
    lv = multilevel(2, 3, constraints).level(1)
    scaled = lv.constraints.scaled(alpha)
    co = compute_coarse_basis(lv.schur, scaled, lv.maps)
    assert abs(co.Psi - lv.coarse.Psi).max() <= 1e-12
    assert abs(co.Sc - lv.coarse.Sc).max() <= 1e-12


def test_missing_constraints_are_singular():
    lv = multilevel(2, 3).level(1)
    empty = make_constraint_set(lv.cls, lv.maps, [])
    with pytest.raises(Singular, match="subdomain 4"):
        compute_coarse_basis(lv.schur, empty, lv.maps)


def test_corners_alone_are_enough():
    lv = multilevel(2, 3).level(1)
    assert lv.constraints.nc == 4  # factorization of every saddle block succeeded


def test_coarse_matrix_spd_on_all_levels(constraints):
    ml = multilevel(4, 3, constraints)
    for k in range(1, ml.L):
        cholesky_factor(ml.level(k).coarse.Sc.toarray())


def test_unknown_constraint_set():
    from mlfetidp.coarse import Level

    lv = multilevel(2, 3).level(1)
    with pytest.raises(ValueError):
        Level(lv.hierarchy, 1, lv.mesh, "faces")
