import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from mlfetidp import kernels
from mlfetidp.kernels import CholeskyBlocks, DenseBlocks, LUBlocks

from .conftest import multilevel

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


def blocks_strategy():
    return st.tuples(st.lists(st.integers(0, 9), min_size=0, max_size=6), st.integers(0, 2**31))


def _random_blocks(sizes, seed, spd=False):
    rng = np.random.default_rng(seed)
    out = []
    for n in sizes:
        a = rng.standard_normal((n, n))
        out.append(a @ a.T + n * np.eye(n) if spd else a + n * np.eye(n))
    return out


def _blockdiag(blocks):
    return sla.block_diag(*blocks) if blocks else np.zeros((0, 0))


@pytest.mark.parametrize("backend", BACKENDS)
@given(blocks_strategy())
@settings(max_examples=40, deadline=None)
def test_lu_blocks(backend, data):
    sizes, seed = data
    blocks = _random_blocks(sizes, seed)
    A = _blockdiag(blocks)
    b = np.random.default_rng(seed + 1).standard_normal(A.shape[0])
    x = LUBlocks([sla.lu_factor(B) for B in blocks], backend).solve(b)
    assert np.allclose(A @ x, b, atol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
@given(blocks_strategy())
@settings(max_examples=40, deadline=None)
def test_cholesky_blocks(backend, data):
    sizes, seed = data
    blocks = _random_blocks(sizes, seed, spd=True)
    A = _blockdiag(blocks)
    b = np.random.default_rng(seed + 1).standard_normal(A.shape[0])
    x = CholeskyBlocks([np.linalg.cholesky(B) for B in blocks], backend).solve(b)
    assert np.allclose(A @ x, b, atol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
@given(blocks_strategy())
@settings(max_examples=40, deadline=None)
def test_dense_blocks(backend, data):
    sizes, seed = data
    blocks = _random_blocks(sizes, seed)
    x = np.random.default_rng(seed + 1).standard_normal(sum(sizes))
    assert np.allclose(DenseBlocks(blocks, backend).matvec(x), _blockdiag(blocks) @ x, atol=1e-12)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
@given(blocks_strategy())
@settings(max_examples=30, deadline=None)
def test_backends_agree(data):
    sizes, seed = data
    blocks = _random_blocks(sizes, seed)
    b = np.random.default_rng(seed + 2).standard_normal(sum(sizes))
    f = [sla.lu_factor(B) for B in blocks]
    assert np.allclose(LUBlocks(f, "python").solve(b), LUBlocks(f, "cython").solve(b),
                       rtol=1e-12, atol=1e-12)
    assert np.allclose(DenseBlocks(blocks, "python").matvec(b), DenseBlocks(blocks, "cython").matvec(b),
                       rtol=1e-13, atol=1e-13)


def test_unknown_backend():
    with pytest.raises(ValueError):
        DenseBlocks([np.eye(2)], "fortran")


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_solver_level_parity():
    from mlfetidp.krylov import gmres_right
    from mlfetidp.precond import (
        FetiDpSaddleSystem,
        MFPreconditioner,
        assemble_saddle_system,
        condensed_rhs,
        make_coarse_solver,
    )

    its = []
    for backend in ("python", "cython"):
        ml = multilevel(3, 3, "c+e", backend)
        lv = ml.level(1)
        fg, _ = condensed_rhs(lv, ml.problem.f)
        system, rhs = assemble_saddle_system(lv, fg)
        rep = gmres_right(system, MFPreconditioner(lv, make_coarse_solver(ml, 1)), rhs, 1e-10)
        its.append((rep.iterations, rep.x))
    assert its[0][0] == its[1][0]
    assert np.allclose(its[0][1], its[1][1], rtol=1e-9, atol=1e-12)


def test_env_switch_selects_fallback():
    code = "import mlfetidp.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={**os.environ, "MLFETIDP_PURE_PYTHON": "1"}, check=True)
    assert out.stdout.strip() == "python"


def test_benchmark_script_runs(capsys):
    import importlib.util
    import pathlib

    path = pathlib.Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--levels", "2", "--ratio", "3", "--repeat", "1"])
    assert "fetidp-mf solve" in capsys.readouterr().out
