import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wick_forge import basis
from wick_forge.basis import GramCache, SpectralBasis

# exp(-t/2) L_k(t) and int_0^t xi_j xi_k ds from mpmath at 40 digits
XI_ORACLE = [
    (0, 0.7, 0.70468808971871345),
    (3, 1.3, -0.3817024704417628906),
    (10, 2.5, -0.25219661431385909094),
    (40, 7.0, 0.046962007493786177166),
    (63, 30.0, -0.087926488954580143667),
]
GRAM_ORACLE = [
    (0, 0, 1.0, 0.6321205588285576784),
    (2, 5, 3.0, 0.020537165701743876479),
    (7, 7, 4.0, 0.24827763364174619626),
    (10, 31, 2.0, 0.002806530075407255671),
]
# Hurwitz zeta(2p, K + 3/2)
TAIL_ORACLE = [
    (64, 1.0, 0.015384311965657635044),
    (64, 1.5, 0.00011833619367690835088),
    (10, 0.75, 0.60286727655061564674),
    (32, 2.0, 9.2712360667259686113e-6),
]
TRIGAMMA_3_2 = 0.93480220054467930942


def test_eigenvalues():
    b = SpectralBasis(5)
    assert np.allclose(b.lam, [1.5, 2.5, 3.5, 4.5, 5.5])
    assert np.allclose(b.power(-2), b.lam**-2.0)


@pytest.mark.parametrize("k,t,expected", XI_ORACLE)
def test_laguerre_values(k, t, expected):
    assert basis.laguerre_eval(k, t) == pytest.approx(expected, abs=1e-13)


def test_laguerre_shape_and_negative_time():
    out = basis.laguerre_functions(6, np.zeros((3, 4)))
    assert out.shape == (6, 3, 4)
    assert np.all(out == 1.0)
    with pytest.raises(ValueError):
        basis.laguerre_functions(4, -0.1)


def test_sup_bound_on_grid():
    ts = np.linspace(0.0, 200.0, 10_000)
    assert np.max(np.abs(basis.laguerre_functions(64, ts))) <= 1.0 + 1e-12


@pytest.mark.parametrize("j,k,t,expected", GRAM_ORACLE)
def test_gram_entries(j, k, t, expected):
    assert basis.gram(j, k, t) == pytest.approx(expected, abs=1e-13)


def test_gram_matrix_symmetric_psd():
    G = basis.gram_matrix(16, 2.0)
    assert np.allclose(G, G.T, atol=0)
    assert np.linalg.eigvalsh(G)[0] > -1e-14


def test_orthonormality_at_tail_horizon():
    T, bound = basis.tail_horizon(64, 1e-10)
    G = basis.gram_matrix(64, T)
    assert np.max(np.abs(G - np.eye(64))) < 1e-8
    assert bound <= 1e-10


@pytest.mark.parametrize("K,p,expected", TAIL_ORACLE)
def test_spectral_tail(K, p, expected):
    est, err = basis.spectral_tail(K, p)
    assert est == pytest.approx(expected, rel=1e-10)
    assert abs(est - expected) <= err + 8 * np.finfo(float).eps * expected


def test_spectral_tail_divergent():
    assert basis.spectral_tail(64, 0.5)[0] == math.inf


def test_delta_norm_at_zero_is_trigamma():
    d = basis.delta_norm_sq(0.0, 1.0, 64)
    assert d.total == pytest.approx(TRIGAMMA_3_2, abs=1e-10)
    assert TRIGAMMA_3_2 == pytest.approx(math.pi**2 / 2 - 4, abs=1e-15)


def test_delta_grid_matches_pointwise():
    ts = np.linspace(0, 3, 7)
    grid = basis.delta_norm_sq_grid(ts, 1.2, 20)
    assert np.allclose(grid, [basis.delta_norm_sq(t, 1.2, 20).value for t in ts], rtol=1e-14)


def test_sup_delta_norm_attained_at_zero():
    s = basis.sup_delta_norm(1.0, 64)
    assert s.argmax == 0.0
    assert 1 / (4 * s.total) == pytest.approx(0.26743625534293030668, abs=1e-6)


def test_kernel_matches_delta_vectors():
    a, b = basis.delta_vector(0.3, 1.0, 16), basis.delta_vector(1.1, 1.0, 16)
    assert basis.kernel_Kp(0.3, 1.1, 1.0, 16) == pytest.approx(a @ b, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.2, 2.0))
def test_kernel_cauchy_schwarz(r, s, p):
    k = basis.kernel_Kp(r, s, p, 24)
    assert k * k <= basis.kernel_Kp(r, r, p, 24) * basis.kernel_Kp(s, s, p, 24) * (1 + 1e-12) + 1e-300


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_gram_additive(a, b):
    lo, hi = sorted((a, b))
    total = basis.gram_matrix(8, hi)
    split = basis.gram_matrix(8, lo) + basis.gram_increment(8, lo, hi)[0]
    assert np.max(np.abs(total - split)) < 1e-12


def test_parse_grid():
    assert np.allclose(basis.parse_grid("0:1:5"), [0, 0.25, 0.5, 0.75, 1])
    assert np.allclose(basis.parse_grid("0.5,0.1"), [0.5, 0.1])


def test_gram_cache_roundtrip(tmp_path):
    c = GramCache.build(8, basis.parse_grid("0:1:5"))
    path = c.save(tmp_path / "g.bin")
    d = GramCache.load(path)
    assert d.content_hash() == c.content_hash()
    assert np.array_equal(d.matrix(0.5), c.matrix(0.5))
    # off-grid time falls back to direct quadrature
    assert np.allclose(c.matrix(0.3), basis.gram_matrix(8, 0.3), atol=1e-14)


def test_cached_gram_reuses_file(tmp_path):
    times = basis.parse_grid("0:1:3")
    a = basis.cached_gram(6, times, tmp_path)
    files = list(tmp_path.iterdir())
    assert files
    b = basis.cached_gram(6, times, tmp_path)
    assert a.content_hash() == b.content_hash()


def test_git_blob_hash():
    # `git hash-object` of the bytes "hello\n"
    assert basis.git_blob_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"
