import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsifuse.cube import HsiCube
from hsifuse.degradation import (
    PsfKernel,
    SrfMatrix,
    load_psf_csv,
    load_srf_csv,
    make_block_average_kernel,
    make_gaussian_srf,
    random_blob_cube,
    simulate_pair,
    spatial_degrade,
    spectral_degrade,
)
from hsifuse.errors import DataError, FormatError, ShapeError


def brute_spatial(x: HsiCube, k: PsfKernel) -> np.ndarray:
    """Independent oracle: explicit loops over bands and disjoint blocks."""
    s = k.scale
    out = np.zeros((x.bands, x.rows // s, x.cols // s), dtype=np.float64)
    for b in range(x.bands):
        for i in range(x.rows // s):
            for j in range(x.cols // s):
                acc = 0.0
                for u in range(s):
                    for v in range(s):
                        acc += k.weights[u, v] * float(x.data[b, i * s + u, j * s + v])
                out[b, i, j] = acc
    return out


def brute_spectral(x: HsiCube, r: SrfMatrix) -> np.ndarray:
    """Independent oracle: explicit per-pixel matrix products."""
    out = np.zeros((r.msi_bands, x.rows, x.cols), dtype=np.float64)
    for i in range(x.rows):
        for j in range(x.cols):
            out[:, i, j] = r.weights @ x.data[:, i, j].astype(np.float64)
    return out


def test_constant_cube_unchanged_by_spatial(make_cube):
    cube = HsiCube(data=np.full((2, 4, 4), 0.5, dtype=np.float32))
    k = PsfKernel(np.array([[0.7, 0.1], [0.1, 0.1]]))
    out = spatial_degrade(cube, k)
    assert np.allclose(out.data, 0.5, atol=1e-7)


def test_block_mean_example():
    data = (np.arange(1, 17, dtype=np.float64) / 16).reshape(1, 4, 4)
    cube = HsiCube(data=data.astype(np.float32))
    out = spatial_degrade(cube, make_block_average_kernel(2))
    expected = np.array([[3.5, 5.5], [11.5, 13.5]]) / 16
    assert np.allclose(out.data[0], expected, atol=1e-7)


def test_one_hot_kernel_selects_corner(make_cube):
    cube = make_cube(2, 4, 4)
    one_hot = np.zeros((2, 2))
    one_hot[0, 0] = 1.0
    out = spatial_degrade(cube, PsfKernel(one_hot))
    assert np.allclose(out.data, cube.data[:, ::2, ::2], atol=1e-7)


def test_spatial_rejects_nondivisible(make_cube):
    with pytest.raises(ShapeError):
        spatial_degrade(make_cube(1, 5, 4), make_block_average_kernel(2))


def test_identity_srf_passthrough(make_cube):
    cube = make_cube(3, 2, 2)
    out = spectral_degrade(cube, SrfMatrix(np.eye(3)))
    assert np.allclose(out.data, cube.data, atol=1e-7)


def test_srf_dot_product_example():
    cube = HsiCube(data=np.array([0.2, 0.6], dtype=np.float32).reshape(2, 1, 1))
    out = spectral_degrade(cube, SrfMatrix(np.array([[0.5, 0.5]])))
    assert out.data[0, 0, 0] == pytest.approx(0.4, abs=1e-7)


def test_constant_spectrum_preserved(rng):
    data = np.broadcast_to(
        rng.uniform(0.1, 0.9, size=(1, 3, 3)).astype(np.float32), (5, 3, 3)
    ).copy()
    cube = HsiCube(data=data)
    r = SrfMatrix(rng.dirichlet(np.ones(5), size=2))
    out = spectral_degrade(cube, r)
    assert np.allclose(out.data, data[:2], atol=1e-6)


def test_spectral_rejects_band_mismatch(make_cube):
    with pytest.raises(ShapeError):
        spectral_degrade(make_cube(3, 2, 2), SrfMatrix(np.eye(4)))


def test_brute_force_agreement(rng):
    for _ in range(10):
        s = int(rng.choice([2, 4]))
        bands = int(rng.integers(1, 8))
        rows = s * int(rng.integers(1, 6))
        cols = s * int(rng.integers(1, 6))
        cube = HsiCube(data=rng.uniform(0, 1, size=(bands, rows, cols)).astype(np.float32))
        k = PsfKernel(rng.dirichlet(np.ones(s * s)).reshape(s, s))
        r = SrfMatrix(rng.dirichlet(np.ones(bands), size=max(1, bands // 2)))
        assert np.abs(spatial_degrade(cube, k).data - brute_spatial(cube, k)).max() < 1e-6
        assert np.abs(spectral_degrade(cube, r).data - brute_spectral(cube, r)).max() < 1e-6


def test_block_average_kernel_values():
    assert np.array_equal(make_block_average_kernel(1).weights, [[1.0]])
    assert np.allclose(make_block_average_kernel(2).weights, 0.25)
    k32 = make_block_average_kernel(32)
    assert np.allclose(k32.weights, 1.0 / 1024)
    assert abs(k32.weights.sum() - 1.0) < 1e-6
    with pytest.raises(ValueError):
        make_block_average_kernel(0)


def test_kernel_and_srf_invariants():
    with pytest.raises(DataError):
        PsfKernel(np.array([[0.5, 0.6], [0.0, 0.0]]))
    with pytest.raises(DataError):
        PsfKernel(np.array([[1.5, -0.5], [0.0, 0.0]]))
    with pytest.raises(DataError):
        SrfMatrix(np.array([[0.5, 0.4]]))


def test_load_srf_csv(tmp_path):
    path = tmp_path / "srf.csv"
    path.write_text("# band1,band2\n2,2\n1,3\n")
    srf = load_srf_csv(path)
    assert np.allclose(srf.weights, [[0.5, 0.5], [0.25, 0.75]])

    path.write_text("0.5,0.5\n0.25,0.75\n")
    assert np.allclose(load_srf_csv(path).weights, [[0.5, 0.5], [0.25, 0.75]])

    path.write_text("0,0\n1,1\n")
    with pytest.raises(DataError):
        load_srf_csv(path)

    path.write_text("1,2\n-1,2\n")
    with pytest.raises(DataError):
        load_srf_csv(path)

    path.write_text("1,2\n1\n")
    with pytest.raises(FormatError):
        load_srf_csv(path)


def test_load_psf_csv(tmp_path):
    path = tmp_path / "psf.csv"
    path.write_text("1,1\n1,1\n")
    assert np.allclose(load_psf_csv(path).weights, 0.25)
    path.write_text("1,1,1\n1,1,1\n")
    with pytest.raises(FormatError):
        load_psf_csv(path)


def test_simulate_pair_noiseless_composition(make_cube):
    cube = make_cube(4, 8, 8)
    k = make_block_average_kernel(2)
    r = SrfMatrix(np.eye(4))
    y, z = simulate_pair(cube, k, r)
    assert np.array_equal(y.data, spatial_degrade(cube, k).data)
    assert np.array_equal(z.data, cube.data)


def test_simulate_pair_deterministic(make_cube):
    cube = make_cube(3, 8, 8)
    k = make_block_average_kernel(2)
    r = SrfMatrix(np.eye(3))
    y1, z1 = simulate_pair(cube, k, r, noise_snr_db=25.0, seed=99)
    y2, z2 = simulate_pair(cube, k, r, noise_snr_db=25.0, seed=99)
    assert np.array_equal(y1.data, y2.data)
    assert np.array_equal(z1.data, z2.data)
    y3, _ = simulate_pair(cube, k, r, noise_snr_db=25.0, seed=100)
    assert not np.array_equal(y1.data, y3.data)


def test_simulate_pair_snr(rng):
    cube = HsiCube(data=rng.uniform(0.3, 0.7, size=(8, 32, 32)).astype(np.float32))
    k = make_block_average_kernel(2)
    r = SrfMatrix(rng.dirichlet(np.ones(8), size=3))
    y, z = simulate_pair(cube, k, r, noise_snr_db=30.0, seed=5)
    clean_y = spatial_degrade(cube, k).data.astype(np.float64)
    clean_z = spectral_degrade(cube, r).data.astype(np.float64)
    for clean, noisy in ((clean_y, y.data), (clean_z, z.data)):
        noise = noisy.astype(np.float64) - clean
        snr = 10 * np.log10(np.mean(clean**2) / np.mean(noise**2))
        assert abs(snr - 30.0) < 0.5


# -- algebraic properties ---------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_spatial_commutes_with_band_permutation(seed):
    rng = np.random.default_rng(seed)
    cube = HsiCube(data=rng.uniform(0, 1, size=(4, 4, 4)).astype(np.float32))
    k = PsfKernel(rng.dirichlet(np.ones(4)).reshape(2, 2))
    perm = rng.permutation(4)
    direct = spatial_degrade(cube, k).data[perm]
    permuted = spatial_degrade(HsiCube(data=cube.data[perm]), k).data
    assert np.array_equal(direct, permuted)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_spectral_commutes_with_pixel_permutation(seed):
    rng = np.random.default_rng(seed)
    cube = HsiCube(data=rng.uniform(0, 1, size=(4, 3, 3)).astype(np.float32))
    r = SrfMatrix(rng.dirichlet(np.ones(4), size=2))
    perm = rng.permutation(9)
    direct = spectral_degrade(cube, r).data.reshape(2, -1)[:, perm]
    shuffled = HsiCube(data=cube.data.reshape(4, -1)[:, perm].reshape(4, 3, 3))
    assert np.array_equal(direct, spectral_degrade(shuffled, r).data.reshape(2, -1))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_degradations_commute(seed):
    rng = np.random.default_rng(seed)
    cube = HsiCube(data=rng.uniform(0, 1, size=(5, 8, 8)).astype(np.float32))
    k = PsfKernel(rng.dirichlet(np.ones(16)).reshape(4, 4))
    r = SrfMatrix(rng.dirichlet(np.ones(5), size=2))
    a = spectral_degrade(spatial_degrade(cube, k), r).data
    b = spatial_degrade(spectral_degrade(cube, r), k).data
    assert np.abs(a.astype(np.float64) - b.astype(np.float64)).max() < 1e-5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_operators_are_linear(seed):
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(0.1, 0.45, size=(3, 4, 4))
    x2 = rng.uniform(0.1, 0.45, size=(3, 4, 4))
    a, b = 0.6, 0.4
    k = PsfKernel(rng.dirichlet(np.ones(4)).reshape(2, 2))
    r = SrfMatrix(rng.dirichlet(np.ones(3), size=2))
    combo = HsiCube(data=(a * x1 + b * x2).astype(np.float32))
    c1 = HsiCube(data=x1.astype(np.float32))
    c2 = HsiCube(data=x2.astype(np.float32))
    for op in (lambda c: spatial_degrade(c, k), lambda c: spectral_degrade(c, r)):
        lhs = op(combo).data.astype(np.float64)
        rhs = a * op(c1).data.astype(np.float64) + b * op(c2).data.astype(np.float64)
        assert np.abs(lhs - rhs).max() < 1e-5


def test_gaussian_srf_rows_are_stochastic():
    srf = make_gaussian_srf(4, 16)
    assert srf.weights.shape == (4, 16)
    assert np.allclose(srf.weights.sum(axis=1), 1.0, atol=1e-9)


def test_random_blob_cube_properties():
    cube = random_blob_cube(4, 16, 16, blobs=5, seed=3)
    assert cube.shape == (4, 16, 16)
    assert cube.data.min() >= 0.05 - 1e-6
    assert cube.data.max() <= 0.95 + 1e-6
    again = random_blob_cube(4, 16, 16, blobs=5, seed=3)
    assert np.array_equal(cube.data, again.data)
