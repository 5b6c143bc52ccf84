import numpy as np
import pytest

import sok


def test_fft_matches_numpy_orthonormal():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    np.testing.assert_allclose(sok.fft(x), np.fft.fft(x, norm="ortho"), atol=1e-12)
    np.testing.assert_allclose(sok.ifft(sok.fft(x)), x, atol=1e-12)


def test_power_spectrum_peaks():
    n = 128
    t = 2 * np.pi * np.arange(n) / n
    p = sok.power_spectrum(3 * np.cos(4 * t) + np.cos(22 * t))
    assert set(np.flatnonzero(p[: n // 2] > 1e-8 * p.max())) == {4, 22}
    assert p[4] == pytest.approx(9 * n / 4)


def test_resample_keeps_nodes():
    t = 2 * np.pi * np.arange(40) / 40
    f = np.cos(2 * t) + np.exp(np.sin(4 * t))
    fine = sok.spectral_resample(f, [120])
    np.testing.assert_allclose(fine[::3], f, atol=1e-10)


def test_grf_resolution_independent():
    a = sok.sample_grf(resolution=32, k_max=6, seed=3)
    b = sok.sample_grf(resolution=64, k_max=6, seed=3)
    np.testing.assert_allclose(b[::2], a, atol=1e-12)


def test_dataset_and_model_roundtrip(tmp_path):
    ds = sok.generate_dataset("heat", samples=4, n_train=3, resolution=32, k_max=6, seed=1)
    assert ds["inputs"].shape == (4, 1, 32)
    # heat semigroup damps every mode
    assert np.linalg.norm(ds["outputs"]) < np.linalg.norm(ds["inputs"])

    m = sok.FnoModel(n_modes=[6], hidden_channels=4, n_layers=2, seed=5)
    assert m.n_params == m.counted_params
    y = m(ds["inputs"])
    assert y.shape == (4, 1, 32)
    path = tmp_path / "m.fnom"
    m.save(path)
    back, *_ = sok.load_checkpoint(path)
    np.testing.assert_array_equal(back(ds["inputs"]), y)
    np.testing.assert_array_equal(sok.predict(path, ds["inputs"]), y)


def test_cli_and_errors(tmp_path):
    out = tmp_path / "d.fnod"
    code, _, err = sok.cli(["gen", "--problem", "heat", "-n", "6", "--res", "32", "--kmax", "6", "-o", str(out)])
    assert code == 0, err
    assert sok.read_dataset(out)["inputs"].shape == (6, 1, 32)
    assert sok.cli(["nope"])[0] == 2
    bad = tmp_path / "bad.fnod"
    bad.write_bytes(b"XXXX" + out.read_bytes()[4:])
    with pytest.raises(sok.FormatError):
        sok.read_dataset(bad)
    with pytest.raises(sok.NyquistError):
        sok.sample_grf(resolution=16, k_max=8)
