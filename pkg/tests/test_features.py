import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tone
from neuropipe.dsp.epochs import Epoch
from neuropipe.features.assemble import FeatureError, FeatureSpec, assemble_features, feature_matrix_csv
from neuropipe.features.selection import SelectionError, correlation_prune, pca_fit, pca_transform
from neuropipe.features.spectral import SpectralError, band_power, spectral_entropy, welch_psd
from neuropipe.features.temporal import hjorth, perclos, time_stats

CH8 = ("Fp1", "Fp2", "Fz", "P3", "Pz", "P4", "O1", "O2")


def total_power(psd):
    return band_power(psd, (0, psd.freqs[-1] + 1))


def test_single_tone_psd():
    x = tone(10, 250, 250)
    psd = welch_psd(x, 250, segment_len=250)
    assert psd.freqs[np.argmax(psd.power[:, 0])] == 10
    assert total_power(psd)[0] == pytest.approx(0.5, rel=0.02)
    assert np.all(psd.power >= 0) and psd.freqs[0] == 0 and psd.freqs[-1] == 125


def test_zero_signal():
    psd = welch_psd(np.zeros((512, 2)), 250)
    assert not psd.power.any()
    assert not band_power(psd, "alpha").any()
    assert not spectral_entropy(psd).any()


def test_white_noise_parseval():
    totals = [total_power(welch_psd(np.random.default_rng(s).standard_normal(5000), 250))[0] for s in range(20)]
    for v in totals:
        assert v == pytest.approx(1.0, rel=0.05)


def test_band_shares_of_a_tone():
    psd = welch_psd(tone(10, 250, 2500), 250)
    tot = total_power(psd)
    assert band_power(psd, (8, 13)) / tot >= 0.95
    assert band_power(psd, (0.5, 4)) / tot <= 0.02


def test_segment_errors():
    with pytest.raises(SpectralError):
        welch_psd(np.zeros(100), 250, segment_len=200)
    with pytest.raises(SpectralError):
        band_power(welch_psd(np.ones(64), 32, 64), (40, 50))


def test_entropy_examples():
    assert spectral_entropy(welch_psd(tone(10, 250, 2500), 250))[0] <= 0.2
    for s in range(10):
        noise = np.random.default_rng(s).standard_normal(5000)
        assert spectral_entropy(welch_psd(noise, 250))[0] >= 0.9


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(1e-3, 1e3), n=st.integers(32, 1024))
def test_entropy_bounds_and_scale_invariance(seed, scale, n):
    x = np.random.default_rng(seed).standard_normal(n) * np.random.default_rng(seed + 1).uniform(0, 3, n)
    h = spectral_entropy(welch_psd(x, 250))[0]
    assert 0.0 <= h <= 1.0
    assert spectral_entropy(welch_psd(scale * x, 250))[0] == pytest.approx(h, abs=1e-9)


def test_time_stats_examples():
    c = time_stats(np.full(50, 3.0))
    assert (c["mean"][0], c["variance"][0], c["kurtosis"][0]) == (3.0, 0.0, 0.0)
    q = time_stats(np.array([1.0, 2.0, 3.0, 4.0]))
    assert (q["median"][0], q["q1"][0], q["q3"][0]) == (2.5, 1.75, 3.25)
    g = time_stats(np.random.default_rng(0).standard_normal(10000))
    assert abs(g["kurtosis"][0]) <= 0.3


def test_hjorth_examples():
    assert [v[0] for v in hjorth(np.full(10, 2.0))] == [0.0, 0.0, 0.0]
    for f, fs in [(5, 250), (10, 250), (12, 60), (3, 32)]:
        _, mob, _ = hjorth(tone(f, fs, fs * 20))
        assert mob[0] == pytest.approx(2 * np.sin(np.pi * f / fs), rel=0.01)
    x = np.random.default_rng(2).standard_normal(3000)
    act, mob, comp = hjorth(x)
    d1, d2 = np.diff(x), np.diff(x, 2)
    assert act[0] == pytest.approx(np.var(x))
    assert mob[0] == pytest.approx(np.sqrt(np.var(d1) / np.var(x)))
    assert comp[0] == pytest.approx(np.sqrt(np.var(d2) / np.var(d1)) / mob[0])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.floats(1e-3, 1e3))
def test_hjorth_scaling(seed, k):
    x = np.random.default_rng(seed).standard_normal(200).cumsum()
    a1, m1, c1 = hjorth(x)
    a2, m2, c2 = hjorth(k * x)
    assert a2[0] == pytest.approx(k**2 * a1[0], rel=1e-9)
    assert m2[0] == pytest.approx(m1[0], rel=1e-9)
    assert c2[0] == pytest.approx(c1[0], rel=1e-9)


def test_perclos_examples():
    assert perclos([1, 1, 0.1, 0.1, 1], 0.2) == 0.4
    assert perclos(np.ones(20), 0.2) == 0.0
    assert perclos(np.full(20, 0.1), 0.2) == 1.0


@settings(max_examples=50, deadline=None)
@given(x=st.lists(st.floats(0, 1), min_size=1, max_size=200), seed=st.integers(0, 1000))
def test_perclos_permutation_invariant(x, seed):
    x = np.array(x)
    assert perclos(np.random.default_rng(seed).permutation(x)) == perclos(x)


def epoch(data, srate=32.0, channels=CH8):
    return Epoch(np.asarray(data, float), srate, 0.0, channels)


def test_assemble_names_and_order():
    ep = epoch(np.random.default_rng(0).normal(size=(64, 8)))
    fv = assemble_features({"eeg": ep}, [FeatureSpec("band_power", "eeg", params={"bands": ["alpha"]})])
    assert fv.names == [f"{c}.alpha_power" for c in CH8]
    assert fv.values.shape == (8,)


def test_uc2_statistics_count():
    ep = epoch(np.random.default_rng(0).normal(size=(500, 8)), 125.0)
    spec = FeatureSpec("stft_band_stats", "eeg", params={"bands": ["theta", "alpha", "beta", "gamma"],
                                                         "stats": ["mean", "std"], "segment_len": 125})
    assert len(assemble_features({"eeg": ep}, [spec]).values) == 64


def test_raw_is_row_major():
    data = np.arange(12.0).reshape(4, 3)
    fv = assemble_features({"e": epoch(data, channels=("a", "b", "c"))}, [FeatureSpec("raw", "e")])
    np.testing.assert_array_equal(fv.values, data.ravel())
    assert fv.names[:4] == ["a.raw_0", "b.raw_0", "c.raw_0", "a.raw_1"]


def test_assemble_errors():
    ep = epoch(np.zeros((32, 8)))
    with pytest.raises(FeatureError, match="no features requested"):
        assemble_features({"eeg": ep}, [])
    with pytest.raises(FeatureError, match="missing"):
        assemble_features({"eeg": ep}, [FeatureSpec("hjorth", "eog")])
    with pytest.raises(FeatureError, match="Fp1.alpha_power"):
        assemble_features({"eeg": epoch(np.full((32, 8), np.nan))},
                          [FeatureSpec("band_power", "eeg", params={"bands": ["alpha"]})])


def test_feature_csv(tmp_path):
    ep = epoch(np.random.default_rng(0).normal(size=(64, 8)))
    fv = assemble_features({"eeg": ep}, [FeatureSpec("hjorth", "eeg")])
    fv.label = "calm"
    feature_matrix_csv([fv, fv], tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0].split(",") == fv.names + ["label"]
    assert len(lines) == 3 and lines[1].endswith(",calm")


def test_prune_examples():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 200))
    assert correlation_prune(np.column_stack([a, a])) == [0]
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.9
    assert correlation_prune(np.column_stack([a, b]), 0.9) == [0, 1]
    assert correlation_prune(np.ones((10, 3))) == []
    with pytest.raises(SelectionError):
        correlation_prune(np.ones((1, 3)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), thr=st.floats(0.3, 0.99), f=st.integers(2, 12))
def test_prune_postcondition(seed, thr, f):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(40, 3))
    x = base @ rng.normal(size=(3, f)) + 0.3 * rng.normal(size=(40, f))
    kept = correlation_prune(x, thr)
    if len(kept) > 1:
        r = np.abs(np.corrcoef(x[:, kept].T))
        np.fill_diagonal(r, 0)
        assert r.max() < thr
    # every dropped column correlates with some kept column
    for j in set(range(f)) - set(kept):
        assert max(abs(np.corrcoef(x[:, j], x[:, k])[0, 1]) for k in kept) >= thr - 1e-12


def test_pca_examples():
    t = np.linspace(-1, 1, 50)
    m = pca_fit(np.column_stack([t, t]))
    assert m.n_components == 1 and m.explained_variance_ratio[0] == pytest.approx(1.0)
    x = np.random.default_rng(0).normal(size=(6, 10))
    full = pca_fit(x, 1.0)
    assert full.n_components == 5
    rec = pca_transform(full, x) @ full.components + full.mean
    assert np.max(np.abs(rec - x)) < 1e-9
    iso = pca_fit(np.random.default_rng(1).normal(size=(5000, 3)), 0.95)
    assert iso.n_components == 3
    np.testing.assert_allclose(iso.explained_variance_ratio, 1 / 3, atol=0.03)
    with pytest.raises(SelectionError):
        pca_fit(np.ones((1, 3)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), keep=st.floats(0.1, 1.0), n=st.integers(2, 40), f=st.integers(1, 10))
def test_pca_invariants(seed, keep, n, f):
    x = np.random.default_rng(seed).normal(size=(n, f)) * np.arange(1, f + 1)
    m = pca_fit(x, keep)
    np.testing.assert_allclose(pca_transform(m, x.mean(axis=0)), 0, atol=1e-9)
    np.testing.assert_allclose(m.components @ m.components.T, np.eye(m.n_components), atol=1e-9)
    r = m.explained_variance_ratio
    assert np.all(np.diff(r) <= 1e-12) and r.sum() <= 1 + 1e-9
