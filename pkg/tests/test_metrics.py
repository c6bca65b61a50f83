import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from emgforge import metrics
from emgforge.errors import DegenerateInputError, EmptyInputError, ShapeError


def naive_dft(x):
    """O(n^2) reference DFT."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    k = np.arange(n)
    return (np.exp(-2j * np.pi * np.outer(k, k) / n) @ x)


class TestFFT:
    def test_impulse_is_flat(self):
        spec = metrics.fft([1.0, 0.0, 0.0, 0.0])
        assert np.allclose(spec.bins, np.ones(4), atol=1e-12)

    def test_constant_is_dc_only(self):
        spec = metrics.fft([1.0, 1.0, 1.0, 1.0])
        assert np.allclose(spec.bins, [4.0, 0.0, 0.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize("n", [2, 4, 8, 16, 64, 256, 1024])
    def test_matches_naive_dft(self, n):
        x = np.random.default_rng(n).standard_normal(n)
        got = metrics.fft(x).bins
        assert np.max(np.abs(got - naive_dft(x))) < 1e-9

    @pytest.mark.parametrize("n", [3, 5, 500, 1000])
    def test_zero_pads_to_next_power_of_two(self, n):
        x = np.random.default_rng(n).standard_normal(n)
        spec = metrics.fft(x)
        m = metrics.next_pow2(n)
        assert spec.n == m
        padded = np.zeros(m)
        padded[:n] = x
        assert np.max(np.abs(spec.bins - naive_dft(padded))) < 1e-9

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            metrics.fft([])

    @settings(max_examples=30, deadline=None)
    @given(
        x=hnp.arrays(
            np.float64,
            st.integers(1, 512),
            elements=st.floats(-1e3, 1e3, allow_nan=False, width=64),
        )
    )
    def test_parseval(self, x):
        spec = metrics.fft(x)
        time_energy = float(np.sum(x**2))
        freq_energy = float(np.sum(np.abs(spec.bins) ** 2)) / spec.n
        assert freq_energy == pytest.approx(time_energy, rel=1e-9, abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(
        x=hnp.arrays(
            np.float64,
            st.sampled_from([4, 8, 32, 128]),
            elements=st.floats(-1e3, 1e3, allow_nan=False, width=64),
        )
    )
    def test_ifft_inverts(self, x):
        spec = metrics.fft(x)
        back = metrics.ifft(spec)
        assert np.max(np.abs(back.real - x)) < 1e-9
        assert np.max(np.abs(back.imag)) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(data=st.data())
    def test_circular_shift_preserves_magnitudes(self, data):
        n = data.draw(st.sampled_from([8, 64, 256]))
        x = data.draw(
            hnp.arrays(np.float64, n, elements=st.floats(-10, 10, allow_nan=False, width=64))
        )
        shift = data.draw(st.integers(0, n - 1))
        mags = np.abs(metrics.fft(x).bins)
        mags_shifted = np.abs(metrics.fft(np.roll(x, shift)).bins)
        assert np.max(np.abs(mags - mags_shifted)) <= 1e-9 * max(1.0, mags.max())


class TestCosine:
    def test_identical_vectors(self):
        v = np.array([1.0, 2.0, -3.0])
        assert metrics.cosine_sim(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_vectors(self):
        assert metrics.cosine_sim([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_scale_invariance(self):
        v = np.array([1.0, 2.0, -3.0])
        assert metrics.cosine_sim(v, 2.0 * v) == pytest.approx(1.0, abs=1e-12)

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateInputError):
            metrics.cosine_sim([0.0, 0.0], [1.0, 1.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            metrics.cosine_sim([1.0, 2.0], [1.0, 2.0, 3.0])

    @settings(max_examples=40, deadline=None)
    @given(data=st.data(), n=st.integers(2, 64))
    def test_symmetry_and_signed_scale(self, data, n):
        elements = st.floats(-100, 100, allow_nan=False, width=64)
        a = data.draw(hnp.arrays(np.float64, n, elements=elements))
        b = data.draw(hnp.arrays(np.float64, n, elements=elements))
        alpha = data.draw(st.sampled_from([-3.0, -1.0, 0.5, 2.0]))
        beta = data.draw(st.sampled_from([-2.0, 1.0, 4.0]))
        norms = [np.linalg.norm(v) for v in (a, b, alpha * a, beta * b)]
        if any(n == 0.0 for n in norms):
            return
        c = metrics.cosine_sim(a, b)
        assert metrics.cosine_sim(b, a) == pytest.approx(c, abs=1e-12)
        expected = np.sign(alpha * beta) * c
        assert metrics.cosine_sim(alpha * a, beta * b) == pytest.approx(expected, abs=1e-9)
        assert -1.0 - 1e-12 <= c <= 1.0 + 1e-12


class TestFFTCosine:
    def test_identical_signals(self):
        x = np.random.default_rng(0).standard_normal(400)
        assert metrics.fft_cosine_sim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_shift_invariant_for_sine(self):
        n = 1024
        t = np.arange(n)
        x = np.sin(2 * np.pi * 5 * t / n)
        for shift in (1, 17, 300):
            y = np.roll(x, shift)
            assert metrics.fft_cosine_sim(x, y) == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_sines_nearly_orthogonal(self):
        fs = 1000.0
        t = np.arange(1024) / fs
        a = np.sin(2 * np.pi * 5.0 * t)
        b = np.sin(2 * np.pi * 50.0 * t)
        assert metrics.fft_cosine_sim(a, b) <= 0.05

    def test_zero_signal_rejected(self):
        with pytest.raises(DegenerateInputError):
            metrics.fft_cosine_sim(np.zeros(16), np.ones(16))

    def test_dc_can_be_dropped(self):
        x = np.ones(64) + 0.01 * np.random.default_rng(1).standard_normal(64)
        y = 5.0 * np.ones(64) + 0.01 * np.random.default_rng(2).standard_normal(64)
        with_dc = metrics.fft_cosine_sim(x, y)
        without_dc = metrics.fft_cosine_sim(x, y, include_dc=False)
        assert with_dc > 0.99
        assert without_dc < with_dc

    @settings(max_examples=20, deadline=None)
    @given(data=st.data())
    def test_circular_shift_property(self, data):
        n = data.draw(st.sampled_from([64, 256]))
        x = data.draw(
            hnp.arrays(np.float64, n, elements=st.floats(-10, 10, allow_nan=False, width=64))
        )
        peak = np.max(np.abs(x))
        if peak == 0.0:
            return
        x = x / peak  # the metric is scale-invariant; avoid underflowing spectra
        shift = data.draw(st.integers(1, n - 1))
        assert metrics.fft_cosine_sim(x, np.roll(x, shift)) == pytest.approx(1.0, abs=1e-9)


class TestErrors:
    def test_mae_examples(self):
        assert metrics.mae([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert metrics.mae([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.5)

    def test_mse_examples(self):
        assert metrics.mse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert metrics.mse([1.0, 2.0], [2.0, 4.0]) == pytest.approx(2.5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            metrics.mae([1.0], [1.0, 2.0])
        with pytest.raises(ShapeError):
            metrics.mse([1.0], [1.0, 2.0])

    @settings(max_examples=40, deadline=None)
    @given(data=st.data(), n=st.integers(1, 128))
    def test_mae_bounded_by_rms_error(self, data, n):
        elements = st.floats(-1e3, 1e3, allow_nan=False, width=64)
        a = data.draw(hnp.arrays(np.float64, n, elements=elements))
        b = data.draw(hnp.arrays(np.float64, n, elements=elements))
        assert metrics.mae(a, b) ** 2 <= metrics.mse(a, b) + 1e-9


class TestReport:
    def _report(self):
        rng = np.random.default_rng(7)
        pairs = []
        for i in range(5):
            target = np.abs(rng.standard_normal(300)) + 0.1
            pred = target + 0.05 * rng.standard_normal(300)
            pairs.append((f"seg{i}", pred, target))
        return metrics.report_from_pairs(pairs)

    def test_perfect_prediction_scores(self):
        x = np.abs(np.random.default_rng(3).standard_normal(256)) + 0.5
        report = metrics.report_from_pairs([("a", x, x), ("b", 2 * x, 2 * x)])
        agg = report.aggregate()
        for stat in ("best", "worst", "average"):
            assert agg["mse"][stat] == 0.0
            assert agg["mae"][stat] == 0.0
            assert agg["cosine"][stat] == pytest.approx(1.0, abs=1e-12)
            assert agg["fft_cosine"][stat] == pytest.approx(1.0, abs=1e-12)

    def test_aggregate_matches_rows(self):
        report = self._report()
        agg = report.aggregate()
        for name in metrics.METRIC_NAMES:
            values = [getattr(r, name) for r in report.rows]
            if name in ("mse", "mae"):
                assert agg[name]["best"] == min(values)
                assert agg[name]["worst"] == max(values)
            else:
                assert agg[name]["best"] == max(values)
                assert agg[name]["worst"] == min(values)
            assert agg[name]["average"] == pytest.approx(np.mean(values), rel=1e-12)

    def test_aggregate_ordering_invariant(self):
        agg = self._report().aggregate()
        for name in ("mse", "mae"):
            assert agg[name]["best"] <= agg[name]["average"] <= agg[name]["worst"]
        for name in ("cosine", "fft_cosine"):
            assert agg[name]["worst"] <= agg[name]["average"] <= agg[name]["best"]

    def test_table_layout(self):
        table = self._report().format_table()
        for label in ("MSE", "MAE", "Cosine Sim", "FFT Cosine", "Best", "Worst", "Average"):
            assert label in table

    def test_csv_round_trip_values(self, tmp_path):
        report = self._report()
        path = tmp_path / "report.csv"
        report.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "segment_id,mse,mae,cosine,fft_cosine"
        assert len(lines) == 1 + len(report.rows) + 3
        stats = {row.split(",")[0] for row in lines[-3:]}
        assert stats == {"best", "worst", "average"}
