"""Synthetic link: symbol statistics, distortion arithmetic, dataset files."""

import numpy as np
import pytest

from adann import chansim, nn, optim, pipeline
from adann.chansim import ChannelSpec, Modulation, gray_bit_distance
from adann.errors import ConfigError, DegenerateInputError, UsageError
from adann.pipeline import OfflineConfig


def pam4_spec(taps=(1.0,), nl=(1.0, 0.0, 0.0), noise=0.0, gamma=4, seed=0):
    return ChannelSpec(Modulation.PAM4, taps, nl, noise, gamma=gamma, seed=seed)


class TestGenerateSymbols:
    def test_pam4_class_frequencies(self):
        labels, _ = chansim.generate_symbols(1_000_000, Modulation.PAM4, 1)
        freqs = np.bincount(labels, minlength=4) / len(labels)
        np.testing.assert_allclose(freqs, 0.25, atol=0.01 * 0.25)

    def test_bit_consumption_matches_mapping(self):
        # Re-derive the documented mapping independently: sign bits in pairs,
        # Gray code (00, 01, 11, 10) -> level ranks (0, 1, 2, 3).
        n = 512
        rng = np.random.default_rng(5)
        bits = (rng.standard_normal(2 * n) > 0).astype(int)
        gray_to_rank = {0b00: 0, 0b01: 1, 0b11: 2, 0b10: 3}
        expected = np.array([gray_to_rank[2 * bits[2 * i] + bits[2 * i + 1]]
                             for i in range(n)])
        labels, amps = chansim.generate_symbols(n, Modulation.PAM4, 5)
        np.testing.assert_array_equal(labels, expected)
        np.testing.assert_array_equal(amps, chansim.PAM4_LEVELS[expected])

    def test_qam16_consumes_four_bits(self):
        n = 512
        rng = np.random.default_rng(6)
        bits = (rng.standard_normal(4 * n) > 0).astype(int)
        gray_to_rank = {0b00: 0, 0b01: 1, 0b11: 2, 0b10: 3}
        expected_i = np.array([gray_to_rank[2 * bits[4 * k] + bits[4 * k + 1]]
                               for k in range(n)])
        expected_q = np.array([gray_to_rank[2 * bits[4 * k + 2] + bits[4 * k + 3]]
                               for k in range(n)])
        labels, amps = chansim.generate_symbols(n, Modulation.QAM16, 6)
        np.testing.assert_array_equal(labels, 4 * expected_i + expected_q)
        np.testing.assert_array_equal(amps[:, 0], chansim.PAM4_LEVELS[expected_i])
        np.testing.assert_array_equal(amps[:, 1], chansim.PAM4_LEVELS[expected_q])

    def test_deterministic(self):
        a = chansim.generate_symbols(1000, Modulation.PAM4, 7)
        b = chansim.generate_symbols(1000, Modulation.PAM4, 7)
        assert a[0].tobytes() == b[0].tobytes()
        assert a[1].tobytes() == b[1].tobytes()


class TestGrayDistance:
    def test_pam4_distance_matrix(self):
        expected = np.array([[0, 1, 2, 1],
                             [1, 0, 1, 2],
                             [2, 1, 0, 1],
                             [1, 2, 1, 0]])
        got = np.array([[gray_bit_distance(a, b, Modulation.PAM4)
                         for b in range(4)] for a in range(4)])
        np.testing.assert_array_equal(got, expected)

    def test_qam16_separates_rails(self):
        # I-rail error of one level plus Q-rail error of one level: 2 bits.
        assert gray_bit_distance(4 * 0 + 0, 4 * 1 + 1, Modulation.QAM16) == 2


class TestApplyChannel:
    def test_identity_channel_holds_amplitudes(self):
        spec = pam4_spec()
        amps = np.array([1.0, -3.0, 3.0])
        out = chansim.apply_channel(amps, spec)
        np.testing.assert_array_equal(out, np.repeat(amps, 4))

    def test_cubic_hand_value(self):
        spec = pam4_spec(nl=(1.0, 0.0, 0.1))
        out = chansim.apply_channel(np.array([2.0]), spec)
        np.testing.assert_allclose(out, 2.8, rtol=1e-15)

    def test_convolution_trimmed_to_stream_length(self):
        spec = pam4_spec(taps=(1.0, 0.5, 0.25))
        amps = np.array([1.0, -1.0, 3.0, -3.0])
        held = np.repeat(amps, 4)
        full = np.convolve(held, [1.0, 0.5, 0.25])
        assert len(full) == 4 * 4 + 3 - 1
        out = chansim.apply_channel(amps, spec)
        np.testing.assert_array_equal(out, full[:16])

    def test_qam16_interleaves_rails(self):
        spec = ChannelSpec(Modulation.QAM16, (1.0,), (1.0, 0.0, 0.0), 0.0)
        labels, amps = chansim.generate_symbols(8, Modulation.QAM16, 2)
        out = chansim.apply_channel(amps, spec)
        assert len(out) == 8 * 4
        np.testing.assert_array_equal(out[0::2], np.repeat(amps[:, 0], 2))
        np.testing.assert_array_equal(out[1::2], np.repeat(amps[:, 1], 2))

    def test_qam16_odd_gamma_rejected(self):
        with pytest.raises(ConfigError):
            ChannelSpec(Modulation.QAM16, (1.0,), (1.0, 0.0, 0.0), 0.0, gamma=5)


class TestNormalize:
    def test_already_normalized_unchanged(self):
        x = np.array([1.0, -1.0, 1.0, -1.0])
        np.testing.assert_allclose(chansim.normalize(x), x, atol=1e-15)

    def test_two_point_example(self):
        np.testing.assert_allclose(chansim.normalize([2.0, 4.0]), [-1.0, 1.0],
                                   atol=1e-15)

    def test_moments(self):
        rng = np.random.default_rng(4)
        out = chansim.normalize(rng.normal(3.0, 7.0, 10_000))
        assert abs(out.mean()) < 1e-12
        assert abs(np.sqrt((out ** 2).mean()) - 1.0) < 1e-12

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        x = rng.normal(2.0, 3.0, 1000)
        once = chansim.normalize(x)
        twice = chansim.normalize(once)
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateInputError):
            chansim.normalize(np.zeros(8))
        with pytest.raises(DegenerateInputError):
            chansim.normalize(np.full(8, 3.3))


class TestSlicerSanity:
    def test_noiseless_pam4_recovered_by_midpoint_slicer(self):
        stream = chansim.make_stream(pam4_spec(), 2048, 1, 2)
        per_symbol = stream.samples.reshape(-1, 4).mean(axis=1)
        levels = np.sort(np.unique(np.round(per_symbol, 9)))
        assert len(levels) == 4
        dec = np.argmin(np.abs(per_symbol[:, None] - levels[None, :]), axis=1)
        np.testing.assert_array_equal(dec, stream.labels)


def _train_mini(set1, half_width, seed=0, epochs=60):
    arch = nn.Architecture(set1.gamma * (2 * half_width + 1), 8, 4,
                           set1.spec.modulation.n_classes)
    cfg = OfflineConfig(epochs=epochs, batch_size=512,
                        optimizer=optim.OptimizerConfig(
                            optim.OptimizerKind.ADAM, 0.01),
                        seed=seed)
    return pipeline.train_offline(nn.init_weights(arch, seed), set1, 0.25, cfg)


class TestDriftScenario:
    def test_deterministic(self):
        spec = pam4_spec(taps=(1.0, 0.3), noise=0.1)
        a1, a2 = chansim.make_drift_scenario(spec, spec, 256, 256, 9)
        b1, b2 = chansim.make_drift_scenario(spec, spec, 256, 256, 9)
        assert a1.samples.tobytes() == b1.samples.tobytes()
        assert a2.samples.tobytes() == b2.samples.tobytes()
        # independent captures: set1 and set2 differ
        assert a1.samples.tobytes() != a2.samples.tobytes()

    def test_mismatched_modulation_rejected(self):
        p = pam4_spec()
        q = ChannelSpec(Modulation.QAM16, (1.0,), (1.0, 0.0, 0.0), 0.0)
        with pytest.raises(UsageError):
            chansim.make_drift_scenario(p, q, 64, 64, 0)

    def test_identical_specs_give_statistically_identical_sets(self):
        spec = pam4_spec(taps=(1.0, 0.3, -0.15), nl=(1.0, 0.0, -0.01),
                         noise=0.65)
        set1, set2 = chansim.make_drift_scenario(spec, spec, 1 << 14, 1 << 14, 42)
        result = _train_mini(set1, half_width=3)
        skip = int(0.25 * (set1.n_seq - 6))
        b1 = pipeline.evaluate_ber(result.model, set1, 3, skip_rows=skip)
        b2 = pipeline.evaluate_ber(result.model, set2, 3)
        assert b1 > 0 and b2 > 0
        assert b2 <= 2 * b1 and b1 <= 2 * b2

    def test_extra_isi_tap_is_material_drift(self):
        spec1 = pam4_spec(taps=(1.0, 0.3, -0.15), nl=(1.0, 0.0, -0.01),
                          noise=0.55)
        spec2 = pam4_spec(taps=(1.0, 0.3, -0.15, 0.3), nl=(1.0, 0.0, -0.01),
                          noise=0.55)
        set1, set2 = chansim.make_drift_scenario(spec1, spec2, 1 << 14, 1 << 14, 42)
        result = _train_mini(set1, half_width=3)
        skip = int(0.25 * (set1.n_seq - 6))
        b1 = pipeline.evaluate_ber(result.model, set1, 3, skip_rows=skip)
        b2 = pipeline.evaluate_ber(result.model, set2, 3)
        assert b2 >= 5 * b1


class TestStreamFiles:
    def test_roundtrip_bit_exact(self, tmp_path):
        spec = pam4_spec(taps=(1.0, 0.2), noise=0.3, seed=11)
        stream = chansim.make_stream(spec, 500, 1, 2)
        sidecar = chansim.write_stream(stream, tmp_path, "set1")
        loaded = chansim.read_stream(sidecar)
        assert loaded.samples.tobytes() == stream.samples.tobytes()
        assert loaded.labels.tobytes() == stream.labels.tobytes()
        assert loaded.spec == stream.spec

    def test_sidecar_fields(self, tmp_path):
        stream = chansim.make_stream(pam4_spec(), 64, 1, 2)
        sidecar = chansim.write_stream(stream, tmp_path, "s")
        import json
        doc = json.loads(sidecar.read_text())
        for key in ("format_version", "n_seq", "gamma", "modulation",
                    "labels_file", "channel_spec", "normalization_applied"):
            assert key in doc
        assert doc["n_seq"] == 64

    def test_label_count_mismatch_detected(self, tmp_path):
        stream = chansim.make_stream(pam4_spec(), 64, 1, 2)
        sidecar = chansim.write_stream(stream, tmp_path, "s")
        (tmp_path / "s_labels.u8").write_bytes(b"\x00" * 63)
        with pytest.raises(UsageError):
            chansim.read_stream(sidecar)
