import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghz_source.ghz import (
    HVV,
    MERMIN_TERMS,
    VHH,
    CountRecord,
    NoiseSpec,
    bell_state,
    calibrate_noise,
    certify,
    fidelity_direct,
    fidelity_local,
    fidelity_settings,
    ghz_state,
    mermin_exact,
    mermin_from_counts,
    noisy_ghz,
    witness_value,
)
from ghz_source.polarization import DensityMatrix, MeasurementSetting, expectation, ket, outcome_probabilities, tensor

from oracles import (
    ghz_fidelity_by_trace,
    ghz_vector,
    mermin_by_trace,
    random_density,
    random_product_density,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
unit = st.floats(min_value=0.0, max_value=1.0)
MERMIN_SETTINGS = [MeasurementSetting.parse(name) for name, _ in MERMIN_TERMS]


def exact_records(rho, settings_, total):
    """Records whose counts are exactly ``total`` times the outcome probabilities."""
    return [CountRecord(s, total * outcome_probabilities(rho, s)) for s in settings_]


class TestStates:
    def test_bell(self):
        s = 1 / math.sqrt(2)
        assert np.allclose(bell_state().amplitudes, (0, s, s, 0))
        zz = outcome_probabilities(bell_state(), MeasurementSetting.parse("ZZ"))
        assert np.allclose(zz, (0, 0.5, 0.5, 0))
        assert expectation(bell_state(), MeasurementSetting.parse("XX")) == pytest.approx(1)

    def test_ghz_amplitudes(self):
        assert np.allclose(ghz_state(0).amplitudes, ghz_vector(0))
        assert np.flatnonzero(np.abs(ghz_state(0).amplitudes) > 0).tolist() == [HVV, VHH]

    @pytest.mark.parametrize("phase", [0.0, 0.4, math.pi, -2.0])
    def test_ghz_phase(self, phase):
        assert np.allclose(ghz_state(phase).amplitudes, ghz_vector(phase))


class TestNoisyGhz:
    def test_ideal(self):
        assert fidelity_direct(noisy_ghz(NoiseSpec())) == pytest.approx(1)

    def test_no_coherence_is_boundary(self):
        f = fidelity_direct(noisy_ghz(NoiseSpec(coherence=0)))
        assert f == pytest.approx(0.5)
        assert witness_value(f) == pytest.approx(0, abs=1e-15)

    @given(unit, unit, unit, st.floats(min_value=-7, max_value=7))
    def test_valid_over_grid(self, c, colored, white, phase):
        if colored + white > 1:
            colored, white = colored / 2, white / 2
        rho = noisy_ghz(NoiseSpec(c, colored, white, phase))
        assert isinstance(rho, DensityMatrix)
        f = fidelity_direct(rho, phase)
        assert f == pytest.approx((1 - colored - white) * (1 + c) / 2 + colored / 2 + white / 8, abs=1e-12)

    @pytest.mark.parametrize("kwargs", [{"coherence": 1.2}, {"white_weight": -0.1}, {"colored_weight": 0.6, "white_weight": 0.6}])
    def test_rejects_bad_spec(self, kwargs):
        with pytest.raises(ValueError):
            NoiseSpec(**kwargs)

    @pytest.mark.parametrize("kwargs", [{"white_weight": 0.0}, {"white_weight": 0.1}, {"coherence": 1.0}, {"coherence": 0.8}])
    def test_calibrate_reaches_target(self, kwargs):
        spec = calibrate_noise(0.811, **kwargs)
        f = fidelity_direct(noisy_ghz(spec))
        assert f == pytest.approx(0.811, abs=1e-12)
        assert witness_value(f) == pytest.approx(-0.311, abs=1e-12)

    def test_calibrate_needs_one_knob(self):
        with pytest.raises(ValueError, match="exactly one"):
            calibrate_noise(0.8)
        with pytest.raises(ValueError, match="exactly one"):
            calibrate_noise(0.8, coherence=0.5, white_weight=0.1)

    def test_calibrate_unreachable(self):
        with pytest.raises(ValueError, match="unreachable"):
            calibrate_noise(0.3, white_weight=0.0)


class TestMerminExact:
    def test_ideal(self):
        assert mermin_exact(ghz_state(0)).m_value == pytest.approx(4, abs=1e-10)

    def test_phase_pi(self):
        assert mermin_exact(ghz_state(math.pi)).m_value == pytest.approx(-4, abs=1e-10)

    def test_plus_plus_plus(self):
        r = mermin_exact(tensor(ket("+"), ket("+"), ket("+")))
        assert r.e_xxx == pytest.approx(1)
        assert (r.e_yxy, r.e_yyx, r.e_xyy) == pytest.approx((0, 0, 0), abs=1e-12)
        assert r.m_value == pytest.approx(1)

    def test_mixed(self):
        r = mermin_exact(DensityMatrix.maximally_mixed(3))
        assert r.m_value == pytest.approx(0, abs=1e-15)
        assert r.sigma is None and r.significance is None

    def test_needs_three_qubits(self):
        with pytest.raises(ValueError, match="3-qubit"):
            mermin_exact(bell_state())

    @given(seeds)
    @settings(max_examples=100)
    def test_quantum_bound(self, seed):
        rho = random_density(np.random.default_rng(seed), rank=1)
        r = mermin_exact(DensityMatrix(3, rho))
        assert abs(r.m_value) <= 4 + 1e-10
        assert r.m_value == pytest.approx(mermin_by_trace(rho), abs=1e-12)

    @given(seeds)
    @settings(max_examples=100)
    def test_local_bound_on_products(self, seed):
        rho = random_product_density(np.random.default_rng(seed))
        assert abs(mermin_exact(DensityMatrix(3, rho)).m_value) <= 2 + 1e-10


class TestMerminFromCounts:
    def test_exact_proportional_counts(self):
        result = mermin_from_counts(exact_records(ghz_state(0), MERMIN_SETTINGS, 1000))
        assert result.m_value == pytest.approx(4, abs=1e-12)
        # every term is deterministic, so the Poisson error vanishes
        assert result.sigma == pytest.approx(0, abs=1e-12)

    def test_significance_from_value_and_sigma(self):
        # M = 3.4113 with sigma 0.0054: choose per-setting totals to give that sigma
        m, sigma = 3.4113, 0.0054
        e = m / 4
        total = 4 * (1 - e * e) / sigma**2
        records = []
        for s, (_, sign) in zip(MERMIN_SETTINGS, MERMIN_TERMS):
            counts = np.zeros(8)
            counts[0] = total * (1 + sign * e) / 2
            counts[1] = total * (1 - sign * e) / 2
            records.append(CountRecord(s, counts))
        result = mermin_from_counts(records)
        assert result.m_value == pytest.approx(m, abs=1e-12)
        assert result.sigma == pytest.approx(sigma, rel=1e-9)
        assert result.significance == pytest.approx(261.35, abs=0.01)
        assert result.significance > 260

    def test_degenerate_record(self):
        records = exact_records(noisy_ghz(NoiseSpec(coherence=0.8)), MERMIN_SETTINGS, 1e4)
        counts = np.zeros(8)
        counts[5] = 40
        records[0] = CountRecord(MERMIN_SETTINGS[0], counts)
        result = mermin_from_counts(records)
        assert result.e_xxx == pytest.approx(1)
        assert result.term_sigmas[0] == 0

    @pytest.mark.parametrize("seed", range(5))
    def test_reproduces_exact_value(self, seed):
        rho = DensityMatrix(3, random_density(np.random.default_rng(seed)))
        result = mermin_from_counts(exact_records(rho, MERMIN_SETTINGS, 12345))
        assert result.m_value == pytest.approx(mermin_exact(rho).m_value, abs=1e-12)

    def test_sigma_scales_as_inverse_root(self):
        rho = noisy_ghz(NoiseSpec(coherence=0.9, white_weight=0.1))
        small = mermin_from_counts(exact_records(rho, MERMIN_SETTINGS, 1e4))
        large = mermin_from_counts(exact_records(rho, MERMIN_SETTINGS, 1e6))
        assert small.sigma / large.sigma == pytest.approx(10, rel=0.05)

    def test_order_does_not_matter(self):
        records = exact_records(noisy_ghz(NoiseSpec(coherence=0.7)), MERMIN_SETTINGS, 500)
        assert mermin_from_counts(records[::-1]).m_value == pytest.approx(mermin_from_counts(records).m_value)

    def test_zero_counts(self):
        records = exact_records(ghz_state(0), MERMIN_SETTINGS, 100)
        records[2] = CountRecord(MERMIN_SETTINGS[2], np.zeros(8))
        with pytest.raises(ValueError, match="no counts"):
            mermin_from_counts(records)

    def test_wrong_settings(self):
        records = exact_records(ghz_state(0), MERMIN_SETTINGS, 100)
        records[0] = CountRecord(MeasurementSetting.parse("ZZZ"), np.ones(8))
        with pytest.raises(ValueError):
            mermin_from_counts(records)
        with pytest.raises(ValueError, match="missing"):
            mermin_from_counts(records[1:])

    def test_count_record_validation(self):
        with pytest.raises(ValueError):
            CountRecord(MERMIN_SETTINGS[0], np.ones(4))
        with pytest.raises(ValueError):
            CountRecord(MERMIN_SETTINGS[0], -np.ones(8))
        with pytest.raises(ValueError):
            CountRecord(MERMIN_SETTINGS[0], np.ones(8), duration=0)


class TestFidelity:
    def test_direct_examples(self):
        assert fidelity_direct(ghz_state(0)) == pytest.approx(1)
        assert fidelity_direct(tensor(ket("H"), ket("H"), ket("H"))) == pytest.approx(0)
        assert fidelity_direct(DensityMatrix.maximally_mixed(3)) == pytest.approx(1 / 8)

    def test_direct_needs_three_qubits(self):
        with pytest.raises(ValueError):
            fidelity_direct(bell_state())

    def test_local_ideal(self):
        f, sigma = fidelity_local(exact_records(ghz_state(0), fidelity_settings(), 1000))
        assert f == pytest.approx(1, abs=1e-12)

    def test_local_mixed(self):
        rho = DensityMatrix.maximally_mixed(3)
        f, _ = fidelity_local(exact_records(rho, fidelity_settings(), 1000))
        assert f == pytest.approx(1 / 8, abs=1e-12)

    @given(seeds, st.floats(min_value=-math.pi, max_value=math.pi))
    @settings(max_examples=60)
    def test_local_equals_direct(self, seed, phase):
        rho = random_density(np.random.default_rng(seed))
        records = exact_records(DensityMatrix(3, rho), fidelity_settings(phase), 1.0)
        f, _ = fidelity_local(records, phase)
        assert f == pytest.approx(ghz_fidelity_by_trace(rho, phase), abs=1e-10)

    def test_local_sigma_shrinks_with_counts(self):
        rho = noisy_ghz(NoiseSpec(coherence=0.6))
        _, s1 = fidelity_local(exact_records(rho, fidelity_settings(), 1e4))
        _, s2 = fidelity_local(exact_records(rho, fidelity_settings(), 1e6))
        assert s1 / s2 == pytest.approx(10, rel=1e-9)

    def test_local_missing_setting(self):
        records = exact_records(ghz_state(0), fidelity_settings(), 10)
        with pytest.raises(ValueError, match="missing"):
            fidelity_local(records[:3])

    def test_local_only_uses_product_settings(self):
        for s in fidelity_settings(0.3):
            assert s.n_qubits == 3


class TestWitness:
    def test_reported_value(self):
        # 0.5 - 0.811 is not exactly representable; it lands one ulp away
        assert witness_value(0.811) == pytest.approx(-0.311, abs=1e-15)

    @pytest.mark.parametrize("f, w", [(0.5, 0.0), (1.0, -0.5), (0.0, 0.5)])
    def test_exact_values(self, f, w):
        assert witness_value(f) == w

    @pytest.mark.parametrize("f", [-0.01, 1.01, math.nan])
    def test_out_of_range(self, f):
        with pytest.raises(ValueError):
            witness_value(f)

    @given(unit)
    def test_sign(self, f):
        assert (witness_value(f) < 0) == (f > 0.5)

    def test_certificate(self):
        cert = certify(0.811, 0.002)
        assert cert.entangled
        assert cert.significance == pytest.approx(155.5, abs=1e-6)
        assert certify(0.4).entangled is False
        assert certify(0.9).significance is None
        assert certify(0.9, 0.0).significance == math.inf
