import math

import numpy as np
import pytest
from pydantic import ValidationError

from mcvd.controllers.linkController import (AveragingSettings, average_error_probs, build_response_table,
                                             detect_probs_for_symbol, enumerate_error_probs, error_profiles,
                                             poisson_mean_for_symbol, response_table_for, simulate_link,
                                             simulate_link_sweep, stationary_mixture, symbol_means)
from mcvd.exceptions import ConvergenceError, DomainError
from mcvd.model import BitSequence, ChannelResponseTable, LinkConfig
from mcvd.utils.channelUtils import channel_response, hitting_fraction_total
from mcvd.utils.statsUtils import poisson_cdf

STATIONARY = AveragingSettings(method="stationary")


def poisson_sum(k, mean):
    return math.fsum(math.exp(-mean) * mean ** j / math.factorial(j) for j in range(k + 1))


@pytest.fixture
def toy_table():
    return ChannelResponseTable(slots=[0.3, 0.2, 0.1], residual=0.0, symbol_duration=1.0)


class TestResponseTable:

    def test_fast_degradation_needs_one_slot(self, fast_channel):
        table = build_response_table(fast_channel, 0.06)
        assert table.memory == 1
        assert table.within_tolerance

    def test_slots_add_up_to_total(self, degraded_channel):
        table = build_response_table(degraded_channel, 0.06)
        assert table.total == pytest.approx(hitting_fraction_total(degraded_channel), rel=1e-9)
        assert table.total == pytest.approx(0.03726, abs=1e-4)
        assert table.slots[0] == pytest.approx(channel_response(degraded_channel, 0.0, 0.06), rel=1e-7)
        assert table.slots[1] == pytest.approx(channel_response(degraded_channel, 0.06, 0.12), rel=1e-6)

    def test_memory_is_minimal(self, degraded_channel):
        table = build_response_table(degraded_channel, 0.06)
        assert table.residual < 1e-6
        assert table.memory > 1
        shorter = build_response_table(degraded_channel, 0.06, memory=table.memory - 1)
        assert shorter.residual >= 1e-6
        assert not shorter.within_tolerance

    def test_no_degradation_does_not_converge(self, plain_channel):
        with pytest.raises(ConvergenceError) as excinfo:
            build_response_table(plain_channel, 0.06, cap=50)
        assert excinfo.value.partial.memory == 50
        assert excinfo.value.partial.residual > 1e-6

    def test_truncation_when_allowed(self, plain_channel):
        table = build_response_table(plain_channel, 0.06, cap=50, allow_truncation=True)
        assert table.memory == 50
        assert not table.within_tolerance
        assert table.total == pytest.approx(10 / 14, rel=1e-9)

    def test_bad_arguments(self, degraded_channel):
        with pytest.raises(DomainError):
            build_response_table(degraded_channel, 0.0)
        with pytest.raises(DomainError):
            build_response_table(degraded_channel, 0.06, memory=0)

    def test_link_config_rules(self, degraded_channel):
        with pytest.raises(ValidationError):
            LinkConfig(channel=degraded_channel, symbol_duration=0.06, n1=10, n0=10)
        with pytest.raises(ValidationError):
            LinkConfig(channel=degraded_channel, symbol_duration=0.06, pi0=0.3, pi1=0.3)
        LinkConfig(channel=degraded_channel, symbol_duration=0.06, n1=0, n0=0)


class TestSymbolMeans:

    def test_single_burst_walks_through_slots(self, toy_table):
        bits = BitSequence(bits=[0, 1, 0, 0, 0])
        means = [poisson_mean_for_symbol(toy_table, bits, i, 100) for i in range(1, 6)]
        assert means == pytest.approx([0.0, 30.0, 20.0, 10.0, 0.0])

    def test_all_zero_bits(self, toy_table):
        bits = BitSequence(bits=[0, 0, 0])
        assert poisson_mean_for_symbol(toy_table, bits, 3, 1000) == 0.0
        assert poisson_mean_for_symbol(toy_table, bits, 3, 1000, n0=10) == pytest.approx(10 * 0.6)

    def test_one_slot_channel(self):
        table = ChannelResponseTable(slots=[0.025], residual=0.0, symbol_duration=0.06)
        assert poisson_mean_for_symbol(table, BitSequence(bits=[1, 1]), 2, 1000) == pytest.approx(25.0)

    def test_index_out_of_range(self, toy_table):
        bits = BitSequence(bits=[1, 0])
        with pytest.raises(DomainError):
            poisson_mean_for_symbol(toy_table, bits, 0, 100)
        with pytest.raises(DomainError):
            poisson_mean_for_symbol(toy_table, bits, 3, 100)

    def test_convolution_matches_slotwise_sum(self, isi_link):
        table = response_table_for(isi_link)
        bits = BitSequence(bits=np.random.default_rng(8).integers(0, 2, 40))
        means = symbol_means(table, bits, 1000)
        slotwise = [poisson_mean_for_symbol(table, bits, i, 1000) for i in range(1, 41)]
        np.testing.assert_allclose(means, slotwise, rtol=1e-12, atol=1e-12)

    def test_bad_bits(self):
        with pytest.raises(ValidationError):
            BitSequence(bits=[0, 2])
        with pytest.raises(ValidationError):
            BitSequence(bits=[])


class TestDetection:

    def test_detect_probs(self):
        table = ChannelResponseTable(slots=[0.025], residual=0.0, symbol_duration=0.06)
        bits = BitSequence(bits=[1])
        p1, p0 = detect_probs_for_symbol(table, bits, 1, 15, 1000)
        assert p0 == pytest.approx(poisson_sum(15, 25.0), rel=1e-10)
        assert p1 == pytest.approx(1 - p0)
        _, p0 = detect_probs_for_symbol(table, bits, 1, 0, 1000)
        assert p0 == pytest.approx(math.exp(-25.0), rel=1e-12)

    def test_silent_symbol_always_decides_zero(self, toy_table):
        p1, p0 = detect_probs_for_symbol(toy_table, BitSequence(bits=[0, 0]), 2, 0, 1000)
        assert (p1, p0) == (0.0, 1.0)


class TestAveraging:

    def test_no_isi_all_ones(self, fast_channel):
        config = LinkConfig(channel=fast_channel, symbol_duration=0.06, n1=5_000_000, threshold=20, pi0=0.0, pi1=1.0)
        table = response_table_for(config)
        expected = poisson_cdf(20, config.n1 * table.slots[0])
        for settings in (None, STATIONARY):
            profile = average_error_probs(config, settings)
            assert profile.pe1 == pytest.approx(expected, rel=1e-9)
            assert profile.pe == pytest.approx(expected, rel=1e-9)
            assert profile.converged

    def test_high_threshold_misses_every_one(self, isi_link):
        profile = average_error_probs(isi_link.with_threshold(200), STATIONARY)
        assert profile.pe1 > 0.999999
        assert profile.pe0 < 1e-12

    def test_monte_carlo_matches_enumeration(self, isi_link):
        config = isi_link.with_threshold(20)
        exact = enumerate_error_probs(config, 12)
        settings = AveragingSettings(n_sequences=4000, z_max=12, tol=0.0, strict=False, seed=5)
        estimate = average_error_probs(config, settings)
        assert estimate.pe0 == pytest.approx(exact.pe0, abs=1e-4)
        assert estimate.pe1 == pytest.approx(exact.pe1, abs=1e-4)
        assert estimate.pe == pytest.approx(exact.pe, abs=1e-4)
        assert not estimate.converged

    def test_long_sequences_match_stationary_mixture(self, isi_link):
        taus = [12, 15, 20, 25]
        stationary = error_profiles(isi_link, taus, STATIONARY)
        monte_carlo = error_profiles(isi_link, taus, AveragingSettings(strict=False, seed=1))
        for a, b in zip(stationary, monte_carlo):
            assert b.pe == pytest.approx(a.pe, abs=1e-3)

    def test_strict_convergence_failure_carries_partial(self, isi_link):
        settings = AveragingSettings(n_sequences=2, z_max=50, tol=0.0, strict=True)
        with pytest.raises(ConvergenceError) as excinfo:
            error_profiles(isi_link, [10, 20], settings)
        assert len(excinfo.value.partial) == 2

    def test_operating_point(self, isi_link):
        profiles = error_profiles(isi_link, range(61), STATIONARY)
        pe = np.array([p.pe for p in profiles])
        assert pe.min() < 1e-3
        assert 10 <= int(np.argmin(pe)) <= 20

    def test_error_rates_monotone_in_threshold(self, isi_link):
        profiles = error_profiles(isi_link, range(61), STATIONARY)
        pe0 = np.array([p.pe0 for p in profiles])
        pe1 = np.array([p.pe1 for p in profiles])
        assert np.all(np.diff(pe0) <= 1e-12)
        assert np.all(np.diff(pe1) >= -1e-12)

    def test_longer_memory_changes_nothing(self, isi_link):
        k = response_table_for(isi_link).memory
        longer = isi_link.model_copy(update={"memory": 2 * k})
        a = error_profiles(isi_link, [15], STATIONARY)[0]
        b = error_profiles(longer, [15], STATIONARY)[0]
        assert abs(a.pe - b.pe) < 1e-5

    def test_residual_folded_into_every_mean(self, isi_link):
        config = isi_link.model_copy(update={"memory": 2})
        table = response_table_for(config)
        assert not table.within_tolerance
        mixture = stationary_mixture(config, table)
        tail = table.residual * 0.5 * 1000
        assert sorted(mixture.means0) == pytest.approx([tail, 1000 * table.slots[1] + tail])
        assert mixture.weights1 == pytest.approx([0.5, 0.5])

    def test_gaussian_model(self, isi_link):
        gaussian = isi_link.model_copy(update={"count_model": "gaussian"})
        g = error_profiles(gaussian, [15, 30], STATIONARY)
        p = error_profiles(isi_link, [15, 30], STATIONARY)
        assert all(0 <= profile.pe <= 1 for profile in g)
        assert g[0].pe != pytest.approx(p[0].pe, rel=1e-3)

    def test_argument_checks(self, isi_link):
        with pytest.raises(DomainError):
            average_error_probs(isi_link)
        with pytest.raises(DomainError):
            enumerate_error_probs(isi_link.with_threshold(5), 13)
        with pytest.raises(DomainError):
            error_profiles(isi_link, [])


class TestLinkSimulation:

    def test_agrees_with_model(self, isi_link):
        taus = list(range(5, 55, 5))
        model = error_profiles(isi_link, taus, STATIONARY)
        _, _, simulated = simulate_link_sweep(isi_link, taus, 100_000, seed=3)
        for predicted, observed in zip(model, simulated):
            lower, upper = observed.pe_interval
            assert abs(predicted.pe - observed.pe) <= 3 * (upper - lower) / 2 + 1e-9

    def test_reproducible(self, isi_link):
        config = isi_link.with_threshold(15)
        first_bits, first = simulate_link(config, 5000, seed=2)
        second_bits, second = simulate_link(config, 5000, seed=2)
        assert np.array_equal(first_bits.bits, second_bits.bits)
        assert first == second
        assert first.n_zeros + first.n_ones == 5000

    def test_silent_link(self, degraded_channel):
        config = LinkConfig(channel=degraded_channel, symbol_duration=0.06, n1=0, n0=0, threshold=0)
        decoded, profile = simulate_link(config, 1000, seed=1)
        assert not decoded.bits.any()
        assert profile.pe0 == 0.0
        assert profile.pe1 == 1.0

    def test_needs_threshold_and_bits(self, isi_link):
        with pytest.raises(DomainError):
            simulate_link(isi_link, 100, seed=1)
        with pytest.raises(DomainError):
            simulate_link_sweep(isi_link, [10], 0, seed=1)

    def test_unequal_priors_weight_the_error_rate(self, isi_link):
        config = isi_link.model_copy(update={"pi0": 0.2, "pi1": 0.8, "threshold": 15})
        _, profile = simulate_link(config, 2000, seed=4)
        assert profile.pe == pytest.approx(0.2 * profile.pe0 + 0.8 * profile.pe1, rel=1e-12)
        lower, upper = profile.pe_interval
        assert 0.0 <= lower <= upper <= 1.0


class TestFoldedTail:

    @pytest.fixture
    def short_memory(self, isi_link):
        return isi_link.model_copy(update={"memory": 2, "threshold": 0})

    def test_tail_absent_while_channel_fills(self, short_memory):
        table = response_table_for(short_memory)
        assert not table.within_tolerance
        profile = enumerate_error_probs(short_memory, 1)
        assert profile.pe0 == 0.0
        assert profile.pe1 == pytest.approx(poisson_cdf(0, 1000 * table.slots[0]), rel=1e-12)

    def test_monte_carlo_starts_from_empty_channel(self, short_memory):
        settings = AveragingSettings(n_sequences=200, z_max=1, tol=0.0, strict=False, seed=3)
        profile = average_error_probs(short_memory, settings)
        assert profile.pe0 == 0.0
