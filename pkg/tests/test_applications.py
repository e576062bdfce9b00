"""HARQ over block fading and the MMSE-SIC spatial-multiplexing pipeline."""

import functools
import math

import numpy as np
import pytest

from parapolar import (
    ConfigurationError,
    DomainError,
    FadingProcess,
    biawgn_capacity,
    make_parallel_config,
)
from parapolar.applications import (
    HarqPolicy,
    MimoLink,
    depth_capacity_floors,
    detection_order,
    first_pass_gammas,
    harq_oracle,
    harq_run,
    make_harq_context,
    median_oneshot_capacity,
    mimo_capacity,
    mimo_run,
    mmse_sic_gammas,
)
from parapolar.applications import harq as harq_mod


class TestHarqPolicy:
    def test_scheme_rate(self):
        p = HarqPolicy(rate=1.0, max_transmissions=4, margin=0.2)
        assert p.scheme_rate == pytest.approx(0.8)

    def test_validation(self):
        with pytest.raises(DomainError):
            HarqPolicy(rate=0.0, max_transmissions=4)
        with pytest.raises(DomainError):
            HarqPolicy(rate=1.0, max_transmissions=0)
        with pytest.raises(DomainError):
            HarqPolicy(rate=1.0, max_transmissions=4, margin=1.0)
        with pytest.raises(DomainError):
            HarqPolicy(rate=1.0, max_transmissions=4, T=2)
        with pytest.raises(DomainError):
            HarqPolicy(rate=1.0, max_transmissions=4, subcode_bler_budget=0.0)


class TestHarqOracle:
    def test_accumulates_until_covered(self):
        assert harq_oracle(1.0, (0.5, 0.6)) == (True, 2)

    def test_reports_failure_with_full_length(self):
        assert harq_oracle(1.0, (0.2, 0.3, 0.4)) == (False, 3)

    def test_boundary_equality_is_success(self):
        assert harq_oracle(1.0, (1.0,)) == (True, 1)

    def test_first_transmission_can_suffice(self):
        assert harq_oracle(0.3, (0.9, 0.9)) == (True, 1)

    def test_negative_capacity_rejected(self):
        with pytest.raises(DomainError):
            harq_oracle(1.0, (0.5, -0.1))


class TestMedianOneshot:
    def test_median_gain_is_ln2(self):
        # median of Exp(1) is ln 2; capacity at sigma0/sqrt(ln 2)
        got = median_oneshot_capacity(0.466)
        assert got == pytest.approx(biawgn_capacity(0.466 / math.sqrt(math.log(2.0))))

    def test_decreasing_in_noise(self):
        assert median_oneshot_capacity(0.3) > median_oneshot_capacity(0.8)


@functools.lru_cache(maxsize=None)
def _cached_config(M, Q, N, rate, T):
    return make_parallel_config(M=M, Q=Q, N=N, sum_rate=rate, T=T)


class TestDepthCapacityFloors:
    @pytest.fixture()
    def config(self):
        return _cached_config(4, 4, 256, 0.6, 1)

    def test_floors_grow_with_depth(self, config):
        floors = depth_capacity_floors(config, 3e-3)
        assert len(floors) == config.Q
        assert all(b >= a for a, b in zip(floors, floors[1:]))

    def test_cached_per_budget(self, config):
        a = depth_capacity_floors(config, 1e-3)
        assert depth_capacity_floors(config, 1e-3) is a

    def test_tighter_budget_raises_floors(self, config):
        loose = depth_capacity_floors(config, 1e-2)
        tight = depth_capacity_floors(config, 1e-4)
        assert all(t >= l for l, t in zip(loose, tight))

    def test_single_level_only(self):
        cfg2 = make_parallel_config(M=2, Q=2, N=64, sum_rate=1.0, T=2)
        with pytest.raises(DomainError):
            depth_capacity_floors(cfg2, 1e-3)


class _SmallHarq:
    """Shared small-geometry policy so the context is built once."""

    policy = HarqPolicy(
        rate=0.8, max_transmissions=3, margin=0.2, N=256, Q=4, horizon=2
    )
    _ctx = None

    @classmethod
    def context(cls):
        if cls._ctx is None:
            cls._ctx = make_harq_context(cls.policy)
        return cls._ctx


class TestHarqRun:
    def test_deterministic_by_seed(self):
        config, scheme = _SmallHarq.context()
        p = _SmallHarq.policy
        a = harq_run(p, FadingProcess(), 12, config=config, scheme=scheme)
        b = harq_run(p, FadingProcess(), 12, config=config, scheme=scheme)
        assert a == b

    def test_throughput_accounting(self):
        config, scheme = _SmallHarq.context()
        p = _SmallHarq.policy
        for seed in range(6):
            r = harq_run(p, FadingProcess(), seed, config=config, scheme=scheme)
            expect = p.rate / r.transmissions if r.success else 0.0
            assert r.throughput == pytest.approx(expect)
            assert 1 <= r.transmissions <= p.max_transmissions
            assert len(r.realized_capacities) == p.max_transmissions

    def test_success_implies_oracle_success(self):
        # one-sided: the codec never beats the capacity accounting
        config, scheme = _SmallHarq.context()
        p = _SmallHarq.policy
        for seed in range(25):
            r = harq_run(p, FadingProcess(), seed, config=config, scheme=scheme)
            if r.success:
                ok, m = harq_oracle(p.scheme_rate, r.realized_capacities)
                assert ok and m <= r.transmissions

    def test_dead_channel_exhausts_budget(self, monkeypatch):
        config, scheme = _SmallHarq.context()
        p = _SmallHarq.policy
        monkeypatch.setattr(
            harq_mod, "fading_gains", lambda proc, count, seed: np.zeros(count)
        )
        r = harq_run(p, FadingProcess(), 0, config=config, scheme=scheme)
        assert not r.success
        assert r.transmissions == p.max_transmissions
        assert r.throughput == 0.0

    def test_strong_channel_finishes_in_one(self, monkeypatch):
        config, scheme = _SmallHarq.context()
        p = _SmallHarq.policy
        monkeypatch.setattr(
            harq_mod, "fading_gains", lambda proc, count, seed: np.full(count, 400.0)
        )
        r = harq_run(p, FadingProcess(), 1, config=config, scheme=scheme)
        assert r.success and r.transmissions == 1

    def test_context_policy_mismatch(self):
        config, scheme = _SmallHarq.context()
        other = HarqPolicy(rate=0.8, max_transmissions=2, margin=0.2, N=256, Q=4)
        with pytest.raises(ConfigurationError):
            harq_run(other, FadingProcess(), 0, config=config, scheme=scheme)


class TestMimoGeometry:
    def test_identity_link_capacity(self):
        link = MimoLink(np.eye(2), 1.0)
        assert mimo_capacity(link) == pytest.approx(2.0, abs=1e-12)

    def test_zero_channel_zero_capacity(self):
        link = MimoLink(np.zeros((2, 2)), 5.0)
        assert mimo_capacity(link) == pytest.approx(0.0, abs=1e-12)

    def test_link_validation(self):
        with pytest.raises(DomainError):
            MimoLink(np.array([[np.inf, 0], [0, 1]]), 1.0)
        with pytest.raises(DomainError):
            MimoLink(np.eye(2), 0.0)
        with pytest.raises(DomainError):
            MimoLink(np.eye(2), 1.0, n_layers=3)

    def test_orthogonal_layers(self):
        link = MimoLink(np.eye(2), 3.0)
        for order in ([1, 2], [2, 1]):
            g = mmse_sic_gammas(link, order)
            assert np.allclose(g, [3.0, 3.0])
        assert mimo_capacity(link) == pytest.approx(4.0)

    def test_single_layer_matched_filter(self):
        h = np.array([[0.6 + 0.3j], [-0.2 + 0.9j]])
        link = MimoLink(h, 2.5)
        g = mmse_sic_gammas(link, [1])
        assert g[0] == pytest.approx(2.5 * np.linalg.norm(h) ** 2)

    def test_detection_order_by_sinr(self):
        assert detection_order([1.0, 5.0, 2.0]).tolist() == [2, 3, 1]

    def test_detection_order_ties_keep_index_order(self):
        assert detection_order([2.0, 2.0, 2.0]).tolist() == [1, 2, 3]

    def test_detection_order_empty(self):
        with pytest.raises(DomainError):
            detection_order([])

    def test_order_must_be_permutation(self):
        link = MimoLink(np.eye(2), 1.0)
        with pytest.raises(DomainError):
            mmse_sic_gammas(link, [1, 1])

    def test_rate_identity_both_orders(self):
        rng = np.random.default_rng(8)
        H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        link = MimoLink(H, 1.7)
        cap = mimo_capacity(link)
        for order in ([1, 2, 3], [3, 2, 1], [2, 1, 3]):
            total = np.sum(np.log2(1.0 + mmse_sic_gammas(link, order)))
            assert total == pytest.approx(cap, abs=1e-9)

    @pytest.mark.parametrize("rho", [0.1, 1.0, 10.0])
    def test_rate_identity_random_sizes(self, rho):
        rng = np.random.default_rng(int(rho * 10))
        for nt in (2, 4):
            H = (rng.normal(size=(nt, nt)) + 1j * rng.normal(size=(nt, nt))) / math.sqrt(2)
            link = MimoLink(H, rho)
            order = detection_order(first_pass_gammas(link))
            total = np.sum(np.log2(1.0 + mmse_sic_gammas(link, order)))
            assert total == pytest.approx(mimo_capacity(link), abs=1e-9)


class TestMimoRun:
    @staticmethod
    def _link_and_config():
        link = MimoLink(np.eye(2), 20.0)
        rate = 0.3 * mimo_capacity(link)
        cfg = _cached_config(2, 4, 64, rate / 2.0, 2)
        return link, rate, cfg

    def test_decoupled_layers_decode(self):
        link, rate, cfg = self._link_and_config()
        res = mimo_run(link, rate, config=cfg, seed=3, horizon=2)
        assert not res.outage
        assert res.correct.all()
        assert sorted(res.report.order) == [1, 2]

    def test_decoded_mode_matches_genie_here(self):
        link, rate, cfg = self._link_and_config()
        res = mimo_run(link, rate, config=cfg, seed=3, horizon=2, mode="decoded")
        assert res.correct.all()

    def test_rate_above_capacity_is_outage(self):
        link = MimoLink(np.eye(2), 0.5)
        res = mimo_run(link, 5.0, seed=1, horizon=2, Q=4, N=64)
        assert res.outage
        assert not res.correct.any()

    def test_report_rates_follow_depths(self):
        link, rate, cfg = self._link_and_config()
        res = mimo_run(link, rate, config=cfg, seed=5, horizon=2)
        for q, r in zip(res.depths, res.report.rates):
            assert r == pytest.approx(q * rate / 4)

    def test_mode_validation(self):
        link = MimoLink(np.eye(2), 2.0)
        with pytest.raises(DomainError):
            mimo_run(link, 1.0, mode="oracle")
        with pytest.raises(DomainError):
            mimo_run(link, -1.0)

    def test_config_layer_mismatch(self):
        link = MimoLink(np.eye(2), 20.0)
        cfg = make_parallel_config(M=3, Q=4, N=64, sum_rate=0.4, T=1)
        with pytest.raises(ConfigurationError):
            mimo_run(link, 0.8, config=cfg, Q=4, N=64)
