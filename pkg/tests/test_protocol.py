"""Table types, flood update rules and header codecs."""

import copy

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qwsn.protocol import (
    HOP_INF,
    AdvertFields,
    DataReqHeader,
    FitEntry,
    FloodAction,
    QosClass,
    UnknownNeighborWarning,
    advert_from_fit,
    apply_data_req,
    fit_bootstrap,
    prune_low_energy,
    record_queue_len,
    tos_decode,
    tos_encode,
)


def hdr(sender, hop, energy=0.5, forwarders=(), query_id=0):
    return DataReqHeader(
        query_id=query_id,
        tos="00",
        sender_id=sender,
        sender_energy=energy,
        sender_hop=hop,
        forwarders=forwarders,
    )


class TestBootstrap:
    def test_plain_node_starts_unreachable(self):
        fit = fit_bootstrap(7, is_sink=False)
        assert fit.self_hop == HOP_INF
        assert fit.entries == {}
        assert fit.self_queue_len == 0

    def test_sink_is_zero_hops_from_itself(self):
        assert fit_bootstrap(0, is_sink=True).self_hop == 0

    def test_bootstrap_is_pure(self):
        assert fit_bootstrap(7, False) == fit_bootstrap(7, False)


class TestApplyDataReq:
    def test_first_packet_from_sink(self):
        fit = fit_bootstrap(7)
        out, action = apply_data_req(fit, hdr(0, 0))
        assert out.self_hop == 1
        assert action is FloodAction.UPDATED_AND_REBROADCAST
        assert out.entries[0].hop == 0

    def test_equal_distance_recorded(self):
        fit = fit_bootstrap(7)
        fit.self_hop = 4
        out, action = apply_data_req(fit, hdr(3, 3))
        assert action is FloodAction.RECORDED_AND_REBROADCAST
        assert out.self_hop == 4
        assert 3 in out.entries

    def test_farther_sender_dropped_but_recorded(self):
        fit = fit_bootstrap(7)
        fit.self_hop = 2
        out, action = apply_data_req(fit, hdr(9, 5))
        assert action is FloodAction.DROPPED
        assert out.self_hop == 2
        assert out.entries[9].hop == 5

    def test_upsert_refreshes_fields_but_keeps_queue(self):
        fit = fit_bootstrap(7)
        fit, _ = apply_data_req(fit, hdr(3, 4, energy=0.5, forwarders=(1,)))
        fit = record_queue_len(fit, 3, 6)
        fit, _ = apply_data_req(fit, hdr(3, 2, energy=0.4, forwarders=(2,)))
        e = fit.entries[3]
        assert (e.hop, e.energy, e.forwarders) == (2, 0.4, (2,))
        assert e.queue_len == 6

    def test_own_packet_rejected(self):
        with pytest.raises(ValueError):
            apply_data_req(fit_bootstrap(7), hdr(7, 1))

    def test_negative_hop_rejected_by_header(self):
        with pytest.raises(ValueError):
            hdr(3, -1)

    def test_inputs_not_mutated(self):
        fit = fit_bootstrap(7)
        fit.self_hop = 4
        snapshot = copy.deepcopy(fit)
        apply_data_req(fit, hdr(3, 1))
        assert fit == snapshot

    def test_unreachable_sender_cannot_improve_anyone(self):
        # a header carrying the sentinel clamps instead of wrapping the
        # 16-bit hop field
        fit = fit_bootstrap(7)
        fit.self_hop = 2
        out, action = apply_data_req(fit, hdr(3, HOP_INF))
        assert action is FloodAction.DROPPED
        assert out.self_hop == 2
        assert out.entries[3].hop == HOP_INF

    @given(
        hops=st.lists(st.integers(min_value=0, max_value=20), min_size=1, max_size=30),
    )
    @settings(max_examples=100, deadline=None)
    def test_self_hop_never_increases(self, hops):
        fit = fit_bootstrap(42)
        seen = fit.self_hop
        for i, h in enumerate(hops):
            fit, _ = apply_data_req(fit, hdr(i, h))
            assert fit.self_hop <= seen
            seen = fit.self_hop

    @given(
        hops=st.dictionaries(
            st.integers(min_value=0, max_value=40),
            st.integers(min_value=0, max_value=9),
            min_size=1,
            max_size=20,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_one_entry_per_neighbor(self, hops):
        fit = fit_bootstrap(99)
        for sender, h in hops.items():
            fit, _ = apply_data_req(fit, hdr(sender, h))
            fit, _ = apply_data_req(fit, hdr(sender, h))
        assert set(fit.entries) == set(hops)


class TestAdvert:
    def _fit_with(self, mapping):
        fit = fit_bootstrap(99)
        fit.self_hop = 3
        fit.self_energy = 0.25
        for sender, h in mapping.items():
            fit, _ = apply_data_req(fit, hdr(sender, h))
        fit.self_hop = 3
        return fit

    def test_three_least_hop_neighbors(self):
        fit = self._fit_with({10: 1, 11: 1, 12: 2, 13: 3})
        assert advert_from_fit(fit) == AdvertFields(0.25, 3, (10, 11, 12))

    def test_degenerate_single_neighbor(self):
        fit = self._fit_with({10: 2})
        assert advert_from_fit(fit).forwarders == (10,)

    def test_tie_break_lowest_ids(self):
        # all at equal hop: lowest three ids, regardless of arrival order
        import itertools

        for order in itertools.permutations([14, 11, 13, 12]):
            fit = fit_bootstrap(99)
            fit.self_hop = 2
            for sender in order:
                fit, _ = apply_data_req(fit, hdr(sender, 1))
            fit.self_hop = 2
            assert advert_from_fit(fit).forwarders == (11, 12, 13)

    def test_unreachable_node_cannot_advertise(self):
        with pytest.raises(ValueError):
            advert_from_fit(fit_bootstrap(7))

    def test_forwarders_are_known_entries(self):
        fit = self._fit_with({5: 1, 6: 2, 7: 2, 8: 4})
        advert = advert_from_fit(fit)
        assert set(advert.forwarders) <= set(fit.entries)


class TestPrune:
    def _fit_with_energy(self, mapping):
        fit = fit_bootstrap(99)
        for sender, energy in mapping.items():
            fit, _ = apply_data_req(fit, hdr(sender, 1, energy=energy))
        return fit

    def test_below_threshold_removed(self):
        fit = self._fit_with_energy({1: 0.1, 2: 0.5})
        assert set(prune_low_energy(fit, 0.2).entries) == {2}

    def test_zero_threshold_is_identity(self):
        fit = self._fit_with_energy({1: 0.1, 2: 0.5})
        assert prune_low_energy(fit, 0.0).entries == fit.entries

    def test_exhaustive_small_tables(self):
        # every subset of two energy levels against one threshold
        levels = [0.1, 0.5]
        for bits in range(2**4):
            mapping = {
                i: levels[(bits >> i) & 1] for i in range(4)
            }
            fit = self._fit_with_energy(mapping)
            pruned = prune_low_energy(fit, 0.2)
            expected = {i for i, e in mapping.items() if e >= 0.2}
            assert set(pruned.entries) == expected

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            prune_low_energy(fit_bootstrap(1), -1.0)


class TestQueueLen:
    def test_set_and_idempotent(self):
        fit = fit_bootstrap(9)
        fit, _ = apply_data_req(fit, hdr(3, 1))
        fit2 = record_queue_len(fit, 3, 5)
        assert fit2.entries[3].queue_len == 5
        assert record_queue_len(fit2, 3, 5).entries == fit2.entries

    def test_unknown_neighbor_warns_and_is_noop(self):
        fit = fit_bootstrap(9)
        with pytest.warns(UnknownNeighborWarning):
            out = record_queue_len(fit, 55, 2)
        assert out.entries == fit.entries


class TestTosCodec:
    def test_normal_is_zero_zero(self):
        assert tos_encode(QosClass.NORMAL) == "00"

    def test_remaining_assignment(self):
        assert tos_encode(QosClass.RELIABLE) == "01"
        assert tos_encode(QosClass.DELAY) == "10"
        assert tos_encode(QosClass.DELAY_RELIABLE) == "11"

    def test_round_trip_all_classes(self):
        for qos in QosClass:
            assert tos_decode(tos_encode(qos)) is qos

    def test_codes_are_distinct(self):
        assert len({tos_encode(q) for q in QosClass}) == 4

    def test_bad_code_rejected(self):
        with pytest.raises(ValueError):
            tos_decode("2")


class TestHeaderValidation:
    def test_forwarders_distinct(self):
        with pytest.raises(ValueError):
            hdr(1, 0, forwarders=(2, 2))

    def test_forwarders_exclude_sender(self):
        with pytest.raises(ValueError):
            hdr(1, 0, forwarders=(1,))

    def test_at_most_three_forwarders(self):
        with pytest.raises(ValueError):
            hdr(1, 0, forwarders=(2, 3, 4, 5))

    def test_entry_hop_range(self):
        with pytest.raises(ValueError):
            FitEntry(neighbor=1, energy=0.5, hop=HOP_INF + 1)
