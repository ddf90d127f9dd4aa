import math
import statistics
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netcascade.capture import PacketRecord, TrafficClass
from netcascade.features import (
    CSV_HEADER,
    FEATURE_NAMES,
    N_FEATURES,
    ScalerParams,
    WindowAccumulator,
    WindowConfig,
    apply_scaler,
    assemble,
    compute_window_stats,
    entropy,
    fit_scaler,
    read_feature_csv,
    stream_vectors,
    window_batches,
    window_id,
    write_feature_csv,
)
from netcascade.synth import synthetic_stream

CFG = WindowConfig()


def pkt(ts=0.5, proto=17, sport=1000, dport=53, syn=0, ack=0, fin=0, rst=0,
        size=100, payload=50, seq=0, src="10.0.0.1", dst="10.0.0.2",
        label=None) -> PacketRecord:
    is_tcp = proto == 6
    return PacketRecord(
        timestamp=ts, src_ip=src, dst_ip=dst, protocol=proto, src_port=sport,
        dst_port=dport, tcp_flag=int(is_tcp), udp_flag=int(proto == 17), ttl=64,
        ack=ack if is_tcp else 0, syn=syn if is_tcp else 0,
        fin=fin if is_tcp else 0, psh=0, urg=0, rst=rst if is_tcp else 0,
        sequence_number=seq if is_tcp else 0, acknowledgment_number=0,
        packet_size=size, payload_size=payload, label=label,
    )


class TestWindowId:
    def test_floor_division(self):
        assert window_id(3.7, CFG) == 3

    def test_zero(self):
        assert window_id(0.0, CFG) == 0

    def test_left_closed_boundary(self):
        assert window_id(2.0, CFG) == 2

    def test_custom_interval(self):
        assert window_id(3.7, WindowConfig(processing_interval=0.5)) == 7

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            window_id(-0.1, CFG)


class TestEntropy:
    def test_single_category_is_zero(self):
        assert entropy([17]) == 0.0
        assert entropy({"a": 5}) == 0.0

    def test_uniform_four(self):
        # Oracle: uniform distribution over 4 categories has entropy ln 4.
        assert entropy([1, 1, 1, 1]) == pytest.approx(math.log(4))
        assert entropy([1, 1, 1, 1]) == pytest.approx(1.3863, abs=1e-4)

    def test_three_one_split(self):
        expected = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
        assert entropy([3, 1]) == pytest.approx(expected)
        assert entropy([3, 1]) == pytest.approx(0.5623, abs=1e-4)

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            entropy([])

    @given(st.lists(st.integers(min_value=1, max_value=1000), min_size=1, max_size=30))
    def test_bounds(self, counts):
        value = entropy(counts)
        assert 0.0 <= value <= math.log(len(counts)) + 1e-12

    def test_zero_iff_concentrated(self):
        assert entropy([10, 0, 0]) == 0.0
        assert entropy([9, 1]) > 0.0


class TestComputeWindowStats:
    def test_homogeneous_udp_window(self):
        packets = [pkt(ts=0.1 * i, size=100, payload=60) for i in range(3)]
        stats = compute_window_stats(packets, CFG)
        assert stats.packet_count == 3
        assert stats.udp_frequency == 1.0
        assert stats.tcp_frequency == 0.0
        assert stats.packet_size_variance == 0.0
        assert stats.avg_packet_size == 100.0
        assert stats.dst_port_entropy == 0.0  # all to port 53
        assert stats.flow_rate == 3.0
        assert stats.avg_packet_number == 3.0

    def test_dst_port_entropy_two_ports(self):
        packets = [pkt(ts=0.1, dport=80), pkt(ts=0.2, dport=80),
                   pkt(ts=0.3, dport=443), pkt(ts=0.4, dport=443)]
        stats = compute_window_stats(packets, CFG)
        assert stats.dst_port_entropy == pytest.approx(math.log(2))
        assert stats.dst_port_entropy == pytest.approx(0.6931, abs=1e-4)

    def test_abnormal_size_threshold(self):
        packets = [pkt(ts=0.1, size=1400), pkt(ts=0.2, size=1600)]
        stats = compute_window_stats(packets, CFG)
        assert stats.abnormal_size_frequency == 1

    def test_scanning_counts_syn_without_ack(self):
        packets = [
            pkt(ts=0.1, proto=6, syn=1, ack=0),
            pkt(ts=0.2, proto=6, syn=1, ack=0),
            pkt(ts=0.3, proto=6, syn=1, ack=1),
        ]
        stats = compute_window_stats(packets, CFG)
        assert stats.scanning_count == 2

    def test_short_lived_connections(self):
        # Flow A: 2 packets with a SYN (short-lived); flow B: 7 packets (not).
        packets = [pkt(ts=0.01, proto=6, sport=1, syn=1), pkt(ts=0.02, proto=6, sport=1, fin=1)]
        packets += [pkt(ts=0.1 + 0.01 * i, proto=6, sport=2, ack=1, syn=1 if i == 0 else 0)
                    for i in range(7)]
        stats = compute_window_stats(packets, CFG)
        assert stats.short_lived_connections == 1

    def test_short_lived_flag_requirement_configurable(self):
        # Two packets mid-flow (no SYN/FIN/RST): only counted with the flag
        # requirement disabled.
        packets = [pkt(ts=0.01, proto=6, sport=1, ack=1), pkt(ts=0.02, proto=6, sport=1, ack=1)]
        strict = compute_window_stats(packets, CFG)
        assert strict.short_lived_connections == 0
        relaxed_cfg = WindowConfig(short_lived_requires_flag=False)
        relaxed = compute_window_stats(packets, relaxed_cfg)
        assert relaxed.short_lived_connections == 1

    def test_repeated_connection_attempts(self):
        packets = [
            pkt(ts=0.1, proto=6, sport=100, dport=80, syn=1),
            pkt(ts=0.2, proto=6, sport=101, dport=80, syn=1),  # same (src,dst,dport) triple
            pkt(ts=0.3, proto=6, sport=102, dport=81, syn=1),  # new triple
            pkt(ts=0.4, proto=6, sport=103, dport=80, syn=1),  # repeat again
        ]
        stats = compute_window_stats(packets, CFG)
        assert stats.repeated_connection_attempts == 2

    def test_port_frequency_gate(self):
        # No port reaches 5 occurrences: modal port fields report 0.
        packets = [pkt(ts=0.1 * i, sport=1000 + i, dport=2000 + i) for i in range(4)]
        stats = compute_window_stats(packets, CFG)
        assert stats.most_freq_src_port == 0
        assert stats.most_freq_dst_port == 0
        # With 5 hits on one port the gate opens.
        packets = [pkt(ts=0.1 * i, dport=80) for i in range(5)]
        stats = compute_window_stats(packets, CFG)
        assert stats.most_freq_dst_port == 80

    def test_modal_ties_take_smallest(self):
        packets = [pkt(ts=0.1, payload=10), pkt(ts=0.2, payload=10),
                   pkt(ts=0.3, payload=7), pkt(ts=0.4, payload=7)]
        stats = compute_window_stats(packets, CFG)
        assert stats.most_freq_payload_size == 7

    def test_modal_size_reports_count(self):
        packets = [pkt(ts=0.1, size=100), pkt(ts=0.2, size=100), pkt(ts=0.3, size=60)]
        stats = compute_window_stats(packets, CFG)
        assert stats.most_freq_packet_size_freq == 2

    def test_rst_count_and_frequencies(self):
        cfg = WindowConfig(processing_interval=2.0)
        packets = [
            pkt(ts=0.1, proto=6, syn=1),
            pkt(ts=0.5, proto=6, ack=1),
            pkt(ts=1.0, proto=6, rst=1, ack=1),
            pkt(ts=1.5),
        ]
        stats = compute_window_stats(packets, cfg)
        assert stats.rst_count == 1
        assert stats.syn_frequency == pytest.approx(1 / 2.0)
        assert stats.ack_frequency == pytest.approx(2 / 2.0)
        assert stats.tcp_frequency == pytest.approx(3 / 4)
        assert stats.udp_frequency == pytest.approx(1 / 4)
        assert stats.flow_rate == pytest.approx(4 / 2.0)

    def test_variance_and_stddev_consistent(self):
        packets = [pkt(ts=0.1 * i, size=60 + 10 * i, seq=i * 1000, proto=6) for i in range(10)]
        stats = compute_window_stats(packets, CFG)
        assert stats.packet_size_stddev**2 == pytest.approx(stats.packet_size_variance, rel=1e-9)
        sizes = [p.packet_size for p in packets]
        assert stats.packet_size_variance == pytest.approx(statistics.pvariance(sizes), rel=1e-12)
        seqs = [p.sequence_number for p in packets]
        assert stats.sequence_number_variance == pytest.approx(statistics.pvariance(seqs), rel=1e-12)

    def test_rejects_cross_window_packets(self):
        with pytest.raises(ValueError):
            compute_window_stats([pkt(ts=0.5), pkt(ts=1.5)], CFG)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            compute_window_stats([], CFG)


class TestWindowBatches:
    def test_partition_is_exact(self):
        stream = synthetic_stream(2000, seed=8)
        batches = list(window_batches(stream, CFG))
        assert sum(len(b) for _, b in batches) == 2000
        for wid, pkts in batches:
            assert all(window_id(p.timestamp, CFG) == wid for p in pkts)

    def test_monotonicity_enforced(self):
        stream = [pkt(ts=5.0), pkt(ts=1.0)]
        with pytest.raises(ValueError):
            list(window_batches(stream, CFG))

    def test_group_by_source_partitions(self):
        cfg = WindowConfig(group_by_source=True)
        stream = [pkt(ts=0.1, src="10.0.0.1"), pkt(ts=0.2, src="10.0.0.2"),
                  pkt(ts=0.3, src="10.0.0.1")]
        batches = list(window_batches(stream, cfg))
        assert len(batches) == 2
        assert sum(len(b) for _, b in batches) == 3
        for _, pkts in batches:
            assert len({p.src_ip for p in pkts}) == 1


class TestAssemble:
    def test_vector_length(self):
        p = pkt(ts=0.5, label=TrafficClass.IOT_BENIGN)
        stats = compute_window_stats([p], CFG)
        vec = assemble(p, stats, CFG)
        assert len(vec.values) == 42
        assert vec.label is TrafficClass.IOT_BENIGN
        assert vec.window_id == 0

    def test_same_window_same_suffix(self):
        a = pkt(ts=0.2, sport=1)
        b = pkt(ts=0.8, sport=2)
        stats = compute_window_stats([a, b], CFG)
        va = assemble(a, stats, CFG)
        vb = assemble(b, stats, CFG)
        assert va.values[18:] == vb.values[18:]

    def test_order_free_statistics(self):
        packets = [pkt(ts=0.1 * i, sport=i, size=60 + i) for i in range(9)]
        stats_fwd = compute_window_stats(packets, CFG)
        stats_rev = compute_window_stats(list(reversed(packets)), CFG)
        target = packets[4]
        assert assemble(target, stats_fwd, CFG) == assemble(target, stats_rev, CFG)

    def test_window_mismatch_rejected(self):
        p0 = pkt(ts=0.5)
        p1 = pkt(ts=1.5)
        stats = compute_window_stats([p0], CFG)
        with pytest.raises(ValueError):
            assemble(p1, stats, CFG)

    def test_feature_names_arity(self):
        assert len(FEATURE_NAMES) == N_FEATURES == 42
        assert len(set(FEATURE_NAMES)) == 42


class TestScaler:
    def test_midpoint(self):
        params = fit_scaler([[0.0], [10.0]])
        assert apply_scaler(params, [5.0])[0] == pytest.approx(0.5)

    def test_boundaries_and_clamping(self):
        params = fit_scaler([[0.0], [10.0]])
        assert apply_scaler(params, [10.0])[0] == 1.0
        assert apply_scaler(params, [-3.0])[0] == 0.0
        assert apply_scaler(params, [42.0])[0] == 1.0

    def test_constant_dimension_maps_to_zero(self):
        params = fit_scaler([[7.0], [7.0], [7.0]])
        for probe in (-1.0, 7.0, 99.0):
            assert apply_scaler(params, [probe])[0] == 0.0

    def test_dimension_mismatch(self):
        params = fit_scaler([[0.0, 1.0]])
        with pytest.raises(ValueError):
            apply_scaler(params, [1.0, 2.0, 3.0])

    def test_min_above_max_rejected(self):
        with pytest.raises(ValueError):
            ScalerParams(minimum=np.array([1.0]), maximum=np.array([0.0]))

    def test_matrix_application(self):
        params = fit_scaler([[0.0, 10.0], [10.0, 20.0]])
        out = apply_scaler(params, np.array([[5.0, 15.0], [0.0, 10.0]]))
        assert out.shape == (2, 2)
        assert out[0] == pytest.approx([0.5, 0.5])

    @settings(max_examples=50)
    @given(
        st.lists(
            st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3),
            min_size=1,
            max_size=20,
        ),
        st.lists(st.floats(-1e7, 1e7, allow_nan=False), min_size=3, max_size=3),
    )
    def test_outputs_always_in_unit_interval(self, train, probe):
        params = fit_scaler(train)
        out = apply_scaler(params, probe)
        assert np.all(out >= 0.0) and np.all(out <= 1.0)


class TestStreamingEqualsBatch:
    def naive_stats(self, packets, cfg, wid):
        """Independent two-pass recomputation used as the oracle."""
        n = len(packets)
        interval = cfg.processing_interval
        dst_ports = Counter(p.dst_port for p in packets)
        src_ports = Counter(p.src_port for p in packets)
        protos = Counter(p.protocol for p in packets)
        sizes = Counter(p.packet_size for p in packets)
        payloads = Counter(p.payload_size for p in packets)
        sources = Counter(p.src_ip for p in packets)

        def modal(counter, gate=0):
            best = max(sorted(counter.items()), key=lambda kv: kv[1])
            return best[0] if best[1] >= gate else 0

        flows = Counter(
            (p.src_ip, p.dst_ip, p.src_port, p.dst_port, p.protocol) for p in packets
        )
        flagged = {
            (p.src_ip, p.dst_ip, p.src_port, p.dst_port, p.protocol)
            for p in packets
            if p.syn or p.fin or p.rst
        }
        if cfg.short_lived_requires_flag:
            short = sum(1 for f, c in flows.items() if c < cfg.short_lived_threshold and f in flagged)
        else:
            short = sum(1 for c in flows.values() if c < cfg.short_lived_threshold)
        seen = set()
        repeated = 0
        for p in packets:
            if p.syn:
                t = (p.src_ip, p.dst_ip, p.dst_port)
                if t in seen:
                    repeated += 1
                seen.add(t)
        seqs = [p.sequence_number for p in packets]
        pk_sizes = [p.packet_size for p in packets]
        var_size = statistics.pvariance(pk_sizes) if n > 1 else 0.0
        var_seq = statistics.pvariance(seqs) if n > 1 else 0.0
        return {
            "packet_count": n,
            "dst_port_entropy": entropy(dst_ports),
            "most_freq_src_port": modal(src_ports, cfg.port_frequency_threshold),
            "most_freq_dst_port": modal(dst_ports, cfg.port_frequency_threshold),
            "short_lived_connections": short,
            "repeated_connection_attempts": repeated,
            "scanning_count": sum(1 for p in packets if p.syn and not p.ack),
            "flow_rate": n / interval,
            "source_entropy": entropy(sources),
            "rst_count": sum(p.rst for p in packets),
            "most_freq_packet_size_freq": max(sizes.values()),
            "abnormal_size_frequency": sum(
                1 for p in packets if p.packet_size > cfg.abnormal_size_threshold
            ),
            "sequence_number_variance": var_seq,
            "avg_packet_number": float(n),
            "syn_frequency": sum(p.syn for p in packets) / interval,
            "ack_frequency": sum(p.ack for p in packets) / interval,
            "tcp_frequency": sum(p.tcp_flag for p in packets) / n,
            "udp_frequency": sum(p.udp_flag for p in packets) / n,
            "most_freq_protocol": modal(protos),
            "packet_size_variance": var_size,
            "most_freq_payload_size": modal(payloads),
            "avg_payload_size": sum(p.payload_size for p in packets) / n,
            "packet_size_stddev": math.sqrt(var_size),
            "avg_packet_size": sum(pk_sizes) / n,
        }

    def test_small_window(self):
        packets = [pkt(ts=0.02 * i, proto=6 if i % 2 else 17, sport=i % 3,
                       dport=80 + i % 2, syn=i % 4 == 0, size=60 + 7 * i,
                       payload=3 * i, seq=i * 999) for i in range(40)]
        stats = compute_window_stats(packets, CFG)
        expected = self.naive_stats(packets, CFG, 0)
        for name, want in expected.items():
            got = getattr(stats, name)
            assert got == pytest.approx(want, rel=1e-9), name

    def test_randomized_stream(self):
        stream = synthetic_stream(3000, seed=21)
        for wid, pkts in window_batches(stream, CFG):
            stats = compute_window_stats(pkts, CFG)
            expected = self.naive_stats(pkts, CFG, wid)
            for name, want in expected.items():
                got = getattr(stats, name)
                assert got == pytest.approx(want, rel=1e-9), f"window {wid}: {name}"


class TestFeatureCsv:
    def test_round_trip(self, tmp_path):
        stream = synthetic_stream(300, seed=4)
        vectors = list(stream_vectors(stream, CFG))
        path = tmp_path / "features.csv"
        count = write_feature_csv(path, vectors)
        assert count == 300
        back = read_feature_csv(path)
        assert back == vectors

    def test_header_layout(self, tmp_path):
        path = tmp_path / "f.csv"
        write_feature_csv(path, [])
        header = path.read_text().splitlines()[0].split(",")
        assert tuple(header) == CSV_HEADER
        assert len(header) == 44

    def test_unlabeled_column_empty(self, tmp_path):
        p = pkt(ts=0.5)
        stats = compute_window_stats([p], CFG)
        vec = assemble(p, stats, CFG)
        path = tmp_path / "f.csv"
        write_feature_csv(path, [vec])
        row = path.read_text().splitlines()[1]
        assert row.endswith(",0,")
        assert read_feature_csv(path)[0].label is None
