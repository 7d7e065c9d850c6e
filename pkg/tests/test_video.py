import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcnstream.video import (
    GOP_SIZE,
    TRACE_HEADER,
    Representation,
    Segment,
    SyntheticConfig,
    TraceError,
    VideoLibrary,
    frame_types,
    load_traces,
    save_traces,
    segment_quality,
    synthetic_library,
)


def lib_from(q_by_rep, bits_by_rep, dur=10.0, b0=0.0):
    reps = []
    for r, (qs, bs) in enumerate(zip(q_by_rep, bits_by_rep)):
        segs = [Segment(np.array([b / 2, b / 2]), np.array([q, q]), dur) for q, b in zip(qs, bs)]
        reps.append(Representation(r, segs))
    return VideoLibrary({0: reps}, startup_buffer={0: b0})


def write(tmp_path, rows, header=TRACE_HEADER):
    p = tmp_path / "t.csv"
    p.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return p


def test_segment_quality():
    assert segment_quality([2.0, 4.0]) == 3.0
    assert segment_quality([5.0]) == 5.0
    assert segment_quality([1.5] * 7) == 1.5
    with pytest.raises(ValueError):
        segment_quality([])


def test_tail_quality_and_rates():
    lib = lib_from([[1.0, 3.0], [2.0, 6.0]], [[4e6, 6e6], [8e6, 12e6]])
    assert lib.tail_quality(0, 0, 0) == 2.0
    assert lib.tail_quality(0, 0, 1) == 3.0
    with pytest.raises(IndexError):
        lib.tail_quality(0, 0, 2)
    assert lib.required_rate(0, 0) == pytest.approx(1e7 / 20.0)
    assert lib.tail_rate(0, 0, 0) == pytest.approx(lib.required_rate(0, 0))
    assert lib.tail_rate(0, 1, 1) == pytest.approx(12e6 / 10.0)


def test_required_rate_with_startup_buffer():
    lib = lib_from([[1.0] * 10], [[1e6] * 10], dur=10.0, b0=0.0)
    assert lib.required_rate(0, 0) == pytest.approx(1e7 / 100.0)
    lib = VideoLibrary(lib.videos, playback_time={0: 99.0}, startup_buffer={0: 1.0})
    assert lib.required_rate(0, 0) == pytest.approx(1e5)


def test_load_errors(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(TraceError, match="no videos"):
        load_traces(empty)
    with pytest.raises(TraceError, match="no videos"):
        load_traces(write(tmp_path, []))
    with pytest.raises(TraceError, match="line 2"):
        load_traces(write(tmp_path, [[0, 0, 0, 0, "x", 1.0]]))
    with pytest.raises(TraceError, match="zero-size"):
        load_traces(write(tmp_path, [[0, 0, 0, 0, 0, 1.0]]))
    with pytest.raises(TraceError, match="not strictly increasing"):
        load_traces(write(tmp_path, [[0, 0, 0, 0, 10, 2.0], [0, 1, 0, 0, 20, 2.0]]))


def test_load_identity(tmp_path):
    lib = load_traces(write(tmp_path, [[0, 0, 0, 0, 100, 1.0], [0, 0, 0, 1, 50, 3.0]]))
    assert list(lib.videos) == [0]
    assert lib.n_reps(0) == 1 and lib.n_segments(0) == 1
    assert len(lib.videos[0][0].segments[0].sizes) == 2
    assert lib.tail_quality(0, 0) == 2.0


def test_synthetic_round_trip(tmp_path):
    cfg = SyntheticConfig(n_videos=2, n_reps=3, n_segments=3)
    a, b = synthetic_library(cfg, 5), synthetic_library(cfg, 5)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    save_traces(a, p1)
    save_traces(b, p2)
    assert p1.read_bytes() == p2.read_bytes()
    back = load_traces(p1)
    for v in a.videos:
        np.testing.assert_array_equal(back.quality_table(v), a.quality_table(v))
        np.testing.assert_array_equal(back.rate_table(v), a.rate_table(v))


def test_synthetic_bitrate_range_and_gop():
    cfg = SyntheticConfig(n_videos=6, n_reps=4, n_segments=2)
    lib = synthetic_library(cfg, 1)
    for v in lib.videos:
        rates = lib.rate_table(v)
        assert rates.min() >= cfg.min_bitrate * 0.999 and rates.max() <= cfg.max_bitrate * 1.001
        assert np.all(np.diff(lib.quality_table(v)) > 0)
    for b in (1, 3, 7, 15):
        types = frame_types(GOP_SIZE * 5, b)
        for g in range(5):
            assert list(types[g * GOP_SIZE:(g + 1) * GOP_SIZE]).count("I") == 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.integers(0, 4))
def test_suffix_oracles(seed, t):
    lib = synthetic_library(SyntheticConfig(n_videos=1, n_reps=2, n_segments=5, segment_duration=2.0), seed)
    for r in range(2):
        segs = lib.videos[0][r].segments
        q = sum(s.q.mean() for s in segs[t:]) / len(segs[t:])
        bits = sum(s.sizes.sum() for s in segs[t:])
        assert lib.tail_quality(0, r, t) == pytest.approx(q, rel=1e-12)
        assert lib.tail_rate(0, r, t) == pytest.approx(bits / (2.0 * len(segs[t:])), rel=1e-12)
    assert lib.tail_quality(0, 1, 0) == pytest.approx(np.mean([s.q.mean() for s in lib.videos[0][1].segments]))
