"""Rate-distortion traces: segment/tail qualities and bitrate requirements.

Trace files are CSV with the header
``video_id,rep_index,segment_index,frame_index,size_bits,q_msered``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

TRACE_HEADER = ["video_id", "rep_index", "segment_index", "frame_index", "size_bits", "q_msered"]
GOP_SIZE = 16
GOP_PATTERNS = (1, 3, 7, 15)  # B frames between reference frames: G16B1 .. G16B15


class TraceError(ValueError):
    pass


@dataclass
class Segment:
    sizes: np.ndarray  # bits per frame
    q: np.ndarray  # MSE reduction per frame
    duration_s: float = 10.0

    @property
    def bits(self) -> float:
        return float(self.sizes.sum())


@dataclass
class Representation:
    index: int
    segments: list[Segment]

    @property
    def total_size(self) -> float:
        return float(sum(s.bits for s in self.segments))

    @property
    def n_segments(self) -> int:
        return len(self.segments)


@dataclass
class VideoLibrary:
    videos: dict[int, list[Representation]]
    playback_time: dict[int, float] = field(default_factory=dict)
    startup_buffer: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._validate()
        self._seg_q = {
            v: np.array([[segment_quality(s.q) for s in rep.segments] for rep in reps])
            for v, reps in self.videos.items()
        }
        self._seg_bits = {
            v: np.array([[s.bits for s in rep.segments] for rep in reps]) for v, reps in self.videos.items()
        }
        self._seg_dur = {
            v: np.array([s.duration_s for s in reps[0].segments]) for v, reps in self.videos.items()
        }

    def _validate(self) -> None:
        if not self.videos:
            raise TraceError("no videos")
        for v, reps in self.videos.items():
            if not reps:
                raise TraceError(f"video {v}: no representations")
            nseg = reps[0].n_segments
            for rep in reps:
                if rep.n_segments == 0 or rep.n_segments != nseg:
                    raise TraceError(f"video {v} rep {rep.index}: segment count {rep.n_segments} != {nseg}")
                for s, seg in enumerate(rep.segments):
                    if len(seg.sizes) == 0:
                        raise TraceError(f"video {v} rep {rep.index} segment {s}: no frames")
                    if np.any(seg.sizes <= 0):
                        raise TraceError(f"video {v} rep {rep.index} segment {s}: zero-size frame")
                    if np.any(seg.q < 0):
                        raise TraceError(f"video {v} rep {rep.index} segment {s}: negative q")
            self.playback_time.setdefault(v, float(sum(s.duration_s for s in reps[0].segments)))
            self.startup_buffer.setdefault(v, 0.0)
            if self.playback_time[v] <= 0 or self.startup_buffer[v] < 0:
                raise TraceError(f"video {v}: invalid playback time or startup buffer")
            qs = [float(np.mean([segment_quality(s.q) for s in rep.segments])) for rep in reps]
            if any(b <= a for a, b in zip(qs, qs[1:])):
                raise TraceError(f"video {v}: quality not strictly increasing across representations {qs}")
            sizes = [rep.total_size for rep in reps]
            if any(b < a for a, b in zip(sizes, sizes[1:])):
                log.warning("video %s: total size not monotone in representation index", v)

    def n_reps(self, video: int) -> int:
        return len(self.videos[video])

    def n_segments(self, video: int) -> int:
        return self.videos[video][0].n_segments

    def segment_duration(self, video: int, seg: int) -> float:
        return float(self._seg_dur[video][seg])

    def segment_bits(self, video: int, r: int, seg: int) -> float:
        return float(self._seg_bits[video][r, seg])

    def tail_quality(self, video: int, r: int, t: int = 0) -> float:
        """Mean segment quality from segment ``t`` to the last one."""
        sq = self._seg_q[video][r]
        if not 0 <= t < len(sq):
            raise IndexError(f"segment {t} out of range for video {video}")
        return float(sq[t:].mean())

    def required_rate(self, video: int, r: int) -> float:
        """Average bitrate S_ir / (T_i + B_i0) that avoids rebuffering."""
        denom = self.playback_time[video] + self.startup_buffer[video]
        if denom <= 0:
            raise ValueError("playback time plus startup buffer must be positive")
        return self.videos[video][r].total_size / denom

    def tail_rate(self, video: int, r: int, t: int = 0) -> float:
        """Bits of segments t..last over their playback duration."""
        bits = self._seg_bits[video][r]
        if not 0 <= t < len(bits):
            raise IndexError(f"segment {t} out of range for video {video}")
        return float(bits[t:].sum() / self._seg_dur[video][t:].sum())

    def quality_table(self, video: int, t: int = 0) -> np.ndarray:
        return np.array([self.tail_quality(video, r, t) for r in range(self.n_reps(video))])

    def rate_table(self, video: int) -> np.ndarray:
        return np.array([self.required_rate(video, r) for r in range(self.n_reps(video))])


def segment_quality(q) -> float:
    """Average MSE reduction per frame of one segment."""
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        raise ValueError("segment has no frames")
    return float(q.mean())


def tail_quality(library: VideoLibrary, video: int, r: int, t: int = 0) -> float:
    return library.tail_quality(video, r, t)


def required_rate(library: VideoLibrary, video: int, r: int) -> float:
    return library.required_rate(video, r)


def tail_rate(library: VideoLibrary, video: int, r: int, t: int = 0) -> float:
    return library.tail_rate(video, r, t)


# ---------------------------------------------------------------- trace I/O


def load_traces(path, segment_duration: float = 10.0, startup_buffer: float = 0.0) -> VideoLibrary:
    rows: dict[int, dict[int, dict[int, list[tuple[int, float, float]]]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceError("no videos")
        if [h.strip() for h in header] != TRACE_HEADER:
            raise TraceError(f"bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACE_HEADER):
                raise TraceError(f"line {lineno}: expected {len(TRACE_HEADER)} fields, got {len(row)}")
            try:
                v, r, s, n = (int(x) for x in row[:4])
                size, q = float(row[4]), float(row[5])
            except ValueError as exc:
                raise TraceError(f"line {lineno}: malformed row {row!r}") from exc
            if size <= 0:
                raise TraceError(f"line {lineno}: zero-size frame (video {v} rep {r} segment {s} frame {n})")
            if q < 0:
                raise TraceError(f"line {lineno}: negative q (video {v} rep {r} segment {s} frame {n})")
            rows.setdefault(v, {}).setdefault(r, {}).setdefault(s, []).append((n, size, q))
    if not rows:
        raise TraceError("no videos")

    videos: dict[int, list[Representation]] = {}
    for v in sorted(rows):
        reps = []
        for k, r in enumerate(sorted(rows[v])):
            if r != k:
                raise TraceError(f"video {v}: representation indices must be 0..R-1, missing {k}")
            segs = []
            for k2, s in enumerate(sorted(rows[v][r])):
                if s != k2:
                    raise TraceError(f"video {v} rep {r}: missing segment {k2}")
                frames = sorted(rows[v][r][s])
                segs.append(
                    Segment(
                        np.array([f[1] for f in frames]),
                        np.array([f[2] for f in frames]),
                        segment_duration,
                    )
                )
            reps.append(Representation(r, segs))
        videos[v] = reps
    return VideoLibrary(videos, startup_buffer={v: startup_buffer for v in videos})


def save_traces(library: VideoLibrary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for v, reps in sorted(library.videos.items()):
            for rep in reps:
                for s, seg in enumerate(rep.segments):
                    for n, (size, q) in enumerate(zip(seg.sizes, seg.q)):
                        w.writerow([v, rep.index, s, n, repr(float(size)), repr(float(q))])


# ---------------------------------------------------------- synthetic traces


@dataclass(frozen=True)
class SyntheticConfig:
    n_videos: int = 4
    n_reps: int = 3
    n_segments: int = 18
    segment_duration: float = 10.0
    fps: int = 30
    min_bitrate: float = 128e3
    max_bitrate: float = 7e6
    startup_buffer: float = 0.0


def frame_types(n_frames: int, b_frames: int) -> np.ndarray:
    """GOP-16 frame type sequence: 'I' at each GOP start, 'P' every
    ``b_frames + 1`` positions, 'B' elsewhere."""
    pos = np.arange(n_frames) % GOP_SIZE
    types = np.full(n_frames, "B")
    types[pos % (b_frames + 1) == 0] = "P"
    types[pos == 0] = "I"
    return types


_SIZE_WEIGHT = {"I": 6.0, "P": 2.5, "B": 1.0}
_Q_WEIGHT = {"I": 4.0, "P": 2.0, "B": 1.0}


def synthetic_library(cfg: SyntheticConfig, seed: int) -> VideoLibrary:
    """GOP-patterned traces with geometric bitrate ladders.

    Per-frame MSE reduction grows concavely with the representation bitrate
    and shares its random perturbations across representations, so quality
    is strictly increasing in the representation index.
    """
    rng = np.random.default_rng(seed)
    n_frames = int(round(cfg.fps * cfg.segment_duration))
    total_frames = n_frames * cfg.n_segments
    videos = {}
    for v in range(cfg.n_videos):
        b_frames = int(rng.choice(GOP_PATTERNS))
        types = frame_types(total_frames, b_frames)
        sw = np.array([_SIZE_WEIGHT[t] for t in types])
        qw = np.array([_Q_WEIGHT[t] for t in types])
        # each video spans its own slice of the 128 kb/s .. 7 Mb/s range
        lo = np.exp(rng.uniform(np.log(cfg.min_bitrate), np.log(cfg.max_bitrate / 8)))
        hi = min(cfg.max_bitrate, lo * rng.uniform(6.0, 12.0))
        if cfg.n_reps == 1:
            ladder = np.array([lo])
        else:
            ladder = np.geomspace(lo, hi, cfg.n_reps)
        complexity = rng.uniform(0.5, 2.0)
        activity = np.repeat(rng.lognormal(0.0, 0.25, cfg.n_segments), n_frames)
        size_noise = rng.lognormal(0.0, 0.15, total_frames)
        q_noise = rng.lognormal(0.0, 0.1, total_frames)
        reps = []
        for r, rate in enumerate(ladder):
            raw = sw * activity * size_noise
            sizes = raw / raw.mean() * rate / cfg.fps
            level = 100.0 * (1.0 - np.exp(-rate / (complexity * 1e6)))
            q = level * qw / qw.mean() * q_noise / activity
            segs = [
                Segment(sizes[k * n_frames:(k + 1) * n_frames].copy(),
                        q[k * n_frames:(k + 1) * n_frames].copy(),
                        cfg.segment_duration)
                for k in range(cfg.n_segments)
            ]
            reps.append(Representation(r, segs))
        videos[v] = reps
    return VideoLibrary(videos, startup_buffer={v: cfg.startup_buffer for v in videos})
