"""Spatio-temporal memory: per-track FIFO state histories.

The buffer has value semantics: every mutating method returns a new buffer
and leaves the receiver untouched, so snapshots can be shared freely.
"""
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

DEFAULT_MAX_TRACKS = 350
DEFAULT_HORIZON = 30


@dataclass(frozen=True, eq=False)
class TrackState:
    embedding: np.ndarray
    box: Tuple[float, float, float, float]
    confidence: float
    frame_index: int
    present: bool = True

    def __post_init__(self):
        emb = np.array(self.embedding, dtype=np.float64)
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "box", tuple(float(v) for v in self.box))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if not self.present and (np.any(emb != 0) or any(self.box)):
            raise ValueError("absent states must carry a zero embedding and zero box")

    def __eq__(self, other):
        if not isinstance(other, TrackState):
            return NotImplemented
        return (
            (self.box, self.confidence, self.frame_index, self.present)
            == (other.box, other.confidence, other.frame_index, other.present)
            and np.array_equal(self.embedding, other.embedding)
        )

    __hash__ = None

    @classmethod
    def absent(cls, frame_index, dim):
        return cls(np.zeros(dim), (0.0, 0.0, 0.0, 0.0), 0.0, frame_index, False)

    def to_dict(self):
        return {
            "frame": self.frame_index,
            "present": self.present,
            "box": list(self.box),
            "confidence": self.confidence,
            "embedding": self.embedding.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["embedding"], doc["box"], doc["confidence"], doc["frame"], doc["present"])


class MemoryBuffer:
    """Up to ``max_tracks`` tracks, each keeping its last ``horizon`` states.

    When a new track would exceed ``max_tracks`` the earliest-admitted track
    is evicted. Absent frames are stored as zero-padded states and count
    toward the horizon.
    """

    def __init__(self, max_tracks=DEFAULT_MAX_TRACKS, horizon=DEFAULT_HORIZON):
        if max_tracks < 1 or horizon < 1:
            raise ValueError("max_tracks and horizon must be positive")
        self.max_tracks = int(max_tracks)
        self.horizon = int(horizon)
        self._queues: Dict[int, Tuple[TrackState, ...]] = {}

    def _copy(self):
        new = MemoryBuffer(self.max_tracks, self.horizon)
        new._queues = dict(self._queues)
        return new

    def __len__(self):
        return len(self._queues)

    def __contains__(self, track_id):
        return track_id in self._queues

    @property
    def track_ids(self):
        """Live track ids in admission order."""
        return list(self._queues)

    def history(self, track_id):
        if track_id not in self._queues:
            raise KeyError(f"unknown track {track_id}")
        return self._queues[track_id]

    def admit(self, track_id, initial_state: Optional[TrackState] = None):
        if track_id in self._queues:
            raise ValueError(f"track {track_id} already in memory")
        new = self._copy()
        if len(new._queues) >= self.max_tracks:
            oldest = next(iter(new._queues))
            del new._queues[oldest]
        new._queues[track_id] = (initial_state,) if initial_state is not None else ()
        return new

    def append_frame(self, frame_index, states: Mapping[int, Optional[TrackState]]):
        """Append one state per live track; tracks missing from ``states`` get an absent state."""
        unknown = set(states) - set(self._queues)
        if unknown:
            raise ValueError(f"states given for unknown tracks {sorted(unknown)}")
        new = self._copy()
        for tid, queue in self._queues.items():
            if queue and queue[-1].frame_index != frame_index - 1:
                raise ValueError(
                    f"track {tid}: frame {frame_index} does not follow frame {queue[-1].frame_index}"
                )
            state = states.get(tid)
            if state is None:
                dim = queue[-1].embedding.shape[0] if queue else 0
                state = TrackState.absent(frame_index, dim)
            elif state.frame_index != frame_index:
                raise ValueError(f"track {tid}: state frame {state.frame_index} != {frame_index}")
            queue = queue + (state,)
            if len(queue) > self.horizon:
                queue = queue[-self.horizon:]
            new._queues[tid] = queue
        return new

    def window(self, track_id, length):
        """Most recent ``length`` states, oldest first."""
        if length < 1:
            raise ValueError("window length must be positive")
        return list(self.history(track_id)[-length:])

    def remove(self, track_id):
        if track_id not in self._queues:
            raise KeyError(f"unknown track {track_id}")
        new = self._copy()
        del new._queues[track_id]
        return new

    def check_invariants(self):
        assert len(self._queues) <= self.max_tracks
        for tid, queue in self._queues.items():
            assert len(queue) <= self.horizon, tid
            frames = [s.frame_index for s in queue]
            assert all(b == a + 1 for a, b in zip(frames, frames[1:])), tid
            for s in queue:
                if not s.present:
                    assert np.linalg.norm(s.embedding) == 0.0, tid

    def to_json(self):
        return {str(tid): [s.to_dict() for s in q] for tid, q in self._queues.items()}

    @classmethod
    def from_json(cls, doc, max_tracks=DEFAULT_MAX_TRACKS, horizon=DEFAULT_HORIZON):
        buf = cls(max_tracks, horizon)
        buf._queues = {int(tid): tuple(TrackState.from_dict(s) for s in q) for tid, q in doc.items()}
        return buf
