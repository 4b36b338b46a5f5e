"""Source-clip metadata: the material set a draft selects from.

Frame indices and timestamps are computed from metadata only; no video
decoding happens here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator


@dataclass(frozen=True)
class ClipMeta:
    """Duration and frame-count metadata for one source clip."""

    index: int
    duration_s: float
    frame_count: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"clip index must be >= 0, got {self.index}")
        if self.frame_count < 1:
            raise ValueError(f"frame_count must be >= 1, got {self.frame_count}")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be > 0, got {self.duration_s}")
        fps = self.native_fps
        if not 1.0 <= fps <= 240.0:
            raise ValueError(f"native fps {fps:.3f} outside [1, 240] for clip {self.index}")

    @property
    def native_fps(self) -> float:
        return self.frame_count / self.duration_s

    @property
    def duration_ms(self) -> int:
        return round(self.duration_s * 1000)


class ClipSet:
    """Immutable set of clips addressable by index."""

    def __init__(self, clips: Iterable[ClipMeta]):
        self._by_index: dict[int, ClipMeta] = {}
        for clip in clips:
            if clip.index in self._by_index:
                raise ValueError(f"duplicate clip index {clip.index}")
            self._by_index[clip.index] = clip

    def __len__(self) -> int:
        return len(self._by_index)

    def __iter__(self) -> Iterator[ClipMeta]:
        return iter(sorted(self._by_index.values(), key=lambda c: c.index))

    def __contains__(self, index: int) -> bool:
        return index in self._by_index

    def get(self, index: int) -> ClipMeta | None:
        return self._by_index.get(index)

    def indices(self) -> list[int]:
        return sorted(self._by_index)

    def to_dict(self) -> dict:
        return {
            "clips": [
                {"index": c.index, "duration_s": c.duration_s, "frame_count": c.frame_count}
                for c in self
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClipSet":
        return cls(
            ClipMeta(index=e["index"], duration_s=e["duration_s"], frame_count=e["frame_count"])
            for e in data["clips"]
        )

    @classmethod
    def load(cls, path: str | Path) -> "ClipSet":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
