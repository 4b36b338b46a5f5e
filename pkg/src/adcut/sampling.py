"""Denser slow-fast frame sampling and token budgeting.

Two pathways sample each clip: a fast one (dense frames, few tokens per
frame) and a slow one (sparse frames, many tokens per frame). A clip
shorter than one sampling interval contributes its middle frame only;
otherwise round(duration * fps) frames are taken uniformly. Requests are
capped at a total fast-frame ceiling (default 600) enforced by halving the
effective fast fps.

Also provides the two numeric reference ops for visual-token compression:
query squeezing (1-D group means) and 2-D average pooling.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .clips import ClipMeta, ClipSet

DEFAULT_FRAME_CEILING = 600


class PresetError(ValueError):
    """Unparseable fps/token preset string."""


class NonDivisible(ValueError):
    """Group size does not divide the dimension being compressed."""


class CeilingUnsatisfiable(RuntimeError):
    """More clips than the frame ceiling allows even at one frame each."""

    def __init__(self, clip_count: int, ceiling: int):
        super().__init__(f"{clip_count} clips cannot fit a {ceiling}-frame ceiling at one frame per clip")
        self.clip_count = clip_count
        self.ceiling = ceiling


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class PathwayConfig:
    fps: float
    tokens_per_frame: int

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError(f"fps must be > 0, got {self.fps}")
        if self.tokens_per_frame < 1:
            raise ValueError(f"tokens_per_frame must be >= 1, got {self.tokens_per_frame}")


@dataclass(frozen=True)
class SlowFastConfig:
    fast: PathwayConfig
    slow: PathwayConfig
    frame_ceiling: int = DEFAULT_FRAME_CEILING

    def __post_init__(self) -> None:
        if self.fast.fps < self.slow.fps:
            raise ValueError("fast pathway must sample at least as densely as slow")
        if self.fast.tokens_per_frame > self.slow.tokens_per_frame:
            raise ValueError("fast pathway must use at most as many tokens per frame as slow")
        if self.frame_ceiling < 1:
            raise ValueError("frame_ceiling must be >= 1")

    @property
    def beta(self) -> float:
        """Fast-to-slow fps ratio (implied, never stored)."""
        return self.fast.fps / self.slow.fps

    def to_dict(self) -> dict:
        return {
            "fast": {"fps": self.fast.fps, "tokens_per_frame": self.fast.tokens_per_frame},
            "slow": {"fps": self.slow.fps, "tokens_per_frame": self.slow.tokens_per_frame},
            "frame_ceiling": self.frame_ceiling,
        }


_PRESET_PAIR = re.compile(r"^(?:(fast|slow):)?(\d+(?:\.\d+)?)/(\d+)$")


def parse_preset(text: str) -> SlowFastConfig:
    """Parse a preset such as ``fast:2/4,slow:0.5/16`` (comma or space separated).

    A single unnamed ``fps/token`` pair configures both pathways identically
    (single-pathway operation).
    """
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        raise PresetError("empty preset")
    pathways: dict[str, PathwayConfig] = {}
    unnamed: PathwayConfig | None = None
    for part in parts:
        m = _PRESET_PAIR.match(part)
        if not m:
            raise PresetError(f"cannot parse preset component {part!r} (want name:fps/tokens)")
        name, fps, tokens = m.group(1), float(m.group(2)), int(m.group(3))
        cfg = PathwayConfig(fps=fps, tokens_per_frame=tokens)
        if name is None:
            if unnamed is not None:
                raise PresetError("unnamed fps/token pair must be the only component")
            unnamed = cfg
        elif name in pathways:
            raise PresetError(f"duplicate {name} pathway in preset")
        else:
            pathways[name] = cfg
    if unnamed is not None:
        if pathways:
            raise PresetError("unnamed fps/token pair must be the only component")
        return SlowFastConfig(fast=unnamed, slow=unnamed)
    if set(pathways) != {"fast", "slow"}:
        missing = {"fast", "slow"} - set(pathways)
        raise PresetError(f"preset missing pathway(s): {', '.join(sorted(missing))}")
    return SlowFastConfig(fast=pathways["fast"], slow=pathways["slow"])


# ---------------------------------------------------------------------------
# frame sampling


def sample_frames(clip: ClipMeta, fps: float) -> list[int]:
    """Frame indices sampled from one clip at the given rate.

    Clips shorter than one interval fall back to the middle frame. The
    uniform branch takes round(duration * fps) frames, clamped to the
    clip's frame count so indices stay strictly increasing.
    """
    if fps <= 0:
        raise ValueError(f"fps must be > 0, got {fps}")
    t, total = clip.duration_s, clip.frame_count
    if t < 1.0 / fps:
        return [total // 2]
    n = min(_round_half_up(t * fps), total)
    return [math.floor(j * total / n) for j in range(n)]


def frame_timestamps(clip: ClipMeta, indices: list[int]) -> list[float]:
    """Seconds offset of each sampled frame within the clip."""
    return [i / clip.native_fps for i in indices]


@dataclass(frozen=True)
class PathwaySample:
    frame_indices: tuple[int, ...]
    timestamps_s: tuple[float, ...]
    tokens: int

    def to_dict(self) -> dict:
        return {
            "frame_indices": list(self.frame_indices),
            "timestamps_s": list(self.timestamps_s),
            "tokens": self.tokens,
        }


@dataclass(frozen=True)
class ClipPlan:
    index: int
    fast: PathwaySample
    slow: PathwaySample

    def to_dict(self) -> dict:
        return {"index": self.index, "fast": self.fast.to_dict(), "slow": self.slow.to_dict()}


@dataclass(frozen=True)
class SamplingPlan:
    config: SlowFastConfig
    effective_fast_fps: float
    reduction_factor: int
    clips: tuple[ClipPlan, ...]

    @property
    def total_fast_frames(self) -> int:
        return sum(len(c.fast.frame_indices) for c in self.clips)

    @property
    def total_slow_frames(self) -> int:
        return sum(len(c.slow.frame_indices) for c in self.clips)

    @property
    def total_fast_tokens(self) -> int:
        return sum(c.fast.tokens for c in self.clips)

    @property
    def total_slow_tokens(self) -> int:
        return sum(c.slow.tokens for c in self.clips)

    def to_dict(self) -> dict:
        return {
            "preset": self.config.to_dict(),
            "effective_fast_fps": self.effective_fast_fps,
            "reduction_factor": self.reduction_factor,
            "clips": [c.to_dict() for c in self.clips],
            "totals": {
                "fast_frames": self.total_fast_frames,
                "slow_frames": self.total_slow_frames,
                "fast_tokens": self.total_fast_tokens,
                "slow_tokens": self.total_slow_tokens,
            },
        }


def _sample_pathway(clip: ClipMeta, fps: float, tokens_per_frame: int) -> PathwaySample:
    indices = sample_frames(clip, fps)
    return PathwaySample(
        frame_indices=tuple(indices),
        timestamps_s=tuple(frame_timestamps(clip, indices)),
        tokens=tokens_per_frame * len(indices),
    )


def plan_clip(clip: ClipMeta, cfg: SlowFastConfig, effective_fast_fps: float | None = None) -> ClipPlan:
    """Sample both pathways for one clip and attach token counts."""
    fast_fps = cfg.fast.fps if effective_fast_fps is None else effective_fast_fps
    return ClipPlan(
        index=clip.index,
        fast=_sample_pathway(clip, fast_fps, cfg.fast.tokens_per_frame),
        slow=_sample_pathway(clip, cfg.slow.fps, cfg.slow.tokens_per_frame),
    )


def plan_request(clips: ClipSet, cfg: SlowFastConfig) -> SamplingPlan:
    """Plan a whole request, halving the effective fast fps until the
    fast-frame total fits the ceiling. Clips are never dropped."""
    if len(clips) == 0:
        raise ValueError("clip set is empty")
    if len(clips) > cfg.frame_ceiling:
        raise CeilingUnsatisfiable(len(clips), cfg.frame_ceiling)
    reduction = 1
    while True:
        eff = cfg.fast.fps / reduction
        entries = tuple(plan_clip(c, cfg, effective_fast_fps=eff) for c in clips)
        total_fast = sum(len(e.fast.frame_indices) for e in entries)
        if total_fast <= cfg.frame_ceiling:
            return SamplingPlan(
                config=cfg,
                effective_fast_fps=eff,
                reduction_factor=reduction,
                clips=entries,
            )
        reduction *= 2


# ---------------------------------------------------------------------------
# compression reference ops


def squeeze_queries(queries: np.ndarray, alpha: int) -> np.ndarray:
    """Average-pool query rows in groups of ``alpha`` (s x d -> s/alpha x d)."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if queries.ndim != 2:
        raise ValueError(f"query bank must be 2-D, got shape {queries.shape}")
    s, d = queries.shape
    if s % alpha:
        raise NonDivisible(f"alpha {alpha} does not divide {s} query rows")
    return queries.reshape(s // alpha, alpha, d).mean(axis=1)


def pool_features(grid: np.ndarray, pool: int) -> np.ndarray:
    """2-D average pooling of an H x W x d feature grid in p x p blocks."""
    if pool < 1:
        raise ValueError(f"pool size must be >= 1, got {pool}")
    if grid.ndim != 3:
        raise ValueError(f"feature grid must be 3-D, got shape {grid.shape}")
    h, w, d = grid.shape
    if h % pool or w % pool:
        raise NonDivisible(f"pool {pool} does not divide grid {h}x{w}")
    return grid.reshape(h // pool, pool, w // pool, pool, d).mean(axis=(1, 3))
