"""Post-processing a draft into a renderable plan.

The voice track is authoritative: each sentence span is replaced by its
realized TTS duration and sentences are packed gaplessly from time zero.
Video nodes are rescaled by the realized/drafted duration ratio of the
sentences they overlap in the draft (a node overlapping no sentence keeps
its drafted length) and re-packed gaplessly. Span arithmetic is exact
rational math; each cumulative boundary is rounded to the nearest
millisecond once, so rounding never drifts and the final node absorbs the
residue. Decoration tags resolve against an asset catalog by maximum label
overlap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .clips import ClipSet
from .draft import (
    Draft,
    ValidationReport,
    VideoNode,
    Violation,
    VoiceSentence,
)
from .jsonutil import dumps_canonical
from .taxonomy import TagTaxonomy, default_taxonomy

CATALOG_CATEGORIES = ("TTS", "Avatar", "Music")


class AlignmentError(RuntimeError):
    pass


class LengthMismatch(AlignmentError):
    def __init__(self, sentences: int, durations: int):
        super().__init__(f"draft has {sentences} sentences but TTS realized {durations} durations")


class ClipTooShort(AlignmentError):
    """A node's aligned span runs past the end of its source clip."""

    def __init__(self, node_index: int, clip_index: int, shortfall_ms: int):
        super().__init__(
            f"node {node_index} (clip {clip_index}) needs {shortfall_ms} ms more source footage"
        )
        self.node_index = node_index
        self.clip_index = clip_index
        self.shortfall_ms = shortfall_ms


class NoCandidate(AlignmentError):
    def __init__(self, category: str):
        super().__init__(f"asset catalog has no {category} entries")
        self.category = category


@dataclass(frozen=True)
class TtsRealization:
    """Realized per-sentence durations, positionally aligned with the voice track."""

    durations_ms: tuple[int, ...]

    def __post_init__(self) -> None:
        for i, d in enumerate(self.durations_ms):
            if isinstance(d, bool) or not isinstance(d, int):
                raise ValueError(f"realized duration [{i}] must be integer milliseconds, got {d!r}")
            if d <= 0:
                raise ValueError(f"realized duration [{i}] must be > 0, got {d}")

    def __len__(self) -> int:
        return len(self.durations_ms)

    @classmethod
    def load(cls, path: str | Path) -> "TtsRealization":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)["durations_ms"]
        values = []
        for d in raw:
            if isinstance(d, float) and d.is_integer():
                d = int(d)
            values.append(d)
        return cls(tuple(values))


@dataclass(frozen=True)
class AssetEntry:
    asset_id: str
    category: str
    labels: tuple[str, ...]
    uri: str


class AssetCatalog:
    def __init__(self, entries: list[AssetEntry], taxonomy: TagTaxonomy | None = None):
        taxonomy = taxonomy or default_taxonomy()
        seen: set[str] = set()
        for e in entries:
            if e.category not in CATALOG_CATEGORIES:
                raise ValueError(f"asset {e.asset_id}: unknown category {e.category!r}")
            if e.asset_id in seen:
                raise ValueError(f"duplicate asset_id {e.asset_id!r}")
            seen.add(e.asset_id)
            for label in e.labels:
                if (e.category, label) not in taxonomy:
                    raise ValueError(f"asset {e.asset_id}: {label!r} is not a {e.category} label")
        self.entries = list(entries)

    def by_category(self, category: str) -> list[AssetEntry]:
        return [e for e in self.entries if e.category == category]

    def ids(self) -> set[str]:
        return {e.asset_id for e in self.entries}

    @classmethod
    def load(cls, path: str | Path, taxonomy: TagTaxonomy | None = None) -> "AssetCatalog":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        entries = [
            AssetEntry(
                asset_id=e["asset_id"],
                category=e["category"],
                labels=tuple(e.get("labels", ())),
                uri=e.get("uri", ""),
            )
            for e in data["assets"]
        ]
        return cls(entries, taxonomy)


@dataclass(frozen=True)
class ResolvedAssets:
    tts_asset: str
    music_asset: str
    avatar_asset: str | None = None

    def to_dict(self) -> dict:
        return {
            "tts_asset": self.tts_asset,
            "avatar_asset": self.avatar_asset,
            "music_asset": self.music_asset,
        }


@dataclass(frozen=True)
class RenderPlan:
    voice_over_track: tuple[VoiceSentence, ...]
    video_nodes_track: tuple[VideoNode, ...]
    total_duration: int
    assets: ResolvedAssets | None = None

    def with_assets(self, assets: ResolvedAssets) -> "RenderPlan":
        return RenderPlan(self.voice_over_track, self.video_nodes_track, self.total_duration, assets)

    def to_dict(self) -> dict:
        return {
            "voice_over_track": [
                {"text": s.text, "target_start": s.target_start, "target_end": s.target_end}
                for s in self.voice_over_track
            ],
            "video_nodes_track": [
                {
                    "index": n.index,
                    "target_start": n.target_start,
                    "target_end": n.target_end,
                    "source_start": n.source_start,
                }
                for n in self.video_nodes_track
            ],
            "assets": self.assets.to_dict() if self.assets else None,
            "total_duration": self.total_duration,
        }


def serialize_plan(plan: RenderPlan) -> bytes:
    return dumps_canonical(plan.to_dict())


def _round_ms(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def align_draft(d: Draft, tts: TtsRealization, clips: ClipSet) -> RenderPlan:
    """Reconcile a validated draft with realized TTS durations.

    The caller is expected to have run ``validate_draft`` with zero
    violations. Raises :class:`LengthMismatch` or :class:`ClipTooShort`.
    """
    sentences = d.voice_over_track
    if len(tts) != len(sentences):
        raise LengthMismatch(len(sentences), len(tts))

    voice: list[VoiceSentence] = []
    at = 0
    for s, dur in zip(sentences, tts.durations_ms):
        voice.append(VoiceSentence(text=s.text, target_start=at, target_end=at + dur))
        at += dur

    nodes: list[VideoNode] = []
    boundary = Fraction(0)
    prev_end = 0
    for node_pos, node in enumerate(d.video_nodes_track):
        overlapped = [
            i
            for i, s in enumerate(sentences)
            if max(node.target_start, s.target_start) < min(node.target_end, s.target_end)
        ]
        span = Fraction(node.span_ms)
        if overlapped:
            drafted = sum(sentences[i].target_end - sentences[i].target_start for i in overlapped)
            realized = sum(tts.durations_ms[i] for i in overlapped)
            span *= Fraction(realized, drafted)
        boundary += span
        end = _round_ms(boundary)
        new_span = end - prev_end
        clip = clips.get(node.index)
        if clip is not None:
            available = clip.duration_ms - node.source_start
            if new_span > available:
                raise ClipTooShort(node_pos, node.index, new_span - available)
        nodes.append(
            VideoNode(
                index=node.index,
                target_start=prev_end,
                target_end=end,
                source_start=node.source_start,
            )
        )
        prev_end = end

    return RenderPlan(
        voice_over_track=tuple(voice),
        video_nodes_track=tuple(nodes),
        total_duration=prev_end,
    )


def match_decorations(d: Draft, catalog: AssetCatalog, rng_seed: int = 0) -> ResolvedAssets:
    """Pick one asset per category by maximum tag overlap.

    Ties break on the lexicographically smallest asset_id; the avatar slot
    stays empty when the draft carries no avatar tags. The seed is part of
    the interface for reproducibility but the current rule is deterministic.
    """
    del rng_seed  # current selection rule has no random component

    def best(category: str, tags: tuple[str, ...]) -> str:
        candidates = catalog.by_category(category)
        if not candidates:
            raise NoCandidate(category)
        tag_set = set(tags)
        return min(candidates, key=lambda e: (-len(tag_set & set(e.labels)), e.asset_id)).asset_id

    deco = d.decoration_setting
    avatar = best("Avatar", deco.avatar_tags) if deco.avatar_tags else None
    return ResolvedAssets(
        tts_asset=best("TTS", deco.tts_tags),
        music_asset=best("Music", deco.music_tags),
        avatar_asset=avatar,
    )


def check_alignment(plan: RenderPlan, catalog: AssetCatalog | None = None) -> ValidationReport:
    """Re-verify every RenderPlan invariant; empty report means valid."""
    out: list[Violation] = []

    track = plan.voice_over_track
    for i, s in enumerate(track):
        if s.target_start >= s.target_end:
            out.append(Violation("plan_voice_time_order", f"$.voice_over_track[{i}]", "empty or inverted span"))
    for i in range(1, len(track)):
        if track[i].target_start < track[i - 1].target_start:
            out.append(Violation("plan_voice_order", f"$.voice_over_track[{i}]", "not sorted"))
        elif track[i].target_start < track[i - 1].target_end:
            out.append(Violation("plan_voice_overlap", f"$.voice_over_track[{i}]", "overlaps previous sentence"))

    nodes = plan.video_nodes_track
    for i, n in enumerate(nodes):
        if n.target_start >= n.target_end:
            out.append(Violation("plan_node_time_order", f"$.video_nodes_track[{i}]", "empty or inverted span"))
    for i in range(1, len(nodes)):
        if nodes[i].target_start < nodes[i - 1].target_start:
            out.append(Violation("plan_node_order", f"$.video_nodes_track[{i}]", "not sorted"))
        elif nodes[i].target_start < nodes[i - 1].target_end:
            out.append(Violation("plan_node_overlap", f"$.video_nodes_track[{i}]", "overlaps previous node"))

    expected_total = nodes[-1].target_end if nodes else 0
    if plan.total_duration != expected_total:
        out.append(
            Violation(
                "total_duration_mismatch",
                "$.total_duration",
                f"total {plan.total_duration} != last node end {expected_total}",
            )
        )
    if track and track[-1].target_end > plan.total_duration:
        out.append(
            Violation(
                "voice_past_end",
                f"$.voice_over_track[{len(track) - 1}]",
                f"voice ends at {track[-1].target_end}, video at {plan.total_duration}",
            )
        )

    if plan.assets is not None and catalog is not None:
        known = catalog.ids()
        for slot, asset_id in plan.assets.to_dict().items():
            if asset_id is not None and asset_id not in known:
                out.append(Violation("unknown_asset", f"$.assets.{slot}", f"{asset_id!r} not in catalog"))

    return ValidationReport(tuple(out))
