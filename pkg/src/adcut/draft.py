"""The three-track JSON edit-draft protocol.

A draft has a voice-over track (timed sentences), a video-nodes track
(ordered clip placements) and a decoration setting (TTS / avatar / music
tags). All times are integer milliseconds. Parsing is strict about the
protocol shape; semantic rules (ordering, overlap, contiguity, tag and
clip references) are checked separately by :func:`validate_draft`, which
reports violations as data rather than raising.

Canonical serialization emits a fixed key order and no insignificant
whitespace, so equal drafts always produce identical bytes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Any, Iterable

from .clips import ClipSet
from .jsonutil import dumps_canonical, loads
from .taxonomy import TAG_FIELD_CATEGORY, TagTaxonomy, default_taxonomy

TOP_LEVEL_KEYS = ("voice_over_track", "video_nodes_track", "decoration_setting")
SENTENCE_KEYS = ("text", "target_start", "target_end")
NODE_KEYS = ("index", "target_start", "target_end", "source_start")
DECORATION_KEYS = ("tts_tags", "avatar_tags", "music_tags")


class DraftSyntaxError(ValueError):
    """Input is not well-formed JSON."""


class SchemaError(ValueError):
    """Document shape violates the protocol; carries the offending JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.reason = message


class TimeValueError(SchemaError):
    """A time field is negative or not a whole number of milliseconds."""


class UnknownKeyWarning(UserWarning):
    """Unknown key inside a protocol object (tolerated, dropped)."""


@dataclass(frozen=True)
class VoiceSentence:
    text: str
    target_start: int
    target_end: int


@dataclass(frozen=True)
class VideoNode:
    index: int
    target_start: int
    target_end: int
    source_start: int

    @property
    def span_ms(self) -> int:
        return self.target_end - self.target_start


@dataclass(frozen=True)
class DecorationSetting:
    tts_tags: tuple[str, ...] = ()
    avatar_tags: tuple[str, ...] = ()
    music_tags: tuple[str, ...] = ()

    def tags_for(self, field_name: str) -> tuple[str, ...]:
        return getattr(self, field_name)


@dataclass(frozen=True)
class Draft:
    voice_over_track: tuple[VoiceSentence, ...]
    video_nodes_track: tuple[VideoNode, ...]
    decoration_setting: DecorationSetting = DecorationSetting()

    def clip_sequence(self) -> tuple[int, ...]:
        """Clip indices in playback order."""
        return tuple(n.index for n in self.video_nodes_track)


@dataclass(frozen=True)
class Violation:
    rule: str
    path: str
    message: str

    def to_dict(self) -> dict:
        return {"rule": self.rule, "path": self.path, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


# ---------------------------------------------------------------------------
# parsing


def _require_object(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(path, f"expected object, got {type(value).__name__}")
    return value


def _require_list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(path, f"expected array, got {type(value).__name__}")
    return value


def _get(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing required field")
    return obj[key]


def _parse_time(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected integer milliseconds, got {type(value).__name__}")
    if isinstance(value, float):
        if not value.is_integer():
            raise TimeValueError(path, f"time {value} has a fractional millisecond part")
        value = int(value)
    if value < 0:
        raise TimeValueError(path, f"time must be non-negative, got {value}")
    return value


def _parse_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, f"expected string, got {type(value).__name__}")
    return value


def _parse_index(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected integer clip index, got {type(value).__name__}")
    if value < 0:
        raise SchemaError(path, f"clip index must be >= 0, got {value}")
    return value


def _warn_unknown(obj: dict, known: Iterable[str], path: str) -> None:
    for key in obj:
        if key not in known:
            warnings.warn(f"{path}.{key}: unknown key ignored", UnknownKeyWarning, stacklevel=3)


def _parse_tag_list(value: Any, path: str) -> tuple[str, ...]:
    items = _require_list(value, path)
    return tuple(_parse_str(item, f"{path}[{i}]") for i, item in enumerate(items))


def parse_draft(data: bytes | str) -> Draft:
    """Parse draft JSON into a :class:`Draft`.

    Raises :class:`DraftSyntaxError` for malformed JSON and
    :class:`SchemaError` (with JSON path) for shape violations, including
    unknown top-level keys. Unknown keys inside nested objects only emit an
    :class:`UnknownKeyWarning`.
    """
    try:
        doc = loads(data)
    except ValueError as exc:
        raise DraftSyntaxError(f"malformed JSON: {exc}") from exc

    root = _require_object(doc, "$")
    for key in root:
        if key not in TOP_LEVEL_KEYS:
            raise SchemaError(f"$.{key}", "unknown top-level key")

    sentences = []
    for i, raw in enumerate(_require_list(_get(root, "voice_over_track", "$"), "$.voice_over_track")):
        path = f"$.voice_over_track[{i}]"
        obj = _require_object(raw, path)
        _warn_unknown(obj, SENTENCE_KEYS, path)
        sentences.append(
            VoiceSentence(
                text=_parse_str(_get(obj, "text", path), f"{path}.text"),
                target_start=_parse_time(_get(obj, "target_start", path), f"{path}.target_start"),
                target_end=_parse_time(_get(obj, "target_end", path), f"{path}.target_end"),
            )
        )

    nodes = []
    for i, raw in enumerate(_require_list(_get(root, "video_nodes_track", "$"), "$.video_nodes_track")):
        path = f"$.video_nodes_track[{i}]"
        obj = _require_object(raw, path)
        _warn_unknown(obj, NODE_KEYS, path)
        nodes.append(
            VideoNode(
                index=_parse_index(_get(obj, "index", path), f"{path}.index"),
                target_start=_parse_time(_get(obj, "target_start", path), f"{path}.target_start"),
                target_end=_parse_time(_get(obj, "target_end", path), f"{path}.target_end"),
                source_start=_parse_time(_get(obj, "source_start", path), f"{path}.source_start"),
            )
        )

    deco_path = "$.decoration_setting"
    deco = _require_object(_get(root, "decoration_setting", "$"), deco_path)
    _warn_unknown(deco, DECORATION_KEYS, deco_path)
    decoration = DecorationSetting(
        tts_tags=_parse_tag_list(_get(deco, "tts_tags", deco_path), f"{deco_path}.tts_tags"),
        avatar_tags=_parse_tag_list(_get(deco, "avatar_tags", deco_path), f"{deco_path}.avatar_tags"),
        music_tags=_parse_tag_list(_get(deco, "music_tags", deco_path), f"{deco_path}.music_tags"),
    )

    return Draft(tuple(sentences), tuple(nodes), decoration)


# ---------------------------------------------------------------------------
# serialization


def draft_to_dict(d: Draft) -> dict:
    """Plain dict with the canonical key order."""
    return {
        "voice_over_track": [
            {"text": s.text, "target_start": s.target_start, "target_end": s.target_end}
            for s in d.voice_over_track
        ],
        "video_nodes_track": [
            {
                "index": n.index,
                "target_start": n.target_start,
                "target_end": n.target_end,
                "source_start": n.source_start,
            }
            for n in d.video_nodes_track
        ],
        "decoration_setting": {
            "tts_tags": list(d.decoration_setting.tts_tags),
            "avatar_tags": list(d.decoration_setting.avatar_tags),
            "music_tags": list(d.decoration_setting.music_tags),
        },
    }


def serialize_draft(d: Draft) -> bytes:
    """Canonical JSON bytes; stable across runs, injective on drafts."""
    return dumps_canonical(draft_to_dict(d))


# ---------------------------------------------------------------------------
# validation


class _Collector:
    def __init__(self) -> None:
        self.violations: list[Violation] = []

    def add(self, rule: str, path: str, message: str) -> None:
        self.violations.append(Violation(rule, path, message))


def _check_voice(track: tuple[VoiceSentence, ...], out: _Collector) -> None:
    for i, s in enumerate(track):
        path = f"$.voice_over_track[{i}]"
        if not s.text.strip():
            out.add("voice_empty_text", f"{path}.text", "sentence text is empty")
        if s.target_start >= s.target_end:
            out.add(
                "voice_time_order",
                path,
                f"target_start {s.target_start} must be < target_end {s.target_end}",
            )
    for i in range(1, len(track)):
        prev, cur = track[i - 1], track[i]
        path = f"$.voice_over_track[{i}]"
        if cur.target_start < prev.target_start:
            out.add("voice_order", path, "sentences not sorted by target_start")
        elif cur.target_start < prev.target_end:
            out.add(
                "voice_overlap",
                path,
                f"sentence starts at {cur.target_start} before previous ends at {prev.target_end}",
            )


def _check_nodes(track: tuple[VideoNode, ...], clips: ClipSet | None, out: _Collector) -> None:
    seen: dict[int, int] = {}
    for i, n in enumerate(track):
        path = f"$.video_nodes_track[{i}]"
        if n.target_start >= n.target_end:
            out.add(
                "node_time_order",
                path,
                f"target_start {n.target_start} must be < target_end {n.target_end}",
            )
        if n.source_start < 0:
            out.add("node_negative_source", f"{path}.source_start", "source_start must be >= 0")
        if n.index in seen:
            out.add(
                "duplicate_clip_index",
                f"{path}.index",
                f"clip {n.index} already used by node {seen[n.index]}",
            )
        else:
            seen[n.index] = i
        if clips is not None:
            clip = clips.get(n.index)
            if clip is None:
                out.add(
                    "unknown_clip_index",
                    f"{path}.index",
                    f"clip {n.index} not in the {len(clips)}-clip set",
                )
            elif n.source_start + n.span_ms > clip.duration_ms:
                out.add(
                    "clip_overrun",
                    path,
                    f"needs {n.source_start + n.span_ms} ms from a {clip.duration_ms} ms clip",
                )
    for i in range(1, len(track)):
        prev, cur = track[i - 1], track[i]
        path = f"$.video_nodes_track[{i}]"
        if cur.target_start < prev.target_start:
            out.add("node_order", path, "nodes not sorted by target_start")
        elif cur.target_start < prev.target_end:
            out.add(
                "node_overlap",
                path,
                f"node starts at {cur.target_start} before previous ends at {prev.target_end}",
            )
        elif cur.target_start > prev.target_end:
            out.add(
                "node_gap",
                path,
                f"gap of {cur.target_start - prev.target_end} ms after previous node",
            )


def _check_decoration(deco: DecorationSetting, taxonomy: TagTaxonomy, out: _Collector) -> None:
    for field_name, category in TAG_FIELD_CATEGORY.items():
        tags = deco.tags_for(field_name)
        known = taxonomy.labels(category)
        seen: set[str] = set()
        for i, tag in enumerate(tags):
            path = f"$.decoration_setting.{field_name}[{i}]"
            if tag in seen:
                out.add("duplicate_tag", path, f"{tag!r} repeated in {field_name}")
            seen.add(tag)
            if tag not in known:
                out.add("unknown_tag", path, f"{tag!r} is not a {category} label")


def validate_draft(
    d: Draft,
    clips: ClipSet | None = None,
    taxonomy: TagTaxonomy | None = None,
) -> ValidationReport:
    """Check every semantic invariant; violations are data, never raised.

    Clip-bound checks run only when ``clips`` is provided. With no explicit
    taxonomy, tags are checked against the bundled default.
    """
    if taxonomy is None:
        taxonomy = default_taxonomy()
    out = _Collector()
    _check_voice(d.voice_over_track, out)
    _check_nodes(d.video_nodes_track, clips, out)
    _check_decoration(d.decoration_setting, taxonomy, out)
    return ValidationReport(tuple(out.violations))
