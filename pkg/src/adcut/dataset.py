"""Instruction-tuning corpus construction.

Each training sample pairs a rendered instruction (product info, clip
materials with frame placeholders, free-form editing requirements) with a
ground-truth draft recovered from the source video's deconstruction.
Interference clips drawn from a separate pool are shuffled into the
presented clip list so the selection task is non-trivial; their count
follows a clipped rounded Gaussian.

Free-prompt construction runs four steps against pluggable backends:
deconstruct the source video, analyze the requirement dimensions, generate
a prompt with random dimension dropout, then verify and possibly revise it.
All randomness is per-sample seeded, so concurrency never changes output.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import warnings
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .backends import BackendSet, Client
from .clips import ClipMeta, ClipSet
from .draft import (
    DecorationSetting,
    Draft,
    VideoNode,
    VoiceSentence,
    draft_to_dict,
    parse_draft,
)
from .jsonutil import dumps_canonical
from .sampling import SlowFastConfig, parse_preset, sample_frames

NEGATIVE_COUNT_MEAN = 2.5
NEGATIVE_COUNT_VARIANCE = 8.0

FREE_PROMPT_DIMENSIONS = (
    "duration",
    "visual_storyline",
    "target_audience",
    "script_routine",
    "selling_points_emphasis",
    "avatar",
    "tts_timbre",
    "music_style",
)

_DIMENSION_LABELS = {
    "duration": "Video duration",
    "visual_storyline": "Visual storyline",
    "target_audience": "Target audience",
    "script_routine": "Script routine",
    "selling_points_emphasis": "Selling-point emphasis",
    "avatar": "Avatar",
    "tts_timbre": "TTS timbre",
    "music_style": "Music style",
}

TEMPLATE_VERSION = "v1"
DEFAULT_SAMPLING_PRESET = "fast:2/4,slow:0.5/16"
ASSUMED_NATIVE_FPS = 30.0
DEFAULT_DROPOUT_P = 0.3


class EmptyDeconstruction(ValueError):
    """Source video yielded no shots or no speech."""


class RevisionInvalid(ValueError):
    """A judge revision broke the free-prompt invariants."""


class AsrOverlapWarning(UserWarning):
    """Overlapping ASR segments were truncated."""


@dataclass(frozen=True)
class ProductInfo:
    name: str
    brand: str
    price: str
    selling_points: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("product name must be non-empty")
        if not self.selling_points:
            raise ValueError("at least one selling point is required")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "brand": self.brand,
            "price": self.price,
            "selling_points": list(self.selling_points),
        }


@dataclass(frozen=True)
class FreePrompt:
    duration: str | None = None
    visual_storyline: str | None = None
    target_audience: str | None = None
    script_routine: str | None = None
    selling_points_emphasis: str | None = None
    avatar: str | None = None
    tts_timbre: str | None = None
    music_style: str | None = None
    rendered: str = ""

    def __post_init__(self) -> None:
        if not any(getattr(self, d) for d in FREE_PROMPT_DIMENSIONS):
            raise ValueError("free prompt needs at least one dimension")
        if not self.rendered.strip():
            raise ValueError("rendered free prompt must be non-empty")

    def dimensions(self) -> dict[str, str | None]:
        return {d: getattr(self, d) for d in FREE_PROMPT_DIMENSIONS}

    def to_dict(self) -> dict:
        out: dict = {d: getattr(self, d) for d in FREE_PROMPT_DIMENSIONS}
        out["rendered"] = self.rendered
        return out


def render_free_prompt(dimensions: dict[str, str | None]) -> str:
    """Fixed rendering template: labeled dimensions in canonical order."""
    parts = [
        f"{_DIMENSION_LABELS[d]}: {dimensions[d]}"
        for d in FREE_PROMPT_DIMENSIONS
        if dimensions.get(d)
    ]
    return "; ".join(parts) + "." if parts else ""


def free_prompt_from_dimensions(dimensions: dict[str, str | None]) -> FreePrompt:
    kept = {d: dimensions.get(d) for d in FREE_PROMPT_DIMENSIONS}
    return FreePrompt(**kept, rendered=render_free_prompt(kept))


@dataclass(frozen=True)
class AsrSentence:
    text: str
    start_ms: int
    end_ms: int


@dataclass(frozen=True)
class Deconstruction:
    asr_sentences: tuple[AsrSentence, ...]
    subtitle_ocr: tuple[str, ...]
    shot_boundaries: tuple[int, ...]
    shot_captions: tuple[str, ...]
    recommended_tags: DecorationSetting

    def __post_init__(self) -> None:
        for a, b in zip(self.shot_boundaries, self.shot_boundaries[1:]):
            if b <= a:
                raise ValueError("shot boundaries must be strictly increasing")
        for prev, cur in zip(self.asr_sentences, self.asr_sentences[1:]):
            if cur.start_ms < prev.end_ms:
                raise ValueError("ASR sentences must be non-overlapping")

    def shot_count(self) -> int:
        return max(0, len(self.shot_boundaries) - 1)

    def to_dict(self) -> dict:
        return {
            "asr_sentences": [
                {"text": s.text, "start": s.start_ms, "end": s.end_ms} for s in self.asr_sentences
            ],
            "subtitle_ocr": list(self.subtitle_ocr),
            "shot_boundaries": list(self.shot_boundaries),
            "shot_captions": list(self.shot_captions),
            "recommended_tags": {
                "tts_tags": list(self.recommended_tags.tts_tags),
                "avatar_tags": list(self.recommended_tags.avatar_tags),
                "music_tags": list(self.recommended_tags.music_tags),
            },
        }


@dataclass(frozen=True)
class DatasetSample:
    sample_id: str
    instruction: str
    clip_order: tuple[str, ...]
    negatives: tuple[int, ...]
    negatives_capped: bool
    ground_truth: Draft

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "instruction": self.instruction,
            "clip_order": list(self.clip_order),
            "negatives": list(self.negatives),
            "negatives_capped": self.negatives_capped,
            "ground_truth": draft_to_dict(self.ground_truth),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetSample":
        return cls(
            sample_id=data["sample_id"],
            instruction=data["instruction"],
            clip_order=tuple(data["clip_order"]),
            negatives=tuple(data["negatives"]),
            negatives_capped=data["negatives_capped"],
            ground_truth=parse_draft(dumps_canonical(data["ground_truth"])),
        )


# ---------------------------------------------------------------------------
# negative-clip sampling


def sample_negative_count(rng: random.Random) -> int:
    """Number of interference clips: max(0, round(gaussian)) with the
    configured mean and variance; rounding is half-up."""
    g = rng.gauss(NEGATIVE_COUNT_MEAN, math.sqrt(NEGATIVE_COUNT_VARIANCE))
    return max(0, math.floor(g + 0.5))


def sample_seed(corpus_seed: int, sample_id: str) -> int:
    """Stable per-sample seed so worker scheduling never changes output."""
    digest = hashlib.sha256(f"{corpus_seed}:{sample_id}".encode("utf-8")).digest()
    return corpus_seed ^ int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# step 1: deconstruction


def _normalize_asr(raw: list[dict]) -> list[AsrSentence]:
    entries = sorted(
        (e for e in raw if str(e.get("text", "")).strip()),
        key=lambda e: (e["start"], e["end"]),
    )
    out: list[AsrSentence] = []
    for e in entries:
        start, end, text = int(e["start"]), int(e["end"]), str(e["text"])
        if out and start < out[-1].end_ms:
            prev = out[-1]
            warnings.warn(
                f"ASR overlap: truncating [{prev.start_ms},{prev.end_ms}] at {start}",
                AsrOverlapWarning,
                stacklevel=3,
            )
            out[-1] = AsrSentence(prev.text, prev.start_ms, start)
            if out[-1].start_ms >= out[-1].end_ms:
                out.pop()
        if start < end:
            out.append(AsrSentence(text, start, end))
    return out


def _sparse_timestamps(start_ms: int, end_ms: int, count: int = 3) -> list[float]:
    span = (end_ms - start_ms) / 1000.0
    return [start_ms / 1000.0 + span * (i + 0.5) / count for i in range(count)]


def deconstruct(video_ref: str, backends: BackendSet) -> Deconstruction:
    """Extract voice, subtitles, shot boundaries, captions and tag
    recommendations for one source video."""
    boundaries = sorted(set(int(b) for b in backends.shots.call({"video_ref": video_ref}).data["boundaries_ms"]))

    raw_asr = backends.asr.call({"video_ref": video_ref}).data["sentences"]
    sentences = _normalize_asr(raw_asr)
    correction_prompt = resources.files("adcut").joinpath("prompts/asr_correction.txt").read_text("utf-8")
    corrected = backends.judge.call(
        {
            "task": "correct_asr",
            "prompt_sha256": hashlib.sha256(correction_prompt.encode("utf-8")).hexdigest(),
            "sentences": [{"text": s.text, "start": s.start_ms, "end": s.end_ms} for s in sentences],
        }
    ).data["sentences"]
    sentences = [AsrSentence(str(e["text"]), int(e["start"]), int(e["end"])) for e in corrected]

    ocr_lines = [str(line) for line in backends.ocr.call({"video_ref": video_ref}).data["lines"]]

    captions = []
    for i, (a, b) in enumerate(zip(boundaries, boundaries[1:])):
        resp = backends.caption.call(
            {"video_ref": video_ref, "shot_index": i, "frame_timestamps": _sparse_timestamps(a, b)}
        )
        captions.append(str(resp.data["caption"]))

    tags = backends.judge.call({"task": "recommend_tags", "video_ref": video_ref}).data["tags"]
    decoration = DecorationSetting(
        tts_tags=tuple(tags.get("tts_tags", ())),
        avatar_tags=tuple(tags.get("avatar_tags", ())),
        music_tags=tuple(tags.get("music_tags", ())),
    )

    return Deconstruction(
        asr_sentences=tuple(sentences),
        subtitle_ocr=tuple(ocr_lines),
        shot_boundaries=tuple(boundaries),
        shot_captions=tuple(captions),
        recommended_tags=decoration,
    )


# ---------------------------------------------------------------------------
# step 2: analysis


def analyze_dimensions(dec: Deconstruction, judge: Client, video_ref: str | None = None) -> dict[str, str | None]:
    """One analysis entry per requirement dimension; entries may be absent."""
    payload = {"task": "analyze", "video_ref": video_ref, "deconstruction": dec.to_dict()}
    raw = judge.call(payload).data["analysis"]
    analysis: dict[str, str | None] = {d: raw.get(d) for d in FREE_PROMPT_DIMENSIONS}
    if not dec.shot_captions:
        analysis["visual_storyline"] = None
    return analysis


# ---------------------------------------------------------------------------
# step 3: generation


def generate_free_prompt(
    analysis: dict[str, str | None], rng: random.Random, dropout_p: float = DEFAULT_DROPOUT_P
) -> FreePrompt:
    """Drop each analyzed dimension independently with probability
    ``dropout_p``; an all-dropped draw is resampled so at least one
    dimension always survives."""
    if not 0 <= dropout_p < 1:
        raise ValueError(f"dropout_p must be in [0, 1), got {dropout_p}")
    present = [d for d in FREE_PROMPT_DIMENSIONS if analysis.get(d)]
    if not present:
        raise ValueError("analysis contains no usable dimensions")
    while True:
        kept = [d for d in present if rng.random() >= dropout_p]
        if kept:
            break
    return free_prompt_from_dimensions({d: analysis[d] for d in kept})


# ---------------------------------------------------------------------------
# step 4: verification


def verify_free_prompt(
    prompt: FreePrompt, analysis: dict[str, str | None], judge: Client, max_rounds: int = 2
) -> FreePrompt:
    """Ask the judge to approve or revise; revisions are capped and re-checked."""
    current = prompt
    for _ in range(max_rounds):
        resp = judge.call(
            {"task": "verify_prompt", "dimensions": current.dimensions(), "analysis": analysis}
        ).data
        if resp.get("approved"):
            return current
        revision = resp.get("revision") or {}
        try:
            current = free_prompt_from_dimensions(revision)
        except ValueError as exc:
            raise RevisionInvalid(f"judge revision is not a valid free prompt: {exc}") from exc
    return current


# ---------------------------------------------------------------------------
# sample assembly


def _positive_clips(dec: Deconstruction) -> list[int]:
    """Per-shot durations (ms) from the boundary list."""
    return [b - a for a, b in zip(dec.shot_boundaries, dec.shot_boundaries[1:])]


def _clip_meta(presentation_index: int, duration_ms: int) -> ClipMeta:
    duration_s = duration_ms / 1000.0
    return ClipMeta(
        index=presentation_index,
        duration_s=duration_s,
        frame_count=max(1, round(duration_s * ASSUMED_NATIVE_FPS)),
    )


def _materials_block(durations_ms: list[int], cfg: SlowFastConfig) -> str:
    lines = []
    for pres_index, dur in enumerate(durations_ms):
        meta = _clip_meta(pres_index, dur)
        n_fast = len(sample_frames(meta, cfg.fast.fps))
        n_slow = len(sample_frames(meta, cfg.slow.fps))
        lines.append(
            f"Clip {pres_index} (duration {meta.duration_s:.1f}s): "
            f"fast frames: {' '.join(['<image>'] * n_fast)}; "
            f"slow frames: {' '.join(['<image>'] * n_slow)}"
        )
    return "\n".join(lines)


def _product_block(product: ProductInfo) -> str:
    return (
        f"Name: {product.name}\n"
        f"Brand: {product.brand}\n"
        f"Price: {product.price}\n"
        f"Selling points: {'; '.join(product.selling_points)}"
    )


@lru_cache(maxsize=1)
def _bundled_template() -> str:
    name = f"data/instruction_template_{TEMPLATE_VERSION}.txt"
    return resources.files("adcut").joinpath(name).read_text("utf-8")


def load_instruction_template(path: str | Path | None = None) -> str:
    if path is not None:
        return Path(path).read_text(encoding="utf-8")
    return _bundled_template()


def assemble_sample(
    dec: Deconstruction,
    product: ProductInfo,
    prompt: FreePrompt,
    negative_pool: ClipSet,
    rng: random.Random,
    sample_id: str = "sample",
    sampling: SlowFastConfig | None = None,
    template: str | None = None,
) -> DatasetSample:
    """Shuffle positives with drawn negatives, render the instruction and
    rebuild the ground-truth draft from the deconstruction."""
    if dec.shot_count() == 0 or not dec.asr_sentences:
        raise EmptyDeconstruction(f"{sample_id}: deconstruction has no shots or no speech")
    cfg = sampling or parse_preset(DEFAULT_SAMPLING_PRESET)
    template = template or load_instruction_template()

    positive_durations = _positive_clips(dec)
    pool = list(negative_pool)
    drawn = sample_negative_count(rng)
    capped = drawn > len(pool)
    chosen = rng.sample(pool, min(drawn, len(pool)))

    presented: list[tuple[str, int]] = [(f"pos:{i}", d) for i, d in enumerate(positive_durations)]
    presented += [(f"neg:{c.index}", c.duration_ms) for c in chosen]
    rng.shuffle(presented)

    clip_order = tuple(cid for cid, _ in presented)
    presentation_of = {cid: p for p, (cid, _) in enumerate(presented)}
    negatives = tuple(p for p, (cid, _) in enumerate(presented) if cid.startswith("neg:"))

    nodes = []
    at = 0
    for i, dur in enumerate(positive_durations):
        nodes.append(
            VideoNode(
                index=presentation_of[f"pos:{i}"],
                target_start=at,
                target_end=at + dur,
                source_start=0,
            )
        )
        at += dur

    voice = tuple(
        VoiceSentence(text=s.text, target_start=s.start_ms, target_end=s.end_ms)
        for s in dec.asr_sentences
    )
    ground_truth = Draft(
        voice_over_track=voice,
        video_nodes_track=tuple(nodes),
        decoration_setting=dec.recommended_tags,
    )

    instruction = template.format(
        product_block=_product_block(product),
        materials_block=_materials_block([d for _, d in presented], cfg),
        free_prompt=prompt.rendered,
    )

    return DatasetSample(
        sample_id=sample_id,
        instruction=instruction,
        clip_order=clip_order,
        negatives=negatives,
        negatives_capped=capped,
        ground_truth=ground_truth,
    )


def build_sample(
    video_ref: str,
    product: ProductInfo,
    backends: BackendSet,
    negative_pool: ClipSet,
    corpus_seed: int,
    dropout_p: float = DEFAULT_DROPOUT_P,
    sampling: SlowFastConfig | None = None,
    template: str | None = None,
) -> DatasetSample:
    """Run the full per-video pipeline: deconstruct, analyze, generate,
    verify, assemble."""
    rng = random.Random(sample_seed(corpus_seed, video_ref))
    dec = deconstruct(video_ref, backends)
    analysis = analyze_dimensions(dec, backends.judge, video_ref=video_ref)
    prompt = generate_free_prompt(analysis, rng, dropout_p)
    prompt = verify_free_prompt(prompt, analysis, backends.judge)
    return assemble_sample(
        dec,
        product,
        prompt,
        negative_pool,
        rng,
        sample_id=video_ref,
        sampling=sampling,
        template=template,
    )


# ---------------------------------------------------------------------------
# corpus files (JSON lines, canonical field order)


def write_corpus(samples: list[DatasetSample], path: str | Path) -> None:
    with open(path, "wb") as fh:
        for sample in samples:
            fh.write(dumps_canonical(sample.to_dict()))
            fh.write(b"\n")


def read_corpus(path: str | Path) -> list[DatasetSample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(DatasetSample.from_dict(json.loads(line)))
    return out
