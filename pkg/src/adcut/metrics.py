"""Evaluation suite for generated drafts.

Exact counting metrics (clip rank accuracy, clip selection accuracy,
decorative-tag precision/recall) plus weighted judge-score aggregation for
free-prompt following and script quality, and a simplified embedding-based
visual/script relevance score. Counting passes are pure folds, so results
are independent of corpus order and of evaluation concurrency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .backends import RUBRICS, Client, embed, judge_score
from .draft import Draft
from .taxonomy import TAG_FIELD_CATEGORY, TagTaxonomy, default_taxonomy

DTPR_CATEGORIES = ("TTS", "Avatar", "Music")
DTPR_DISPLAY = {"TTS": "TTS Timbre", "Avatar": "Avatar", "Music": "Music"}

FPF_WEIGHTS = RUBRICS["free_prompt_eval"][1]
SQ_WEIGHTS = RUBRICS["script_quality_eval"][1]

_CATEGORY_FIELD = {cat: fld for fld, cat in TAG_FIELD_CATEGORY.items()}


class EmptyCorpus(ValueError):
    pass


class ScoreOutOfRange(ValueError):
    pass


class UnknownTag(ValueError):
    pass


@dataclass(frozen=True)
class EvalSample:
    """One prediction/ground-truth pair.

    ``predicted`` is None when the model output failed to parse; such a
    sample counts as incorrect for both rank and selection accuracy.
    """

    sample_id: str
    ground_truth: Draft
    predicted: Draft | None
    negatives: frozenset[int] = frozenset()
    judge_scores: Mapping[str, Mapping[str, float]] | None = None
    frames: tuple[str, ...] = ()


@dataclass
class MetricCounts:
    total: int = 0
    rank_correct: int = 0
    selection_clean: int = 0
    tag_counts: dict[str, dict[str, int]] = field(
        default_factory=lambda: {c: {"tp": 0, "fp": 0, "fn": 0} for c in DTPR_CATEGORIES}
    )

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "rank_correct": self.rank_correct,
            "selection_clean": self.selection_clean,
            "tag_counts": {c: dict(v) for c, v in self.tag_counts.items()},
        }


def _require_nonempty(corpus: Sequence[EvalSample]) -> None:
    if not corpus:
        raise EmptyCorpus("evaluation corpus is empty")


def cra(corpus: Sequence[EvalSample]) -> float:
    """Percent of samples whose predicted clip sequence matches the ground
    truth exactly (same selection, same order)."""
    _require_nonempty(corpus)
    correct = sum(
        1
        for s in corpus
        if s.predicted is not None and s.predicted.clip_sequence() == s.ground_truth.clip_sequence()
    )
    return 100.0 * correct / len(corpus)


def csa(corpus: Sequence[EvalSample]) -> float:
    """Percent of samples whose prediction selects no negative clip
    (order is irrelevant)."""
    _require_nonempty(corpus)
    clean = sum(
        1
        for s in corpus
        if s.predicted is not None and not (set(s.predicted.clip_sequence()) & s.negatives)
    )
    return 100.0 * clean / len(corpus)


def _tag_sets(draft: Draft, taxonomy: TagTaxonomy, origin: str) -> dict[str, set[str]]:
    out = {}
    for category in DTPR_CATEGORIES:
        tags = set(draft.decoration_setting.tags_for(_CATEGORY_FIELD[category]))
        unknown = tags - taxonomy.labels(category)
        if unknown:
            raise UnknownTag(f"{origin}: {sorted(unknown)} not in {category} taxonomy")
        out[category] = tags
    return out


@dataclass(frozen=True)
class DtprReport:
    per_category: dict[str, dict]
    precision: float | None
    recall: float | None

    def to_dict(self) -> dict:
        return {
            "per_category": self.per_category,
            "precision": self.precision,
            "recall": self.recall,
        }


def dtpr(corpus: Sequence[EvalSample], taxonomy: TagTaxonomy | None = None) -> DtprReport:
    """Per-category tag precision/recall and their macro averages.

    A category with no predicted tags anywhere has undefined precision and
    is excluded from the precision macro average (likewise for recall with
    no ground-truth tags).
    """
    _require_nonempty(corpus)
    taxonomy = taxonomy or default_taxonomy()
    counts = {c: {"tp": 0, "fp": 0, "fn": 0} for c in DTPR_CATEGORIES}
    for s in corpus:
        truth = _tag_sets(s.ground_truth, taxonomy, f"{s.sample_id} ground truth")
        pred = (
            _tag_sets(s.predicted, taxonomy, f"{s.sample_id} prediction")
            if s.predicted is not None
            else {c: set() for c in DTPR_CATEGORIES}
        )
        for c in DTPR_CATEGORIES:
            counts[c]["tp"] += len(pred[c] & truth[c])
            counts[c]["fp"] += len(pred[c] - truth[c])
            counts[c]["fn"] += len(truth[c] - pred[c])

    per_category: dict[str, dict] = {}
    precisions, recalls = [], []
    for c in DTPR_CATEGORIES:
        tp, fp, fn = counts[c]["tp"], counts[c]["fp"], counts[c]["fn"]
        precision = 100.0 * tp / (tp + fp) if tp + fp else None
        recall = 100.0 * tp / (tp + fn) if tp + fn else None
        per_category[c] = {"precision": precision, "recall": recall, "tp": tp, "fp": fp, "fn": fn}
        if precision is not None:
            precisions.append(precision)
        if recall is not None:
            recalls.append(recall)
    return DtprReport(
        per_category=per_category,
        precision=sum(precisions) / len(precisions) if precisions else None,
        recall=sum(recalls) / len(recalls) if recalls else None,
    )


def _check_scores(scores: Mapping[str, float], weights: Mapping[str, float]) -> None:
    for dim, value in scores.items():
        if dim not in weights:
            raise ValueError(f"unknown score dimension {dim!r}")
        if not 0 <= value <= weights[dim]:
            raise ScoreOutOfRange(f"{dim} score {value} outside [0, {weights[dim]}]")


def fpf_aggregate(scores: Mapping[str, float]) -> float:
    """Free-prompt-following total: sum of the provided dimension scores,
    renormalized to 100 by the weight of the dimensions present."""
    if not scores:
        raise ValueError("no dimension scores provided")
    _check_scores(scores, FPF_WEIGHTS)
    present_weight = sum(FPF_WEIGHTS[d] for d in scores)
    return 100.0 * sum(scores.values()) / present_weight


def sq_aggregate(scores: Mapping[str, float]) -> float:
    """Script-quality total: plain sum; all four categories always apply."""
    missing = set(SQ_WEIGHTS) - set(scores)
    if missing:
        raise ValueError(f"missing script-quality categories: {sorted(missing)}")
    _check_scores(scores, SQ_WEIGHTS)
    return float(sum(scores.values()))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def vsr(sample: EvalSample, embed_client: Client) -> float:
    """Simplified visual/script relevance.

    Mean of (a) cosine similarity between the whole-script embedding and
    the mean frame embedding and (b) the per-sentence mean of the maximum
    per-frame cosine similarity, scaled by 100.
    """
    draft = sample.predicted if sample.predicted is not None else sample.ground_truth
    sentences = [s.text for s in draft.voice_over_track]
    if not sentences or not sample.frames:
        raise ValueError(f"{sample.sample_id}: VSR needs both a script and frame references")
    script = " ".join(sentences)
    vectors = embed([script] + sentences + list(sample.frames), embed_client)
    script_vec = vectors[0]
    sentence_vecs = vectors[1 : 1 + len(sentences)]
    frame_vecs = vectors[1 + len(sentences) :]
    whole = _cosine(script_vec, np.mean(frame_vecs, axis=0))
    per_sentence = [max(_cosine(sv, fv) for fv in frame_vecs) for sv in sentence_vecs]
    return 100.0 * (whole + sum(per_sentence) / len(per_sentence)) / 2.0


@dataclass(frozen=True)
class EvalReport:
    cra: float
    csa: float
    fpf: float | None
    vsr: float | None
    sq: float | None
    dtpr: DtprReport
    counts: MetricCounts

    def to_dict(self) -> dict:
        return {
            "cra": self.cra,
            "csa": self.csa,
            "fpf": self.fpf,
            "vsr": self.vsr,
            "sq": self.sq,
            "dtpr": self.dtpr.to_dict(),
            "counts": self.counts.to_dict(),
        }


def evaluate_corpus(
    corpus: Sequence[EvalSample],
    taxonomy: TagTaxonomy | None = None,
    judge: Client | None = None,
    embedder: Client | None = None,
) -> EvalReport:
    """Compute the full metric set.

    Counting metrics always run. Judge-scored metrics (free-prompt
    following, script quality) run when a judge client is supplied or when
    samples already carry judge scores; relevance runs when an embedding
    client is supplied and samples carry frame references.
    """
    _require_nonempty(corpus)
    taxonomy = taxonomy or default_taxonomy()

    counts = MetricCounts(total=len(corpus))
    for s in corpus:
        if s.predicted is not None:
            if s.predicted.clip_sequence() == s.ground_truth.clip_sequence():
                counts.rank_correct += 1
            if not (set(s.predicted.clip_sequence()) & s.negatives):
                counts.selection_clean += 1
    tag_report = dtpr(corpus, taxonomy)
    counts.tag_counts = {c: {k: v for k, v in tag_report.per_category[c].items() if k in ("tp", "fp", "fn")} for c in DTPR_CATEGORIES}

    fpf_values, sq_values = [], []
    for s in corpus:
        scores = dict(s.judge_scores or {})
        if judge is not None and "fpf" not in scores:
            scores["fpf"] = judge_score({"sample_id": s.sample_id}, "free_prompt_eval", judge)
            scores["sq"] = judge_score({"sample_id": s.sample_id}, "script_quality_eval", judge)
        if "fpf" in scores and scores["fpf"]:
            fpf_values.append(fpf_aggregate(scores["fpf"]))
        if "sq" in scores and scores["sq"]:
            sq_values.append(sq_aggregate(scores["sq"]))

    vsr_values = []
    if embedder is not None:
        for s in corpus:
            if s.frames:
                vsr_values.append(vsr(s, embedder))

    return EvalReport(
        cra=100.0 * counts.rank_correct / counts.total,
        csa=100.0 * counts.selection_clean / counts.total,
        fpf=sum(fpf_values) / len(fpf_values) if fpf_values else None,
        vsr=sum(vsr_values) / len(vsr_values) if vsr_values else None,
        sq=sum(sq_values) / len(sq_values) if sq_values else None,
        dtpr=tag_report,
        counts=counts,
    )


def _fmt(value: float | None) -> str:
    return f"{value:.2f}" if value is not None else "-"


def render_table(report: EvalReport) -> str:
    """Aligned plain-text table in the canonical column order."""
    dtpr_cell = f"{_fmt(report.dtpr.precision)}/{_fmt(report.dtpr.recall)}"
    headers = ["CRA", "CSA", "FPF", "VSR", "SQ", "DTPR"]
    values = [
        _fmt(report.cra),
        _fmt(report.csa),
        _fmt(report.fpf),
        _fmt(report.vsr),
        _fmt(report.sq),
        dtpr_cell,
    ]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    head = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    row = "  ".join(v.ljust(w) for v, w in zip(values, widths))
    lines = [head, row, ""]
    lines.append("DTPR by category:")
    for cat in DTPR_CATEGORIES:
        entry = report.dtpr.per_category[cat]
        lines.append(
            f"  {DTPR_DISPLAY[cat]:<11} precision {_fmt(entry['precision'])}  recall {_fmt(entry['recall'])}"
        )
    return "\n".join(lines)
