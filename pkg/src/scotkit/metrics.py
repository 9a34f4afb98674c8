"""Layout-compliance metrics over reference/prediction box sets.

Matching is geometry-only: within each category, references and
predictions are paired greedily in descending IoU order, one-to-one.
An instance is successful when its matched IoU reaches the threshold;
I-SR is the successful fraction of reference instances, SR the fraction
of samples whose instances all succeed, and mIoU the mean matched IoU.
Attribute correctness (e.g. color) needs generated pixels and is out of
scope here; results are therefore upper bounds on image-level scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .geometry import BBox, iou

DEFAULT_IOU_THRESHOLD = 0.5


class MetricsError(Exception):
    pass


class EmptyCorpus(MetricsError):
    pass


@dataclass(frozen=True)
class EvalSample:
    id: str
    references: tuple[tuple[str, BBox], ...]
    predictions: tuple[tuple[str, BBox], ...]


@dataclass(frozen=True)
class InstanceMatch:
    ref_index: int
    pred_index: int | None  # None when the reference went unmatched
    iou: float


@dataclass(frozen=True)
class SampleResult:
    id: str
    matches: tuple[InstanceMatch, ...]
    successful: int
    all_successful: bool
    mean_iou: float


@dataclass(frozen=True)
class EvalReport:
    miou: float
    sr: float
    isr: float
    iou_threshold: float
    per_sample: tuple[SampleResult, ...]

    def to_dict(self) -> dict:
        return {
            "mIoU": self.miou,
            "SR": self.sr,
            "I-SR": self.isr,
            "iou_threshold": self.iou_threshold,
            "samples": len(self.per_sample),
            "instances": sum(len(s.matches) for s in self.per_sample),
        }


def greedy_match(pairs: Sequence[tuple[int, int, float]], n_refs: int) -> list[InstanceMatch]:
    """One-to-one matching: walk candidate (ref, pred, iou) pairs in
    descending IoU order (ties broken by indices) and keep each side's
    first appearance. Unmatched references pair with IoU 0."""
    ordered = sorted(pairs, key=lambda p: (-p[2], p[0], p[1]))
    used_refs: set[int] = set()
    used_preds: set[int] = set()
    matched: dict[int, InstanceMatch] = {}
    for ref_i, pred_i, value in ordered:
        if value <= 0 or ref_i in used_refs or pred_i in used_preds:
            continue
        used_refs.add(ref_i)
        used_preds.add(pred_i)
        matched[ref_i] = InstanceMatch(ref_i, pred_i, value)
    return [
        matched.get(i, InstanceMatch(i, None, 0.0)) for i in range(n_refs)
    ]


def match_instances(sample: EvalSample) -> list[InstanceMatch]:
    """Match the sample's references against its predictions, greedy
    per category; predictions of other categories never match."""
    pairs: list[tuple[int, int, float]] = []
    for ri, (ref_cat, ref_box) in enumerate(sample.references):
        for pi, (pred_cat, pred_box) in enumerate(sample.predictions):
            if pred_cat != ref_cat:
                continue
            pairs.append((ri, pi, iou(ref_box, pred_box)))
    return greedy_match(pairs, len(sample.references))


def _round2(x: float) -> float:
    """Percentage rounding, half away from zero."""
    return math.floor(x * 100 + 0.5) / 100 if x >= 0 else -math.floor(-x * 100 + 0.5) / 100


def evaluate(
    samples: Sequence[EvalSample],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> EvalReport:
    """Aggregate SR / I-SR / mIoU over the corpus, as percentages with
    two decimals. A corpus without any reference instance scores 100.00
    vacuously (so SR <= I-SR always holds)."""
    if not samples:
        raise EmptyCorpus("evaluate needs at least one sample")
    per_sample = []
    total_instances = 0
    total_successful = 0
    iou_sum = 0.0
    full_samples = 0
    for sample in samples:
        matches = tuple(match_instances(sample))
        successes = sum(1 for m in matches if m.iou >= iou_threshold)
        sample_iou = sum(m.iou for m in matches)
        all_ok = successes == len(matches)
        per_sample.append(
            SampleResult(
                id=sample.id,
                matches=matches,
                successful=successes,
                all_successful=all_ok,
                mean_iou=sample_iou / len(matches) if matches else 1.0,
            )
        )
        total_instances += len(matches)
        total_successful += successes
        iou_sum += sample_iou
        full_samples += all_ok
    sr = 100.0 * full_samples / len(samples)
    isr = 100.0 * total_successful / total_instances if total_instances else 100.0
    miou = 100.0 * iou_sum / total_instances if total_instances else 100.0
    return EvalReport(
        miou=_round2(miou),
        sr=_round2(sr),
        isr=_round2(isr),
        iou_threshold=iou_threshold,
        per_sample=tuple(per_sample),
    )


def format_report(report: EvalReport, per_sample: bool = False) -> str:
    lines = [
        f"samples:   {len(report.per_sample)}",
        f"instances: {sum(len(s.matches) for s in report.per_sample)}",
        f"threshold: {report.iou_threshold}",
        f"SR:    {report.sr:.2f}",
        f"I-SR:  {report.isr:.2f}",
        f"mIoU:  {report.miou:.2f}",
    ]
    if per_sample:
        lines.append("")
        lines.append(f"{'id':<24} {'refs':>5} {'ok':>4} {'mIoU':>7} {'all':>4}")
        for s in report.per_sample:
            lines.append(
                f"{s.id:<24} {len(s.matches):>5} {s.successful:>4} "
                f"{100 * s.mean_iou:>7.2f} {str(s.all_successful):>4}"
            )
    return "\n".join(lines)
