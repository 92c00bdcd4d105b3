"""Batch-bin planning, masked-span sampling, and accumulation accounting.

These are the trainer-facing utilities: group utterances into batches
bounded by total payload (samples or frames, not utterance count), draw
the masked regions whose labels the model must predict, score masked
prediction accuracy, and size gradient accumulation so a small device
count reaches a large effective batch.
"""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .records import AssignmentSeq, check_same_length

ORDER_POLICIES = ("sorted", "manifest")
PAYLOAD_UNITS = ("samples", "frames")


@dataclasses.dataclass
class BatchPlan:
    """A partition of utterances into payload-bounded batches.

    Every batch's payload sum is <= bin_size except flagged oversized
    singletons (an utterance longer than the bin still has to train).
    """

    bin_size: int
    unit: str
    batches: list[list[str]]
    payload: dict[str, int]
    oversized: list[int] = dataclasses.field(default_factory=list)

    def __post_init__(self) -> None:
        if self.bin_size < 1:
            raise ConfigError(f"bin_size must be >= 1, got {self.bin_size}")
        if self.unit not in PAYLOAD_UNITS:
            raise ConfigError(f"unit must be one of {PAYLOAD_UNITS}, got {self.unit!r}")

    def batch_payload(self, index: int) -> int:
        return sum(self.payload[utt] for utt in self.batches[index])

    @property
    def num_batches(self) -> int:
        return len(self.batches)


def plan_batches(
    lengths: Mapping[str, int],
    bin_size: int,
    order_policy: str = "sorted",
    unit: str = "samples",
) -> BatchPlan:
    """Greedy fill: walk utterances in policy order, cut a batch whenever
    the next one would overflow the bin.

    Policy "sorted" walks by descending length (ties keep input order) so
    similar lengths share a batch; "manifest" preserves input order.  An
    utterance alone longer than bin_size becomes a flagged singleton.
    """
    if bin_size < 1:
        raise ConfigError(f"bin_size must be >= 1, got {bin_size}")
    if order_policy not in ORDER_POLICIES:
        raise ConfigError(
            f"order_policy must be one of {ORDER_POLICIES}, got {order_policy!r}"
        )
    for utt, length in lengths.items():
        if length < 0:
            raise ConfigError(f"negative payload for {utt!r}: {length}")
    order = list(lengths)
    if order_policy == "sorted":
        order.sort(key=lambda utt: -lengths[utt])
    batches: list[list[str]] = []
    oversized: list[int] = []
    current: list[str] = []
    current_sum = 0
    for utt in order:
        length = lengths[utt]
        if length > bin_size:
            if current:
                batches.append(current)
                current, current_sum = [], 0
            oversized.append(len(batches))
            batches.append([utt])
            continue
        if current and current_sum + length > bin_size:
            batches.append(current)
            current, current_sum = [], 0
        current.append(utt)
        current_sum += length
    if current:
        batches.append(current)
    return BatchPlan(bin_size, unit, batches, dict(lengths), oversized)


def save_batch_plan(plan: BatchPlan, path: str | Path) -> None:
    """One batch per line, tab-separated utt ids, headers first."""
    lines = [
        f"#bin_size\t{plan.bin_size}",
        f"#unit\t{plan.unit}",
        f"#oversized\t{' '.join(str(i) for i in plan.oversized)}".rstrip(),
    ]
    for batch in plan.batches:
        lines.append("\t".join(batch))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_batch_plan(path: str | Path, lengths: Mapping[str, int]) -> BatchPlan:
    bin_size = None
    unit = None
    oversized: list[int] = []
    batches: list[list[str]] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw:
            continue
        if raw.startswith("#"):
            key, _, value = raw[1:].partition("\t")
            if key == "bin_size":
                bin_size = int(value)
            elif key == "unit":
                unit = value
            elif key == "oversized":
                oversized = [int(tok) for tok in value.split()] if value else []
            continue
        batches.append(raw.split("\t"))
    if bin_size is None or unit is None:
        raise ConfigError(f"batch plan {path} is missing its headers")
    return BatchPlan(bin_size, unit, batches, dict(lengths), oversized)


@dataclasses.dataclass
class MaskSpec:
    """Span-mask sampling parameters over a label sequence."""

    start_prob: float = 0.08
    span_length: int = 10
    min_spans: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.start_prob <= 1.0:
            raise ConfigError(f"start_prob must be in [0, 1], got {self.start_prob}")
        if self.span_length < 1:
            raise ConfigError(f"span_length must be >= 1, got {self.span_length}")
        if self.min_spans < 0:
            raise ConfigError(f"min_spans must be >= 0, got {self.min_spans}")


@dataclasses.dataclass
class MaskSet:
    """Sorted, disjoint, in-bounds [start, end) intervals over T frames."""

    length: int
    spans: list[tuple[int, int]]

    def __post_init__(self) -> None:
        if self.length < 0:
            raise ConfigError(f"sequence length must be >= 0, got {self.length}")
        previous_end = -1
        for start, end in self.spans:
            if not (0 <= start < end <= self.length):
                raise ConfigError(
                    f"span [{start}, {end}) out of bounds for T={self.length}"
                )
            if start <= previous_end:
                raise ConfigError("spans must be sorted and disjoint")
            previous_end = end

    @property
    def masked_frames(self) -> int:
        return sum(end - start for start, end in self.spans)

    def indicator(self) -> np.ndarray:
        flags = np.zeros(self.length, dtype=bool)
        for start, end in self.spans:
            flags[start:end] = True
        return flags


def _merge_starts(starts: np.ndarray, length: int, span: int) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    for start in starts:
        end = min(int(start) + span, length)
        if spans and start <= spans[-1][1]:
            spans[-1] = (spans[-1][0], max(spans[-1][1], end))
        else:
            spans.append((int(start), end))
    return spans


def sample_masks(length: int, spec: MaskSpec) -> MaskSet:
    """Independent per-frame span starts, overlaps merged.

    Each frame starts a span of spec.span_length frames with probability
    spec.start_prob; spans are clipped at T and merged.  If fewer than
    min_spans spans came out and the sequence is long enough (T >= L), one
    extra span is forced at a seeded position.  Deterministic per
    (seed, T).
    """
    if length < 0:
        raise ConfigError(f"sequence length must be >= 0, got {length}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, length])))
    starts = np.flatnonzero(rng.random(length) < spec.start_prob)
    spans = _merge_starts(starts, length, spec.span_length)
    if len(spans) < spec.min_spans and length >= spec.span_length:
        forced = int(rng.integers(length - spec.span_length + 1))
        merged = sorted(spans + [(forced, forced + spec.span_length)])
        spans = []
        for start, end in merged:
            if spans and start <= spans[-1][1]:
                spans[-1] = (spans[-1][0], max(spans[-1][1], end))
            else:
                spans.append((start, end))
    return MaskSet(length, spans)


def masked_accuracy(
    predicted: AssignmentSeq, reference: AssignmentSeq, masks: MaskSet
) -> float | None:
    """Fraction of masked frames predicted correctly; None when no frame
    is masked (undefined, deliberately distinct from 0.0)."""
    length = check_same_length(predicted, reference)
    if masks.length != length:
        raise DimensionMismatchError(
            f"mask covers {masks.length} frames, sequences have {length}"
        )
    flags = masks.indicator()
    total = int(flags.sum())
    if total == 0:
        return None
    correct = int((predicted.labels[flags] == reference.labels[flags]).sum())
    return correct / total


@dataclasses.dataclass
class AccumPlan:
    """Gradient accumulation bookkeeping: a micro-batches of b payload on
    g devices give an effective batch of a*b*g per optimizer step."""

    micro_batches_per_step: int
    per_gpu_batch: int
    devices: int

    def __post_init__(self) -> None:
        for name in ("micro_batches_per_step", "per_gpu_batch", "devices"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def effective_batch(self) -> int:
        return self.micro_batches_per_step * self.per_gpu_batch * self.devices


def accum_plan(target_effective: int, per_gpu_batch: int, devices: int) -> AccumPlan:
    """Smallest accumulation factor whose effective batch reaches the target."""
    if target_effective < 1:
        raise ConfigError(f"target_effective must be >= 1, got {target_effective}")
    if per_gpu_batch < 1 or devices < 1:
        raise ConfigError("per_gpu_batch and devices must be >= 1")
    micro = math.ceil(target_effective / (per_gpu_batch * devices))
    return AccumPlan(micro, per_gpu_batch, devices)
