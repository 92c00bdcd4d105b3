import numpy as np
import pytest

from sslprep import (
    AssignmentSeq,
    MaskSet,
    MaskSpec,
    accum_plan,
    load_batch_plan,
    masked_accuracy,
    plan_batches,
    sample_masks,
    save_batch_plan,
)
from sslprep.errors import ConfigError, DimensionMismatchError


# ------------------------------------------------------------------ plans


def check_plan_invariants(plan, lengths):
    seen = [utt for batch in plan.batches for utt in batch]
    assert sorted(seen) == sorted(lengths)
    assert len(seen) == len(set(seen))
    for i, batch in enumerate(plan.batches):
        total = sum(lengths[u] for u in batch)
        if i in plan.oversized:
            assert len(batch) == 1 and total > plan.bin_size
        else:
            assert total <= plan.bin_size


def test_everything_fits_one_batch():
    lengths = {"a": 10, "b": 20, "c": 5}
    plan = plan_batches(lengths, bin_size=100)
    assert plan.num_batches == 1
    assert plan.batch_payload(0) == 35
    check_plan_invariants(plan, lengths)


def test_manifest_policy_cuts_at_overflow():
    lengths = {"a": 40, "b": 40, "c": 40, "d": 10}
    plan = plan_batches(lengths, bin_size=90, order_policy="manifest")
    assert plan.batches == [["a", "b"], ["c", "d"]]


def test_sorted_policy_orders_by_descending_length_stably():
    lengths = {"a": 10, "b": 30, "c": 30, "d": 20}
    plan = plan_batches(lengths, bin_size=1000)
    assert plan.batches == [["b", "c", "d", "a"]]


def test_oversized_utterance_is_a_flagged_singleton():
    lengths = {"small": 10, "huge": 500, "tiny": 5}
    plan = plan_batches(lengths, bin_size=100)
    assert plan.oversized == [0]
    assert plan.batches[0] == ["huge"]
    check_plan_invariants(plan, lengths)


def test_oversized_mid_stream_closes_the_open_batch():
    lengths = {"a": 50, "big": 300, "b": 50}
    plan = plan_batches(lengths, bin_size=100, order_policy="manifest")
    assert plan.batches == [["a"], ["big"], ["b"]]
    assert plan.oversized == [1]


def test_random_plans_satisfy_invariants(rng):
    for trial in range(50):
        n = int(rng.integers(1, 60))
        lengths = {f"u{i:03d}": int(rng.integers(1, 400)) for i in range(n)}
        bin_size = int(rng.integers(50, 600))
        policy = ("sorted", "manifest")[trial % 2]
        plan = plan_batches(lengths, bin_size, order_policy=policy)
        check_plan_invariants(plan, lengths)


def test_plan_is_deterministic():
    lengths = {f"u{i}": (i * 37) % 91 + 1 for i in range(200)}
    a = plan_batches(lengths, bin_size=250)
    b = plan_batches(lengths, bin_size=250)
    assert a.batches == b.batches and a.oversized == b.oversized


def test_plan_save_load_round_trip(tmp_path):
    lengths = {"a": 120, "b": 30, "c": 500, "d": 30}
    plan = plan_batches(lengths, bin_size=150, unit="frames")
    path = tmp_path / "plan.txt"
    save_batch_plan(plan, path)
    back = load_batch_plan(path, lengths)
    assert back.batches == plan.batches
    assert back.bin_size == plan.bin_size
    assert back.unit == "frames"
    assert back.oversized == plan.oversized


def test_plan_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        plan_batches({"a": 1}, bin_size=0)
    with pytest.raises(ConfigError):
        plan_batches({"a": 1}, bin_size=10, order_policy="shuffled")
    with pytest.raises(ConfigError):
        plan_batches({"a": -1}, bin_size=10)
    with pytest.raises(ConfigError):
        plan_batches({"a": 1}, bin_size=10, unit="hours")


def test_empty_corpus_plans_no_batches():
    plan = plan_batches({}, bin_size=10)
    assert plan.batches == [] and plan.oversized == []


def test_load_requires_headers(tmp_path):
    path = tmp_path / "plan.txt"
    path.write_text("a\tb\n")
    with pytest.raises(ConfigError):
        load_batch_plan(path, {"a": 1, "b": 1})


# ------------------------------------------------------------------ masks


def test_zero_start_prob_masks_nothing():
    spec = MaskSpec(start_prob=0.0, min_spans=0, seed=4)
    masks = sample_masks(500, spec)
    assert masks.spans == []
    assert masks.masked_frames == 0


def test_prob_one_masks_everything():
    masks = sample_masks(50, MaskSpec(start_prob=1.0, span_length=10, seed=0))
    assert masks.spans == [(0, 50)]
    assert masks.indicator().all()


def test_span_clipped_at_sequence_end():
    # guaranteed start at every frame; the last starts still end at T
    masks = sample_masks(7, MaskSpec(start_prob=1.0, span_length=10, min_spans=0, seed=1))
    assert masks.spans == [(0, 7)]


def test_min_spans_forces_one_span():
    spec = MaskSpec(start_prob=0.0, span_length=10, min_spans=1, seed=3)
    masks = sample_masks(100, spec)
    assert len(masks.spans) == 1
    start, end = masks.spans[0]
    assert end - start == 10
    assert 0 <= start and end <= 100


def test_too_short_sequence_is_left_unmasked():
    spec = MaskSpec(start_prob=0.0, span_length=10, min_spans=1, seed=3)
    assert sample_masks(9, spec).spans == []
    assert sample_masks(0, spec).spans == []


def test_masks_depend_on_seed_and_length_only():
    spec = MaskSpec(seed=11)
    assert sample_masks(300, spec).spans == sample_masks(300, spec).spans
    other_seed = sample_masks(300, MaskSpec(seed=12)).spans
    assert sample_masks(300, spec).spans != other_seed


def test_sampled_spans_are_always_valid(rng):
    for _ in range(2000):
        length = int(rng.integers(0, 200))
        spec = MaskSpec(
            start_prob=float(rng.random()),
            span_length=int(rng.integers(1, 20)),
            min_spans=int(rng.integers(0, 3)),
            seed=int(rng.integers(0, 10_000)),
        )
        masks = sample_masks(length, spec)  # MaskSet validates on construction
        assert masks.masked_frames == int(masks.indicator().sum())


def test_coverage_matches_closed_form():
    # P(frame masked) ~= 1 - (1 - p)^L for frames away from the edges
    p, span, length = 0.08, 10, 400
    expected = 1.0 - (1.0 - p) ** span
    rates = []
    for seed in range(300):
        masks = sample_masks(length, MaskSpec(start_prob=p, span_length=span, seed=seed))
        rates.append(masks.masked_frames / length)
    assert abs(np.mean(rates) - expected) < 0.03


def test_mask_set_validation():
    MaskSet(10, [(0, 3), (5, 10)])
    with pytest.raises(ConfigError):
        MaskSet(10, [(0, 3), (2, 6)])  # overlap
    with pytest.raises(ConfigError):
        MaskSet(10, [(5, 3)])  # empty-or-backwards
    with pytest.raises(ConfigError):
        MaskSet(10, [(8, 12)])  # out of bounds
    with pytest.raises(ConfigError):
        MaskSet(10, [(5, 7), (0, 2)])  # unsorted


# --------------------------------------------------------------- accuracy


def seqs(pred, ref, k=10):
    return (
        AssignmentSeq("u", np.array(pred, np.int32), k),
        AssignmentSeq("u", np.array(ref, np.int32), k),
    )


def test_accuracy_counts_only_masked_frames():
    pred, ref = seqs([1, 2, 3, 4, 5, 6], [1, 9, 3, 9, 5, 9])
    masks = MaskSet(6, [(0, 3)])  # frames 0,1,2: right, wrong, right
    assert masked_accuracy(pred, ref, masks) == pytest.approx(2 / 3)
    # unmasked disagreements are invisible
    assert masked_accuracy(pred, ref, MaskSet(6, [(2, 3)])) == 1.0


def test_accuracy_without_masked_frames_is_none():
    pred, ref = seqs([0, 1], [0, 1])
    assert masked_accuracy(pred, ref, MaskSet(2, [])) is None


def test_accuracy_is_invariant_to_consistent_relabeling(rng):
    k = 8
    pred = rng.integers(0, k, 100).astype(np.int32)
    ref = rng.integers(0, k, 100).astype(np.int32)
    masks = sample_masks(100, MaskSpec(seed=5))
    base = masked_accuracy(
        AssignmentSeq("u", pred, k), AssignmentSeq("u", ref, k), masks
    )
    perm = rng.permutation(k).astype(np.int32)
    remapped = masked_accuracy(
        AssignmentSeq("u", perm[pred], k), AssignmentSeq("u", perm[ref], k), masks
    )
    assert remapped == base


def test_accuracy_shape_checks():
    pred, ref = seqs([0, 1, 2], [0, 1, 2])
    with pytest.raises(DimensionMismatchError):
        masked_accuracy(pred, ref, MaskSet(5, []))
    short = AssignmentSeq("u", np.array([0], np.int32), 10)
    with pytest.raises(DimensionMismatchError):
        masked_accuracy(pred, short, MaskSet(3, []))


def test_spec_validation():
    with pytest.raises(ConfigError):
        MaskSpec(start_prob=1.5)
    with pytest.raises(ConfigError):
        MaskSpec(span_length=0)
    with pytest.raises(ConfigError):
        MaskSpec(min_spans=-1)


# ------------------------------------------------------------ accumulation


def test_accum_reaches_target_exactly():
    plan = accum_plan(1024, per_gpu_batch=8, devices=4)
    assert plan.micro_batches_per_step == 32
    assert plan.effective_batch == 1024


def test_accum_rounds_up_on_remainder():
    plan = accum_plan(100, per_gpu_batch=10, devices=3)
    assert plan.micro_batches_per_step == 4
    assert plan.effective_batch == 120


def test_small_cluster_emulates_large_one():
    # 8 devices reproducing a 32-device single-pass batch
    big = accum_plan(32 * 16, per_gpu_batch=16, devices=32)
    small = accum_plan(32 * 16, per_gpu_batch=16, devices=8)
    assert big.micro_batches_per_step == 1
    assert small.micro_batches_per_step == 4
    assert small.effective_batch == big.effective_batch


def test_accum_validation():
    with pytest.raises(ConfigError):
        accum_plan(0, 1, 1)
    with pytest.raises(ConfigError):
        accum_plan(10, 0, 1)
    with pytest.raises(ConfigError):
        accum_plan(10, 1, 0)
