"""Memory-bounded k-means over streaming frame chunks.

The training pipeline never materializes a corpus-sized matrix.  It holds
exactly one codebook (k x D float32), one reservoir buffer (at most
``budget`` x D float32) and per-shard running sums (k x D float64).  Frame
streams are re-iterable callables so every Lloyd iteration can rescan the
corpus from the start.

Determinism contract: given the same seed, the same frame content in the
same stream order, results are bit-identical regardless of chunk sizes or
worker count.  Per-cluster sums are accumulated in float64 in stream order
and merged in ascending shard order, which fixes the floating-point
summation tree.
"""

from __future__ import annotations

import dataclasses
import json
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError, DegenerateDataError, DimensionMismatchError
from .records import AssignmentSeq, FeatureMatrix
from ._version import __version__

# A frame source is a zero-argument callable returning a fresh iterable of
# (frames x dim) float chunks.  Chunk boundaries carry no meaning.
FrameSource = Callable[[], Iterable[np.ndarray]]

# Distance computations are split into row blocks of at most this many
# frames so the transient (rows x k) distance matrix stays small.
_MAX_ROWS = 8192


def _as_chunk(chunk: np.ndarray, dim: int | None) -> np.ndarray:
    chunk = np.asarray(chunk)
    if chunk.ndim != 2:
        raise DimensionMismatchError(
            f"frame chunk must be 2-D (frames x dim), got shape {chunk.shape}"
        )
    if dim is not None and chunk.shape[1] != dim:
        raise DimensionMismatchError(
            f"frame chunk has dim {chunk.shape[1]}, expected {dim}"
        )
    return chunk


@dataclasses.dataclass
class Provenance:
    """Where a codebook came from, enough to reproduce it."""

    feature_kind: str = "unknown"
    layer_index: int | None = None
    seed: int = 0
    sample_budget: int = 0
    final_inertia: float = math.nan
    iterations_run: int = 0
    tool_version: str = __version__
    config_hash: str = ""

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Provenance":
        raw = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{key: val for key, val in raw.items() if key in known})


@dataclasses.dataclass
class Codebook:
    """k cluster centroids plus the provenance of the run that made them."""

    centroids: np.ndarray
    provenance: Provenance

    def __post_init__(self) -> None:
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if self.centroids.ndim != 2:
            raise DimensionMismatchError(
                f"centroids must be 2-D (k x dim), got shape {self.centroids.shape}"
            )
        if self.centroids.shape[0] < 1 or self.centroids.shape[1] < 1:
            raise DegenerateDataError(
                f"codebook needs k >= 1 and dim >= 1, got shape {self.centroids.shape}"
            )
        if not np.all(np.isfinite(self.centroids)):
            raise DegenerateDataError("codebook centroids contain non-finite values")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclasses.dataclass
class SampleBuffer:
    """Uniform reservoir of frames drawn from a stream.

    ``frames`` holds min(seen, budget) rows.  Every frame of the underlying
    stream had equal probability budget/seen of being retained.
    """

    budget: int
    dim: int
    frames: np.ndarray
    seen: int
    seed: int

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ConfigError(f"sample budget must be >= 1, got {self.budget}")
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise DimensionMismatchError("sample buffer frames must be 2-D")
        expect = min(self.seen, self.budget)
        if self.frames.shape[0] != expect:
            raise DimensionMismatchError(
                f"buffer holds {self.frames.shape[0]} frames, "
                f"expected min(seen={self.seen}, budget={self.budget}) = {expect}"
            )

    @property
    def count(self) -> int:
        return self.frames.shape[0]


@dataclasses.dataclass
class PartialStats:
    """Sufficient statistics of one assignment pass over a shard.

    Mergeable across shards: sums and counts add element-wise, inertia adds.
    Accumulators are float64 so merge order only perturbs the last bits.
    """

    sums: np.ndarray
    counts: np.ndarray
    inertia: float

    def __post_init__(self) -> None:
        self.sums = np.asarray(self.sums, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.sums.ndim != 2 or self.counts.ndim != 1:
            raise DimensionMismatchError("stats need 2-D sums and 1-D counts")
        if self.sums.shape[0] != self.counts.shape[0]:
            raise DimensionMismatchError(
                f"sums rows ({self.sums.shape[0]}) != counts ({self.counts.shape[0]})"
            )

    @classmethod
    def zeros(cls, k: int, dim: int) -> "PartialStats":
        return cls(np.zeros((k, dim)), np.zeros(k, dtype=np.int64), 0.0)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def dim(self) -> int:
        return self.sums.shape[1]

    @property
    def num_frames(self) -> int:
        return int(self.counts.sum())


def reservoir_sample(
    frame_stream: Iterable[np.ndarray], budget: int, seed: int
) -> SampleBuffer:
    """Draw a uniform sample of at most ``budget`` frames in one pass.

    Standard reservoir sampling: the first ``budget`` frames fill the
    buffer without consuming randomness; frame number n (1-based) then
    replaces slot floor(u * n) when that lands inside the buffer.  Draws
    depend only on each frame's absolute position, never on chunking, so
    re-chunking the same stream yields the same buffer.
    """
    if budget < 1:
        raise ConfigError(f"sample budget must be >= 1, got {budget}")
    rng = np.random.Generator(np.random.PCG64(seed))
    frames: np.ndarray | None = None
    dim: int | None = None
    seen = 0
    count = 0
    for chunk in frame_stream:
        chunk = _as_chunk(chunk, dim)
        if frames is None:
            dim = chunk.shape[1]
            frames = np.empty((budget, dim), dtype=np.float32)
        pos = 0
        if count < budget:
            take = min(budget - count, chunk.shape[0])
            frames[count : count + take] = chunk[:take]
            count += take
            seen += take
            pos = take
        if pos < chunk.shape[0]:
            rest = chunk[pos:]
            draws = rng.random(rest.shape[0])
            slots = (draws * (np.arange(seen + 1, seen + rest.shape[0] + 1))).astype(
                np.int64
            )
            for row in np.flatnonzero(slots < budget):
                frames[slots[row]] = rest[row]
            seen += rest.shape[0]
    if frames is None:
        return SampleBuffer(budget, 0, np.empty((0, 0), np.float32), 0, seed)
    return SampleBuffer(budget, dim, frames[:count], seen, seed)


def kmeanspp_init(
    buffer: SampleBuffer,
    k: int,
    seed: int,
    feature_kind: str = "unknown",
    layer_index: int | None = None,
) -> Codebook:
    """Seed k centroids from the buffer by D^2-weighted sampling.

    The first centroid is uniform over buffer frames; each next one is
    drawn with probability proportional to squared distance from the
    nearest centroid chosen so far.  Frames at distance zero carry no mass,
    so the k picks are always distinct buffer rows.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    points = buffer.frames.astype(np.float64)
    if buffer.count < k:
        raise DegenerateDataError(
            f"k-means++ needs at least k={k} frames, buffer holds {buffer.count}"
        )
    if np.unique(points, axis=0).shape[0] < k:
        raise DegenerateDataError(
            f"k-means++ needs k={k} distinct frames, buffer has fewer"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = np.empty((k, buffer.dim), dtype=np.float64)
    centroids[0] = points[int(rng.integers(buffer.count))]
    dist2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for idx in range(1, k):
        cumulative = np.cumsum(dist2)
        target = rng.random() * cumulative[-1]
        pick = int(np.searchsorted(cumulative, target, side="right"))
        pick = min(pick, buffer.count - 1)
        centroids[idx] = points[pick]
        np.minimum(dist2, ((points - centroids[idx]) ** 2).sum(axis=1), out=dist2)
    prov = Provenance(
        feature_kind=feature_kind,
        layer_index=layer_index,
        seed=seed,
        sample_budget=buffer.budget,
    )
    return Codebook(centroids.astype(np.float32), prov)


def _assign_block(
    block: np.ndarray, centroids64: np.ndarray, cnorm2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Labels and exact squared distances for one block of frames.

    Argmin uses the expanded form |x|^2 - 2 x.c + |c|^2 for speed; the
    returned distance is then recomputed as |x - c|^2 against the chosen
    centroid only, so a frame equal to its centroid scores exactly zero.
    """
    x = block.astype(np.float64)
    scores = x @ centroids64.T
    scores *= -2.0
    scores += cnorm2
    labels = np.argmin(scores, axis=1).astype(np.int32)
    diff = x - centroids64[labels]
    dist2 = np.einsum("ij,ij->i", diff, diff)
    return labels, dist2


def _iter_blocks(chunk: np.ndarray) -> Iterable[np.ndarray]:
    for start in range(0, chunk.shape[0], _MAX_ROWS):
        yield chunk[start : start + _MAX_ROWS]


def assign_frames(
    codebook: Codebook, features: FeatureMatrix
) -> tuple[AssignmentSeq, float]:
    """Label every frame with its nearest centroid (ties: lowest index).

    Returns the assignment sequence and the summed squared distance of the
    utterance.  Frame count is preserved exactly.
    """
    if features.dim != codebook.dim:
        raise DimensionMismatchError(
            f"features have dim {features.dim}, codebook expects {codebook.dim}"
        )
    centroids64 = codebook.centroids.astype(np.float64)
    cnorm2 = np.einsum("ij,ij->i", centroids64, centroids64)
    labels = np.empty(features.num_frames, dtype=np.int32)
    inertia = 0.0
    row = 0
    for block in _iter_blocks(features.values):
        part, dist2 = _assign_block(block, centroids64, cnorm2)
        labels[row : row + part.shape[0]] = part
        inertia += float(dist2.sum())
        row += part.shape[0]
    return AssignmentSeq(features.utt_id, labels, codebook.k), inertia


def accumulate_partial(
    codebook: Codebook, frame_stream: Iterable[np.ndarray]
) -> PartialStats:
    """One assignment pass over a stream, reduced to per-cluster sums.

    Memory stays at one chunk plus the k x dim float64 accumulators no
    matter how long the stream is.
    """
    centroids64 = codebook.centroids.astype(np.float64)
    cnorm2 = np.einsum("ij,ij->i", centroids64, centroids64)
    stats = PartialStats.zeros(codebook.k, codebook.dim)
    dim = codebook.dim
    for chunk in frame_stream:
        chunk = _as_chunk(chunk, dim)
        for block in _iter_blocks(chunk):
            labels, dist2 = _assign_block(block, centroids64, cnorm2)
            np.add.at(stats.sums, labels, block.astype(np.float64))
            stats.counts += np.bincount(labels, minlength=codebook.k)
            stats.inertia += float(dist2.sum())
    return stats


def merge_partials(partials: Sequence[PartialStats]) -> PartialStats:
    """Fold shard statistics left to right into one total.

    Callers pass shards in ascending shard index so the floating-point
    result does not depend on how many workers produced them.
    """
    partials = list(partials)
    if not partials:
        raise ConfigError("merge_partials needs at least one shard")
    first = partials[0]
    total = PartialStats.zeros(first.k, first.dim)
    for part in partials:
        if part.k != first.k or part.dim != first.dim:
            raise DimensionMismatchError(
                f"cannot merge stats of shape ({part.k}, {part.dim}) "
                f"with ({first.k}, {first.dim})"
            )
        total.sums += part.sums
        total.counts += part.counts
        total.inertia += part.inertia
    return total


def update_centroids(
    codebook: Codebook, stats: PartialStats, buffer: SampleBuffer
) -> tuple[Codebook, float]:
    """Lloyd update: move centroids to cluster means, reseed empty ones.

    An empty cluster jumps to the buffer frame farthest (by squared
    distance to its nearest centroid) from the current working set; ties
    pick the lowest frame index.  Empty clusters are processed in ascending
    cluster index and each reseed joins the working set before the next, so
    two empty clusters never land on the same frame.

    Returns the new codebook and the max centroid shift (Euclidean).
    """
    if stats.k != codebook.k or stats.dim != codebook.dim:
        raise DimensionMismatchError(
            f"stats shape ({stats.k}, {stats.dim}) does not match "
            f"codebook ({codebook.k}, {codebook.dim})"
        )
    old = codebook.centroids.astype(np.float64)
    new = old.copy()
    filled = stats.counts > 0
    new[filled] = stats.sums[filled] / stats.counts[filled, None]
    empties = np.flatnonzero(~filled)
    if empties.size:
        if buffer.count == 0:
            raise DegenerateDataError(
                "cannot reseed empty clusters from an empty sample buffer"
            )
        points = buffer.frames.astype(np.float64)
        near2 = np.full(buffer.count, np.inf)
        for center in new:
            np.minimum(near2, ((points - center) ** 2).sum(axis=1), out=near2)
        for cluster in empties:
            pick = int(np.argmax(near2))
            new[cluster] = points[pick]
            np.minimum(
                near2, ((points - new[cluster]) ** 2).sum(axis=1), out=near2
            )
    shift = float(np.sqrt(((new - old) ** 2).sum(axis=1).max()))
    updated = Codebook(new.astype(np.float32), dataclasses.replace(codebook.provenance))
    return updated, shift


def run_lloyd(
    codebook: Codebook,
    accumulate: Callable[[Codebook], PartialStats],
    buffer: SampleBuffer,
    tol: float = 1e-4,
    max_iter: int = 100,
    on_iteration: Callable[[int, float, float], None] | None = None,
) -> Codebook:
    """Iterate assignment and update until inertia stops improving.

    ``accumulate`` maps a codebook to merged corpus statistics; callers
    choose how that pass is parallelized.  Stops when the relative inertia
    improvement falls below ``tol``, when centroids stop moving, or after
    ``max_iter`` iterations.  One extra pass measures the final inertia
    against the returned centroids and stores it in the provenance.
    """
    if tol < 0:
        raise ConfigError(f"tol must be >= 0, got {tol}")
    if max_iter < 0:
        raise ConfigError(f"max_iter must be >= 0, got {max_iter}")
    previous = None
    iterations = 0
    for iteration in range(max_iter):
        stats = accumulate(codebook)
        inertia = stats.inertia
        codebook, shift = update_centroids(codebook, stats, buffer)
        iterations += 1
        if on_iteration is not None:
            on_iteration(iteration, inertia, shift)
        converged = previous is not None and (
            previous == 0.0 or (previous - inertia) < tol * previous
        )
        previous = inertia
        if converged or shift == 0.0:
            break
    final = accumulate(codebook).inertia
    prov = dataclasses.replace(
        codebook.provenance, final_inertia=final, iterations_run=iterations
    )
    return Codebook(codebook.centroids, prov)


def derived_seeds(seed: int) -> tuple[int, int]:
    """Child seeds train_kmeans uses for its sampling and init stages.

    Exposed so an out-of-process driver can reproduce the exact same
    buffer and initial codebook as the in-process path.
    """
    children = np.random.SeedSequence(seed).spawn(2)
    return tuple(int(child.generate_state(1)[0]) for child in children)


def _standardizer(buffer: SampleBuffer) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and (floored) standard deviation of the buffer."""
    mean = buffer.frames.mean(axis=0, dtype=np.float64)
    std = buffer.frames.std(axis=0, dtype=np.float64)
    std[std < 1e-8] = 1.0
    return mean, std


def train_kmeans(
    shard_sources: Sequence[FrameSource],
    k: int,
    budget: int,
    tol: float = 1e-4,
    max_iter: int = 100,
    workers: int = 1,
    seed: int = 0,
    standardize: bool = False,
    feature_kind: str = "unknown",
    layer_index: int | None = None,
    on_iteration: Callable[[int, float, float], None] | None = None,
) -> Codebook:
    """Full training: sample, seed, then full-batch Lloyd over all shards.

    The sampling pass walks shards sequentially in index order so the
    reservoir is identical however the corpus was sharded.  Assignment
    passes run one task per shard on a thread pool of ``workers`` threads
    and merge results in ascending shard order, making the output invariant
    to worker count.
    """
    sources = list(shard_sources)
    if not sources:
        raise ConfigError("train_kmeans needs at least one frame source")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    sample_seed, init_seed = derived_seeds(seed)

    def corpus_stream() -> Iterable[np.ndarray]:
        for source in sources:
            yield from source()

    buffer = reservoir_sample(corpus_stream(), budget, sample_seed)
    if buffer.count < k:
        raise DegenerateDataError(
            f"corpus yielded {buffer.count} frames, cannot fit k={k} clusters"
        )
    if standardize:
        mean, std = _standardizer(buffer)
        scaled = (buffer.frames.astype(np.float64) - mean) / std
        buffer = SampleBuffer(
            buffer.budget, buffer.dim, scaled.astype(np.float32),
            buffer.seen, buffer.seed,
        )
        mean32 = mean.astype(np.float32)
        inv32 = (1.0 / std).astype(np.float32)

        def wrap(source: FrameSource) -> FrameSource:
            def scaled_source() -> Iterable[np.ndarray]:
                for chunk in source():
                    yield (np.asarray(chunk, np.float32) - mean32) * inv32

            return scaled_source

        sources = [wrap(source) for source in sources]

    codebook = kmeanspp_init(buffer, k, init_seed, feature_kind, layer_index)
    codebook.provenance.seed = seed
    codebook.provenance.sample_budget = budget

    def accumulate(current: Codebook) -> PartialStats:
        if workers == 1 or len(sources) == 1:
            parts = [accumulate_partial(current, source()) for source in sources]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(accumulate_partial, current, source())
                    for source in sources
                ]
                parts = [future.result() for future in futures]
        return merge_partials(parts)

    return run_lloyd(codebook, accumulate, buffer, tol, max_iter, on_iteration)
