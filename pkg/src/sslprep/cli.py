"""Command-line pipeline driver.

Subcommands cover the whole flow: train-kmeans (sample, seed, iterate),
label (fused feature extraction and assignment), plan-batches,
sample-masks, score-superb, and diagnose.  A key=value config file sets
the pipeline parameters; flags override individual values.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format
error, 4 numeric/degenerate-data error.

Worker parallelism for training is either threads in this process or
`kmeans-worker` subprocesses coordinated through files in a scratch
directory (env SSLPREP_SCRATCH, default <output_dir>/scratch).  Both
paths merge per-shard statistics in ascending shard order, so they
produce the same codebook.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import subprocess
import sys
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import batching, superb
from .ark import ark_paths
from .codebook import (
    load_codebook,
    load_partial_stats,
    load_sample_buffer,
    provenance_text,
    save_codebook,
    save_partial_stats,
    save_sample_buffer,
)
from .errors import (
    ArkFormatError,
    CodebookFormatError,
    ConfigError,
    DegenerateDataError,
    DimensionMismatchError,
    LabelRangeError,
    WavError,
)
from .kmeans import (
    Codebook,
    PartialStats,
    accumulate_partial,
    derived_seeds,
    kmeanspp_init,
    merge_partials,
    reservoir_sample,
    run_lloyd,
)
from .labeling import (
    FeatureSource,
    cluster_diagnostics,
    label_corpus,
    render_diagnostics,
    render_reports,
    shard_frame_source,
)
from .manifest import read_scp, shard_manifest, write_scp
from ._version import __version__

_EXIT_CONFIG = 2
_EXIT_IO = 3
_EXIT_NUMERIC = 4

_SCRATCH_ENV = "SSLPREP_SCRATCH"

_MODES = ("mfcc", "ark")
_COORDINATION = ("threads", "processes")


@dataclasses.dataclass
class PipelineConfig:
    """Pipeline parameters; file values first, flag overrides second."""

    manifest: str | None = None
    output_dir: str | None = None
    mode: str = "mfcc"
    k: int = 100
    budget: int = 100_000
    tol: float = 1e-4
    max_iter: int = 100
    workers: int = 1
    shards: int = 1
    seed: int = 0
    standardize: bool = False
    coordination: str = "threads"
    layer_index: int | None = None

    def validate(self) -> None:
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.coordination not in _COORDINATION:
            raise ConfigError(
                f"coordination must be one of {_COORDINATION}, got {self.coordination!r}"
            )
        for name in ("k", "budget", "max_iter", "workers", "shards"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.tol < 0:
            raise ConfigError(f"tol must be >= 0, got {self.tol}")

    def semantic_hash(self) -> str:
        """Hash of the parameters that determine output content.

        File locations are deliberately excluded so the same corpus
        processed from a different directory hashes identically.
        """
        fields = {
            "mode": self.mode,
            "k": self.k,
            "budget": self.budget,
            "tol": repr(self.tol),
            "max_iter": self.max_iter,
            "shards": self.shards,
            "seed": self.seed,
            "standardize": self.standardize,
            "layer_index": self.layer_index,
            "tool_version": __version__,
        }
        text = "\n".join(f"{key}={fields[key]}" for key in sorted(fields))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


_BOOL_VALUES = {"true": True, "yes": True, "1": True,
                "false": False, "no": False, "0": False}


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a key=value config file; '#' starts a comment line."""
    config = PipelineConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = key.strip(), value.strip()
        try:
            if key in ("manifest", "output_dir", "mode", "coordination"):
                setattr(config, key, value)
            elif key in ("k", "budget", "max_iter", "workers", "shards", "seed"):
                setattr(config, key, int(value))
            elif key == "tol":
                config.tol = float(value)
            elif key == "standardize":
                config.standardize = _BOOL_VALUES[value.lower()]
            elif key == "layer_index":
                config.layer_index = None if value.lower() == "none" else int(value)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        except (ValueError, KeyError) as err:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from err
    return config


def _resolved_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {
        "manifest": args.manifest,
        "output_dir": args.output_dir,
        "seed": args.seed,
        "workers": args.workers,
    }
    overrides["budget"] = getattr(args, "budget", None)
    overrides["k"] = getattr(args, "k", None)
    overrides["shards"] = getattr(args, "shards", None)
    overrides["mode"] = getattr(args, "mode", None)
    overrides["coordination"] = getattr(args, "coordination", None)
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    if getattr(args, "standardize", False):
        config.standardize = True
    config.validate()
    if config.manifest is None:
        raise ConfigError("no corpus manifest given (config key 'manifest' or --manifest)")
    if config.output_dir is None:
        raise ConfigError("no output directory given (config key 'output_dir' or --out-dir)")
    if not Path(config.manifest).exists():
        raise ConfigError(f"manifest does not exist: {config.manifest}")
    return config


def _scratch_dir(config: PipelineConfig) -> Path:
    base = os.environ.get(_SCRATCH_ENV)
    scratch = Path(base) if base else Path(config.output_dir) / "scratch"
    scratch.mkdir(parents=True, exist_ok=True)
    return scratch


def _feature_source(config: PipelineConfig) -> FeatureSource:
    return FeatureSource(mode=config.mode, layer_index=config.layer_index)


def _load_standardizer(path: Path) -> tuple[np.ndarray, np.ndarray]:
    table = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if table.shape[0] != 2:
        raise CodebookFormatError(f"standardizer file {path} must hold two rows")
    return table[0], table[1]


def _wrap_standardized(source, mean: np.ndarray, inv_std: np.ndarray):
    mean32 = mean.astype(np.float32)
    inv32 = inv_std.astype(np.float32)

    def stream() -> Iterable[np.ndarray]:
        for chunk in source():
            yield (np.asarray(chunk, np.float32) - mean32) * inv32

    return stream


def _process_accumulate(
    config: PipelineConfig,
    scratch: Path,
    shard_paths: Sequence[Path],
    standardizer_path: Path | None,
):
    """Accumulate one Lloyd pass by launching kmeans-worker subprocesses.

    At most config.workers run concurrently; results merge in ascending
    shard order regardless of completion order.
    """

    def accumulate(current: Codebook) -> PartialStats:
        codebook_path = scratch / "current.plkm"
        save_codebook(current, codebook_path)
        stats_paths = [scratch / f"stats.{i}.plps" for i in range(len(shard_paths))]
        pending = list(zip(shard_paths, stats_paths))
        for wave_start in range(0, len(pending), config.workers):
            wave = pending[wave_start : wave_start + config.workers]
            procs = []
            for shard_path, stats_path in wave:
                cmd = [
                    sys.executable, "-m", "sslprep.cli", "kmeans-worker",
                    "--codebook", str(codebook_path),
                    "--scp", str(shard_path),
                    "--mode", config.mode,
                    "--out", str(stats_path),
                ]
                if standardizer_path is not None:
                    cmd += ["--standardizer", str(standardizer_path)]
                procs.append(subprocess.Popen(cmd))
            for proc in procs:
                if proc.wait() != 0:
                    raise DegenerateDataError(
                        f"kmeans-worker exited with code {proc.returncode}"
                    )
        return merge_partials([load_partial_stats(p) for p in stats_paths])

    return accumulate


def cmd_train_kmeans(args: argparse.Namespace) -> int:
    config = _resolved_config(args)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scratch = _scratch_dir(config)
    source = _feature_source(config)
    entries = read_scp(config.manifest)
    shards = shard_manifest(entries, config.shards)
    sources = [shard_frame_source(source, shard.entries) for shard in shards]

    sample_seed, init_seed = derived_seeds(config.seed)
    buffer_path = scratch / "sample_buffer.plsb"
    if args.resume and buffer_path.exists():
        buffer = load_sample_buffer(buffer_path)
        print(f"reusing sampled buffer {buffer_path} ({buffer.count} frames)")
    else:
        def corpus_stream() -> Iterable[np.ndarray]:
            for shard_source in sources:
                yield from shard_source()

        buffer = reservoir_sample(corpus_stream(), config.budget, sample_seed)
        save_sample_buffer(buffer, buffer_path)
        print(f"sampled {buffer.count} of {buffer.seen} frames (budget {config.budget})")
    if buffer.count < config.k:
        raise DegenerateDataError(
            f"corpus yielded {buffer.count} frames, cannot fit k={config.k} clusters"
        )

    standardizer_path = None
    if config.standardize:
        mean = buffer.frames.mean(axis=0, dtype=np.float64)
        std = buffer.frames.std(axis=0, dtype=np.float64)
        std[std < 1e-8] = 1.0
        scaled = (buffer.frames.astype(np.float64) - mean) / std
        buffer = dataclasses.replace(buffer, frames=scaled.astype(np.float32))
        standardizer_path = scratch / "standardizer.txt"
        np.savetxt(standardizer_path, np.vstack([mean, 1.0 / std]))
        sources = [_wrap_standardized(s, mean, 1.0 / std) for s in sources]

    codebook = kmeanspp_init(
        buffer, config.k, init_seed, source.feature_kind, config.layer_index
    )
    codebook.provenance.seed = config.seed
    codebook.provenance.sample_budget = config.budget
    codebook.provenance.config_hash = config.semantic_hash()

    if config.coordination == "processes":
        shard_paths = []
        for shard in shards:
            shard_path = scratch / f"shard.{shard.worker_index}.scp"
            write_scp(shard.entries, shard_path)
            shard_paths.append(shard_path)
        accumulate = _process_accumulate(config, scratch, shard_paths, standardizer_path)
    else:
        def accumulate(current: Codebook) -> PartialStats:
            if config.workers == 1 or len(sources) == 1:
                parts = [accumulate_partial(current, s()) for s in sources]
            else:
                with ThreadPoolExecutor(max_workers=config.workers) as pool:
                    futures = [pool.submit(accumulate_partial, current, s()) for s in sources]
                    parts = [future.result() for future in futures]
            return merge_partials(parts)

    def progress(iteration: int, inertia: float, shift: float) -> None:
        print(f"iteration {iteration}: inertia={inertia!r} max_shift={shift!r}")

    codebook = run_lloyd(
        codebook, accumulate, buffer,
        tol=config.tol, max_iter=config.max_iter, on_iteration=progress,
    )
    codebook_path = out_dir / "codebook.plkm"
    save_codebook(codebook, codebook_path)
    sidecar = out_dir / "codebook.provenance.txt"
    sidecar.write_text(provenance_text(codebook), encoding="utf-8")
    print(
        f"wrote {codebook_path} (k={codebook.k}, dim={codebook.dim}, "
        f"iterations={codebook.provenance.iterations_run}, "
        f"final_inertia={codebook.provenance.final_inertia!r})"
    )
    return 0


def cmd_kmeans_worker(args: argparse.Namespace) -> int:
    codebook = load_codebook(args.codebook)
    source = FeatureSource(mode=args.mode)
    stream = shard_frame_source(source, read_scp(args.scp))
    if args.standardizer:
        mean, inv_std = _load_standardizer(Path(args.standardizer))
        stream = _wrap_standardized(stream, mean, inv_std)
    stats = accumulate_partial(codebook, stream())
    save_partial_stats(stats, args.out)
    return 0


def cmd_label(args: argparse.Namespace) -> int:
    config = _resolved_config(args)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    codebook = load_codebook(args.codebook)
    source = _feature_source(config)
    entries = read_scp(config.manifest)
    shards = shard_manifest(entries, config.shards)

    def label_shard(shard):
        ark_path, _ = ark_paths(out_dir, "labels", shard.worker_index)
        return label_corpus(shard, codebook, source, ark_path)

    if config.workers == 1 or len(shards) == 1:
        reports = [label_shard(shard) for shard in shards]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            reports = list(pool.map(label_shard, shards))

    merged_lines = []
    for shard in shards:
        _, scp_path = ark_paths(out_dir, "labels", shard.worker_index)
        merged_lines.append(scp_path.read_text(encoding="utf-8"))
    (out_dir / "labels.scp").write_text("".join(merged_lines), encoding="utf-8")

    report_text = render_reports(reports, codebook.k)
    (out_dir / "label_report.txt").write_text(report_text, encoding="utf-8")
    print(report_text, end="")
    failures = sum(len(report.failures) for report in reports)
    print(f"wrote {out_dir / 'labels.scp'} ({failures} failures)")
    return 0


def cmd_plan_batches(args: argparse.Namespace) -> int:
    lengths: dict[str, int] = {}
    try:
        text = Path(args.lengths).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read lengths file: {err}") from err
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{args.lengths}:{lineno}: expected 'utt_id length'")
        try:
            lengths[parts[0]] = int(parts[1])
        except ValueError as err:
            raise ConfigError(f"{args.lengths}:{lineno}: bad length {parts[1]!r}") from err
    plan = batching.plan_batches(lengths, args.bin_size, args.policy, args.unit)
    batching.save_batch_plan(plan, args.out)
    print(
        f"planned {plan.num_batches} batches over {len(lengths)} utterances "
        f"(bin {plan.bin_size} {plan.unit}, {len(plan.oversized)} oversized)"
    )
    return 0


def cmd_sample_masks(args: argparse.Namespace) -> int:
    spec = batching.MaskSpec(
        start_prob=args.start_prob,
        span_length=args.span_length,
        min_spans=args.min_spans,
        seed=args.seed if args.seed is not None else 0,
    )
    if args.lengths:
        items = []
        for lineno, raw in enumerate(Path(args.lengths).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigError(f"{args.lengths}:{lineno}: expected 'utt_id length'")
            items.append((parts[0], int(parts[1])))
    elif args.num_frames is not None:
        items = [("seq", args.num_frames)]
    else:
        raise ConfigError("need --lengths FILE or --num-frames T")
    lines = []
    for index, (utt_id, length) in enumerate(items):
        per_utt = dataclasses.replace(spec, seed=spec.seed + index)
        masks = batching.sample_masks(length, per_utt)
        rendered = " ".join(f"{start}:{end}" for start, end in masks.spans)
        lines.append(f"{utt_id}\t{length}\t{rendered}".rstrip())
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote masks for {len(items)} sequences to {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_score_superb(args: argparse.Namespace) -> int:
    if args.csv == "-":
        text = sys.stdin.read()
    else:
        try:
            text = Path(args.csv).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read metrics CSV: {err}") from err
    rows = superb.parse_rows(text)
    if not rows:
        raise ConfigError("metrics CSV holds no data rows")
    for index, row in enumerate(rows):
        name = row.name or f"row{index}"
        print(f"{name}\t{superb_round(superb.superb_score(row))}")
    return 0


def superb_round(score: float) -> str:
    return f"{score:.1f}"


def cmd_diagnose(args: argparse.Namespace) -> int:
    if args.codebook:
        k = load_codebook(args.codebook).k
    elif args.k is not None:
        k = args.k
    else:
        raise ConfigError("need -k or --codebook to size the histogram")
    diag = cluster_diagnostics(args.labels, k)
    print(render_diagnostics(diag), end="")
    return 0


def _add_common(parser: argparse.ArgumentParser, budget: bool = True) -> None:
    parser.add_argument("--config", help="key=value pipeline config file")
    parser.add_argument("--manifest", help="corpus scp (overrides config)")
    parser.add_argument("--out-dir", dest="output_dir", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="pipeline seed")
    parser.add_argument("--workers", type=int, default=None, help="parallel workers")
    parser.add_argument("--shards", type=int, default=None, help="shard count")
    parser.add_argument("--mode", choices=_MODES, default=None,
                        help="feature source: mfcc from wav, or precomputed ark")
    if budget:
        parser.add_argument("--budget", type=int, default=None, help="sample budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sslprep",
        description="Pseudo-label preparation: streaming features, "
                    "memory-bounded k-means, fused labeling, batch planning.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-kmeans", help="sample, seed, and train a codebook")
    _add_common(p)
    p.add_argument("-k", type=int, default=None, help="codebook size")
    p.add_argument("--standardize", action="store_true",
                   help="per-dimension standardization estimated on the sample")
    p.add_argument("--coordination", choices=_COORDINATION, default=None,
                   help="worker parallelism: threads or subprocesses")
    p.add_argument("--resume", action="store_true",
                   help="reuse the scratch sample buffer if present")
    p.set_defaults(func=cmd_train_kmeans)

    p = sub.add_parser("kmeans-worker", help="internal: accumulate one shard")
    p.add_argument("--codebook", required=True)
    p.add_argument("--scp", required=True)
    p.add_argument("--mode", choices=_MODES, default="mfcc")
    p.add_argument("--out", required=True)
    p.add_argument("--standardizer", default=None)
    p.set_defaults(func=cmd_kmeans_worker)

    p = sub.add_parser("label", help="fused feature extraction and assignment")
    _add_common(p, budget=False)
    p.add_argument("--codebook", required=True, help="trained codebook file")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("plan-batches", help="greedy payload-bounded batch planning")
    p.add_argument("--lengths", required=True, help="text file of 'utt_id length' lines")
    p.add_argument("--bin-size", type=int, default=45_000_000,
                   help="max payload units per batch")
    p.add_argument("--policy", choices=batching.ORDER_POLICIES, default="sorted")
    p.add_argument("--unit", choices=batching.PAYLOAD_UNITS, default="samples")
    p.add_argument("--out", required=True, help="plan output file")
    p.set_defaults(func=cmd_plan_batches)

    p = sub.add_parser("sample-masks", help="draw masked spans per sequence")
    p.add_argument("--lengths", help="text file of 'utt_id length' lines")
    p.add_argument("--num-frames", type=int, default=None, help="single sequence length")
    p.add_argument("--start-prob", type=float, default=0.08)
    p.add_argument("--span-length", type=int, default=10)
    p.add_argument("--min-spans", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="write masks here instead of stdout")
    p.set_defaults(func=cmd_sample_masks)

    p = sub.add_parser("score-superb", help="aggregate a ten-task benchmark row")
    p.add_argument("--csv", required=True, help="metrics CSV path, or - for stdin")
    p.set_defaults(func=cmd_score_superb)

    p = sub.add_parser("diagnose", help="label archive occupancy statistics")
    p.add_argument("--labels", required=True, help="labels .ark or .scp")
    p.add_argument("-k", type=int, default=None, help="codebook size")
    p.add_argument("--codebook", default=None, help="read k from this codebook")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return _EXIT_CONFIG
    except (WavError, ArkFormatError, CodebookFormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return _EXIT_IO
    except (DegenerateDataError, DimensionMismatchError, LabelRangeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return _EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
