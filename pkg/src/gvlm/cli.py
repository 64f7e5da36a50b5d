"""Command-line entry points for every experiment.

Every run resolves its settings from (in increasing precedence) built-in
defaults, an optional ``key = value`` config file, and explicit flags, then
writes the fully-resolved config next to its outputs so the run can be
reproduced exactly. Output root is ``runs/`` unless the ``GV_OUT``
environment variable overrides it.

Exit codes: 0 success, 2 configuration/input problems, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import bpe, engine, multiclass, perf, training
from .errors import ConfigError, GvlmError, InputError, NumericError, TrainingDiverged
from .grouping import GroupPartition
from .model import LmConfig


def _out_dir(explicit: str | None, command: str) -> Path:
    root = Path(os.environ.get("GV_OUT", "runs"))
    out = Path(explicit) if explicit else root / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_config_file(path: str, known: set[str]) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _resolve(args: argparse.Namespace, schema: dict[str, tuple]) -> dict:
    """defaults < config file < explicit flags; values typed per schema."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config, set(schema))
    resolved = {}
    for key, (cast, default) in schema.items():
        cli_val = getattr(args, key.replace("-", "_"), None)
        if cli_val is not None:
            resolved[key] = cli_val
        elif key in file_values:
            try:
                resolved[key] = cast(file_values[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
        else:
            resolved[key] = default
    return resolved


def _write_config(outdir: Path, command: str, resolved: dict) -> None:
    from . import __version__

    lines = [f"command = {command}", f"gvlm-version = {__version__}"]
    for key in sorted(resolved):
        lines.append(f"{key} = {resolved[key]}")
    (outdir / "config.txt").write_text("\n".join(lines) + "\n")


def _group_size(text: str):
    return None if text == "auto" else int(text)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _require(resolved: dict, *keys: str) -> None:
    for key in keys:
        if resolved[key] is None:
            raise ConfigError(f"missing required setting {key!r}")


def _load_corpus_ids(resolved: dict) -> tuple[np.ndarray, str]:
    """Token stream plus the ordering it carries ('bpe' or 'raw')."""
    if resolved.get("ids"):
        path = Path(resolved["ids"])
        if not path.exists():
            raise ConfigError(f"ids file not found: {path}")
        return training.load_ids(path), "raw"
    _require(resolved, "corpus", "merges")
    corpus_path, merges_path = Path(resolved["corpus"]), Path(resolved["merges"])
    for p in (corpus_path, merges_path):
        if not p.exists():
            raise ConfigError(f"file not found: {p}")
    table = bpe.MergeTable.load(merges_path)
    ids = np.asarray(bpe.encode(corpus_path.read_bytes(), table), dtype=np.int64)
    return ids, "bpe"


def _split_val(ids: np.ndarray, val_frac: float) -> tuple[np.ndarray, np.ndarray]:
    split = int(len(ids) * (1.0 - val_frac))
    return ids[:split], ids[split:]


# -- subcommands ---------------------------------------------------------------


TOKENIZE_SCHEMA = {
    "corpus": (str, None),
    "vocab": (int, 1024),
    "min-pair-count": (int, 2),
}


def cmd_tokenize_train(args) -> int:
    resolved = _resolve(args, TOKENIZE_SCHEMA)
    _require(resolved, "corpus")
    outdir = _out_dir(args.out, "tokenize-train")
    corpus_path = Path(resolved["corpus"])
    if not corpus_path.exists():
        raise ConfigError(f"corpus file not found: {corpus_path}")
    corpus = corpus_path.read_bytes()
    table = bpe.train_bpe(corpus, resolved["vocab"], min_pair_count=resolved["min-pair-count"])
    table.save(outdir / "merges.bpe")
    ids = bpe.encode(corpus, table)
    training.save_ids(outdir / "corpus.ids", ids)
    _write_config(outdir, "tokenize-train", resolved)
    print(
        f"trained bpe: alphabet={len(table.alphabet)} merges={len(table.merges)} "
        f"v={table.v}; encoded {len(ids)} tokens -> {outdir}"
    )
    return 0


TRAIN_SCHEMA = {
    "corpus": (str, None),
    "merges": (str, None),
    "ids": (str, None),
    "head": (str, "grouped"),
    "group-size": (_group_size, None),
    "d": (int, 64),
    "layers": (int, 4),
    "heads": (int, 2),
    "seq": (int, 256),
    "batch": (int, 16),
    "steps": (int, 2000),
    "lr": (float, training.DEFAULT_LR),
    "seed": (int, 0),
    "dtype": (str, "fp32"),
    "vocab": (int, 1024),
    "val-frac": (float, 0.1),
}


def _lm_config(resolved: dict) -> LmConfig:
    return LmConfig(
        d=resolved["d"],
        n_layers=resolved["layers"],
        n_heads=resolved["heads"],
        seq_len=resolved["seq"],
        vocab=resolved["vocab"],
        head_kind=resolved["head"],
        group_size=resolved["group-size"],
        dtype=resolved["dtype"],
    )


def cmd_train(args) -> int:
    resolved = _resolve(args, TRAIN_SCHEMA)
    outdir = _out_dir(args.out, "train")
    ids, token_source = _load_corpus_ids(resolved)
    if ids.max() >= resolved["vocab"]:
        raise ConfigError(f"token id {ids.max()} exceeds vocab {resolved['vocab']}")
    config = _lm_config(resolved)
    part = config.partition()
    resolved["token-source"] = token_source
    if part is not None:  # record the resolved grouping, auto or not
        resolved["resolved-group-size"] = part.group_size
        resolved["resolved-num-groups"] = part.num_groups
    _write_config(outdir, "train", resolved)

    train_ids, val_ids = _split_val(ids, resolved["val-frac"])
    trace_path = outdir / "trace.csv"
    with open(trace_path, "w") as trace_file:
        trace_file.write("step,loss,loss_group,loss_token\n")

        def on_step(row):
            lg = "" if row.loss_group is None else f"{row.loss_group:.6f}"
            lt = "" if row.loss_token is None else f"{row.loss_token:.6f}"
            trace_file.write(f"{row.step},{row.loss:.6f},{lg},{lt}\n")
            if row.step % 50 == 0:
                trace_file.flush()

        result = training.train(
            config,
            train_ids,
            steps=resolved["steps"],
            lr=resolved["lr"],
            seed=resolved["seed"],
            batch_size=resolved["batch"],
            on_step=on_step,
        )
    training.save_checkpoint(outdir / "checkpoint.gvt", result.model, resolved["steps"], resolved["lr"])
    val_nll = training.evaluate(result.model, val_ids) if len(val_ids) > config.seq_len else float("nan")
    (outdir / "metrics.txt").write_text(
        f"final_train_loss = {result.trace[-1].loss:.6f}\nval_nll = {val_nll:.6f}\n"
    )
    print(
        f"{config.head_kind} head: step {resolved['steps'] - 1} "
        f"loss {result.trace[-1].loss:.4f}, val NLL {val_nll:.4f} -> {outdir}"
    )
    return 0


EVAL_SCHEMA = {
    "checkpoint": (str, None),
    "corpus": (str, None),
    "merges": (str, None),
    "ids": (str, None),
    "limit": (int, 0),
}


def cmd_eval(args) -> int:
    resolved = _resolve(args, EVAL_SCHEMA)
    _require(resolved, "checkpoint")
    outdir = _out_dir(args.out, "eval")
    ckpt = Path(resolved["checkpoint"])
    if not ckpt.exists():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    model, _ = training.load_checkpoint(ckpt)
    ids, _source = _load_corpus_ids(resolved)
    if resolved["limit"]:
        ids = ids[: resolved["limit"]]
    nll = training.evaluate(model, ids)
    _write_config(outdir, "eval", resolved)
    (outdir / "eval.csv").write_text(f"nll_nats_per_token,tokens\n{nll:.6f},{len(ids)}\n")
    print(f"val NLL: {nll:.4f} nats/token over {len(ids)} tokens")
    return 0


GENERATE_SCHEMA = {
    "checkpoint": (str, None),
    "merges": (str, None),
    "prompt": (str, "One morning"),
    "prompt-ids": (str, None),
    "max-new": (int, 64),
    "top-k": (int, 40),
    "temperature": (float, 1.0),
    "seed": (int, 0),
}


def cmd_generate(args) -> int:
    resolved = _resolve(args, GENERATE_SCHEMA)
    _require(resolved, "checkpoint")
    outdir = _out_dir(args.out, "generate")
    ckpt = Path(resolved["checkpoint"])
    if not ckpt.exists():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    model, _ = training.load_checkpoint(ckpt)
    table = None
    if resolved["prompt-ids"]:
        prompt_ids = _int_list(resolved["prompt-ids"])
    else:
        _require(resolved, "merges")
        table = bpe.MergeTable.load(resolved["merges"])
        prompt_ids = bpe.encode(resolved["prompt"].encode(), table)
    out_ids = training.generate(
        model,
        prompt_ids,
        max_new=resolved["max-new"],
        top_k=resolved["top-k"],
        temperature=resolved["temperature"],
        seed=resolved["seed"],
    )
    _write_config(outdir, "generate", resolved)
    if table is not None:
        text = bpe.decode(out_ids, table).decode(errors="replace")
        (outdir / "sample.txt").write_text(text)
        print(text)
    else:
        text = ",".join(str(i) for i in out_ids)
        (outdir / "sample.txt").write_text(text)
        print(text)
    return 0


BENCH_MEM_SCHEMA = {
    "b": (int, 8),
    "s": (int, 64),
    "vocab": (int, 4096),
    "d": (int, 64),
    "group-size": (_group_size, None),
    "dtype": (str, "fp32"),
    "seed": (int, 0),
}


def cmd_bench_mem(args) -> int:
    resolved = _resolve(args, BENCH_MEM_SCHEMA)
    outdir = _out_dir(args.out, "bench-mem")
    engine.set_dtype(resolved["dtype"])
    v = resolved["vocab"]
    part = (
        GroupPartition.auto(v)
        if resolved["group-size"] is None
        else GroupPartition.from_group_size(v, resolved["group-size"])
    )
    report = perf.CostReport.analytic(
        b=resolved["b"], s=resolved["s"], v=v, d=resolved["d"],
        group_size=part.group_size, num_groups=part.num_groups,
        dtype_bytes=4 if resolved["dtype"] == "fp32" else 8,
    )
    report.measured_peak_dense = perf.head_training_peak(
        "dense", resolved["b"], resolved["s"], v, resolved["d"], seed=resolved["seed"]
    )
    report.measured_peak_grouped = perf.head_training_peak(
        "grouped", resolved["b"], resolved["s"], v, resolved["d"],
        group_size=part.group_size, seed=resolved["seed"],
    )
    _write_config(outdir, "bench-mem", resolved)
    (outdir / "bench_mem.csv").write_text(
        perf.CostReport.CSV_HEADER + "\n" + report.csv_row() + "\n"
    )
    print(report.table())
    return 0


BENCH_THROUGHPUT_SCHEMA = {
    "d-list": (_int_list, [128, 256, 512]),
    "vocab": (int, 32768),
    "seq": (int, 128),
    "batch": (int, 2),
    "layers": (int, 2),
    "trials": (int, 5),
    "seed": (int, 0),
    "backend": (str, "active"),
}


def cmd_bench_throughput(args) -> int:
    resolved = _resolve(args, BENCH_THROUGHPUT_SCHEMA)
    outdir = _out_dir(args.out, "bench-throughput")
    _write_config(outdir, "bench-throughput", resolved)
    rows = ["d,v,seq,batch,head,backend,tokens_per_s"]
    backends = [engine.backend_name()] if resolved["backend"] == "active" else ["ext", "numpy"]
    for backend in backends:
        if backend != engine.backend_name():
            engine.use_backend(backend)
        for d in resolved["d-list"]:
            tps = perf.throughput_bench(
                d=d, v=resolved["vocab"], seq=resolved["seq"], batch=resolved["batch"],
                n_layers=resolved["layers"], trials=resolved["trials"], seed=resolved["seed"],
            )
            for head, value in tps.items():
                rows.append(
                    f"{d},{resolved['vocab']},{resolved['seq']},{resolved['batch']},"
                    f"{head},{backend},{value:.2f}"
                )
            print(
                f"backend={backend} d={d}: dense {tps['dense']:,.0f} tok/s, "
                f"grouped {tps['grouped']:,.0f} tok/s ({tps['grouped'] / tps['dense']:.2f}x)"
            )
    (outdir / "bench_throughput.csv").write_text("\n".join(rows) + "\n")
    print(f"environment: {perf.environment_descriptor()}")
    return 0


ABLATE_SCHEMA = {
    "corpus": (str, None),
    "merges": (str, None),
    "ids": (str, None),
    "vocab": (int, 1024),
    "group-sizes": (_int_list, [8, 16, 32, 64, 128]),
    "steps": (int, 500),
    "d": (int, 64),
    "layers": (int, 4),
    "heads": (int, 2),
    "seq": (int, 256),
    "batch": (int, 16),
    "lr": (float, training.DEFAULT_LR),
    "seed": (int, 0),
    "val-frac": (float, 0.1),
}


def cmd_ablate(args) -> int:
    resolved = _resolve(args, ABLATE_SCHEMA)
    outdir = _out_dir(args.out, "ablate")
    ids, _source = _load_corpus_ids(resolved)
    if ids.max() >= resolved["vocab"]:
        raise ConfigError(f"token id {ids.max()} exceeds vocab {resolved['vocab']}")
    _write_config(outdir, "ablate", resolved)
    train_ids, val_ids = _split_val(ids, resolved["val-frac"])
    rows = ["group_size,val_loss,peak_elements"]
    for s in resolved["group-sizes"]:
        config = LmConfig(
            d=resolved["d"], n_layers=resolved["layers"], n_heads=resolved["heads"],
            seq_len=resolved["seq"], vocab=resolved["vocab"], head_kind="grouped",
            group_size=s,
        )
        result = training.train(
            config, train_ids, steps=resolved["steps"], lr=resolved["lr"],
            seed=resolved["seed"], batch_size=resolved["batch"],
        )
        val_nll = training.evaluate(result.model, val_ids)
        peak = perf.head_training_peak(
            "grouped", resolved["batch"], resolved["seq"], resolved["vocab"],
            resolved["d"], group_size=s, seed=resolved["seed"],
        )
        rows.append(f"{s},{val_nll:.6f},{peak}")
        print(f"S={s:4d}: val NLL {val_nll:.4f}, head peak elements {peak:,}")
    (outdir / "ablate.csv").write_text("\n".join(rows) + "\n")
    return 0


CLASSIFY_SCHEMA = {
    "labels": (int, 10000),
    "per-label": (int, 5),
    "sigma": (float, 0.3),
    "epochs": (int, 4),
    "head": (str, "both"),
    "seed": (int, 0),
    "batch": (int, 64),
    "lr": (float, 1e-3),
}


def cmd_classify(args) -> int:
    resolved = _resolve(args, CLASSIFY_SCHEMA)
    outdir = _out_dir(args.out, "classify")
    _write_config(outdir, "classify", resolved)
    features, labels = multiclass.generate_dataset(
        resolved["labels"], resolved["per-label"], resolved["sigma"], seed=resolved["seed"]
    )
    train_set, val_set = multiclass.split_last_per_label(features, labels, resolved["per-label"])
    heads = ["dense", "grouped"] if resolved["head"] == "both" else [resolved["head"]]
    rows = ["epoch,head,val_accuracy,group_accuracy,train_loss"]
    for head in heads:
        _, trace = multiclass.train_classifier(
            head, train_set, val_set, resolved["labels"],
            epochs=resolved["epochs"], seed=resolved["seed"],
            batch_size=resolved["batch"], lr=resolved["lr"],
            on_epoch=lambda row, head=head: print(
                f"{head} epoch {row.epoch}: val acc {row.val_accuracy:.4f}"
                + (f", group acc {row.group_accuracy:.4f}" if row.group_accuracy is not None else "")
            ),
        )
        for row in trace:
            ga = "" if row.group_accuracy is None else f"{row.group_accuracy:.6f}"
            rows.append(f"{row.epoch},{head},{row.val_accuracy:.6f},{ga},{row.train_loss:.6f}")
    (outdir / "classify.csv").write_text("\n".join(rows) + "\n")
    return 0


# -- argument wiring ---------------------------------------------------------------


def _add_schema_flags(sub: argparse.ArgumentParser, schema: dict[str, tuple]) -> None:
    for key, (cast, _default) in schema.items():
        if cast is _group_size:
            sub.add_argument(f"--{key}", type=str, default=None)
        elif cast is _int_list:
            sub.add_argument(f"--{key}", type=_int_list, default=None)
        else:
            sub.add_argument(f"--{key}", type=cast, default=None)


COMMANDS = {
    "tokenize-train": (cmd_tokenize_train, TOKENIZE_SCHEMA),
    "train": (cmd_train, TRAIN_SCHEMA),
    "eval": (cmd_eval, EVAL_SCHEMA),
    "generate": (cmd_generate, GENERATE_SCHEMA),
    "bench-mem": (cmd_bench_mem, BENCH_MEM_SCHEMA),
    "bench-throughput": (cmd_bench_throughput, BENCH_THROUGHPUT_SCHEMA),
    "ablate": (cmd_ablate, ABLATE_SCHEMA),
    "classify": (cmd_classify, CLASSIFY_SCHEMA),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gvlm", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, (func, schema) in COMMANDS.items():
        sub = subs.add_parser(name)
        sub.add_argument("--out", default=None, help="output directory")
        sub.add_argument("--config", default=None, help="key = value config file")
        _add_schema_flags(sub, schema)
        sub.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # normalise the group-size sentinel after parsing
    if getattr(args, "group_size", None) is not None:
        args.group_size = _group_size(args.group_size)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GvlmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
