"""Command-line pipeline: synth, build-index, match, value, compare,
eval-recall, wasserstein.

Every option can also come from a JSON config file with flat keys named
after the flags (``--noise-sigma`` -> ``"noise_sigma"``); explicit flags
win over the config file, which wins over built-in defaults. Exit codes:
0 success, 2 usage/config/data error, 3 violated internal invariant.
Data goes to stdout (or ``--output``), diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import io
import json
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import embeddings, pq, search, stats, synth, valuation
from .errors import ConfigError, FormatError, GenvalError, InternalError

DEFAULTS = {
    "k": 10,
    "temperature": 1.0,
    "mode": "exact",
    "seed": 42,
    "alpha": 0.01,
    "threads": 1,
    "num_subspaces": 8,
    "codebook_size": 256,
    "kmeans_iters": 25,
    "dim": 64,
    "n_per_split": 500,
    "components": 4,
    "spread": 8.0,
    "noise_sigma": 0.3,
    "m": 500,
    "p": 2,
    "format": "binary",
    "header": False,
    "group_a": "v1",
    "group_b": "v2",
}

VALUE_FORMAT = "{:.9g}"


def _resolve(args, key):
    val = getattr(args, key, None)
    if val is not None:
        return val
    cfg = getattr(args, "_config", {})
    if key in cfg:
        return cfg[key]
    return DEFAULTS.get(key)


def _require_path(args, key, flag):
    val = _resolve(args, key)
    if val is None:
        raise ConfigError(f"missing required input: {flag}")
    return Path(val)


def _load_matrix(args, key, flag):
    path = _require_path(args, key, flag)
    if not path.exists():
        raise ConfigError(f"{flag}: no such file: {path}")
    return embeddings.load_embeddings(
        path, format=_resolve(args, "format"), skip_header=bool(_resolve(args, "header"))
    )


def _out_stream(args):
    out = _resolve(args, "output")
    if out is None or str(out) == "-":
        return nullcontext(sys.stdout)
    return open(out, "w", newline="")


def _pq_config(args) -> pq.PQConfig:
    return pq.PQConfig(
        num_subspaces=int(_resolve(args, "num_subspaces")),
        codebook_size=int(_resolve(args, "codebook_size")),
        kmeans_iters=int(_resolve(args, "kmeans_iters")),
        seed=int(_resolve(args, "seed")),
    )


def cmd_synth(args) -> int:
    spec = synth.ExperimentSpec(
        dim=int(_resolve(args, "dim")),
        n_per_split=int(_resolve(args, "n_per_split")),
        mixture_components=int(_resolve(args, "components")),
        component_spread=float(_resolve(args, "spread")),
        noise_sigma=float(_resolve(args, "noise_sigma")),
        m_generated=int(_resolve(args, "m")),
        seed=int(_resolve(args, "seed")),
    )
    out_dir = _require_path(args, "out_dir", "--out-dir")
    files = synth.make_ra2_experiment(spec, out_dir)
    print(files["manifest"].read_text(), end="")
    return 0


def cmd_build_index(args) -> int:
    train = _load_matrix(args, "train", "--train")
    cfg = _pq_config(args)
    codebook = pq.train_codebooks(train, cfg)
    codes = pq.encode(train, codebook)
    out = _require_path(args, "output", "--output")
    pq.save_index(codebook, codes, out)
    qe = pq.quantization_error(train, codebook)
    print("quantization_error=" + VALUE_FORMAT.format(qe))
    return 0


def _match_tables(args) -> tuple[search.MatchTables, int]:
    """Run matching per the mode flags; returns (tables, training count)."""
    mode = _resolve(args, "mode")
    gen = _load_matrix(args, "gen", "--gen")
    k = int(_resolve(args, "k"))
    threads = int(_resolve(args, "threads"))
    if mode == "exact":
        train = _load_matrix(args, "train", "--train")
        return search.batch_match(train, gen, k, threads=threads), train.count
    if mode == "pq":
        index_path = _resolve(args, "index")
        if index_path is None:
            raise ConfigError("pq mode needs --index pointing at a GMVI file")
        codebook, codes = pq.load_index(index_path)
        return search.batch_match((codebook, codes), gen, k, threads=threads), codes.count
    raise ConfigError(f"unknown mode {mode!r}, expected 'exact' or 'pq'")


def cmd_match(args) -> int:
    tables, _ = _match_tables(args)
    with _out_stream(args) as fh:
        search.write_match_jsonl(tables, fh)
    return 0


def _value_rows(result: valuation.ValuationResult):
    rank_of = np.empty(result.n, dtype=np.int64)
    rank_of[result.ranking] = np.arange(1, result.n + 1)
    for i in range(result.n):
        yield i, result.values[i], int(rank_of[i])


def cmd_value(args) -> int:
    temperature = float(_resolve(args, "temperature"))
    if getattr(args, "inline", False):
        tables, n = _match_tables(args)
        # route the tables through the JSON-lines text so that inline and
        # piped execution agree byte for byte
        buf = io.StringIO()
        search.write_match_jsonl(tables, buf)
        buf.seek(0)
        tables = search.read_match_jsonl(buf)
    else:
        matches = _resolve(args, "matches")
        if matches is None or str(matches) == "-":
            tables = search.read_match_jsonl(sys.stdin)
        else:
            with open(matches) as fh:
                tables = search.read_match_jsonl(fh)
        n_arg = _resolve(args, "n")
        if n_arg is not None:
            n = int(n_arg)
        elif _resolve(args, "train") is not None:
            n = _load_matrix(args, "train", "--train").count
        else:
            raise ConfigError("need --n or --train to size the value vector")
    result = valuation.aggregate_values(tables, n, temperature)
    with _out_stream(args) as fh:
        fh.write("train_index,value,rank\n")
        for i, value, rank in _value_rows(result):
            fh.write(f"{i},{VALUE_FORMAT.format(value)},{rank}\n")
    summary_path = _resolve(args, "summary")
    if summary_path is not None:
        summary = {
            "n": result.n,
            "m": result.m,
            "k": result.k,
            "temperature": temperature,
            "sum_values": float(result.values.sum()),
            "top_indices": [int(i) for i in result.ranking[:10]],
        }
        Path(summary_path).write_text(json.dumps(summary, sort_keys=True) + "\n")
    return 0


def _read_value_csv(path) -> dict[int, float]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such file: {path}")
    out: dict[int, float] = {}
    lines = path.read_text().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        if lineno == 1 and line.startswith("train_index"):
            continue
        fields = line.split(",")
        if len(fields) < 2:
            raise FormatError(f"{path}: line {lineno}: expected train_index,value[,rank]")
        try:
            idx = int(fields[0])
            val = float(fields[1])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: unparseable field") from None
        if idx in out:
            raise FormatError(f"{path}: line {lineno}: duplicate train_index {idx}")
        out[idx] = val
    if not out:
        raise FormatError(f"{path}: no value rows")
    return out


def _compare_groups(args) -> tuple[list[float], list[float], str, str]:
    values_a = _resolve(args, "values_a")
    values_b = _resolve(args, "values_b")
    values = _resolve(args, "values")
    partition = _resolve(args, "partition")
    if values_a is not None and values_b is not None:
        a = list(_read_value_csv(values_a).values())
        b = list(_read_value_csv(values_b).values())
        return a, b, "a", "b"
    if values is not None and partition is not None:
        table = _read_value_csv(values)
        try:
            groups = json.loads(Path(partition).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read partition file: {exc}") from None
        name_a = str(_resolve(args, "group_a"))
        name_b = str(_resolve(args, "group_b"))
        for name in (name_a, name_b):
            if name not in groups:
                raise ConfigError(f"partition file has no group {name!r}")

        def pick(name):
            vals = []
            for idx in groups[name]:
                if int(idx) not in table:
                    raise ConfigError(
                        f"group {name!r} references train_index {idx} "
                        "missing from the value CSV"
                    )
                vals.append(table[int(idx)])
            return vals

        return pick(name_a), pick(name_b), name_a, name_b
    raise ConfigError(
        "compare needs either --values-a/--values-b or --values/--partition"
    )


def cmd_compare(args) -> int:
    a, b, name_a, name_b = _compare_groups(args)
    alpha = float(_resolve(args, "alpha"))
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    res = stats.welch_t_test(a, b, alternative="greater")
    for name, mean, var, count in (
        (name_a, res.mean_a, res.var_a, res.n_a),
        (name_b, res.mean_b, res.var_b, res.n_b),
    ):
        print(f"group {name}: n={count} mean={mean:.9g} variance={var:.9g}")
    print(
        f"t={res.t_statistic:.9g} df={res.degrees_of_freedom:.9g} "
        f"p={res.p_one_sided:.9g}"
    )
    if res.p_one_sided < alpha:
        print(f"REJECT H0 at alpha={alpha:g}")
    else:
        print(f"FAIL TO REJECT at alpha={alpha:g}")
    return 0


def cmd_eval_recall(args) -> int:
    train = _load_matrix(args, "train", "--train")
    gen = _load_matrix(args, "gen", "--gen")
    index_path = _resolve(args, "index")
    if index_path is None:
        raise ConfigError("eval-recall needs --index pointing at a GMVI file")
    codebook, codes = pq.load_index(index_path)
    threads = int(_resolve(args, "threads"))
    ks = sorted({1, 10, int(_resolve(args, "k"))})
    for k in ks:
        exact = search.batch_match(train, gen, k, threads=threads)
        approx = search.batch_match((codebook, codes), gen, k, threads=threads)
        print(f"recall@{k}={search.recall_at_k(approx, exact):.6f}")
    return 0


def cmd_wasserstein(args) -> int:
    source = _load_matrix(args, "source", "--source")
    target = _load_matrix(args, "target", "--target")
    p = int(_resolve(args, "p"))
    res = stats.exact_wasserstein(source, target, p=p)
    assignment_path = _resolve(args, "assignment")
    if assignment_path is not None:
        Path(assignment_path).write_text(
            json.dumps({"p": p, "assignment": [int(j) for j in res.assignment]}) + "\n"
        )
    print("cost=" + VALUE_FORMAT.format(res.cost))
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file with flat flag-named keys")
    p.add_argument("--seed", type=int)


def _add_embedding_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["binary", "csv"], help="embedding file format")
    p.add_argument("--header", action="store_true", default=None,
                   help="CSV inputs carry a header row to skip")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genval",
        description="Value training data against a fixed generated set by similarity matching.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded two-split experiment")
    _add_common(p)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--dim", type=int)
    p.add_argument("--n-per-split", dest="n_per_split", type=int)
    p.add_argument("--components", type=int)
    p.add_argument("--spread", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--m", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-index", help="train codebooks and write a GMVI index")
    _add_common(p)
    _add_embedding_input_flags(p)
    p.add_argument("--train")
    p.add_argument("--output")
    p.add_argument("--num-subspaces", dest="num_subspaces", type=int)
    p.add_argument("--codebook-size", dest="codebook_size", type=int)
    p.add_argument("--kmeans-iters", dest="kmeans_iters", type=int)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("match", help="emit top-k match tables as JSON lines")
    _add_common(p)
    _add_embedding_input_flags(p)
    p.add_argument("--mode", choices=["exact", "pq"])
    p.add_argument("--train")
    p.add_argument("--index")
    p.add_argument("--gen")
    p.add_argument("--k", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("value", help="aggregate match tables into per-point values")
    _add_common(p)
    _add_embedding_input_flags(p)
    p.add_argument("--matches", help="JSON-lines match file, '-' for stdin")
    p.add_argument("--inline", action="store_true", default=None,
                   help="run matching here instead of reading --matches")
    p.add_argument("--n", type=int, help="training count (when reading --matches)")
    p.add_argument("--mode", choices=["exact", "pq"])
    p.add_argument("--train")
    p.add_argument("--index")
    p.add_argument("--gen")
    p.add_argument("--k", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--output")
    p.add_argument("--summary", help="write a JSON run summary here")
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("compare", help="Welch-test two value groups")
    _add_common(p)
    p.add_argument("--values-a", dest="values_a")
    p.add_argument("--values-b", dest="values_b")
    p.add_argument("--values")
    p.add_argument("--partition")
    p.add_argument("--group-a", dest="group_a")
    p.add_argument("--group-b", dest="group_b")
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval-recall", help="ADC recall against the exact scan")
    _add_common(p)
    _add_embedding_input_flags(p)
    p.add_argument("--train")
    p.add_argument("--gen")
    p.add_argument("--index")
    p.add_argument("--k", type=int)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval_recall)

    p = sub.add_parser("wasserstein", help="exact transport cost between two sets")
    _add_common(p)
    _add_embedding_input_flags(p)
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--p", type=int, choices=[1, 2])
    p.add_argument("--assignment", help="write the optimal pairing here as JSON")
    p.set_defaults(func=cmd_wasserstein)

    return parser


def _load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a flat JSON object")
    return raw


def main(argv=None) -> int:
    try:
        parser = build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        args._config = _load_config(args.config) if args.config else {}
        return args.func(args)
    except GenvalError as exc:
        print(f"genval: error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"genval: internal error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
