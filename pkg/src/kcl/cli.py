"""``kcl`` command line: extract-keywords, rank-domains, train, evaluate, gradcheck, report.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

from kcl.autodiff.gradcheck import run_suite
from kcl.config import ConfigError, ExperimentConfig, parse_kv_file, resolve
from kcl.corpus import DatasetError, MultiDomainDataset, build_vocab, load_dataset, split
from kcl.keywords.embedding import load_embedding_table
from kcl.keywords.ranking import (
    DomainRanking,
    dumps,
    extract_keywords,
    extract_random_order,
    keywords_from_json,
    keywords_to_json,
    rank_from_keywords,
)
from kcl.keywords.types import KeywordError
from kcl.model import ModelError, PrecomputedSharedExtractor, load_bundle, save_bundle
from kcl.seeding import substream
from kcl.trainer import (
    ScheduleError,
    TrainingDiverged,
    build_schedule,
    evaluate,
    init_bundle,
    train,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- config plumbing ----------------------------------------------------------


def _sweep(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("sweep values must be integers >= 1")
    return values


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--dataset")
    p.add_argument("--extractor")
    p.add_argument("--n-keywords", dest="n_keywords")
    p.add_argument("--embedding-file", dest="embedding_file")
    p.add_argument("--shared-features", dest="shared_features", help=".npz of precomputed shared features")
    p.add_argument("--seed")
    p.add_argument("--lambda", dest="lam")
    p.add_argument("--epochs")
    p.add_argument("--steps-per-epoch", dest="steps_per_epoch")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--out")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any other config field, repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kcl", description="Keyword-weight curriculum learning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-keywords", help="per-domain keyword lists with Top-N weight")
    _common(p)

    p = sub.add_parser("rank-domains", help="domain curriculum order by keyword weight")
    _common(p)
    p.add_argument("--keywords", help="keyword JSON from extract-keywords (otherwise computed inline)")
    p.add_argument("--sweep-n", dest="sweep_n", type=_sweep, help="e.g. 30,40,50,60,70")

    p = sub.add_parser("train", help="curriculum training run")
    _common(p)
    p.add_argument("--ranking", help="ranking JSON (otherwise computed inline)")
    p.add_argument("--dry-run", action="store_true", help="print config and schedule, write nothing")

    p = sub.add_parser("evaluate", help="held-out accuracy of a saved checkpoint")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint directory (default: <out>/checkpoint)")

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="accuracy comparison table across runs")
    p.add_argument("runs", nargs="+", help="run directories or report.json files")
    p.add_argument("--json", dest="json_out", help="also write the table as JSON here")
    return parser


def experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    file_values = parse_kv_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k, None) for k in
                 ("dataset", "extractor", "n_keywords", "embedding_file", "shared_features", "seed", "lam",
                  "epochs", "steps_per_epoch", "batch_size", "out")}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    return resolve(file_values, overrides)


def _dataset(cfg: ExperimentConfig) -> MultiDomainDataset:
    if not cfg.dataset:
        raise ConfigError("--dataset is required")
    return split(load_dataset(cfg.dataset), cfg.split_ratio, cfg.train.seed)


def _keyword_lists(cfg: ExperimentConfig, ds: MultiDomainDataset):
    table = load_embedding_table(cfg.embedding_file) if cfg.extractor == "embedding" else None
    return extract_keywords(ds, cfg.extractor, table)


def _warn_short(lists, n: int) -> None:
    for dom, kl in lists.items():
        if len(kl.entries) < n:
            warnings.warn(f"domain {dom!r} has only {len(kl.entries)} keywords (< N={n}); using all of them",
                          stacklevel=2)


def _ranking(cfg: ExperimentConfig, ds: MultiDomainDataset, n: int, lists=None) -> DomainRanking:
    if cfg.extractor == "random":
        return extract_random_order(ds.domains, cfg.train.seed)
    lists = lists if lists is not None else _keyword_lists(cfg, ds)
    _warn_short(lists, n)
    return rank_from_keywords(lists, n, cfg.extractor, ds.domains)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _ranking_table(r: DomainRanking) -> str:
    width = max(len("domain"), *(len(d) for d in r.order))
    lines = [f"{'rank':>4}  {'domain':<{width}}  W"]
    for k, (dom, w) in enumerate(r.entries, start=1):
        lines.append(f"{k:>4}  {dom:<{width}}  {w:.6f}")
    return "\n".join(lines)


# -- commands -----------------------------------------------------------------


def cmd_extract_keywords(cfg: ExperimentConfig) -> int:
    if cfg.extractor == "random":
        raise ConfigError("extractor 'random' has no keyword lists; use rank-domains")
    ds = _dataset(cfg)
    lists = _keyword_lists(cfg, ds)
    _warn_short(lists, cfg.n_keywords)
    path = Path(cfg.out) / "keywords.json"
    _write(path, dumps(keywords_to_json(lists, cfg.n_keywords, cfg.extractor, ds.domains)))
    print(path)
    return EXIT_OK


def cmd_rank_domains(cfg: ExperimentConfig, keywords: str | None = None, sweep: Sequence[int] | None = None) -> int:
    ds = _dataset(cfg)
    lists = None
    if cfg.extractor != "random":
        if keywords:
            lists = keywords_from_json(json.loads(Path(keywords).read_text(encoding="utf-8")))
        else:
            lists = _keyword_lists(cfg, ds)
    out = Path(cfg.out)
    for n in sweep or (cfg.n_keywords,):
        r = _ranking(cfg, ds, n, lists)
        name = f"ranking_N{n}.json" if sweep else "ranking.json"
        _write(out / name, dumps(r.to_json()))
        print(f"# extractor={r.extractor} N={r.n}")
        print(_ranking_table(r))
        print(out / name)
        if cfg.extractor == "random":
            break
    return EXIT_OK


def _shared(cfg: ExperimentConfig, feature_dim: int):
    if not cfg.shared_features:
        return None
    return PrecomputedSharedExtractor.from_file(substream(cfg.train.seed, "init", "adapter"),
                                                cfg.shared_features, feature_dim)


def cmd_train(cfg: ExperimentConfig, ranking_path: str | None = None, dry_run: bool = False) -> int:
    ds = _dataset(cfg)
    if ranking_path:
        ranking = DomainRanking.from_json(json.loads(Path(ranking_path).read_text(encoding="utf-8")))
    else:
        ranking = _ranking(cfg, ds, cfg.n_keywords)
    schedule = build_schedule(ranking, ds.domains)
    if dry_run:
        print(json.dumps({"config": cfg.to_json(), "config_hash": cfg.digest(), "schedule": schedule.to_json()},
                         indent=2, sort_keys=True))
        return EXIT_OK

    tc = cfg.train
    vocab = build_vocab(ds, tc.min_freq, tc.max_vocab)
    shared = _shared(cfg, len(tc.kernel_sizes) * tc.channels)
    bundle = init_bundle(ds, tc, vocab, shared)
    out = Path(cfg.out)
    try:
        bundle, history = train(ds, schedule, tc, bundle)
    except TrainingDiverged as exc:
        diag = out / "diverged.json"
        _write(diag, json.dumps({"error": str(exc), "step": exc.step, "domain": exc.domain,
                                 "quantity": exc.name, "value": repr(exc.value),
                                 "config_hash": cfg.digest()}, indent=2) + "\n")
        print(f"training diverged: {exc}; diagnostics in {diag}", file=sys.stderr)
        return EXIT_RUNTIME
    acc = evaluate(bundle, ds, max_len=tc.max_len)
    save_bundle(bundle, out / "checkpoint", {"config_hash": cfg.digest()})
    _write(out / "history.jsonl", history.to_jsonl())
    report = {
        "schedule": schedule.to_json(),
        "config_hash": cfg.digest(),
        "per_domain": acc.per_domain,
        "average": acc.average,
        "lambda": tc.lam,
        "extractor": cfg.extractor,
        "N": cfg.n_keywords if cfg.extractor != "random" else None,
    }
    _write(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write(out / "config.json", json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n")
    print(f"average accuracy {acc.average:.4f}; wrote {out}")
    return EXIT_OK


def cmd_evaluate(cfg: ExperimentConfig, checkpoint: str | None = None) -> int:
    ds = _dataset(cfg)
    ckpt = Path(checkpoint) if checkpoint else Path(cfg.out) / "checkpoint"
    if cfg.shared_features:
        raise ConfigError("evaluate does not support precomputed shared features")
    bundle = load_bundle(ckpt)
    if tuple(bundle.domains) != tuple(ds.domains):
        raise ModelError(f"checkpoint domains {list(bundle.domains)} differ from dataset {list(ds.domains)}")
    acc = evaluate(bundle, ds, max_len=cfg.train.max_len)
    print(json.dumps(acc.to_json(), indent=2, sort_keys=True))
    return EXIT_OK


def format_gradcheck(results) -> str:
    width = max(len("op"), *(len(r.name) for r in results))
    lines = [f"{'op':<{width}}  {'trials':>6}  {'max_rel_err':>11}  {'tol':>7}  status"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.trials:>6}  {r.max_rel_err:>11.3e}  {r.tol:>7.0e}  "
                     f"{'ok' if r.passed else 'FAIL'}")
    return "\n".join(lines)


def cmd_gradcheck(trials: int = 20, seed: int = 0, cases=None) -> int:
    results = run_suite(trials=trials, seed=seed, cases=cases)
    print(format_gradcheck(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _load_report(path: str) -> tuple[str, dict]:
    p = Path(path)
    f = p / "report.json" if p.is_dir() else p
    rec = json.loads(f.read_text(encoding="utf-8"))
    name = p.name if p.is_dir() else p.parent.name or p.stem
    return name, rec


def comparison_table(reports: Sequence[tuple[str, dict]]) -> dict:
    """Per-domain accuracy per run plus an unweighted ``Avg`` row and the best run per row."""
    domains = list(reports[0][1]["per_domain"])
    for name, rec in reports[1:]:
        if sorted(rec["per_domain"]) != sorted(domains):
            raise UsageError(f"run {name!r} covers domains {sorted(rec['per_domain'])}, expected {sorted(domains)}")
    names = [n for n, _ in reports]
    if len(set(names)) != len(names):
        names = [f"{n}#{k}" for k, n in enumerate(names)]
    rows = []
    for dom in domains + ["Avg"]:
        if dom == "Avg":
            values = [math.fsum(rec["per_domain"].values()) / len(domains) for _, rec in reports]
        else:
            values = [float(rec["per_domain"][dom]) for _, rec in reports]
        top = max(values)
        rows.append({"domain": dom, "values": dict(zip(names, values)),
                     "best": [n for n, v in zip(names, values) if v == top]})
    return {"runs": names, "rows": rows}


def format_table(table: dict) -> str:
    names = table["runs"]
    dw = max(len("domain"), *(len(r["domain"]) for r in table["rows"]))
    cw = max(8, *(len(n) for n in names))
    lines = [f"{'domain':<{dw}}  " + "  ".join(f"{n:>{cw}}" for n in names)]
    for r in table["rows"]:
        cells = []
        for n in names:
            mark = "*" if n in r["best"] and len(names) > 1 else " "
            cells.append(f"{100 * r['values'][n]:>{cw - 1}.2f}{mark}")
        lines.append(f"{r['domain']:<{dw}}  " + "  ".join(cells))
    return "\n".join(lines)


def cmd_report(runs: Sequence[str], json_out: str | None = None) -> int:
    table = comparison_table([_load_report(r) for r in runs])
    print(format_table(table))
    if json_out:
        _write(Path(json_out), json.dumps(table, indent=2) + "\n")
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.trials, args.seed)
        if args.command == "report":
            return cmd_report(args.runs, args.json_out)
        cfg = experiment_config(args)
        if args.command == "extract-keywords":
            return cmd_extract_keywords(cfg)
        if args.command == "rank-domains":
            return cmd_rank_domains(cfg, args.keywords, args.sweep_n)
        if args.command == "train":
            return cmd_train(cfg, args.ranking, args.dry_run)
        return cmd_evaluate(cfg, args.checkpoint)
    except (ConfigError, UsageError, ScheduleError) as exc:
        print(f"kcl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, KeywordError, ModelError, OSError, ValueError) as exc:
        print(f"kcl: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
