"""Command-line entry point: ``tecmrl <command> [options]``.

Exit codes: 0 success, 2 validation error, 3 data error, 4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .assess import SelectionConfig, assess, classify_episodes, pick_winner, select_checkpoint
from .config import KINDS, MODELS, RunConfig, make_manifest, manifest_matches, write_manifest
from .errors import DataError, TecmError, ValidationError
from .learners import Checkpoint, train
from .mdp import RewardSpec, build_transitions
from .outcomes import outcome_report
from .scoring import builtin_config, load_score_config
from .trajectory import Schema, build_cohort, ingest_csv, read_cohort, split, synth_cohort, write_cohort

log = logging.getLogger("tecmrl")

COHORT_FILE = "cohort.jsonl"
SPLIT_FILE = "split.json"
TABLE_ROWS = ("OG", "OB", "WG", "WB", "sigma", "mu", "BE")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return repr(float(v)) if isinstance(v, float) else str(v)


def _skip(path: Path, manifest: dict, force: bool) -> bool:
    if not force and manifest_matches(path, manifest):
        log.info("outputs up to date (%s); use --force to rerun", path)
        return True
    return False


def _cohort_path(args, cfg: RunConfig, out: Path) -> Path:
    path = Path(getattr(args, "cohort", None) or cfg.cohort or out / COHORT_FILE)
    if not path.exists():
        raise DataError(f"cohort file not found: {path}")
    return path


def _score_config(cfg: RunConfig, kind: str):
    name = cfg.score_configs.get(kind)
    return load_score_config(name) if name else None


def _split(cfg: RunConfig, cohort):
    return split(cohort, cfg.train_frac, cfg.seed)


# generate / ingest

def cmd_generate(args, cfg: RunConfig) -> int:
    if args.patients is not None:
        cfg.synth = replace(cfg.synth, n_patients=args.patients)
    cfg.validate()
    out = cfg.out_path()
    manifest_path = out / "generate.manifest.json"
    manifest = make_manifest("generate", cfg, {})
    if _skip(manifest_path, manifest, args.force):
        return 0
    out.mkdir(parents=True, exist_ok=True)
    cohort = synth_cohort(cfg.synth, cfg.seed)
    write_cohort(cohort, out / COHORT_FILE)
    write_manifest(manifest_path, manifest | {"n_episodes": len(cohort)})
    print(f"wrote {len(cohort)} episodes to {out / COHORT_FILE}")
    return 0


def cmd_ingest(args, cfg: RunConfig) -> int:
    out = cfg.out_path()
    manifest_path = out / "ingest.manifest.json"
    manifest = make_manifest("ingest", cfg, {"csv": args.csv, "schema": args.schema})
    if _skip(manifest_path, manifest, args.force):
        return 0
    report = ingest_csv(args.csv, Schema.load(args.schema))
    cohort, counts = build_cohort(report.records, cfg.max_len)
    if not cohort.episodes:
        raise DataError("no episodes survived the exclusion rules")
    out.mkdir(parents=True, exist_ok=True)
    write_cohort(cohort, out / COHORT_FILE)
    summary = {
        "n_records": len(report.records),
        "n_malformed": report.n_malformed,
        "malformed": [{"line": line, "error": msg} for line, msg in report.errors],
        "exclusions": dict(sorted(counts.items())),
        "n_episodes": len(cohort),
    }
    (out / "ingest_report.json").write_text(json.dumps(summary, indent=2))
    write_manifest(manifest_path, manifest | {"n_episodes": len(cohort)})
    print(f"ingested {len(cohort)} episodes ({report.n_malformed} malformed rows)")
    return 0


# train

def _train_one(model: str, cfg_dict: dict, cohort_path: str, ckpt_root: str, force: bool) -> str:
    cfg = RunConfig.from_dict(cfg_dict)
    kind, algo = model.split("-", 1)
    cohort_file = Path(cohort_path)
    train_set, _ = _split(cfg, read_cohort(cohort_file))
    score_cfg = _score_config(cfg, kind)
    mode = "tabular" if algo == "ql" else "vector"
    ts = build_transitions(train_set, mode, kind, RewardSpec(kind, cfg.death_penalty, cfg.hyper.gamma), score_cfg)
    model_dir = Path(ckpt_root) / model
    manifest = make_manifest("train", cfg, {"cohort": cohort_file}, {
        "model": model, "hyper": cfg.hyper.to_dict(), "seed": cfg.hyper.seed, "dataset_sha256": ts.digest(),
        "n_transitions": len(ts),
    })
    if _skip(model_dir / "manifest.json", manifest, force):
        return model
    if model_dir.exists():
        for old in model_dir.glob("epoch_*.json"):
            old.unlink()
    model_dir.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        run = train(ts, algo, cfg.hyper, kind, score_cfg)
    for ck in run.checkpoints:
        ck.save(model_dir / f"epoch_{ck.epoch:04d}.json")
    write_manifest(model_dir / "manifest.json", manifest | {
        "epochs": [ck.epoch for ck in run.checkpoints], "targets_sha256": run.targets_digest,
        "final_loss": run.losses[-1] if run.losses else None,
    })
    return model


def cmd_train(args, cfg: RunConfig) -> int:
    if args.algo or args.reward:
        kinds = [args.reward] if args.reward else list(KINDS)
        algos = [args.algo] if args.algo else sorted({m.split("-", 1)[1] for m in MODELS})
        if args.algo == "ql" and args.reward == "cxsofa":
            raise ValidationError("tabular Q-learning cannot use the cxsofa reward; its states are discrete SOFA totals")
        cfg.models = [f"{k}-{a}" for k in kinds for a in algos if f"{k}-{a}" in MODELS]
    if args.epochs is not None:
        cfg.hyper = replace(cfg.hyper, epochs=args.epochs, checkpoint_every=min(cfg.hyper.checkpoint_every, args.epochs))
    if args.jobs is not None:
        cfg.jobs = args.jobs
    cfg.validate()
    out = cfg.out_path()
    cohort_path = _cohort_path(args, cfg, out)
    cohort = read_cohort(cohort_path)
    train_set, val_set = _split(cfg, cohort)
    out.mkdir(parents=True, exist_ok=True)
    (out / SPLIT_FILE).write_text(json.dumps({
        "seed": cfg.seed, "train_frac": cfg.train_frac,
        "train": train_set.patient_ids(), "validation": val_set.patient_ids(),
    }, indent=2))
    ckpt_root = out / "checkpoints"
    jobs = [(m, cfg.to_dict(), str(cohort_path), str(ckpt_root), args.force) for m in cfg.models]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            done = list(pool.map(_train_one, *zip(*jobs)))
    else:
        done = [_train_one(*j) for j in jobs]
    write_manifest(out / "train.manifest.json", make_manifest("train", cfg, {"cohort": cohort_path}, {"models": done}))
    print(f"trained {len(done)} model(s) into {ckpt_root}")
    return 0


# assess

def _model_dirs(root: Path) -> dict[str, Path]:
    if not root.is_dir():
        raise DataError(f"checkpoint directory not found: {root}")
    if any(root.glob("epoch_*.json")):
        return {root.name: root}
    dirs = {d.name: d for d in sorted(root.iterdir()) if d.is_dir()}
    dirs = {k: v for k, v in dirs.items() if any(v.glob("epoch_*.json"))}
    if not dirs:
        raise DataError(f"no checkpoints found under {root}")
    # keep the canonical model order where possible
    order = {m: i for i, m in enumerate(MODELS)}
    return dict(sorted(dirs.items(), key=lambda kv: (order.get(kv[0], len(order)), kv[0])))


def _load_checkpoints(d: Path) -> list[Checkpoint]:
    cks = [Checkpoint.load(p) for p in d.glob("epoch_*.json")]
    return sorted(cks, key=lambda c: c.epoch)


def _eval_cohort(args, cfg: RunConfig, out: Path):
    """Explicit ``--cohort`` is used whole; otherwise the validation side of the training split."""
    if getattr(args, "cohort", None):
        return read_cohort(_cohort_path(args, cfg, out))
    cohort = read_cohort(_cohort_path(args, cfg, out))
    return _split(cfg, cohort)[1]


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_assess(args, cfg: RunConfig) -> int:
    sel_cfg = SelectionConfig(
        tau=args.tau if args.tau is not None else cfg.selection.tau,
        eta=args.eta if args.eta is not None else cfg.selection.eta,
        preference=args.preference or cfg.selection.preference,
        tau_pool=cfg.selection.tau_pool,
    )
    cfg.selection = sel_cfg
    out = cfg.out_path()
    models = _model_dirs(Path(args.checkpoint_dir) if args.checkpoint_dir else out / "checkpoints")
    cohort = _eval_cohort(args, cfg, out)
    adir = out / "assess"
    adir.mkdir(parents=True, exist_ok=True)
    partitions = {}
    selected, table = {}, {}
    for model, d in models.items():
        cks = _load_checkpoints(d)
        kind = cks[0].kind
        if kind not in partitions:
            partitions[kind] = classify_episodes(cohort, kind, sel_cfg.tau, _score_config(cfg, kind), cfg.death_penalty)
        part = partitions[kind]
        if not part.good or not part.bad:
            log.warning("%s: partition at tau=%s has an empty side (%d good, %d bad)",
                        model, sel_cfg.tau, len(part.good), len(part.bad))
        sel = select_checkpoint(cks, part, sel_cfg)
        selected[model] = sel
        rep = sel.best_report
        table[model] = (rep.tecm.og, rep.tecm.ob, rep.tecm.wg, rep.tecm.wb, rep.sigma, rep.mu, sel.best.epoch)
        mdir = adir / model
        mdir.mkdir(exist_ok=True)
        (mdir / "series.json").write_text(json.dumps({
            "model": model, "tau": sel_cfg.tau, "eta": sel_cfg.eta, "preference": sel_cfg.preference,
            "selected_epoch": sel.best.epoch, "stopped_early": sel.stopped_early,
            "reports": [r.to_dict() for r in sel.reports],
        }, indent=2))
        _write_rows(mdir / "metric_vs_epoch.csv", ("epoch", "OG", "OB", "WG", "WB", "sigma", "mu", "o_gap", "w_gap"),
                    [[r.epoch, *map(_fmt, (r.tecm.og, r.tecm.ob, r.tecm.wg, r.tecm.wb, r.sigma, r.mu,
                                            r.o_gap, r.w_gap))] for r in sel.reports])
    names = list(table)
    _write_rows(adir / "tecm_table.csv", ("metric", *names),
                [[row, *(_fmt(table[m][i]) for m in names)] for i, row in enumerate(TABLE_ROWS)])
    # one metric-vs-tau file per tau in the sweep, at each model's selected checkpoint
    for tau in cfg.tau_sweep:
        rows = []
        for model, sel in selected.items():
            kind = sel.best.kind
            part = classify_episodes(cohort, kind, tau, _score_config(cfg, kind), cfg.death_penalty)
            r = assess(part, sel.best, cfg.selection.tau_pool, model, sel.best.epoch)
            rows.append([model, r.epoch, *map(_fmt, (r.tecm.og, r.tecm.ob, r.tecm.wg, r.tecm.wb, r.sigma, r.mu))])
        _write_rows(adir / f"metric_vs_tau_{tau:g}.csv", ("model", "epoch", "OG", "OB", "WG", "WB", "sigma", "mu"), rows)
    winner = pick_winner({m: s.best_report for m, s in selected.items()}, sel_cfg.preference)
    (adir / "selection.json").write_text(json.dumps({
        "tau": sel_cfg.tau, "eta": sel_cfg.eta, "preference": sel_cfg.preference, "winner": winner,
        "selected": {m: {"epoch": s.best.epoch, "path": str(models[m] / f"epoch_{s.best.epoch:04d}.json"),
                         "stopped_early": s.stopped_early} for m, s in selected.items()},
    }, indent=2))
    print(f"assessed {len(selected)} model(s); winner {winner}")
    return 0


# outcomes / report

def _selected_models(out: Path) -> dict[str, Checkpoint]:
    path = out / "assess" / "selection.json"
    if not path.exists():
        raise DataError(f"{path} not found; run 'tecmrl assess' first")
    sel = json.loads(path.read_text())
    return {m: Checkpoint.load(v["path"]) for m, v in sel["selected"].items()}


def cmd_outcomes(args, cfg: RunConfig) -> int:
    out = cfg.out_path()
    models = _selected_models(out)
    cohort = _eval_cohort(args, cfg, out)
    taus = [args.tau] if args.tau is not None else cfg.tau_sweep
    odir = out / "outcomes"
    odir.mkdir(parents=True, exist_ok=True)
    for tau in taus:
        table = outcome_report(cohort, models, tau)
        table.write_csv(odir / f"outcomes_tau_{tau:g}.csv")
        table.write_json(odir / f"outcomes_tau_{tau:g}.json")
    print(f"wrote {len(taus)} outcome table(s) to {odir}")
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    out = cfg.out_path()
    sel_path = out / "assess" / "selection.json"
    if not sel_path.exists():
        raise DataError(f"{sel_path} not found; run 'tecmrl assess' first")
    selection = json.loads(sel_path.read_text())
    lines = ["# Run summary", "", f"Winner: {selection['winner']} (tau={selection['tau']}, eta={selection['eta']})", ""]
    table = out / "assess" / "tecm_table.csv"
    with open(table) as fh:
        rows = list(csv.reader(fh))
    lines += ["| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
    lines += ["| " + " | ".join(r) + " |" for r in rows[1:]]
    outcomes = {}
    for p in sorted((out / "outcomes").glob("outcomes_tau_*.json")):
        d = json.loads(p.read_text())
        outcomes[str(d["tau"])] = d["rows"]
        lines += ["", f"## Outcomes at tau={d['tau']}", "", "| model | n | mortality | stay | p_mortality |", "|---|---|---|---|---|"]
        for r in d["rows"]:
            lines.append(f"| {r['label']} | {r['n']} | {_fmt(r['mortality'])} | {_fmt(r['stay'])} | {_fmt(r['p_mortality'])} |")
    (out / "report.md").write_text("\n".join(lines) + "\n")
    (out / "report.json").write_text(json.dumps({"selection": selection, "outcomes": outcomes}, indent=2))
    print(out / "report.md")
    return 0


def cmd_defaults(args, cfg: RunConfig) -> int:
    if args.score_config:
        print(json.dumps(builtin_config(args.score_config).to_dict(), indent=2))
    else:
        print(RunConfig().dumps())
    return 0


# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tecmrl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, cohort=False):
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        sp.add_argument("--config", help="run configuration JSON (see 'tecmrl defaults')")
        sp.add_argument("--out", help="output directory (relative paths honour $TECMRL_OUTPUT_ROOT)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--force", action="store_true", help="rerun even if the manifest is unchanged")
        if cohort:
            sp.add_argument("--cohort", help="cohort JSONL file")
        return sp

    g = common(sub.add_parser("generate", help="write a synthetic cohort"))
    g.add_argument("--patients", type=int)
    g.set_defaults(func=cmd_generate)

    i = common(sub.add_parser("ingest", help="build a cohort from a CSV export"))
    i.add_argument("--csv", required=True)
    i.add_argument("--schema", required=True)
    i.set_defaults(func=cmd_ingest)

    t = common(sub.add_parser("train", help="train models and save checkpoints"), cohort=True)
    t.add_argument("--algo", choices=("ql", "dqn", "ddqn", "bcq", "cql"))
    t.add_argument("--reward", choices=KINDS)
    t.add_argument("--epochs", type=int)
    t.add_argument("--jobs", type=int, help="train models in N parallel processes")
    t.set_defaults(func=cmd_train)

    a = common(sub.add_parser("assess", help="TECM assessment and checkpoint selection"), cohort=True)
    a.add_argument("--checkpoint-dir")
    a.add_argument("--tau", type=float)
    a.add_argument("--eta", type=int)
    a.add_argument("--pref", "--preference", dest="preference", choices=("aggressive", "conservative"))
    a.set_defaults(func=cmd_assess)

    o = common(sub.add_parser("outcomes", help="follower outcome tables"), cohort=True)
    o.add_argument("--tau", type=float, help="single tau instead of the configured sweep")
    o.set_defaults(func=cmd_outcomes)

    r = common(sub.add_parser("report", help="summarise assessment and outcomes"))
    r.set_defaults(func=cmd_report)

    d = sub.add_parser("defaults", help="print the default run configuration")
    d.add_argument("--score-config", help="print a built-in score config instead (e.g. cxsofa-paper)")
    d.set_defaults(func=cmd_defaults, config=None, out=None, seed=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.out:
            cfg.output_dir = args.out
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.hyper = replace(cfg.hyper, seed=args.seed)
        cfg.validate()
        return args.func(args, cfg)
    except TecmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
