"""Command-line interface: ``renyisharp <subcommand>``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .entropy import IndefiniteSpectrumError, RenyiOrder, load_spectrum_csv, matrix_renyi_entropy_exact, spectrum_renyi_entropy
from .linalg import ConvergenceError, SymmetricOperator, load_matrix

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


def _alpha(text: str):
    return RenyiOrder(None if text.lower() == "shannon" else float(text))


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def cmd_entropy(args):
    from .slq import SlqConfig, estimate_renyi_entropy

    m = load_matrix(args.matrix)
    cfg = SlqConfig(probes=args.probes, lanczos_steps=args.lanczos, seed=args.seed,
                    eig_policy=args.policy, paper_ratio=args.paper_ratio)
    est = estimate_renyi_entropy(SymmetricOperator.from_dense(m.entries), _alpha(args.alpha), cfg)
    print(json.dumps({
        "entropy": est.entropy, "sharpness": est.sharpness, "stderr": est.stderr,
        "diagnostics": est.diagnostics(),
    }, sort_keys=True))


def cmd_oracle(args):
    if args.spectrum:
        lam = load_spectrum_csv(args.spectrum)
        h, dim = spectrum_renyi_entropy(lam, _alpha(args.alpha), args.policy), lam.size
    else:
        m = load_matrix(args.matrix)
        h, dim = matrix_renyi_entropy_exact(m, _alpha(args.alpha), args.policy), m.dim
    print(json.dumps({"entropy": h, "sharpness": -h, "dim": dim}, sort_keys=True))


def cmd_train(args):
    from .harness.data import dataset_from_config
    from .harness.grid import model_spec
    from .harness.train import metrics_csv, train
    from .network import model_to_json
    from .optim import OptimConfig

    cfg = _read_json(args.config)
    train_set, test_set = dataset_from_config(cfg.get("dataset", {}))
    spec = model_spec(cfg.get("model", {}), train_set.inputs.shape[1], train_set.targets.shape[1])
    ocfg = OptimConfig.from_dict(cfg.get("optim", {}))
    res = train(spec, (train_set, test_set), ocfg, int(cfg.get("seed", 0)), int(cfg.get("epochs", 20)),
                int(cfg.get("batch_size", 32)), int(cfg.get("eval_every", 1)))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "model.json"), "w") as fh:
        fh.write(model_to_json(spec, res.params) + "\n")
    with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
        fh.write(metrics_csv(res.metrics))
    if res.failed:
        print(f"training diverged at epoch {res.diverged_at}", file=sys.stderr)
        return EXIT_NUMERIC
    last = res.metrics[-1] if res.metrics else {}
    print(json.dumps({k: last.get(k) for k in ("epoch", "train_loss", "test_loss", "train_acc", "test_acc")}))
    return EXIT_OK


def cmd_grid(args):
    from .harness.grid import GridSpec, grid_run

    grid = GridSpec.from_dict(_read_json(args.config))
    reps = grid_run(grid, args.out, workers=args.workers, resume=args.resume)
    failed = sum(not r.completed for r in reps)
    print(f"{len(reps)} runs, {failed} failed -> {args.out}")


def cmd_correlate(args):
    from .harness.correlate import correlate
    from .harness.grid import load_reports

    alphas = None
    if args.alpha_list:
        alphas = [a.strip() for chunk in args.alpha_list for a in chunk.split(",") if a.strip()]
    table = correlate(load_reports(args.inp), args.target, alphas, "b" if args.tau_b else "a", args.best_by)
    sys.stdout.write(table.to_csv())
    json_path = args.json or f"{os.path.splitext(args.inp)[0]}.correlation.json"
    with open(json_path, "w") as fh:
        fh.write(table.to_json() + "\n")
    if table.excluded:
        print(f"{table.excluded} failed runs excluded", file=sys.stderr)


def cmd_selfcheck(args):
    from .selfcheck import run_all

    results = run_all(args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="renyisharp", description="Rényi sharpness toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    policies = ["abs", "clip", "clip_to_zero", "shift"]

    e = sub.add_parser("entropy", help="SLQ estimate of the matrix Rényi entropy")
    e.add_argument("--matrix", required=True)
    e.add_argument("--alpha", required=True)
    e.add_argument("--probes", type=int, default=100)
    e.add_argument("--lanczos", type=int, default=15)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--policy", choices=policies, default="clip")
    e.add_argument("--paper-ratio", action="store_true")
    e.set_defaults(fn=cmd_entropy)

    o = sub.add_parser("oracle", help="exact entropy by dense eigendecomposition")
    src = o.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix")
    src.add_argument("--spectrum", help="CSV with one eigenvalue per line")
    o.add_argument("--alpha", required=True)
    o.add_argument("--policy", choices=policies, default="clip")
    o.set_defaults(fn=cmd_oracle)

    t = sub.add_parser("train", help="train one model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    g = sub.add_parser("grid", help="run a hyperparameter grid")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--resume", action="store_true")
    g.set_defaults(fn=cmd_grid)

    c = sub.add_parser("correlate", help="Kendall tau table from a results file")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--target", choices=["gap", "test_loss"], default="gap")
    c.add_argument("--alpha-list", nargs="*")
    c.add_argument("--tau-b", action="store_true")
    c.add_argument("--best-by", choices=["abs", "signed"], default="abs")
    c.add_argument("--json")
    c.set_defaults(fn=cmd_correlate)

    s = sub.add_parser("selfcheck", help="run the built-in property checks")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.fn(args)
    except (IndefiniteSpectrumError, ConvergenceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
