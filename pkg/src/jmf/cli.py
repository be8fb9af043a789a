"""Command-line front end: file I/O, benchmark runs, grid search, prediction."""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .evaluate import auc_score, evaluate_factors
from .model import (Algorithm, ConstraintSet, DivergenceError, Factorization,
                    Hyperparameters, MultiViewDataset, SolverConfig, StopRule,
                    init_factors, new_problem)
from .predict import (TrainedModel, predict_class, predict_left,
                      predict_right, predict_view)
from .solvers import solve
from .synthgen import SyntheticSpec, generate

DEFAULT_GRID = {
    "lambda1": [0.001, 0.01, 0.1, 1, 10, 100, 1000],
    "lambda2": [0.001, 0.01, 0.1, 1, 10, 100, 1000],
    "gamma2": [0.001, 0.01, 0.1, 1, 10, 100, 1000],
    "gamma1": [1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
}


def write_matrix(path: Path, mat: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(mat), delimiter=",", fmt="%.17g")


def read_matrix(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


class UsageError(Exception):
    pass


def _max_workers(n_tasks: int, serial: bool) -> int:
    if serial:
        return 1
    cap = os.environ.get("JMF_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


# ---------------------------------------------------------------------------
# generate

def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec(dataset_id=args.dataset, mu=args.mu, seed=args.seed)
    truth = generate(spec)
    manifest = {
        "dataset": args.dataset,
        "seed": args.seed,
        "mu": spec.noise,
        "rank": truth.rank,
        "shapes": {"W0": list(truth.w0.shape),
                   "views": [list(x.shape) for x in truth.x0]},
        "files": {"W0": "W0.csv", "views": [], "H0": [],
                  "within": [], "between": {}},
    }
    write_matrix(out / "W0.csv", truth.w0)
    for i, (x, h) in enumerate(zip(truth.x0, truth.h0), start=1):
        write_matrix(out / f"X_{i}.csv", x)
        write_matrix(out / f"H0_{i}.csv", h)
        manifest["files"]["views"].append(f"X_{i}.csv")
        manifest["files"]["H0"].append(f"H0_{i}.csv")
    for i, mats in truth.constraints.within.items():
        name = f"theta_{i + 1}.csv"
        write_matrix(out / name, mats[0])
        manifest["files"]["within"].append({"view": i, "file": name})
    for (i, j), mat in truth.constraints.between.items():
        name = f"R_{i + 1}_{j + 1}.csv"
        write_matrix(out / name, mat)
        manifest["files"]["between"][f"{i},{j}"] = name
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {args.dataset} instance to {out}")
    return 0


# ---------------------------------------------------------------------------
# solve

def _load_source(cfg: dict):
    """Returns (dataset, constraints, ground_truth_or_None)."""
    source = cfg.get("source") or {}
    if "synthetic" in source:
        syn = source["synthetic"]
        spec = SyntheticSpec(dataset_id=syn["dataset"],
                             mu=syn.get("mu"), seed=int(syn.get("seed", 0)))
        truth = generate(spec)
        constraints = (truth.constraints if cfg.get("use_constraints", True)
                       else ConstraintSet.empty())
        return truth.to_dataset(), constraints, truth
    if "files" in source:
        files = source["files"]
        base = Path(files.get("base", "."))
        views = [read_matrix(base / p) for p in files["views"]]
        within = {int(i): [read_matrix(base / p) for p in paths]
                  for i, paths in (files.get("within") or {}).items()}
        between = {}
        for key, p in (files.get("between") or {}).items():
            i, j = (int(t) for t in key.split(","))
            between[(i, j)] = read_matrix(base / p)
        return (MultiViewDataset(views),
                ConstraintSet(within=within, between=between), None)
    raise UsageError("config needs a 'source' with 'synthetic' or 'files'")


def _solver_config(d: dict, seed: int) -> SolverConfig:
    return SolverConfig(**{**d, "seed": seed})


def _run_tag(cfg: SolverConfig) -> str:
    rule = "stop1" if cfg.stop_rule is StopRule.OBJECTIVE_RATIO else "stop2"
    return f"{cfg.algorithm.value}_{rule}_tol{cfg.tolerance:g}"


def _save_model(run_dir: Path, problem, factors, config) -> None:
    write_matrix(run_dir / "W.csv", factors.W)
    h_files = []
    for i, h in enumerate(factors.H, start=1):
        name = f"H_{i}.csv"
        write_matrix(run_dir / name, h)
        h_files.append(name)
    within_files = {}
    for i, mats in problem.constraints.within.items():
        names = []
        for t, mat in enumerate(mats):
            name = f"model_theta_{i}_{t}.csv"
            write_matrix(run_dir / name, mat)
            names.append(name)
        within_files[str(i)] = names
    between_files = {}
    for (i, j), mat in problem.constraints.between.items():
        name = f"model_R_{i}_{j}.csv"
        write_matrix(run_dir / name, mat)
        between_files[f"{i},{j}"] = name
    meta = {
        "rank": problem.rank,
        "n": list(problem.n),
        "hyperparameters": asdict(problem.params),
        "W": "W.csv",
        "H": h_files,
        "within": within_files,
        "between": between_files,
        "algorithm": config.algorithm.value,
        "stop_rule": config.stop_rule.value,
        "seed": config.seed,
    }
    (run_dir / "model.json").write_text(json.dumps(meta, indent=2))


def load_model(model_dir: Path) -> TrainedModel:
    model_dir = Path(model_dir)
    meta = json.loads((model_dir / "model.json").read_text())
    w = read_matrix(model_dir / meta["W"])
    hs = [read_matrix(model_dir / p) for p in meta["H"]]
    within = {int(i): [read_matrix(model_dir / p) for p in paths]
              for i, paths in meta.get("within", {}).items()}
    between = {}
    for key, p in meta.get("between", {}).items():
        i, j = (int(t) for t in key.split(","))
        between[(i, j)] = read_matrix(model_dir / p)
    # shape-only placeholder dataset; prediction never reads training X
    dataset = MultiViewDataset([np.zeros((1, n)) for n in meta["n"]])
    with warnings.catch_warnings():
        # the 1-row placeholder always trips the overcomplete-rank warning
        warnings.simplefilter("ignore", UserWarning)
        problem = new_problem(dataset,
                              ConstraintSet(within=within, between=between),
                              Hyperparameters(**meta["hyperparameters"]))
    config = SolverConfig(algorithm=meta.get("algorithm", "PANLS"),
                          stop_rule=meta.get("stop_rule", "ObjectiveRatio"),
                          seed=int(meta.get("seed", 0)))
    return TrainedModel(problem=problem,
                        factors=Factorization(w, hs), config=config)


def _run_single(payload):
    """One (solver config, seed) benchmark run; safe for worker processes."""
    problem, truth, cfg_dict, seed = payload
    config = _solver_config(cfg_dict, seed)
    init = init_factors(problem, seed)
    try:
        factors, report = solve(problem, config, init)
    except DivergenceError:
        return {"seed": seed, "diverged": True}
    row = {
        "seed": seed,
        "diverged": False,
        "seconds": report.trace[-1].seconds,
        "iterations": report.iterations,
        "objective": report.final_objective,
        "reconstruction_error": report.reconstruction_error,
        "termination": report.termination.value,
        "trace": [(p.iteration, p.objective, p.grad_norm, p.seconds)
                  for p in report.trace],
        "W": factors.W,
        "H": factors.H,
    }
    if truth is not None:
        row["auc"] = evaluate_factors(factors, truth).auc
    return row


def cmd_solve(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    dataset, constraints, truth = _load_source(cfg)
    params = Hyperparameters(**cfg["hyperparameters"])
    problem = new_problem(dataset, constraints, params)
    seeds = ([int(s) for s in args.seeds.split(",")] if args.seeds
             else [int(s) for s in cfg.get("seeds", [0])])
    solver_cfgs = cfg.get("solvers") or []
    if not solver_cfgs or not seeds:
        raise UsageError("config needs at least one solver and one seed")
    for sc in solver_cfgs:
        trial = _solver_config(sc, 0)
        if (trial.algorithm is Algorithm.MUR
                and trial.stop_rule is StopRule.GRADIENT_RATIO):
            raise UsageError(
                "MUR runs only under the objective-ratio stop rule")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(problem, truth, sc, seed)
             for sc in solver_cfgs for seed in seeds]
    workers = _max_workers(len(tasks), args.serial)
    if workers == 1:
        results = [_run_single(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_single, tasks))

    summary = []
    any_ok = False
    pos = 0
    for sc in solver_cfgs:
        rows = results[pos:pos + len(seeds)]
        pos += len(seeds)
        tag = _run_tag(_solver_config(sc, 0))
        ok = [r for r in rows if not r["diverged"]]
        for r in rows:
            run_dir = out / "runs" / f"{tag}_seed{r['seed']}"
            run_dir.mkdir(parents=True, exist_ok=True)
            if r["diverged"]:
                (run_dir / "DIVERGED").write_text("")
                continue
            with open(run_dir / "trace.csv", "w") as fh:
                fh.write("iter,objective,grad_norm,seconds\n")
                for it, f, g, s in r["trace"]:
                    fh.write(f"{it},{f:.17g},{g:.17g},{s:.17g}\n")
            _save_model(run_dir, problem,
                        Factorization(r["W"], r["H"]),
                        _solver_config(sc, r["seed"]))
        any_ok = any_ok or bool(ok)
        entry = {
            "tag": tag,
            "algorithm": _solver_config(sc, 0).algorithm.value,
            "stop_rule": _solver_config(sc, 0).stop_rule.value,
            "tolerance": _solver_config(sc, 0).tolerance,
            "runs": len(rows),
            "diverged": len(rows) - len(ok),
            "cap_exceeded": sum(1 for r in ok
                                if r["termination"] == "MaxIters"),
        }
        if ok:
            entry["mean_final_objective"] = float(
                np.mean([r["objective"] for r in ok]))
            entry["mean_seconds"] = float(np.mean([r["seconds"] for r in ok]))
            entry["mean_iterations"] = float(
                np.mean([r["iterations"] for r in ok]))
            entry["mean_reconstruction_error"] = float(
                np.mean([r["reconstruction_error"] for r in ok]))
            if truth is not None:
                entry["mean_auc"] = float(np.mean([r["auc"] for r in ok]))
        summary.append(entry)

    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    cols = ["tag", "algorithm", "stop_rule", "tolerance", "runs", "diverged",
            "cap_exceeded", "mean_final_objective", "mean_seconds",
            "mean_iterations", "mean_reconstruction_error", "mean_auc"]
    with open(out / "summary.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for entry in summary:
            fh.write(",".join(str(entry.get(c, "")) for c in cols) + "\n")
    for entry in summary:
        print(f"{entry['tag']}: "
              f"err={entry.get('mean_reconstruction_error', 'n/a')} "
              f"auc={entry.get('mean_auc', 'n/a')} "
              f"iters={entry.get('mean_iterations', 'n/a')}")
    return 0 if any_ok else 1


# ---------------------------------------------------------------------------
# grid search

def select_best(rows: list[dict], auc_tie: float = 1e-6) -> dict:
    """Highest mean AUC wins; AUCs within ``auc_tie`` are broken by the
    smaller mean reconstruction error."""
    top_auc = max(r["mean_auc"] for r in rows)
    contenders = [r for r in rows if r["mean_auc"] >= top_auc - auc_tie]
    return min(contenders, key=lambda r: r["mean_reconstruction_error"])


def cmd_gridsearch(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    if "synthetic" not in (cfg.get("source") or {}):
        raise UsageError("grid search needs a synthetic source (AUC oracle)")
    dataset, constraints, truth = _load_source(cfg)
    grid = {**DEFAULT_GRID, **(cfg.get("grid") or {})}
    seeds = [int(s) for s in cfg.get("grid_seeds", [0, 1, 2])]
    solver = cfg.get("solver") or {"algorithm": "PANLS"}
    base = dict(cfg.get("hyperparameters") or {})
    rank = int(base.get("rank", truth.rank))

    cells = list(itertools.product(grid["lambda1"], grid["lambda2"],
                                   grid["gamma1"], grid["gamma2"]))
    if not cells:
        raise UsageError("empty parameter grid")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for l1, l2, g1, g2 in cells:
        params = Hyperparameters(rank=rank, lambda1=l1, lambda2=l2,
                                 gamma1=g1, gamma2=g2)
        problem = new_problem(dataset, constraints, params)
        aucs, errs = [], []
        for seed in seeds:
            config = _solver_config(solver, seed)
            try:
                factors, report = solve(problem, config,
                                        init_factors(problem, seed))
            except DivergenceError:
                continue
            aucs.append(evaluate_factors(factors, truth).auc)
            errs.append(report.reconstruction_error)
        rows.append({
            "lambda1": l1, "lambda2": l2, "gamma1": g1, "gamma2": g2,
            "mean_auc": float(np.mean(aucs)) if aucs else float("nan"),
            "mean_reconstruction_error":
                float(np.mean(errs)) if errs else float("nan"),
            "completed": len(aucs),
        })

    finished = [r for r in rows if r["completed"]]
    if not finished:
        print("every grid cell diverged", file=sys.stderr)
        return 1
    best = select_best(finished)
    cols = ["lambda1", "lambda2", "gamma1", "gamma2", "mean_auc",
            "mean_reconstruction_error", "completed"]
    with open(out / "grid.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) for c in cols) + "\n")
    (out / "best.json").write_text(json.dumps(best, indent=2))
    print("best cell:", json.dumps(best))
    return 0


# ---------------------------------------------------------------------------
# predict

def cmd_predict(args) -> int:
    model = load_model(Path(args.model))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    view_ids = ([int(v) for v in args.views.split(",")] if args.views
                else list(range(len(args.test))))
    if len(view_ids) != len(args.test):
        raise UsageError("--views must list one index per test file")
    test = {}
    for i, path in zip(view_ids, args.test):
        p = Path(path)
        if not p.exists():
            raise UsageError(f"missing test file {p}")
        test[i] = read_matrix(p)

    mode = args.mode
    if mode == "l-class":
        w_hat = predict_left(model, test)
        classes = predict_class(w_hat)
        write_matrix(out / "W_hat.csv", w_hat)
        np.savetxt(out / "classes.csv", classes[None, :], delimiter=",",
                   fmt="%d")
        if args.labels:
            labels = read_matrix(Path(args.labels)).ravel().astype(int)
            acc = float(np.mean(labels == classes))
            (out / "report.json").write_text(json.dumps({"accuracy": acc}))
            print(f"accuracy={acc:.4f}")
    elif mode == "l-view":
        x_hat = predict_view(model, test, target_view=args.target_view)
        write_matrix(out / f"X_hat_{args.target_view + 1}.csv", x_hat)
        if args.labels:
            truth_x = read_matrix(Path(args.labels))
            rel = float(np.linalg.norm(x_hat - truth_x)
                        / max(np.linalg.norm(truth_x), 1e-300))
            (out / "report.json").write_text(
                json.dumps({"relative_error": rel}))
            print(f"relative_error={rel:.6g}")
    elif mode == "r":
        hs = predict_right(model, test)
        for i, h in zip(sorted(test), hs):
            write_matrix(out / f"H_hat_{i + 1}.csv", h)
        if args.labels:
            labels = read_matrix(Path(args.labels)).ravel()
            scores = np.concatenate([h.ravel() for h in hs])
            auc = auc_score(scores, labels)
            (out / "report.json").write_text(json.dumps({"auc": auc}))
            print(f"auc={auc:.4f}")
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown mode {mode}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jmf",
        description="Multi-view network-regularized NMF benchmark toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic benchmark instance")
    g.add_argument("--dataset", required=True,
                   choices=["D1", "D2", "D3", "D4"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mu", type=float, default=None,
                   help="noise level (dataset default when omitted)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run solver/seed benchmark sweeps")
    s.add_argument("--config", required=True, help="JSON experiment config")
    s.add_argument("--out", required=True)
    s.add_argument("--seeds", default=None,
                   help="comma list overriding the config seeds")
    s.add_argument("--serial", action="store_true",
                   help="disable parallel runs (clean wall-clock timing)")
    s.set_defaults(func=cmd_solve)

    gs = sub.add_parser("gridsearch", help="grid-search regularization weights")
    gs.add_argument("--config", required=True)
    gs.add_argument("--out", required=True)
    gs.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("predict", help="apply a trained model to test data")
    p.add_argument("--model", required=True, help="run directory with model.json")
    p.add_argument("--mode", required=True, choices=["l-class", "l-view", "r"])
    p.add_argument("--test", nargs="+", required=True,
                   help="test matrix CSV files")
    p.add_argument("--views", default=None,
                   help="comma list of view indices for the test files")
    p.add_argument("--target-view", type=int, default=0)
    p.add_argument("--labels", default=None,
                   help="ground truth for the report (classes / matrix)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
