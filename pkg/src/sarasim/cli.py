"""Command line entry point: ``sarasim <subcommand>``.

Exit codes: 0 success, 1 usage or input error, 2 non-convergence somewhere in
the run, 3 a stability check found a blocking pair.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .datasets import DatasetError, build_pair_samples, load_ego_facebook, save_id_map, select_users, synth_ego_network
from .harness import EXIT_NONCONVERGED, EXIT_OK, EXIT_UNSTABLE, ConfigError
from .matching import Game, GameConfig, verify_s_stability, verify_two_sided_stability
from .phy import Band, RBlock
from .social import TieHyper, infer_ties

EXIT_USAGE = 1
log = logging.getLogger("sarasim")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is taken by non-convergence here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- run directories ---------------------------------------------------------

def save_game(game: Game, path: Path) -> None:
    blocks = np.array([[int(b.band), b.owner, b.index] for b in game.blocks], dtype=int).reshape(-1, 3)
    cfg = game.cfg
    np.savez(path, rate=game.rate, z=game.z, blocks=blocks, sue_ids=np.array(game.sue_ids, dtype=int),
             weights=np.array([cfg.alpha, cfg.beta, cfg.nu, cfg.kappa]),
             max_rounds=np.array(-1 if cfg.max_rounds is None else cfg.max_rounds))


def load_game(path: Path) -> Game:
    with np.load(path) as d:
        blocks = [RBlock(Band(int(b)), int(o), int(i)) for b, o, i in d["blocks"]]
        cap = int(d["max_rounds"])
        cfg = GameConfig(*map(float, d["weights"]), None if cap < 0 else cap)
        return Game(blocks, d["rate"], d["z"], d["sue_ids"].tolist(), cfg)


def save_state(state, path: Path) -> None:
    path.write_text(json.dumps({
        "current": state.current.tolist(), "previous": state.previous.tolist(),
        "ignored": state.ignored.astype(int).tolist(), "left": state.left.astype(int).tolist(),
        "round": int(state.round), "converged": bool(state.info.get("converged", True)),
    }, indent=1) + "\n")


def load_state(game: Game, path: Path):
    d = json.loads(path.read_text())
    shape = (game.n_users, game.n_sues)
    ignored = np.array(d["ignored"], dtype=bool).reshape(shape)
    left = np.array(d["left"], dtype=bool).reshape(shape)
    state = game.state(np.array(d["current"], dtype=int), np.array(d["previous"], dtype=int),
                       d["round"], ignored=ignored, left=left, converged=d["converged"])
    game.check_matching(state.current)
    return state


# -- subcommands -------------------------------------------------------------

def cmd_infer_ties(args) -> int:
    hyper = TieHyper.load(args.hyper) if args.hyper else TieHyper()
    net = synth_ego_network(0) if args.dataset == "synthetic" else load_ego_facebook(args.dataset, args.ego)
    users = select_users(net, args.users)
    samples = build_pair_samples(net, users)
    fit = infer_ties(samples, hyper, args.seed, n_users=len(users),
                     user_ids=[net.member_ids[u] for u in users])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fit.ties.to_csv(out)
    fit.params.save(out.with_suffix(".params.txt"))
    save_id_map(net, out.with_suffix(".idmap.csv"))
    print(f"wrote {out} ({len(users)} users, {len(fit.trace) - 1} iterations, "
          f"objective {fit.trace[-1]:.6g})")
    if not fit.converged:
        print("tie inference did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _scenario(args) -> harness.ScenarioConfig:
    cfg = harness.load_config(args.config)
    if getattr(args, "z", None) and args.z != "synthetic":
        cfg = replace(cfg, source="csv", z_csv=args.z)
    elif getattr(args, "z", None) == "synthetic":
        cfg = replace(cfg, source="ego", dataset_dir="synthetic", ego="synthetic")
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    return cfg


def cmd_run(args) -> int:
    cfg = _scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(cfg.to_toml())
    pool = harness.tie_pool(cfg)
    runs = []
    for seed in cfg.seeds:
        inst = harness.build_instance(cfg, seed, pool)
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(exist_ok=True)
        save_game(inst.game, seed_dir / "game.npz")
        for alg in cfg.algorithms:
            state, trace, played = harness.run_algorithm(inst, alg)
            runs.append(harness.measure(inst, alg, state, played))
            save_state(state, seed_dir / f"{alg}.json")
            if trace is not None:
                (seed_dir / "trace.jsonl").write_text(trace.to_jsonl(inst.game))
    report = harness.AggregateReport(harness.aggregate(cfg, runs), runs)
    harness.emit_csv(report, out / "metrics.csv")
    harness.emit_runs_csv(runs, out / "runs.csv")
    for row in report.rows:
        print(f"{row['algorithm']:>16}  tie {row['avg_cluster_tie']:.4f}  "
              f"rate {row['sum_rate']:.6g}  offload {row['expected_offload']:.3f}  "
              f"rounds {row['rounds']:.2f}")
    return report.exit_code()


def cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    parsed = []
    for v in values:
        try:
            parsed.append(harness.tomllib.loads(f"v = {v}")["v"])
        except harness.tomllib.TOMLDecodeError:
            parsed.append(v)
    report = harness.sweep(cfg, args.param, parsed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.emit_csv(report, out / "sweep.csv")
    harness.emit_plot_data(report, out / "plot_data.csv")
    harness.emit_runs_csv(report.runs, out / "runs.csv")
    print(f"wrote {out / 'sweep.csv'} and {out / 'plot_data.csv'} ({len(report.rows)} rows)")
    return report.exit_code()


def _trace_agrees(game: Game, state, path: Path) -> bool:
    lines = [json.loads(ln) for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        return False
    last = max(ln["round"] for ln in lines)
    logged = {(m, rb) for ln in lines if ln["round"] == last for m, rb in ln["matches"]}
    saved = {(m, str(game.blocks[r])) for m, r in enumerate(state.current) if r >= 0}
    return logged == saved


def cmd_verify(args) -> int:
    root = Path(args.trace)
    dirs = [root] if (root / "game.npz").exists() else sorted(root.glob("seed_*"))
    if not dirs:
        raise ConfigError(f"{root}: no run directories (expected game.npz or seed_*/)")
    code = EXIT_OK
    for d in dirs:
        game = load_game(d / "game.npz")
        state_file = d / f"{args.algorithm}.json"
        state = load_state(game, state_file)
        if args.algorithm in ("context_unaware", "central_unaware"):
            game = game.with_config(game.cfg.without_social())
        report = verify_two_sided_stability(game, state)
        s_ok = verify_s_stability(game, state)
        converged = bool(state.info.get("converged", True))
        print(f"{d.name}: blocking {json.dumps(report.as_dict(), sort_keys=True)} "
              f"s_stable {sum(s_ok.values())}/{len(s_ok)} converged {int(converged)}")
        trace_file = d / "trace.jsonl"
        if args.algorithm == "sara" and trace_file.exists() and not _trace_agrees(game, state, trace_file):
            print(f"{d.name}: final matching differs from the last round in {trace_file.name}")
            code = EXIT_UNSTABLE
        if not report.stable:
            code = EXIT_UNSTABLE
        elif not converged and code == EXIT_OK:
            code = EXIT_NONCONVERGED
    return code


def cmd_report(args) -> int:
    src = Path(args.input)
    runs_file = src / "runs.csv" if src.is_dir() else src
    if not runs_file.exists():
        raise ConfigError(f"{runs_file}: not found")
    cfg_file = src / "config.toml" if src.is_dir() else None
    cfg = harness.load_config(cfg_file if cfg_file and cfg_file.exists() else None, use_env=False)
    rows = harness.read_report_csv(runs_file).rows
    runs = [harness.RunMetrics(**{k: r[k] for k in ("algorithm", "seed", *harness.METRICS)}) for r in rows]
    algs = tuple(dict.fromkeys(m.algorithm for m in runs))
    cfg = replace(cfg, algorithms=algs, seeds=tuple(sorted({m.seed for m in runs})))
    report = harness.AggregateReport(harness.aggregate(cfg, runs), runs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    harness.emit_csv(report, out)
    if args.plot_data:
        harness.emit_plot_data(report, args.plot_data)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sarasim", description="Socially-aware D2D small-cell resource allocation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("infer-ties", help="learn a tie matrix from an ego network")
    s.add_argument("--dataset", required=True, help="SNAP ego-Facebook directory, or 'synthetic'")
    s.add_argument("--ego", default="synthetic", help="ego id (file prefix)")
    s.add_argument("--users", type=int, default=80, help="number of highest-degree users")
    s.add_argument("--out", required=True, help="output tie matrix CSV")
    s.add_argument("--hyper", help="key=value hyperparameter file")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_infer_ties)

    s = sub.add_parser("run", help="run every configured algorithm on each seed")
    s.add_argument("--config", help="scenario TOML (defaults to the built-in setup)")
    s.add_argument("--z", default=None, help="tie matrix CSV, or 'synthetic'")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="run this single seed instead of the config's list")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="Monte-Carlo over values of one config key")
    s.add_argument("--config", help="scenario TOML")
    s.add_argument("--param", required=True, help="config key, e.g. m_u or n3")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="re-check stability of saved matchings")
    s.add_argument("--trace", required=True, help="run directory (or one seed_* directory)")
    s.add_argument("--algorithm", default="sara", choices=harness.ALGORITHMS)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("report", help="aggregate runs.csv into a metrics CSV")
    s.add_argument("--in", dest="input", required=True, help="run directory or runs.csv")
    s.add_argument("--out", required=True, help="aggregate CSV path")
    s.add_argument("--plot-data", help="also write long-format plot data here")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ValueError, OSError, KeyError) as exc:
        print(f"sarasim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
