"""Command-line pipeline: gen-data, train, eval, rate, report, stats.

Every command accepts ``--config FILE`` with ``key=value`` lines; keys are
the long option names (dashes or underscores).  Explicit flags override
the file.  Seeds are mandatory wherever randomness is involved.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from unplugged import __version__, bundle
from unplugged.agents import (KINDS, DependencyError, MCTSConfig, ScriptedBot, TrainConfig,
                              agent_from_checkpoint, default_config, make_learner, read_checkpoint,
                              resume_learner)
from unplugged.agents.emphatic import LaneDiscontinuity
from unplugged.agents.vtrace import BehaviorMismatch
from unplugged.env import MAX_LEVEL, N_MAPS
from unplugged.evaluation import (EloRatings, SchemaError, WinRateMatrix, binomial_ci, elo_fit, heatmap_svg,
                                  play_matches, read_ratings_csv, report_markdown, report_table,
                                  robustness, schedule, score, win_rate_matrix)
from unplugged.replay import DatasetFormatError, ReplayDataset, SkillSampler, generate_dataset

OUT_ENV = "UNPLUGGED_OUT"
EXIT_USAGE, EXIT_RUNTIME = 1, 2

log = logging.getLogger("unplugged")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def read_config_file(path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ------------------------------------------------------------------ parser

def build_parser() -> _Parser:
    p = _Parser(prog="unplugged", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="play scripted games and write a replay dataset")
    g.add_argument("--games", type=int, default=1000)
    g.add_argument("--seed", type=int)
    g.add_argument("--skills", default="uniform",
                   help="level sampler: uniform, matched:<gap>, fixed:<a>,<b>, weights:w0,..,w5[;gap]")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", help="dataset path (default $%s/dataset.duel)" % OUT_ENV)
    g.add_argument("--bin-width", type=float, default=250.0)

    t = sub.add_parser("train", help="train one agent kind to its frame budget")
    t.add_argument("kind", choices=KINDS)
    t.add_argument("--data", help="dataset path")
    t.add_argument("--init-from", help="prerequisite checkpoint (bc for ft-bc, bc-value for oac/e-oac)")
    t.add_argument("--resume", help="continue this checkpoint bit-exactly")
    t.add_argument("--out", help="checkpoint path (default $%s/<kind>.ckpt)" % OUT_ENV)
    t.add_argument("--log", help="training-log CSV (default <out>.log.csv)")
    t.add_argument("--checkpoint-every", type=int, default=1000, help="steps between checkpoint writes")
    t.add_argument("--stop-at-step", type=int, help="stop early at this step (resume later)")
    for f in dataclasses.fields(TrainConfig):
        if f.name == "kind":
            continue
        kind = type(f.default)
        t.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                       type=_bool if kind is bool else kind)

    e = sub.add_parser("eval", help="play agents against each other and write a win-rate matrix")
    e.add_argument("--agents", nargs="+", help="botN or name=checkpoint[:mcts]")
    e.add_argument("--opponents", nargs="+",
                   help="evaluate each agent only against these (single-column validation output)")
    e.add_argument("--games", type=int, default=200, help="games per pair")
    e.add_argument("--seed", type=int)
    e.add_argument("--maps", default=",".join(str(m) for m in range(N_MAPS)))
    e.add_argument("--temperature", type=float, default=0.8)
    e.add_argument("--mcts-simulations", type=int, default=MCTSConfig.n_simulations)
    e.add_argument("--mcts-samples", type=int, default=MCTSConfig.n_sampled_actions)
    e.add_argument("--time-budget", type=float, help="seconds per decision before forfeit")
    e.add_argument("--out", help="CSV path (default $%s/matrix.csv)" % OUT_ENV)

    r = sub.add_parser("rate", help="fit Elo and robustness from a matrix")
    r.add_argument("--matrix")
    r.add_argument("--anchor", default=f"bot{MAX_LEVEL}=1000", help="name=rating[,name=rating]")
    r.add_argument("--agents", help="comma list the matrix must contain exactly")
    r.add_argument("--reference", help="comma list for robustness (default: all agents)")
    r.add_argument("--out", help="CSV path (default $%s/ratings.csv)" % OUT_ENV)

    rp = sub.add_parser("report", help="render the league table and heatmap")
    rp.add_argument("--matrix")
    rp.add_argument("--ratings")
    rp.add_argument("--strongest-bot", default=f"bot{MAX_LEVEL}")
    rp.add_argument("--out-dir", help="default $%s" % OUT_ENV)
    rp.add_argument("--force", action="store_true", help="accept inputs from different code versions")

    s = sub.add_parser("stats", help="summarize a dataset")
    s.add_argument("--data")
    s.add_argument("--bin-width", type=float, default=250.0)

    p.commands = {"gen-data": g, "train": t, "eval": e, "rate": r, "report": rp, "stats": s}
    for sp in p.commands.values():
        sp.add_argument("--config", help="key=value file; flags override it")
    return p


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a command is required")
    if getattr(args, "config", None):
        values = read_config_file(args.config)
        sub = parser.commands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {unknown}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"{args.command}: --{n.replace('_', '-')} is required")


# ---------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    _require(args, "seed")
    out = Path(args.out or out_dir() / "dataset.duel")
    out.parent.mkdir(parents=True, exist_ok=True)
    ds = generate_dataset(args.games, SkillSampler.parse(args.skills), seed=args.seed, workers=args.workers)
    ds.write(out)
    hist = out.with_name(out.stem + "_skills.csv")
    hist.write_text(ds.histogram_csv(args.bin_width))
    stats = ds.stats(args.bin_width)
    stats.pop("histogram")
    print(json.dumps({"path": str(out), "sha256": _sha256(out), **stats}))
    return 0


def train_config(args) -> TrainConfig:
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(TrainConfig)
                 if f.name != "kind" and getattr(args, f.name) is not None}
    return default_config(args.kind, **overrides)


def cmd_train(args) -> int:
    _require(args, "data")
    dataset = ReplayDataset.read(args.data)
    if args.resume:
        ckpt = read_checkpoint(args.resume)
        if ckpt.kind != args.kind:
            raise SchemaError(f"--resume checkpoint is {ckpt.kind}, not {args.kind}")
        learner = resume_learner(dataset, ckpt)
        out = Path(args.out or args.resume)
    else:
        _require(args, "seed")
        init = read_checkpoint(args.init_from) if args.init_from else None
        learner = make_learner(dataset, train_config(args), init)
        out = Path(args.out or out_dir() / f"{args.kind}.ckpt")
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log or out.with_name(out.name + ".log.csv"))
    try:
        learner.run(until=args.stop_at_step, checkpoint_path=out, checkpoint_every=args.checkpoint_every)
    finally:
        text = learner.log_csv()
        if args.resume and log_path.exists() and text:
            text = text.split("\n", 1)[1]
            with log_path.open("a") as fh:
                fh.write(text)
        else:
            log_path.write_text(text)
    print(json.dumps({"checkpoint": str(out), "step": learner.step_index, "done": learner.done,
                      "sha256": _sha256(out)}))
    return 0


def load_agent(spec: str, args):
    """``botN`` or ``name=checkpoint[:mcts]`` -> (agent, provenance dict)."""
    if "=" not in spec:
        if spec.startswith("bot") and spec[3:].isdigit() and 0 <= int(spec[3:]) <= MAX_LEVEL:
            return ScriptedBot(int(spec[3:])), {"kind": "bot", "level": int(spec[3:])}
        raise UsageError(f"agent spec {spec!r}: expected botN or name=checkpoint[:mcts]")
    name, path = spec.split("=", 1)
    mcts = None
    if path.endswith(":mcts"):
        path = path[: -len(":mcts")]
        mcts = MCTSConfig(n_simulations=args.mcts_simulations, n_sampled_actions=args.mcts_samples)
    ckpt = read_checkpoint(path)
    if not ckpt.meta.get("done"):
        log.warning("%s: checkpoint %s has not reached its frame budget", name, path)
    agent = agent_from_checkpoint(ckpt, name, args.temperature, mcts)
    info = {"kind": ckpt.kind, "sha256": _sha256(path), "code_version": ckpt.code_version,
            "step": ckpt.meta["step"]}
    if mcts is not None:
        info["mcts"] = dataclasses.asdict(mcts)
    return agent, info


def cmd_eval(args) -> int:
    _require(args, "agents", "seed")
    maps = [int(m) for m in args.maps.split(",")]
    loaded = [load_agent(s, args) for s in args.agents]
    agents = [a for a, _ in loaded]
    spec = {"agents": {a.name: info for a, info in loaded}, "temperature": args.temperature,
            "code_version": __version__}
    out = Path(args.out or out_dir() / "matrix.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.opponents:
        opp = [load_agent(s, args) for s in args.opponents]
        spec["opponents"] = {a.name: info for a, info in opp}
        spec.update(games=args.games, seed=args.seed, maps=maps, time_budget=args.time_budget)
        lines = [f"# config: {json.dumps(spec, sort_keys=True)}", f"# code_version: {__version__}",
                 "agent," + ",".join(a.name for a, _ in opp)]
        for i, agent in enumerate(agents):
            cells = []
            for j, (o, _) in enumerate(opp):
                res = play_matches(agent, o, schedule(args.games, args.seed, (i, len(agents) + j), maps),
                                   args.time_budget)
                s = score(res)
                lo, hi = binomial_ci(s, len(res))
                log.info("%s vs %s: %.3f [%.3f, %.3f]", agent.name, o.name, s, lo, hi)
                cells.append(repr(s))
            lines.append(agent.name + "," + ",".join(cells))
        out.write_text("\n".join(lines) + "\n")
    else:
        m = win_rate_matrix(agents, args.games, maps, args.seed, args.time_budget,
                            progress=lambda a, b, s: log.info("%s vs %s: %.3f", a, b, s))
        m.spec.update(spec)
        out.write_text(m.to_csv())
    print(json.dumps({"matrix": str(out), "sha256": _sha256(out)}))
    return 0


def _names(text: str | None) -> list[str] | None:
    return None if text is None else [s.strip() for s in text.split(",") if s.strip()]


def cmd_rate(args) -> int:
    _require(args, "matrix")
    m = WinRateMatrix.from_csv(Path(args.matrix).read_text())
    expected = _names(args.agents)
    if expected is not None and sorted(expected) != sorted(m.agents):
        raise SchemaError(f"agent list {expected} does not match matrix agents {m.agents}")
    anchors = {}
    for item in _names(args.anchor):
        name, _, value = item.partition("=")
        anchors[name] = float(value or 1000.0)
    for name in anchors:
        m.index(name)
    reference = _names(args.reference) or m.agents
    for name in reference:
        m.index(name)
    ratings = elo_fit(m, anchors)
    robust = robustness(m, reference)
    spec = {"matrix_sha256": _sha256(args.matrix), "anchors": anchors, "reference": reference,
            "matrix_code_version": m.code_version}
    out = Path(args.out or out_dir() / "ratings.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(ratings.to_csv(robust, spec))
    for a in m.agents:
        print(f"{a}\telo={ratings.ratings[a]:.1f}\trobustness={robust[a]:.3f}")
    return 0


def cmd_report(args) -> int:
    _require(args, "matrix", "ratings")
    m = WinRateMatrix.from_csv(Path(args.matrix).read_text())
    spec, version, rows = read_ratings_csv(Path(args.ratings).read_text())
    names = [r["agent"] for r in rows]
    if sorted(names) != sorted(m.agents):
        raise SchemaError(f"ratings agents {names} do not match matrix agents {m.agents}")
    versions = {m.code_version, version}
    versions |= {info["code_version"] for info in m.spec.get("agents", {}).values() if "code_version" in info}
    if len(versions) > 1 and not args.force:
        raise SchemaError(f"inputs come from different code versions {sorted(versions)}; use --force")
    ratings = EloRatings({r["agent"]: float(r["elo"]) for r in rows}, spec.get("anchors", {}),
                         {r["agent"]: r["unbounded"] for r in rows if r["unbounded"]})
    robust = {r["agent"]: float(r["robustness"]) for r in rows}
    table = report_table(m, ratings, robust, args.strongest_bot)
    table.sort(key=lambda r: -r["Robustness"])
    d = Path(args.out_dir or out_dir())
    d.mkdir(parents=True, exist_ok=True)
    header = f"<!-- config: {json.dumps({'matrix': m.spec, 'ratings': spec}, sort_keys=True)} -->\n" \
             f"<!-- code_version: {__version__} -->\n"
    (d / "report.md").write_text(header + report_markdown(table))
    (d / "heatmap.svg").write_text(heatmap_svg(m))
    print(report_markdown(table), end="")
    return 0


def cmd_stats(args) -> int:
    _require(args, "data")
    ds = ReplayDataset.read(args.data)
    stats = ds.stats(args.bin_width)
    stats["config"] = ds.config
    stats["code_version"] = getattr(ds, "code_version", None)
    print(json.dumps(stats))
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "rate": cmd_rate,
            "report": cmd_report, "stats": cmd_stats}
RUNTIME_ERRORS = (DependencyError, SchemaError, DatasetFormatError, bundle.BundleError, BehaviorMismatch,
                  LaneDiscontinuity, FloatingPointError, ValueError, OSError)


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
