"""Command-line front end: construct, simulate, campaign, capacity, verify."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics as dyn
from .config import load_config
from .experiments import ConfigError, run_campaign
from .numtheory import capacity_estimate
from .state import BlockLabels, SpinState, monochromatic_state
from .topology import (
    NetworkFormatError,
    add_adversarial_edges,
    build_dense_bca,
    build_sparse_bca,
    load,
    make_rng,
    mark_anti_majority,
    serialize,
)

OUT_DIR_ENV = "BLOCKCYCLE_OUT"


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    params: dict
    seed: int | None
    outputs: list[str]
    tool_version: str = __version__
    config_digest: str | None = None
    extra: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


class CliError(Exception):
    pass


def _out_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def cmd_construct(args) -> int:
    if args.seed is None:
        raise CliError("--seed is required")
    try:
        if args.kind == "dense":
            net = build_dense_bca(args.m, args.d, args.seed)
        else:
            net = build_sparse_bca(args.m, args.b, args.d, args.h, args.seed)
        if args.q:
            net = add_adversarial_edges(net, args.q, [args.seed, 1])
        if args.anti:
            net = mark_anti_majority(net, args.anti, [args.seed, 2])
    except ValueError as exc:
        raise CliError(f"invalid parameters: {exc}") from None
    out = _out_path(args.out)
    data = serialize(net)
    manifest = RunManifest(
        command="construct",
        config_path=None,
        params={k: getattr(args, k) for k in ("kind", "m", "b", "d", "h", "q", "anti")},
        seed=args.seed,
        outputs=[str(out)],
        extra={"n": net.n, "cycles": len(net.partition.cycle_lengths), "sha256": hashlib.sha256(data).hexdigest()},
    )
    manifest.write(out.with_name(out.name + ".manifest.json"))
    out.write_bytes(data)
    print(f"wrote {out}: n={net.n} d={net.partition.block_size} cycles={len(net.partition.cycle_lengths)}")
    return 0


def _initial_state(args, net) -> SpinState:
    if args.labels is not None:
        return monochromatic_state(net.partition, BlockLabels.parse(args.labels))
    if args.init == "random":
        if args.seed is None:
            raise CliError("--init random needs --seed")
        gen, _ = make_rng(args.seed)
        return SpinState.from_spins(np.where(gen.random(net.n) < 0.5, -1, 1))
    if args.init_file:
        return SpinState.from_hex(Path(args.init_file).read_text())
    raise CliError("give --labels, --init random or --init-file")


def cmd_simulate(args) -> int:
    try:
        net = load(args.network)
    except FileNotFoundError:
        raise CliError(f"no such network file: {args.network}") from None
    try:
        x0 = _initial_state(args, net)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if x0.n != net.n:
        raise CliError(f"initial state has {x0.n} spins, network has {net.n}")
    lines = [f"{t} {x.to_hex()} {ties}" for t, x, ties in dyn.trajectory(net, x0, args.steps)]
    if args.dump:
        _out_path(args.dump).write_text("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    if args.detect_cycle:
        horizon = args.horizon or max(1, 4 * sum(net.partition.cycle_lengths))
        rep = dyn.detect_cycle(net, x0, horizon, method=args.method, max_states=0)
        if rep.horizon_hit:
            print(f"cycle: horizon {horizon} reached without repetition")
        else:
            print(f"cycle: T={rep.transient} P={rep.period}")
    return 0


def cmd_campaign(args) -> int:
    try:
        cfg, digest = load_config(args.config)
    except FileNotFoundError:
        raise CliError(f"no such config file: {args.config}") from None
    except ConfigError as exc:
        raise CliError(str(exc)) from None
    if args.threads:
        cfg.threads = args.threads
    out_dir = _out_path(os.path.join(args.out_dir, "x")).parent
    stem = args.name or Path(args.config).stem
    csv_path = out_dir / f"{stem}.csv"
    manifest = RunManifest(
        command="campaign",
        config_path=str(args.config),
        params=cfg.as_dict(),
        seed=cfg.seed,
        outputs=[str(csv_path)],
        config_digest=digest,
    )
    manifest_path = out_dir / f"{stem}.manifest.json"
    manifest.write(manifest_path)
    table = run_campaign(cfg)
    csv_path.write_text(table.to_csv())
    manifest.extra = {
        "wall_ms": [round(r["wall_ms"], 3) for r in table.rows],
        "zero_success_rows": [i for i, r in enumerate(table.rows) if r.get("zero_success")],
    }
    manifest.write(manifest_path)
    print(table.summary())
    violations = sum(r.get("violations") or 0 for r in table.rows)
    if violations:
        print(f"error: {violations} period-law violations", file=sys.stderr)
        return 1
    return 0


def cmd_capacity(args) -> int:
    if args.network:
        lengths = list(load(args.network).partition.cycle_lengths)
    elif args.lengths:
        lengths = [int(v) for v in args.lengths.split(",") if v.strip()]
    else:
        raise CliError("give --lengths or --network")
    try:
        est = capacity_estimate(lengths)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    l2s, l2p, l2c = est.log2()
    print(f"lengths: {','.join(map(str, lengths))}")
    print(f"log2 aperiodic monochromatic states: {l2s:.6f}")
    print(f"log2 period: {l2p:.6f}")
    print(f"log2 number of cycles: {l2c:.6f}")
    print(f"P = {est.period}" if sum(lengths) <= 20 or est.period < 10**18 else f"log P = {est.log_period:.6f}")
    if sum(lengths) <= 20:
        print(f"N_states = {est.num_states}")
        print(f"N_cycles = {est.num_cycles}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    failures = 0
    for name, ok, detail in run_all():
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failures += not ok
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blockcycle", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build a block-cyclic network and write it to a file")
    c.add_argument("--kind", choices=("dense", "sparse"), required=True)
    c.add_argument("--m", type=int, required=True, help="largest cycle length")
    c.add_argument("--b", type=int, default=1, help="smallest cycle length (sparse)")
    c.add_argument("--d", type=int, required=True, help="block size")
    c.add_argument("--h", type=int, default=3, help="sparse in-degree, odd")
    c.add_argument("--q", type=int, default=0, help="adversarially rewired neurons per block")
    c.add_argument("--anti", type=int, default=0, help="number of anti-majority neurons")
    c.add_argument("--seed", type=int)
    c.add_argument("--out", default="network.bcan")
    c.set_defaults(func=cmd_construct)

    s = sub.add_parser("simulate", help="run the dynamics from an initial state")
    s.add_argument("network")
    s.add_argument("--labels", help="monochromatic labels, cycles separated by '|', e.g. '+--|+-'")
    s.add_argument("--init", choices=("random",))
    s.add_argument("--init-file")
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int, default=0)
    s.add_argument("--dump", help="write the trajectory here instead of standard output")
    s.add_argument("--detect-cycle", action="store_true")
    s.add_argument("--horizon", type=int)
    s.add_argument("--method", choices=("hash", "brent"), default="hash")
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("campaign", help="run an experiment campaign from a config file")
    k.add_argument("config")
    k.add_argument("--out-dir", default=".")
    k.add_argument("--name", help="output file stem (default: config file stem)")
    k.add_argument("--threads", type=int, help="cap on concurrent trial workers")
    k.set_defaults(func=cmd_campaign)

    p = sub.add_parser("capacity", help="count limit cycles for given cycle lengths")
    p.add_argument("--lengths")
    p.add_argument("--network")
    p.set_defaults(func=cmd_capacity)

    v = sub.add_parser("verify", help="run the fast oracle cross-checks")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, NetworkFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
