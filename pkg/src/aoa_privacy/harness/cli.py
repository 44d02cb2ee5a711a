"""Command line: ``aoa-privacy run|profile|precoder <config> [options]``.

Exit code 0 on success. On failure a single JSON line
``{"error": <kind>, "message": <text>}`` goes to stderr and the exit code is
2 for configuration or usage problems and 1 for anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from ..defender import MODES, build_precoder, make_path_knowledge, precoder_to_csv
from ..errors import AoaPrivacyError, ConfigError
from ..geometry import enumerate_paths
from .config import load_config
from .experiment import run_experiment, run_trial
from .outputs import emit_outputs, summarize


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _position(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}") from None
    return x, y


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aoa-privacy", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("config", type=Path, help="scenario TOML file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--snr", type=float, metavar="DB", help="override snr_db")

    run = sub.add_parser("run", help="Monte-Carlo experiment over random positions")
    common(run)
    run.add_argument("--positions", type=int, metavar="N", help="number of user positions")
    run.add_argument("--dump-profiles", action="store_true", help="write every profile CSV")
    run.add_argument("--jobs", type=int, help="worker processes")

    for name, text in (("profile", "angle-distance profiles for one position"),
                       ("precoder", "export precoder weights for one position")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--position", type=_position, required=True, metavar="X,Y")
        p.add_argument("--policy", choices=MODES, required=True)
        if name == "profile":
            p.add_argument("--dump-profiles", action="store_true", help=argparse.SUPPRESS)
    return parser


def _load(args, **extra):
    return load_config(args.config, seed=args.seed, snr_db=args.snr,
                       out=None if args.out is None else str(args.out), **extra)


def cmd_run(args) -> dict:
    cfg = _load(args, num_positions=args.positions, jobs=args.jobs)
    records = run_experiment(cfg, keep_profiles=args.dump_profiles)
    summary = summarize(records)
    written = emit_outputs(records, summary, cfg.out, cfg.resolved, args.dump_profiles)
    failed = sum(r.status != "ok" for r in records)
    return {"status": "ok", "out": cfg.out, "trials": len(records), "failed": failed,
            "files": len(written)}


def cmd_profile(args) -> dict:
    cfg = _load(args, policies=[args.policy])
    record = run_trial(cfg, 0, keep_profiles=True, position=args.position)
    if record.status != "ok":
        raise AoaPrivacyError(record.reason)
    outdir = Path(cfg.out) / "profiles"
    outdir.mkdir(parents=True, exist_ok=True)
    aps = []
    for o in record.observations[args.policy]:
        path = o.profile.to_csv(outdir / f"{args.policy}_ap{o.ap}.csv")
        aps.append({
            "ap": o.ap, "file": str(path),
            "true_aoa_deg": round(math.degrees(o.true_aoa), 4),
            "est_aoa_deg": round(math.degrees(o.est_aoa), 4),
            "peaks": [[round(math.degrees(p.angle), 4), round(p.distance, 4),
                       round(float(o.profile.relative_db(p.power)), 3)] for p in o.profile.peaks],
        })
    return {"status": "ok", "serving_ap": record.serving_ap, "aps": aps}


def cmd_precoder(args) -> dict:
    cfg = _load(args)
    env = cfg.environment
    pos = args.position
    serving = min(range(len(env.ap_poses)), key=lambda i: math.dist(pos, env.ap_poses[i].position))
    ap = env.ap_poses[serving].position
    facing = math.atan2(ap[0] - pos[0], ap[1] - pos[1])
    paths = enumerate_paths(env, pos, serving, cfg.max_order, user_orientation=facing)
    knowledge = make_path_knowledge(paths) if args.policy != "none" else None
    w = build_precoder(cfg.policy_for(args.policy), knowledge, cfg.array, cfg.ofdm, paths[0].aod)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    path = precoder_to_csv(w, Path(cfg.out) / f"precoder_{args.policy}.csv")
    info = {"status": "ok", "serving_ap": serving, "file": str(path)}
    if "d_obf" in w.meta:
        info["d_obf_m"] = round(w.meta["d_obf"], 4)
    return info


COMMANDS = {"run": cmd_run, "profile": cmd_profile, "precoder": cmd_precoder}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        return _fail("usage", str(exc), 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail("config", str(exc), 2)
    except (AoaPrivacyError, ValueError, LookupError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    print(json.dumps(result))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
