"""impact-qlbs: seeded FX option hedging and pricing experiments under market impact.

Exit codes: 0 success, 1 configuration or usage error, 2 model failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import _io
from .config import PRESETS, ExperimentConfig, config_from_dict, env_seed, preset_rows, read_config_file
from .errors import ConfigError, ModelError
from .experiment import run_batch
from .report import emit_report, emit_timing

EXIT_OK, EXIT_CONFIG, EXIT_MODEL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with the model-failure code
    def error(self, message):
        raise ConfigError(message, "argv")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with ExperimentConfig fields")
    common.add_argument("--seed", type=int, help="root seed (overrides config and $IMPACT_QLBS_SEED)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--runs", type=int, help="number of runs per batch")
    common.add_argument("--skip-failed", action="store_true", help="record failed runs and continue")
    common.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")

    parser = _Parser(prog="impact-qlbs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="a single experiment")
    sub.add_parser("batch", parents=[common], help="n_runs seeded experiments")
    for name in PRESETS:
        sub.add_parser(name, parents=[common], help=f"preset sweep reproducing {name}")
    sub.add_parser("validate", help="invariant checks on a tiny instance")
    return parser


def _apply_flags(cfg: ExperimentConfig, args, out_dir: str | None = None) -> ExperimentConfig:
    changes = {"seed": env_seed(cfg.seed)}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.runs is not None:
        changes["n_runs"] = args.runs
    if out_dir is not None:
        changes["output_dir"] = out_dir
    elif args.out is not None:
        changes["output_dir"] = args.out
    return cfg.replace(**changes)


def _summary_line(label: str, rep) -> str:
    return (
        f"{label}: runs={len(rep.runs)} failed={len(rep.failures)} "
        f"MSE={rep.mse:.6g} avg_Lp={rep.avg_Lp:.6g} avg_Lstar={rep.avg_Lstar:.6g}"
    )


def _batch(cfg, args, label):
    rep = run_batch(cfg, workers=max(1, args.workers), skip_failed=args.skip_failed)
    emit_report(rep, cfg.output_dir)
    emit_timing(rep, cfg.output_dir)
    print(_summary_line(label, rep))
    for f in rep.failures:
        print(f"  run {f.run_index} failed: {f.error}", file=sys.stderr)
    return rep


def _main(argv) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        from .validate import run_checks

        return EXIT_OK if run_checks() else EXIT_MODEL

    if args.workers is not None and args.workers < 1:
        raise ConfigError("must be >= 1", "workers")
    overrides = read_config_file(args.config) if args.config else {}

    if args.command in ("run", "batch"):
        cfg = config_from_dict(overrides)
        if args.command == "run":
            cfg = _apply_flags(cfg, args).replace(n_runs=1)
        else:
            cfg = _apply_flags(cfg, args)
        _batch(cfg, args, args.command)
        return EXIT_OK

    root = Path(args.out or overrides.get("output_dir") or f"out/{args.command}")
    summary = []
    for label, cfg in preset_rows(args.command, overrides):
        cfg = _apply_flags(cfg, args, str(root / label))
        rep = _batch(cfg, args, label)
        summary.append({"row": label, **rep.aggregates()})
    (root / "summary.json").write_text(_io.dumps({"preset": args.command, "rows": summary}))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return _main(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
