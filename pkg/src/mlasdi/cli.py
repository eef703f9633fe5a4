"""Batch command-line front end.

Subcommands: ``datagen`` (write a snapshot file), ``train`` (multi-stage
training to a checkpoint), ``eval`` (error CSV + summary over a test set),
``predict`` (single-parameter trajectory to CSV).  Verbosity is controlled
by the MLASDI_LOG environment variable (error, info, debug).

Every failure exits non-zero with one machine-parsable line on stderr:
``mlasdi: error: <Category>: <detail>``.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import backend
from .checkpoint import (
    load_checkpoint,
    read_meta,
    save_checkpoint,
    write_meta,
)
from .config import load_config
from .data import (
    generate_pulse_dataset,
    load_snapshots,
    pulse_snapshot,
    random_indices,
    save_snapshots,
    select_training_params,
)
from .errors import ConfigError, MlasdiError, OrderingError
from .multistage import predict, train_full
from .report import evaluate_stack, summary_text, write_error_csv, write_summary

log = logging.getLogger("mlasdi.cli")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}


def _configure_logging():
    raw = os.environ.get("MLASDI_LOG", "info").strip().lower()
    level = _LOG_LEVELS.get(raw, logging.INFO)
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    if raw and raw not in _LOG_LEVELS:
        log.error("MLASDI_LOG=%r not in {error, info, debug}; using info", raw)


def _overrides(args):
    ov = {}
    if getattr(args, "seed", None) is not None:
        ov["train.seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        ov["train.threads"] = args.threads
    return ov


def _load(args):
    cfg = load_config(args.config, _overrides(args))
    log.info("resolved config:\n%s", cfg.resolved_text())
    return cfg


def _training_indices(cfg, data):
    if cfg.kind == "pulse":
        grid = cfg.grid()
        if grid.size != data.n_params or not np.array_equal(grid.points(),
                                                            data.params):
            raise ConfigError(
                "data file parameters do not match the configured grid; "
                "regenerate with 'datagen' or fix the config"
            )
        return select_training_params(grid, cfg.train_params, cfg.seed)
    return random_indices(data.n_params, cfg.train_params, cfg.seed)


def cmd_datagen(args):
    cfg = _load(args)
    if cfg.kind != "pulse":
        raise ConfigError("datagen requires [data] kind=pulse")
    tensor = generate_pulse_dataset(cfg.grid(), cfg.nx, cfg.nt, cfg.dt)
    save_snapshots(tensor, args.out)
    print(
        f"n_params={tensor.n_params} n_times={tensor.n_times} "
        f"state_dim={tensor.state_dim}"
    )
    log.info("wrote %s", args.out)
    return 0


def cmd_train(args):
    cfg = _load(args)
    data = load_snapshots(args.data)
    train_idx = _training_indices(cfg, data)
    subset = data.subset(train_idx)
    tcfg = cfg.train_config()
    n_stages = args.stages if args.stages is not None else tcfg.n_stages
    if n_stages < 1 or n_stages > tcfg.n_stages:
        raise ConfigError(
            f"--stages {n_stages} out of range; config defines "
            f"{tcfg.n_stages} stages"
        )
    stack = None
    prior_seconds = []
    if args.resume:
        stack = load_checkpoint(args.resume)
        if stack.config != tcfg:
            raise ConfigError(
                "resume checkpoint was trained with a different configuration"
            )
        if stack.n_stages >= n_stages:
            raise ConfigError(
                f"resume checkpoint already has {stack.n_stages} stages; "
                f"requested {n_stages}"
            )
        prior_seconds = list(read_meta(args.resume + ".meta")
                             .get("train_seconds", []))
        log.info("resuming after stage %d", stack.n_stages)
    result = train_full(subset, tcfg, n_stages=n_stages, stack=stack)
    save_checkpoint(result.stack, args.out)
    all_seconds = prior_seconds + result.seconds
    write_meta(args.out + ".meta", all_seconds, backend.active_name())
    for k, sec in enumerate(all_seconds, start=1):
        log.info("stage %d wall-clock seconds: %.3f", k, sec)
    print(f"trained_stages={result.stack.n_stages} checkpoint={args.out}")
    return 0


def _resolve_cutoff(requested, stack):
    if requested in (None, 0):
        return stack.n_stages
    if requested < 1 or requested > stack.n_stages:
        raise OrderingError(
            f"stage cutoff {requested} unavailable; trained stages: "
            f"1..{stack.n_stages}"
        )
    return requested


def cmd_eval(args):
    cfg = _load(args)
    stack = load_checkpoint(args.checkpoint)
    data = load_snapshots(args.data)
    if stack.state_dim != data.state_dim:
        raise ConfigError(
            f"checkpoint state dim {stack.state_dim} does not match data "
            f"state dim {data.state_dim}"
        )
    cutoff = _resolve_cutoff(
        args.stages if args.stages is not None else cfg.eval_stages, stack
    )
    if cfg.eval_test == "train":
        data = data.subset(_training_indices(cfg, data))
    seconds = read_meta(args.checkpoint + ".meta").get("train_seconds", [])
    report = evaluate_stack(
        stack, data, stage_cutoff=cutoff, train_seconds=seconds,
        threads=cfg.threads,
    )
    csv_path = args.out + ".csv" if args.out else cfg.eval_csv
    summary_path = args.out + ".summary.txt" if args.out else cfg.eval_summary
    write_error_csv(report, csv_path)
    write_summary(report, summary_path)
    print(summary_text(report), end="")
    log.info("wrote %s and %s", csv_path, summary_path)
    return 0


def cmd_predict(args):
    cfg = _load(args)
    stack = load_checkpoint(args.checkpoint)
    try:
        mu = np.array([float(v) for v in args.mu.split(",")])
    except ValueError:
        raise ConfigError(f"--mu {args.mu!r} is not a comma-separated vector") \
            from None
    if cfg.kind == "pulse":
        if mu.shape[0] != 2:
            raise ConfigError("pulse data needs --mu speed,width")
        u0 = pulse_snapshot(mu[0], mu[1], cfg.nx, 0.0)
        n_steps, dt = cfg.nt, cfg.dt
    else:
        data = load_snapshots(cfg.path)
        match = np.flatnonzero(np.all(data.params == mu[None, :], axis=1))
        if match.size == 0:
            raise ConfigError(
                f"imported data has no snapshot row for mu={mu.tolist()}; "
                f"an initial condition is required"
            )
        u0 = data.values[match[0], 0]
        n_steps, dt = data.n_times - 1, data.dt
    cutoff = _resolve_cutoff(args.stages, stack)
    traj = predict(stack, mu, u0, n_steps, dt, stage_cutoff=cutoff)
    header = "t," + ",".join(f"u_{i + 1}" for i in range(traj.shape[1]))
    lines = [header]
    for j, row in enumerate(traj):
        lines.append(",".join(f"{v:.17g}" for v in [j * dt, *row]))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"trajectory={args.out} n_times={traj.shape[0]}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mlasdi",
        description="Multi-stage latent dynamics reduced-order modeling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", required=True, help="run config file")
        p.add_argument("--seed", type=int, help="override [train] seed")
        p.add_argument("--threads", type=int, help="override [train] threads")
        if out_required:
            p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("datagen", help="generate a snapshot file")
    common(p)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train a multi-stage model")
    common(p)
    p.add_argument("--data", required=True, help="MLSD snapshot file")
    p.add_argument("--stages", type=int, help="train only the first K stages")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint over a test set")
    common(p, out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="MLSD snapshot file")
    p.add_argument("--stages", type=int, help="stage cutoff for composition")
    p.add_argument("--out", help="output path prefix (.csv / .summary.txt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict one trajectory to CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mu", required=True, help="comma-separated parameter vector")
    p.add_argument("--stages", type=int, help="stage cutoff for composition")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MlasdiError as exc:
        detail = " ".join(str(exc).split())
        sys.stderr.write(f"mlasdi: error: {type(exc).__name__}: {detail}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"mlasdi: error: IOError: {exc}\n")
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
