"""Command-line entry point.

Subcommands ``ber``, ``security``, ``coding-gain`` and ``codebook`` each
read an optional JSON config and write CSV/JSON results under ``--out``.
Exit status: 0 on success, 2 for configuration errors, 1 otherwise.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from .cmimo import ChaosKey, cmimo_codebook
from .duc import EXHAUSTIVE_BUDGET, DucFactors, duc_codebook, optimize_factors
from .numerics import ParameterError
from .sim import (
    BER_FIELDS,
    CODING_GAIN_FIELDS,
    SECURITY_FIELDS,
    ConfigError,
    SystemParams,
    emit_csv,
    load_params,
    resolve_seed,
    run_ber_experiment,
    run_coding_gain_sweep,
    run_security_sweep,
    write_sidecar,
)

log = logging.getLogger("covertsim")

SECURITY_DEFAULTS = {"M_list": [1, 2, 4, 8], "snr_db_grid": list(np.linspace(-40.0, 10.0, 50))}
CODING_GAIN_DEFAULTS = {"M_range": [1, 2, 3, 4, 5, 6], "trials": 10_000, "keys": 100, "budget": EXHAUSTIVE_BUDGET}
CODEBOOK_DEFAULTS = {"scheme": "DUC", "B": 2, "M": 2, "T": 1, "budget": EXHAUSTIVE_BUDGET,
                     "u": None, "c0": [0.3, 0.4], "Ns": 100}


def _read_config(path, defaults):
    cfg = dict(defaults)
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = sorted(set(d) - set(defaults))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    cfg.update(d)
    return cfg


def _cmd_ber(args):
    params = load_params(args.config) if args.config else SystemParams(overhead_target=0.05)
    changes = {}
    if args.frames is not None:
        changes["frames"] = args.frames
    if args.seed is not None:
        changes["master_seed"] = args.seed
    elif params.master_seed is None:
        changes["master_seed"] = resolve_seed()
    params = params.replace(**changes)

    def progress(done, total):
        log.info("%d/%d frames", done, total)

    records = run_ber_experiment(params, workers=args.threads, progress=progress)
    emit_csv(records, os.path.join(args.out, "ber.csv"), BER_FIELDS)
    emit_csv(records, os.path.join(args.out, "timing.csv"), ("scheme", "snr_db", "frames", "seconds"))
    write_sidecar(os.path.join(args.out, "ber.params.json"), params.to_dict(),
                  derived={"W": params.frame_length})
    for r in records:
        print(f"{r.scheme:16s} {r.snr_db:+7.2f} dB  BER {r.ber:.4e}  [{r.ci_low:.2e}, {r.ci_high:.2e}]")


def _cmd_security(args):
    cfg = _read_config(args.config, SECURITY_DEFAULTS)
    points = run_security_sweep(cfg["M_list"], cfg["snr_db_grid"])
    emit_csv(points, os.path.join(args.out, "security.csv"), SECURITY_FIELDS)
    write_sidecar(os.path.join(args.out, "security.params.json"), cfg)
    print(f"wrote {len(points)} rows")


def _cmd_coding_gain(args):
    cfg = _read_config(args.config, CODING_GAIN_DEFAULTS)
    seed = resolve_seed(args.seed)
    rows = run_coding_gain_sweep(cfg["M_range"], cfg["trials"], cfg["keys"], seed, cfg["budget"])
    emit_csv(rows, os.path.join(args.out, "coding_gain.csv"), CODING_GAIN_FIELDS)
    write_sidecar(os.path.join(args.out, "coding_gain.params.json"), dict(cfg, seed=seed))
    for r in rows:
        print(f"{r['scheme']:6s} M={r['M']}  gain {r['gain']:.4f}")


def _cmd_codebook(args):
    cfg = _read_config(args.config, CODEBOOK_DEFAULTS)
    if cfg["scheme"] == "DUC":
        if cfg["u"] is not None:
            factors = DucFactors(tuple(cfg["u"]), cfg["B"])
        else:
            factors = optimize_factors(cfg["B"], cfg["M"], cfg["budget"], seed=resolve_seed(args.seed))
        factors.to_json(os.path.join(args.out, "duc_factors.json"))
        cb = duc_codebook(factors)
        print(json.dumps(factors.to_dict()))
    elif cfg["scheme"] == "CMIMO":
        key = ChaosKey(complex(*cfg["c0"]), cfg["Ns"])
        cb = cmimo_codebook(key, cfg["M"], cfg["T"])
    else:
        raise ConfigError(f"codebook scheme must be DUC or CMIMO, got {cfg['scheme']!r}")
    cb.to_json(os.path.join(args.out, "codebook.json"))
    print(f"wrote {len(cb)} {cb.scheme} codewords")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (overrides config and $COVERTSIM_SEED)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="covertsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    ber = sub.add_parser("ber", parents=[common], help="Monte Carlo BER sweep")
    ber.add_argument("--threads", type=int, default=1, help="worker processes")
    ber.add_argument("--frames", type=int, help="frames per SNR point")
    ber.set_defaults(func=_cmd_ber)
    sub.add_parser("security", parents=[common], help="Willie detection-error bound").set_defaults(
        func=_cmd_security)
    sub.add_parser("coding-gain", parents=[common], help="coding-gain comparison").set_defaults(
        func=_cmd_coding_gain)
    sub.add_parser("codebook", parents=[common], help="DUC factor search or codebook export").set_defaults(
        func=_cmd_codebook)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        os.makedirs(args.out, exist_ok=True)
        args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
