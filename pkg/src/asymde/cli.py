"""Command-line entry point: ``asymde <group> <action>``."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

import numpy as np

from .core import BitString, SubsetSpec
from .edit_de import EditParams, EditSketch, alice_edit_sketch, bob_edit_recover
from .hamming_de import (
    Sketch,
    Tuning,
    alice_chi,
    alice_general,
    alice_special,
    bob_chi,
    bob_general,
    bob_special,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    read_jsonl,
    report,
    run,
    verify_expanders,
    write_jsonl,
)

SKETCH_PROTOCOLS = ("one-set", "general", "chi", "special")


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _overrides(args) -> dict:
    out = {}
    for key in ("trials", "seed", "output", "threads"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load_config(args, protocol: Optional[str] = None) -> ExperimentConfig:
    over = _overrides(args)
    if protocol is not None:
        over.setdefault("protocol", protocol)
    if args.config:
        return ExperimentConfig.load(args.config, over)
    return ExperimentConfig.from_dict(over)


def _emit_records(cfg: ExperimentConfig) -> int:
    if cfg.output:
        with open(cfg.output, "w") as fh:
            count = write_jsonl(run(cfg), fh)
    else:
        count = write_jsonl(run(cfg), sys.stdout)
    print(f"{count} trials executed", file=sys.stderr)
    return 0


def _read_bits(path: str, n: int) -> BitString:
    with open(path, "rb") as fh:
        return BitString.from_bytes(fh.read(), n)


def _write(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def _tuning(args) -> Tuning:
    return Tuning(args.c_d, args.c_m, args.c_s, args.mode)


def cmd_run(args) -> int:
    cfg = _load_config(args, args.protocol)
    return _emit_records(cfg)


def cmd_hamming_sketch(args) -> int:
    x = _read_bits(args.input, args.n)
    sizes, bounds = _ints(args.sizes), _ints(args.bounds)
    tuning = _tuning(args)
    if args.protocol in ("one-set", "general"):
        sk = alice_general(x, sizes, bounds, args.seed, tuning)
    elif args.protocol == "chi":
        sk = alice_chi(x, sizes, bounds, args.seed, args.chi_base, tuning)
    else:
        sk = alice_special(x, sizes, bounds, args.seed, tuning=tuning)
    _write(args.output, sk.to_bytes())
    print(f"payload_bits={sk.payload_bits} wire_bits={sk.size()}", file=sys.stderr)
    return 0


def cmd_hamming_recover(args) -> int:
    with open(args.subsets) as fh:
        desc = json.load(fh)
    with open(args.sketch, "rb") as fh:
        sk = Sketch.from_bytes(fh.read())
    y = _read_bits(args.input, sk.n)
    spec = SubsetSpec(sk.n, desc["sizes"], desc["bounds"], tuple(np.asarray(s, dtype=np.int64) for s in desc["subsets"]))
    tuning = _tuning(args)
    if args.protocol in ("one-set", "general"):
        rec = bob_general(y, spec, sk, args.seed, tuning)
    elif args.protocol == "chi":
        rec = bob_chi(y, spec, sk, args.seed, args.chi_base, tuning)
    else:
        rec = bob_special(y, spec, sk, args.seed, tuning=tuning)
    if not rec.ok:
        print(f"recovery failed: {rec.stage.value}", file=sys.stderr)
        return 2
    _write(args.output, rec.x.to_bytes())
    return 0


def _edit_params(args) -> EditParams:
    return EditParams(args.c, args.c_prime, _tuning(args), args.allow_small_k)


def cmd_edit_sketch(args) -> int:
    x = _read_bits(args.input, args.n)
    sk = alice_edit_sketch(x, args.k, args.seed, _edit_params(args))
    _write(args.output, sk.to_bytes())
    print(f"payload_bits={sk.payload_bits} wire_bits={sk.size()}", file=sys.stderr)
    return 0


def cmd_edit_recover(args) -> int:
    with open(args.sketch, "rb") as fh:
        data = fh.read()
    params = _edit_params(args)
    sk = EditSketch.from_bytes(data, args.k, params)
    y = _read_bits(args.input, args.y_len)
    rec = bob_edit_recover(y, args.k, sk, args.seed, params)
    if not rec.ok:
        print(f"recovery failed: {rec.stage.value}", file=sys.stderr)
        return 2
    _write(args.output, rec.x.to_bytes())
    return 0


def cmd_expander_verify(args) -> int:
    cfg = _load_config(args, "expander")
    rows = verify_expanders(cfg)
    out = open(cfg.output, "w") if cfg.output else sys.stdout
    try:
        for row in rows:
            out.write(json.dumps(row) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_report(args) -> int:
    with open(args.input) as fh:
        records = read_jsonl(fh)
    csv_text, table = report(records)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(csv_text)
    sys.stdout.write(table)
    return 0


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flat keys)")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output")
    p.add_argument("--threads", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (value parsed as JSON)")


def _add_tuning_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--c-d", dest="c_d", type=float, default=2.0)
    p.add_argument("--c-m", dest="c_m", type=float, default=4.0)
    p.add_argument("--c-s", dest="c_s", type=float, default=2.0)
    p.add_argument("--mode", choices=("tuned", "conservative"), default="tuned")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asymde", description="Asymmetric-information document exchange experiments")
    groups = parser.add_subparsers(dest="group", required=True)

    ham = groups.add_parser("hamming").add_subparsers(dest="action", required=True)
    p = ham.add_parser("run", help="run Hamming trials from a config")
    _add_run_args(p)
    p.add_argument("--protocol", choices=("one-set", "general", "chi", "special", "two-sided"))
    p.set_defaults(func=cmd_run)
    for name, func in (("sketch", cmd_hamming_sketch), ("recover", cmd_hamming_recover)):
        p = ham.add_parser(name)
        p.add_argument("--protocol", choices=SKETCH_PROTOCOLS, default="general")
        p.add_argument("--input", required=True, help="bit string file (bit b in byte b//8, LSB first)")
        p.add_argument("--output", required=True)
        p.add_argument("--seed", type=int, required=True, help="shared seed")
        p.add_argument("--chi-base", dest="chi_base", type=int, default=10)
        _add_tuning_args(p)
        if name == "sketch":
            p.add_argument("--n", type=int, required=True)
            p.add_argument("--sizes", required=True, help="comma-separated s_i")
            p.add_argument("--bounds", required=True, help="comma-separated k_i")
        else:
            p.add_argument("--sketch", required=True)
            p.add_argument("--subsets", required=True, help='JSON {"sizes": [...], "bounds": [...], "subsets": [[...], ...]}')
        p.set_defaults(func=func)

    edit = groups.add_parser("edit").add_subparsers(dest="action", required=True)
    p = edit.add_parser("run", help="run edit-distance trials from a config")
    _add_run_args(p)
    p.set_defaults(func=cmd_run, protocol="edit")
    for name, func in (("sketch", cmd_edit_sketch), ("recover", cmd_edit_recover)):
        p = edit.add_parser(name)
        p.add_argument("--input", required=True)
        p.add_argument("--output", required=True)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--k", type=int, required=True)
        p.add_argument("--c", type=int, default=8)
        p.add_argument("--c-prime", dest="c_prime", type=float, default=1.0)
        p.add_argument("--allow-small-k", dest="allow_small_k", action="store_true")
        _add_tuning_args(p)
        if name == "sketch":
            p.add_argument("--n", type=int, required=True)
        else:
            p.add_argument("--sketch", required=True)
            p.add_argument("--y-len", dest="y_len", type=int, required=True, help="number of bits in y")
        p.set_defaults(func=func)

    ecc = groups.add_parser("ecc").add_subparsers(dest="action", required=True)
    p = ecc.add_parser("run")
    _add_run_args(p)
    p.set_defaults(func=cmd_run, protocol="ecc")

    exp = groups.add_parser("expander").add_subparsers(dest="action", required=True)
    p = exp.add_parser("verify")
    _add_run_args(p)
    p.set_defaults(func=cmd_expander_verify)

    p = groups.add_parser("report", help="aggregate JSON-lines records")
    p.add_argument("input")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
