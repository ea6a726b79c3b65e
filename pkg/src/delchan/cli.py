"""Command-line front end. Every subcommand writes one JSON report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from fractions import Fraction

from . import __version__
from .adversary import AdversaryParams, RepFamily, build_adversary, compress
from .codeword import Alphabet, Code
from .delpat import NO_DELETION, LayeredPattern, apply, pattern_from_json, sample_any
from .errors import DelchanError
from .harness import (
    SubstitutionChannel,
    ab_experiment,
    attack_report,
    block_string_experiment,
    constant_decoder,
    direct_decoder,
    fano_check,
    hadamard_decoder,
    lcc_distance_attack,
)
from .layers import critical_layers, cumulative_profile, significant_layers
from .querydist import approx_gap, exact_output_dist, mc_output_dist

log = logging.getLogger("delchan")


def _ints(text: str) -> tuple:
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read().strip()


def _read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _pattern(args):
    return pattern_from_json(_read_json(args.pattern)) if args.pattern else NO_DELETION


def _code_or_words(args):
    """A ``Code`` from ``--code`` or the explicit word list from ``--in``."""
    if getattr(args, "code", None):
        return Code.from_json(_read_json(args.code))
    if getattr(args, "input", None):
        return [w for w in _read_text(args.input).split() if w]
    raise DelchanError("one of --code or --in is required")


def _plain(v):
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


# ---------------------------------------------------------- subcommands


def cmd_corrupt(args):
    z = _read_text(args.input)
    inst = sample_any(_pattern(args), len(z), args.seed)
    out, surv = apply(z, inst)
    return {"corrupted": out, "deleted": list(inst.deleted), "length": len(out)}, None


def cmd_dist(args):
    z = _read_text(args.input)
    alphabet = Alphabet(args.alphabet)
    p = _pattern(args)
    if args.mode == "exact":
        if not isinstance(p, LayeredPattern):
            raise DelchanError("exact mode needs a layered pattern")
        d = exact_output_dist(z, args.queries, p, alphabet)
    else:
        d = mc_output_dist(z, args.queries, p, args.samples, args.seed, alphabet, args.workers)
    return {"queries": list(args.queries), "dist": d.to_json()}, d.csv_rows()


def cmd_gap(args):
    z = _read_text(args.input)
    nu = args.nu or len(z)
    rep = approx_gap(z, nu, args.a, args.b, _pattern(args), args.mode, Alphabet(args.alphabet),
                     samples=args.samples, seed=args.seed)
    return {"a": list(args.a), "b": list(args.b), **rep.to_json()}, None


def cmd_weights(args):
    prof = cumulative_profile(args.b, _code_or_words(args), args.diffs, _pattern(args), args.kappa, args.mode,
                              samples=args.samples, seed=args.seed)
    rows = [(t, float(v)) for t, v in sorted(prof.values.items())]
    return prof.to_json(), rows


def cmd_layers(args):
    code = _code_or_words(args)
    if args.kind == "critical":
        found = critical_layers(args.b, code, Fraction(args.delta).limit_denominator(10**6), args.kappa)
        return {"kind": "critical", "delta": args.delta, "found": found}, None
    scan = significant_layers(args.b, code, args.diffs, _pattern(args), args.rho, args.tau, args.window, args.kappa,
                              mode=args.mode, samples=args.samples, seed=args.seed)
    return {"kind": "significant", **scan.to_json()}, None


def _adversary_params(args) -> AdversaryParams:
    base = _read_json(args.params) if args.params else {}
    for name in ("kappa", "m", "k", "rho", "budget"):
        v = getattr(args, name)
        if v is not None:
            base[name] = v
    base.setdefault("seed", args.seed)
    base.setdefault("samples", args.samples)
    return AdversaryParams(**base)


def cmd_build_adversary(args):
    rep = build_adversary(_code_or_words(args), _adversary_params(args))
    return rep.to_json(), None


def cmd_compress(args):
    rep = RepFamily.from_json(_read_json(args.rep))
    rec = compress(_read_text(args.input), rep, args.seed)
    return rec.to_json(), None


def _decoders(name: str, code: Code):
    if name == "hadamard":
        return hadamard_decoder(code.n)
    if name == "direct":
        return direct_decoder(code.alphabet)
    return constant_decoder(code.alphabet.zero, code.length)


def cmd_attack(args):
    code = Code.from_json(_read_json(args.code))
    channel = SubstitutionChannel(args.substitution) if args.substitution is not None else _pattern(args)
    rep = attack_report(code, _decoders(args.decoder, code), channel, args.trials, args.seed, args.eps)
    return rep.to_json(), rep.csv_rows()


def cmd_blocks(args):
    if args.ab:
        rep = ab_experiment(args.n, args.alpha, args.beta, args.d1, args.d2, args.eps, args.samples, args.seed,
                            workers=args.workers)
        return rep, None
    rep = block_string_experiment(args.n, args.gaps, args.eps, args.samples, args.seed, workers=args.workers)
    rows = [(r["a"], r["b"], r["tv"]) for r in rep["pairs"]]
    return rep, rows


def cmd_fano(args):
    return fano_check(args.kbar, args.n, args.eps, args.alphabet), None


def cmd_lcc_attack(args):
    res = lcc_distance_attack(_code_or_words(args), args.eps_prime)
    return {"found": res is not None, "attack": res.to_json() if res else None}, None


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delchan", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="64-bit seed (DELCHAN_SEED overrides)")
    common.add_argument("--samples", type=int, default=10_000)
    common.add_argument("--mode", choices=("exact", "mc"), default="mc")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--csv", help="also write tabular rows to this CSV file")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        p = sub.add_parser(name, parents=[common], **kw)
        p.set_defaults(func=fn)
        return p

    p = add("corrupt", cmd_corrupt, help="apply one pattern draw to a string")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--pattern")

    p = add("dist", cmd_dist, help="output distribution of fixed queries")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--queries", type=_ints, required=True)
    p.add_argument("--pattern")
    p.add_argument("--alphabet", default="01")

    p = add("gap", cmd_gap, help="approximation gap between two difference lists")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--nu", type=int)
    p.add_argument("--a", type=_ints, required=True)
    p.add_argument("--b", type=_ints, required=True)
    p.add_argument("--pattern")
    p.add_argument("--alphabet", default="01")

    p = add("weights", cmd_weights, help="cumulative weight per layer")
    p.add_argument("--code")
    p.add_argument("--in", dest="input", help="whitespace-separated codewords")
    p.add_argument("--b", default="0")
    p.add_argument("--diffs", type=_ints, default=())
    p.add_argument("--kappa", type=int)
    p.add_argument("--pattern")

    p = add("layers", cmd_layers, help="critical or significant layers")
    p.add_argument("--code")
    p.add_argument("--in", dest="input")
    p.add_argument("--kind", choices=("critical", "significant"), default="critical")
    p.add_argument("--b", default="0")
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--diffs", type=_ints, default=())
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--tau", type=int, default=1)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--kappa", type=int, default=2)
    p.add_argument("--pattern")

    p = add("build-adversary", cmd_build_adversary, help="build the layered adversary and its query family")
    p.add_argument("--code")
    p.add_argument("--in", dest="input")
    p.add_argument("--params", help="JSON file of AdversaryParams fields")
    p.add_argument("--kappa", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--budget", type=float)

    p = add("compress", cmd_compress, help="record a codeword's answers to every representative query")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--rep", required=True)

    p = add("attack", cmd_attack, help="evaluate decoders under a channel")
    p.add_argument("--code", required=True)
    p.add_argument("--decoder", choices=("hadamard", "direct", "constant"), default="hadamard")
    p.add_argument("--pattern")
    p.add_argument("--substitution", type=float, help="use the substitution control channel at this rate")
    p.add_argument("--trials", type=int, default=1_000)
    p.add_argument("--eps", type=float, default=0.1)

    p = add("blocks", cmd_blocks, help="block-string output-distribution experiments")
    p.add_argument("--n", type=int, default=2**14)
    p.add_argument("--gaps", type=_ints, default=(4, 8, 4096))
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--ab", action="store_true", help="run the four-query A/B experiment instead")
    p.add_argument("--alpha", type=int, default=2)
    p.add_argument("--beta", type=int, default=8)
    p.add_argument("--d1", type=int, default=32)
    p.add_argument("--d2", type=int, default=4096)

    p = add("fano", cmd_fano, help="entropy feasibility check")
    p.add_argument("--kbar", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--alphabet", type=int, default=2)

    p = add("lcc-attack", cmd_lcc_attack, help="Hamming-distance deletion attack on a code")
    p.add_argument("--code")
    p.add_argument("--in", dest="input")
    p.add_argument("--eps-prime", type=float, required=True)
    return ap


def _write_csv(path: str, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    env = os.environ.get("DELCHAN_SEED")
    if env is not None:
        try:
            args.seed = int(env)
        except ValueError:
            print(f"delchan: DELCHAN_SEED must be an integer, got {env!r}", file=sys.stderr)
            return 2
    try:
        report, rows = args.func(args)
    except (DelchanError, ValueError, OSError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    report = _plain(report)
    report["run"] = {
        "command": args.command,
        "seed": args.seed,
        "samples": args.samples,
        "mode": args.mode,
        "workers": args.workers,
        "version": __version__,
    }
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.csv and rows is not None:
        _write_csv(args.csv, rows)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
