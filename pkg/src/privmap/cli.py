"""Command-line pipeline: label, synth, split, fit, learn, encode, decode, eval.

Exit codes: 0 success, 2 input or validation error, 3 numeric failure.
Diagnostics go to stderr; ``learn`` prints per-generation progress to stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction

import numpy as np

from . import closed_form, data as data_prep, io
from .core import (
    Family,
    PrivmapError,
    ValidationError,
    decode_dataset,
    encode_dataset,
    validate_mapping,
)
from .experiment import run_evaluation
from .learner import AffineSearchSpace, learn

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
DEFAULT_COHORT_SIZE = 3355


def _classes(arg: str | None) -> list[str] | None:
    if not arg:
        return None
    return [c.strip() for c in arg.split(",") if c.strip()]


def _fraction(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a fraction: {text!r}") from None


def _config(path) -> io.RunConfig:
    return io.load_config(path) if path else io.RunConfig()


def _load_mapping(path):
    mapping, features = io.load_mapping(path)
    problems = validate_mapping(mapping)
    if problems:
        raise ValidationError(f"{path}: invalid mapping: " + "; ".join(problems))
    return mapping, features


# -- subcommands -----------------------------------------------------------


def cmd_label(args) -> None:
    records = io.read_body_records(args.input)
    io.write_dataset(args.output, data_prep.label_weight_status(records))


def cmd_synth(args) -> None:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    n = args.n if args.n is not None else (cfg.n if cfg.n is not None else DEFAULT_COHORT_SIZE)
    cohort = data_prep.synth_cohort(cfg.cohort, n, cfg.require_seed("synth"))
    io.write_dataset(args.output, cohort)


def cmd_split(args) -> None:
    ds = io.parse_dataset(args.input, classes=_classes(args.classes))
    train, test = data_prep.split(ds, args.fraction, args.seed)
    io.write_dataset(args.train, train)
    io.write_dataset(args.test, test)


def cmd_fit(args) -> None:
    ds = io.parse_dataset(args.train, classes=_classes(args.classes))
    family = Family(args.family)
    if args.shape is not None:
        if family is not Family.GAMMA:
            raise ValidationError("--shape only applies to --family gamma")
        mapping = closed_form.fit_gamma(ds, shared_shape=args.shape)
    else:
        mapping = closed_form.fit(ds, family)
    io.save_mapping(args.mapping, mapping, ds.feature_names)


def cmd_learn(args) -> None:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.ga.seed = args.seed
    cfg.require_seed("learn")
    if cfg.family != Family.AFFINE.value:
        raise ValidationError(f"learn searches affine mappings; config family is {cfg.family!r}")
    ds = io.parse_dataset(args.train, classes=cfg.classes or _classes(args.classes),
                          features=cfg.features)
    cfg.check_against(ds)
    space = AffineSearchSpace.for_data(ds, cfg.gauge_class)

    def progress(gen, best):
        print(f"generation {gen}: best MI {best:.6f} bits", flush=True)

    mapping, _ = learn(ds, space, cfg.ga, cfg.bins(ds.dimension), on_generation=progress)
    io.save_mapping(args.mapping, mapping, ds.feature_names)


def _transform(args, fn) -> None:
    mapping, features = _load_mapping(args.mapping)
    ds = io.parse_dataset(args.input, classes=mapping.classes, features=features)
    if ds.dimension != mapping.dimension:
        raise ValidationError(
            f"{args.input}: {ds.dimension} feature columns, mapping expects {mapping.dimension}"
        )
    io.write_dataset(args.output, fn(mapping, ds))


def cmd_encode(args) -> None:
    _transform(args, encode_dataset)


def cmd_decode(args) -> None:
    _transform(args, decode_dataset)


def cmd_eval(args) -> None:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.classifier.seed = args.seed
    cfg.require_seed("eval")
    mapping, features = _load_mapping(args.mapping)
    train = io.parse_dataset(args.train, classes=mapping.classes, features=features)
    test = io.parse_dataset(args.test, classes=mapping.classes, features=features)
    cfg.check_against(train)
    report = run_evaluation(
        mapping, train, test,
        bins=cfg.bins(train.dimension),
        folds=cfg.classifier.folds,
        centers=cfg.classifier.centers,
        seed=cfg.classifier.seed,
    )
    io.write_report(args.report, report.to_dict())


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="privmap", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)
    classes_help = "comma-separated class order (default: order of first appearance)"

    s = sub.add_parser("label", help="label body records by BMI-for-age weight status")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("synth", help="generate a synthetic cohort")
    s.add_argument("config", nargs="?", help="JSON run config (optional 'cohort', 'n', 'seed')")
    s.add_argument("output")
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int, help=f"number of records (default {DEFAULT_COHORT_SIZE})")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", help="stratified train/test split")
    s.add_argument("input")
    s.add_argument("train")
    s.add_argument("test")
    s.add_argument("--fraction", type=_fraction, required=True,
                   help="training fraction, decimal or ratio such as 1371/3355")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--classes", help=classes_help)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("fit", help="closed-form mapping for a parametric family")
    s.add_argument("train")
    s.add_argument("mapping")
    s.add_argument("--family", required=True,
                   choices=[f.value for f in Family if f is not Family.AFFINE])
    s.add_argument("--shape", type=float, help="known shared gamma shape")
    s.add_argument("--classes", help=classes_help)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("learn", help="learn an affine mapping with the genetic search")
    s.add_argument("train")
    s.add_argument("mapping")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--classes", help=classes_help)
    s.set_defaults(func=cmd_learn)

    for name, func, text in (("encode", cmd_encode, "privatize a labeled CSV"),
                             ("decode", cmd_decode, "recover the original features")):
        s = sub.add_parser(name, help=text)
        s.add_argument("input")
        s.add_argument("output")
        s.add_argument("--mapping", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("eval", help="attack raw and encoded data and write a report")
    s.add_argument("train")
    s.add_argument("test")
    s.add_argument("--mapping", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"privmap {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PrivmapError, ValueError, OSError) as exc:
        print(f"privmap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
