"""
tradeoff-lab command-line entry point.

Subcommands: curve, compose, limit, mechanism (calibrate | release | verify | lemma),
coarsen and metrics. Data goes to stdout or --out; logs go to stderr.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from src.core.config import (
    DEFAULT_LOG_LEVEL,
    DEFAULT_SEED_ENV,
    EXIT_CODES,
    LOG_LEVEL_ENV,
    resolve_numerics,
)
from src.core.exceptions import TradeoffError, UsageError
from src.services.coarsen import bin_likelihood_ratios, binned_shift_curve
from src.services.compose import (
    clt_limit,
    clt_moment_sums,
    convergence_report,
    self_compose,
)
from src.services.data_service import (
    read_curve_csv,
    split_report_paths,
    write_curve_csv,
    write_json_report,
)
from src.services.dist import DiscreteDist, ShiftFamily
from src.services.idp import IDPCurveSpec, MixtureSpec, gaussian_fit, idp_curve, mixture_curve
from src.services.mechanism import (
    PoissonMechanismParams,
    StatRange,
    calibrate,
    kernel_lemma_check,
    release_many,
    verify_guarantee,
)
from src.services.neyman import (
    ExperimentPair,
    bernoulli_pair,
    binomial_pair,
    curve,
    discrete_pair,
    gaussian_pair,
    moment_functionals,
    poisson_pair,
    shift_pair,
)
from src.services.tofcurve import blackwell_compare, levy_distance, sup_distance
from src.utils.validation import validate_pair_spec

logger = logging.getLogger("tradeoff_lab")


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str, count: int, name: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",")]
    except ValueError as e:
        raise UsageError(f"--{name} expects {count} comma-separated numbers") from e
    if len(values) != count:
        raise UsageError(f"--{name} expects {count} comma-separated numbers, got {len(values)}")
    return values


def _ints(text: str, name: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",")]
    except ValueError as e:
        raise UsageError(f"--{name} expects comma-separated integers") from e


def load_json(path: str) -> Any:
    """Parse a JSON file, reporting the line and column of syntax errors."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"Cannot read {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e


def load_spec(path: str) -> Dict[str, Any]:
    spec = load_json(path)
    if not isinstance(spec, dict):
        raise UsageError(f"{path}: spec must be a JSON object")
    return spec


def build_pair(spec: Dict[str, Any], numerics: Dict[str, Any]) -> ExperimentPair:
    """Experiment pair from a spec object with a 'kind' discriminator."""
    check = validate_pair_spec(spec)
    if not check["valid"]:
        raise UsageError(check["message"])

    kind = spec["kind"]
    if kind == "poisson":
        return poisson_pair(spec["lambda1"], spec["lambda2"], numerics["poisson_tail"])
    if kind == "bernoulli":
        return bernoulli_pair(spec["p"], spec["q"])
    if kind == "binomial":
        return binomial_pair(spec["n"], spec["p"], spec["q"])
    if kind == "gaussian":
        return gaussian_pair(spec["mu"])
    if kind == "shift":
        family = ShiftFamily(spec["family"], scale=float(spec.get("scale", 1.0)))
        return shift_pair(family, spec["mu"])
    return discrete_pair(
        DiscreteDist.from_atoms(spec["P"]["values"], spec["P"]["masses"], prune=0.0),
        DiscreteDist.from_atoms(spec["Q"]["values"], spec["Q"]["masses"], prune=0.0),
    )


def _pair_from_args(args) -> tuple:
    if args.poisson:
        l1, l2 = _floats(args.poisson, 2, "poisson")
        spec: Dict[str, Any] = {"kind": "poisson", "lambda1": l1, "lambda2": l2}
    elif args.spec:
        spec = load_spec(args.spec)
    else:
        raise UsageError("Give a pair with --spec FILE or --poisson L1,L2")
    numerics = resolve_numerics(spec.get("numerics"))
    return build_pair(spec, numerics), numerics


def cmd_curve(args) -> int:
    pair, numerics = _pair_from_args(args)
    result = curve(pair, numerics["alpha_step"])
    write_curve_csv(result, args.out, numerics["alpha_step"])
    logger.info("Curve written (%s)", result.form)
    return EXIT_CODES["OK"]


def _compose_array(args, numerics: Dict[str, Any]) -> int:
    l1, l2 = _floats(args.bernoulli_array, 2, "bernoulli-array")
    ns = _ints(args.ns, "ns")
    if min(ns) < 1 or max(l1, l2) > min(ns):
        raise UsageError("--ns must be positive and at least the larger rate")
    limit = curve(poisson_pair(l1, l2, numerics["poisson_tail"]))
    rows = convergence_report(
        lambda n: bernoulli_pair(l1 / n, l2 / n), ns, limit, numerics["convolution_cap"]
    )
    report = {
        "array": "bernoulli",
        "lambda1": l1,
        "lambda2": l2,
        "limit": "poisson",
        "rows": rows,
    }
    csv_path, json_path = split_report_paths(args.out)
    if csv_path is None:
        write_json_report(report)
        return EXIT_CODES["OK"]

    last = ns[-1]
    composed = self_compose(
        bernoulli_pair(l1 / last, l2 / last), last, numerics["convolution_cap"]
    )
    write_curve_csv(composed, csv_path, numerics["alpha_step"])
    write_json_report(report, json_path)
    return EXIT_CODES["OK"]


def cmd_compose(args) -> int:
    if args.bernoulli_array:
        numerics = resolve_numerics(load_spec(args.spec).get("numerics") if args.spec else None)
        return _compose_array(args, numerics)

    pair, numerics = _pair_from_args(args)
    if args.n is None or args.n < 1:
        raise UsageError("--n must be a positive integer")
    cap = numerics["convolution_cap"]
    step = curve(pair, numerics["alpha_step"])

    moments = moment_functionals(step)
    report: Dict[str, Any] = {"n": args.n, "per_step": moments.as_dict(), "clt": None}
    if not (moments.kl_infinite or moments.kappa_infinite) and moments.kappa2 > 0:
        sums = clt_moment_sums([step] * args.n)
        limit = clt_limit(sums["kl_sum"], sums["kappa2_sum"])
        report.update(convergence_report(lambda _: pair, [args.n], limit, cap)[0])
        report["clt"] = {**sums, "mu": limit.mu}

    csv_path, json_path = split_report_paths(args.out)
    if csv_path is None:
        write_json_report(report)
        return EXIT_CODES["OK"]

    composed = self_compose(pair, args.n, cap)
    write_curve_csv(composed, csv_path, numerics["alpha_step"])
    write_json_report(report, json_path)
    return EXIT_CODES["OK"]


def _parse_limit_spec(spec: Dict[str, Any], path: str):
    kind = spec.get("kind")
    if kind not in ("idp", "mixture"):
        raise UsageError(f"{path}: field 'kind' must be idp or mixture")
    try:
        if kind == "idp":
            return IDPCurveSpec.from_dict(spec)
        return MixtureSpec.from_dict(spec)
    except (KeyError, TypeError) as e:
        raise UsageError(f"{path}: malformed {kind} spec, missing or bad field {e}") from e


def cmd_limit(args) -> int:
    spec = load_spec(args.spec)
    numerics = resolve_numerics(spec.get("numerics"))
    parsed = _parse_limit_spec(spec, args.spec)
    if isinstance(parsed, IDPCurveSpec):
        idp = dataclasses.replace(parsed, tail=numerics["poisson_tail"])
        result = idp_curve(idp)
        report = {
            "kind": "idp",
            "k": idp.k,
            "s2": idp.s2,
            "tilt_normalizer": idp.tilt_normalizer(),
        }
    else:
        mixture = parsed
        result = mixture_curve(
            mixture, numerics["mixture_alpha_step"], numerics["cross_check_tolerance"]
        )
        report = {
            "kind": "mixture",
            "cross_check_gap": result.metadata["cross_check_gap"],
            "gaussian_fit": gaussian_fit(result),
        }

    csv_path, json_path = split_report_paths(args.out)
    write_curve_csv(result, csv_path, numerics["alpha_step"])
    if json_path is not None:
        write_json_report(report, json_path)
    return EXIT_CODES["OK"]


def _load_params(path: str) -> PoissonMechanismParams:
    data = load_spec(path)
    try:
        return PoissonMechanismParams.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, TradeoffError):
            raise
        raise UsageError(f"{path}: bad mechanism parameters ({e})") from e


def cmd_mechanism(args) -> int:
    if args.action == "calibrate":
        stat_range = StatRange(args.g_min, args.g_max, args.w_g)
        params = calibrate(args.mu1, args.mu2, stat_range, args.w_hg)
        write_json_report(params.to_dict(), args.out)
        return EXIT_CODES["OK"]

    if args.action == "release":
        params = _load_params(args.params)
        seed = args.seed if args.seed is not None else os.environ.get(DEFAULT_SEED_ENV)
        if seed is None:
            raise UsageError(f"Give --seed or set {DEFAULT_SEED_ENV}")
        for value in release_many(params, args.g, int(seed), args.count):
            sys.stdout.write(f"{int(value)}\n")
        return EXIT_CODES["OK"]

    if args.action == "verify":
        params = _load_params(args.params)
        data = load_json(args.pairs)
        pairs = data.get("pairs") if isinstance(data, dict) else data
        numerics = resolve_numerics(data.get("numerics") if isinstance(data, dict) else None)
        if not isinstance(pairs, list):
            raise UsageError(f"{args.pairs}: expected a list of [g1, g2] pairs")
        report = verify_guarantee(
            params,
            [tuple(p) for p in pairs],
            slack_tolerance=numerics["slack_tolerance"],
            step=numerics["verify_alpha_step"],
            tail=numerics["poisson_tail"],
        )
        write_json_report(
            {"rows": report["rows"], "min_slack": report["min_slack"]}, args.out
        )
        return EXIT_CODES["OK"]

    l1, l2 = _floats(args.rates, 2, "rates")
    report = kernel_lemma_check(l1, l2, args.c, args.lam)
    write_json_report(report, args.out)
    return EXIT_CODES["OK"]


def cmd_coarsen(args) -> int:
    family = ShiftFamily(args.family)
    result = binned_shift_curve(family, args.mu, args.width)
    write_curve_csv(result, args.out)
    if args.ratios:
        write_json_report(
            {"bins": bin_likelihood_ratios(family, args.mu, args.width)}, args.ratios
        )
    return EXIT_CODES["OK"]


def cmd_metrics(args) -> int:
    f = read_curve_csv(args.first)
    g = read_curve_csv(args.second)
    comparison = blackwell_compare(f, g)
    write_json_report(
        {
            "sup": sup_distance(f, g),
            "levy": levy_distance(f, g),
            "relation": comparison["relation"],
        },
        args.out,
    )
    return EXIT_CODES["OK"]


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="tradeoff-lab", description="Trade-off function toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser("curve", help="Trade-off curve of a pair spec")
    p.add_argument("--spec")
    p.add_argument("--poisson", help="L1,L2")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_curve)

    p = sub.add_parser("compose", help="n-fold tensor power of a pair")
    p.add_argument("--spec")
    p.add_argument("--poisson", help="L1,L2")
    p.add_argument("--n", type=int)
    p.add_argument("--bernoulli-array", help="L1,L2: rows Ber(L1/n), Ber(L2/n)")
    p.add_argument("--ns", default="50,200")
    p.add_argument("--out", help="CSV path; the JSON report goes next to it")
    p.set_defaults(handler=cmd_compose)

    p = sub.add_parser("limit", help="Infinitely divisible or mixture limit curve")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_limit)

    p = sub.add_parser("mechanism", help="Poisson mechanism")
    actions = p.add_subparsers(dest="action", parser_class=ArgumentParser)
    actions.required = True

    a = actions.add_parser("calibrate")
    a.add_argument("--mu1", type=float, required=True)
    a.add_argument("--mu2", type=float, required=True)
    a.add_argument("--w-g", type=float, required=True)
    a.add_argument("--g-min", type=float, default=float("-inf"))
    a.add_argument("--g-max", type=float, default=float("inf"))
    a.add_argument("--w-hg", type=float)
    a.add_argument("--out")

    a = actions.add_parser("release")
    a.add_argument("--params", required=True)
    a.add_argument("--g", type=float, required=True)
    a.add_argument("--seed", type=int)
    a.add_argument("--count", type=int, default=1)

    a = actions.add_parser("verify")
    a.add_argument("--params", required=True)
    a.add_argument("--pairs", required=True)
    a.add_argument("--out")

    a = actions.add_parser("lemma")
    a.add_argument("--rates", required=True, help="L1,L2")
    a.add_argument("--c", type=float, required=True)
    a.add_argument("--lam", type=float, required=True)
    a.add_argument("--out")
    p.set_defaults(handler=cmd_mechanism)

    p = sub.add_parser("coarsen", help="Binned shift-family curve")
    p.add_argument("--family", choices=["gaussian", "laplace"], required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--width", type=float, required=True)
    p.add_argument("--out")
    p.add_argument("--ratios", help="JSON path for the bin likelihood ratios")
    p.set_defaults(handler=cmd_coarsen)

    p = sub.add_parser("metrics", help="Distances between two curve CSVs")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_metrics)
    return parser


def configure_logging() -> None:
    level = os.environ.get(LOG_LEVEL_ENV, DEFAULT_LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except UsageError as e:
        sys.stderr.write(f"usage error: {e}\n")
        return EXIT_CODES["USAGE"]
    except TradeoffError as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return EXIT_CODES["CONTRACT"]


def main() -> None:
    load_dotenv()
    configure_logging()
    sys.exit(run())


if __name__ == "__main__":
    main()
