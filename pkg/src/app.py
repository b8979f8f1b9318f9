"""Command-line entrypoint: certificates, prime lists, formula evaluation and density sweeps."""

import argparse
import importlib.metadata
import json
import logging
import os
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ValidationError

from config import DEFAULT_CONFIG_PATH, Config, get_bootstrap_log_level, load_config
from density_stats import (
    count_Tp,
    empirical_density_sweep,
    lenstra_bound_check,
    lower_bound_density,
    population_sweep,
    sl2_trace_count,
    tp_members,
    twist_closure_holds,
    write_csv,
    write_svg,
    zeta_tail,
)
from ec_core import BadReduction, CurveQ, InputError, PointCountSettings, count_points, reduce_mod
from extension_builder import build_split_extension, verify_extension
from iwasawa_calc import KidaInput, euler_characteristic_valuation, kida_lambda
from logging_config import setup_logging
from records import CurveArithRecord, IngestReport, ingest_records
from stability_engine import (
    GrowthCertificate,
    PrimeBudgetExhausted,
    StabilityCertificate,
    certify_stability,
    enumerate_congruence_primes,
    screen_for_average_stability,
    selmer_growth_certificate,
    verify_certificate,
)
from sweep_cache import SweepCache
from sweep_runner import SweepInterrupted

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_WITHHELD = 3
EXIT_INTERRUPTED = 130

type Handler = Callable[[argparse.Namespace, Config], int]


class UsageError(Exception):
    """Raised for flag combinations argparse cannot express."""


def _get_config_path(flag: str | None) -> str:
    """Resolve the config file path: flag, then CONFIG_PATH, then the default."""
    return flag or os.getenv("CONFIG_PATH", DEFAULT_CONFIG_PATH)


def _version() -> str:
    try:
        return importlib.metadata.version("ec-stability")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(payload: BaseModel | dict[str, Any] | list[Any], out: Path | None = None) -> None:
    text = payload.model_dump_json(indent=2, by_alias=True) if isinstance(payload, BaseModel) else json.dumps(
        payload, indent=2, ensure_ascii=False
    )
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n", encoding="utf-8")
        logger.info("Wrote %s", out)


def _settings(config: Config) -> PointCountSettings:
    return PointCountSettings(
        threshold=config.point_count_threshold, max_points=config.bsgs_max_points, seed=config.seed
    )


def _load_records(args: argparse.Namespace, config: Config) -> IngestReport:
    path = getattr(args, "records", None) or config.records_path
    if path is None:
        raise UsageError("no records file: pass --records or set records_path in config.yml")
    return ingest_records(path)


def _record_for(args: argparse.Namespace, config: Config) -> CurveArithRecord:
    return _load_records(args, config).get(args.curve)


def _curve_for(args: argparse.Namespace, config: Config) -> CurveQ:
    if getattr(args, "ab", None):
        if len(args.ab) != 2:
            raise UsageError("--ab takes exactly two integers A,B")
        a, b = args.ab
        return CurveQ(a=a, b=b)
    if getattr(args, "curve", None):
        return _record_for(args, config).curve
    raise UsageError("give a curve with --curve LABEL or --ab A,B")


# --- handlers ----------------------------------------------------------------------------------


def _certificate_exit(certificate: StabilityCertificate | GrowthCertificate) -> int:
    return EXIT_OK if certificate.all_asserted else EXIT_WITHHELD


def cmd_certify(args: argparse.Namespace, config: Config) -> int:
    record = _record_for(args, config)
    certificate = certify_stability(
        record.curve,
        args.p,
        args.n,
        args.split,
        record,
        args.budget or config.prime_budget,
        search_from=args.search_from,
        settings=_settings(config),
        workers=config.workers,
        irreducibility_bound=config.irreducibility_search_bound,
    )
    _emit(certificate, args.out)
    return _certificate_exit(certificate)


def cmd_growth(args: argparse.Namespace, config: Config) -> int:
    record = _record_for(args, config)
    result = selmer_growth_certificate(
        record.curve,
        args.p,
        args.n,
        args.split,
        record,
        args.budget or config.prime_budget,
        search_from=args.search_from,
        settings=_settings(config),
        workers=config.workers,
        irreducibility_bound=config.irreducibility_search_bound,
    )
    _emit(result, args.out)
    if isinstance(result, GrowthCertificate):
        return _certificate_exit(result)
    return EXIT_WITHHELD


def cmd_primes(args: argparse.Namespace, config: Config) -> int:
    curve = _curve_for(args, config)
    primes = enumerate_congruence_primes(
        curve, args.p, args.n, args.x, args.mode, settings=_settings(config), workers=config.workers
    )
    _emit({"curve": str(curve), "p": args.p, "n": args.n, "x": args.x, "mode": args.mode, "primes": primes})
    return EXIT_OK


def cmd_extend(args: argparse.Namespace, config: Config) -> int:
    chi = build_split_extension(args.split, args.primes, args.p, args.n)
    if getattr(args, "ab", None) or getattr(args, "curve", None):
        checklist = verify_extension(chi, args.split, _curve_for(args, config), args.p, _settings(config))
        _emit({"character": chi.model_dump(), "checks": checklist.model_dump()})
        return EXIT_OK if checklist.passed else EXIT_WITHHELD
    _emit(chi)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, config: Config) -> int:
    payload = json.loads(Path(args.certificate).read_text(encoding="utf-8"))
    report = verify_certificate(payload, _settings(config))
    _emit({"kind": report.kind, "passed": report.passed, "items": [item.model_dump() for item in report.items]})
    if not report.passed:
        logger.error("Certificate failed verification: %s", [i.name for i in report.items if not i.passed])
        return EXIT_WITHHELD
    return EXIT_OK


def cmd_kida(args: argparse.Namespace, config: Config) -> int:
    kida = KidaInput(degree=args.degree, lambda_base=args.lambda_base, P1_e=tuple(args.P1), P2_e=tuple(args.P2))
    _emit({"input": kida.model_dump(), "lambda_L": kida_lambda(kida)})
    return EXIT_OK


def cmd_euler(args: argparse.Namespace, config: Config) -> int:
    record = _record_for(args, config)
    if args.reduced_torsion is not None:
        reduced = args.reduced_torsion
    else:
        reduced_curve = reduce_mod(record.curve, args.p)
        if isinstance(reduced_curve, BadReduction):
            raise InputError(f"{record.label} has bad reduction at {args.p}; pass --reduced-torsion")
        reduced = [count_points(reduced_curve, settings=_settings(config))]
    _emit(euler_characteristic_valuation(record, args.p, reduced))
    return EXIT_OK


def cmd_density(args: argparse.Namespace, config: Config) -> int:
    curve = _curve_for(args, config)
    cache = None if args.no_cache else SweepCache(config.cache_dir)
    results = [
        empirical_density_sweep(
            curve,
            args.p,
            args.n,
            x,
            args.mode,
            settings=_settings(config),
            workers=config.workers,
            cache=cache,
            irreducibility_bound=config.irreducibility_search_bound,
        )
        for x in args.sweep
    ]
    if results and results[0].assumptions:
        logger.info("Reference densities assume: %s", "; ".join(results[0].assumptions))
    if args.csv:
        write_csv(results, args.csv)
    else:
        write_csv(results, sys.stdout)
    if args.svg:
        write_svg(results, args.svg, title=f"{curve}, p={args.p}, n={args.n}, mode {args.mode}")
    return EXIT_OK


def cmd_tp_count(args: argparse.Namespace, config: Config) -> int:
    rows = []
    for p in args.p:
        members = tp_members(p)
        rows.append(
            {
                "p": p,
                "count": count_Tp(p),
                "twist_closed": twist_closure_holds(p, members),
                "ratio": len(members) / p**2,
            }
        )
    _emit(rows)
    return EXIT_OK


def cmd_sl2(args: argparse.Namespace, config: Config) -> int:
    brute, closed = sl2_trace_count(args.p)
    print(f"{brute} {closed} {'match' if brute == closed else 'MISMATCH'}")
    return EXIT_OK if brute == closed else EXIT_ERROR


def cmd_bound(args: argparse.Namespace, config: Config) -> int:
    c1 = config.c1
    payload: dict[str, Any] = {"curve_count_bound": lenstra_bound_check(args.p, c1).model_dump()}
    if args.p >= 11:
        lower = lower_bound_density(args.p, c1, config.tolerance)
        payload["lower_bound_density"] = {**lower.model_dump(), "value": lower.value}
    _emit(payload)
    return EXIT_OK


def cmd_population(args: argparse.Namespace, config: Config) -> int:
    results = [population_sweep(args.ell, x, workers=config.workers) for x in args.x]
    write_csv(results, args.csv or sys.stdout)
    return EXIT_OK


def cmd_zeta(args: argparse.Namespace, config: Config) -> int:
    tail = zeta_tail(args.s, config.tolerance)
    _emit(
        {
            "s": args.s,
            "zeta_minus_one": tail.value,
            "zeta": 1 + tail.value,
            "tail_bound": tail.tail_bound,
            "terms": tail.terms,
        }
    )
    return EXIT_OK


def cmd_scan(args: argparse.Namespace, config: Config) -> int:
    report = _load_records(args, config)
    screens = [
        screen_for_average_stability(
            record.curve, args.p, record, _settings(config), config.irreducibility_search_bound
        )
        for record in report.records.values()
    ]
    in_family = [s for s in screens if s.in_family]
    payload: dict[str, Any] = {
        "p": args.p,
        "records": len(screens),
        "rejected_lines": len(report.errors),
        "in_family": len(in_family),
        "conditional": sum(1 for s in in_family if s.conditional),
        "fraction": len(in_family) / len(screens) if screens else 0.0,
        "screens": [
            {"label": s.label, "in_family": s.in_family, "conditions": [c.model_dump() for c in s.conditions]}
            for s in screens
        ],
    }
    if args.p >= 11:
        payload["lower_bound_density"] = lower_bound_density(args.p, config.c1, config.tolerance).value
    _emit(payload)
    return EXIT_OK


# --- parser ------------------------------------------------------------------------------------


def _add_curve_flags(parser: argparse.ArgumentParser, records: bool = True) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--curve", help="label of a record in the records file")
    group.add_argument("--ab", type=_int_list, metavar="A,B", help="coefficients of y² = x³ + Ax + B")
    if records:
        parser.add_argument("--records", type=Path, help="JSON-lines records file (overrides records_path)")


def _add_certificate_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--curve", required=True, help="label of a record in the records file")
    parser.add_argument("--records", type=Path, help="JSON-lines records file (overrides records_path)")
    parser.add_argument("--p", type=int, required=True)
    parser.add_argument("--n", type=int, default=1)
    parser.add_argument("--split", type=_int_list, default=[], metavar="Q1,Q2", help="primes that must split in L")
    parser.add_argument("--budget", type=int, help="largest prime considered for ramification")
    parser.add_argument("--search-from", type=int, default=2, help="smallest prime considered for ramification")
    parser.add_argument("--out", type=Path, help="write the certificate here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ec-stability",
        description="Certify diophantine and Ш-stability of elliptic curves in cyclic p-extensions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    parser.add_argument("--config", help=f"config file (default: $CONFIG_PATH or {DEFAULT_CONFIG_PATH})")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    parser.add_argument("--tolerance", type=float, help="truncation tolerance for series")
    parser.add_argument("--c1", type=float, help="constant of the curve-count bound")
    parser.add_argument("--threshold", type=int, help="largest prime counted exhaustively")
    parser.add_argument("--seed", type=int, help="seed for randomized point sampling")
    parser.add_argument("--workers", type=int, help="worker processes for prime sweeps")
    parser.add_argument("--cache-dir", type=Path, help="sweep cache directory")

    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    certify = sub.add_parser("certify", help="emit a stability certificate")
    _add_certificate_flags(certify)
    certify.set_defaults(handler=cmd_certify)

    growth = sub.add_parser("growth", help="emit a Selmer growth certificate")
    _add_certificate_flags(growth)
    growth.set_defaults(handler=cmd_growth)

    primes = sub.add_parser("primes", help="list primes ℓ ≡ 1 mod pⁿ of mode S or T up to x")
    _add_curve_flags(primes)
    primes.add_argument("--p", type=int, required=True)
    primes.add_argument("--n", type=int, default=1)
    primes.add_argument("--x", type=int, required=True)
    primes.add_argument("--mode", choices=["S", "T"], default="S")
    primes.set_defaults(handler=cmd_primes)

    extend = sub.add_parser("extend", help="build the character of a split extension")
    _add_curve_flags(extend)
    extend.add_argument("--split", type=_int_list, required=True, metavar="Q1,Q2")
    extend.add_argument("--primes", type=_int_list, required=True, metavar="L1,L2,L3")
    extend.add_argument("--p", type=int, required=True)
    extend.add_argument("--n", type=int, default=1)
    extend.set_defaults(handler=cmd_extend)

    verify = sub.add_parser("verify", help="re-validate a certificate file")
    verify.add_argument("certificate", type=Path)
    verify.set_defaults(handler=cmd_verify)

    kida = sub.add_parser("kida", help="evaluate Kida's formula")
    kida.add_argument("--degree", type=int, required=True)
    kida.add_argument("--lambda-base", type=int, required=True)
    kida.add_argument("--P1", type=_int_list, default=[], metavar="E,E")
    kida.add_argument("--P2", type=_int_list, default=[], metavar="E,E")
    kida.set_defaults(handler=cmd_kida)

    euler = sub.add_parser("euler", help="p-adic valuation of the truncated Euler characteristic")
    euler.add_argument("--curve", required=True)
    euler.add_argument("--records", type=Path)
    euler.add_argument("--p", type=int, required=True)
    euler.add_argument("--reduced-torsion", type=_int_list, metavar="T,T")
    euler.set_defaults(handler=cmd_euler)

    density = sub.add_parser("density", help="empirical density sweep")
    _add_curve_flags(density)
    density.add_argument("--p", type=int, required=True)
    density.add_argument("--n", type=int, default=1)
    density.add_argument("--mode", choices=["S", "T", "PEc"], default="S")
    density.add_argument("--sweep", type=_int_list, required=True, metavar="X1,X2")
    density.add_argument("--csv", type=Path)
    density.add_argument("--svg", type=Path)
    density.add_argument("--no-cache", action="store_true")
    density.set_defaults(handler=cmd_density)

    tp = sub.add_parser("tp-count", help="count curves over F_p with p or p+1 points")
    tp.add_argument("--p", type=_int_list, required=True, metavar="P1,P2")
    tp.set_defaults(handler=cmd_tp_count)

    sl2 = sub.add_parser("sl2", help="count SL₂(F_p) elements with trace ≠ 2")
    sl2.add_argument("--p", type=int, required=True)
    sl2.set_defaults(handler=cmd_sl2)

    bound = sub.add_parser("bound", help="check the curve-count bound and the lower density")
    bound.add_argument("--p", type=int, required=True)
    bound.set_defaults(handler=cmd_bound)

    population = sub.add_parser("population", help="good-reduction proportion among curves by height")
    population.add_argument("--ell", type=int, required=True)
    population.add_argument("--x", type=_int_list, required=True, metavar="X1,X2")
    population.add_argument("--csv", type=Path)
    population.set_defaults(handler=cmd_population)

    zeta = sub.add_parser("zeta", help="ζ(s) − 1 with a tail bound")
    zeta.add_argument("--s", type=float, required=True)
    zeta.set_defaults(handler=cmd_zeta)

    scan = sub.add_parser("scan", help="screen records for the average-stability family")
    scan.add_argument("--records", type=Path)
    scan.add_argument("--p", type=int, required=True)
    scan.set_defaults(handler=cmd_scan)

    return parser


def _resolve_config(args: argparse.Namespace) -> Config:
    config_path = _get_config_path(args.config)
    if Path(config_path).exists():
        config = load_config(config_path)
    elif args.config is None and config_path == DEFAULT_CONFIG_PATH:
        logger.debug("No %s, using built-in defaults", config_path)
        config = Config()
    else:
        raise FileNotFoundError(f"Configuration file not found: {config_path}")
    return config.with_overrides(
        log_level=args.log_level,
        tolerance=args.tolerance,
        c1=args.c1,
        point_count_threshold=args.threshold,
        seed=args.seed,
        workers=args.workers,
        cache_dir=args.cache_dir,
    )


def _error(reason: str, **details: Any) -> int:
    print(json.dumps({"error": reason, **details}, ensure_ascii=False))
    return EXIT_ERROR


def run_command(argv: Sequence[str] | None = None) -> int:
    """
    Parse argv, run one subcommand, and map its outcome to an exit code.

    Returns:
        0 on success, 1 on runtime or data errors, 2 on usage errors, 3 when
        conclusions are withheld or a certificate fails verification, 130 on interrupt
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    # Bootstrap logging from the raw config so load-time logs honor the configured level
    setup_logging(args.log_level or get_bootstrap_log_level(_get_config_path(args.config)))

    try:
        config = _resolve_config(args)
    except (FileNotFoundError, ValueError) as e:
        logger.error("Failed to load configuration: %s", e)
        return _error("config", detail=str(e))
    setup_logging(config.log_level, config.logger_levels)

    handler: Handler = args.handler
    try:
        return handler(args, config)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PrimeBudgetExhausted as e:
        logger.error("Prime budget exhausted: %s", e)
        return _error("prime_budget_exhausted", detail=str(e), stats=e.stats.model_dump())
    except (SweepInterrupted, KeyboardInterrupt):
        logger.warning("Interrupted")
        return EXIT_INTERRUPTED
    except ValidationError as e:
        logger.error("Invalid input: %s", e)
        return _error("invalid_input", detail=str(e))
    except (InputError, KeyError, FileNotFoundError, ValueError) as e:
        logger.error("%s", e)
        return _error(type(e).__name__, detail=str(e).strip("'\""))


def main() -> int:
    return run_command(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
