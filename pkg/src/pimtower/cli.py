"""Command-line driver: ``pimtower <command> --map FILE [options]``.

Every command prints line-oriented key=value records and exits with 0 on
pass/pass-at-depth, 1 on fail, 2 on inconclusive and 3 on usage or parse
errors.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .core.entropy import check_P1_P2
from .core.intervals import Interval, parse_rational
from .core.maps import PiecewiseMap, parse_map
from .core.partition import DEFAULT_CELL_BUDGET
from .errors import (
    BudgetExceeded,
    ExactModeRequired,
    NoStationaryDensity,
    NotMarkov,
    ParseError,
    PimError,
    PreconditionUnverified,
    SchemeConstructionError,
    Unsaturated,
    ZeroBaseMass,
)
from .inducing import (
    ALL_CONDITIONS,
    NICE,
    NOT_NICE,
    build_canonical_scheme,
    certify_nice,
    check_conditions,
    check_deficit_decay,
    check_nested_or_disjoint,
    dump_scheme,
    embed_in_tower,
    parse_scheme,
)
from .measure import (
    DEFAULT_TEST_DEPTH,
    RationalMeasure,
    dump_measure,
    kac_roundtrip_check,
    lift_measure,
    markov_invariant_density,
    parse_measure,
)
from .reports import ConditionReport, Numeric, Verdict, combined_exit_code
from .thermo import (
    AffinePotential,
    ConstantPotential,
    NegLogDerivative,
    check_H2,
    enumerate_cylinders,
    holder_fit,
    recc_summability,
    variation_Vn,
)
from .tower import build_tower, check_markov, dump_tower

COMMANDS = ("tower", "nice", "scheme", "check", "lift", "kac", "thermo", "report")
BUDGET_ENV = "PIMTOWER_BUDGET"

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    command: str
    map_file: Optional[str] = None
    depth: int = 5
    tau_max: int = 3
    horizon: int = 10
    test_depth: int = DEFAULT_TEST_DEPTH
    m_max: int = 6
    n_max: int = 4
    k_max: int = 4
    budget: int = DEFAULT_CELL_BUDGET
    nice: Optional[str] = None
    nice_plus: Optional[str] = None
    extended: bool = False
    scheme_file: Optional[str] = None
    measure: Optional[str] = None
    potential: str = "x"
    epsilon: str = "1/10"
    pl_bound: float = 0.0
    cylinders: bool = False
    bundle: Optional[str] = None
    output: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        for name in ("depth", "tau_max", "horizon", "test_depth", "m_max", "n_max", "k_max"):
            if getattr(self, name) < 0:
                raise UsageError(f"--{name.replace('_', '-')} must be nonnegative")
        if self.budget < 1:
            raise UsageError("--budget must be at least 1")


def _default_budget() -> int:
    raw = os.environ.get(BUDGET_ENV)
    if raw is None:
        return DEFAULT_CELL_BUDGET
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{BUDGET_ENV} must be an integer, got {raw!r}") from None


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pimtower", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--map", dest="map_file")
    p.add_argument("--depth", type=int, default=5, help="tower depth")
    p.add_argument("--tau-max", type=int, default=3)
    p.add_argument("--horizon", type=int, default=10, help="nice-set orbit horizon")
    p.add_argument("--test-depth", type=int, default=DEFAULT_TEST_DEPTH)
    p.add_argument("--m-max", type=int, default=6)
    p.add_argument("--n-max", type=int, default=4, help="cylinder / entropy depth")
    p.add_argument("--k-max", type=int, default=4, help="Markov check depth")
    p.add_argument("--budget", type=int, default=None, help=f"enumeration cap (env {BUDGET_ENV})")
    p.add_argument("--nice", help="candidate nice set lo..hi")
    p.add_argument("--nice-plus", help="neighbourhood V+ lo..hi for extended schemes")
    p.add_argument("--extended", action="store_true")
    p.add_argument("--scheme", dest="scheme_file")
    p.add_argument("--measure", help="measure file, or 'lebesgue' / 'markov'")
    p.add_argument("--potential", default="x", help="x | const:c | neglog:t")
    p.add_argument("--epsilon", default="1/10")
    p.add_argument("--pl-bound", type=float, default=0.0)
    p.add_argument("--cylinders", action="store_true", help="emit cyl records")
    p.add_argument("--bundle", help="file of command lines for 'report'")
    p.add_argument("--out", dest="output")
    return p


def parse_args(argv: Sequence[str]) -> RunConfig:
    ns = make_parser().parse_args(list(argv))
    fields = vars(ns)
    if fields["budget"] is None:
        fields["budget"] = _default_budget()
    return RunConfig(**fields)


# -- loading -----------------------------------------------------------------------


def _read(path: Optional[str], what: str) -> str:
    if not path:
        raise UsageError(f"--{what} is required for this command")
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {what} file {path}: {exc.strerror}") from None


def _load_map(cfg: RunConfig) -> PiecewiseMap:
    return parse_map(_read(cfg.map_file, "map"))


def _interval(text: Optional[str], what: str) -> Interval:
    if not text:
        raise UsageError(f"--{what} lo..hi is required")
    return Interval.parse(text)


def _load_scheme(cfg: RunConfig, fmap: PiecewiseMap, lines: list[str]):
    """Scheme from --scheme, or the canonical scheme of --nice; returns (scheme, V or None)."""
    if cfg.scheme_file:
        return parse_scheme(_read(cfg.scheme_file, "scheme"), fmap), None
    V = _interval(cfg.nice, "nice")
    cert = certify_nice(fmap, V, cfg.horizon)
    lines.append(cert.render())
    if cert.verdict != NICE:
        raise PreconditionUnverified(
            f"{V} is not certified nice", _cert_report(cert)
        )
    V_plus = Interval.parse(cfg.nice_plus) if cfg.nice_plus else None
    scheme = build_canonical_scheme(fmap, cert, cfg.tau_max, cfg.extended, V_plus, cfg.budget)
    return scheme, V


def _cert_report(cert) -> ConditionReport:
    if cert.verdict == NOT_NICE:
        return ConditionReport(
            "Nice", Verdict.FAIL, cert.horizon, witness={"point": cert.witness[0], "n": cert.witness[1]}
        )
    if cert.verdict == NICE:
        verdict = Verdict.PASS if cert.exact else Verdict.PASS_AT_DEPTH
        return ConditionReport("Nice", verdict, cert.horizon, info={"class": cert.boundary_orbit_class})
    return ConditionReport("Nice", Verdict.INCONCLUSIVE, cert.horizon, info={"class": cert.boundary_orbit_class})


def _load_measure(cfg: RunConfig, fmap: PiecewiseMap, base: Optional[Interval] = None) -> RationalMeasure:
    if cfg.measure == "lebesgue":
        return RationalMeasure.lebesgue(base if base is not None else fmap.ambient)
    if cfg.measure == "markov":
        return markov_invariant_density(fmap)
    return parse_measure(_read(cfg.measure, "measure"))


def _potential(text: str, fmap: PiecewiseMap):
    kind, _, arg = text.partition(":")
    if kind == "x":
        return AffinePotential.identity(fmap)
    if kind == "const":
        return ConstantPotential(parse_rational(arg))
    if kind == "neglog":
        return NegLogDerivative(parse_rational(arg or "1"))
    raise UsageError(f"unknown potential {text!r}; expected x, const:c or neglog:t")


def _power_of_two(q: Fraction) -> str:
    if q > 0 and q.numerator == 1 and q.denominator & (q.denominator - 1) == 0:
        return f"2^-{q.denominator.bit_length() - 1}"
    return str(q)


# -- commands ----------------------------------------------------------------------


def _cmd_tower(cfg, fmap, lines):
    tower = build_tower(fmap, cfg.depth, cfg.budget)
    lines.extend(dump_tower(tower).splitlines())
    reports = [check_markov(tower, fmap, cfg.k_max), *check_P1_P2(fmap, max(cfg.n_max, 1), cell_budget=cfg.budget)]
    return reports


def _cmd_nice(cfg, fmap, lines):
    cert = certify_nice(fmap, _interval(cfg.nice, "nice"), cfg.horizon)
    lines.append(cert.render())
    return [_cert_report(cert)]


def _cmd_scheme(cfg, fmap, lines):
    scheme, _ = _load_scheme(cfg, fmap, lines)
    text = dump_scheme(scheme)
    lines.extend(text.splitlines())
    return []


def _cmd_check(cfg, fmap, lines):
    scheme, V = _load_scheme(cfg, fmap, lines)
    which = ALL_CONDITIONS if scheme.extended else ("H1", "H2", "C", "M")
    reports = check_conditions(fmap, scheme, cfg.m_max, which)
    if V is not None:
        reports.append(check_nested_or_disjoint(fmap, V, cfg.tau_max))
        reports.append(check_deficit_decay(scheme))
    by_name: dict = {r.condition: r for r in reports}
    if by_name["M"].ok and by_name["C"].ok:
        tower = build_tower(fmap, cfg.depth, cfg.budget)
        try:
            reports.append(embed_in_tower(scheme, tower, fmap, cfg.budget, by_name["M"], by_name["C"]))
        except PreconditionUnverified as exc:
            reports.append(f"FirstReturn skipped reason={_token(str(exc))}")
    else:
        reports.append("FirstReturn skipped reason=M-or-C-not-passing")
    return reports


def _cmd_lift(cfg, fmap, lines):
    scheme, _ = _load_scheme(cfg, fmap, lines)
    nu = _load_measure(cfg, fmap, scheme.base)
    res = lift_measure(scheme, nu, fmap)
    lines.append(
        f"lift Q={res.Q} Q_lower={res.Q_lower} uncaptured={res.uncaptured} truncated={int(res.truncated)}"
    )
    lines.append("X " + " ".join(iv.dump() for iv in res.support_set_X))
    lines.extend(dump_measure(res.measure).splitlines())
    return []


def _cmd_kac(cfg, fmap, lines):
    scheme, _ = _load_scheme(cfg, fmap, lines)
    mu = _load_measure(cfg, fmap)
    tower = build_tower(fmap, cfg.depth, cfg.budget)
    rep = kac_roundtrip_check(scheme, tower, fmap, mu, cfg.test_depth)
    lines.append(f"Kac Q={rep.info['Q']} target={rep.info['target']} err<={_power_of_two(rep.info['kac_tol'])}")
    return [rep]


def _cmd_thermo(cfg, fmap, lines):
    scheme, _ = _load_scheme(cfg, fmap, lines)
    phi = _potential(cfg.potential, fmap)
    if cfg.cylinders:
        levels, _ = enumerate_cylinders(scheme, fmap, cfg.n_max, cfg.budget)
        for cyls in levels.values():
            lines.extend(c.render() for c in cyls)
    variations = [variation_Vn(scheme, fmap, phi, n, cfg.budget) for n in range(1, cfg.n_max + 1)]
    lines.extend(v.render() for v in variations)
    fit = holder_fit(variations)
    lines.append(f"Holder A={Numeric(fit.fitted_A)} gamma={Numeric(fit.fitted_gamma)} verdict={fit.verdict}")
    sum1, sum2 = recc_summability(scheme, fmap, phi, parse_rational(cfg.epsilon), cfg.pl_bound, scheme.tau_max)
    lines.append(sum1.render())
    lines.append(sum2.render())
    reports = [check_H2(scheme, fmap, cfg.n_max, cfg.budget)]
    return reports


HANDLERS = {
    "tower": _cmd_tower,
    "nice": _cmd_nice,
    "scheme": _cmd_scheme,
    "check": _cmd_check,
    "lift": _cmd_lift,
    "kac": _cmd_kac,
    "thermo": _cmd_thermo,
}


def _token(text: str) -> str:
    return "-".join(text.split())


def _error_code(exc: Exception) -> int:
    if isinstance(exc, (UsageError, ParseError, ExactModeRequired)):
        return EXIT_USAGE
    if isinstance(exc, PreconditionUnverified):
        rep = exc.report
        return EXIT_FAIL if rep is not None and rep.verdict.exit_code == EXIT_FAIL else EXIT_INCONCLUSIVE
    if isinstance(exc, (BudgetExceeded, Unsaturated)):
        return EXIT_INCONCLUSIVE
    if isinstance(exc, (ZeroBaseMass, NotMarkov, NoStationaryDensity, SchemeConstructionError)):
        return EXIT_FAIL
    return EXIT_INCONCLUSIVE


def run(cfg: RunConfig) -> tuple[int, list[str]]:
    """Execute one stage; returns the exit code and the report lines."""
    lines: list[str] = []
    try:
        if cfg.command == "report":
            code, text = report_bundle(load_bundle(cfg))
            return code, text.splitlines()
        fmap = _load_map(cfg)
        reports = HANDLERS[cfg.command](cfg, fmap, lines)
    except (UsageError, PimError) as exc:
        code = _error_code(exc)
        kind = "usage" if code == EXIT_USAGE else type(exc).__name__
        lines.append(f"error kind={kind} message={_token(str(exc))}")
        if isinstance(exc, PreconditionUnverified) and exc.report is not None:
            lines.append(exc.report.render())
        return code, lines
    # handlers may interleave plain note lines with their reports
    lines.extend(r if isinstance(r, str) else r.render() for r in reports)
    return combined_exit_code([r for r in reports if not isinstance(r, str)]), lines


def load_bundle(cfg: RunConfig) -> list[RunConfig]:
    text = _read(cfg.bundle, "bundle")
    configs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            sub = parse_args(shlex.split(line))
        except UsageError as exc:
            raise ParseError(str(exc), lineno) from None
        if sub.command == "report":
            raise ParseError("bundles cannot nest", lineno)
        configs.append(sub)
    return configs


def report_bundle(configs: Sequence[RunConfig]) -> tuple[int, str]:
    """Run every stage in order; the bundle's exit code is the largest stage code."""
    out = []
    code = EXIT_PASS
    for k, cfg in enumerate(configs, start=1):
        stage_code, lines = run(cfg)
        out.append(f"== stage {k} command={cfg.command} exit={stage_code}")
        out.extend(lines)
        code = max(code, stage_code)
    return code, "".join(line + "\n" for line in out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        print(f"error kind=usage message={_token(str(exc))}", file=sys.stderr)
        return EXIT_USAGE
    code, lines = run(cfg)
    text = "".join(line + "\n" for line in lines)
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
