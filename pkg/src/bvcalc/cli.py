"""Batch front end: check, solve, integrate, localize.

Exit codes: 0 = pass/solved, 1 = nonzero residual / obstruction /
inadmissible input of the mathematical kind, 2 = input errors (parse,
shape, precondition).  Reports are deterministic byte-for-byte for a
fixed input and carry the sign conventions in force.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

from .grammar import ParseError, parse_polynomial
from .hpt import (HPTError, ObstructionReport, PreconditionError,
                  koszul_contraction, solve_open_cme, solve_qme_counterterms)
from .integration import (InadmissibleGauge, IntegrationError, LagrangianSpec,
                          bv_expectation, check_involution)
from .localization import (LocalizationError, QuadratureError,
                           dh_fixed_point_sum, dh_lhs_numeric, sphere_model)
from .master import check_cme, check_qme, check_symmetry
from .modelfile import ModelError, load_model
from .scalars import Scalar

CONVENTIONS = {
    "bracket": "{f,g} = sum_i (-1)^{|z^i|} [(f dL/dz^i)(dR g/dz+_i) - (f dL/dz+_i)(dR g/dz^i)]",
    "laplacian": "Delta = + sum_i d/dz^i o d/dz+_i (left derivatives); Delta(x x+) = {x, x+} = 1",
    "ghost_term_factor": "S1 = x+ rho beta - (1/2) beta+ T beta beta",
    "lagrangian_graph": "z+_i = (-1)^{|z^i|} dPsi/dz^i",
    "berezin_order": "integral over [v1..vn] extracts the coefficient of vn...v1",
    "fresnel_branch": "quadratic phases contribute e^{i pi sigma/4}/sqrt|det Q|",
    "measure": "constant (Lebesgue) volume on the body coordinates",
}

EXIT_PASS = 0
EXIT_RESIDUAL = 1
EXIT_INPUT = 2


@dataclass
class Report:
    task: str
    status: str = "pass"           # pass | residual | obstruction | error
    model: str = ""
    residuals: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "task": self.task,
            "model": self.model,
            "status": self.status,
            "residuals": self.residuals,
            "values": self.values,
            "parameters": self.parameters,
            "messages": self.messages,
            "conventions": CONVENTIONS,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def render(self) -> str:
        lines = [f"task: {self.task}"]
        if self.model:
            lines.append(f"model: {self.model}")
        lines.append(f"status: {self.status}")
        for key, value in sorted(self.parameters.items()):
            lines.append(f"  {key} = {value}")
        for key, value in sorted(self.residuals.items()):
            lines.append(f"residual {key}: {value}")
        for key, value in sorted(self.values.items()):
            lines.append(f"{key} = {value}")
        lines.extend(self.messages)
        return "\n".join(lines)


def _emit(report: Report, as_json: bool) -> None:
    print(report.to_json() if as_json else report.render())


def _thread_env() -> int:
    raw = os.environ.get("BVCALC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ModelError(f"BVCALC_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ModelError("BVCALC_THREADS must be >= 1")
    return n


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    model = load_model(args.model)
    report = Report(task=f"check:{args.which}", model=model.name)
    report.parameters["threads"] = _thread_env()
    status = EXIT_PASS

    if args.which == "symmetry":
        if model.symmetry is None:
            raise ModelError("model declares no symmetry block")
        rep = check_symmetry(model.s0, model.symmetry, model.chart)
        for a, r in enumerate(rep.invariance):
            if not r.is_zero():
                report.residuals[f"invariance[{a}]"] = str(r)
        for (a, b), rs in sorted(rep.closure.items()):
            for i, r in enumerate(rs):
                if not r.is_zero():
                    report.residuals[f"closure[{a},{b}][{i}]"] = str(r)
        if report.residuals:
            report.status = "residual"
            status = EXIT_RESIDUAL
    elif args.which == "cme":
        res = check_cme(model.master_action())
        if not res.is_zero():
            report.residuals["{S,S}"] = str(res)
            report.status = "residual"
            status = EXIT_RESIDUAL
    elif args.which == "qme":
        res = check_qme(model.master_action())
        if not res.is_zero():
            report.residuals["(1/2){S,S} - i hbar Delta S"] = str(res)
            report.status = "residual"
            status = EXIT_RESIDUAL
    elif args.which == "involution":
        if not model.fermions:
            raise ModelError("model declares no gauge fermions")
        for fname, fermion in sorted(model.fermions.items()):
            rep = check_involution(LagrangianSpec(fermion=fermion), model.chart)
            for (i, j), b in sorted(rep.brackets.items()):
                if not b.is_zero():
                    report.residuals[f"{fname}:{{c_{i},c_{j}}}"] = str(b)
        if report.residuals:
            report.status = "residual"
            status = EXIT_RESIDUAL
    else:
        raise ModelError(f"unknown check {args.which!r}")
    _emit(report, args.json)
    return status


def cmd_solve(args) -> int:
    model = load_model(args.model)
    report = Report(task=f"solve:{args.which}", model=model.name)
    report.parameters["threads"] = _thread_env()
    report.parameters["max_order"] = args.max_order
    report.parameters["poly_degree"] = model.truncation["poly_degree"]
    status = EXIT_PASS

    if args.which == "open-cme":
        if model.symmetry is None:
            raise ModelError("open-cme solving needs a symmetry block")
        s1 = model.s1()
        contraction = None
        try:
            contraction = koszul_contraction(model.s0, model.chart,
                                             model.truncation["poly_degree"])
        except PreconditionError:
            # closed inputs terminate at first order without one; anything
            # else fails the solver's own precondition (exit 2)
            contraction = None
        result = solve_open_cme(model.s0, s1, contraction, model.chart,
                                max_order=args.max_order)
        if isinstance(result, ObstructionReport):
            report.status = "obstruction"
            report.residuals[f"order-{result.order} class"] = str(result.representative)
            status = EXIT_RESIDUAL
        else:
            for k, layer in enumerate(result.action.layers):
                report.values[f"S[{k}]"] = str(layer)
            report.values["cme_residual"] = str(check_cme(result.action))
            report.parameters["adapted_contraction"] = result.adapted_contraction
    elif args.which == "qme-counterterms":
        action = model.master_action()
        result = solve_qme_counterterms(
            action, model.chart, None, max_order=args.max_order,
            max_degree=model.truncation["poly_degree"])
        if isinstance(result, ObstructionReport):
            report.status = "obstruction"
            minus_ihbar = Scalar.from_rational(0, -1) * Scalar.hbar()
            report.residuals[f"hbar-order-{result.order} anomaly class"] = \
                str(result.representative * (minus_ihbar ** result.order))
            status = EXIT_RESIDUAL
        else:
            report.values["S"] = str(result.action.total)
            for n, t in enumerate(result.counterterms, start=1):
                report.values[f"T[{n}]"] = str(t)
            report.values["qme_residual"] = str(check_qme(result.action))
    else:
        raise ModelError(f"unknown solver {args.which!r}")
    _emit(report, args.json)
    return status


def cmd_integrate(args) -> int:
    model = load_model(args.model)
    report = Report(task="integrate", model=model.name)
    report.parameters["threads"] = _thread_env()
    report.parameters["hbar"] = args.hbar
    report.parameters["observable"] = args.observable
    report.parameters["fermion"] = args.fermion
    if args.fermion not in model.fermions:
        raise ModelError(f"gauge fermion {args.fermion!r} not declared")
    try:
        observable = parse_polynomial(args.observable, model.chart.signature)
    except ParseError as exc:
        raise ModelError(f"observable: {exc}") from exc
    action = model.master_action()
    lag = LagrangianSpec(fermion=model.fermions[args.fermion])
    result = bv_expectation(observable, action, lag, model.chart, args.hbar,
                            nodes=model.quadrature["nodes"])
    report.values["expectation"] = _fmt_complex(result.value)
    report.values["method"] = result.method
    if result.error_estimate is not None:
        report.values["error_estimate"] = result.error_estimate
    status = EXIT_PASS
    if args.compare:
        if args.compare not in model.fermions:
            raise ModelError(f"gauge fermion {args.compare!r} not declared")
        other = bv_expectation(observable, action,
                               LagrangianSpec(fermion=model.fermions[args.compare]),
                               model.chart, args.hbar,
                               nodes=model.quadrature["nodes"])
        report.values["expectation_compare"] = _fmt_complex(other.value)
        scale = max(abs(result.value), abs(other.value), 1e-300)
        rel = abs(result.value - other.value) / scale
        report.values["relative_difference"] = rel
        if rel > args.tolerance:
            report.status = "residual"
            report.messages.append(
                f"gauge dependence above tolerance {args.tolerance}")
            status = EXIT_RESIDUAL
    _emit(report, args.json)
    return status


def cmd_localize(args) -> int:
    if args.model == "builtin:s2":
        model_name = "builtin:s2"
        sym_model = sphere_model()
    else:
        model = load_model(args.model)
        if model.localization is None:
            raise ModelError("model has no [localization] section")
        model_name = model.name
        sym_model = model.localization
    report = Report(task="localize", model=model_name)
    report.parameters["threads"] = _thread_env()
    report.parameters["tolerance"] = args.tolerance
    hbars = [float(h) for h in args.hbar.split(",")]
    status = EXIT_PASS
    for hb in hbars:
        lhs, err = dh_lhs_numeric(sym_model, hb)
        rhs = dh_fixed_point_sum(sym_model, hb)
        rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
        key = f"hbar={hb:g}"
        report.values[key] = {
            "lhs": _fmt_complex(lhs),
            "rhs": _fmt_complex(rhs),
            "relative_error": rel,
            "quadrature_error": err,
        }
        if rel > args.tolerance:
            status = EXIT_RESIDUAL
            report.status = "residual"
    _emit(report, args.json)
    return status


def _fmt_complex(z: complex) -> str:
    return f"{z.real:.15g}{z.imag:+.15g}j"


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bvcalc",
        description="Exact BV calculus: master-equation checks, homological "
                    "solvers, gauge-fixed integrals and localization checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="run an exact residual check")
    p_check.add_argument("model", help="model file (TOML)")
    p_check.add_argument("--which", required=True,
                         choices=["symmetry", "cme", "qme", "involution"])
    p_check.add_argument("--json", action="store_true")

    p_solve = sub.add_parser("solve", help="run a homological solver")
    p_solve.add_argument("model")
    p_solve.add_argument("--which", required=True,
                         choices=["open-cme", "qme-counterterms"])
    p_solve.add_argument("--max-order", type=int, default=8)
    p_solve.add_argument("--json", action="store_true")

    p_int = sub.add_parser("integrate", help="gauge-fixed expectation value")
    p_int.add_argument("model")
    p_int.add_argument("--observable", required=True)
    p_int.add_argument("--hbar", type=float, default=1.0)
    p_int.add_argument("--fermion", required=True)
    p_int.add_argument("--compare", default=None,
                       help="second gauge fermion; assert agreement")
    p_int.add_argument("--tolerance", type=float, default=1e-9)
    p_int.add_argument("--json", action="store_true")

    p_loc = sub.add_parser("localize", help="two-sided localization check")
    p_loc.add_argument("model", help="model file or builtin:s2")
    p_loc.add_argument("--hbar", default="1.0",
                       help="comma-separated list of hbar values")
    p_loc.add_argument("--tolerance", type=float, default=1e-8)
    p_loc.add_argument("--json", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"check": cmd_check, "solve": cmd_solve,
                "integrate": cmd_integrate, "localize": cmd_localize}
    try:
        return handlers[args.command](args)
    except (InadmissibleGauge, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESIDUAL
    except (ModelError, ParseError, HPTError, IntegrationError,
            LocalizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
