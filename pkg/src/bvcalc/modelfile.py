"""Declarative model files (TOML) for the command-line front end.

A model file declares the chart (coordinates with ghost degrees and
anti-coordinate names), the action, optional symmetry tables, gauge
fermions, the measure, truncation and quadrature settings, and task
parameters.  Expression strings use the polynomial grammar; localization
integrands use a separate numeric trig-expression evaluator.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .algebra import Generator, GradedPolynomial, Signature
from .chart import Chart
from .grammar import ParseError, parse_polynomial
from .integration import GaugeFermion, IntegrationError
from .localization import FixedPoint, LocalizationError, SymplecticModel
from .master import MasterAction, SymmetryData, SymmetryShapeError, first_order_action


class ModelError(ValueError):
    pass


@dataclass
class ModelFile:
    name: str
    chart: Chart
    s0: GradedPolynomial
    symmetry: SymmetryData | None
    s_extra: GradedPolynomial
    fermions: dict[str, GaugeFermion]
    truncation: dict
    quadrature: dict
    localization: SymplecticModel | None
    tasks: dict
    path: str = ""

    def s1(self) -> GradedPolynomial:
        if self.symmetry is None:
            return GradedPolynomial.zero(self.chart.signature)
        return first_order_action(self.symmetry, self.chart)

    def master_action(self) -> MasterAction:
        total = self.s0 + self.s1() + self.s_extra
        return MasterAction(total, self.chart,
                            [self.s0, self.s1() + self.s_extra])


def _parse_expr(text: str, signature: Signature, context: str) -> GradedPolynomial:
    try:
        return parse_polynomial(text, signature)
    except ParseError as exc:
        raise ModelError(f"in {context}: {exc}") from exc


def _index_key(key: str, arity: int, bound: list[int], context: str) -> tuple[int, ...]:
    parts = [p.strip() for p in key.split(",")]
    if len(parts) != arity:
        raise ModelError(f"{context}: key {key!r} needs {arity} indices")
    try:
        idx = tuple(int(p) for p in parts)
    except ValueError:
        raise ModelError(f"{context}: non-integer index in {key!r}") from None
    for k, n in zip(idx, bound):
        if not 0 <= k < n:
            raise ModelError(f"{context}: index {k} out of range in {key!r}")
    return idx


def load_model(path: str | Path) -> ModelFile:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ModelError(f"model file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ModelError(f"malformed model file {path}: {exc}") from exc

    name = data.get("name", path.stem)
    coords = data.get("coordinates")
    if not coords:
        raise ModelError("model declares no [[coordinates]]")
    gens: list[Generator] = []
    pairs: list[tuple[str, str]] = []
    anti_gens: list[Generator] = []
    for entry in coords:
        cname = entry.get("name")
        if not cname:
            raise ModelError("coordinate entry without a name")
        ghost = int(entry.get("ghost", 0))
        anti = entry.get("anti", f"{cname}_a")
        gens.append(Generator(cname, ghost))
        anti_gens.append(Generator(anti, -ghost - 1))
        pairs.append((cname, anti))
    signature = Signature(gens + anti_gens)
    chart = Chart(signature, pairs, data.get("measure", {}).get("volume", "Omega"))

    action_tbl = data.get("action", {})
    s0_text = action_tbl.get("s0")
    if s0_text is None:
        raise ModelError("[action] must declare s0")
    s0 = _parse_expr(s0_text, signature, "action.s0")
    s_extra = GradedPolynomial.zero(signature)
    if "s_extra" in action_tbl:
        s_extra = _parse_expr(action_tbl["s_extra"], signature, "action.s_extra")

    symmetry = None
    if "symmetry" in data:
        sym_tbl = data["symmetry"]
        fields = sym_tbl.get("fields")
        ghosts = sym_tbl.get("ghosts")
        if not fields or not ghosts:
            raise ModelError("[symmetry] needs fields and ghosts lists")
        for gname in list(fields) + list(ghosts):
            if gname not in signature.index:
                raise ModelError(f"symmetry references undeclared name {gname!r}")
        rho_tbl = sym_tbl.get("rho")
        if rho_tbl is None:
            raise ModelError("[symmetry] needs a rho table")
        n_gen, n_dim = len(ghosts), len(fields)
        rho = [[_parse_expr(rho_tbl[a][i], signature, f"symmetry.rho[{a}][{i}]")
                for i in range(n_dim)] for a in range(n_gen)]
        zero = GradedPolynomial.zero(signature)
        T = None
        if "T" in sym_tbl:
            T = [[[zero for _ in range(n_gen)] for _ in range(n_gen)]
                 for _ in range(n_gen)]
            for key, text in sym_tbl["T"].items():
                g, a, b = _index_key(key, 3, [n_gen] * 3, "symmetry.T")
                value = _parse_expr(text, signature, f"symmetry.T[{key}]")
                T[g][a][b] = T[g][a][b] + value
                T[g][b][a] = T[g][b][a] - value
        E = {}
        if "E" in sym_tbl:
            for key, text in sym_tbl["E"].items():
                a, b, i, j = _index_key(key, 4, [n_gen, n_gen, n_dim, n_dim],
                                        "symmetry.E")
                if a == b or i == j:
                    raise ModelError(f"symmetry.E key {key!r} must have distinct pairs")
                value = _parse_expr(text, signature, f"symmetry.E[{key}]")
                sign = 1
                if a > b:
                    a, b = b, a
                    sign = -sign
                block = E.setdefault((a, b), [[zero for _ in range(n_dim)]
                                              for _ in range(n_dim)])
                v = value if sign > 0 else -value
                block[i][j] = block[i][j] + v
                block[j][i] = block[j][i] - v
        try:
            symmetry = SymmetryData(list(fields), list(ghosts), rho, T, E)
        except SymmetryShapeError as exc:
            raise ModelError(f"symmetry tables: {exc}") from exc

    fermions = {}
    for fname, text in data.get("gauge_fermions", {}).items():
        psi = _parse_expr(text, signature, f"gauge_fermions.{fname}")
        try:
            fermions[fname] = GaugeFermion(psi, chart)
        except IntegrationError as exc:
            raise ModelError(f"gauge fermion {fname!r}: {exc}") from exc

    truncation = {"poly_degree": 6, "hbar_order": 4}
    truncation.update(data.get("truncation", {}))
    quadrature = {"scheme": "gauss-legendre", "nodes": 96}
    quadrature.update(data.get("quadrature", {}))
    tasks = dict(data.get("tasks", {}))

    localization = None
    if "localization" in data:
        localization = _load_localization(data["localization"], name)

    return ModelFile(name, chart, s0, symmetry, s_extra, fermions,
                     truncation, quadrature, localization, tasks, str(path))


# ---------------------------------------------------------------------------
# numeric trig expressions for localization samplers


_ALLOWED_CALLS = {"sin": np.sin, "cos": np.cos, "tan": np.tan,
                  "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}
_ALLOWED_NAMES = {"pi": math.pi, "i": 1j}


class _ExprChecker(ast.NodeVisitor):
    def __init__(self, variables: list[str]):
        self.variables = set(variables) | {"hbar"}

    def generic_visit(self, node):
        allowed = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant,
                   ast.Name, ast.Call, ast.Add, ast.Sub, ast.Mult, ast.Div,
                   ast.Pow, ast.USub, ast.UAdd, ast.Load)
        if not isinstance(node, allowed):
            raise ModelError(
                f"localization integrand: disallowed syntax {type(node).__name__}")
        super().generic_visit(node)

    def visit_Call(self, node):
        if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_CALLS:
            raise ModelError("localization integrand: only sin/cos/tan/exp/sqrt/abs calls")
        for arg in node.args:
            self.visit(arg)
        if node.keywords:
            raise ModelError("localization integrand: keyword arguments not allowed")

    def visit_Name(self, node):
        if node.id not in self.variables and node.id not in _ALLOWED_CALLS \
                and node.id not in _ALLOWED_NAMES:
            raise ModelError(f"localization integrand: unknown name {node.id!r}")


def compile_trig_expression(text: str, variables: list[str]):
    """Compile a numeric trig expression into a sampler over numpy meshes."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ModelError(f"localization integrand: {exc}") from exc
    _ExprChecker(variables).visit(tree)
    code = compile(tree, "<integrand>", "eval")

    def sampler(mesh: dict, hbar: float):
        env = dict(_ALLOWED_CALLS)
        env.update(_ALLOWED_NAMES)
        env.update(mesh)
        env["hbar"] = hbar
        return eval(code, {"__builtins__": {}}, env)

    return sampler


def _load_localization(tbl: dict, model_name: str) -> SymplecticModel:
    try:
        m = int(tbl["m"])
        variables = list(tbl["variables"])
        ranges = [(float(a), float(b)) for a, b in tbl["ranges"]]
        integrand = tbl["integrand"]
    except KeyError as exc:
        raise ModelError(f"[localization] missing key {exc}") from exc
    sampler = compile_trig_expression(integrand, variables)
    fixed_points = []
    for fp in tbl.get("fixed_points", []):
        fixed_points.append(FixedPoint(
            h_value=float(fp["h"]),
            hessian=[[float(v) for v in row] for row in fp["hessian"]],
            sqrt_det_omega=float(fp.get("sqrt_det_omega", 1.0))))
    if not fixed_points:
        raise ModelError("[localization] declares no fixed points")
    try:
        return SymplecticModel(
            m=m, variables=variables, ranges=ranges, sampler=sampler,
            fixed_points=fixed_points, name=model_name,
            phase_scale=float(tbl.get("phase_scale", 2.0)))
    except LocalizationError as exc:
        raise ModelError(f"[localization]: {exc}") from exc
