"""Darboux charts: odd Poisson bracket, BV Laplacian, semidensities.

Sign conventions in force (all validated by the exact identity suite in
the test corpus, which is normative):

* bracket:  {f,g} = sum_i (-1)^{|z^i|} [ (f d<-/dz^i)(d->g/dz+_i)
                                         - (f d<-/dz+_i)(d->g/dz^i) ],
  giving {x, x+} = +1 for even x and {b, b+} = -1 for odd b;
* Laplacian:  Delta f = + sum_i d->/dz^i (d->f/dz+_i),
  pinned by the Leibniz-failure identity
  Delta(fg) = (Delta f)g + (-1)^{|f|}{f,g} + (-1)^{|f|} f (Delta g).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .algebra import GradedPolynomial, Signature, SignatureMismatch


class ChartError(ValueError):
    pass


class Chart:
    """Darboux chart: ordered coordinate/anti-coordinate pairs plus a measure label.

    Every generator of the signature belongs to exactly one pair and the
    anti-coordinate degree is forced: |z+| = -|z| - 1.  The reference
    measure is the constant (Lebesgue-type) volume on the even top
    coordinates of the body, recorded only by its label.
    """

    def __init__(self, signature: Signature, pairs: list[tuple[str, str]],
                 measure_label: str = "Omega"):
        self.signature = signature
        self.measure_label = measure_label
        seen: set[str] = set()
        index_pairs = []
        for coord, anti in pairs:
            g = signature.generator(coord)
            ga = signature.generator(anti)
            if ga.ghost_degree != -g.ghost_degree - 1:
                raise ChartError(
                    f"anti-coordinate {anti!r} must have ghost degree "
                    f"{-g.ghost_degree - 1}, found {ga.ghost_degree}")
            for name in (coord, anti):
                if name in seen:
                    raise ChartError(f"generator {name!r} appears in two pairs")
                seen.add(name)
            index_pairs.append((signature.index[coord], signature.index[anti]))
        missing = {g.name for g in signature.generators} - seen
        if missing:
            raise ChartError(f"generators {sorted(missing)} belong to no pair")
        self.pairs = tuple(pairs)
        self._index_pairs = tuple(index_pairs)
        self._anti_of = {c: a for c, a in pairs}
        self._coord_of = {a: c for c, a in pairs}

    @classmethod
    def build(cls, coords: list[tuple[str, int]],
              anti_prefix: str = "", anti_suffix: str = "_a",
              measure_label: str = "Omega") -> "Chart":
        """Convenience constructor: coordinates plus auto-named anti-coordinates."""
        from .algebra import Generator
        gens = []
        pairs = []
        for name, deg in coords:
            anti = f"{anti_prefix}{name}{anti_suffix}"
            gens.append(Generator(name, deg))
            pairs.append((name, anti))
        for name, deg in coords:
            gens.append(Generator(f"{anti_prefix}{name}{anti_suffix}", -deg - 1))
        return cls(Signature(gens), pairs, measure_label)

    # -- structure queries ---------------------------------------------------

    def coordinates(self) -> list[str]:
        return [c for c, _ in self.pairs]

    def anti_coordinates(self) -> list[str]:
        return [a for _, a in self.pairs]

    def anti_of(self, coord: str) -> str:
        return self._anti_of[coord]

    def coord_of(self, anti: str) -> str:
        return self._coord_of[anti]

    def is_anti(self, name: str) -> bool:
        return name in self._coord_of

    def body_coordinates(self) -> list[str]:
        """Even coordinates of the body (ghost degree 0 coordinates)."""
        return [c for c, _ in self.pairs
                if self.signature.generator(c).ghost_degree % 2 == 0]

    def _check(self, f: GradedPolynomial) -> None:
        if f.signature != self.signature:
            raise SignatureMismatch("polynomial does not live on this chart")

    def __repr__(self) -> str:
        ps = ", ".join(f"({c},{a})" for c, a in self.pairs)
        return f"Chart[{ps}; {self.measure_label}]"


# Spec alias: the chart type is the Darboux data.
DarbouxChart = Chart


def poisson_bracket(f: GradedPolynomial, g: GradedPolynomial,
                    chart: Chart) -> GradedPolynomial:
    """Odd Poisson bracket (antibracket) in Darboux coordinates."""
    chart._check(f)
    chart._check(g)
    sig = chart.signature
    out = GradedPolynomial.zero(sig)
    for zi, zdi in chart._index_pairs:
        z_name = sig.generators[zi].name
        zd_name = sig.generators[zdi].name
        term = (f.derive(z_name, "right") * g.derive(zd_name, "left")
                - f.derive(zd_name, "right") * g.derive(z_name, "left"))
        if sig.parities[zi]:
            term = -term
        out = out + term
    return out


def bv_laplacian(f: GradedPolynomial, chart: Chart) -> GradedPolynomial:
    """BV Laplacian for the chart's constant reference measure."""
    chart._check(f)
    sig = chart.signature
    out = GradedPolynomial.zero(sig)
    for zi, zdi in chart._index_pairs:
        z_name = sig.generators[zi].name
        zd_name = sig.generators[zdi].name
        out = out + f.derive(zd_name, "left").derive(z_name, "left")
    return out


@dataclass
class Semidensity:
    """Semidensity in normal form f*Omega over a chart.

    ``exp_action`` holds the optional wrapper payload e^{iS/hbar}: the
    semidensity then reads  payload * e^{i*exp_action/hbar} * Omega.
    """

    payload: GradedPolynomial
    chart: Chart
    exp_action: GradedPolynomial | None = field(default=None)

    def __post_init__(self):
        self.chart._check(self.payload)
        if self.exp_action is not None:
            self.chart._check(self.exp_action)

    def ghost_degree(self) -> int | None:
        return self.payload.ghost_degree()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Semidensity):
            return NotImplemented
        return (self.chart is other.chart and self.payload == other.payload
                and self.exp_action == other.exp_action)

    def __str__(self) -> str:
        base = f"[({self.payload})*{self.chart.measure_label}]"
        if self.exp_action is not None:
            return f"[({self.payload})*exp(i*({self.exp_action})/hbar)*{self.chart.measure_label}]"
        return base


def delta_on_semidensity(s: Semidensity) -> Semidensity:
    """BV operator on a normal-form semidensity: [f*Omega] -> [(Delta f)*Omega]."""
    if s.exp_action is not None:
        raise ChartError("exponential-wrapper semidensities are handled by "
                         "master_equations.check_qme, not by the raw BV operator")
    return Semidensity(bv_laplacian(s.payload, s.chart), s.chart)


def lie_derivative(q: GradedPolynomial, s: Semidensity) -> Semidensity:
    """Lie derivative L_Q = [[Q, Delta]] acting on semidensities."""
    if s.exp_action is not None:
        raise ChartError("Lie derivative expects a polynomial-payload semidensity")
    par = q.parity()
    if par is None:
        raise ChartError("Lie derivative needs a parity-homogeneous hamiltonian")
    chart = s.chart
    chart._check(q)
    first = q * bv_laplacian(s.payload, chart)
    second = bv_laplacian(q * s.payload, chart)
    payload = first - second if par == 0 else first + second
    return Semidensity(payload, chart)
