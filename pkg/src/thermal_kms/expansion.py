"""Term generation for the perturbative KMS state.

Real-time (Bogoliubov) terms carry i^{n1} (-i)^{n2} / (n1! n2!) and are
evaluated with the 2x2 propagator; imaginary-time (KMS) corrections carry
(-1)^l / l! on the symmetrised box and use the thermal propagator. Every
term also carries 1/Sym(G).

Vertex normalisation: an interaction monomial phi^k/k! contributes its
coupling times a species weight. A real-time vertex enters the Dyson series
through the Lagrangian, i.e. with an extra factor ``REAL_TIME_SIGN = -1``;
a KMS vertex enters through the interaction Hamiltonian with factor +1.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from . import graphs as gr
from .cutoff import CutoffFamily, chi, chidot_hat
from .propagators import (MEASURE_3D, ThermalParams, bose_factors, energy, matsubara_weights,
                          realtime_matrix_entry)
from .quadrature import DEFAULT_MATSUBARA_N, DEFAULT_TOL_ABS, DEFAULT_TOL_REL, QuadResult, integrate_1d

REAL_TIME_SIGN = -1.0
SIMPLEX = "simplex"
BOX = "box"


class ExpansionError(ValueError):
    pass


class AssemblyError(ExpansionError):
    """The term cannot be turned into an evaluable integrand."""


# -- interaction monomials

@dataclass(frozen=True)
class Interaction:
    """Vertex species as (number of legs, weight label)."""

    arity: int
    species: tuple[tuple[int, str], ...]


def interaction(arity: int) -> Interaction:
    """phi^2/2, phi^3/3! or phi^4/4! (+ thermal-mass quadratic vertex for the quartic case)."""
    if arity in (2, 3):
        return Interaction(arity, ((arity, "1"),))
    if arity == 4:
        # normal ordering in the thermal state leaves phi^4/4! + m_beta^2 phi^2/2
        return Interaction(4, ((4, "1"), (2, "thermal_mass")))
    raise ExpansionError(f"unsupported interaction arity {arity}; choose 2, 3 or 4")


# -- terms

@dataclass(frozen=True)
class ExpansionTerm:
    graph: gr.MultiGraph
    coefficient: complex
    kms_order: int
    rt_orders: tuple[int, int]
    vertex_weights: tuple  # per vertex: None for externals, weight label otherwise
    domain: str | None = None  # for kms_order >= 1: SIMPLEX or BOX
    n_ext: int = 2

    def __post_init__(self):
        if self.coefficient == 0:
            raise ExpansionError("zero coefficient")

    @property
    def order(self) -> int:
        return self.kms_order + sum(self.rt_orders)

    def vertex_sign(self) -> float:
        return REAL_TIME_SIGN ** sum(self.rt_orders)

    def to_json_obj(self) -> dict:
        c = complex(self.coefficient)
        return {"coefficient": [c.real, c.imag], "kms_order": self.kms_order,
                "rt_orders": list(self.rt_orders), "domain": self.domain,
                "vertex_weights": list(self.vertex_weights), "graph": self.graph.to_json_obj()}


@dataclass(frozen=True)
class KmsSeries:
    l: int
    sign: int
    weight: float
    slots: tuple[str, ...]


def kms_terms(l: int) -> KmsSeries:
    """Descriptor of the l-th imaginary-time correction on the box (0, beta)^l."""
    if l < 0:
        raise ExpansionError("l must be >= 0")
    return KmsSeries(l, (-1) ** l, 1.0 / math.factorial(l), tuple(f"u{i + 1}" for i in range(l)))


def bogoliubov_prefactor(n1: int, n2: int) -> complex:
    return (1j) ** n1 * (-1j) ** n2 / (math.factorial(n1) * math.factorial(n2))


def _species_splits(n: int, species):
    """Multisets of ``n`` vertex species as count tuples with multinomial weight n!/prod k!."""
    for counts in itertools.product(range(n + 1), repeat=len(species)):
        if sum(counts) == n:
            yield counts, math.factorial(n) // math.prod(math.factorial(c) for c in counts)


def _terms_for(n1, n2, l, inter, n_ext, domain):
    out = []
    prefactor = bogoliubov_prefactor(n1, n2) * (-1) ** l / math.factorial(l)
    if l and domain == SIMPLEX:
        # simplex integral carries no 1/l!
        prefactor *= math.factorial(l)
    for c1, w1 in _species_splits(n1, inter.species):
        for c2, w2 in _species_splits(n2, inter.species):
            for ck, wk in _species_splits(l, inter.species):
                legs, labels = [1] * n_ext, [None] * n_ext
                for counts in (c1, c2, ck):
                    for (k, lab), c in zip(inter.species, counts):
                        legs += [k] * c
                        labels += [lab] * c
                kinds = ([gr.External()] * n_ext + [gr.RealTimeVertex(1)] * n1
                         + [gr.RealTimeVertex(2)] * n2 + [gr.KmsVertex(i) for i in range(l)])
                if sum(legs) % 2:
                    continue
                try:
                    graphs = gr.enumerate_connected(legs)
                except gr.GraphError:
                    continue
                # species placed in a fixed label order; w counts the relabellings
                mult = w1 * w2 * wk
                for g in graphs:
                    try:
                        ag = gr.assign_edge_kinds(g, kinds)
                    except gr.GraphRejected:
                        continue
                    coef = prefactor * mult / gr.symmetry_factor(g)
                    out.append(ExpansionTerm(ag, coef, l, (n1, n2), tuple(labels),
                                             domain=(domain if l else None), n_ext=n_ext))
    return out


def bogoliubov_terms(order: int, interaction_arity: int = 2, n_ext: int = 2,
                     exact_order: bool = False) -> list[ExpansionTerm]:
    """Real-time terms with n1 + n2 <= order (== order if ``exact_order``)."""
    if order < 0:
        raise ExpansionError("order must be >= 0")
    inter = interaction(interaction_arity)
    out = []
    for k in range(order if exact_order else 0, order + 1):
        for n1 in range(k + 1):
            out += _terms_for(n1, k - n1, 0, inter, n_ext, None)
    return out


def kms_expansion_terms(l: int, interaction_arity: int = 2, n_ext: int = 2,
                        domain: str = BOX) -> list[ExpansionTerm]:
    """Pure imaginary-time terms with l KMS insertions and no real-time vertex."""
    if l < 1:
        raise ExpansionError("need at least one KMS insertion")
    return _terms_for(0, 0, l, interaction(interaction_arity), n_ext, domain)


def expansion_terms(order: int, interaction_arity: int = 2, n_ext: int = 2) -> list[ExpansionTerm]:
    """All terms at exactly ``order``: real-time, KMS and mixed splittings."""
    inter = interaction(interaction_arity)
    out = []
    for l in range(order + 1):
        for n1 in range(order - l + 1):
            out += _terms_for(n1, order - l - n1, l, inter, n_ext, BOX)
    return out


def symmetrize_to_box(term: ExpansionTerm) -> ExpansionTerm:
    """Rewrite a simplex-ordered KMS term as a box integral with weight 1/l!."""
    if term.kms_order < 1:
        raise ExpansionError("symmetrisation needs at least one KMS insertion")
    if term.domain == BOX:
        return term
    return ExpansionTerm(term.graph, term.coefficient / math.factorial(term.kms_order), term.kms_order,
                         term.rt_orders, term.vertex_weights, BOX, term.n_ext)


# -- Matsubara-frequency conservation

def _rref(rows: list[list[Fraction]]):
    m = [list(r) for r in rows]
    ncol = len(m[0]) if m else 0
    pivots, r = [], 0
    for c in range(ncol):
        p = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        piv = m[r][c]
        m[r] = [x / piv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


@dataclass(frozen=True)
class FrequencyAssignment:
    """Integer frequencies on the ThermalMixed edges subject to one Kronecker delta per KMS vertex.

    ``edges`` lists the frequency-carrying edges (vertex pairs; a bundled
    parallel class appears once). ``incidence`` has one row per KMS vertex:
    +1 where the edge enters it, -1 where it leaves (edges oriented i < j).
    """

    edges: tuple[tuple[int, int], ...]
    kms_vertices: tuple[int, ...]
    incidence: tuple[tuple[int, ...], ...]
    free: tuple[int, ...]
    pivots: tuple[int, ...]
    pivot_rows: tuple[tuple[Fraction, ...], ...]

    @property
    def n_constraints(self) -> int:
        return len(self.kms_vertices)

    @property
    def n_free(self) -> int:
        return len(self.free)

    def residual(self, n: Sequence[int]) -> list[int]:
        return [sum(a * x for a, x in zip(row, n)) for row in self.incidence]

    def assignments(self, bound: int) -> Iterator[tuple[int, ...]]:
        """All admissible integer vectors with every |n_e| <= bound, free variables varied fastest-last."""
        ne = len(self.edges)
        for vals in itertools.product(range(-bound, bound + 1), repeat=len(self.free)):
            n = [0] * ne
            for c, v in zip(self.free, vals):
                n[c] = v
            ok = True
            for c, row in zip(self.pivots, self.pivot_rows):
                x = -sum(row[f] * n[f] for f in self.free)
                if x.denominator != 1 or abs(x) > bound:
                    ok = False
                    break
                n[c] = int(x)
            if ok:
                yield tuple(n)

    def to_json_obj(self) -> dict:
        return {"edges": [list(e) for e in self.edges], "kms_vertices": list(self.kms_vertices),
                "incidence": [list(r) for r in self.incidence], "free": list(self.free)}


def apply_frequency_conservation(term: ExpansionTerm, bundle_parallel: bool = False) -> FrequencyAssignment:
    """Kronecker constraints from the u-integrals of a box-symmetrised term.

    Each parallel edge carries its own frequency unless ``bundle_parallel``,
    in which case a parallel class carries only its total.
    """
    if term.kms_order >= 1 and term.domain != BOX:
        raise ExpansionError("symmetrise to the box before applying frequency conservation")
    g = term.graph
    kinds = g.vertex_kind
    if bundle_parallel:
        edges = [ij for ij, k in g.edge_kinds if k == gr.EdgeKind.THERMAL_MIXED]
    else:
        ekind = dict(g.edge_kinds)
        edges = [ij for ij in g.edge_list() if ekind[ij] == gr.EdgeKind.THERMAL_MIXED]
    kverts = [v for v, k in enumerate(kinds) if isinstance(k, gr.KmsVertex)]
    inc = []
    for v in kverts:
        inc.append(tuple((1 if j == v else 0) - (1 if i == v else 0) for i, j in edges))
    if edges and inc:
        red, piv = _rref([[Fraction(x) for x in row] for row in inc])
    else:
        red, piv = [], []
    free = tuple(c for c in range(len(edges)) if c not in piv)
    return FrequencyAssignment(tuple(edges), tuple(kverts), tuple(inc), free, tuple(piv),
                               tuple(tuple(r) for r in red))


def brute_force_frequencies(fa: FrequencyAssignment, bound: int) -> set[tuple[int, ...]]:
    out = set()
    for n in itertools.product(range(-bound, bound + 1), repeat=len(fa.edges)):
        if not any(fa.residual(n)):
            out.add(n)
    return out


# -- spatial-momentum conservation

@dataclass(frozen=True)
class MomentumAssignment:
    """Edge momenta as integer combinations of loop momenta and external momenta.

    External vertex i injects q_i with sum_i q_i = 0; the independent
    externals are q_0 .. q_{n_ext-2}. Edge (i, j) carries momentum from i to j.
    """

    edges: tuple[tuple[int, int], ...]
    n_loops: int
    loop_coeffs: tuple[tuple[int, ...], ...]
    ext_coeffs: tuple[tuple[int, ...], ...]
    n_ext: int
    extra_vertex_loops: int = 0

    @property
    def total_loops(self) -> int:
        return self.n_loops + self.extra_vertex_loops

    def edge_momenta(self, loops, ext):
        """3-vectors per edge given loop vectors (n_loops, 3) and independent externals (n_ext-1, 3)."""
        loops = np.asarray(loops, dtype=float).reshape(self.n_loops, 3)
        ext = np.asarray(ext, dtype=float).reshape(max(self.n_ext - 1, 0), 3)
        L = np.asarray(self.loop_coeffs, dtype=float).reshape(len(self.edges), self.n_loops)
        X = np.asarray(self.ext_coeffs, dtype=float).reshape(len(self.edges), max(self.n_ext - 1, 0))
        return L @ loops + X @ ext

    def vertex_residuals(self, loops, ext, n_vertices: int):
        k = self.edge_momenta(loops, ext)
        ext = np.asarray(ext, dtype=float).reshape(max(self.n_ext - 1, 0), 3)
        inj = np.zeros((n_vertices, 3))
        if self.n_ext:
            inj[: self.n_ext - 1] = ext
            inj[self.n_ext - 1] = -ext.sum(axis=0)
        res = inj.copy()
        for (i, j), ke in zip(self.edges, k):
            res[i] -= ke
            res[j] += ke
        return res

    def to_json_obj(self) -> dict:
        return {"edges": [list(e) for e in self.edges], "n_loops": self.n_loops,
                "loop_coeffs": [list(r) for r in self.loop_coeffs],
                "ext_coeffs": [list(r) for r in self.ext_coeffs],
                "extra_vertex_loops": self.extra_vertex_loops}


def tadpole_momentum() -> MomentumAssignment:
    """Single vertex closed on itself (thermal mass): one unconstrained 3-momentum."""
    return MomentumAssignment((), 0, (), (), 0, extra_vertex_loops=1)


def apply_momentum_conservation(term: ExpansionTerm | gr.MultiGraph, n_ext: int | None = None) -> MomentumAssignment:
    """Loop-momentum basis from the fundamental cycles of a BFS spanning tree.

    The number of loops is |E| - |V| + 1 counting external vertices.
    """
    g = term.graph if isinstance(term, ExpansionTerm) else term
    n_ext = (term.n_ext if isinstance(term, ExpansionTerm) else 0) if n_ext is None else n_ext
    if not g.is_connected():
        raise ExpansionError("momentum routing over-constrained: graph is disconnected")
    edges = g.edge_list()
    nv = g.n_vertices
    # BFS tree
    tree, seen, queue = [], {0}, [0]
    while queue:
        v = queue.pop(0)
        for e, (i, j) in enumerate(edges):
            w = j if i == v else (i if j == v else None)
            if w is not None and w not in seen:
                seen.add(w)
                tree.append(e)
                queue.append(w)
    chords = [e for e in range(len(edges)) if e not in tree]
    nl, nx = len(chords), max(n_ext - 1, 0)
    # incidence: rows vertices, cols edges; conservation inj + in - out = 0
    A = np.zeros((nv, len(edges)))
    for e, (i, j) in enumerate(edges):
        A[i, e] -= 1.0
        A[j, e] += 1.0
    inj = np.zeros((nv, nx))
    for a in range(nx):
        inj[a, a] = 1.0
        inj[n_ext - 1, a] = -1.0
    rows = list(range(1, nv))
    At = A[np.ix_(rows, tree)]
    Ac = A[np.ix_(rows, chords)]
    # A_t x_t = -(inj + A_c loops)
    rhs_loop = -Ac
    rhs_ext = -inj[rows]
    xl = np.linalg.solve(At, rhs_loop) if tree else np.zeros((0, nl))
    xe = np.linalg.solve(At, rhs_ext) if tree else np.zeros((0, nx))
    L = np.zeros((len(edges), nl), dtype=int)
    X = np.zeros((len(edges), nx), dtype=int)
    for k, e in enumerate(tree):
        L[e] = np.rint(xl[k]).astype(int)
        X[e] = np.rint(xe[k]).astype(int)
    for k, e in enumerate(chords):
        L[e, k] = 1
    return MomentumAssignment(tuple(edges), nl, tuple(map(tuple, L.tolist())),
                              tuple(map(tuple, X.tolist())), n_ext)


# -- assembly

@dataclass(frozen=True)
class PlanStep:
    kind: str  # "u-box", "u-simplex", "time", "chidot-fourier", "radial", "matsubara"
    detail: str
    lo: float | None = None
    hi: float | None = None


@dataclass
class AssembledIntegrand:
    """Pure integrand plus the integrations still to be done.

    ``func`` takes the imaginary times (KMS terms) or the real vertex times
    (real-time terms) as a 1D array; loop momenta, if any, are passed as a
    second argument of shape (n_loops, 3).
    """

    func: Callable
    plan: tuple[PlanStep, ...]
    prefactor: complex
    n_axes: int
    lo: float
    hi: float
    n_loops: int
    term: ExpansionTerm
    tol_rel: float = DEFAULT_TOL_REL
    tol_abs: float = DEFAULT_TOL_ABS
    meta: dict = field(default_factory=dict)

    def plan_json(self) -> list:
        return [{"kind": s.kind, "detail": s.detail, "lo": s.lo, "hi": s.hi} for s in self.plan]


def _weight_value(label, weights):
    if label is None:
        return 1.0
    if label == "1":
        return 1.0
    if weights and label in weights:
        return float(weights[label])
    raise AssemblyError(f"no numerical value supplied for vertex weight {label!r}")


def thermal_components(du: float, w: float, beta: float) -> tuple[float, float]:
    """Coefficients (c_plus, c_minus) with thermal kernel = c_plus e^{-i w t} + c_minus e^{+i w t}.

    ``du`` is the imaginary-time difference (later-label minus earlier-label)
    on the open strip (-beta, beta), ``du != 0``.
    """
    b_plus, _ = bose_factors(w, beta)
    h = b_plus / (2.0 * w)
    if du < 0:
        return h * math.exp(du * w), h * math.exp(-beta * w - du * w)
    return h * math.exp(-beta * w + du * w), h * math.exp(-du * w)


def assemble_integrand(term: ExpansionTerm, params: ThermalParams, cutoff: CutoffFamily,
                       ext_times: Sequence[float] = (0.0, 0.0), p_vec=(0.0, 0.0, 0.0),
                       weights: dict | None = None, tol_rel: float = DEFAULT_TOL_REL,
                       tol_abs: float = DEFAULT_TOL_ABS, large_time: bool = False) -> AssembledIntegrand:
    """Turn a term into an integrand over its remaining variables.

    KMS-only terms: every real time is integrated analytically against
    chidot in the Fourier domain; the box of imaginary times remains.
    Real-time-only terms: the vertex times remain, weighted by chi; the
    branch sum vanishes once an internal time exceeds every external time,
    so each axis stops at max(ext_times).

    ``large_time`` (KMS terms) keeps only the contributions whose phase in
    the external times is constant, i.e. the part that survives the limit of
    large common external time once smeared over the external momentum.
    """
    g = term.graph
    if g.edge_kinds is None or g.vertex_kind is None:
        raise AssemblyError("graph has no edge-kind annotation")
    if term.n_ext != 2 and g.n_vertices > 0:
        raise AssemblyError("assembly implemented for two-point observables")
    if len(ext_times) != term.n_ext:
        raise AssemblyError("one time per external vertex required")
    mom = apply_momentum_conservation(term)
    kinds = g.vertex_kind
    ext = np.asarray(p_vec, dtype=float).reshape(1, 3)
    beta = params.beta
    edges = list(mom.edges)
    n_rt = sum(term.rt_orders)
    l = term.kms_order
    coef = term.coefficient * term.vertex_sign()
    for lab in term.vertex_weights:
        coef *= _weight_value(lab, weights)
    pref = coef * MEASURE_3D ** (1 + mom.total_loops)

    def momenta(loops):
        k = mom.edge_momenta(np.zeros((0, 3)) if mom.n_loops == 0 else loops, ext)
        return np.linalg.norm(k, axis=1)

    if l and n_rt:
        raise AssemblyError("mixed real-time/KMS terms are not assembled (no closed time-integration rule)")
    if l:
        if term.domain not in (BOX, SIMPLEX):
            raise AssemblyError("KMS term has no integration domain")
        kv = [v for v, k in enumerate(kinds) if isinstance(k, gr.KmsVertex)]
        slot = {v: s for s, v in enumerate(kv)}
        ttimes = {v: ext_times[v] for v in range(term.n_ext)}

        thermal = [e for e, (i, j) in enumerate(edges) if i in slot or j in slot]
        frozen = [e for e in range(len(edges)) if e not in thermal]
        # sign s_e = +1 picks c_plus e^{-i w (t_j - t_i)}, s_e = -1 picks c_minus e^{+i w (t_j - t_i)}
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=len(thermal)))).reshape(-1, len(thermal))
        # vertex-time incidence of the phase: +1 for the later endpoint j, -1 for i
        inc_k = np.zeros((len(kv), len(thermal)))
        inc_t = np.zeros(len(thermal))
        inc_x = np.zeros(len(thermal))
        for c, e in enumerate(thermal):
            i, j = edges[e]
            for v, sgn in ((j, -1.0), (i, 1.0)):
                if v in slot:
                    inc_k[kv.index(v), c] += sgn
                else:
                    inc_t[c] += sgn * ttimes[v]
                    inc_x[c] += sgn

        def func(u, loops=None):
            u = np.atleast_1d(np.asarray(u, dtype=float))
            ks = momenta(loops)
            ws = np.asarray(energy(ks, params.mass), dtype=float).reshape(-1)
            uu = [u[slot[v]] if v in slot else 0.0 for v in range(g.n_vertices)]
            const = 1.0 + 0j
            for e in frozen:
                # both endpoints at u = 0 in the time-ordered block
                i, j = edges[e]
                const *= realtime_matrix_entry(1, 1, ttimes[i] - ttimes[j], float(ks[e]), params)
            if not thermal:
                return const
            cpm = np.array([thermal_components(uu[edges[e][1]] - uu[edges[e][0]], ws[e], beta) for e in thermal])
            wt = ws[thermal]
            coefs = np.prod(np.where(signs > 0, cpm[:, 0], cpm[:, 1]), axis=1)
            sw = signs * wt
            vals = coefs * np.exp(1j * (sw @ inc_t))
            if large_time:
                vals = np.where(np.abs(sw @ inc_x) <= 1e-9 * wt.max(), vals, 0.0)
            if kv:
                kvals = sw @ inc_k.T
                vals = vals * np.prod(chidot_hat(cutoff, kvals.reshape(-1)).reshape(kvals.shape), axis=1)
            return const * complex(math.fsum(vals.real), math.fsum(vals.imag))

        plan = (PlanStep("chidot-fourier", f"{l} vertex time(s) integrated against chidot analytically"),
                PlanStep("u-" + term.domain, f"{l}-fold imaginary-time {term.domain}", 0.0, beta))
        if mom.n_loops:
            plan += (PlanStep("radial", f"{mom.n_loops} loop momenta (not automated)"),)
        return AssembledIntegrand(func, plan, pref, l, 0.0, beta, mom.n_loops, term, tol_rel, tol_abs)

    # real-time terms
    branch = [1 if isinstance(k, gr.External) else k.branch for k in kinds]
    iv = [v for v in range(g.n_vertices) if not isinstance(kinds[v], gr.External)]
    slot = {v: s for s, v in enumerate(iv)}
    t_hi = float(max(ext_times))
    t_lo = cutoff.support[0]

    def func(t, loops=None):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tt = [t[slot[v]] if v in slot else ext_times[v] for v in range(g.n_vertices)]
        ks = momenta(loops)
        val = 1.0 + 0j
        for (i, j), k in zip(edges, ks):
            val *= realtime_matrix_entry(branch[i], branch[j], tt[i] - tt[j], float(k), params)
        for v in iv:
            val *= chi(cutoff, tt[v])
        return val

    plan = ()
    if iv:
        plan = (PlanStep("time", f"{len(iv)} vertex time(s) against chi; branch sum vanishes beyond latest external time",
                         t_lo, t_hi),)
    if mom.n_loops:
        plan += (PlanStep("radial", f"{mom.n_loops} loop momenta (not automated)"),)
    return AssembledIntegrand(func, plan, pref, len(iv), t_lo, t_hi, mom.n_loops, term, tol_rel, tol_abs)


def evaluate(asm: AssembledIntegrand, loops=None) -> QuadResult:
    """Carry out the plan for tree-level momentum routing (or fixed loop momenta)."""
    if asm.n_loops and loops is None:
        raise AssemblyError("loop momenta unresolved: pass them explicitly or use the case-study pipelines")
    f = (lambda x: asm.func(x, loops))
    if asm.n_axes == 0:
        return QuadResult(asm.prefactor * f(np.zeros(0)), 0.0)
    if asm.n_axes == 1:
        if asm.hi <= asm.lo:
            return QuadResult(0j, 0.0)
        r = integrate_1d(lambda x: f(np.array([x])), asm.lo, asm.hi, asm.tol_rel, asm.tol_abs,
                         complex_valued=True, axis_name=asm.plan[-1].kind)
        return QuadResult(asm.prefactor * r.value, abs(asm.prefactor) * r.error, r.budget_exceeded)
    if asm.n_axes == 2:
        return _box2(f, asm.lo, asm.hi, asm.prefactor, asm.tol_rel, asm.tol_abs,
                     simplex=(asm.term.domain == SIMPLEX))
    raise AssemblyError(f"{asm.n_axes}-dimensional quadrature not supported")


def _box2(f, lo, hi, pref, tol_rel, tol_abs, simplex=False):
    errs = []

    def inner(x):
        top = x if simplex else hi
        # kernels between the two insertions have a kink on the diagonal
        r = integrate_1d(lambda y: f(np.array([y, x])), lo, top, tol_rel, tol_abs, points=[x],
                         complex_valued=True)
        errs.append(r.error)
        return r.value

    r = integrate_1d(inner, lo, hi, tol_rel, tol_abs, complex_valued=True)
    err = r.error + (hi - lo) * (max(errs) if errs else 0.0)
    return QuadResult(pref * r.value, abs(pref) * err, r.budget_exceeded)


def evaluate_terms(terms: Sequence[ExpansionTerm], params: ThermalParams, cutoff: CutoffFamily,
                   ext_times=(0.0, 0.0), p_vec=(0.0, 0.0, 0.0), weights=None,
                   tol_rel=DEFAULT_TOL_REL, tol_abs=DEFAULT_TOL_ABS) -> QuadResult:
    """Sum of all terms, assembled and evaluated in input order."""
    vals, err = [], 0.0
    for term in terms:
        r = evaluate(assemble_integrand(term, params, cutoff, ext_times, p_vec, weights, tol_rel, tol_abs))
        vals.append(complex(r.value))
        err += r.error
    total = complex(math.fsum(v.real for v in vals), math.fsum(v.imag for v in vals))
    return QuadResult(total, err)


# -- Matsubara route for single-insertion KMS terms

def kms_term_matsubara(term: ExpansionTerm, params: ThermalParams, cutoff: CutoffFamily,
                       ext_times=(0.0, 0.0), p_vec=(0.0, 0.0, 0.0), N: int = DEFAULT_MATSUBARA_N,
                       weights=None) -> QuadResult:
    """Evaluate a tree-level KMS term by summing over admissible Matsubara frequencies.

    Each thermal edge expands as (1/beta) sum_n e^{i nu_n du} [a_n e^{-iwt} + a_n^* e^{iwt}];
    the u-integrals become beta per KMS vertex times the Kronecker constraints.
    Frequencies run over |n_e| <= N.
    """
    if term.kms_order < 1 or sum(term.rt_orders):
        raise AssemblyError("Matsubara route needs a pure KMS term")
    fa = apply_frequency_conservation(term)
    mom = apply_momentum_conservation(term)
    if mom.n_loops:
        raise AssemblyError("loop momenta unresolved")
    g = term.graph
    kinds = g.vertex_kind
    beta = params.beta
    ks = np.linalg.norm(mom.edge_momenta(np.zeros((0, 3)), np.asarray(p_vec, float).reshape(1, 3)), axis=1)
    edges = list(mom.edges)
    if list(fa.edges) != edges:
        raise AssemblyError("Matsubara route needs every edge to be thermal")
    kv = [v for v, k in enumerate(kinds) if isinstance(k, gr.KmsVertex)]
    coef = term.coefficient * term.vertex_sign()
    for lab in term.vertex_weights:
        coef *= _weight_value(lab, weights)
    pref = coef * MEASURE_3D ** (1 + mom.total_loops) * beta ** len(kv) / beta ** len(edges)
    ws = [energy(k, params.mass) for k in ks]
    vals = []
    for n in fa.assignments(N):
        total = 0j
        per_edge = []
        for e, w in enumerate(ws):
            ow = matsubara_weights(n[e], ks[e], params)
            per_edge.append(((1, ow.weight_plus), (-1, ow.weight_minus)))
        for choice in itertools.product(*per_edge):
            val = 1.0 + 0j
            kvec = dict.fromkeys(kv, 0.0)
            for (i, j), w, (s, c) in zip(edges, ws, choice):
                val *= c
                for v, sgn in ((j, -1.0), (i, 1.0)):
                    if v in kvec:
                        kvec[v] += sgn * s * w
                    else:
                        ph = sgn * s * w * ext_times[v]
                        val *= complex(math.cos(ph), math.sin(ph))
            for v in kv:
                val *= chidot_hat(cutoff, kvec[v])
            total += val
        vals.append(total)
    s = complex(math.fsum(v.real for v in vals), math.fsum(v.imag for v in vals))
    return QuadResult(pref * s, float("nan"))


def terms_to_json(terms: Sequence[ExpansionTerm]) -> str:
    return json.dumps([t.to_json_obj() for t in terms], sort_keys=True, separators=(",", ":"))
