import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermal_kms import graphs as gr
from thermal_kms.cutoff import CutoffFamily
from thermal_kms.expansion import (BOX, SIMPLEX, AssemblyError, ExpansionError, ExpansionTerm,
                                   apply_frequency_conservation, apply_momentum_conservation, assemble_integrand,
                                   bogoliubov_prefactor, bogoliubov_terms, brute_force_frequencies, evaluate,
                                   evaluate_terms, expansion_terms, interaction, kms_expansion_terms, kms_terms,
                                   kms_term_matsubara, symmetrize_to_box, tadpole_momentum, terms_to_json,
                                   thermal_components)
from thermal_kms.propagators import MEASURE_3D, ThermalParams, bose_factors, energy, feynman_mixed, thermal_mixed

P = ThermalParams(1.0, 1.0)
CF = CutoffFamily()


def _b1_graph():
    return kms_expansion_terms(1, 2, 2)[0]


def _c_graphs():
    return kms_expansion_terms(2, 3, 2)


# -- coefficients

def test_order_zero():
    terms = bogoliubov_terms(0)
    assert len(terms) == 1
    t = terms[0]
    assert t.coefficient == 1 and t.order == 0
    assert t.graph.edge_kinds[0][1] == gr.EdgeKind.FEYNMAN
    r = evaluate(assemble_integrand(t, P, CF, ext_times=(0.7, 0.2), p_vec=(0, 0, 0.4)))
    assert r.value == pytest.approx(MEASURE_3D * feynman_mixed(0.5, 0.4, P), rel=1e-15)


def test_order_one_quadratic_signs():
    terms = bogoliubov_terms(1, 2, 2, exact_order=True)
    coef = {t.rt_orders: t.coefficient for t in terms}
    assert coef == {(1, 0): 1j, (0, 1): -1j}
    for t in terms:
        assert t.graph.degrees == (1, 1, 2)


def test_quartic_species():
    inter = interaction(4)
    assert [k for k, _ in inter.species] == [4, 2]
    # two legs: the quartic vertex would need self-loops, only the mass insertion survives
    two = {t.vertex_weights[-1] for t in bogoliubov_terms(1, 4, 2, exact_order=True)}
    four = {t.vertex_weights[-1] for t in bogoliubov_terms(1, 4, 4, exact_order=True)}
    assert two == {"thermal_mass"}
    assert four == {"1"}
    with pytest.raises(ExpansionError):
        interaction(5)
    with pytest.raises(ExpansionError):
        bogoliubov_terms(-1)


@pytest.mark.parametrize("k", range(0, 9))
def test_coefficient_bookkeeping(k):
    total = math.fsum(abs(bogoliubov_prefactor(n1, k - n1)) for n1 in range(k + 1))
    assert total == pytest.approx(2 ** k / math.factorial(k), rel=1e-15)


def test_kms_series():
    assert kms_terms(0).weight == 1 and kms_terms(0).slots == ()
    s1 = kms_terms(1)
    assert s1.sign == -1 and s1.slots == ("u1",)
    s2 = kms_terms(2)
    assert s2.sign == 1 and s2.weight == 0.5
    with pytest.raises(ExpansionError):
        kms_terms(-1)


def test_symmetrize():
    t1 = kms_expansion_terms(1, 2, 2, domain=SIMPLEX)[0]
    assert symmetrize_to_box(t1).coefficient == t1.coefficient
    for ts, tb in zip(kms_expansion_terms(2, 3, 2, domain=SIMPLEX), _c_graphs()):
        s = symmetrize_to_box(ts)
        assert s.domain == BOX
        assert s.coefficient == pytest.approx(ts.coefficient / 2)
        assert s.coefficient == pytest.approx(tb.coefficient)
    with pytest.raises(ExpansionError):
        symmetrize_to_box(bogoliubov_terms(0)[0])


def test_c_graph_coefficients():
    cs = _c_graphs()
    assert len(cs) == 2
    for c in cs:
        # (-1)^2/2! from the box, 1/2! from the double edge
        assert c.coefficient == pytest.approx(0.25)
        assert sorted(l for _, l in c.graph.multiplicity) == [1, 1, 2]


# -- frequency conservation

def test_frequency_b1():
    fa = apply_frequency_conservation(_b1_graph())
    assert fa.n_constraints == 1 and fa.n_free == 1
    for n in fa.assignments(4):
        assert n[0] + n[1] == 0


def test_frequency_c_graph():
    for c in _c_graphs():
        fa = apply_frequency_conservation(c)
        assert fa.n_constraints == 2
        assert fa.n_free == 2
        assert apply_frequency_conservation(c, bundle_parallel=True).n_free == 1


def _section4_terms():
    return (kms_expansion_terms(1, 2, 2) + _c_graphs()
            + [t for t in expansion_terms(2, 3, 2) if t.kms_order >= 1])


@pytest.mark.parametrize("bundle", [False, True])
def test_frequency_brute_force(bundle):
    for t in _section4_terms():
        fa = apply_frequency_conservation(t, bundle_parallel=bundle)
        assert fa.n_constraints == t.kms_order
        assert set(fa.assignments(3)) == brute_force_frequencies(fa, 3)


def test_frequency_needs_box():
    with pytest.raises(ExpansionError):
        apply_frequency_conservation(kms_expansion_terms(2, 3, 2, domain=SIMPLEX)[0])


# -- momentum conservation

def test_momentum_b1():
    ma = apply_momentum_conservation(_b1_graph())
    assert ma.n_loops == 0
    p = np.array([[0.1, -0.3, 0.7]])
    k = ma.edge_momenta(np.zeros((0, 3)), p)
    assert np.allclose(np.abs(k), np.abs(p).repeat(2, axis=0))
    assert np.allclose(ma.vertex_residuals(np.zeros((0, 3)), p, 3), 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_momentum_c_graph_conserved(xs):
    for c in _c_graphs():
        ma = apply_momentum_conservation(c)
        assert ma.n_loops == 1
        q, p = np.array([xs[:3]]), np.array([xs[3:]])
        assert np.allclose(ma.vertex_residuals(q, p, c.graph.n_vertices), 0, atol=1e-12)


def test_momentum_tadpole_and_disconnected():
    assert tadpole_momentum().total_loops == 1
    g = gr.MultiGraph.from_edges((1, 1, 2, 2), {(0, 1): 1, (2, 3): 2})
    with pytest.raises(ExpansionError):
        apply_momentum_conservation(g, 2)


# -- assembly

def test_thermal_components_reassemble_kernel():
    w = energy(0.6, 1.0)
    for du in (-0.7, -0.2, 0.3, 0.9):
        cp, cm = thermal_components(du, w, 1.0)
        for t in (-1.0, 0.4):
            val = cp * np.exp(-1j * w * t) + cm * np.exp(1j * w * t)
            assert val == pytest.approx(thermal_mixed(t, du, 0.6, P), rel=1e-14)


def test_first_order_sum_matches_closed_form():
    params = ThermalParams(1.7, 0.8)
    for kind in ("raised_cosine", "smooth_bump"):
        r = evaluate_terms(expansion_terms(1, 2, 2), params, CutoffFamily(kind), p_vec=(0, 0, 0.6),
                           tol_rel=1e-10, tol_abs=1e-14)
        w = energy(0.6, params.mass)
        bp, bm = bose_factors(w, params.beta)
        ref = -MEASURE_3D * (params.beta * bp * bm / (2 * w * w) + (bp + bm) / (4 * w ** 3))
        assert abs(r.value - ref) < 1e-9 * abs(ref)


def test_b1_matsubara_route_converges_to_quadrature():
    t = _b1_graph()
    q = evaluate(assemble_integrand(t, P, CF, ext_times=(0.2, 0.2), p_vec=(0, 0, 0.5), tol_rel=1e-11,
                                    tol_abs=1e-15)).value
    errs = []
    for N in (50, 200):
        m = kms_term_matsubara(t, P, CF, ext_times=(0.2, 0.2), p_vec=(0, 0, 0.5), N=N).value
        errs.append(abs(m - q))
    assert errs[1] < errs[0] / 3
    assert errs[1] < 2e-3 * abs(q)


def test_assembly_errors():
    mixed = [t for t in expansion_terms(2, 2, 2) if t.kms_order and sum(t.rt_orders)]
    assert mixed
    with pytest.raises(AssemblyError):
        assemble_integrand(mixed[0], P, CF)
    asm = assemble_integrand(_c_graphs()[0], P, CF)
    assert asm.n_loops == 1
    with pytest.raises(AssemblyError):
        evaluate(asm)
    quartic = [t for t in bogoliubov_terms(1, 4, 2, exact_order=True) if "thermal_mass" in t.vertex_weights]
    with pytest.raises(AssemblyError):
        assemble_integrand(quartic[0], P, CF)
    assert assemble_integrand(quartic[0], P, CF, weights={"thermal_mass": 0.1}).prefactor != 0
    with pytest.raises(ExpansionError):
        ExpansionTerm(bogoliubov_terms(0)[0].graph, 0, 0, (0, 0), (None, None))


def test_c_plan_structure():
    asm = assemble_integrand(_c_graphs()[0], P, CF)
    kinds = [s.kind for s in asm.plan]
    assert kinds == ["chidot-fourier", "u-box", "radial"]
    assert asm.n_axes == 2 and (asm.lo, asm.hi) == (0.0, 1.0)
    assert asm.prefactor == pytest.approx(0.25 * MEASURE_3D ** 2)


def test_terms_json_deterministic():
    a = terms_to_json(expansion_terms(2, 3, 2))
    b = terms_to_json(expansion_terms(2, 3, 2))
    assert a == b
    obj = json.loads(terms_to_json(_c_graphs()))
    assert obj[0]["coefficient"] == [0.25, 0.0]
    assert obj[0]["graph"]["kinds"] == ["External", "External", "Kms0", "Kms1"]
