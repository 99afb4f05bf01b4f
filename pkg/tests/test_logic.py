import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import brute_models, brute_wmc, model_prob, random_cnf, random_weights
from conftest import EXAMPLE_DIMACS
from wmcgrad.logic import (
    CnfFormula,
    DimacsError,
    WeightMap,
    clause_prob,
    condition,
    encode_categorical,
    evaluate,
    evaluate_batch,
    fuzzy_eval,
    interpretation_prob,
    is_implicant,
    neg,
    normalize_clause,
    parse_dimacs,
    serialize_dimacs,
)
from wmcgrad.sat import solve


def equivalent(a: CnfFormula, b: CnfFormula) -> bool:
    n = max(a.num_vars, b.num_vars)
    return all(evaluate(a, bits[: a.num_vars]) == evaluate(b, bits[: b.num_vars])
               for bits in itertools.product([True, False], repeat=n))


# ----------------------------------------------------------- types


def test_negation_is_involution():
    for lit in (1, -1, 7, -42):
        assert neg(neg(lit)) == lit


def test_normalize_dedups_and_drops_tautologies():
    assert normalize_clause([1, 2, 1]) == (1, 2)
    assert normalize_clause([1, -1, 3]) is None


def test_formula_validates_range():
    with pytest.raises(ValueError):
        CnfFormula(2, ((1, 3),))
    with pytest.raises(ValueError):
        CnfFormula.from_clauses(2, [(0,)])


def test_true_and_false_formulas():
    assert CnfFormula(3, ()).is_true
    assert CnfFormula.from_clauses(3, [(1,), ()]).is_false


def test_weightmap_validation_and_clamping():
    with pytest.raises(ValueError):
        WeightMap(np.array([0.5, 1.2]))
    w = WeightMap(np.array([0.0, 1.0, 0.3])).clamped()
    assert w.prob.min() >= w.clamp_margin and w.prob.max() <= 1 - w.clamp_margin
    assert w.lit(-3) == pytest.approx(0.7)


# ---------------------------------------------------------- DIMACS


def test_parse_worked_example(example):
    phi, w, u = parse_dimacs(EXAMPLE_DIMACS)
    assert phi == example[0]
    assert np.array_equal(w.prob, example[1].prob)
    assert u == 0


def test_parse_empty_formula_counts_unweighted_variable():
    phi, w, u = parse_dimacs("p cnf 1 0\n")
    assert phi.is_true and w.prob[0] == 0.5 and u == 1


def test_parse_legacy_and_negative_weights():
    phi, w, u = parse_dimacs("p cnf 2 1\nw 1 0.3\nw -2 0.25\n1 -2 0\n")
    assert w.prob.tolist() == [0.3, 0.75] and u == 0


@pytest.mark.parametrize("text", [
    "p cnf 3 1\nc p weight 2 1.5 0\n1 0\n",
    "p cnf x 1\n1 0\n",
    "p cnf 2 1\n1 3 0\n",
    "p cnf 2 1\nc p weight 1 0.2 0\nc p weight 1 0.3 0\n1 0\n",
    "p cnf 2 2\n1 0\n",
    "1 2 0\n",
    "p cnf 2 1\np cnf 2 1\n1 0\n",
])
def test_parse_errors(text):
    with pytest.raises(DimacsError):
        parse_dimacs(text)


def test_parse_drops_tautologies():
    phi, _, _ = parse_dimacs("p cnf 2 2\n1 -1 2 0\n2 2 0\n")
    assert phi.clauses == ((2,),)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 20), st.integers(0, 2**32 - 1), st.booleans())
def test_serialize_roundtrip(n, m, seed, unweighted_prefix):
    rng = np.random.default_rng(seed)
    phi = random_cnf(rng, n, m)
    p = rng.uniform(0, 1, n)
    u = 0
    if unweighted_prefix:
        u = int(rng.integers(0, n + 1))
        p[:u] = 0.5
    w = WeightMap(p)
    text = serialize_dimacs(phi, w, u)
    phi2, w2, u2 = parse_dimacs(text)
    assert phi2 == phi and w2 == w and u2 == u
    assert serialize_dimacs(phi2, w2, u2) == text


# ------------------------------------------------------ conditioning


def test_condition_examples(example):
    phi, _ = example
    assert equivalent(condition(phi, 2), CnfFormula(3, ((3,),)))
    assert equivalent(condition(phi, -2), CnfFormula(3, ((1,),)))
    assert condition(CnfFormula(3, ()), 1).is_true
    assert condition(phi, 2).num_vars == 3


# ------------------------------------------------------ semantics


def test_evaluate_examples(example):
    phi, _ = example
    assert evaluate(phi, [True, False, False])
    assert not evaluate(phi, [False, False, False])
    assert not evaluate(CnfFormula.from_clauses(2, [()]), [True, True])


def test_evaluate_batch_matches_scalar():
    rng = np.random.default_rng(3)
    phi = random_cnf(rng, 8, 12)
    X = rng.random((300, 8)) < 0.5
    assert evaluate_batch(phi, X).tolist() == [evaluate(phi, x) for x in X]


def test_interpretation_prob_examples(example):
    _, w = example
    assert interpretation_prob([True, False, False], w) == pytest.approx(0.3375, abs=1e-15)
    assert interpretation_prob([True, True, True], w) == pytest.approx(0.0125, abs=1e-15)
    assert interpretation_prob([True] * 4, WeightMap.uniform(4, 1.0)) == 1.0


def test_clause_prob_examples(example):
    _, w = example
    assert clause_prob((-2, 3), w) == pytest.approx(0.925, abs=1e-15)
    assert clause_prob((1, 2), w) == pytest.approx(0.55, abs=1e-15)
    assert clause_prob((), w) == 0.0
    # cross-check against enumeration
    assert clause_prob((-2, 3), w) == pytest.approx(brute_wmc(3, [(-2, 3)], w.prob), abs=1e-15)


def test_fuzzy_eval_examples(example):
    phi, w = example
    assert fuzzy_eval(phi, w, "product") == pytest.approx(0.50875, abs=1e-15)
    assert fuzzy_eval(phi, w, "goedel") == pytest.approx(0.5, abs=1e-15)
    true = CnfFormula(3, ())
    assert fuzzy_eval(true, w, "product") == 1.0 and fuzzy_eval(true, w, "goedel") == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 15), st.integers(0, 2**32 - 1))
def test_shannon_expansion(n, seed):
    rng = np.random.default_rng(seed)
    phi = random_cnf(rng, n, int(rng.integers(0, 3 * n + 1)))
    w = random_weights(rng, n)
    x = int(rng.integers(1, n + 1))
    total = brute_wmc(n, phi.clauses, w.prob)
    split = (w.prob[x - 1] * brute_wmc(n, condition(phi, x).clauses, w.prob)
             + (1 - w.prob[x - 1]) * brute_wmc(n, condition(phi, -x).clauses, w.prob))
    assert abs(total - split) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_interpretation_probs_sum_to_one(n, seed):
    w = WeightMap(np.random.default_rng(seed).uniform(0, 1, n))
    total = math.fsum(interpretation_prob(bits, w) for bits in itertools.product([True, False], repeat=n))
    assert abs(total - 1.0) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_product_tnorm_exact_on_variable_disjoint_clauses(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 13))
    order = rng.permutation(n) + 1
    clauses, i = [], 0
    while i < n:
        width = int(rng.integers(1, 4))
        chunk = order[i:i + width]
        clauses.append([int(v) if rng.random() < 0.5 else -int(v) for v in chunk])
        i += width
    phi = CnfFormula.from_clauses(n, clauses)
    w = random_weights(rng, n, 0.0, 1.0)
    assert abs(fuzzy_eval(phi, w) - brute_wmc(n, phi.clauses, w.prob)) <= 1e-12


# ------------------------------------------------------ encodings


def _categorical_marginals(enc):
    n = enc.num_vars
    p = np.array([enc.weights.get(v, 0.5) for v in range(1, n + 1)])
    out = []
    for a in enc.indicators:
        out.append(brute_wmc(n, list(enc.clauses) + [(a,)], p) * 2**enc.normalization_exponent)
    return out


def test_categorical_three_outcomes():
    enc = encode_categorical([0.2, 0.3, 0.5])
    assert enc.weights[enc.thetas[0]] == pytest.approx(0.2)
    assert enc.weights[enc.thetas[1]] == pytest.approx(0.375)
    assert np.allclose(_categorical_marginals(enc), [0.2, 0.3, 0.5], atol=1e-12)


def test_categorical_binary_is_one_bernoulli():
    enc = encode_categorical([0.5, 0.5])
    assert len(enc.thetas) == 1 and enc.weights[enc.thetas[0]] == 0.5


def test_categorical_degenerate_and_invalid():
    enc = encode_categorical([1.0, 0.0, 0.0])
    assert np.allclose(_categorical_marginals(enc), [1.0, 0.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        encode_categorical([1.0])
    with pytest.raises(ValueError):
        encode_categorical([0.3, 0.3])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=5))
def test_categorical_marginals_property(raw):
    probs = np.array(raw) / sum(raw)
    enc = encode_categorical(probs.tolist())
    assert np.allclose(_categorical_marginals(enc), probs, atol=1e-9)


# ------------------------------------------------------ implicants


def test_implicant_examples(example):
    phi, _ = example
    assert is_implicant(phi, [1, -2])
    assert not is_implicant(phi, [-1])
    for model in brute_models(3, phi.clauses):
        assert is_implicant(phi, [v + 1 if b else -(v + 1) for v, b in enumerate(model)])
    with pytest.raises(ValueError):
        is_implicant(phi, [1, -1])


def test_implicant_with_sat_oracle_agrees(example):
    phi, _ = example
    oracle = lambda f: solve(f) is not None  # noqa: E731
    for pi in ([1, -2], [-1], [2, 3], [1], [-2, -3]):
        assert is_implicant(phi, pi, oracle) == is_implicant(phi, pi)


def test_model_prob_helper_agrees(example):
    _, w = example
    assert model_prob((True, False, False), w.prob) == pytest.approx(0.3375)
