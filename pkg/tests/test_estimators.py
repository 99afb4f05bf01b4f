import itertools
import math

import numpy as np
import pytest

from _oracles import brute_models, brute_wmc, random_cnf, random_weights, satisfiable_cnf
from wmcgrad.exact import compile_cnf, wmc_brute, wmc_eval, wmc_grad
from wmcgrad.estimators import (
    EstimatorConfig,
    c_eps_delta,
    catlog_wrap,
    check_tractability_condition,
    clause_mutual_information,
    estimate,
    gumbel_grad,
    imle_grad,
    indecater_grad,
    indecater_terms,
    kbest_grad,
    koptimal_grad,
    mpe_grad,
    parse_config,
    product_tnorm_batch,
    relaxed_bernoulli,
    required_samples_interpretation,
    required_samples_weightme,
    sample_tnorm_hybrid_grad,
    score_terms,
    semantic_strengthening_grad,
    sfe_grad,
    ste_grad,
    strengthening_groups,
    tau_supervision,
    tnorm_grad,
    tractability_threshold,
    uniform_model_grad,
    weightme_grad,
    weightme_terms,
)
from wmcgrad.logic import CnfFormula, WeightMap, condition, evaluate_batch, fuzzy_eval
from wmcgrad.samplers import RngStream, SamplerSpec, exact_model_samples

EXACT_GRAD = np.array([0.9, -0.25, 0.1])


def all_interpretations(n):
    return np.array(list(itertools.product([True, False], repeat=n)), dtype=bool)


def interp_probs(X, w):
    return np.prod(np.where(X, w.prob, 1.0 - w.prob), axis=1)


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


# ----------------------------------------------------- unbiasedness


def test_sfe_expectation_example(example):
    phi, w = example
    X = all_interpretations(3)
    P = interp_probs(X, w)
    f = evaluate_batch(phi, X).astype(float)
    scores = score_terms(X, w)
    assert np.allclose(P @ (f[:, None] * scores), EXACT_GRAD, atol=1e-12)
    # the leave-one-out baseline is independent of the sample it multiplies
    assert np.allclose(P @ scores, 0.0, atol=1e-12)


def test_indecater_expectation_example(example):
    phi, w = example
    X = all_interpretations(3)
    assert np.allclose(interp_probs(X, w) @ indecater_terms(phi, X), EXACT_GRAD, atol=1e-12)


def test_weightme_expectation_example(example):
    phi, w = example
    M = np.array(brute_models(3, phi.clauses))
    P = interp_probs(M, w) / 0.475
    g = P @ weightme_terms(M, w)
    assert g[0] == pytest.approx(0.45 / 0.2375, abs=1e-12)
    assert np.allclose(g, EXACT_GRAD / 0.475, atol=1e-12)


def test_unbiasedness_enumerated_random():
    rng = np.random.default_rng(42)
    for _ in range(30):
        n = int(rng.integers(1, 11))
        phi = satisfiable_cnf(rng, n, int(rng.integers(1, 3 * n + 1)))
        w = random_weights(rng, n)
        _, exact = wmc_grad(compile_cnf(phi), w)
        wmc = wmc_brute(phi, w).value
        X = all_interpretations(n)
        P = interp_probs(X, w)
        f = evaluate_batch(phi, X).astype(float)
        assert np.allclose(P @ (f[:, None] * score_terms(X, w)), exact.values, atol=1e-10)
        assert np.allclose(P @ indecater_terms(phi, X), exact.values, atol=1e-10)
        M = X[f == 1.0]
        assert np.allclose((P[f == 1.0] / wmc) @ weightme_terms(M, w), exact.values / wmc, atol=1e-10)


def test_estimators_converge_on_example(example):
    phi, w = example
    assert np.allclose(sfe_grad(phi, w, 200_000, RngStream(1)).gradient.values, EXACT_GRAD, atol=0.02)
    assert np.allclose(indecater_grad(phi, w, 200_000, RngStream(2)).gradient.values, EXACT_GRAD, atol=0.01)
    r = weightme_grad(phi, w, "exact-model", 200_000, RngStream(3), wmc=0.475)
    assert r.estimate_of == "logwmc"
    assert np.allclose(r.gradient.values, EXACT_GRAD / 0.475, atol=0.03)
    assert np.allclose(r.wmc_gradient.values, EXACT_GRAD, atol=0.015)


def test_sfe_edge_cases():
    phi = CnfFormula.from_clauses(20, [(v,) for v in range(1, 21)])
    w = WeightMap.uniform(20)
    r = sfe_grad(phi, w, 10_000, RngStream(0))
    assert not np.any(r.gradient.values)
    with pytest.raises(ValueError):
        sfe_grad(phi, w, 1, RngStream(0))
    assert sfe_grad(phi, w, 1, RngStream(0), rloo=False).samples_used == 1


# --------------------------------------------------- variance facts


def test_indecater_binary_weights_exact():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(2, 10))
        phi = random_cnf(rng, n, 2 * n)
        w = WeightMap((rng.random(n) < 0.5).astype(float))
        _, exact = wmc_grad(compile_cnf(phi), w)
        for seed in range(20):
            assert np.array_equal(indecater_grad(phi, w, 3, RngStream(seed)).gradient.values, exact.values)


def test_indecater_single_model_variance():
    # for a single model each term lies in {0, sign}, so Var = |g| (1 - |g|)
    n = 5
    phi = CnfFormula.from_clauses(n, [(1,), (-2,), (3,), (4,), (-5,)])
    rng = np.random.default_rng(0)
    w = WeightMap(rng.uniform(0.2, 0.8, n))
    _, exact = wmc_grad(compile_cnf(phi), w)
    X = all_interpretations(n)
    P = interp_probs(X, w)
    T = indecater_terms(phi, X)
    var = P @ (T**2) - (P @ T) ** 2
    g = np.abs(exact.values)
    assert np.allclose(var, g * (1 - g), atol=1e-12)
    assert np.all(var <= 0.25 + 1e-12)
    draws = X[np.random.default_rng(1).choice(len(X), 20_000, p=P)]
    emp = np.var(indecater_terms(phi, draws), axis=0)
    assert np.allclose(emp, var, atol=0.02)


def test_weightme_single_model_zero_spread():
    phi = CnfFormula.from_clauses(2, [(1,), (2,)])
    w = WeightMap(np.array([0.3, 0.6]))
    outs = [weightme_grad(phi, w, "exact-model", s, RngStream(seed)).gradient.values
            for seed in range(5) for s in (1, 7)]
    assert np.ptp(np.array(outs), axis=0).max() <= 1e-12
    assert np.allclose(outs[0], [1 / 0.3, 1 / 0.6], rtol=1e-14)


def test_weightme_empirical_mean_within_three_se():
    rng = np.random.default_rng(17)
    for i in range(5):
        phi = satisfiable_cnf(rng, 10, 20, min_models=3)
        w = random_weights(rng, 10, 0.2, 0.8)
        c = compile_cnf(phi)
        _, exact = wmc_grad(c, w, of="logwmc")
        T = weightme_terms(exact_model_samples(c, w, 100_000, RngStream(i)), w)
        se = T.std(axis=0, ddof=1) / np.sqrt(len(T))
        assert np.all(np.abs(T.mean(axis=0) - exact.values) <= 3 * se + 1e-12)


def test_weightme_zero_wmc_and_hash_sampler(example):
    phi, w = example
    r = weightme_grad(phi, w, "hash-model", 2000, RngStream(0))
    assert cosine(r.gradient.values, EXACT_GRAD) > 0.99
    with pytest.raises(Exception):
        weightme_grad(CnfFormula.from_clauses(1, [()]), WeightMap.uniform(1), "exact-model", 3, RngStream(0))


# ----------------------------------------------------------- t-norms


def test_product_tnorm_example(example):
    phi, w = example
    r = tnorm_grad(phi, w, "product")
    assert r.gradient.values[0] == pytest.approx(0.925 * 0.9, abs=1e-14)
    assert r.value_estimate == pytest.approx(0.50875, abs=1e-14)
    h = 1e-6
    for x in range(1, 4):
        fd = (fuzzy_eval(phi, w.with_value(x, w.prob[x - 1] + h)) - fuzzy_eval(phi, w.with_value(x, w.prob[x - 1] - h))) / (2 * h)
        assert r.gradient.values[x - 1] == pytest.approx(fd, abs=1e-8)


def test_goedel_example_one_hot(example):
    phi, w = example
    g = tnorm_grad(phi, w, "goedel").gradient.values
    assert np.count_nonzero(g) == 1
    assert g.tolist() == [1.0, 0.0, 0.0]


def test_goedel_tie_breaks_to_lowest_variable():
    phi = CnfFormula.from_clauses(3, [(3,), (2,), (1, 3)])
    g = tnorm_grad(phi, WeightMap(np.array([0.9, 0.4, 0.4])), "goedel").gradient.values
    assert g.tolist() == [0.0, 1.0, 0.0]
    g = tnorm_grad(phi, WeightMap.uniform(3, 0.4), "goedel").gradient.values
    assert g.tolist() == [1.0, 0.0, 0.0]


def test_product_tnorm_exact_on_independent_clauses():
    phi = CnfFormula.from_clauses(5, [(1, -2), (3,), (-4, 5)])
    w = WeightMap(np.array([0.2, 0.7, 0.4, 0.9, 0.35]))
    _, exact = wmc_grad(compile_cnf(phi), w)
    assert np.allclose(tnorm_grad(phi, w).gradient.values, exact.values, atol=1e-14)


def test_product_tnorm_batch_matches_scalar():
    rng = np.random.default_rng(6)
    phi = random_cnf(rng, 9, 20)
    W = rng.uniform(0, 1, (5, 9))
    vals, grads = product_tnorm_batch(phi, W)
    for row, v, g in zip(W, vals, grads):
        w = WeightMap(row)
        assert v == pytest.approx(fuzzy_eval(phi, w), abs=1e-14)
        assert np.allclose(g, tnorm_grad(phi, w).gradient.values, atol=1e-14)


# ------------------------------------------------------ relaxations


def test_ste_binary_weights_equal_tnorm(example):
    phi, _ = example
    w = WeightMap(np.array([1.0, 0.0, 1.0]))
    assert np.allclose(ste_grad(phi, w, 5, RngStream(0)).gradient.values, tnorm_grad(phi, w).gradient.values)


def test_ste_golden(example):
    phi, w = example
    assert ste_grad(phi, w, 10, RngStream(123)).gradient.values.tolist() == [0.9, -0.3, 0.1]


def test_ste_bias_is_measurable(example):
    phi, w = example
    ste = ste_grad(phi, w, 10_000, RngStream(0)).gradient.values
    prod = tnorm_grad(phi, w).gradient.values
    divergence = float(np.linalg.norm(ste - prod))
    # differentiating at hard samples is not the product-t-norm gradient
    assert math.isfinite(divergence) and divergence > 0.05


def test_gumbel_golden(example):
    phi, w = example
    expected = [0.3007974801301809, 0.07786584535432232, 0.10484018458162883]
    assert np.allclose(gumbel_grad(phi, w, 10, 2.0, RngStream(123)).gradient.values, expected, rtol=1e-12)


def test_gumbel_high_temperature_limit(example):
    phi, w = example
    tau = 1e6
    Y, _ = relaxed_bernoulli(w, 1000, tau, RngStream(0))
    assert np.all(np.abs(Y - 0.5) < 1e-3)
    g = gumbel_grad(phi, w, 1000, tau, RngStream(0)).gradient.values
    # relaxed samples sit at 1/2 and dY/dw = 1/(4 tau w(1-w))
    half = tnorm_grad(phi, WeightMap.uniform(3)).gradient.values
    expected = half * 0.25 / (w.prob * (1 - w.prob))
    assert np.allclose(g * tau, expected, rtol=1e-3, atol=1e-6)


def test_gumbel_validation(example):
    phi, w = example
    with pytest.raises(ValueError):
        gumbel_grad(phi, w, 10, 0.0, RngStream(0))


# ------------------------------------------------------ model DNFs


def test_kbest_examples(example):
    phi, w = example
    assert np.allclose(kbest_grad(phi, w, 4).gradient.values, EXACT_GRAD, atol=1e-14)
    one = kbest_grad(phi, w, 1)
    assert one.value_estimate == pytest.approx(0.3375)
    assert np.allclose(one.gradient.values, [0.675, -0.375, -0.45], atol=1e-14)
    values = [kbest_grad(phi, w, k).value_estimate for k in range(1, 6)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_kbest_lower_bound_random():
    rng = np.random.default_rng(8)
    for _ in range(20):
        phi = satisfiable_cnf(rng, 8, 14)
        w = random_weights(rng, 8)
        for k in (1, 3, 10):
            assert kbest_grad(phi, w, k).value_estimate <= wmc_brute(phi, w).value + 1e-12


def test_mpe_and_koptimal(example):
    phi, w = example
    assert np.allclose(mpe_grad(phi, w).gradient.values, kbest_grad(phi, w, 1).gradient.values)
    assert koptimal_grad(phi, w, 2).value_estimate == pytest.approx(0.45)


def test_uniform_model_estimator(example):
    phi, w = example
    r = uniform_model_grad(phi, w, 200, RngStream(0))
    assert np.allclose(r.gradient.values, EXACT_GRAD)  # all four models are hit


def test_imle(example):
    phi, w = example
    assert imle_grad(phi, w, 1, 0.0, RngStream(0)).gradient.values.tolist() == [1.0, -1.0, -1.0]
    single = CnfFormula.from_clauses(3, [(1,), (-2,), (3,)])
    for seed in range(5):
        assert imle_grad(single, w, 4, 2.0, RngStream(seed)).gradient.values.tolist() == [1.0, -1.0, 1.0]
    assert imle_grad(phi, w, 10, 1.0, RngStream(123)).gradient.values.tolist() == [1.0, -1.0, 0.0]


# ---------------------------------------------- semantic strengthening


def test_semantic_strengthening_limits(example):
    phi, w = example
    assert np.array_equal(semantic_strengthening_grad(phi, w, 0).gradient.values, tnorm_grad(phi, w).gradient.values)
    assert np.allclose(semantic_strengthening_grad(phi, w, 1).gradient.values, EXACT_GRAD, atol=1e-10)


def test_semantic_strengthening_full_budget_random():
    rng = np.random.default_rng(10)
    for _ in range(20):
        n = int(rng.integers(2, 10))
        phi = random_cnf(rng, n, int(rng.integers(1, 2 * n)))
        w = random_weights(rng, n)
        _, exact = wmc_grad(compile_cnf(phi), w)
        m = len(phi.clauses)
        ss = semantic_strengthening_grad(phi, w, m * m)
        groups = strengthening_groups(phi, w, m * m)
        if len(groups) == 1:
            assert np.allclose(ss.gradient.values, exact.values, atol=1e-10)
        assert np.array_equal(semantic_strengthening_grad(phi, w, 0).gradient.values,
                              tnorm_grad(phi, w).gradient.values)


def test_disjoint_clauses_have_no_mutual_information():
    phi = CnfFormula.from_clauses(4, [(1, 2), (3, -4)])
    w = WeightMap(np.array([0.3, 0.6, 0.2, 0.9]))
    assert clause_mutual_information(phi.clauses[0], phi.clauses[1], w) == pytest.approx(0.0, abs=1e-15)
    assert strengthening_groups(phi, w, 10) == [[0], [1]]


def test_mutual_information_matches_enumeration():
    w = WeightMap(np.array([0.3, 0.6, 0.2]))
    a, b = (1, 2), (-2, 3)
    X = all_interpretations(3)
    P = interp_probs(X, w)
    sa = evaluate_batch(CnfFormula(3, (a,)), X)
    sb = evaluate_batch(CnfFormula(3, (b,)), X)
    mi = 0.0
    for i in (False, True):
        for j in (False, True):
            pij = P[(sa == i) & (sb == j)].sum()
            if pij > 0:
                mi += pij * math.log(pij / (P[sa == i].sum() * P[sb == j].sum()))
    assert clause_mutual_information(a, b, w) == pytest.approx(mi, abs=1e-12)


# ------------------------------------------------------------ CatLog


def test_catlog_exact_inner_reproduces_gradient():
    rng = np.random.default_rng(12)
    for _ in range(15):
        n = int(rng.integers(1, 9))
        phi = random_cnf(rng, n, 2 * n)
        w = random_weights(rng, n)
        _, exact = wmc_grad(compile_cnf(phi), w)
        assert np.allclose(catlog_wrap("exact", phi, w).gradient.values, exact.values, atol=1e-10)


def test_catlog_product_example(example):
    phi, w = example
    g = catlog_wrap("tnorm-product", phi, w).gradient.values
    assert fuzzy_eval(condition(phi, 2), w) == pytest.approx(0.25)
    assert fuzzy_eval(condition(phi, -2), w) == pytest.approx(0.5)
    assert g[1] == pytest.approx(0.25 - 0.5, abs=1e-14)
    independent = CnfFormula.from_clauses(4, [(1, 2), (-3, 4)])
    w4 = WeightMap(np.array([0.2, 0.4, 0.6, 0.8]))
    _, exact = wmc_grad(compile_cnf(independent), w4)
    assert np.allclose(catlog_wrap("tnorm-product", independent, w4).gradient.values, exact.values, atol=1e-14)


def test_catlog_callable_inner(example):
    phi, w = example
    g = catlog_wrap(lambda f: brute_wmc(3, f.clauses, w.prob), phi, w).gradient.values
    assert np.allclose(g, EXACT_GRAD, atol=1e-12)


def test_catlog_rejects_gradient_estimators():
    with pytest.raises(ValueError):
        EstimatorConfig("catlog", inner="sfe")


# ------------------------------------------------------------ hybrid


def test_sample_tnorm_hybrid(example):
    phi, w = example
    easy = CnfFormula.from_clauses(3, [(1, 2, 3), (-1, 2, 3)])
    r = sample_tnorm_hybrid_grad(easy, WeightMap.uniform(3), 1000, RngStream(0))
    assert not np.any(r.gradient.values) and r.value_estimate == 1.0
    with pytest.raises(ValueError):
        sample_tnorm_hybrid_grad(phi, w, 0, RngStream(0))
    assert sample_tnorm_hybrid_grad(phi, w, 10, RngStream(123)).gradient.values.tolist() == [0.0, 0.0, 0.0]
    assert sample_tnorm_hybrid_grad(phi, w, 1, RngStream(123)).gradient.values.tolist() == [0.9, 0.5, 0.0]


# ------------------------------------------------------- calculators


def test_required_samples_interpretation():
    spec = SamplerSpec(epsilon=0.1, delta=0.05)
    assert required_samples_interpretation(spec, 1.0) == 369 == math.ceil(100 * math.log(40))
    assert required_samples_interpretation(spec, 2.0**-20) == 369 * 2**20
    for k in range(0, 30, 3):
        assert required_samples_interpretation(spec, 2.0**-k) == 369 * 2**k
    assert required_samples_interpretation(SamplerSpec(epsilon=1e9, delta=0.5), 1.0) == 1
    with pytest.raises(ValueError):
        required_samples_interpretation(spec, 0.0)


def test_required_samples_weightme():
    assert required_samples_weightme(SamplerSpec(epsilon=0.1, delta=0.05), 0.5) == 738
    assert required_samples_weightme(SamplerSpec(epsilon=1.0, delta=2 / math.e**2), 1.0) == 1
    with pytest.raises(ValueError):
        required_samples_weightme(SamplerSpec(), 0.0)
    assert c_eps_delta(0.1, 0.05) == pytest.approx(100 * math.log(40))


def test_tractability_condition_examples(example):
    phi, w = example
    loose = SamplerSpec(epsilon=0.5, delta=0.2)
    # dominant implicant
    single = CnfFormula.from_clauses(2, [(1,), (2,)]).conjoin([(1, 2)])
    heavy = WeightMap(np.array([0.999, 0.991]))
    assert check_tractability_condition(single, heavy, [1, 2], 1, loose)
    # uniform weights over 30 variables: any full model has mass 2^-30
    n = 30
    chain = CnfFormula.from_clauses(n, [(v,) for v in range(1, n + 1)])
    assert not check_tractability_condition(chain, WeightMap.uniform(n), list(range(1, n + 1)), 1, loose)
    # worked example: margin 0.45 - 0.025
    wmc_neg = wmc_eval(compile_cnf(condition(phi, -1)), w).value
    assert wmc_neg == pytest.approx(0.025)
    margin = 0.5 * 0.9 - wmc_neg
    assert check_tractability_condition(phi, w, [1, -2], 1, loose) == (margin >= tractability_threshold(loose))
    with pytest.raises(ValueError):
        check_tractability_condition(phi, w, [1, -2], 3, loose)


def test_tau_supervision(example):
    phi, w = example
    assert tau_supervision(phi, w) == 2
    single = CnfFormula.from_clauses(3, [(1,), (-2,), (3,)])
    assert tau_supervision(single, WeightMap(np.array([1.0, 0.0, 1.0]))) == 3
    assert tau_supervision(phi, WeightMap.uniform(3)) == 0


# ----------------------------------------------------------- configs


@pytest.mark.parametrize("text", [
    "weightme:s=100,sampler=hash", "gumbel:s=10,temp=2.0", "sfe", "sfe:s=50,rloo=false", "kbest:k=3",
    "semantic-strengthening:kappa=0", "catlog:inner=gumbel,s=5", "imle:noise=0.5", "tnorm-goedel",
    "uniform-model:s=20,pivot=8",
])
def test_config_roundtrip(text):
    cfg = parse_config(text)
    assert parse_config(str(cfg)) == cfg


def test_config_defaults_and_errors():
    assert parse_config("gumbel").s == 10 and parse_config("gumbel").temperature == 2.0
    assert parse_config("sfe").s == 10_000
    assert parse_config("weightme").s == 100
    assert parse_config("koptimal").k == 100
    assert parse_config("semantic-strengthening").kappa == 100
    assert parse_config("weightme:sampler=hash").sampler == "hash-model"
    for bad in ("nope", "sfe:s", "sfe:q=1", "gumbel:temp=0", "imle:noise=-1", "sfe:rloo=maybe"):
        with pytest.raises(ValueError):
            parse_config(bad)


def test_estimate_dispatches_every_kind(example):
    phi, w = example
    c = compile_cnf(phi)
    for kind in ("exact", "sfe", "indecater", "weightme", "ste", "gumbel", "tnorm-product", "tnorm-goedel",
                 "kbest", "koptimal", "mpe", "imle", "semantic-strengthening", "uniform-model", "catlog",
                 "sample-tnorm-hybrid"):
        cfg = parse_config(kind if kind not in ("sfe", "indecater") else kind + ":s=100")
        r = estimate(cfg, phi, w, RngStream(0), circuit=c)
        assert r.gradient.values.shape == (3,) and np.all(np.isfinite(r.gradient.values))
        assert r.estimate_of in ("wmc", "logwmc") and r.wall_time >= 0


def test_weightme_cosine_non_decreasing_in_samples():
    rng = np.random.default_rng(33)
    means, ses = [], []
    instances = []
    for _ in range(20):
        n = int(rng.integers(4, 13))
        phi = satisfiable_cnf(rng, n, int(rng.integers(n, 3 * n)), min_models=2)
        w = random_weights(rng, n, 0.1, 0.9)
        c = compile_cnf(phi)
        instances.append((phi, w, c, wmc_grad(c, w, of="logwmc")[1].values))
    for s in (1, 10, 100):
        cos = [cosine(weightme_grad(phi, w, "exact-model", s, RngStream(t, (i,)), circuit=c).gradient.values, g)
               for i, (phi, w, c, g) in enumerate(instances) for t in range(100 // 20 * 5)]
        means.append(np.mean(cos))
        ses.append(np.std(cos, ddof=1) / np.sqrt(len(cos)))
    for a, b, sa, sb in zip(means, means[1:], ses, ses[1:]):
        assert b >= a - 2 * math.hypot(sa, sb)
    assert means[-1] > 0.9
