"""Property-based checks of the invariants."""

import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from nonstat_rds import rng
from nonstat_rds.measures import DiscreteMeasure, coupling_plan, wasserstein, wasserstein_1d
from nonstat_rds.models import MapDistribution, Moebius, Periodic, cantor_ifs
from nonstat_rds.propagation import EXACT, convolve_step
from nonstat_rds.simulate import run_orbits
from nonstat_rds.transport import wasserstein_oracle
from strategies import CIRCLE, RP1, UNIT, measures, sl2

spaces = st.sampled_from([UNIT, RP1, CIRCLE])


@st.composite
def measure_pair(draw, n=2):
    space = draw(spaces)
    return [draw(measures(space)) for _ in range(n)]


@given(measure_pair(3))
def test_metric_axioms(ms):
    a, b, c = ms
    assert wasserstein(a, a) <= 1e-12
    assert abs(wasserstein(a, b) - wasserstein(b, a)) <= 1e-12
    assert wasserstein(a, c) <= wasserstein(a, b) + wasserstein(b, c) + 1e-12
    assert 0.0 <= wasserstein(a, b) <= a.space.diameter + 1e-12


@given(measure_pair(2))
def test_closed_form_equals_lp(ms):
    a, b = ms
    assert abs(wasserstein(a, b) - wasserstein_oracle(a, b).cost) <= 1e-9


@given(measure_pair(3), st.floats(0, 1))
def test_convex_in_first_argument(ms, t):
    a, a2, b = ms
    mix = DiscreteMeasure(
        a.space, np.concatenate([a.support, a2.support]), np.concatenate([t * a.weights, (1 - t) * a2.weights])
    )
    assert wasserstein(mix, b) <= t * wasserstein(a, b) + (1 - t) * wasserstein(a2, b) + 1e-12


@given(measures(UNIT), measures(UNIT), st.floats(0, 1))
def test_cantor_step_contracts(a, b, p):
    d = cantor_ifs(p)
    assert wasserstein(convolve_step(d, a, EXACT), convolve_step(d, b, EXACT)) <= wasserstein(a, b) / 3 + 1e-12


@given(measures(RP1), measures(RP1), sl2(max_log=0.7), sl2(max_log=0.7))
def test_moebius_step_bounded_by_lipschitz(a, b, m1, m2):
    d = MapDistribution.of(RP1, (Moebius(m1), 0.5), (Moebius(m2), 0.5))
    lhs = wasserstein(convolve_step(d, a, EXACT), convolve_step(d, b, EXACT))
    assert lhs <= d.lipschitz() * wasserstein(a, b) + 1e-9


@given(measures(UNIT), measures(UNIT), st.floats(-3, 3), st.floats(-3, 3))
def test_lipschitz_observable_integrals(a, b, c0, c1):
    phi = lambda x: c0 + c1 * np.asarray(x)
    assert abs(a.integrate(phi) - b.integrate(phi)) <= abs(c1) * wasserstein_1d(a, b) + 1e-12


@given(sl2(), st.lists(st.floats(0, math.pi, exclude_max=True), min_size=1, max_size=8))
def test_moebius_inverse_identity(m, xs):
    f = Moebius(m)
    x = np.array(xs)
    assert np.all(RP1.dist(f.inverse().apply(f.apply(x, RP1), RP1), x) < 1e-9)


@given(measures(UNIT), measures(UNIT))
def test_coupling_plan_marginals_and_cost(a, b):
    plan = coupling_plan(a, b)
    assert np.allclose(plan.matrix.sum(axis=1), a.canonical().weights, atol=1e-12)
    assert abs(plan.cost - wasserstein_1d(a, b)) <= 1e-12


@given(measures(UNIT), st.integers(1, 4), st.floats(0.05, 0.95))
def test_propagation_conserves_mass_and_space(nu, steps, p):
    out = nu
    for _ in range(steps):
        out = convolve_step(cantor_ifs(p), out, EXACT)
    assert abs(out.weights.sum() - 1) <= 1e-12
    assert np.all(UNIT.contains(out.support))


@given(st.integers(0, 2**64 - 1), st.integers(0, 1000))
def test_orbits_are_deterministic(seed, trial):
    seq = Periodic((cantor_ifs(0.3), cantor_ifs(0.7)))
    keys = rng.trial_keys(seed, [trial])
    a = run_orbits(seq, [0.5], keys, 50)
    b = run_orbits(seq, [0.5], keys, 50)
    assert np.array_equal(a, b)
    assert seq.at(7) is seq.at(7)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**63), st.integers(0, 2**40))
def test_uniform_is_pure_function(seed, trial, counter):
    key = rng.trial_key(seed, trial)
    u1 = rng.uniforms(key, np.uint64(counter))
    u2 = rng.uniforms(np.array([key, key]), np.array([counter, counter], dtype=np.uint64))
    assert 0.0 <= float(u1) < 1.0 and float(u1) == u2[0] == u2[1]
