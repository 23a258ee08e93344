import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_mass
from pcef.edm import (combine_dist_conf, confp, credibility_from_edmm, dismp, distp, edmm,
                      edmm_from_csv, edmm_to_csv)
from pcef.evidence import Frame, MassFunction

F2 = Frame(("a", "b"))
probs = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6).map(lambda v: np.array(v) / np.sum(v))


@pytest.mark.parametrize("p,q,expected", [
    ([0.3, 0.7], [0.3, 0.7], 0.0),
    ([1, 0], [0, 1], 1.0),
    ([0.7, 0.3], [0.5, 0.5], 0.2),
])
def test_distp_examples(p, q, expected):
    assert distp(p, q) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("p,q,expected", [
    ([0.7, 0.3], [0.9, 0.1], 0.0),
    ([0.8, 0.2], [0.3, 0.7], 0.56),
    ([1, 0], [0, 1], 1.0),
])
def test_confp_examples(p, q, expected):
    assert confp(p, q) == pytest.approx(expected, abs=1e-15)


def test_dismp_examples():
    m1 = MassFunction.from_focal(F2, {"a": 0.4, 3: 0.6})
    assert dismp(m1, m1) == 0.0
    assert dismp(m1, MassFunction.vacuous(F2)) == pytest.approx(0.2, abs=1e-15)
    assert combine_dist_conf(1.0, 1.0) == 1.0


@given(probs)
def test_distp_bounded(p):
    q = np.roll(p, 1)
    d = distp(p, q)
    assert 0.0 <= d <= 1.0 + 1e-12
    assert d == pytest.approx(distp(q, p), abs=1e-15)


def test_edmm_symmetric_zero_diagonal(rng):
    ev = [random_mass(rng, 3) for _ in range(8)]
    d = edmm(ev)
    np.testing.assert_array_equal(d, d.T)
    np.testing.assert_array_equal(np.diag(d), 0.0)
    assert d.min() >= 0 and d.max() <= 1


def test_credibility_examples():
    np.testing.assert_array_equal(credibility_from_edmm(np.zeros((4, 4))), 1.0)
    d = np.array([[0, 0.1, 0.9], [0.1, 0, 0.9], [0.9, 0.9, 0]])
    np.testing.assert_allclose(credibility_from_edmm(d), [1.0, 1.0, 1.0 / 1.8], atol=1e-12)


def test_credibility_max_one(rng):
    ev = [random_mass(rng, 3) for _ in range(10)]
    c = credibility_from_edmm(edmm(ev))
    assert c.max() == pytest.approx(1.0)
    assert c.min() > 0


def test_csv_round_trip(rng):
    d = edmm([random_mass(rng, 2) for _ in range(5)])
    np.testing.assert_array_equal(edmm_from_csv(edmm_to_csv(d)), d)
