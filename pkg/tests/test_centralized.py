import numpy as np
import pytest

from conftest import random_mass
from pcef.centralized import ccef, dr_fold
from pcef.errors import TotalConflict
from pcef.evidence import Frame, MassFunction, argmax_betp, betp, dempster_pair
from pcef.scenario import table3_evidence


def test_identical_pieces(rng):
    m = random_mass(rng, 3, 0.1)
    res = ccef([m] * 4)
    np.testing.assert_array_equal(res.credibilities, 1.0)
    np.testing.assert_allclose(res.fused.masses, dr_fold([m] * 4).masses, atol=1e-12)


def test_table3_pattern():
    ev = table3_evidence()
    dr = dr_fold(ev)
    assert dr["b"] == pytest.approx(1.0)
    res = ccef(ev)
    assert argmax_betp(betp(res.fused)) == 1
    assert res.credibilities[-1] < 0.2


def test_two_paths_agree(rng):
    for _ in range(20):
        n = int(rng.integers(2, 5))
        ev = [random_mass(rng, n, 0.01) for _ in range(int(rng.integers(2, 9)))]
        ccef(ev, check=True)


def test_dr_fold_single_and_order(rng):
    m = random_mass(rng, 3)
    assert dr_fold([m]).allclose(m)
    ev = [random_mass(rng, 3, 0.05) for _ in range(6)]
    a = dr_fold(ev)
    b = dr_fold([ev[k] for k in rng.permutation(6)])
    np.testing.assert_allclose(a.masses, b.masses, atol=1e-12)


def test_dr_fold_conflict():
    f = Frame(("a", "b"))
    with pytest.raises(TotalConflict):
        dr_fold([MassFunction.from_focal(f, {"a": 1}), MassFunction.from_focal(f, {"b": 1})])


def test_dr_fold_matches_pairwise(rng):
    ev = [random_mass(rng, 2, 0.1) for _ in range(3)]
    manual = dempster_pair(dempster_pair(ev[0], ev[1]), ev[2])
    np.testing.assert_allclose(dr_fold(ev).masses, manual.masses, atol=1e-15)


def test_input_checks(rng):
    with pytest.raises(ValueError):
        ccef([random_mass(rng, 2)])
    with pytest.raises(ValueError):
        ccef([random_mass(rng, 2), random_mass(rng, 3)])
