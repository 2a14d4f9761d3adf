import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from insurer_game.equilibrium import solve_equilibrium
from insurer_game.mean_field import (
    TypeDistribution,
    convergence_experiment,
    mean_field_solve,
    seed_averaged,
)
from insurer_game.model import DegenerateCompetitionError, DomainError, GameConfig

from conftest import INSURER_1, INSURER_2

LOW = dataclasses.replace(INSURER_1, theta=0.3)
HIGH = dataclasses.replace(INSURER_2, theta=0.8)


def two_point(w=0.5):
    return TypeDistribution(((LOW, w), (HIGH, 1.0 - w)))


def test_single_atom_without_competition_is_the_solo_problem(market):
    u = dataclasses.replace(INSURER_1, theta=0.0)
    mf = mean_field_solve(TypeDistribution(((u, 1.0),)), market, 0.6, 0.25, 5.0, steps=2000)
    solo = solve_equilibrium(GameConfig(5.0, 0.6, 0.25, (u,)), market, steps=2000)
    np.testing.assert_allclose(mf.ell, solo.ell, rtol=0, atol=1e-12)
    np.testing.assert_allclose(mf.a_star, solo.a_star, rtol=0, atol=1e-12)


def test_homogeneous_population_approaches_mean_field(market):
    mf = mean_field_solve(TypeDistribution(((INSURER_1, 1.0),)), market, 0.6, 0.25, 5.0,
                          steps=2000)
    gaps = []
    for n in (10, 100, 1000):
        prof = solve_equilibrium(GameConfig(5.0, 0.6, 0.25, (INSURER_1,) * n), market, steps=2000)
        gaps.append(max(np.abs(prof.ell - mf.ell).max(), np.abs(prof.a_star - mf.a_star).max()))
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-2


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.95))
def test_aggregate_self_consistent(w):
    from conftest import calibrated_market

    dist = two_point(w)
    mf = mean_field_solve(dist, calibrated_market(), 0.6, 0.25, 5.0, steps=200)
    mu1 = np.array([u.mu1 for u in dist.types])[:, None]
    omega = np.tensordot(dist.weights, mu1 * mf.a_star, axes=1)
    np.testing.assert_allclose(omega, mf.Omega_bar, atol=1e-12)
    assert np.all(mf.Omega_bar >= 0) and np.all(mf.Omega_bar <= dist.mean("mu1") + 1e-15)
    theta_bar = dist.mean("theta")
    M1 = np.tensordot(dist.weights, mf.S, axes=1)
    np.testing.assert_allclose(mf.ell, mf.S + np.array([[0.3], [0.8]]) * M1 / (1 - theta_bar))


def test_degenerate_mean_field(market):
    u = dataclasses.replace(INSURER_1, theta=1.0)
    with pytest.raises(DegenerateCompetitionError, match="does not exist"):
        mean_field_solve(TypeDistribution(((u, 1.0),)), market, 0.6, 0.25, 5.0, steps=200)


def test_distribution_validation():
    with pytest.raises(DomainError):
        TypeDistribution(((LOW, 0.5), (HIGH, 0.6)))
    with pytest.raises(DomainError):
        TypeDistribution(((LOW, 1.0), (HIGH, 0.0)))
    with pytest.raises(DomainError):
        TypeDistribution(())
    assert two_point(0.25).mean("theta") == pytest.approx(0.25 * 0.3 + 0.75 * 0.8)


def test_sampling_reproducible():
    dist = two_point()
    a = dist.sample(50, np.random.default_rng(3))
    b = dist.sample(50, np.random.default_rng(3))
    assert a == b and set(a) <= {LOW, HIGH}


def test_convergence_rows(market):
    rows = convergence_experiment(two_point(), [4, 64], [0, 1], market, 0.6, 0.25, 5.0, steps=500)
    assert [(r.n, r.seed) for r in rows] == [(4, 0), (4, 1), (64, 0), (64, 1)]
    avg = seed_averaged(rows)
    assert avg[64][2] < avg[4][2]
    again = convergence_experiment(two_point(), [4], [1], market, 0.6, 0.25, 5.0, steps=500)
    assert again[0] == rows[1]
