import dataclasses
import math
import warnings

import numpy as np
import pytest

from insurer_game.equilibrium import solve_equilibrium
from insurer_game.model import DomainError, GameConfig
from insurer_game.simulation import (
    DriftShift,
    SimulationConfig,
    best_response_scan,
    estimate_objective,
    objective_from_samples,
    path_normals,
    simulate,
    worst_case_shift,
)

from conftest import INSURER_1, calibrated_game, calibrated_market

FAST = dict(dt=0.05, paths=400)


def cir_mean(mk, t):
    return mk.z0 * math.exp(-mk.kappa * t) + mk.z_bar * (1 - math.exp(-mk.kappa * t))


def test_reproducible(game, market, profile):
    cfg = SimulationConfig(seed=11, record_every=10, **FAST)
    a, b = simulate(game, market, profile, cfg), simulate(game, market, profile, cfg)
    for f in ("Z", "X", "Y", "Z_T", "X_T", "Y_T", "penalty"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_streams_do_not_depend_on_chunking_or_path_count(game, market, profile):
    small = simulate(game, market, profile, SimulationConfig(seed=4, dt=0.05, paths=30, chunk=7))
    big = simulate(game, market, profile, SimulationConfig(seed=4, dt=0.05, paths=50))
    assert np.array_equal(small.X_T, big.X_T[:, :30])
    assert np.array_equal(path_normals(9, 3, 5, 4, 10), path_normals(9, 0, 5, 4, 10)[:, 3:])


def test_cir_mean(game, market, profile):
    cfg = SimulationConfig(seed=2, dt=0.01, paths=4000, record_every=100)
    b = simulate(game, market, profile, cfg)
    for t in (1.0, 3.0, 5.0):
        k = int(np.argmin(np.abs(b.t_record - t)))
        z = b.Z[:, k]
        assert abs(z.mean() - cir_mean(market, t)) < 3 * z.std(ddof=1) / math.sqrt(z.size)
    assert np.all(b.Z >= 0) and np.all(b.Z_T >= 0)


def test_relative_wealth_identity(game, market, profile):
    b = simulate(game, market, profile, SimulationConfig(seed=1, record_every=5, **FAST))
    xbar = b.X.mean(axis=0)
    for i in range(game.n):
        np.testing.assert_allclose(b.Y[i], b.X[i] - b.theta[i] * xbar, rtol=0, atol=1e-14)
    np.testing.assert_array_equal(b.X[:, :, -1], b.X_T)


def test_measure_shift_consistency(game, market, profile):
    cfg = SimulationConfig(seed=5, **FAST)
    K, dt = cfg.steps_for(game.horizon_T)
    # left-endpoint lookup assembled by hand from the generator trajectories
    idx = np.minimum((np.arange(K) * dt / (profile.t_grid[1] - profile.t_grid[0]) + 1e-9)
                     .astype(int), profile.t_grid.size - 1)
    i = 1
    vth = np.stack([profile.generator("vartheta_self", i)[idx] if k == i
                    else profile.vartheta_cross(i, k)[idx] for k in range(game.n)])
    manual = DriftShift(profile.generator("phi_coeff", i)[idx],
                        profile.generator("chi_coeff", i)[idx],
                        profile.generator("phi_tilde", i)[idx], vth, game.insurers[i].psi)
    a = simulate(game, market, profile, dataclasses.replace(cfg, worst_case=i))
    b = simulate(game, market, profile, cfg, shift=manual)
    assert np.array_equal(a.X_T, b.X_T) and np.array_equal(a.penalty, b.penalty)
    c = simulate(game, market, profile, cfg, shift=worst_case_shift(profile, i, cfg))
    assert np.array_equal(a.X_T, c.X_T)
    assert a.measure == i


def test_deterministic_wealth_without_risk():
    # m = 0 kills the stock position, a = 0 cedes every claim
    mk = calibrated_market(m=0.0)
    game = calibrated_game()
    prof = solve_equilibrium(game, mk, steps=1000)
    assert np.abs(prof.ell).max() < 1e-15
    prof = dataclasses.replace(prof, a_star=np.zeros_like(prof.a_star))
    b = simulate(game, mk, prof, SimulationConfig(seed=0, dt=0.005, paths=20))
    T, r = game.horizon_T, mk.r
    for i, u in enumerate(game.insurers):
        tot = u.lam + game.lambda_hat
        c = u.eta * tot * u.mu1 - game.eta_hat * tot * u.mu2
        exact = u.x0 * math.exp(r * T) + c * (math.exp(r * T) - 1) / r
        assert np.ptp(b.X_T[i]) < 1e-12
        assert b.X_T[i, 0] == pytest.approx(exact, rel=1e-4)


def test_zero_risk_objective():
    mk = calibrated_market(m=0.0)
    u = dataclasses.replace(INSURER_1, theta=0.0)
    game = GameConfig(1.0, 0.6, 0.25, (u,))
    prof = solve_equilibrium(game, mk, steps=1000)
    prof = dataclasses.replace(prof, a_star=np.zeros_like(prof.a_star))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_objective(0, simulate(game, mk, prof, SimulationConfig(seed=0, paths=50)))
    assert est.variance == pytest.approx(0.0, abs=1e-20)
    assert est.penalty == 0.0 and est.J == pytest.approx(est.mean)


def test_zero_paths(game, market, profile):
    b = simulate(game, market, profile, SimulationConfig(paths=0, dt=0.05))
    assert b.paths == 0 and b.X_T.shape == (2, 0)


def test_config_errors(game, market, profile):
    with pytest.raises(DomainError):
        simulate(game, market, profile, SimulationConfig(paths=10, dt=0.1))
    with pytest.raises(DomainError):
        simulate(game, market, profile,
                 SimulationConfig(paths=1000, dt=0.01, record_every=1, memory_guard=1e5))
    with pytest.raises(DomainError):
        SimulationConfig(paths=-1)


def test_objective_estimator():
    rng = np.random.default_rng(0)
    y = rng.normal(1.0, 2.0, 5000)
    est = objective_from_samples(y, np.zeros_like(y), delta=2.0)
    assert est.J == pytest.approx(est.mean - est.variance)
    assert est.variance == pytest.approx(4.0, rel=0.1)
    with pytest.warns(UserWarning):
        objective_from_samples(y[:10], np.zeros(10), 2.0)


def test_scan_origin_recovers_worst_case_objective(game, market, profile):
    cfg = SimulationConfig(seed=8, **FAST)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scan = best_response_scan(0, profile, [0.0], [0.0], cfg)
        direct = estimate_objective(0, simulate(game, market, profile,
                                                dataclasses.replace(cfg, worst_case=0)))
    assert scan.J()[0, 0] == pytest.approx(direct.J, rel=1e-12)
    assert not scan.clamped.any()


def test_scan_clamps(game, market, profile):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scan = best_response_scan(0, profile, [0.0], [-0.5, 0.0, 0.95],
                                  SimulationConfig(seed=0, dt=0.05, paths=50))
    assert scan.clamped.tolist() == [[True, False, True]]
    assert scan.paired_se((0, 1), (0, 1)) == 0.0
