import pytest

from insurer_game.equilibrium import solve_equilibrium
from insurer_game.model import GameConfig, InsurerType, MarketParams


def calibrated_market(**kw):
    base = dict(r=0.02, m=2.9428, a=0.9051, b=0.0023, kappa=7.3479, z_bar=0.04, nu=0.6612,
                rho=-0.7689, z0=0.04)
    base.update(kw)
    return MarketParams(**base)


INSURER_1 = InsurerType(x0=1.0, lam=0.9, mu1=1.0, mu2=2.0, eta=0.2, theta=0.7, delta=2.0, psi=5.0)
INSURER_2 = InsurerType(x0=1.0, lam=2.4, mu1=0.5, mu2=0.5, eta=0.2, theta=0.7, delta=3.0, psi=7.0)


def calibrated_game(T=5.0, lambda_hat=0.6, eta_hat=0.25, insurers=(INSURER_1, INSURER_2)):
    return GameConfig(T, lambda_hat, eta_hat, tuple(insurers))


@pytest.fixture(scope="session")
def market():
    return calibrated_market()


@pytest.fixture(scope="session")
def game():
    return calibrated_game()


@pytest.fixture(scope="session")
def profile(game, market):
    return solve_equilibrium(game, market, steps=10_000)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
