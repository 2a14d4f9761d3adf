import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from insurer_game.model import (
    DomainError,
    GameConfig,
    InsurerType,
    diffusion_approximation,
    pairwise_claim_correlation,
    premium_rate,
    reinsurance_premium_rate,
    validate_game,
    volatility,
)

from conftest import INSURER_1, INSURER_2, calibrated_game, calibrated_market

pos = st.floats(1e-3, 10.0)
unit = st.floats(0.0, 1.0)


@st.composite
def insurers(draw):
    mu1 = draw(st.floats(0.0, 5.0))
    mu2 = mu1 * mu1 + draw(st.floats(0.0, 5.0))
    return InsurerType(x0=1.0, lam=draw(st.floats(0.0, 5.0)), mu1=mu1, mu2=mu2,
                       eta=draw(st.floats(0.0, 1.0)), theta=draw(unit), delta=draw(pos),
                       psi=draw(pos))


def test_diffusion_approximation_calibrated():
    d = diffusion_approximation(INSURER_1, 0.6)
    assert d.surplus_drift == pytest.approx(0.3)
    assert d.common_vol == pytest.approx(math.sqrt(0.6))
    assert d.idio_vol == pytest.approx(math.sqrt(2.4))


def test_diffusion_degenerate_cases():
    u = InsurerType(1.0, lam=0.0, mu1=1.5, mu2=2.25, eta=0.1, theta=0.0, delta=1.0, psi=1.0)
    assert diffusion_approximation(u, 0.7).idio_vol == pytest.approx(0.0, abs=1e-12)
    d = diffusion_approximation(INSURER_1, 0.0)
    assert d.common_vol == 0.0
    assert d.idio_vol == pytest.approx(math.sqrt(0.9 * 2.0))


@given(insurers(), st.floats(0.0, 5.0))
def test_total_claim_variance_conserved(u, lh):
    d = diffusion_approximation(u, lh)
    assert d.common_vol**2 + d.idio_vol**2 == pytest.approx((lh + u.lam) * u.mu2, abs=1e-9)


@given(insurers(), insurers(), st.floats(0.0, 5.0))
def test_correlation_in_unit_interval(u, k, lh):
    denom = (lh + u.lam) * (lh + k.lam) * u.mu2 * k.mu2
    if denom <= 0:
        with pytest.raises(DomainError):
            pairwise_claim_correlation(u, k, lh)
        return
    rho = pairwise_claim_correlation(u, k, lh)
    assert 0.0 <= rho <= 1.0 + 1e-12


def test_correlation_examples():
    assert pairwise_claim_correlation(INSURER_1, INSURER_2, 0.0) == 0.0
    u = InsurerType(1.0, lam=0.0, mu1=1.0, mu2=1.0, eta=0.1, theta=0.0, delta=1.0, psi=1.0)
    assert pairwise_claim_correlation(u, u, 0.5) == pytest.approx(1.0)
    assert pairwise_claim_correlation(INSURER_1, INSURER_2, 0.6) == pytest.approx(
        0.3 / math.sqrt(4.5))


@given(st.floats(1e-3, 5.0), st.floats(1e-3, 5.0), st.floats(1e-4, 10.0))
def test_volatility_am_gm(a, b, z):
    mk = calibrated_market(a=a, b=b)
    assert volatility(z, mk) >= 2.0 * math.sqrt(a * b) * (1 - 1e-12)


def test_volatility_examples():
    assert volatility(1.0, calibrated_market(a=1.0, b=0.0)) == 1.0
    assert volatility(1.0, calibrated_market()) == pytest.approx(0.9074)
    assert volatility(4.0, calibrated_market(a=0.0, b=1.0)) == pytest.approx(0.5)
    mk = calibrated_market(a=2.0, b=0.5)
    # the minimum 2 sqrt(ab) is attained where sqrt(z) = sqrt(b/a)
    assert volatility(0.5 / 2.0, mk) == pytest.approx(2.0 * math.sqrt(2.0 * 0.5))
    z = np.array([0.01, 0.04, 1.0])
    np.testing.assert_allclose(volatility(z, mk), [volatility(float(x), mk) for x in z])
    with pytest.raises(DomainError):
        volatility(0.0, mk)


def test_premiums():
    assert premium_rate(INSURER_1, 0.6) == pytest.approx(1.8)
    fair = InsurerType(1.0, 0.9, 1.0, 2.0, eta=0.0, theta=0.7, delta=2.0, psi=5.0)
    assert premium_rate(fair, 0.6) == pytest.approx(1.5)
    assert reinsurance_premium_rate(INSURER_1, 1.0, 0.6, 0.25) == 0.0
    assert reinsurance_premium_rate(INSURER_1, 0.0, 0.6, 0.25) == pytest.approx(2.25)
    assert reinsurance_premium_rate(INSURER_1, 0.0, 0.6, 0.0) == pytest.approx(1.5)
    with pytest.raises(DomainError):
        reinsurance_premium_rate(INSURER_1, 1.2, 0.6, 0.25)


@given(insurers(), st.floats(0.01, 5.0), st.floats(0.0, 2.0), unit, unit)
def test_reinsurance_premium_decreasing(u, lh, eh, x, y):
    if u.mu1 <= 0 and (eh <= 0 or u.mu2 <= 0):
        return
    lo, hi = sorted((x, y))
    if hi - lo < 1e-6:
        return
    assert reinsurance_premium_rate(u, lo, lh, eh) > reinsurance_premium_rate(u, hi, lh, eh)


def test_validate_calibrated(market, game):
    rep = validate_game(game, market)
    assert rep.passed, rep.to_text()


def test_validate_degenerate_competition(market):
    a = InsurerType(1.0, 0.9, 1.0, 2.0, 0.2, theta=1.0, delta=2.0, psi=5.0)
    rep = validate_game(calibrated_game(insurers=(a, a)), market)
    fails = {c.name: c for c in rep.failures()}
    assert "competition" in fails and "degenerate competition" in fails["competition"].message


def test_validate_feller_boundary(game):
    mk = calibrated_market(nu=math.sqrt(2 * 7.3479 * 0.04))
    assert [c.name for c in validate_game(game, mk).failures()] == ["feller"]


def test_domain_errors():
    with pytest.raises(DomainError):
        InsurerType(1.0, 0.9, 1.0, 0.5, 0.2, 0.7, 2.0, 5.0)  # mu2 < mu1^2
    with pytest.raises(DomainError):
        calibrated_market(rho=1.5)
    with pytest.raises(DomainError):
        GameConfig(5.0, 0.6, 0.25, ())


def test_report_serialises(market, game):
    import json

    rep = validate_game(game, market)
    obj = json.loads(json.dumps(rep.to_json_obj()))
    assert obj["passed"] is True
    assert "overall: PASS" in rep.to_text()
