"""Coupled Riccati system for the z-coefficients (v3, ups3) of the value pair.

The forward-clock matrix form F' = F K1 F + ... + G with F(0) = 0 is only used
for its coefficient matrices, which feed the scalar comparison bound
    u' = alpha1 u^2 + alpha2 u + alpha3,   u(0) = 0,
whose explicit solution U(t) dominates sup-norm |F(t)|.  The integration itself
is done on the equivalent pair of scalar ODEs in calendar time, backward from
v3(T) = ups3(T) = 0.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import DomainError, InsurerType, MarketParams

H = np.array([[0.0, 1.0], [1.0, 0.0]])


class ExistenceError(DomainError):
    """Horizon beyond the comparison bound; no certified Riccati solution."""


class BlowUpError(DomainError):
    """Riccati integration left the certified envelope."""


@dataclass(frozen=True)
class RiccatiCoefficients:
    K1: np.ndarray
    K2: np.ndarray
    K12: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    G: np.ndarray
    # kept for the scalar right-hand side
    delta: float
    psi: float
    kappa: float
    m: float
    nu: float
    rho: float
    H: np.ndarray = H


def _diag(x, y) -> np.ndarray:
    return np.diag([float(x), float(y)])


def coefficients_for(delta: float, psi: float, market: MarketParams) -> RiccatiCoefficients:
    """Coefficient matrices; only (delta, psi) of the insurer enter."""
    nu, rho, kappa, m = market.nu, market.rho, market.kappa, market.m
    s = psi + delta
    nu2, rho2 = nu * nu, rho * rho
    return RiccatiCoefficients(
        K1=_diag(
            -0.5 * nu2 * (rho2 * psi * delta / s + (1 - rho2) * psi),
            nu2 * rho2 * delta * psi / s**2,
        ),
        K2=_diag(
            -0.5 * nu2 * delta * (1 - rho2 * delta / s),
            nu2 * rho2 * psi * delta * psi / s**2,
        ),
        K12=_diag(
            -nu2 * (rho2 * psi * 2 * psi * delta / s**2 + (1 - rho2) * psi),
            nu2 * rho2 * psi * delta / s,
        ),
        B1=_diag(
            -(kappa + m * nu * rho * psi / s),
            -(kappa + m * nu * rho * (delta**2 + psi**2) / s**2),
        ),
        B2=_diag(-m * nu * rho * delta / s, -m * nu * rho * 2 * psi * delta / s**2),
        G=_diag(m * m / (2 * s), delta * m * m / s**2),
        delta=delta,
        psi=psi,
        kappa=kappa,
        m=m,
        nu=nu,
        rho=rho,
    )


def build_coefficients(insurer: InsurerType, market: MarketParams) -> RiccatiCoefficients:
    return coefficients_for(insurer.delta, insurer.psi, market)


def _supnorm(d: np.ndarray) -> float:
    return float(max(abs(d[0, 0]), abs(d[1, 1])))


class Case(str, Enum):
    ZERO = "zero"
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass
class ExistenceReport:
    alpha1: float
    alpha2: float
    alpha3: float
    Delta: float
    case: Case
    varsigma1: complex
    varsigma2: complex
    T: float
    T_max: float
    U_T: float
    condition1_ok: tuple[bool, bool]
    condition1_abs_ok: tuple[bool, bool]
    condition1_lhs: tuple[float, float]
    condition1_rhs: float
    condition1_abs_lhs: float
    novikov_C_bound: float
    # sharper comparison: alpha2 replaced by the signed inf-log-norm of the linear part
    lognorm: float = math.nan
    T_max_sharp: float = math.nan
    U_T_sharp: float = math.inf
    condition1_sharp_ok: tuple[bool, bool] = (False, False)
    generator_sup: float | None = None

    @property
    def bound_ok(self) -> bool:
        return self.T < self.T_max and math.isfinite(self.U_T)

    @property
    def sharp_bound_ok(self) -> bool:
        return self.T < self.T_max_sharp and math.isfinite(self.U_T_sharp)

    @property
    def certified(self) -> bool:
        return self.bound_ok or self.sharp_bound_ok

    @property
    def U_T_certified(self) -> float:
        return min(self.U_T, self.U_T_sharp)

    @property
    def condition1_certified_ok(self) -> bool:
        return all(self.condition1_ok) or all(self.condition1_sharp_ok)

    @property
    def novikov_ok(self) -> bool:
        if self.generator_sup is None:
            return False
        return self.generator_sup**2 < self.novikov_C_bound

    @property
    def passed(self) -> bool:
        return self.certified and self.condition1_certified_ok and self.novikov_ok


def _case_of(alpha1, alpha2, alpha3) -> tuple[float, Case]:
    delta_ = alpha2 * alpha2 - 4.0 * alpha1 * alpha3
    scale = max(alpha2 * alpha2, 4.0 * alpha1 * alpha3, 1e-300)
    if abs(delta_) <= 1e-13 * scale:
        return 0.0, Case.ZERO
    return delta_, Case.POSITIVE if delta_ > 0 else Case.NEGATIVE


def _envelope(alpha1, alpha2, alpha3, Delta, case, s1, s2, t: float) -> float:
    if case is Case.ZERO:
        denom = alpha1 * (2.0 - alpha2 * t)
        if denom <= 0:
            return math.inf
        return s1.real + alpha2 / denom
    if case is Case.POSITIVE:
        s1r, s2r = s1.real, s2.real
        e = math.exp(alpha1 * (s1r - s2r) * t)
        denom = s2r - s1r * e
        if denom >= 0:
            return math.inf
        return alpha3 / alpha1 * (1.0 - e) / denom
    re, im = s1.real, s1.imag
    arg = alpha1 * t * im - math.atan(re / im)
    if arg >= math.pi / 2:
        return math.inf
    return re + im * math.tan(arg)


def _horizon_bound(alpha1, alpha2, alpha3, Delta, case, s1, s2) -> float:
    if case is Case.ZERO:
        return 2.0 / alpha2 if alpha2 > 0 else math.inf
    if case is Case.POSITIVE:
        if s1.real == 0.0 or s2.real / s1.real <= 1.0:
            return math.inf
        return math.log(s2.real / s1.real) / math.sqrt(Delta)
    return (math.pi + 2.0 * math.atan(s1.real / s1.imag)) / math.sqrt(-Delta)


def existence_check(
    coeffs: RiccatiCoefficients,
    insurer: InsurerType,
    market: MarketParams,
    T: float,
    steps: int = 2000,
    measure: bool = True,
) -> ExistenceReport:
    """Comparison-bound case analysis plus the parameter conditions on U(T).

    When the horizon is inside the case bound the system is also solved (with
    ``steps`` RK4 steps) to measure the sup of the worst-case generator
    coefficients against the Novikov-type constant kappa^2 / (2 nu^2).
    With ``measure=False`` the caller fills ``generator_sup`` from its own solve.
    """
    alpha1 = _supnorm(coeffs.K1) + _supnorm(coeffs.K2) + _supnorm(coeffs.K12)
    alpha2 = _supnorm(coeffs.B1) + _supnorm(coeffs.B2)
    alpha3 = _supnorm(coeffs.G)
    Delta, case, s1, s2, T_max, U_T = _comparison(alpha1, alpha2, alpha3, T)
    # row-wise inf-log-norm of [[B1_11, B2_11], [B2_22, B1_22]]
    lognorm = max(
        coeffs.B1[0, 0] + abs(coeffs.B2[0, 0]), coeffs.B1[1, 1] + abs(coeffs.B2[1, 1])
    )
    *_, T_max_sharp, U_T_sharp = _comparison(alpha1, lognorm, alpha3, T)

    nu, rho, psi = market.nu, market.rho, insurer.psi
    rhs = market.kappa / (math.sqrt(2.0) * nu)

    def cond1(U):
        return (market.m + nu * rho * U * psi, nu * math.sqrt(1.0 - rho * rho) * U * psi)

    lhs1, lhs2 = cond1(U_T)
    sharp1, sharp2 = cond1(U_T_sharp)
    U_cert = min(U_T, U_T_sharp)
    lhs1_abs = market.m + nu * abs(rho) * U_cert * psi
    lhs2_cert = cond1(U_cert)[1]

    report = ExistenceReport(
        alpha1=alpha1,
        alpha2=alpha2,
        alpha3=alpha3,
        Delta=Delta,
        case=case,
        varsigma1=complex(s1),
        varsigma2=complex(s2),
        T=T,
        T_max=T_max,
        U_T=U_T,
        condition1_ok=(lhs1 < rhs, lhs2 < rhs),
        condition1_abs_ok=(lhs1_abs < rhs, lhs2_cert < rhs),
        condition1_abs_lhs=lhs1_abs,
        condition1_lhs=(lhs1, lhs2),
        condition1_rhs=rhs,
        novikov_C_bound=market.kappa**2 / (2.0 * nu * nu),
        lognorm=lognorm,
        T_max_sharp=T_max_sharp,
        U_T_sharp=U_T_sharp,
        condition1_sharp_ok=(sharp1 < rhs, sharp2 < rhs),
    )
    if measure and report.certified:
        sol = solve_riccati(coeffs, insurer, market, T, steps=steps, report=report)
        report.generator_sup = generator_sup(sol, coeffs)
    return report


def _comparison(alpha1, alpha2, alpha3, T):
    Delta, case = _case_of(alpha1, alpha2, alpha3)
    root = cmath.sqrt(Delta)
    s1 = complex((-alpha2 + root) / (2.0 * alpha1))
    s2 = complex((-alpha2 - root) / (2.0 * alpha1))
    T_max = _horizon_bound(alpha1, alpha2, alpha3, Delta, case, s1, s2)
    U_T = _envelope(alpha1, alpha2, alpha3, Delta, case, s1, s2, T) if T < T_max else math.inf
    return Delta, case, s1, s2, T_max, U_T


def envelope_U(report: ExistenceReport, t, sharp: bool = False) -> float:
    """Comparison bound U(t) on the forward clock (U(0) = 0).

    ``sharp=True`` evaluates the log-norm variant, which stays finite when the
    linear part is dissipative.
    """
    alpha2 = report.lognorm if sharp else report.alpha2
    Delta, case, s1, s2, T_max, _ = _comparison(report.alpha1, alpha2, report.alpha3, 0.0)
    if t < 0 or t >= T_max:
        raise DomainError(f"t={t} outside [0, T_max={T_max})")
    return _envelope(report.alpha1, alpha2, report.alpha3, Delta, case, s1, s2, t)


@dataclass(frozen=True)
class RiccatiSolution:
    """(v3, ups3) on a uniform calendar grid; v2 = ups2 = exp(r(T - t))."""

    t_grid: np.ndarray
    v3: np.ndarray
    ups3: np.ndarray
    v2: np.ndarray

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    def at(self, t):
        """Linear interpolation of (v3, ups3) at calendar time(s) t."""
        return np.interp(t, self.t_grid, self.v3), np.interp(t, self.t_grid, self.ups3)


def closed_form_v2(market: MarketParams, T: float, t):
    if np.ndim(t):
        return np.exp(market.r * (T - np.asarray(t, dtype=float)))
    return math.exp(market.r * (T - t))


def calendar_rhs(c: RiccatiCoefficients, v: float, u: float) -> tuple[float, float]:
    """(dv3/dt, dups3/dt) in calendar time."""
    nu, rho, kappa, m, d, p = c.nu, c.rho, c.kappa, c.m, c.delta, c.psi
    s = p + d
    nu2, rho2 = nu * nu, rho * rho
    dv = (
        0.5 * nu2 * (rho2 * p * d / s + (1 - rho2) * p) * v * v
        + (kappa + m * nu * rho * p / s) * v
        - nu2 * rho2 * p * d / s * v * u
        + m * nu * rho * d / s * u
        + 0.5 * nu2 * d * (1 - rho2 * d / s) * u * u
        - m * m / (2 * s)
    )
    du = (
        -nu2 * rho2 * d * p / s**2 * u * u
        + (kappa + m * nu * rho * (d * d + p * p) / s**2) * u
        + nu2 * (rho2 * p * 2 * p * d / s**2 + (1 - rho2) * p) * v * u
        + m * nu * rho * 2 * p * d / s**2 * v
        - nu2 * rho2 * p * d * p / s**2 * v * v
        - d * m * m / s**2
    )
    return dv, du


def solve_riccati(
    coeffs: RiccatiCoefficients,
    insurer: InsurerType,
    market: MarketParams,
    T: float,
    steps: int = 10_000,
    report: ExistenceReport | None = None,
    force: bool = False,
) -> RiccatiSolution:
    """Classical RK4 backward from the zero terminal condition on a uniform grid."""
    if steps < 100:
        raise DomainError(f"steps must be >= 100, got {steps}")
    if report is None:
        report = existence_check(coeffs, insurer, market, T, measure=False)
    if not report.certified and not force:
        raise ExistenceError(
            f"horizon T={T} not below the Riccati existence bound "
            f"(T_max={report.T_max:.6g}, log-norm T_max={report.T_max_sharp:.6g})"
        )
    U = report.U_T_certified
    guard = 10.0 * U + 1.0 if math.isfinite(U) else 1e8

    h = T / steps
    v3 = np.empty(steps + 1)
    u3 = np.empty(steps + 1)
    v = u = 0.0
    v3[steps] = u3[steps] = 0.0
    f = calendar_rhs
    hh = -h
    for k in range(steps, 0, -1):
        k1v, k1u = f(coeffs, v, u)
        k2v, k2u = f(coeffs, v + 0.5 * hh * k1v, u + 0.5 * hh * k1u)
        k3v, k3u = f(coeffs, v + 0.5 * hh * k2v, u + 0.5 * hh * k2u)
        k4v, k4u = f(coeffs, v + hh * k3v, u + hh * k3u)
        v = v + hh / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        u = u + hh / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        if not (abs(v) <= guard and abs(u) <= guard):
            raise BlowUpError(
                f"Riccati solution left the envelope at t={(k - 1) * h:.6g} "
                f"(|v3|={abs(v):.3g}, |ups3|={abs(u):.3g}, guard={guard:.3g})"
            )
        v3[k - 1] = v
        u3[k - 1] = u

    t_grid = np.linspace(0.0, T, steps + 1)
    return RiccatiSolution(
        t_grid=t_grid, v3=v3, ups3=u3, v2=np.exp(market.r * (T - t_grid))
    )


def generator_sup(sol: RiccatiSolution, coeffs: RiccatiCoefficients) -> float:
    """sup over t of the sqrt(Z)-coefficients of the two diffusion generators.

    phi-coefficient: (nu rho v3 + S v2) psi, with S v2 = (m - nu rho(psi v3 + delta ups3))/(psi + delta);
    chi-coefficient: nu sqrt(1 - rho^2) v3 psi.
    """
    nu, rho, m, d, p = coeffs.nu, coeffs.rho, coeffs.m, coeffs.delta, coeffs.psi
    sv2 = (m - nu * rho * (p * sol.v3 + d * sol.ups3)) / (p + d)
    hbar1 = np.abs((nu * rho * sol.v3 + sv2) * p)
    hbar2 = np.abs(nu * math.sqrt(1.0 - rho * rho) * sol.v3 * p)
    return float(max(hbar1.max(), hbar2.max()))


def report_checks(report: ExistenceReport, label: str) -> list:
    """Named checks for a validity report; existence failures are soft."""
    from .model import Check

    rhs = report.condition1_rhs
    return [
        Check(
            f"{label}.riccati_existence",
            report.certified,
            {
                "T": report.T,
                "T_max": report.T_max,
                "U_T": report.U_T,
                "T_max_lognorm": report.T_max_sharp,
                "U_T_lognorm": report.U_T_sharp,
                "case": report.case.value,
            },
            hard=False,
        ),
        Check(
            f"{label}.riccati_envelope",
            report.bound_ok,
            {"alpha1": report.alpha1, "alpha2": report.alpha2, "alpha3": report.alpha3,
             "Delta": report.Delta, "T_max": report.T_max},
            gating=False,
            message="comparison bound with alpha2 = |B1| + |B2|",
        ),
        Check(
            f"{label}.condition1",
            report.condition1_certified_ok,
            {"U": report.U_T_certified, "rhs": rhs},
            hard=False,
        ),
        Check(
            f"{label}.condition1_abs_rho",
            all(report.condition1_abs_ok),
            {"lhs1_abs": report.condition1_abs_lhs, "rhs": rhs},
            gating=False,
            message="first inequality with |rho|, at the certified U(T)",
        ),
        Check(
            f"{label}.novikov",
            report.novikov_ok,
            {"generator_sup": report.generator_sup if report.generator_sup is not None
             else math.nan, "bound": math.sqrt(report.novikov_C_bound)},
            hard=False,
        ),
    ]
