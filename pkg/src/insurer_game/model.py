"""Market and insurer parameters, derived insurance quantities, validity checks.

Rates are per year and times in years throughout.  The claims side is the
diffusion approximation of a compound-Poisson surplus with a common shock of
intensity ``lambda_hat`` hitting every insurer.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field


class DomainError(ValueError):
    """Inputs outside the model's domain."""


class DegenerateCompetitionError(DomainError):
    """Raised when the competition weights make the equilibrium non-existent."""


@dataclass(frozen=True)
class MarketParams:
    """4/2 stochastic-volatility stock driven by a CIR factor Z.

    Stock: dS/S = (r + m(aZ + b)) dt + (a sqrt(Z) + b/sqrt(Z)) dW.
    Factor: dZ = kappa(z_bar - Z) dt + nu sqrt(Z) (rho dW + sqrt(1-rho^2) dB).
    """

    r: float
    m: float
    a: float
    b: float
    kappa: float
    z_bar: float
    nu: float
    rho: float
    z0: float

    def __post_init__(self):
        if self.r < 0:
            raise DomainError(f"r must be >= 0, got {self.r}")
        if self.a < 0 or self.b < 0 or (self.a == 0 and self.b == 0):
            raise DomainError("need a >= 0, b >= 0 and not both zero")
        if self.kappa <= 0 or self.nu <= 0 or self.z0 <= 0:
            raise DomainError("kappa, nu and z0 must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")

    @property
    def feller_ok(self) -> bool:
        return 2.0 * self.kappa * self.z_bar > self.nu**2


@dataclass(frozen=True)
class InsurerType:
    """Type vector of one insurer: (x0, lambda, mu1, mu2, eta, theta, delta, psi)."""

    x0: float
    lam: float
    mu1: float
    mu2: float
    eta: float
    theta: float
    delta: float
    psi: float

    def __post_init__(self):
        if self.x0 < 0:
            raise DomainError(f"x0 must be >= 0, got {self.x0}")
        if self.lam < 0 or self.mu1 < 0 or self.eta < 0:
            raise DomainError("lambda, mu1 and eta must be nonnegative")
        if self.delta <= 0 or self.psi <= 0:
            raise DomainError("delta and psi must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError(f"theta must lie in [0, 1], got {self.theta}")
        if self.mu2 < self.mu1**2:
            raise DomainError(f"mu2={self.mu2} < mu1^2={self.mu1**2}")

    def strategy_key(self) -> tuple:
        """Fields that enter the equilibrium strategies (everything but x0)."""
        return (self.lam, self.mu1, self.mu2, self.eta, self.theta, self.delta, self.psi)


@dataclass(frozen=True)
class GameConfig:
    horizon_T: float
    lambda_hat: float
    eta_hat: float
    insurers: tuple[InsurerType, ...]

    def __post_init__(self):
        object.__setattr__(self, "insurers", tuple(self.insurers))
        if self.horizon_T <= 0:
            raise DomainError("horizon_T must be positive")
        if self.lambda_hat < 0:
            raise DomainError("lambda_hat must be >= 0")
        if self.eta_hat <= 0:
            raise DomainError("eta_hat must be positive")
        if not self.insurers:
            raise DomainError("need at least one insurer")

    @property
    def n(self) -> int:
        return len(self.insurers)

    @property
    def theta_sum(self) -> float:
        return math.fsum(ins.theta for ins in self.insurers)


@dataclass(frozen=True)
class DiffusionApprox:
    surplus_drift: float
    common_vol: float
    idio_vol: float


def idio_variance(insurer: InsurerType, lambda_hat: float) -> float:
    return (lambda_hat + insurer.lam) * insurer.mu2 - lambda_hat * insurer.mu1**2


def diffusion_approximation(insurer: InsurerType, lambda_hat: float) -> DiffusionApprox:
    var = idio_variance(insurer, lambda_hat)
    if var < 0:
        raise DomainError(f"idiosyncratic claim variance is negative ({var})")
    return DiffusionApprox(
        surplus_drift=insurer.eta * (insurer.lam + lambda_hat) * insurer.mu1,
        common_vol=math.sqrt(lambda_hat) * insurer.mu1,
        idio_vol=math.sqrt(var),
    )


def pairwise_claim_correlation(i: InsurerType, k: InsurerType, lambda_hat: float) -> float:
    denom = (lambda_hat + i.lam) * (lambda_hat + k.lam) * i.mu2 * k.mu2
    if denom <= 0:
        raise DomainError("zero denominator in claim correlation")
    return lambda_hat * i.mu1 * k.mu1 / math.sqrt(denom)


def volatility(z, market: MarketParams):
    """a sqrt(z) + b / sqrt(z); accepts scalars or arrays."""
    if isinstance(z, (int, float)):
        if z <= 0:
            raise DomainError(f"factor level must be positive, got {z}")
        rz = math.sqrt(z)
        return market.a * rz + market.b / rz
    import numpy as np

    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("factor level must be positive")
    rz = np.sqrt(z)
    return market.a * rz + market.b / rz


def premium_rate(insurer: InsurerType, lambda_hat: float) -> float:
    """Expected-value principle premium (1 + eta)(lambda + lambda_hat) mu1."""
    return (1.0 + insurer.eta) * (insurer.lam + lambda_hat) * insurer.mu1


def reinsurance_premium_rate(
    insurer: InsurerType, a_prop: float, lambda_hat: float, eta_hat: float
) -> float:
    """Variance-principle premium for ceding the fraction 1 - a_prop.

    The expected-loss term carries mu1 so that the net surplus drift is
    eta (lambda + lambda_hat) mu1 - eta_hat (1-a)^2 (lambda + lambda_hat) mu2.
    """
    if not 0.0 <= a_prop <= 1.0:
        raise DomainError(f"retention proportion must lie in [0, 1], got {a_prop}")
    ceded = 1.0 - a_prop
    tot = insurer.lam + lambda_hat
    return ceded * tot * insurer.mu1 + eta_hat * ceded**2 * tot * insurer.mu2


@dataclass
class Check:
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    hard: bool = True
    message: str = ""
    gating: bool = True  # informational checks are reported but never fail the report


@dataclass
class ValidityReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.gating)

    @property
    def hard_passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard and c.gating)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.gating and not c.passed]

    def extend(self, other: "ValidityReport"):
        self.checks.extend(other.checks)

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            vals = ", ".join(f"{k}={_fmt_value(v)}" for k, v in c.values.items())
            if not c.gating:
                tag = "INFO:" + ("yes" if c.passed else "no")
            else:
                tag = "PASS" if c.passed else ("FAIL" if c.hard else "FAIL(soft)")
            line = f"[{tag}] {c.name}"
            if vals:
                line += f": {vals}"
            if c.message:
                line += f" ({c.message})"
            lines.append(line)
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)

    def to_json_obj(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {**asdict(c), "values": {k: _json_value(v) for k, v in c.values.items()}}
                for c in self.checks
            ],
        }


def _fmt_value(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _json_value(v):
    if hasattr(v, "item"):  # numpy scalar
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, tuple):
        return [_json_value(x) for x in v]
    return v


def validate_game(config: GameConfig, market: MarketParams) -> ValidityReport:
    """Feller condition, per-insurer moment constraints and n != sum(theta)."""
    report = ValidityReport()
    lhs = 2.0 * market.kappa * market.z_bar
    report.checks.append(
        Check("feller", lhs > market.nu**2, {"2*kappa*z_bar": lhs, "nu^2": market.nu**2})
    )
    for idx, ins in enumerate(config.insurers):
        var = idio_variance(ins, config.lambda_hat)
        report.checks.append(
            Check(
                f"insurer[{idx}].positivity",
                ins.lam > 0 and ins.mu1 > 0 and ins.eta > 0,
                {"lambda": ins.lam, "mu1": ins.mu1, "eta": ins.eta},
                hard=False,
            )
        )
        report.checks.append(
            Check(
                f"insurer[{idx}].moments",
                ins.mu2 >= ins.mu1**2 and var > 0,
                {"mu2-mu1^2": ins.mu2 - ins.mu1**2, "idio_variance": var},
            )
        )
    gap = config.n - config.theta_sum
    report.checks.append(
        Check(
            "competition",
            gap != 0.0,
            {"n": config.n, "sum_theta": config.theta_sum},
            message="" if gap != 0.0 else "degenerate competition: n = sum(theta)",
        )
    )
    return report
