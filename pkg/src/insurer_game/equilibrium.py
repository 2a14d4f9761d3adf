"""Robust n-insurer equilibrium on the Riccati time grid.

Insurers sharing every strategy-relevant parameter (all of the type vector but
x0) receive identical equilibrium strategies, so the solve runs over distinct
types with multiplicities.  Per-insurer arrays are recovered through
``EquilibriumProfile.type_index``.  This keeps n = 10^4 homogeneous games cheap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .model import (
    DegenerateCompetitionError,
    DomainError,
    GameConfig,
    InsurerType,
    MarketParams,
    idio_variance,
    validate_game,
)
from .riccati import (
    ExistenceError,
    ExistenceReport,
    RiccatiSolution,
    coefficients_for,
    existence_check,
    generator_sup,
    solve_riccati,
)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000


class SingularSystemError(DomainError):
    """The unconstrained reinsurance system has a nonpositive denominator."""


class ConvergenceError(DomainError):
    pass


# ---------------------------------------------------------------- Riccati per type


@dataclass
class RiccatiBank:
    """Riccati solutions keyed by (delta, psi), the only type fields that enter."""

    market: MarketParams
    T: float
    steps: int
    force: bool = False
    solutions: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    def get(self, insurer: InsurerType) -> RiccatiSolution:
        key = (insurer.delta, insurer.psi)
        if key not in self.solutions:
            coeffs = coefficients_for(insurer.delta, insurer.psi, self.market)
            report = existence_check(coeffs, insurer, self.market, self.T, measure=False)
            if not report.certified:
                if not self.force:
                    raise ExistenceError(
                        f"Riccati existence not certified for delta={insurer.delta}, "
                        f"psi={insurer.psi} at T={self.T}"
                    )
                warnings.warn("solving Riccati system outside the certified horizon")
            sol = solve_riccati(
                coeffs, insurer, self.market, self.T, self.steps, report=report, force=self.force
            )
            report.generator_sup = generator_sup(sol, coeffs)
            if not report.passed and not self.force:
                raise ExistenceError(
                    f"parameter conditions fail for delta={insurer.delta}, psi={insurer.psi}"
                )
            self.solutions[key] = sol
            self.reports[key] = report
        return self.solutions[key]

    def report(self, insurer: InsurerType) -> ExistenceReport:
        self.get(insurer)
        return self.reports[(insurer.delta, insurer.psi)]


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class TypeLayout:
    types: tuple[InsurerType, ...]
    type_index: np.ndarray  # insurer -> type
    mult: np.ndarray  # insurers per type

    @property
    def n(self) -> int:
        return int(self.mult.sum())


def type_layout(insurers) -> TypeLayout:
    keys, types, index = {}, [], []
    for ins in insurers:
        k = ins.strategy_key()
        if k not in keys:
            keys[k] = len(types)
            types.append(ins)
        index.append(keys[k])
    index = np.asarray(index, dtype=int)
    mult = np.bincount(index, minlength=len(types)).astype(float)
    return TypeLayout(tuple(types), index, mult)


def _col(types, attr) -> np.ndarray:
    return np.array([getattr(u, attr) for u in types], dtype=float)[:, None]


# ---------------------------------------------------------------- S R Q P


@dataclass(frozen=True)
class SRQPCoefficients:
    S: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    P: np.ndarray


def srqp(
    t,
    insurer: InsurerType,
    sol: RiccatiSolution,
    n: int,
    market: MarketParams,
    lambda_hat: float,
    eta_hat: float,
) -> SRQPCoefficients:
    """Pointwise coefficients at calendar time(s) t for one insurer in an n-game."""
    v3, u3 = sol.at(t)
    v2 = np.exp(market.r * (sol.T - np.asarray(t, dtype=float)))
    return _srqp_arrays(
        v3, u3, v2, insurer.delta, insurer.psi, insurer.theta, insurer.lam, insurer.mu1,
        insurer.mu2, n, market, lambda_hat, eta_hat,
    )


def _srqp_arrays(v3, u3, v2, delta, psi, theta, lam, mu1, mu2, n, market, lambda_hat, eta_hat,
                 mean_field=False):
    s = psi + delta
    S = (market.m - market.nu * market.rho * (v3 * psi + delta * u3)) / (s * v2)
    tot = (lam + lambda_hat) * mu2
    share = 1.0 if mean_field else 1.0 - theta / n
    R = tot * (share * s * v2 * v2 + 2.0 * eta_hat * v2)
    Q = lambda_hat * theta * mu1 * s * v2 * v2
    P = 2.0 * eta_hat * tot * v2
    return SRQPCoefficients(S, R, Q, P)


# ---------------------------------------------------------------- investment


@dataclass(frozen=True)
class InvestmentDecomposition:
    myopic: np.ndarray
    hedging: np.ndarray
    competition_myopic: np.ndarray
    competition_hedging: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.myopic + self.hedging + self.competition_myopic + self.competition_hedging


def competition_gap(theta, mult) -> float:
    n = float(np.sum(mult))
    gap = n - math.fsum(np.ravel(theta) * np.ravel(mult))
    if gap == 0.0:
        raise DegenerateCompetitionError(
            "robust n-insurer equilibrium does not exist: n = sum(theta)"
        )
    return gap


def investment_equilibrium(S, theta, mult=None) -> np.ndarray:
    """ell_i = S_i + theta_i sum_k S_k / (n - sum_k theta_k); rows are types."""
    S = np.atleast_2d(S)
    theta = np.reshape(np.asarray(theta, dtype=float), (-1, 1))
    mult = np.ones(S.shape[0]) if mult is None else np.asarray(mult, dtype=float)
    gap = competition_gap(theta, mult)
    total = np.tensordot(mult, S, axes=1)
    return S + theta * total / gap


def investment_decomposition(S, myopic, theta, mult) -> InvestmentDecomposition:
    """Split ell into own myopic/hedging demand and their competition counterparts."""
    theta = np.reshape(np.asarray(theta, dtype=float), (-1, 1))
    gap = competition_gap(theta, mult)
    hedging = S - myopic
    return InvestmentDecomposition(
        myopic=myopic,
        hedging=hedging,
        competition_myopic=theta * np.tensordot(mult, myopic, axes=1) / gap,
        competition_hedging=theta * np.tensordot(mult, hedging, axes=1) / gap,
    )


# ---------------------------------------------------------------- reinsurance


def reinsurance_ratios(R, Q, P):
    """c = Q/R and p = P/R; with no claim exposure (R = 0) nothing is ceded, so c = 0, p = 1."""
    R, Q, P = np.atleast_2d(R), np.atleast_2d(Q), np.atleast_2d(P)
    bare = R == 0.0
    safe = np.where(bare, 1.0, R)
    return np.where(bare, 0.0, Q / safe), np.where(bare, 1.0, P / safe)


def reinsurance_unconstrained(R, Q, P, mu1, mult=None) -> np.ndarray:
    """Explicit solution of the linear system without the cap at 1."""
    c, p = reinsurance_ratios(R, Q, P)
    mu1 = np.reshape(np.asarray(mu1, dtype=float), (-1, 1))
    mult = np.ones(c.shape[0]) if mult is None else np.asarray(mult, dtype=float)
    n = float(mult.sum())
    # a_i = (c_i A / n + p_i) / (1 + c_i mu_i / n) with A = sum_k mult_k mu_k a_k
    den_i = n + c * mu1
    num = np.tensordot(mult, n * mu1 * p / den_i, axes=1)
    den = 1.0 - np.tensordot(mult, mu1 * c / den_i, axes=1)
    if np.any(den <= 0):
        raise SingularSystemError(
            f"unconstrained reinsurance system is singular (min denominator {den.min():.3g})"
        )
    return (c * num / den + n * p) / den_i


@dataclass(frozen=True)
class FixedPointResult:
    a: np.ndarray
    iterations: int
    residual: float
    monotone: bool


def reinsurance_fixed_point(
    R, Q, P, mu1, mult=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, a0=None
) -> FixedPointResult:
    """Iterate a <- min(Q/R (1/n) sum_{k!=i} mu_k a_k + P/R, 1) from the unconstrained point.

    All grid times are iterated together.  Starting above the fixed point the
    iterates decrease monotonically; that is asserted at every sweep.
    """
    c, p = reinsurance_ratios(R, Q, P)
    mu1 = np.reshape(np.asarray(mu1, dtype=float), (-1, 1))
    mult = np.ones(c.shape[0]) if mult is None else np.asarray(mult, dtype=float)
    n = float(mult.sum())
    a = reinsurance_unconstrained(R, Q, P, mu1, mult) if a0 is None else np.array(a0, float)
    monotone = True

    def step(a):
        agg = np.tensordot(mult, mu1 * a, axes=1)
        return np.minimum(c * (agg - mu1 * a) / n + p, 1.0)

    for it in range(1, max_iter + 1):
        new = step(a)
        # a few ulps of slack: at an interior fixed point the map returns a up to rounding
        if np.any(new > a + 1e-15 * np.maximum(1.0, np.abs(a))) or np.any(new < 0):
            monotone = False
        diff = float(np.max(np.abs(new - a)))
        a = new
        if diff < tol:
            res = float(np.max(np.abs(step(a) - a)))
            return FixedPointResult(a, it, res, monotone)
    raise ConvergenceError(f"reinsurance fixed point did not converge in {max_iter} sweeps")


# ---------------------------------------------------------------- generators


@dataclass(frozen=True)
class WorstCaseGenerators:
    """Rows are types.  phi and chi are multiplied by sqrt(Z) on a path."""

    phi_coeff: np.ndarray
    chi_coeff: np.ndarray
    phi_tilde: np.ndarray
    vartheta_self: np.ndarray
    # vartheta_{i,k} = cross_scale[i] * cross_load[k] for k != i
    cross_scale: np.ndarray
    cross_load: np.ndarray

    def vartheta_cross(self, i_type: int, k_type: int) -> np.ndarray:
        return self.cross_scale[i_type] * self.cross_load[k_type]


def worst_case_generators(
    v3, v2, S, a_star, types, mult, market: MarketParams, lambda_hat: float
) -> WorstCaseGenerators:
    mult = np.asarray(mult, dtype=float)
    n = float(mult.sum())
    theta, psi, mu1 = _col(types, "theta"), _col(types, "psi"), _col(types, "mu1")
    idio = np.sqrt(np.array([idio_variance(u, lambda_hat) for u in types]))[:, None]
    return _generators(v3, v2, S, a_star, theta, psi, mu1, idio, mult, n, market, lambda_hat)


def _generators(v3, v2, S, a, theta, psi, mu1, idio, mult, n, market, lambda_hat):
    nu, rho = market.nu, market.rho
    others_mu_a = np.tensordot(mult, mu1 * a, axes=1) - mu1 * a
    share = 1.0 - theta / n
    return WorstCaseGenerators(
        phi_coeff=-(nu * rho * v3 + S * v2) * psi,
        chi_coeff=-nu * math.sqrt(1.0 - rho * rho) * v3 * psi,
        phi_tilde=-math.sqrt(lambda_hat) * (share * mu1 * a - theta / n * others_mu_a) * v2 * psi,
        vartheta_self=-share * a * idio * v2 * psi,
        cross_scale=theta / n * v2 * psi,
        cross_load=a * idio,
    )


def worst_case_generators_diagnostic(
    v3, v2, S, a_star, theta, psi, mu1, idio, market: MarketParams, lambda_hat: float
) -> WorstCaseGenerators:
    """Unvalidated entry point; accepts psi = 0 (ambiguity-neutral limit)."""
    col = lambda x: np.reshape(np.asarray(x, dtype=float), (-1, 1))  # noqa: E731
    theta, psi, mu1, idio = col(theta), col(psi), col(mu1), col(idio)
    a = np.atleast_2d(a_star)
    mult = np.ones(a.shape[0])
    return _generators(v3, v2, S, a, theta, psi, mu1, idio, mult, float(len(mult)), market,
                       lambda_hat)


# ---------------------------------------------------------------- profile


@dataclass
class EquilibriumProfile:
    t_grid: np.ndarray
    layout: TypeLayout
    game: GameConfig
    market: MarketParams
    v3: np.ndarray
    ups3: np.ndarray
    v2: np.ndarray
    S: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    ell: np.ndarray
    decomposition: InvestmentDecomposition
    a_check: np.ndarray
    a_star: np.ndarray
    fixed_point: FixedPointResult
    generators: WorstCaseGenerators
    reports: dict

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    def of(self, name: str, i: int) -> np.ndarray:
        """Trajectory of a per-type array for insurer i."""
        return getattr(self, name)[self.layout.type_index[i]]

    def generator(self, name: str, i: int) -> np.ndarray:
        return getattr(self.generators, name)[self.layout.type_index[i]]

    def vartheta_cross(self, i: int, k: int) -> np.ndarray:
        ti, tk = self.layout.type_index[i], self.layout.type_index[k]
        return self.generators.vartheta_cross(ti, tk)

    @property
    def ell_sup(self) -> np.ndarray:
        return np.max(np.abs(self.ell), axis=1)


def solve_equilibrium(
    game: GameConfig,
    market: MarketParams,
    steps: int = 10_000,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    force: bool = False,
    bank: RiccatiBank | None = None,
) -> EquilibriumProfile:
    report = validate_game(game, market)
    for c in report.checks:
        if c.name == "competition" and not c.passed:
            raise DegenerateCompetitionError(
                "robust n-insurer equilibrium does not exist: n = sum(theta)"
            )
        if c.name == "feller" and not c.passed:
            raise DomainError("Feller condition fails")
        if not c.passed:
            if not force:
                raise DomainError(f"validity check failed: {c.name}")
            warnings.warn(f"proceeding past failed check {c.name}")

    layout = type_layout(game.insurers)
    types, mult, n = layout.types, layout.mult, layout.n
    if bank is None:
        bank = RiccatiBank(market, game.horizon_T, steps, force=force)
    sols = [bank.get(u) for u in types]
    t_grid = sols[0].t_grid
    v3 = np.vstack([s.v3 for s in sols])
    u3 = np.vstack([s.ups3 for s in sols])
    v2 = sols[0].v2[None, :]

    delta, psi, theta = _col(types, "delta"), _col(types, "psi"), _col(types, "theta")
    lam, mu1, mu2 = _col(types, "lam"), _col(types, "mu1"), _col(types, "mu2")
    co = _srqp_arrays(v3, u3, v2, delta, psi, theta, lam, mu1, mu2, n, market,
                      game.lambda_hat, game.eta_hat)
    ell = investment_equilibrium(co.S, theta, mult)
    myopic = market.m / (psi + delta) / v2
    decomp = investment_decomposition(co.S, myopic, theta, mult)
    a_check = reinsurance_unconstrained(co.R, co.Q, co.P, mu1, mult)
    fp = reinsurance_fixed_point(co.R, co.Q, co.P, mu1, mult, tol=tol, max_iter=max_iter,
                                 a0=a_check)
    gens = worst_case_generators(v3, v2, co.S, fp.a, types, mult, market, game.lambda_hat)
    return EquilibriumProfile(
        t_grid=t_grid, layout=layout, game=game, market=market, v3=v3, ups3=u3, v2=v2[0],
        S=co.S, R=co.R, Q=co.Q, P=co.P, ell=ell, decomposition=decomp, a_check=a_check,
        a_star=fp.a, fixed_point=fp, generators=gens,
        reports={(u.delta, u.psi): bank.report(u) for u in types},
    )


# ---------------------------------------------------------------- value function


@dataclass(frozen=True)
class ValueCoefficients:
    """Rows are types; v2 = ups2 = exp(r(T - t))."""

    t_grid: np.ndarray
    v1: np.ndarray
    ups1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    ups3: np.ndarray

    def value(self, type_id: int, k: int, y, z):
        """Candidate value v1 + y v2 + v3 z at grid index k."""
        return self.v1[type_id, k] + y * self.v2[k] + self.v3[type_id, k] * z


def constant_term_rates(profile: EquilibriumProfile):
    """Integrands g with v1' = -g_v and ups1' = -g_u, one row per type."""
    game, mk, lay = profile.game, profile.market, profile.layout
    types, mult, n = lay.types, lay.mult, float(lay.n)
    lh, eh = game.lambda_hat, game.eta_hat
    theta, delta, psi = _col(types, "theta"), _col(types, "delta"), _col(types, "psi")
    lam, mu1, mu2, eta = _col(types, "lam"), _col(types, "mu1"), _col(types, "mu2"), _col(types, "eta")
    var = np.array([idio_variance(u, lh) for u in types])[:, None]
    idio = np.sqrt(var)
    a, v2, v3, u3 = profile.a_star, profile.v2[None, :], profile.v3, profile.ups3
    u2 = v2
    share, w = 1.0 - theta / n, theta / n

    def others(x):
        return np.tensordot(mult, x, axes=1) - x

    drift = eta * (lam + lh) * mu1 - eh * (1.0 - a) ** 2 * (lam + lh) * mu2
    mu_a_o = others(mu1 * a)
    a2var_o = others(a * a * var)
    premium = (share * drift - w * others(drift)) * v2

    g = profile.generators
    g_u = (
        mk.kappa * mk.z_bar * u3
        + premium
        + share * a * (math.sqrt(lh) * mu1 * g.phi_tilde + idio * g.vartheta_self) * u2
        - w * (math.sqrt(lh) * g.phi_tilde * mu_a_o + w * v2 * psi * a2var_o) * u2
    )
    g_v = (
        mk.kappa * mk.z_bar * v3
        + premium
        - 0.5 * delta * share**2 * a * a * (lh + lam) * mu2 * u2**2
        - 0.5 * delta * w**2 * a2var_o * u2**2
        - 0.5 * delta * lh * w**2 * mu_a_o**2 * u2**2
        + delta * lh * w * share * a * mu1 * mu_a_o * u2**2
        - 0.5 * lh * (share * mu1 * a - w * mu_a_o) ** 2 * v2**2 * psi
        - 0.5 * share**2 * a * a * var * v2**2 * psi
        - 0.5 * w**2 * a2var_o * v2**2 * psi
    )
    return g_v, g_u


def value_constant_terms(profile: EquilibriumProfile) -> ValueCoefficients:
    """Backward quadrature of the linear constant-term ODEs from zero terminal data.

    The right-hand sides do not depend on v1 or ups1, so RK4 on the shared grid
    reduces to composite Simpson, which scipy provides cumulatively.
    """
    g_v, g_u = constant_term_rates(profile)
    t = profile.t_grid
    h = t[1] - t[0]

    def backward(g):
        return cumulative_simpson(g[:, ::-1], dx=h, axis=1, initial=0.0)[:, ::-1]

    return ValueCoefficients(t, backward(g_v), backward(g_u), profile.v2, profile.v3,
                             profile.ups3)


# ---------------------------------------------------------------- stationarity


@dataclass(frozen=True)
class StationarityResidual:
    ell: np.ndarray
    a: np.ndarray
    clamped: np.ndarray

    @property
    def max_unclamped(self) -> tuple[float, float]:
        free = ~self.clamped
        a_res = float(np.max(self.a[free])) if free.any() else 0.0
        return float(np.max(self.ell)), a_res


def stationarity_residual(profile: EquilibriumProfile) -> StationarityResidual:
    """First-order conditions in the raw value-function form, per type and grid time."""
    game, mk, lay = profile.game, profile.market, profile.layout
    types, mult, n = lay.types, lay.mult, float(lay.n)
    lh, eh = game.lambda_hat, game.eta_hat
    theta, delta, psi = _col(types, "theta"), _col(types, "delta"), _col(types, "psi")
    lam, mu1, mu2 = _col(types, "lam"), _col(types, "mu1"), _col(types, "mu2")
    v2 = profile.v2[None, :]
    u2 = v2
    v3, u3 = profile.v3, profile.ups3
    share, w = 1.0 - theta / n, theta / n

    ell, a = profile.ell, profile.a_star
    ell_o = np.tensordot(mult, ell, axes=1) - ell
    signal = (mk.m * v2 - mk.nu * mk.rho * (v2 * v3 * psi + delta * u2 * u3)) / (
        v2**2 * psi + delta * u2**2
    )
    res_ell = np.abs(share * ell - w * ell_o - signal)

    mu_a_o = np.tensordot(mult, mu1 * a, axes=1) - mu1 * a
    tot = (lam + lh) * mu2
    res_a = np.abs(
        2.0 * eh * tot * v2
        + lh * w * mu1 * mu_a_o * (v2**2 * psi + delta * u2**2)
        - a * tot * (share * (delta * u2**2 + psi * v2**2) + 2.0 * eh * v2)
    )
    return StationarityResidual(res_ell, res_a, a >= 1.0)
