"""Mean-field limit over a finite type distribution, and the n -> infinity experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    ConvergenceError,
    RiccatiBank,
    SingularSystemError,
    WorstCaseGenerators,
    _col,
    _srqp_arrays,
    reinsurance_ratios,
    solve_equilibrium,
)
from .model import (
    DegenerateCompetitionError,
    DomainError,
    GameConfig,
    InsurerType,
    MarketParams,
    idio_variance,
)


@dataclass(frozen=True)
class TypeDistribution:
    atoms: tuple[tuple[InsurerType, float], ...]

    def __post_init__(self):
        atoms = tuple((u, float(w)) for u, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise DomainError("type distribution needs at least one atom")
        if any(w <= 0 for _, w in atoms):
            raise DomainError("atom weights must be positive")
        total = math.fsum(w for _, w in atoms)
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"atom weights sum to {total}, not 1")

    @property
    def types(self) -> tuple[InsurerType, ...]:
        return tuple(u for u, _ in self.atoms)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    def mean(self, attr: str) -> float:
        return math.fsum(w * getattr(u, attr) for u, w in self.atoms)

    def sample(self, n: int, rng: np.random.Generator) -> list[InsurerType]:
        idx = rng.choice(len(self.atoms), size=n, p=self.weights)
        return [self.atoms[k][0] for k in idx]


@dataclass
class MeanFieldEquilibrium:
    t_grid: np.ndarray
    dist: TypeDistribution
    M1: np.ndarray
    Omega_bar: np.ndarray
    S: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    ell: np.ndarray  # rows are atoms
    a_star: np.ndarray
    generators: WorstCaseGenerators
    v2: np.ndarray
    v3: np.ndarray
    ups3: np.ndarray
    iterations: int


def _omega_fixed_point(c, p, mu1, w, tol, max_iter):
    """Omega = E[mu1 min(c Omega + p, 1)] from the unconstrained aggregate."""
    den = 1.0 - np.tensordot(w, mu1 * c, axes=1)
    if np.any(den <= 0):
        raise SingularSystemError("unconstrained mean-field aggregate is singular")
    omega = np.tensordot(w, mu1 * p, axes=1) / den
    for it in range(1, max_iter + 1):
        new = np.tensordot(w, mu1 * np.minimum(c * omega + p, 1.0), axes=1)
        diff = float(np.max(np.abs(new - omega)))
        omega = new
        if diff < tol:
            return omega, it
    raise ConvergenceError(f"mean-field aggregate did not converge in {max_iter} sweeps")


def mean_field_solve(
    dist: TypeDistribution,
    market: MarketParams,
    lambda_hat: float,
    eta_hat: float,
    T: float,
    steps: int = 10_000,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    force: bool = False,
    bank: RiccatiBank | None = None,
) -> MeanFieldEquilibrium:
    theta_bar = dist.mean("theta")
    if theta_bar == 1.0:
        raise DegenerateCompetitionError("mean-field equilibrium does not exist: E[theta] = 1")
    if not market.feller_ok:
        raise DomainError("Feller condition fails")
    if bank is None:
        bank = RiccatiBank(market, T, steps, force=force)
    types, w = dist.types, dist.weights
    sols = [bank.get(u) for u in types]
    v3 = np.vstack([s.v3 for s in sols])
    u3 = np.vstack([s.ups3 for s in sols])
    v2 = sols[0].v2[None, :]

    delta, psi, theta = _col(types, "delta"), _col(types, "psi"), _col(types, "theta")
    lam, mu1, mu2 = _col(types, "lam"), _col(types, "mu1"), _col(types, "mu2")
    co = _srqp_arrays(v3, u3, v2, delta, psi, theta, lam, mu1, mu2, 1, market, lambda_hat,
                      eta_hat, mean_field=True)
    M1 = np.tensordot(w, co.S, axes=1)
    ell = co.S + theta * M1 / (1.0 - theta_bar)

    c, p = reinsurance_ratios(co.R, co.Q, co.P)
    omega, iters = _omega_fixed_point(c, p, mu1, w, tol, max_iter)
    a = np.minimum(c * omega + p, 1.0)

    idio = np.sqrt(np.array([idio_variance(u, lambda_hat) for u in types]))[:, None]
    nu, rho = market.nu, market.rho
    gens = WorstCaseGenerators(
        phi_coeff=-(nu * rho * v3 + co.S * v2) * psi,
        chi_coeff=-nu * math.sqrt(1.0 - rho * rho) * v3 * psi,
        phi_tilde=-math.sqrt(lambda_hat) * (mu1 * a - theta * omega) * v2 * psi,
        vartheta_self=-a * idio * v2 * psi,
        cross_scale=np.zeros_like(a),
        cross_load=a * idio,
    )
    return MeanFieldEquilibrium(
        t_grid=sols[0].t_grid, dist=dist, M1=M1, Omega_bar=omega, S=co.S, R=co.R, Q=co.Q,
        P=co.P, ell=ell, a_star=a, generators=gens, v2=v2[0], v3=v3, ups3=u3, iterations=iters,
    )


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    seed: int
    err_ell: float
    err_a: float

    @property
    def err(self) -> float:
        return max(self.err_ell, self.err_a)


def convergence_experiment(
    dist: TypeDistribution,
    n_list,
    seeds,
    market: MarketParams,
    lambda_hat: float,
    eta_hat: float,
    T: float,
    steps: int = 10_000,
    tol: float = DEFAULT_TOL,
    force: bool = False,
) -> list[ConvergenceRow]:
    """Sup-norm gap between sampled n-insurer equilibria and the mean-field strategies."""
    bank = RiccatiBank(market, T, steps, force=force)
    mf = mean_field_solve(dist, market, lambda_hat, eta_hat, T, steps, tol, force=force,
                          bank=bank)
    atom_of = {u.strategy_key(): k for k, u in enumerate(dist.types)}
    rows = []
    for n in n_list:
        for seed in seeds:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
            insurers = dist.sample(n, rng)
            game = GameConfig(T, lambda_hat, eta_hat, tuple(insurers))
            prof = solve_equilibrium(game, market, steps, tol, force=force, bank=bank)
            err_ell = err_a = 0.0
            for k, u in enumerate(prof.layout.types):
                j = atom_of[u.strategy_key()]
                err_ell = max(err_ell, float(np.max(np.abs(prof.ell[k] - mf.ell[j]))))
                err_a = max(err_a, float(np.max(np.abs(prof.a_star[k] - mf.a_star[j]))))
            rows.append(ConvergenceRow(n, seed, err_ell, err_a))
    return rows


def seed_averaged(rows: list[ConvergenceRow]) -> dict[int, tuple[float, float, float]]:
    """n -> mean (err_ell, err_a, err) over seeds."""
    out = {}
    for n in dict.fromkeys(r.n for r in rows):
        sel = [r for r in rows if r.n == n]
        out[n] = (
            float(np.mean([r.err_ell for r in sel])),
            float(np.mean([r.err_a for r in sel])),
            float(np.mean([r.err for r in sel])),
        )
    return out
