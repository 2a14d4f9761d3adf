"""Monte Carlo for the CIR factor and insurer wealth under reference or worst-case measures.

Random-number contract: every (path, channel) pair owns a Philox stream derived
from the master seed, so a path's shocks do not depend on how many paths are
drawn or how they are chunked.  Channels are 0 = W (stock), 1 = B (factor),
2 = common claims shock, 3 + k = idiosyncratic claims shock of insurer k.

With pi = ell Z / (aZ + b) the stock exposure reduces to ell sqrt(Z) dW and the
excess drift to ell m Z, so a and b only enter the recorded volatility path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import EquilibriumProfile
from .model import DomainError, GameConfig, MarketParams, idio_variance

CHANNELS_FIXED = 3


@dataclass(frozen=True)
class SimulationConfig:
    paths: int = 100_000
    dt: float | None = None  # default 1e-3 T
    seed: int = 0
    worst_case: int | None = None  # None: reference measure; i: insurer i's worst case
    record_every: int = 0  # 0: terminal values only
    memory_guard: float = 5e7  # max recorded floats
    chunk: int = 2_000
    keep_increments: bool = False

    def __post_init__(self):
        if self.paths < 0:
            raise DomainError("paths must be >= 0")
        if self.dt is not None and self.dt <= 0:
            raise DomainError("dt must be positive")
        if self.chunk < 1 or self.record_every < 0:
            raise DomainError("chunk must be >= 1 and record_every >= 0")

    def steps_for(self, T: float) -> tuple[int, float]:
        dt = 1e-3 * T if self.dt is None else self.dt
        if dt > T / 100 * (1 + 1e-12):
            raise DomainError(f"dt={dt} exceeds T/100={T / 100}")
        K = int(round(T / dt))
        if abs(K * dt - T) > 1e-9 * T:
            raise DomainError(f"T={T} is not a whole number of steps dt={dt}")
        return K, T / K


@dataclass(frozen=True)
class DriftShift:
    """Girsanov drifts for one insurer's measure on the simulation grid.

    phi and chi are multiplied by sqrt(Z+) along the path; phi_tilde and
    vartheta (one row per insurer) are deterministic.
    """

    phi_coeff: np.ndarray
    chi_coeff: np.ndarray
    phi_tilde: np.ndarray
    vartheta: np.ndarray
    psi: float

    @staticmethod
    def zero(n: int, K: int) -> "DriftShift":
        z = np.zeros(K)
        return DriftShift(z, z, z, np.zeros((n, K)), math.inf)


@dataclass
class PathBundle:
    t_record: np.ndarray
    Z: np.ndarray  # (paths, records), truncated values recorded as Z+
    Sigma: np.ndarray
    X: np.ndarray  # (n, paths, records)
    Y: np.ndarray
    Z_T: np.ndarray
    X_T: np.ndarray  # (n, paths)
    Y_T: np.ndarray
    penalty: np.ndarray  # (paths,) entropy penalty of the simulated measure
    theta: np.ndarray
    delta: np.ndarray
    psi: np.ndarray
    measure: int | None
    increments: dict = field(default_factory=dict)

    @property
    def paths(self) -> int:
        return self.Z_T.shape[0]


def path_normals(seed: int, p0: int, p1: int, channels: int, K: int) -> np.ndarray:
    """Standard normals of shape (channels, p1 - p0, K) from per-(path, channel) streams."""
    out = np.empty((channels, p1 - p0, K))
    for p in range(p0, p1):
        for c in range(channels):
            ss = np.random.SeedSequence(seed, spawn_key=(p, c))
            out[c, p - p0] = np.random.Generator(np.random.Philox(ss)).standard_normal(K)
    return out


def _grid_lookup(t_grid: np.ndarray, K: int, dt: float) -> np.ndarray:
    """Left-endpoint index into the strategy grid for each Euler step."""
    h = t_grid[1] - t_grid[0]
    idx = np.floor(np.arange(K) * dt / h + 1e-9).astype(int)
    return np.minimum(idx, len(t_grid) - 1)


@dataclass(frozen=True)
class _Plan:
    """Per-step strategy and shift arrays with a leading scenario axis L."""

    ell: np.ndarray  # (L, n, K)
    a: np.ndarray  # (L, n, K)
    phi: np.ndarray  # (L, K)
    chi: np.ndarray
    phit: np.ndarray
    vth: np.ndarray  # (L, n, K)
    pen_scale: np.ndarray  # (L,) = 1/(2 psi), 0 under the reference measure


def _insurer_consts(game: GameConfig):
    lh = game.lambda_hat
    ins = game.insurers
    col = lambda f: np.array([f(u) for u in ins])[None, :, None]  # noqa: E731
    return dict(
        x0=np.array([u.x0 for u in ins]),
        income=col(lambda u: u.eta * (u.lam + lh) * u.mu1),
        cost=col(lambda u: game.eta_hat * (u.lam + lh) * u.mu2),
        common=col(lambda u: math.sqrt(lh) * u.mu1),
        idio=col(lambda u: math.sqrt(idio_variance(u, lh))),
        theta=np.array([u.theta for u in ins]),
    )


def _run_chunk(noise, plan: _Plan, market, consts, K, dt, rec_idx, keep):
    """Euler / full-truncation Euler over one chunk; returns terminal values and records."""
    L, n = plan.ell.shape[:2]
    P = noise.shape[1]
    sq = math.sqrt(dt)
    r, m, kappa, zb, nu, rho = (market.r, market.m, market.kappa, market.z_bar, market.nu,
                                market.rho)
    rho_c = math.sqrt(1.0 - rho * rho)
    Z = np.full((L, P), market.z0)
    X = np.broadcast_to(consts["x0"][None, :, None], (L, n, P)).copy()
    pen = np.zeros((L, P))
    recs = {"Z": [], "X": []}
    incs = {"W": [], "B": [], "Wt": [], "Wh": []}
    drift = consts["income"] - consts["cost"] * (1.0 - plan.a) ** 2  # (L, n, K)
    load_c = plan.a * consts["common"]
    load_i = plan.a * consts["idio"]
    ph_sq = plan.phit**2 + np.sum(plan.vth**2, axis=1)  # (L, K)

    if 0 in rec_idx:
        recs["Z"].append(Z.copy())
        recs["X"].append(X.copy())
    for k in range(K):
        zp = np.maximum(Z, 0.0)
        sz = np.sqrt(zp)
        phi = plan.phi[:, k, None] * sz
        chi = plan.chi[:, k, None] * sz
        dW = sq * noise[0, None, :, k] + phi * dt
        dB = sq * noise[1, None, :, k] + chi * dt
        dWt = sq * noise[2, None, :, k] + plan.phit[:, k, None] * dt
        dWh = sq * noise[3:, :, k][None] + plan.vth[:, :, k, None] * dt
        ell = plan.ell[:, :, k, None]
        X = X + (
            (r * X + drift[:, :, k, None] + ell * m * zp[:, None]) * dt
            + load_c[:, :, k, None] * dWt[:, None]
            + load_i[:, :, k, None] * dWh
            + ell * sz[:, None] * dW[:, None]
        )
        pen += plan.pen_scale[:, None] * (phi * phi + chi * chi + ph_sq[:, k, None]) * dt
        Z = Z + kappa * (zb - zp) * dt + nu * sz * (rho * dW + rho_c * dB)
        if keep:
            incs["W"].append(dW)
            incs["B"].append(dB)
            incs["Wt"].append(dWt)
            incs["Wh"].append(dWh)
        if k + 1 in rec_idx:
            recs["Z"].append(Z.copy())
            recs["X"].append(X.copy())
    return X, Z, pen, recs, incs


def _shift_for(profile: EquilibriumProfile, i: int, idx: np.ndarray, n: int) -> DriftShift:
    g = profile.generators
    ti = profile.layout.type_index[i]
    vth = np.empty((n, idx.size))
    for k in range(n):
        vth[k] = g.vartheta_self[ti][idx] if k == i else profile.vartheta_cross(i, k)[idx]
    return DriftShift(
        g.phi_coeff[ti][idx], g.chi_coeff[ti][idx], g.phi_tilde[ti][idx], vth,
        profile.game.insurers[i].psi,
    )


def worst_case_shift(profile: EquilibriumProfile, i: int, cfg: SimulationConfig) -> DriftShift:
    K, dt = cfg.steps_for(profile.T)
    return _shift_for(profile, i, _grid_lookup(profile.t_grid, K, dt), profile.n)


def simulate(
    game: GameConfig,
    market: MarketParams,
    profile: EquilibriumProfile,
    cfg: SimulationConfig,
    shift: DriftShift | None = None,
) -> PathBundle:
    """Simulate all insurers under the reference measure, insurer cfg.worst_case's
    worst-case measure, or an explicitly supplied drift shift."""
    T, n = game.horizon_T, game.n
    K, dt = cfg.steps_for(T)
    if profile.t_grid[-1] < T * (1 - 1e-12):
        raise DomainError("equilibrium profile does not cover [0, T]")
    idx = _grid_lookup(profile.t_grid, K, dt)
    ell = np.stack([profile.of("ell", i)[idx] for i in range(n)])[None]
    a = np.stack([profile.of("a_star", i)[idx] for i in range(n)])[None]
    if shift is None:
        if cfg.worst_case is None:
            shift = DriftShift.zero(n, K)
        else:
            if not 0 <= cfg.worst_case < n:
                raise DomainError(f"worst_case insurer {cfg.worst_case} out of range")
            shift = _shift_for(profile, cfg.worst_case, idx, n)
    plan = _Plan(
        ell, a, shift.phi_coeff[None], shift.chi_coeff[None], shift.phi_tilde[None],
        shift.vartheta[None], np.array([0.5 / shift.psi]),
    )
    bundle = _simulate_plan(game, market, cfg, plan, K, dt)[0]
    bundle.measure = cfg.worst_case
    return bundle


def _record_indices(cfg, K):
    if cfg.record_every <= 0:
        return np.array([], dtype=int)
    idx = np.arange(0, K + 1, cfg.record_every)
    if idx[-1] != K:
        idx = np.append(idx, K)
    return idx


def _simulate_plan(game, market, cfg, plan: _Plan, K, dt) -> list[PathBundle]:
    n = game.n
    L = plan.ell.shape[0]
    consts = _insurer_consts(game)
    rec_idx = _record_indices(cfg, K)
    n_rec = rec_idx.size
    recorded = cfg.paths * n_rec * (2 + 2 * n) * L
    if cfg.keep_increments:
        recorded += cfg.paths * K * (3 + n) * L
    if recorded > cfg.memory_guard:
        raise DomainError(
            f"requested output of {recorded:.3g} floats exceeds memory guard {cfg.memory_guard:.3g}"
        )
    rec_set = set(rec_idx.tolist())
    P = cfg.paths
    X_T = np.empty((L, n, P))
    Z_T = np.empty((L, P))
    pen = np.empty((L, P))
    Zr = np.empty((L, P, n_rec))
    Xr = np.empty((L, n, P, n_rec))
    incs_all = []
    for p0 in range(0, P, cfg.chunk):
        p1 = min(P, p0 + cfg.chunk)
        noise = path_normals(cfg.seed, p0, p1, CHANNELS_FIXED + n, K)
        X, Z, pe, recs, incs = _run_chunk(noise, plan, market, consts, K, dt, rec_set,
                                          cfg.keep_increments)
        X_T[:, :, p0:p1], Z_T[:, p0:p1], pen[:, p0:p1] = X, Z, pe
        if n_rec:
            Zr[:, p0:p1] = np.stack(recs["Z"], axis=-1)
            Xr[:, :, p0:p1] = np.stack(recs["X"], axis=-1)
        if cfg.keep_increments:
            incs_all.append({k: np.stack(v, axis=-1) for k, v in incs.items()})

    theta = consts["theta"]
    t_rec = rec_idx * dt
    out = []
    for l in range(L):
        Zp = np.maximum(Zr[l], 0.0)
        with np.errstate(divide="ignore"):
            sig = market.a * np.sqrt(Zp) + market.b / np.sqrt(Zp)
        xbar_r = Xr[l].mean(axis=0)
        xbar_T = X_T[l].mean(axis=0)
        incs = {}
        if cfg.keep_increments and incs_all:
            incs = {k: np.concatenate([c[k][l] for c in incs_all], axis=-2) for k in incs_all[0]}
        out.append(PathBundle(
            t_record=t_rec, Z=Zp, Sigma=sig, X=Xr[l], Y=Xr[l] - theta[:, None, None] * xbar_r,
            Z_T=np.maximum(Z_T[l], 0.0), X_T=X_T[l], Y_T=X_T[l] - theta[:, None] * xbar_T, penalty=pen[l],
            theta=theta, delta=np.array([u.delta for u in game.insurers]),
            psi=np.array([u.psi for u in game.insurers]), measure=None, increments=incs,
        ))
    return out


@dataclass(frozen=True)
class ObjectiveEstimate:
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    penalty: float
    penalty_se: float
    J: float
    J_se: float
    paths: int


def objective_from_samples(y: np.ndarray, pen: np.ndarray, delta: float) -> ObjectiveEstimate:
    """J = mean - delta/2 var + penalty with delta-method standard errors."""
    N = y.size
    if N < 1000:
        warnings.warn(f"only {N} paths; objective standard errors are unreliable")
    if N < 2:
        nan = math.nan
        return ObjectiveEstimate(nan, nan, nan, nan, nan, nan, nan, nan, N)
    ybar = float(y.mean())
    dev2 = (y - ybar) ** 2
    var = float(dev2.sum() / (N - 1))
    pbar = float(pen.mean())
    infl = y - 0.5 * delta * dev2 + pen
    se = lambda x: float(x.std(ddof=1) / math.sqrt(N))  # noqa: E731
    return ObjectiveEstimate(
        mean=ybar, mean_se=se(y), variance=var, variance_se=se(dev2), penalty=pbar,
        penalty_se=se(pen), J=ybar - 0.5 * delta * var + pbar, J_se=se(infl), paths=N,
    )


def estimate_objective(i: int, bundle: PathBundle) -> ObjectiveEstimate:
    return objective_from_samples(bundle.Y_T[i], bundle.penalty, float(bundle.delta[i]))


@dataclass
class ScanResult:
    d_ell: np.ndarray
    d_a: np.ndarray
    estimates: list  # [i_ell][i_a] -> ObjectiveEstimate
    clamped: np.ndarray  # (len(d_ell), len(d_a)) bool
    influence: np.ndarray  # (cells, paths) per-path influence values for paired comparisons

    def J(self) -> np.ndarray:
        return np.array([[e.J for e in row] for row in self.estimates])

    def J_se(self) -> np.ndarray:
        return np.array([[e.J_se for e in row] for row in self.estimates])

    def paired_se(self, c0: tuple[int, int], c1: tuple[int, int]) -> float:
        """Standard error of J(c0) - J(c1) under common random numbers."""
        w = len(self.d_a)
        d = self.influence[c0[0] * w + c0[1]] - self.influence[c1[0] * w + c1[1]]
        return float(d.std(ddof=1) / math.sqrt(d.size))


def perturbed_shift(profile: EquilibriumProfile, i: int, ell_i, a_i, idx) -> DriftShift:
    """Insurer i's worst-case drifts when she deviates to (ell_i, a_i), others fixed.

    First-order conditions of the inner minimisation with the equilibrium value
    derivatives v_y = v2, v_z = v3.
    """
    game, mk = profile.game, profile.market
    n = profile.n
    u = game.insurers[i]
    lh = game.lambda_hat
    v2 = profile.v2[idx]
    v3 = profile.of("v3", i)[idx]
    share, w = 1.0 - u.theta / n, u.theta / n
    ell_o = sum(profile.of("ell", k)[idx] for k in range(n) if k != i)
    mua_o = sum(game.insurers[k].mu1 * profile.of("a_star", k)[idx] for k in range(n) if k != i)
    vth = np.empty((n, idx.size))
    for k in range(n):
        if k == i:
            vth[k] = -share * a_i * math.sqrt(idio_variance(u, lh)) * v2 * u.psi
        else:
            uk = game.insurers[k]
            vth[k] = w * profile.of("a_star", k)[idx] * math.sqrt(idio_variance(uk, lh)) * v2 * u.psi
    return DriftShift(
        phi_coeff=-(mk.nu * mk.rho * v3 + (share * ell_i - w * ell_o) * v2) * u.psi,
        chi_coeff=-mk.nu * math.sqrt(1.0 - mk.rho**2) * v3 * u.psi,
        phi_tilde=-math.sqrt(lh) * (share * u.mu1 * a_i - w * mua_o) * v2 * u.psi,
        vartheta=vth,
        psi=u.psi,
    )


def best_response_scan(
    i: int,
    profile: EquilibriumProfile,
    d_ell,
    d_a,
    cfg: SimulationConfig,
) -> ScanResult:
    """Objective of insurer i over constant offsets (d_ell, d_a) to her equilibrium strategy.

    Every cell is simulated under the worst-case measure induced by the deviated
    strategy and reuses the same normals (common random numbers).
    """
    game, market = profile.game, profile.market
    n = game.n
    K, dt = cfg.steps_for(game.horizon_T)
    idx = _grid_lookup(profile.t_grid, K, dt)
    base_ell = np.stack([profile.of("ell", k)[idx] for k in range(n)])
    base_a = np.stack([profile.of("a_star", k)[idx] for k in range(n)])
    d_ell, d_a = np.asarray(d_ell, float), np.asarray(d_a, float)
    cells = [(x, y) for x in d_ell for y in d_a]
    L = len(cells)
    ell = np.repeat(base_ell[None], L, axis=0)
    a = np.repeat(base_a[None], L, axis=0)
    clamped = np.zeros((d_ell.size, d_a.size), dtype=bool)
    shifts = []
    for l, (de, da) in enumerate(cells):
        raw = base_a[i] + da
        ai = np.clip(raw, 0.0, 1.0)
        clamped[l // d_a.size, l % d_a.size] = bool(np.any(ai != raw))
        ell[l, i] = base_ell[i] + de
        a[l, i] = ai
        shifts.append(perturbed_shift(profile, i, ell[l, i], ai, idx))
    plan = _Plan(
        ell, a,
        np.stack([s.phi_coeff for s in shifts]),
        np.stack([s.chi_coeff for s in shifts]),
        np.stack([s.phi_tilde for s in shifts]),
        np.stack([s.vartheta for s in shifts]),
        np.full(L, 0.5 / game.insurers[i].psi),
    )
    bundles = _simulate_plan(game, market, cfg, plan, K, dt)
    delta = game.insurers[i].delta
    ests, infl = [], []
    for b in bundles:
        y, pen = b.Y_T[i], b.penalty
        ests.append(objective_from_samples(y, pen, delta))
        infl.append(y - 0.5 * delta * (y - y.mean()) ** 2 + pen)
    grid = [ests[r * d_a.size:(r + 1) * d_a.size] for r in range(d_ell.size)]
    return ScanResult(d_ell, d_a, grid, clamped, np.array(infl))
