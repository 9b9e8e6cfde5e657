"""Sampling the stationary pinned string and exact fBm oracles.

The pinned string at the spatial origin is a superposition of independent
stationary Ornstein-Uhlenbeck modes, one per radial shell of Fourier space,
plus a Brownian component carrying the infrared mass below ``lambda_min``.
Each mode is advanced with its exact transition law, so there is no time
discretisation error. The mode vector is the Markov state of the process.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .analytic import DomainError, ModelParams, fbm_gram, normalization_constant
from .quadrature import pinned_variance, spectral_prefactor
from .rng import map_blocks, replica_generator

ENGINES = ("spectral_pinned", "davies_harte", "cholesky")


@dataclass
class SpectralGrid:
    """Discretised spectral measure: OU rates, cell masses and infrared Brownian rate."""

    rates: np.ndarray
    weights: np.ndarray
    zero_mode_rate: float
    lambda_min: float
    lambda_max: float

    @property
    def mode_count(self) -> int:
        return self.rates.shape[0]

    @property
    def stationary_sd(self) -> np.ndarray:
        # increment variance of one mode over t is 2 v (1 - e^{-lam t}) = w^2 (1 - e^{-lam t}) / lam
        return np.sqrt(self.weights / (2.0 * self.rates))

    def variance(self, t: float) -> float:
        """Variance of the pinned read-out at time ``t`` implied by this grid."""
        return float(np.sum(self.weights * -np.expm1(-self.rates * t) / self.rates) + self.zero_mode_rate * t)

    def relative_error(self, params: ModelParams, times=(1.0,)) -> float:
        """Largest relative deviation of :meth:`variance` from the quadrature value."""
        return max(
            abs(self.variance(t) / pinned_variance(t, params).value - 1.0) for t in times
        )


def _spectral_mass(params: ModelParams):
    """``(B, beta)`` with spectral measure ``B lam^(beta - 1) dlam`` in ``lam = |xi|^2``."""
    if params.white_noise:
        return 1.0 / (2.0 * math.pi), 0.5
    if params.alpha <= 0.0:
        raise DomainError("the spectral engine needs alpha > 0; use an exact sampler for H = 1/2")
    return spectral_prefactor(params.alpha, params.spatial_dim) / 2.0, params.alpha / 2.0


def build_spectral_grid(params: ModelParams, mode_count: int = 4096,
                        lambda_min: float = 1e-6, lambda_max: float = 1e6) -> SpectralGrid:
    """Geometric grid of OU rates carrying the exact spectral mass of each cell.

    The first ``mode_count - 1`` modes are the cells between consecutive
    geometric edges; each rate is chosen so the cell reproduces both
    ``int mu`` and ``int mu / lam`` exactly. The last mode holds the
    ultraviolet tail above ``lambda_max``, matched on ``int mu / lam``.
    """
    if mode_count < 16:
        raise DomainError("mode_count must be at least 16")
    if not 0.0 < lambda_min < lambda_max:
        raise DomainError("need 0 < lambda_min < lambda_max")
    B, beta = _spectral_mass(params)
    edges = np.geomspace(lambda_min, lambda_max, mode_count)
    lo, hi = edges[:-1], edges[1:]
    mass = B * (hi**beta - lo**beta) / beta
    inv = B * (lo ** (beta - 1.0) - hi ** (beta - 1.0)) / (1.0 - beta)
    rates = mass / inv
    tail_inv = B * lambda_max ** (beta - 1.0) / (1.0 - beta)
    rates = np.append(rates, lambda_max)
    weights = np.append(mass, tail_inv * lambda_max)
    return SpectralGrid(
        rates=rates,
        weights=weights,
        zero_mode_rate=B * lambda_min**beta / beta,
        lambda_min=lambda_min,
        lambda_max=lambda_max,
    )


@dataclass
class FieldState:
    """Mode amplitudes of one replica; single owner, advanced in place."""

    time: float
    modes: np.ndarray  # [value_dim, mode_count]
    zero_mode: np.ndarray  # [value_dim]
    rng: np.random.Generator = field(repr=False)
    grid: SpectralGrid = field(repr=False)

    def readout(self) -> np.ndarray:
        """``U(t, 0)`` up to the constant fixed at the start, per field copy."""
        return self.modes.sum(axis=-1) + self.zero_mode

    def copy(self, rng=None) -> "FieldState":
        return FieldState(self.time, self.modes.copy(), self.zero_mode.copy(), rng or self.rng, self.grid)


def init_stationary(grid: SpectralGrid, params: ModelParams, seed: int, replica: int = 0,
                    tag: str = "pinned") -> FieldState:
    """Draw every mode from its stationary law; the Brownian component starts at 0."""
    rng = replica_generator(seed, tag, replica)
    modes = grid.stationary_sd * rng.standard_normal((params.value_dim, grid.mode_count))
    return FieldState(0.0, modes, np.zeros(params.value_dim), rng, grid)


def _transition(grid: SpectralGrid, dt: float):
    decay = np.exp(-grid.rates * dt)
    noise_sd = grid.stationary_sd * np.sqrt(-np.expm1(-2.0 * grid.rates * dt))
    return decay, noise_sd, math.sqrt(grid.zero_mode_rate * dt)


def step(state: FieldState, dt: float, noiseless: bool = False) -> FieldState:
    """Advance by ``dt`` with the exact OU transition (in place)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    decay, noise_sd, zsd = _transition(state.grid, dt)
    v, m = state.modes.shape
    normals = state.rng.standard_normal((v, m))
    znorm = state.rng.standard_normal(v)
    if noiseless:
        normals[:] = 0.0
        znorm[:] = 0.0
    kernels.ou_advance(state.modes, decay, noise_sd, normals)
    state.zero_mode += zsd * znorm
    state.time += dt
    return state


@dataclass
class PathSample:
    times: np.ndarray
    values: np.ndarray  # [time, value_dim]
    params: ModelParams
    engine: str
    seed: int
    replica: int = 0

    def header(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "engine": self.engine,
            "seed": int(self.seed),
            "replica": int(self.replica),
            "columns": ["t"] + [f"x{i + 1}" for i in range(self.values.shape[1])],
        }


@dataclass
class ForwardBackwardPair:
    y_path: PathSample
    z_path: PathSample
    conditioning_state: FieldState


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("times must be a non-empty vector")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if times[0] != 0.0:
        raise ValueError("times[0] must be 0")
    return times


def _pinned_block(grid, params, times, seed, K, tag, start, stop, capture=None):
    """Simulate replicas ``start..stop`` on ``times``; returns read-outs ``[R, T, V]``.

    ``capture`` is an optional time index whose mode vectors are returned too.
    """
    V, M = params.value_dim, grid.mode_count
    R = stop - start
    gens = [replica_generator(seed, tag, r) for r in range(start, stop)]
    modes = np.empty((R, V, M))
    sd = grid.stationary_sd
    for b, g in enumerate(gens):
        modes[b] = sd * g.standard_normal((V, M))
    zero = np.zeros((R, V))
    out = np.empty((R, times.size, V))
    base = modes.sum(axis=-1)
    out[:, 0, :] = 0.0
    captured = modes.copy() if capture == 0 else None
    flat = modes.reshape(R * V, M)
    normals = np.empty((R, V, M))
    znorm = np.empty((R, V))
    for i in range(1, times.size):
        decay, noise_sd, zsd = _transition(grid, times[i] - times[i - 1])
        for b, g in enumerate(gens):
            normals[b] = g.standard_normal((V, M))
            znorm[b] = g.standard_normal(V)
        kernels.ou_advance(flat, decay, noise_sd, normals.reshape(R * V, M))
        zero += zsd * znorm
        out[:, i, :] = K * (modes.sum(axis=-1) + zero - base)
        if capture == i:
            captured = modes.copy()
    return out, captured


def default_normalizer(params: ModelParams) -> float:
    return normalization_constant(params).k_oracle


def sample_pinned_paths(grid: SpectralGrid, params: ModelParams, times, seed: int, replicas: int,
                        K: float | None = None, workers: int | None = None, tag: str = "pinned") -> np.ndarray:
    """``replicas`` independent read-outs ``X_t = K (U(t,0) - U(0,0))``, shape ``[R, T, V]``."""
    times = _check_times(times)
    K = default_normalizer(params) if K is None else float(K)
    parts = map_blocks(lambda a, b: _pinned_block(grid, params, times, seed, K, tag, a, b)[0], replicas, workers)
    return np.concatenate(parts, axis=0)


def sample_pinned_path(grid: SpectralGrid, params: ModelParams, times, seed: int, replica: int = 0,
                       K: float | None = None) -> PathSample:
    times = _check_times(times)
    K = default_normalizer(params) if K is None else float(K)
    vals, _ = _pinned_block(grid, params, times, seed, K, "pinned", replica, replica + 1)
    return PathSample(times, vals[0], params, "spectral_pinned", seed, replica)


def _fb_block(grid, params, lags, seed, K, horizon, backward, start, stop):
    V, M = params.value_dim, grid.mode_count
    R = stop - start
    L = lags.size
    if backward == "recorded":
        grid_times = np.unique(np.concatenate([[0.0], horizon - lags, [horizon], horizon + lags]))
        if grid_times[0] < 0:
            raise ValueError("recorded backward paths need lags <= horizon")
        h_idx = int(np.searchsorted(grid_times, horizon))
        vals, state = _pinned_block(grid, params, grid_times, seed, 1.0, "fb", start, stop, capture=h_idx)
        at_h = vals[:, h_idx, :]
        yi = np.searchsorted(grid_times, horizon + lags)
        zi = np.searchsorted(grid_times, horizon - lags)
        Y = K * (vals[:, yi, :] - at_h[:, None, :])
        Z = K * (vals[:, zi, :] - at_h[:, None, :])
    else:
        gens = [replica_generator(seed, "fb", r) for r in range(start, stop)]
        sd = grid.stationary_sd
        modes = np.empty((R, V, M))
        for b, g in enumerate(gens):
            modes[b] = sd * g.standard_normal((V, M))
        if horizon > 0:
            decay, noise_sd, _ = _transition(grid, horizon)
            normals = np.empty((R, V, M))
            for b, g in enumerate(gens):
                normals[b] = g.standard_normal((V, M))
            kernels.ou_advance(modes.reshape(R * V, M), decay, noise_sd, normals.reshape(R * V, M))
        state = modes.copy()
        Y = np.empty((R, L, V))
        Z = np.empty((R, L, V))
        base = state.sum(axis=-1)
        for target in (Y, Z):
            cur = state.copy()
            zero = np.zeros((R, V))
            prev = 0.0
            normals = np.empty((R, V, M))
            znorm = np.empty((R, V))
            for i, lag in enumerate(lags):
                if lag > prev:
                    decay, noise_sd, zsd = _transition(grid, lag - prev)
                    for b, g in enumerate(gens):
                        normals[b] = g.standard_normal((V, M))
                        znorm[b] = g.standard_normal(V)
                    kernels.ou_advance(cur.reshape(R * V, M), decay, noise_sd, normals.reshape(R * V, M))
                    zero += zsd * znorm
                    prev = lag
                target[:, i, :] = K * (cur.sum(axis=-1) + zero - base)
    # E[increment over lag | modes at the split] = K sum_j (e^{-lam_j lag} - 1) a_j
    coef = np.expm1(-np.outer(lags, grid.rates))  # [L, M]
    cond = K * np.einsum("lm,rvm->rlv", coef, state)
    return Y, Z, cond, state if R == 1 else None


@dataclass
class ForwardBackwardBatch:
    lags: np.ndarray
    y: np.ndarray  # [R, L, V]
    z: np.ndarray
    conditional_mean: np.ndarray  # [R, L, V], identical for Y and Z


def forward_backward_paths(grid: SpectralGrid, params: ModelParams, lags, seed: int, replicas: int,
                           horizon: float = 1.0, backward: str = "reversed", K: float | None = None,
                           workers: int | None = None) -> ForwardBackwardBatch:
    """Forward and backward increments around the split time for many replicas.

    ``backward="reversed"`` evolves a copy of the split state with the same
    stationary OU law and fresh Brownian increments; ``"recorded"`` reads the
    past of a single forward simulation instead.
    """
    lags = np.asarray(lags, dtype=float)
    if lags[0] != 0.0 or np.any(np.diff(lags) <= 0):
        raise ValueError("lags must start at 0 and increase")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if backward not in ("reversed", "recorded"):
        raise ValueError(f"unknown backward mode {backward!r}")
    K = default_normalizer(params) if K is None else float(K)
    parts = map_blocks(lambda a, b: _fb_block(grid, params, lags, seed, K, horizon, backward, a, b)[:3],
                       replicas, workers)
    return ForwardBackwardBatch(
        lags,
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
    )


def forward_backward_split(grid: SpectralGrid, params: ModelParams, lags, seed: int, horizon: float = 1.0,
                           replica: int = 0, backward: str = "reversed", K: float | None = None) -> ForwardBackwardPair:
    """``Y_t = X_{h+t} - X_h`` and ``Z_t = X_{h-t} - X_h`` for one replica, with the split state."""
    lags = np.asarray(lags, dtype=float)
    K = default_normalizer(params) if K is None else float(K)
    Y, Z, _, state = _fb_block(grid, params, lags, seed, K, horizon, backward, replica, replica + 1)
    gen = replica_generator(seed, "fb", replica)
    fs = FieldState(horizon, state[0], np.zeros(params.value_dim), gen, grid)
    return ForwardBackwardPair(
        PathSample(lags, Y[0], params, "spectral_pinned", seed, replica),
        PathSample(lags, Z[0], params, "spectral_pinned", seed, replica),
        fs,
    )


def conditional_cross_covariance(grid: SpectralGrid, lags_y, lags_z, K: float = 1.0, horizon: float = 1.0):
    """Exact ``Cov(Y, Z | modes at the split)`` for the finite-mode representation.

    Built from the unconditional stationary covariances of the modes
    observed at ``h + s``, ``h - t`` and ``h``, then conditioned with the
    Gaussian Schur complement. The Brownian component contributes nothing:
    its forward and backward increments cover disjoint intervals.
    Returns ``(conditional, unconditional)`` matrices of shape ``[len(lags_y), len(lags_z)]``.
    """
    lam = grid.rates
    v = grid.weights / (2.0 * lam)
    s = np.asarray(lags_y, dtype=float)[:, None, None]
    t = np.asarray(lags_z, dtype=float)[None, :, None]
    # mode covariance at times a, b: v e^{-lam |a - b|}
    c = lambda a, b: v * np.exp(-lam * np.abs(a - b))
    h = horizon
    # Y = sum_j (a_j(h+s) - a_j(h)), Z = sum_j (a_j(h-t) - a_j(h))
    cov_yz = c(h + s, h - t) - c(h + s, h + 0 * t) - c(h + 0 * s, h - t) + c(h + 0 * s, h + 0 * t)
    cov_ya = c(h + s, h) - v  # Cov(Y_j, a_j(h))
    cov_za = c(h - t, h) - v
    uncond = K * K * cov_yz.sum(axis=-1)
    cond = K * K * (cov_yz - cov_ya * cov_za / v).sum(axis=-1)
    return cond, uncond


# ---------------------------------------------------------------------------
# exact fBm oracles
# ---------------------------------------------------------------------------

def circulant_eigenvalues(H: float, n_steps: int, tol: float = 1e-10) -> np.ndarray:
    """Eigenvalues of the circulant embedding of unit-step fGn; raises if any is below ``-tol``."""
    k = np.arange(n_steps + 1, dtype=float)
    h2 = 2.0 * H
    gamma = 0.5 * (np.abs(k + 1) ** h2 + np.abs(k - 1) ** h2 - 2.0 * k**h2)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -tol:
        raise ValueError(
            f"circulant embedding has eigenvalue {eig.min():.3e} < -{tol}; use method='cholesky'"
        )
    return np.clip(eig, 0.0, None)


def _uniform_step(times):
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-10, atol=0.0):
        raise ValueError("davies_harte needs a uniform time grid; use method='cholesky'")
    return float(steps[0])


def _check_hurst(H):
    if not 0.0 < H <= 0.5:
        raise DomainError(f"Hurst exponent must lie in (0, 1/2], got {H}")


def _fbm_block(H, times, value_dim, seed, method, tag, start, stop, factor):
    R, T = stop - start, times.size
    out = np.zeros((R, T, value_dim))
    gens = [replica_generator(seed, tag, r) for r in range(start, stop)]
    if method == "davies_harte":
        n = T - 1
        dt = _uniform_step(times)
        sq = factor
        m = 2 * n
        for b, g in enumerate(gens):
            z = g.standard_normal((value_dim, 2, m))
            w = np.fft.fft(sq * (z[:, 0] + 1j * z[:, 1]), axis=-1).real[:, :n]
            out[b, 1:, :] = np.cumsum(w, axis=-1).T * dt**H
    else:
        L, pos = factor
        for b, g in enumerate(gens):
            z = g.standard_normal((L.shape[0], value_dim))
            out[b, pos, :] = L @ z
    return out


def _fbm_factor(H, times, method):
    if method == "davies_harte":
        _uniform_step(times)
        n = times.size - 1
        return np.sqrt(circulant_eigenvalues(H, n) / (2 * n))
    if method == "cholesky":
        pos = np.nonzero(times > 0)[0]
        return np.linalg.cholesky(fbm_gram(times[pos], H)), pos
    raise ValueError(f"unknown method {method!r}")


def exact_fbm_paths(H: float, times, value_dim: int, seed: int, replicas: int,
                    method: str = "davies_harte", workers: int | None = None, tag: str = "fbm") -> np.ndarray:
    """Exact fBm samples with covariance ``fbm_covariance``, shape ``[R, T, V]``."""
    _check_hurst(H)
    times = _check_times(times)
    factor = _fbm_factor(H, times, method)
    parts = map_blocks(lambda a, b: _fbm_block(H, times, value_dim, seed, method, tag, a, b, factor),
                       replicas, workers)
    return np.concatenate(parts, axis=0)


def exact_fbm(H: float, times, value_dim: int, seed: int, method: str = "davies_harte",
              replica: int = 0, params: ModelParams | None = None, tag: str = "fbm") -> PathSample:
    """One exact fBm path; identical to row ``replica`` of :func:`exact_fbm_paths`."""
    _check_hurst(H)
    times = _check_times(times)
    factor = _fbm_factor(H, times, method)
    vals = _fbm_block(H, times, value_dim, seed, method, tag, replica, replica + 1, factor)
    if params is None:
        params = ModelParams(alpha=2.0 - 4.0 * H, spatial_dim=2, value_dim=value_dim)
    return PathSample(times, vals[0], params, method, seed, replica)


def sample_paths(params: ModelParams, times, seed: int, replicas: int, engine: str = "davies_harte",
                 grid: SpectralGrid | None = None, K: float | None = None, workers: int | None = None,
                 tag: str = "paths") -> np.ndarray:
    """Dispatch to an engine; the Hurst exponent is the spectral one of ``params``."""
    if engine == "spectral_pinned":
        if grid is None:
            grid = build_spectral_grid(params)
        return sample_pinned_paths(grid, params, times, seed, replicas, K=K, workers=workers, tag=tag)
    if engine in ("davies_harte", "cholesky"):
        vals = exact_fbm_paths(params.hurst, times, params.value_dim, seed, replicas, engine, workers, tag=tag)
        return vals if K is None else vals * K
    raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")


# ---------------------------------------------------------------------------
# path files
# ---------------------------------------------------------------------------

def write_path_csv(sample: PathSample, path) -> Path:
    """Write ``t, x1..xd`` rows to ``path`` and the provenance header to ``path.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = sample.header()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header["columns"])
        for t, row in zip(sample.times, sample.values):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
    path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return path


def read_path_csv(path) -> PathSample:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    params = ModelParams(**header["params"])
    return PathSample(data[:, 0], data[:, 1:], params, header["engine"], header["seed"], header.get("replica", 0))
