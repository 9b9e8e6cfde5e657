"""Closed-form kernels, constants and parameter conversions.

Everything here is a pure function of its arguments. The quadrature module
validates these formulas numerically; the simulator and experiments treat
them as ground truth afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when a parameter lies outside the region where a formula is defined."""


@dataclass(frozen=True)
class ModelParams:
    """Noise exponent and dimensions of the pinned-string model.

    Parameters
    ----------
    alpha : float
        Riesz exponent of the spatial noise covariance ``|x|^-alpha``.
        Ignored when ``white_noise`` is set.
    spatial_dim : int
        Dimension of the spatial argument of the noise.
    value_dim : int
        Number of i.i.d. copies of the scalar field, i.e. the dimension the
        resulting fBm lives in.
    white_noise : bool
        Use a delta spatial covariance (only admissible for ``spatial_dim == 1``).

    ``alpha == 0`` is accepted (it labels the Brownian case served by the
    exact samplers) but the spectral engine refuses it.
    """

    alpha: float = 1.0
    spatial_dim: int = 2
    value_dim: int = 1
    white_noise: bool = False

    def __post_init__(self):
        check_params(self)

    @classmethod
    def unchecked(cls, alpha=1.0, spatial_dim=2, value_dim=1, white_noise=False):
        """Build parameters without validation, for divergence probes."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "alpha", float(alpha))
        object.__setattr__(obj, "spatial_dim", int(spatial_dim))
        object.__setattr__(obj, "value_dim", int(value_dim))
        object.__setattr__(obj, "white_noise", bool(white_noise))
        return obj

    @property
    def hurst(self) -> float:
        """Hurst exponent used for simulation (the spectral value)."""
        return hurst_from_alpha(self).h_spectral

    def to_dict(self) -> dict:
        return {
            "alpha": float(self.alpha),
            "spatial_dim": int(self.spatial_dim),
            "value_dim": int(self.value_dim),
            "white_noise": bool(self.white_noise),
        }


def check_params(p: ModelParams) -> None:
    if int(p.value_dim) < 1:
        raise DomainError(f"value_dim must be >= 1, got {p.value_dim}")
    if int(p.spatial_dim) < 1:
        raise DomainError(f"spatial_dim must be >= 1, got {p.spatial_dim}")
    if p.white_noise:
        if p.spatial_dim != 1:
            raise DomainError(
                "white-noise mode requires spatial_dim = 1 "
                f"(got spatial_dim = {p.spatial_dim})"
            )
        return
    upper = min(p.spatial_dim, 2)
    if not (0.0 <= p.alpha < upper):
        raise DomainError(
            f"alpha = {p.alpha} violates 0 < alpha < min(n, 2) = {upper} "
            f"for spatial_dim n = {p.spatial_dim}"
        )


@dataclass(frozen=True)
class HurstPair:
    h_paper: float
    h_spectral: float

    @property
    def paper_valid(self) -> bool:
        return 0.0 < self.h_paper <= 0.5

    def to_dict(self) -> dict:
        return {
            "h_paper": self.h_paper,
            "h_spectral": self.h_spectral,
            "h_paper_valid": self.paper_valid,
        }


def heat_kernel(t, x, n: int | None = None) -> float:
    """Heat kernel ``(4 pi t)^(-n/2) exp(-|x|^2 / 4t)`` for ``d/dt = Laplacian``.

    Zero for ``t <= 0``. ``x`` may be a scalar (n = 1) or a length-n vector.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if n is None:
        n = x.shape[-1]
    if x.shape[-1] != n:
        raise ValueError(f"x has {x.shape[-1]} components, expected {n}")
    if t <= 0:
        return 0.0
    r2 = float(np.dot(x, x))
    return (4.0 * math.pi * t) ** (-n / 2.0) * math.exp(-r2 / (4.0 * t))


def riesz_fourier_constant(alpha: float, n: int) -> float:
    """``c`` with ``FT(|x|^-alpha)(xi) = c |xi|^-(n - alpha)`` in ``R^n``.

    Uses the transform convention ``f^(xi) = int f(x) exp(i x.xi) dx``.
    """
    if not 0.0 < alpha < n:
        raise DomainError(f"need 0 < alpha < n, got alpha={alpha}, n={n}")
    return (
        math.pi ** (n / 2.0)
        * 2.0 ** (n - alpha)
        * math.gamma((n - alpha) / 2.0)
        / math.gamma(alpha / 2.0)
    )


def unit_sphere_area(n: int) -> float:
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def hurst_from_alpha(params: ModelParams) -> HurstPair:
    """Both Hurst formulas: the printed ``(1 - alpha n)/2`` and the variance-law one."""
    if params.white_noise:
        # the delta-kernel case is labelled H = 1/2 in the printed formula
        return HurstPair(h_paper=0.5, h_spectral=0.25)
    a = float(params.alpha)
    return HurstPair(h_paper=(1.0 - a * params.value_dim) / 2.0, h_spectral=(2.0 - a) / 4.0)


def _check_colored(alpha, n):
    if not 0.0 < alpha < min(n, 2):
        raise DomainError(
            f"alpha = {alpha} violates 0 < alpha < min(n, 2) for n = {n}"
        )


def truncated_variance_closed_form(t: float, alpha: float, n: int) -> float:
    """``int_0^t <G_r, G_r>_h dr``, the time-truncated heat-kernel energy."""
    if t <= 0:
        raise DomainError("t must be positive")
    _check_colored(alpha, n)
    coef = (
        2.0 ** (-1.5 * alpha + 1.0)
        * math.gamma((n - alpha) / 2.0)
        / ((2.0 - alpha) * math.gamma(n / 2.0))
    )
    return coef * t ** ((2.0 - alpha) / 2.0)


def pinned_variance_closed_form(t: float, alpha: float, n: int) -> float:
    """``Var U(t, 0)`` for colored noise; equals ``2^(alpha/2)`` times the truncated value."""
    if t <= 0:
        raise DomainError("t must be positive")
    _check_colored(alpha, n)
    coef = (
        2.0 ** (1.0 - alpha)
        * math.gamma((n - alpha) / 2.0)
        / ((2.0 - alpha) * math.gamma(n / 2.0))
    )
    return coef * t ** ((2.0 - alpha) / 2.0)


def white_noise_variance(t: float, d: int = 1) -> float:
    """``2 (4 pi)^(-d/2) t^(1/2)``.

    For d = 1 this is ``Var U(t, 0)`` of the white-noise pinned string. The
    time-truncated energy ``int_0^t int G_r^2`` is smaller by ``sqrt(2)``
    (see :func:`white_noise_truncated_energy`).
    """
    if t <= 0:
        raise DomainError("t must be positive")
    return 2.0 * (4.0 * math.pi) ** (-d / 2.0) * math.sqrt(t)


def white_noise_truncated_energy(t: float) -> float:
    """``int_0^t int_R G_r(y)^2 dy dr = (2 pi)^(-1/2) t^(1/2)`` in one dimension."""
    if t <= 0:
        raise DomainError("t must be positive")
    return math.sqrt(t / (2.0 * math.pi))


def pinned_variance_exact(t: float, params: ModelParams) -> float:
    if params.white_noise:
        return white_noise_variance(t, 1)
    return pinned_variance_closed_form(t, params.alpha, params.spatial_dim)


@dataclass(frozen=True)
class Normalization:
    k_paper: float
    k_oracle: float

    def to_dict(self) -> dict:
        return {"k_paper": self.k_paper, "k_oracle": self.k_oracle}


def k_paper(params: ModelParams) -> float:
    """The printed normaliser, evaluated with ``n = value_dim``; NaN where undefined."""
    n = params.value_dim
    if params.white_noise:
        return 2.0 ** -0.5 * (4.0 * math.pi) ** (n / 4.0)
    a = params.alpha
    if not 0.0 < a < min(n, 2):
        return float("nan")
    return math.sqrt(
        (2.0 - a) * math.gamma(n / 2.0) / (2.0 ** (-1.5 * a + 1.0) * math.gamma((n - a) / 2.0))
    )


def normalization_constant(params: ModelParams, pinned_var_at_one: float | None = None) -> Normalization:
    """Return ``k_paper`` and ``k_oracle = Var(U(1,0))^(-1/2)``.

    ``pinned_var_at_one`` defaults to the quadrature value from
    :func:`pinned_string.quadrature.pinned_variance`.
    """
    if pinned_var_at_one is None:
        from .quadrature import pinned_variance

        pinned_var_at_one = pinned_variance(1.0, params).value
    return Normalization(k_paper=k_paper(params), k_oracle=1.0 / math.sqrt(pinned_var_at_one))


def fbm_covariance(s, t, H: float):
    """``(s^2H + t^2H - |t - s|^2H) / 2``, broadcasting over arrays."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * H
    out = 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def fbm_gram(times, H: float) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return fbm_covariance(times[:, None], times[None, :], H)
