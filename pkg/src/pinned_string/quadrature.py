"""Numerical integration of the noise covariance functionals.

Two independent routes are provided:

* a Fourier route, where each heat-equation mode contributes a closed
  rational-exponential factor and only a radial integral remains;
* a real-space route (:func:`q_form`) that integrates the Riesz kernel
  ``|w|^-alpha`` directly against heat kernels, never touching its Fourier
  transform.

Both are checked against the closed forms in :mod:`pinned_string.analytic`.
Singular endpoints are removed by power substitutions so that the adaptive
integrator sees smooth integrands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .analytic import (
    DomainError,
    ModelParams,
    riesz_fourier_constant,
    unit_sphere_area,
)

EPSREL = 1e-12
LIMIT = 400


class QuadratureError(RuntimeError):
    """Adaptive integration did not converge; ``partial`` holds the last estimate."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NotInHilbertSpace(QuadratureError):
    """The covariance integral ``Q(f, f)`` diverges under refinement."""


@dataclass
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int

    def __add__(self, other):
        if isinstance(other, QuadratureResult):
            return QuadratureResult(
                self.value + other.value,
                self.abs_error_estimate + other.abs_error_estimate,
                self.evaluations + other.evaluations,
            )
        return NotImplemented

    def scaled(self, c: float) -> "QuadratureResult":
        return QuadratureResult(c * self.value, abs(c) * self.abs_error_estimate, self.evaluations)


def _quad(func, a, b, epsabs=0.0, epsrel=EPSREL, points=None) -> QuadratureResult:
    kw = {}
    if points is not None and np.isfinite(b):
        kw["points"] = points
    value, err, info = integrate.quad(
        func, a, b, epsabs=epsabs, epsrel=epsrel, limit=LIMIT, full_output=1, **kw
    )[:3]
    return QuadratureResult(float(value), float(err), int(info["neval"]))


def _check_colored(alpha, n):
    if not 0.0 < alpha < min(n, 2):
        raise DomainError(f"alpha = {alpha} violates 0 < alpha < min(n, 2) for n = {n}")


def spectral_prefactor(alpha: float, n: int) -> float:
    """``(2 pi)^-n c(alpha) sigma_{n-1}``: radial density of the noise spectrum is this times ``u^(alpha-1)``."""
    return (2.0 * math.pi) ** (-n) * riesz_fourier_constant(alpha, n) * unit_sphere_area(n)


# ---------------------------------------------------------------------------
# Fourier route
# ---------------------------------------------------------------------------

def gaussian_radial_moment(r: float, alpha: float) -> QuadratureResult:
    """``int_0^inf exp(-2 r u^2) u^(alpha - 1) du`` by quadrature (v = u^alpha)."""
    # exponent reaches 60 at v_max; the neglected tail is below 1e-26
    v_max = (60.0 / (2.0 * r)) ** (alpha / 2.0)
    res = _quad(lambda v: math.exp(-2.0 * r * v ** (2.0 / alpha)), 0.0, v_max)
    return res.scaled(1.0 / alpha)


def gaussian_riesz_bilinear(r: float, alpha: float, n: int) -> QuadratureResult:
    """``int int G_r(x - z) G_r(x - z') |z - z'|^-alpha dz dz'`` via the radial Fourier integral."""
    if r <= 0:
        raise DomainError("r must be positive")
    _check_colored(alpha, n)
    return gaussian_radial_moment(r, alpha).scaled(spectral_prefactor(alpha, n))


def truncated_variance_quadrature(t: float, alpha: float, n: int) -> QuadratureResult:
    """``int_0^t gaussian_riesz_bilinear(r) dr``; r = q^(2/(2-alpha)) removes the r -> 0 blow-up."""
    _check_colored(alpha, n)
    p = 2.0 / (2.0 - alpha)
    q_max = t ** (1.0 / p)
    evals = [0]

    def integrand(q):
        if q == 0.0:
            q = 1e-300
        r = q**p
        inner = gaussian_riesz_bilinear(r, alpha, n)
        evals[0] += inner.evaluations
        return inner.value * p * q ** (p - 1.0)

    res = _quad(integrand, 0.0, q_max, epsrel=1e-11)
    return QuadratureResult(res.value, res.abs_error_estimate, res.evaluations + evals[0])


@dataclass
class CoefficientCheck:
    """Numerical radial integral compared against two candidate coefficients."""

    numeric: float
    printed: float
    derived: float
    winner: str

    def to_dict(self):
        return {
            "numeric": self.numeric,
            "printed_2^-alpha": self.printed,
            "derived_2^-alpha/2": self.derived,
            "winner": self.winner,
        }


def radial_moment_coefficient_check(alpha: float, n: int, r: float = 1.0) -> CoefficientCheck:
    """Decide which power of two multiplies ``pi^(n/2) Gamma(alpha/2) / Gamma(n/2) r^(-alpha/2)``."""
    _check_colored(alpha, n)
    numeric = unit_sphere_area(n) * gaussian_radial_moment(r, alpha).value
    base = math.pi ** (n / 2.0) * math.gamma(alpha / 2.0) / math.gamma(n / 2.0) * r ** (-alpha / 2.0)
    printed = 2.0 ** (-alpha) * base
    derived = 2.0 ** (-alpha / 2.0) * base
    winner = "2^-alpha/2" if abs(numeric - derived) < abs(numeric - printed) else "2^-alpha"
    return CoefficientCheck(numeric, printed, derived, winner)


def pinned_variance(t: float, params: ModelParams) -> QuadratureResult:
    """``Var U(t, 0) = (2 pi)^-n int S(xi) (1 - exp(-|xi|^2 t)) / |xi|^2 dxi``.

    Each Fourier mode of the pinned kernel contributes
    ``int_{-inf}^0 (e^{-lam (t-s)} - e^{lam s})^2 ds + int_0^t e^{-2 lam (t-s)} ds
    = (1 - e^{-lam t}) / lam`` with ``lam = |xi|^2``.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    if params.white_noise:
        # S = 1 on the line: (1/pi) int_0^inf (1 - e^{-t u^2}) / u^2 du; split at the scale u = t^-1/2
        f = lambda u: -math.expm1(-t * u * u) / (u * u) if u > 0 else t
        u0 = 1.0 / math.sqrt(t)
        res = _quad(f, 0.0, u0) + _quad(f, u0, math.inf)
        return res.scaled(1.0 / math.pi)
    alpha, n = params.alpha, params.spatial_dim
    _check_colored(alpha, n)
    # u = v^(1/alpha): u^(alpha-3) du = v^(-2/alpha) dv / alpha; near 0 integrand -> t / alpha
    e = 2.0 / alpha

    def f(v):
        if v == 0.0:
            return t / alpha
        ve = v**e
        return -math.expm1(-t * ve) / ve / alpha

    v0 = t ** (-alpha / 2.0)
    res = _quad(f, 0.0, v0) + _quad(f, v0, math.inf)
    return res.scaled(spectral_prefactor(alpha, n))


def _mode_increment_energy(lam: float, s: float, t: float) -> float:
    """``int (k_t(r) - k_s(r))^2 dr`` for one mode, ``k_t(r) = e^{-lam (t - r)} 1(r < t)``, by quadrature."""
    lo, hi = min(s, t), max(s, t)
    gap = lam * (hi - lo)
    if gap == 0.0:
        return 0.0
    shift = math.expm1(-gap)  # e^{-lam (hi - lo)} - 1
    # r < lo, x = lam (lo - r): e^{-2x} (e^{-gap} - 1)^2
    past, _ = integrate.quad(lambda x: math.exp(-2.0 * x) * shift * shift, 0.0, 40.0, epsrel=1e-12, epsabs=0.0)
    # lo <= r < hi, x = lam (hi - r): only the later kernel is active; e^{-80} is negligible
    recent, _ = integrate.quad(lambda x: math.exp(-2.0 * x), 0.0, min(gap, 40.0), epsrel=1e-12, epsabs=0.0)
    return (past + recent) / lam


def pinned_increment_variance(s: float, t: float, params: ModelParams) -> QuadratureResult:
    """``E (U(t,0) - U(s,0))^2`` by integrating the squared per-mode difference kernel in time."""
    if s < 0 or t < 0:
        raise DomainError("times must be nonnegative")
    if s == t:
        return QuadratureResult(0.0, 0.0, 0)
    gap = abs(t - s)
    if params.white_noise:
        f = lambda u: _mode_increment_energy(u * u, s, t) if u > 0 else gap
        u0 = 1.0 / math.sqrt(gap)
        res = _quad(f, 0.0, u0, epsrel=1e-10) + _quad(f, u0, math.inf, epsrel=1e-10)
        return res.scaled(1.0 / math.pi)
    alpha, n = params.alpha, params.spatial_dim
    _check_colored(alpha, n)
    e = 2.0 / alpha

    # u^(alpha-1) du = dv / alpha with u = v^(1/alpha)
    def f(v):
        if v == 0.0:
            return gap / alpha
        return _mode_increment_energy(v**e, s, t) / alpha

    v0 = gap ** (-alpha / 2.0)
    res = _quad(f, 0.0, v0, epsrel=1e-10) + _quad(f, v0, math.inf, epsrel=1e-10)
    return res.scaled(spectral_prefactor(alpha, n))


def variance_exponent(params: ModelParams, times=None) -> float:
    """Least-squares slope of ``log Var U(t,0)`` against ``log t``."""
    if times is None:
        times = 2.0 ** np.arange(-6, 1)
    logv = [math.log(pinned_variance(float(t), params).value) for t in times]
    slope, _ = np.polyfit(np.log(times), logv, 1)
    return float(slope)


def white_noise_truncated_quadrature(t: float) -> QuadratureResult:
    """``int_0^t int_R G_r(y)^2 dy dr`` in one dimension, by 2-d quadrature.

    r = q^2 removes the ``r^-1/2`` singularity at the origin.
    """
    if t <= 0:
        raise DomainError("t must be positive")

    def inner(q):
        r = q * q
        if r == 0.0:
            return 2.0 * q * 0.0
        g = lambda y: (4.0 * math.pi * r) ** -1.0 * math.exp(-y * y / (2.0 * r))
        w = math.sqrt(r) * 40.0
        val, _ = integrate.quad(g, -w, w, epsrel=1e-13, epsabs=0.0, points=[0.0])
        return val * 2.0 * q

    return _quad(inner, 0.0, math.sqrt(t), epsrel=1e-11)


def gaussian_riesz_bilinear_realspace(r: float, alpha: float, half_width: float = 8.0) -> QuadratureResult:
    """Brute-force 2-d real-space version of :func:`gaussian_riesz_bilinear` for n = 1.

    Integrates over ``(z, z') in [-L, L]^2`` with ``x = 0``. The kernel
    singularity along the diagonal is absorbed by ``|z - z'| = rho^(1/(1-alpha))``.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("real-space check is for n = 1, 0 < alpha < 1")
    L = half_width
    p = 1.0 / (1.0 - alpha)
    g = lambda y: (4.0 * math.pi * r) ** -0.5 * math.exp(-y * y / (4.0 * r))

    def integrand(rho, z):
        w = rho**p
        # both signs of z' - z; |w|^-alpha dw = p drho
        total = 0.0
        for zp in (z + w, z - w):
            if -L <= zp <= L:
                total += g(zp)
        return g(z) * total * p

    rho_max = (2.0 * L) ** (1.0 - alpha)
    val, err = integrate.dblquad(integrand, -L, L, 0.0, rho_max, epsabs=1e-12, epsrel=1e-10)
    return QuadratureResult(float(val), float(err), 0)


# ---------------------------------------------------------------------------
# Real-space route
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelDifference:
    """``g(s, y) = G(t - s, x - y) - G(-s, -y)`` restricted to ``s <= t``."""

    t: float
    x: tuple = (0.0,)

    def __post_init__(self):
        if self.t <= 0:
            raise DomainError("KernelDifference needs t > 0")
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))

    def atoms(self):
        zero = tuple(0.0 for _ in self.x)
        return [(1.0, self.t, self.x), (-1.0, 0.0, zero)]

    def __add__(self, other):
        return KernelCombination([(1.0, self)]) + other

    def __mul__(self, c):
        return KernelCombination([(float(c), self)])

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other


@dataclass(frozen=True)
class KernelCombination:
    """Finite linear combination of :class:`KernelDifference` objects."""

    terms: list = field(default_factory=list)

    def atoms(self):
        out = []
        for c, k in self.terms:
            out.extend((c * a, T, x) for a, T, x in k.atoms())
        return out

    def __add__(self, other):
        if isinstance(other, KernelDifference):
            other = KernelCombination([(1.0, other)])
        return KernelCombination(list(self.terms) + list(other.terms))

    def __mul__(self, c):
        return KernelCombination([(c * a, k) for a, k in self.terms])

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other


def _sphere_average_minus_one(n: int, kappa: float) -> float:
    """``(1/sigma) int_{S^{n-1}} e^{kappa cos theta} dtheta - 1`` without cancellation."""
    if kappa < 2.0:
        z = kappa * kappa / 4.0
        term, total, k = 1.0, 0.0, 0
        while True:
            k += 1
            term *= z / ((n / 2.0 + k - 1.0) * k)
            total += term
            if term < 1e-18 * total:
                return total
    nu = n / 2.0 - 1.0
    # Gamma(n/2) (kappa/2)^(1-n/2) I_nu(kappa)
    logv = math.lgamma(n / 2.0) + (1.0 - n / 2.0) * math.log(kappa / 2.0) + math.log(special.ive(nu, kappa)) + kappa
    return math.exp(logv) - 1.0


class _RieszProfile:
    """``phi(y) = int |w|^-alpha G(1, y + w) dw`` and ``psi(y) = phi(y) - phi(0)`` in real space."""

    def __init__(self, alpha: float, n: int, white: bool):
        self.alpha, self.n, self.white = alpha, n, white
        self.sigma = unit_sphere_area(n)
        self.norm = (4.0 * math.pi) ** (-n / 2.0)
        self._phi0 = None
        self.evaluations = 0

    @property
    def degree(self) -> float:
        # Phi(tau, y) = tau^-degree phi(y / sqrt(tau))
        return 0.5 if self.white else self.alpha / 2.0

    def _radial(self, func, center: float = 0.0) -> float:
        """``int_0^inf rho^(n-1-alpha) func(rho) drho`` with rho = v^(1/(n-alpha)).

        ``func`` must be negligible beyond ``center + 40``.
        """
        a, n = self.alpha, self.n
        p = 1.0 / (n - a)
        f = lambda v: func(v**p) * p
        rho_edges = {0.0, 1.0, 6.0, max(60.0, center + 40.0)}
        rho_edges.update(c for c in (center - 12.0, center, center + 12.0) if c > 0.0)
        rho_edges = sorted(rho_edges)
        val = 0.0
        for lo, hi in zip(rho_edges[:-1], rho_edges[1:]):
            r = _quad(f, lo ** (n - a), hi ** (n - a), epsrel=1e-12, epsabs=1e-300)
            self.evaluations += r.evaluations
            val += r.value
        return val

    def phi0(self) -> float:
        if self._phi0 is None:
            if self.white:
                self._phi0 = self.norm
            else:
                self._phi0 = self.norm * self.sigma * self._radial(lambda rho: math.exp(-rho * rho / 4.0))
        return self._phi0

    def psi(self, y: float) -> float:
        if y == 0.0:
            return 0.0
        if self.white:
            return self.norm * math.expm1(-y * y / 4.0)
        e = math.exp(-y * y / 4.0)
        em1 = math.expm1(-y * y / 4.0)
        n = self.n

        def f(rho):
            avg_m1 = _sphere_average_minus_one(n, y * rho / 2.0)
            # e^{-|y|^2/4}(1 + avg_m1) - 1, kept in the stable split form
            if y * rho / 2.0 < 2.0:
                return math.exp(-rho * rho / 4.0) * (em1 + e * avg_m1)
            # large kappa: fold e^{kappa} into the Gaussian to avoid overflow
            nu = n / 2.0 - 1.0
            kappa = y * rho / 2.0
            log_avg = math.lgamma(n / 2.0) + (1.0 - n / 2.0) * math.log(kappa / 2.0) + math.log(special.ive(nu, kappa))
            return math.exp(-(rho - y) ** 2 / 4.0 + log_avg) - math.exp(-rho * rho / 4.0)

        return self.norm * self.sigma * self._radial(f, center=y)

    def phi(self, y: float) -> float:
        return self.phi0() + self.psi(y)

    def probe_divergence(self, factor: float = 16.0, steps: int = 8) -> list:
        """Inner-cutoff sequence ``int_{|w| > delta} |w|^-alpha G(1, w) dw`` for shrinking delta."""
        a, n = self.alpha, self.n
        g = lambda rho: rho ** (n - 1.0 - a) * math.exp(-rho * rho / 4.0)
        seq = []
        for k in range(1, steps + 1):
            delta = factor ** (-k)
            val = 0.0
            edges = [delta] + [b for b in (1e-3, 1e-1, 1.0, 6.0, 60.0) if b > delta]
            for lo, hi in zip(edges[:-1], edges[1:]):
                val += integrate.quad(g, lo, hi, epsrel=1e-10, epsabs=0.0, limit=LIMIT)[0]
            seq.append(self.norm * self.sigma * val)
        return seq


def _growth_detected(seq, ratio=1.5, run=3) -> bool:
    streak = 0
    for a, b in zip(seq[:-1], seq[1:]):
        if a > 0 and b / a > ratio:
            streak += 1
            if streak >= run:
                return True
        else:
            streak = 0
    return False


def q_form(f, g, params: ModelParams) -> QuadratureResult:
    """Covariance ``Q(f, g)`` of the noise integrals of two kernel differences.

    The spatial Gaussian convolutions are done with the semigroup identity
    ``int G(a, u - y) G(b, v - y) dy = G(a + b, u - v)``; the Riesz kernel
    and the time variable are integrated numerically in real space.

    Raises
    ------
    NotInHilbertSpace
        If the integral grows without bound under refinement.
    """
    n = params.spatial_dim
    white = bool(params.white_noise)
    alpha = 1.0 if white else float(params.alpha)
    if white and n != 1:
        raise DomainError("white noise requires spatial_dim = 1")
    prof = _RieszProfile(alpha, n, white)

    if not white:
        seq = prof.probe_divergence()
        if _growth_detected(seq):
            raise NotInHilbertSpace(
                f"spatial singularity |w|^-{alpha} is not integrable in dimension {n}",
                partial=seq[-1],
            )
        if alpha >= n:
            raise QuadratureError("cutoff sequence did not settle", partial=seq[-1])

    fa, ga = f.atoms(), g.atoms()
    pairs = []
    for ci, Ti, xi in fa:
        for cj, Tj, xj in ga:
            d = math.dist(xi, xj) if len(xi) == len(xj) == n else None
            if d is None:
                raise ValueError(f"kernel offsets must have {n} components")
            pairs.append((ci * cj, abs(Ti - Tj), d))
    breaks = sorted({b for _, b, _ in pairs})
    deg = prof.degree
    phi_cache: dict = {}

    def phi(y):
        key = y
        if key not in phi_cache:
            phi_cache[key] = prof.phi(y)
        return phi_cache[key]

    # tau = T_i + T_j - 2 s; Q = 1/2 int_0^inf sum_{active} c phi(d/sqrt(tau)) tau^-deg dtau
    def combined(tau):
        total = 0.0
        for c, b, d in pairs:
            if tau > b:
                total += c * (prof.phi0() + prof.psi(d / math.sqrt(tau)))
        return total * tau ** (-deg)

    res = QuadratureResult(0.0, 0.0, 0)
    edges = [0.0] + [b for b in breaks if b > 0.0]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == 0.0:
            # tau = q^(1/(1-deg)) absorbs tau^-deg at the origin
            p = 1.0 / (1.0 - deg)
            seg = _quad(lambda q: combined(q**p) * p * q ** (p - 1.0) if q > 0 else _origin_limit(pairs, prof, p),
                        0.0, hi ** (1.0 / p), epsrel=1e-10)
        else:
            seg = _quad(combined, lo, hi, epsrel=1e-10)
        res = res + seg

    last = edges[-1]
    csum = sum(c for c, _, _ in pairs)
    if abs(csum) > 1e-12:
        tails = []
        for k in range(1, 7):
            tails.append(_quad(combined, max(last, 1.0), max(last, 1.0) * 16.0**k, epsrel=1e-8).value)
        if _growth_detected(tails):
            raise NotInHilbertSpace("time tail diverges: kernel is not pinned", partial=tails[-1])
        raise QuadratureError("time tail did not settle", partial=tails[-1])

    def tail(tau):
        total = 0.0
        for c, b, d in pairs:
            if d > 0.0:
                total += c * prof.psi(d / math.sqrt(tau))
        return total * tau ** (-deg)

    if any(d > 0.0 for _, _, d in pairs):
        start = max(last, 1e-12) if last > 0 else 0.0
        if start == 0.0:
            p = 1.0 / (1.0 - deg)
            head = _quad(lambda q: tail(q**p) * p * q ** (p - 1.0) if q > 0 else 0.0, 0.0, 1.0, epsrel=1e-10)
            res = res + head
            start = 1.0
        res = res + _quad(tail, start, math.inf, epsrel=1e-10)
    res = res.scaled(0.5)
    res.evaluations += prof.evaluations
    return res


def _origin_limit(pairs, prof, p):
    # integrand at q -> 0: tau^-deg * tau^(1-1/p) ... equals sum c phi(inf-argument) * p for active pairs
    total = 0.0
    for c, b, d in pairs:
        if b == 0.0 and d == 0.0:
            total += c * prof.phi0()
    return total * p
