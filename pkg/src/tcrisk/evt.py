"""Generalized Pareto tail machinery and the noise-model abstraction.

A noise model is a symmetric, zero-mean, unit-variance law for the GARCH
innovations exposing its cdf, quantile, squared-noise quantile and three
tail functionals:

* ``kappa(alpha)``   -- normalized tail mean of the quantile,
  (1-alpha)^-1 * integral of quantile(y) over y in (alpha, 1);
* ``kappa2(alpha)``  -- the same functional applied to the squared-noise
  quantile;
* ``j_factor(alpha, a1, b)`` -- the tail average of
  sqrt(a1 * sq_quantile(y) + b).

Two implementations are provided: a closed-form standard normal, and a
spliced law with an empirical (symmetrized) body and a generalized Pareto
upper tail fitted to threshold exceedances of GARCH residuals.
"""

from __future__ import annotations

import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr, ndtri

from ._quadrature import integrate_adaptive

__all__ = [
    "GpdParams",
    "TailModel",
    "GpdFit",
    "NoiseModel",
    "StandardNormalNoise",
    "SplicedNoise",
    "gpd_cdf",
    "gpd_pdf",
    "gpd_quantile",
    "excess_cdf",
    "select_threshold",
    "fit_gpd",
    "tail_quantile",
    "kappa",
    "sq_quantile",
    "kappa2",
    "j_factor",
    "mean_excess_curve",
    "build_spliced_noise",
]

_XI_ZERO_TOL = 1e-8
_MOMENT_SEed = 0x1D5EED  # fixed stream for the constructor moment check
_MOMENT_DRAWS = 100_000


@dataclass(frozen=True)
class GpdParams:
    """Shape xi and scale beta > 0 of a generalized Pareto distribution."""

    xi: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0.0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not np.isfinite(self.xi):
            raise ValueError("xi must be finite")

    @property
    def upper_endpoint(self) -> float:
        return np.inf if self.xi >= 0.0 else -self.beta / self.xi


def _check_support(x: np.ndarray, g: GpdParams):
    if np.any(x < 0.0):
        raise ValueError("x below the support (x >= 0 required)")
    if g.xi < -_XI_ZERO_TOL and np.any(x > g.upper_endpoint):
        raise ValueError(f"x above the support endpoint {g.upper_endpoint}")


def gpd_cdf(x, g: GpdParams):
    """1 - (1 + xi*x/beta)^(-1/xi), exponential form for xi ~ 0."""
    arr = np.asarray(x, dtype=float)
    _check_support(arr, g)
    if abs(g.xi) < _XI_ZERO_TOL:
        out = 1.0 - np.exp(-arr / g.beta)
    else:
        out = 1.0 - (1.0 + g.xi * arr / g.beta) ** (-1.0 / g.xi)
    return float(out) if np.isscalar(x) else out


def gpd_pdf(x, g: GpdParams):
    arr = np.asarray(x, dtype=float)
    _check_support(arr, g)
    if abs(g.xi) < _XI_ZERO_TOL:
        out = np.exp(-arr / g.beta) / g.beta
    else:
        out = (1.0 + g.xi * arr / g.beta) ** (-1.0 / g.xi - 1.0) / g.beta
    return float(out) if np.isscalar(x) else out


def gpd_quantile(q, g: GpdParams):
    """Exact inverse of gpd_cdf on (0, 1)."""
    arr = np.asarray(q, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("quantile level must lie in (0, 1)")
    if abs(g.xi) < _XI_ZERO_TOL:
        out = -g.beta * np.log1p(-arr)
    else:
        out = g.beta * ((1.0 - arr) ** (-g.xi) - 1.0) / g.xi
    return float(out) if np.isscalar(q) else out


def _gpd_sf(x: np.ndarray, g: GpdParams) -> np.ndarray:
    """Survival 1 - cdf with clamping outside the support (for spliced cdfs)."""
    arr = np.maximum(np.asarray(x, dtype=float), 0.0)
    if abs(g.xi) < _XI_ZERO_TOL:
        return np.exp(-arr / g.beta)
    base = np.maximum(1.0 + g.xi * arr / g.beta, 0.0)
    return np.where(base > 0.0, base ** (-1.0 / g.xi), 0.0)


def excess_cdf(F: Callable, u: float) -> Callable:
    """Conditional law of X - u given X > u: y -> (F(y+u) - F(u)) / (1 - F(u))."""
    fu = float(F(u))
    if fu >= 1.0:
        raise ValueError("F(u) must be < 1 for an excess distribution")
    denom = 1.0 - fu

    def fn(y):
        return (F(np.asarray(y, dtype=float) + u) - fu) / denom

    return fn


def select_threshold(residuals: Sequence[float], q: float = 0.92) -> tuple[float, float]:
    """Empirical q-quantile threshold (linear interpolation) and its cdf value.

    Returns (u, Fu) where Fu is the fraction of residuals <= u.  Emits a
    warning when fewer than 50 residuals exceed the threshold.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    arr = np.asarray(residuals, dtype=float)
    u = float(np.quantile(arr, q))
    fu = float(np.mean(arr <= u))
    n_exc = int(np.sum(arr > u))
    if n_exc < 50:
        warnings.warn(
            f"only {n_exc} exceedances above the {q:.2%} threshold; "
            "tail fit will be unstable",
            stacklevel=2,
        )
    return u, fu


@dataclass(frozen=True)
class GpdFit:
    params: GpdParams
    ci_xi: tuple[float, float] | None
    ci_beta: tuple[float, float] | None
    loglik: float
    converged: bool
    n_obs: int


def _gpd_neg_loglik(excesses: np.ndarray, xi: float, beta: float) -> float:
    n = excesses.size
    if abs(xi) < _XI_ZERO_TOL:
        return n * np.log(beta) + float(np.sum(excesses)) / beta
    t = 1.0 + xi * excesses / beta
    if np.any(t <= 0.0):
        return np.inf
    return n * np.log(beta) + (1.0 + 1.0 / xi) * float(np.sum(np.log(t)))


def _pwm_start(x: np.ndarray) -> tuple[float, float]:
    """Probability-weighted-moments starting point for the GPD MLE."""
    xs = np.sort(x)
    n = xs.size
    b0 = float(xs.mean())
    b1 = float(np.sum(xs * (n - np.arange(1, n + 1)) / (n - 1)) / n)
    denom = b0 - 2.0 * b1
    if abs(denom) < 1e-12 * b0:
        return 0.0, b0
    rho = b0 / (2.0 * b1)
    xi = (rho - 2.0) / (rho - 1.0) if abs(rho - 1.0) > 1e-12 else 0.0
    xi = float(np.clip(xi, -0.9, 0.9))
    beta = b0 * (1.0 - xi)
    return xi, max(beta, 1e-12)


def fit_gpd(excesses: Sequence[float]) -> GpdFit:
    """Maximum likelihood fit of (xi, beta) to positive threshold excesses.

    Uses the same simplex machinery as the GARCH fit, parameterized as
    (xi, ln beta); 95% confidence intervals come from the numerical
    observed-information matrix.
    """
    x = np.asarray(excesses, dtype=float)
    if x.size < 30:
        raise ValueError(f"need at least 30 excesses, got {x.size}")
    if np.any(x <= 0.0):
        raise ValueError("excesses must be strictly positive")
    if float(np.ptp(x)) == 0.0:
        raise ValueError("all excesses are equal; GPD fit is degenerate")

    def neg_loglik(theta: np.ndarray) -> float:
        xi, log_beta = theta
        if abs(xi) > 5.0 or abs(log_beta) > 50.0:
            return 1e12
        v = _gpd_neg_loglik(x, xi, np.exp(log_beta))
        return v if np.isfinite(v) else 1e12

    xi0, beta0 = _pwm_start(x)
    options = {"maxiter": 5000, "xatol": 1e-9, "fatol": 1e-10}
    best = minimize(neg_loglik, np.array([xi0, np.log(beta0)]), method="Nelder-Mead", options=options)
    rng = np.random.Generator(np.random.Philox(key=0xBEEF))
    for _ in range(3):
        start = best.x + rng.normal(0.0, 0.05, size=2)
        trial = minimize(neg_loglik, start, method="Nelder-Mead", options=options)
        if trial.fun < best.fun:
            best = trial
    xi_hat, beta_hat = float(best.x[0]), float(np.exp(best.x[1]))
    params = GpdParams(xi_hat, beta_hat)

    ci_xi = ci_beta = None
    hess = _observed_information(x, xi_hat, beta_hat)
    if hess is not None:
        try:
            cov = np.linalg.inv(hess)
            diag = np.diag(cov)
            if np.all(np.isfinite(diag)) and np.all(diag > 0.0):
                se = np.sqrt(diag)
                ci_xi = (xi_hat - 1.96 * se[0], xi_hat + 1.96 * se[0])
                ci_beta = (beta_hat - 1.96 * se[1], beta_hat + 1.96 * se[1])
        except np.linalg.LinAlgError:
            pass
    return GpdFit(
        params=params,
        ci_xi=ci_xi,
        ci_beta=ci_beta,
        loglik=-float(best.fun),
        converged=bool(best.success),
        n_obs=int(x.size),
    )


def _observed_information(x: np.ndarray, xi: float, beta: float) -> np.ndarray | None:
    """Hessian of the negative log-likelihood at (xi, beta), central differences."""
    theta = np.array([xi, beta])
    h = 1e-4 * np.maximum(np.abs(theta), 1e-4)

    def nll(t: np.ndarray) -> float:
        if t[1] <= 0.0:
            return np.inf
        return _gpd_neg_loglik(x, t[0], t[1])

    f0 = nll(theta)
    hess = np.empty((2, 2))
    for i in range(2):
        up, dn = theta.copy(), theta.copy()
        up[i] += h[i]
        dn[i] -= h[i]
        fu, fd = nll(up), nll(dn)
        if not (np.isfinite(fu) and np.isfinite(fd)):
            return None
        hess[i, i] = (fu - 2.0 * f0 + fd) / h[i] ** 2
    pp, pm, mp, mm = (theta.copy() for _ in range(4))
    pp += h
    pm[0] += h[0]
    pm[1] -= h[1]
    mp[0] -= h[0]
    mp[1] += h[1]
    mm -= h
    vals = [nll(t) for t in (pp, pm, mp, mm)]
    if not all(np.isfinite(v) for v in vals):
        return None
    hess[0, 1] = hess[1, 0] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h[0] * h[1])
    return hess


@dataclass(frozen=True)
class TailModel:
    """Threshold u, empirical cdf value Fu at the threshold, and the GPD fit."""

    u: float
    Fu: float
    gpd: GpdParams

    def __post_init__(self):
        if not 0.0 < self.Fu < 1.0:
            raise ValueError("Fu must lie in (0, 1)")

    def to_json_dict(self, **extra) -> dict:
        d = {"u": self.u, "Fu": self.Fu, "xi": self.gpd.xi, "beta": self.gpd.beta}
        d.update(extra)
        return d


def tail_quantile(alpha, t: TailModel):
    """Quantile of the spliced law for levels at or above the tail start."""
    arr = np.asarray(alpha, dtype=float)
    if np.any(arr < t.Fu):
        raise ValueError(f"level below fitted tail (alpha < Fu = {t.Fu})")
    if np.any(arr >= 1.0):
        raise ValueError("alpha must be < 1")
    ratio = (1.0 - arr) / (1.0 - t.Fu)
    xi, beta = t.gpd.xi, t.gpd.beta
    if abs(xi) < _XI_ZERO_TOL:
        out = t.u - beta * np.log(ratio)
    else:
        out = t.u + (beta / xi) * (ratio**-xi - 1.0)
    return float(out) if np.isscalar(alpha) else out


def mean_excess_curve(sample: Sequence[float], thresholds: Sequence[float]) -> np.ndarray:
    """Rows of (threshold, mean excess above it, number of exceedances).

    Thresholds leaving fewer than 5 exceedances are kept but flagged with a
    warning; their mean is unreliable.
    """
    x = np.asarray(sample, dtype=float)
    out = np.empty((len(thresholds), 3))
    thin = []
    for i, u in enumerate(thresholds):
        exc = x[x > u] - u
        out[i] = (u, exc.mean() if exc.size else np.nan, exc.size)
        if exc.size < 5:
            thin.append(float(u))
    if thin:
        warnings.warn(f"thresholds {thin} leave fewer than 5 exceedances", stacklevel=2)
    return out


# ---------------------------------------------------------------------------
# noise models
# ---------------------------------------------------------------------------


class NoiseModel(ABC):
    """Symmetric zero-mean unit-variance innovation law.

    Immutable after construction; samplers take an explicit seed so that
    concurrent use is reproducible and race-free.
    """

    #: smallest level at which the tail functionals are defined
    min_tail_level: float = 0.0

    @abstractmethod
    def cdf(self, z):
        ...

    @abstractmethod
    def quantile(self, alpha):
        ...

    @abstractmethod
    def sample(self, n: int, seed: int) -> np.ndarray:
        ...

    @abstractmethod
    def kappa(self, alpha: float) -> float:
        ...

    def sq_quantile(self, alpha):
        """Quantile of Z^2; for a symmetric law this is quantile((1+alpha)/2)^2."""
        q = self.quantile((1.0 + np.asarray(alpha, dtype=float)) / 2.0)
        out = q * q
        return float(out) if np.isscalar(alpha) else out

    def _require_tail_level(self, alpha: float):
        if not self.min_tail_level <= alpha < 1.0:
            raise ValueError(
                f"alpha={alpha} outside [{self.min_tail_level}, 1): level below fitted tail"
            )

    def _sq_singularity(self) -> float:
        """Exponent s with sq_quantile(1 - p) ~ p^-s as p -> 0."""
        return 0.0

    def kappa2(self, alpha: float) -> float:
        """Tail mean of the squared-noise quantile, by adaptive quadrature."""
        self._require_tail_level(alpha)
        s = self._sq_singularity()
        if s >= 1.0:
            raise ValueError("squared-loss tail mean undefined (tail too heavy: xi >= 1/2)")
        width = 1.0 - alpha
        val = integrate_adaptive(
            lambda p: self.sq_quantile(1.0 - p), 0.0, width, tol=1e-10, endpoint_power=s
        )
        return val / width

    def j_factor(self, alpha: float, a1: float, b: float) -> float:
        """Tail average of sqrt(a1 * sq_quantile(y) + b)."""
        if a1 < 0.0 or b <= 0.0:
            raise ValueError("need a1 >= 0 and b > 0")
        if a1 == 0.0:
            return float(np.sqrt(b))
        self._require_tail_level(alpha)
        s = self._sq_singularity() / 2.0
        if s >= 1.0:
            raise ValueError("tail too heavy for the volatility tail average (xi >= 1)")
        width = 1.0 - alpha
        val = integrate_adaptive(
            lambda p: np.sqrt(a1 * self.sq_quantile(1.0 - p) + b),
            0.0,
            width,
            tol=1e-10,
            endpoint_power=s,
        )
        return val / width

    def _check_moments(self):
        z = self.sample(_MOMENT_DRAWS, _MOMENT_SEed)
        mean, var = float(z.mean()), float(z.var())
        if abs(mean) > 0.02 or abs(var - 1.0) > 0.02:
            warnings.warn(
                f"noise moment check: mean={mean:.4f}, variance={var:.4f} "
                "(outside the 2% band around 0 and 1)",
                stacklevel=3,
            )


class StandardNormalNoise(NoiseModel):
    """Closed-form standard normal innovations."""

    def __init__(self, check_moments: bool = True):
        if check_moments:
            self._check_moments()

    def cdf(self, z):
        out = ndtr(np.asarray(z, dtype=float))
        return float(out) if np.isscalar(z) else out

    def quantile(self, alpha):
        arr = np.asarray(alpha, dtype=float)
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        out = ndtri(arr)
        return float(out) if np.isscalar(alpha) else out

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(key=seed))
        return rng.standard_normal(n)

    def kappa(self, alpha: float) -> float:
        """Tail mean phi(quantile(alpha)) / (1 - alpha)."""
        self._require_tail_level(alpha)
        q = ndtri(alpha)
        return float(np.exp(-0.5 * q * q) / np.sqrt(2.0 * np.pi) / (1.0 - alpha))


class SplicedNoise(NoiseModel):
    """Empirical body below the threshold, generalized Pareto tail above it.

    The body is the empirical law of the reflected residuals {+|z|, -|z|}
    (the default keeps the law exactly symmetric; pass ``symmetrize=False``
    to interpolate the raw residual quantiles instead, which sacrifices the
    squared-quantile identity).  The quantile function is continuous and
    strictly increasing across the splice by construction, anchored so that
    quantile(Fu) = u exactly.
    """

    _BODY_KNOTS = 513

    def __init__(
        self,
        residuals: Sequence[float],
        tail: TailModel,
        symmetrize: bool = True,
        check_moments: bool = True,
    ):
        res = np.asarray(residuals, dtype=float)
        if res.size < 10:
            raise ValueError("need at least 10 residuals for the body")
        mean, var = float(res.mean()), float(res.var())
        if abs(mean) > 0.05 or abs(var - 1.0) > 0.05:
            warnings.warn(
                f"residuals look unstandardized: mean={mean:.4f}, variance={var:.4f}",
                stacklevel=2,
            )
        if tail.u <= 0.0:
            raise ValueError("threshold must be positive for a symmetric spliced law")
        self.tail = tail
        self.min_tail_level = tail.Fu
        self.symmetrized = bool(symmetrize)

        body_sample = (
            np.concatenate([np.abs(res), -np.abs(res)]) if symmetrize else res
        )
        levels = np.linspace(1.0 - tail.Fu, tail.Fu, self._BODY_KNOTS)
        values = np.quantile(body_sample, levels)
        if symmetrize:
            values = 0.5 * (values - values[::-1])  # exact antisymmetry

        u = tail.u
        eps = 1e-9 * max(1.0, u)
        interior = values[1:-1]
        clipped = np.sum((interior <= -u + eps) | (interior >= u - eps))
        if clipped > 0.05 * interior.size:
            raise ValueError(
                "threshold does not match the residual scale: "
                f"{int(clipped)} of {interior.size} body quantiles fall outside (-u, u)"
            )
        values[0], values[-1] = -u, u
        values[1:-1] = np.clip(interior, -u + eps, u - eps)
        step = 1e-13 * max(1.0, u)
        for i in range(1, values.size):  # enforce strict monotonicity
            if values[i] <= values[i - 1]:
                values[i] = values[i - 1] + step
        values[-1] = u
        if values[-1] <= values[-2]:
            values[-2] = u - step
        self._levels = levels
        self._values = values
        if check_moments:
            self._check_moments()

    def _sq_singularity(self) -> float:
        return max(2.0 * self.tail.gpd.xi, 0.0)

    def quantile(self, alpha):
        arr = np.asarray(alpha, dtype=float)
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        fu = self.tail.Fu
        out = np.empty_like(arr)
        hi = arr >= fu
        lo = arr <= 1.0 - fu
        mid = ~(hi | lo)
        if np.any(hi):
            out[hi] = tail_quantile(arr[hi], self.tail)
        if np.any(lo):
            out[lo] = -tail_quantile(1.0 - arr[lo], self.tail)
        if np.any(mid):
            out[mid] = np.interp(arr[mid], self._levels, self._values)
        return float(out) if np.isscalar(alpha) else out

    def cdf(self, z):
        arr = np.asarray(z, dtype=float)
        fu = self.tail.Fu
        u = self.tail.u
        out = np.empty_like(arr)
        hi = arr >= u
        lo = arr <= -u
        mid = ~(hi | lo)
        if np.any(hi):
            out[hi] = 1.0 - (1.0 - fu) * _gpd_sf(arr[hi] - u, self.tail.gpd)
        if np.any(lo):
            out[lo] = (1.0 - fu) * _gpd_sf(-arr[lo] - u, self.tail.gpd)
        if np.any(mid):
            out[mid] = np.interp(arr[mid], self._values, self._levels)
        return float(out) if np.isscalar(z) else out

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(key=seed))
        uniforms = np.clip(rng.random(n), 1e-16, 1.0 - 1e-16)
        return self.quantile(uniforms)

    def kappa(self, alpha: float) -> float:
        """Closed-form tail mean of the GPD-tail quantile (needs xi < 1)."""
        self._require_tail_level(alpha)
        xi, beta, u = self.tail.gpd.xi, self.tail.gpd.beta, self.tail.u
        if xi >= 1.0:
            raise ValueError("tail mean is infinite for xi >= 1")
        return float((tail_quantile(alpha, self.tail) + beta - xi * u) / (1.0 - xi))


def build_spliced_noise(residuals: Sequence[float], t: TailModel, symmetrize: bool = True) -> SplicedNoise:
    """Assemble the spliced noise law from residuals and a fitted tail."""
    return SplicedNoise(residuals, t, symmetrize=symmetrize)


# functional views of the noise capabilities ---------------------------------


def kappa(alpha: float, noise: NoiseModel) -> float:
    return noise.kappa(alpha)


def sq_quantile(alpha, noise: NoiseModel):
    return noise.sq_quantile(alpha)


def kappa2(alpha: float, noise: NoiseModel) -> float:
    return noise.kappa2(alpha)


def j_factor(alpha: float, a1: float, b: float, noise: NoiseModel) -> float:
    return noise.j_factor(alpha, a1, b)
