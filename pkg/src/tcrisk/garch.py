"""GARCH(1,1) loss model: filtering, simulation, forecasting and QMLE.

The loss process is L_t = sigma_t * Z_t with
sigma_t^2 = a0 + a1 * L_{t-1}^2 + b * sigma_{t-1}^2, all coefficients
strictly positive, and Z i.i.d. with zero mean and unit variance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .timeseries import as_loss_array

__all__ = [
    "GarchParams",
    "VolatilityPath",
    "QmleFit",
    "filter",
    "simulate",
    "fit_qmle",
    "forecast_sigma_next",
    "quasi_loglik",
]

InitRule = Union[str, float]


@dataclass(frozen=True)
class GarchParams:
    """Positive coefficients of the volatility recursion."""

    a0: float
    a1: float
    b: float

    def __post_init__(self):
        for name in ("a0", "a1", "b"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be strictly positive, got {v}")
        if self.a1 + self.b >= 1.0:
            warnings.warn(
                f"a1 + b = {self.a1 + self.b:.6f} >= 1: "
                "model is not covariance-stationary",
                stacklevel=2,
            )

    @property
    def is_covariance_stationary(self) -> bool:
        return self.a1 + self.b < 1.0

    @property
    def unconditional_variance(self) -> float:
        if not self.is_covariance_stationary:
            raise ValueError("unconditional variance requires a1 + b < 1")
        return self.a0 / (1.0 - self.a1 - self.b)


@dataclass(frozen=True)
class VolatilityPath:
    """Filtered volatilities sigma_1..sigma_n and residuals z_t = L_t/sigma_t."""

    sigmas: np.ndarray
    residuals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigmas", np.asarray(self.sigmas, dtype=float))
        object.__setattr__(self, "residuals", np.asarray(self.residuals, dtype=float))
        if self.sigmas.shape != self.residuals.shape:
            raise ValueError("sigmas and residuals must have equal length")
        if np.any(self.sigmas <= 0.0):
            raise ValueError("volatilities must be strictly positive")


def _initial_sigma_sq(losses: np.ndarray, p: GarchParams, init: InitRule) -> float:
    if isinstance(init, (int, float)) and not isinstance(init, bool):
        if init <= 0.0:
            raise ValueError("fixed initial variance must be positive")
        return float(init)
    if init == "unconditional":
        if p.is_covariance_stationary:
            return p.unconditional_variance
        init = "sample-variance"
    if init in ("sample-variance", "sample"):
        v = float(np.var(losses))
        return v if v > 0.0 else p.a0
    raise ValueError(f"unknown initialization rule {init!r}")


def _sigma_sq_path(losses: np.ndarray, p: GarchParams, s1_sq: float) -> np.ndarray:
    """Run the variance recursion left to right (vectorized IIR filter)."""
    n = losses.size
    out = np.empty(n)
    out[0] = s1_sq
    if n > 1:
        drive = p.a0 + p.a1 * losses[:-1] ** 2
        rest, _ = lfilter([1.0], [1.0, -p.b], drive, zi=np.array([p.b * s1_sq]))
        out[1:] = rest
    return out


def filter(losses, p: GarchParams, init: InitRule = "unconditional") -> VolatilityPath:
    """Recover the volatility path and residuals from observed losses."""
    arr = as_loss_array(losses)
    if arr.size == 0:
        raise ValueError("losses must be non-empty")
    s_sq = _sigma_sq_path(arr, p, _initial_sigma_sq(arr, p, init))
    sig = np.sqrt(s_sq)
    return VolatilityPath(sigmas=sig, residuals=arr / sig)


def forecast_sigma_next(losses, p: GarchParams, init: InitRule = "unconditional") -> float:
    """One-step-ahead volatility: sqrt(a0 + a1 L_n^2 + b sigma_n^2)."""
    arr = as_loss_array(losses)
    path = filter(arr, p, init)
    return float(np.sqrt(p.a0 + p.a1 * arr[-1] ** 2 + p.b * path.sigmas[-1] ** 2))


def simulate(
    p: GarchParams,
    noise,
    n: int,
    seed: int,
    sigma0_sq: float,
) -> tuple[np.ndarray, VolatilityPath]:
    """Simulate n losses; deterministic given the seed.

    The recursion starts at sigma_1^2 = sigma0_sq, so refiltering the losses
    with ``init=sigma0_sq`` reproduces the simulated path exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma0_sq <= 0.0:
        raise ValueError("sigma0_sq must be positive")
    z = noise.sample(n, seed)
    sig_sq = np.empty(n)
    losses = np.empty(n)
    s = float(sigma0_sq)
    for t in range(n):
        sig_sq[t] = s
        losses[t] = np.sqrt(s) * z[t]
        s = p.a0 + p.a1 * losses[t] ** 2 + p.b * s
    sig = np.sqrt(sig_sq)
    return losses, VolatilityPath(sigmas=sig, residuals=z.copy())


def quasi_loglik(losses, p: GarchParams, init: InitRule = "unconditional") -> float:
    """Gaussian quasi log-likelihood -0.5 * sum(ln sigma_t^2 + L_t^2/sigma_t^2)."""
    arr = as_loss_array(losses)
    s_sq = _sigma_sq_path(arr, p, _initial_sigma_sq(arr, p, init))
    return -0.5 * float(np.sum(np.log(s_sq) + arr**2 / s_sq))


def _loglik_terms(arr: np.ndarray, p: GarchParams, init: InitRule) -> np.ndarray:
    s_sq = _sigma_sq_path(arr, p, _initial_sigma_sq(arr, p, init))
    return -0.5 * (np.log(s_sq) + arr**2 / s_sq)


@dataclass(frozen=True)
class QmleFit:
    params: GarchParams
    stderrs: tuple[float, float, float] | None
    loglik: float
    converged: bool
    init_rule: InitRule
    n_obs: int

    def to_json_dict(self) -> dict:
        return {
            "a0": self.params.a0,
            "a1": self.params.a1,
            "b": self.params.b,
            "stderrs": list(self.stderrs) if self.stderrs is not None else None,
            "loglik": self.loglik,
            "init_rule": self.init_rule if isinstance(self.init_rule, str) else float(self.init_rule),
            "n_obs": self.n_obs,
            "converged": self.converged,
        }


def fit_qmle(
    losses,
    init: InitRule = "unconditional",
    max_iter: int = 5000,
    restarts: int = 3,
) -> QmleFit:
    """Maximize the Gaussian quasi log-likelihood over the positive orthant.

    Nelder-Mead on (ln a0, ln a1, ln b) keeps the coefficients positive
    without constraints; a handful of restarts from perturbed bests guards
    against a poor simplex.  Standard errors come from the sandwich
    (robust) covariance built from a numerical Hessian and the
    outer product of per-observation scores.
    """
    arr = as_loss_array(losses)
    if arr.size < 500:
        warnings.warn(f"only {arr.size} observations; QMLE may be unreliable", stacklevel=2)
    if float(np.var(arr)) <= 0.0:
        raise ValueError("losses are constant; nothing to fit")

    def neg_loglik(theta: np.ndarray) -> float:
        a0, a1, b = np.exp(theta)
        if not np.all(np.isfinite([a0, a1, b])) or max(a1, b) > 50.0:
            return 1e12
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = GarchParams(a0, a1, b)
        ll = quasi_loglik(arr, p, init)
        return -ll if np.isfinite(ll) else 1e12

    sample_var = float(np.var(arr))
    theta0 = np.log([0.05 * sample_var, 0.05, 0.90])
    options = {"maxiter": max_iter, "xatol": 1e-9, "fatol": 1e-10, "adaptive": False}

    best = minimize(neg_loglik, theta0, method="Nelder-Mead", options=options)
    perturb_rng = np.random.Generator(np.random.Philox(key=0xC0FFEE))
    for _ in range(restarts):
        start = best.x + perturb_rng.normal(0.0, 0.05, size=3)
        trial = minimize(neg_loglik, start, method="Nelder-Mead", options=options)
        if trial.fun < best.fun:
            best = trial

    a0, a1, b = np.exp(best.x)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = GarchParams(float(a0), float(a1), float(b))
    if params.a1 + params.b >= 1.0:
        warnings.warn(
            f"fitted a1 + b = {params.a1 + params.b:.6f} >= 1: "
            "model is not covariance-stationary",
            stacklevel=2,
        )
    stderrs = _sandwich_stderrs(arr, params, init)
    return QmleFit(
        params=params,
        stderrs=stderrs,
        loglik=float(-best.fun),
        converged=bool(best.success),
        init_rule=init,
        n_obs=int(arr.size),
    )


def _sandwich_stderrs(
    arr: np.ndarray, params: GarchParams, init: InitRule
) -> tuple[float, float, float] | None:
    """Robust covariance H^-1 S H^-1 via central differences (step 1e-4 relative)."""
    theta = np.array([params.a0, params.a1, params.b])
    h = 1e-4 * np.abs(theta)

    def terms(t: np.ndarray) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return _loglik_terms(arr, GarchParams(*t), init)

    def total(t: np.ndarray) -> float:
        return float(np.sum(terms(t)))

    try:
        scores = np.empty((arr.size, 3))
        for i in range(3):
            up, dn = theta.copy(), theta.copy()
            up[i] += h[i]
            dn[i] -= h[i]
            scores[:, i] = (terms(up) - terms(dn)) / (2.0 * h[i])
        s_mat = scores.T @ scores

        hess = np.empty((3, 3))
        f0 = total(theta)
        for i in range(3):
            up, dn = theta.copy(), theta.copy()
            up[i] += h[i]
            dn[i] -= h[i]
            hess[i, i] = (total(up) - 2.0 * f0 + total(dn)) / h[i] ** 2
        for i in range(3):
            for j in range(i + 1, 3):
                pp, pm, mp, mm = (theta.copy() for _ in range(4))
                pp[[i, j]] += h[[i, j]]
                pm[i] += h[i]
                pm[j] -= h[j]
                mp[i] -= h[i]
                mp[j] += h[j]
                mm[[i, j]] -= h[[i, j]]
                hess[i, j] = hess[j, i] = (
                    total(pp) - total(pm) - total(mp) + total(mm)
                ) / (4.0 * h[i] * h[j])

        hinv = np.linalg.inv(hess)
        cov = hinv @ s_mat @ hinv
        diag = np.diag(cov)
        if np.any(~np.isfinite(diag)) or np.any(diag <= 0.0):
            return None
        se = np.sqrt(diag)
        return (float(se[0]), float(se[1]), float(se[2]))
    except np.linalg.LinAlgError:
        return None
