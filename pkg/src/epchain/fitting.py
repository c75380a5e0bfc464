"""Timescale extraction: exponential/cosine fits and the tau scaling law.

For delta < 0 the conserved-quantity series grow like A*exp(t/tau); for
delta > 0 they oscillate like B*cos(t/tau + theta) + C.  Both fits seed from
cheap linear algebra (log-linear regression, discrete Fourier peak) and
refine with damped least squares.  A log-log regression of tau against
|delta| then exposes the tau ~ |delta|^(-1/2) scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from . import chain as chain_mod
from . import dynamics as dyn_mod

#: |1/tau| below this is treated as a constant series (tau -> infinity)
DEGENERATE_RATE = 1e-12


@dataclass
class FitResult:
    """Converged parameters of one model fit.

    params is (A, tau) for the exponential model and (B, tau, theta, C) for
    the cosine model; tau is reported as math.inf when the series is flat
    (degenerate flag set).
    """

    model: str
    params: tuple
    rms_residual: float
    converged: bool
    iterations: int
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def tau(self) -> float:
        return self.params[1]


def _fit_window(times, values, tau_seed):
    """Data-driven window t in [0, min(t_max, 6*tau_seed)] for growth fits."""
    if not math.isfinite(tau_seed) or tau_seed <= 0:
        return times, values
    cut = min(times[-1], 6.0 * tau_seed)
    keep = times <= cut * (1 + 1e-12)
    if np.count_nonzero(keep) < 4:
        return times, values
    return times[keep], values[keep]


def fit_exponential(series: dyn_mod.TimeSeries) -> FitResult:
    """Least squares of A*exp(t/tau) to the real part of the series.

    Seeds (log A, 1/tau) by linear regression on log(values); refines the
    rate parametrization r = 1/tau (well-behaved through r = 0) by damped
    least squares, relative tolerance 1e-10, at most 200 iterations.
    """
    t = series.times
    y = series.real.copy()
    if np.any(y <= 0):
        raise ValueError("exponential fit needs strictly positive values")
    # seed from the tail: early samples can carry a polynomial transient
    tail = slice(t.size // 2, None) if t.size >= 16 else slice(None)
    rate_seed, logA_seed = np.polyfit(t[tail], np.log(y[tail]), 1)
    if abs(rate_seed) < DEGENERATE_RATE:
        A = float(np.exp(logA_seed))
        rms = float(np.sqrt(np.mean((y - A) ** 2)))
        return FitResult("exponential", (A, math.inf), rms,
                         converged=True, iterations=0, degenerate=True)
    tau_seed = 1.0 / rate_seed if rate_seed > 0 else math.inf
    t, y = _fit_window(t, y, tau_seed)

    def residual(p):
        logA, r = p
        return np.exp(logA + r * t) - y

    sol = scipy.optimize.least_squares(
        residual, [logA_seed, rate_seed], method="lm",
        xtol=1e-10, ftol=1e-10, gtol=1e-10, max_nfev=200)
    logA, r = sol.x
    degenerate = abs(r) < DEGENERATE_RATE
    tau = math.inf if degenerate else 1.0 / r
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    return FitResult("exponential", (float(np.exp(logA)), float(tau)), rms,
                     converged=bool(sol.status > 0), iterations=int(sol.nfev),
                     degenerate=degenerate)


def _linear_cosine_seed(t, y, omega):
    """Amplitude/phase/offset by linear least squares at fixed frequency."""
    design = np.column_stack([np.cos(omega * t), np.sin(omega * t),
                              np.ones_like(t)])
    (a, b, c), *_ = np.linalg.lstsq(design, y, rcond=None)
    B = math.hypot(a, b)
    theta = math.atan2(-b, a)
    return B, theta, c


def fit_cosine(series: dyn_mod.TimeSeries) -> FitResult:
    """Least squares of B*cos(t/tau + theta) + C to the real part.

    The frequency seed is the dominant discrete-Fourier peak of the
    mean-subtracted series (parabolic refinement across the peak bin);
    B, theta, C are then seeded linearly and all four refined jointly.
    Oscillatory series keep their full span (more periods condition the
    frequency better), so no growth window is applied.
    """
    t = series.times
    y = series.real.copy()
    n = t.size
    if n < 8:
        raise ValueError("cosine fit needs at least 8 samples")
    dt = t[1] - t[0]
    centered = y - np.mean(y)
    spec = np.abs(np.fft.rfft(centered))
    peak = int(np.argmax(spec[1:])) + 1
    floor = DEGENERATE_RATE * max(1.0, float(np.max(np.abs(y)))) * n
    if spec[peak] < floor:
        C = float(np.mean(y))
        rms = float(np.sqrt(np.mean(centered ** 2)))
        return FitResult("cosine", (0.0, math.inf, 0.0, C), rms,
                         converged=True, iterations=0, degenerate=True)
    # parabolic interpolation around the peak bin
    k = float(peak)
    if 1 <= peak < spec.size - 1:
        a, b, c = spec[peak - 1], spec[peak], spec[peak + 1]
        denom = a - 2 * b + c
        if denom != 0:
            k += 0.5 * (a - c) / denom
    omega = 2 * math.pi * k / (n * dt)
    B0, th0, C0 = _linear_cosine_seed(t, y, omega)

    def residual(p):
        B, w, th, C = p
        return B * np.cos(w * t + th) + C - y

    sol = scipy.optimize.least_squares(
        residual, [B0, omega, th0, C0], method="lm",
        xtol=1e-10, ftol=1e-10, gtol=1e-10, max_nfev=400)
    B, w, th, C = sol.x
    if B < 0:
        B, th = -B, th + math.pi
    th = math.remainder(th, 2 * math.pi)
    degenerate = abs(w) < DEGENERATE_RATE
    tau = math.inf if degenerate else 1.0 / w
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    return FitResult("cosine", (float(B), float(tau), float(th), float(C)),
                     rms, converged=bool(sol.status > 0),
                     iterations=int(sol.nfev), degenerate=degenerate)


def scaling_exponent(points) -> tuple[float, float]:
    """OLS slope and standard error of ln(tau) against ln|delta|."""
    points = [(abs(d), tau) for d, tau in points]
    if len(points) < 4:
        raise ValueError("need at least 4 (delta, tau) points")
    if any(d <= 0 or tau <= 0 or not math.isfinite(tau) for d, tau in points):
        raise ValueError("points must have |delta| > 0 and finite tau > 0")
    x = np.log([d for d, _ in points])
    y = np.log([tau for _, tau in points])
    xbar = np.mean(x)
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - np.mean(y))) / sxx)
    intercept = float(np.mean(y) - slope * xbar)
    ssr = float(np.sum((y - slope * x - intercept) ** 2))
    stderr = math.sqrt(ssr / (len(points) - 2) / sxx) if len(points) > 2 else 0.0
    return slope, stderr


def _grid_for_delta(p: chain_mod.SpinChainParams, t_max: float,
                    dt_out: float) -> tuple[float, float]:
    """Evolution span/step adapted to the spectral timescale at this delta.

    Dense eigenvalues (cheap for L <= 10) estimate the growth rate (largest
    imaginary part, delta < 0) or the slowest oscillation (smallest nonzero
    level gap weighted toward the transverse-field splitting, delta > 0) so
    that growth runs stop before overflow and oscillation runs cover
    several periods.
    """
    if p.L > 10:
        return t_max, dt_out
    H = chain_mod.build_h_nhs(p).to_dense()
    eig = np.linalg.eigvals(H)
    if p.delta < 0:
        rate = 2.0 * float(np.max(eig.imag))
        if rate > 0:
            # long enough that the secular (polynomial) transient of the
            # nearby exceptional point is over before the fit tail
            tau_est = 1.0 / rate
            return 40.0 * tau_est, min(dt_out, tau_est / 5.0)
        return t_max, dt_out
    # oscillatory side: dominant angular frequency of the conserved-sector
    # beat is the transverse-field multiplet gap
    omega = 2.0 * math.sqrt(abs(p.delta) * (2 - abs(p.delta))) * abs(p.g)
    if omega <= 0:
        return t_max, dt_out
    period = 2 * math.pi / omega
    return max(t_max, 4.0 * period), min(dt_out, period / 24.0)


def tau_sweep(deltas, L: int = 6, J: float = 1.0, g: float = 1.0,
              observables=("C1",), t_max: float = 30.0, dt_out: float = 0.25,
              rel_tol: float = 1e-10) -> list[dict]:
    """Fit tau for each delta and observable; rows for scaling.csv.

    delta < 0 uses the exponential model, delta > 0 the cosine model.
    Runs that still overflow retry with a halved span.
    """
    n_by_name = {"C1": 1, "C2": 2, "C3": 3}
    rows = []
    for delta in deltas:
        if delta == 0:
            raise ValueError("tau is defined only away from delta = 0")
        p = chain_mod.SpinChainParams(L=L, J=J, g=g, delta=delta)
        H = chain_mod.build_h_nhs(p)
        psi0 = chain_mod.build_state("uniform", L)
        span, step = _grid_for_delta(p, t_max, dt_out)
        for _ in range(8):
            try:
                cfg = dyn_mod.EvolutionConfig(
                    t_max=span, dt_out=step, rel_tol=rel_tol,
                    abs_tol=rel_tol * 1e-2)
                times, states = dyn_mod.evolve(H, psi0, cfg)
                break
            except dyn_mod.EvolutionOverflow:
                span /= 2
        else:
            raise dyn_mod.EvolutionOverflow(
                f"no usable span found at delta={delta}")
        for name in observables:
            C = chain_mod.build_com_closed(n_by_name[name], L)
            series = dyn_mod.expectation_series(C, states, times, label=name)
            fit = (fit_exponential if delta < 0 else fit_cosine)(series)
            rows.append({
                "delta": delta, "observable": name, "model": fit.model,
                "tau": abs(fit.tau), "rms": fit.rms_residual,
                "converged": fit.converged,
            })
    return rows
