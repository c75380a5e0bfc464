"""Non-unitary Schrödinger evolution and observable extraction.

Evolution is matrix-free by default: an adaptive Runge-Kutta pair integrates
d|psi>/dt = -i H|psi| using the compiled term-grouped apply of
:class:`~epchain.opalg.OperatorExpr`, with no renormalization -- the
conservation statements concern the raw sesquilinear form <psi|O|psi>.
A dense scaling-and-squaring propagator is available as a cross-check for
small chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from . import chain as chain_mod
from .opalg import OperatorExpr, conservation_residual

#: evolution aborts (instead of silently overflowing) once the state norm
#: passes this bound; relevant for delta < 0 at long times.
NORM_CAP = 1e120


@dataclass
class TimeSeries:
    """Sampled observable: complex values on a strictly increasing time grid."""

    times: np.ndarray
    values: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be matching 1-d arrays")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(self.times))
                and np.all(np.isfinite(self.values))):
            raise ValueError("non-finite entries in time series")

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def max_imag(self) -> float:
        """Largest |Im value|; a diagnostic for Hermitian observables."""
        return float(np.max(np.abs(self.values.imag))) if self.values.size else 0.0


@dataclass
class EvolutionConfig:
    """Output grid and integrator settings for one evolution run."""

    t_max: float
    dt_out: float = 0.1
    method: str = "rk_adaptive"     # or "expm"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.dt_out <= 0:
            raise ValueError("dt_out must be positive")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("rk_adaptive", "expm"):
            raise ValueError(f"unknown method {self.method!r}")

    def grid(self) -> np.ndarray:
        n = int(round(self.t_max / self.dt_out))
        times = self.dt_out * np.arange(n + 1)
        if times[-1] < self.t_max - 1e-12 * self.t_max:
            times = np.append(times, self.t_max)
        return times


class EvolutionOverflow(RuntimeError):
    """State norm exceeded NORM_CAP during non-Hermitian growth."""


def propagator(H: np.ndarray, t: float) -> np.ndarray:
    """exp(-i t H) by scaling-and-squaring Pade; valid at exceptional points."""
    H = np.asarray(H)
    U = scipy.linalg.expm(-1j * t * H)
    if not np.all(np.isfinite(U)):
        raise EvolutionOverflow(
            f"matrix exponential overflowed at t={t} "
            f"(non-Hermitian growth exceeds double range)")
    return U


def evolve(H: OperatorExpr, psi0: np.ndarray,
           cfg: EvolutionConfig) -> tuple[np.ndarray, list[np.ndarray]]:
    """Propagate |psi0> under exp(-iHt) on the output grid of cfg.

    Returns (times, states); states are *not* renormalized.  Aborts with
    EvolutionOverflow once the norm passes NORM_CAP.
    """
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (1 << H.length,):
        raise ValueError("state dimension does not match operator length")
    times = cfg.grid()

    if cfg.method == "expm":
        Hd = H.to_dense()
        step = propagator(Hd, cfg.dt_out)
        states = [psi0.copy()]
        for t_prev, t_next in zip(times[:-1], times[1:]):
            if abs((t_next - t_prev) - cfg.dt_out) < 1e-12:
                psi = step @ states[-1]
            else:
                psi = propagator(Hd, t_next - t_prev) @ states[-1]
            nrm = float(np.linalg.norm(psi))
            if not np.isfinite(nrm) or nrm > NORM_CAP:
                raise EvolutionOverflow(
                    f"state norm {nrm:.3e} exceeded cap at t={t_next}")
            states.append(psi)
        return times, states

    def rhs(t, y):
        return -1j * H.apply(y)

    def blowup(t, y):
        return NORM_CAP - float(np.linalg.norm(y))

    blowup.terminal = True

    sol = scipy.integrate.solve_ivp(
        rhs, (0.0, float(times[-1])), psi0, t_eval=times,
        method="RK45", rtol=cfg.rel_tol, atol=cfg.abs_tol, events=blowup)
    if sol.status == 1:
        t_stop = sol.t_events[0][0] if len(sol.t_events[0]) else sol.t[-1]
        raise EvolutionOverflow(
            f"state norm exceeded {NORM_CAP:.0e} near t={t_stop:.4g}; "
            "reduce t_max for this delta")
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    return times, [np.ascontiguousarray(sol.y[:, k]) for k in range(sol.y.shape[1])]


def expectation_series(O: OperatorExpr, states, times, label: str = "",
                       normalized: bool = False, meta: dict | None = None
                       ) -> TimeSeries:
    """Raw sesquilinear <psi(t)|O|psi(t)> (default) or the normalized form."""
    times = np.asarray(times, dtype=float)
    if len(states) != times.size:
        raise ValueError("states/times length mismatch")
    vals = np.empty(times.size, dtype=np.complex128)
    for k, psi in enumerate(states):
        psi = np.asarray(psi, dtype=np.complex128)
        if psi.shape != (1 << O.length,):
            raise ValueError("state dimension does not match operator length")
        v = np.vdot(psi, O.apply(psi))
        if normalized:
            v = v / np.vdot(psi, psi).real
        vals[k] = v
    return TimeSeries(times, vals, label=label, meta=dict(meta or {}))


def density_profile(states, times, L: int) -> np.ndarray:
    """Table of <m_i^x>(t): shape (len(times), L), real parts.

    m_i^x is the site density of the magnetization-type conserved quantity.
    """
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, L))
    for i in range(1, L + 1):
        mx = chain_mod.build_mx(i, L)
        for k, psi in enumerate(states):
            out[k, i - 1] = np.vdot(psi, mx.apply(psi)).real
    return out


def continuity_residual(p: chain_mod.SpinChainParams, states, times
                        ) -> np.ndarray:
    """Per-site continuity defect s*i*<[m_i^x]> + <j_i> - <j_{i-1}>.

    Uses the analytic commutator expression (no finite differencing) and the
    recorded global sign from :func:`epchain.chain.continuity_sign`.  At
    delta = 0 every entry vanishes to integrator precision.
    """
    L = p.L
    times = np.asarray(times, dtype=float)
    s = chain_mod.continuity_sign(L)
    H = chain_mod.build_h_nhs(p)
    out = np.empty((times.size, L))
    for i in range(1, L + 1):
        comm = conservation_residual(H, chain_mod.build_mx(i, L))
        div = (chain_mod.build_current(i, L, p.J)
               - chain_mod.build_current(i - 1, L, p.J))
        for k, psi in enumerate(states):
            c = np.vdot(psi, comm.apply(psi))
            d = np.vdot(psi, div.apply(psi))
            out[k, i - 1] = (s * 1j * c + d).real
    return out
