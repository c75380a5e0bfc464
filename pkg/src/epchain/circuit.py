"""Weak-measurement + post-selection circuit realizing the non-unitary step.

One protocol step applies the Hermitian-part unitary U(dt), then visits every
system site with a fresh ancilla: a basis-change R on the site, an ancilla
rotation, a CNOT from the site, and an ancilla z-measurement post-selected on
|0>_a.  The kept branch acts on the site as (cos dt' + sin dt' sigma^y)/sqrt2
with dt' = g(1-delta)dt, so k steps approximate the non-Hermitian evolution
exp(-i k dt H) up to the recorded branch amplitude.  All statevectors here
are dense (system dimension <= 64).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import chain as chain_mod
from .chain import SpinChainParams
from .opalg import Coeff, OperatorExpr, SiteOp

_SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
_SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)
_ID = np.eye(2, dtype=np.complex128)

#: basis change mapping sigma^y eigenstates to sigma^z eigenstates
R_GATE = (np.exp(1j * math.pi / 4) * _ID
          + np.exp(-1j * math.pi / 4) * (_SX + _SY + _SZ)) / 2

#: maximum system size for the dense circuit simulator
CIRCUIT_SITE_CAP = 6


def ancilla_init(dt_eff: float) -> np.ndarray:
    """Ancilla rotation exp(-i(pi/4 - dt')sigma^y) applied to |0>_a."""
    angle = math.pi / 4 - dt_eff
    return scipy.linalg.expm(-1j * angle * _SY)


def kraus_pair(dt_eff: float) -> tuple[np.ndarray, np.ndarray]:
    """Site Kraus operators of the post-selected (|0>_a) and rejected branch."""
    c, s = math.cos(dt_eff), math.sin(dt_eff)
    k0 = (c * _ID + s * _SY) / math.sqrt(2)
    k1 = (c * _ID - s * _SY) / math.sqrt(2)
    return k0, k1


def _site_operator(gate: np.ndarray, site: int, L: int) -> np.ndarray:
    """Embed a single-qubit gate at the given site (1 = most significant)."""
    op = np.eye(1, dtype=np.complex128)
    for k in range(1, L + 1):
        op = np.kron(op, gate if k == site else _ID)
    return op


@dataclass
class CircuitProgram:
    """Compiled protocol: shared step unitary, per-site Kraus, gate listing."""

    params: SpinChainParams
    steps: int
    dt: float
    init: str = "uniform"
    trotter_order: object = None     # None -> exact for L <= 3, else 1
    u_step: np.ndarray = field(repr=False, default=None)
    dt_eff: float = 0.0

    def __post_init__(self):
        L = self.params.L
        if L > CIRCUIT_SITE_CAP:
            raise ValueError(f"circuit simulator capped at L={CIRCUIT_SITE_CAP}")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.u_step is None:
            order = self.trotter_order
            if order is None:
                order = "exact" if L <= 3 else 1
            self.u_step = trotter_u(self.params, self.dt, order)
        self.dt_eff = self.params.g * (1 - self.params.delta) * self.dt

    @property
    def branch_amp_per_site(self) -> float:
        """Amplitude factor cos(dt')/sqrt(2) of one kept ancilla outcome."""
        return math.cos(self.dt_eff) / math.sqrt(2)

    def kept_kraus_full(self, site: int) -> np.ndarray:
        k0, _ = kraus_pair(self.dt_eff)
        return _site_operator(k0, site, self.params.L)

    def branch_step_operator(self) -> np.ndarray:
        """Exact kept-branch action of one full step on the system."""
        op = self.u_step
        for site in range(1, self.params.L + 1):
            op = self.kept_kraus_full(site) @ op
        return op

    def gate_sequence(self) -> list[tuple]:
        """Symbolic gate listing (state init, then per-step structure)."""
        gates: list[tuple] = [("init", self.init)]
        for _ in range(self.steps):
            gates.append(("U", self.dt))
            for site in range(1, self.params.L + 1):
                gates += [("R", site), ("ancilla_init",), ("CNOT", site),
                          ("measure",), ("Rinv", site)]
        return gates

    def initial_state(self) -> np.ndarray:
        return chain_mod.build_state(self.init, self.params.L)


@dataclass
class TrajectoryStats:
    """Per-step post-selection counters from a sampling run."""

    total_started: np.ndarray
    accepted: np.ndarray
    all_down: np.ndarray
    seed: int
    shots: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.total_started = np.asarray(self.total_started, dtype=np.int64)
        self.accepted = np.asarray(self.accepted, dtype=np.int64)
        self.all_down = np.asarray(self.all_down, dtype=np.int64)
        if np.any(self.accepted > self.total_started):
            raise ValueError("accepted cannot exceed total_started")
        if np.any(np.diff(self.accepted) > 0):
            raise ValueError("accepted counts must be non-increasing")
        if np.any(self.all_down > self.accepted):
            raise ValueError("all_down cannot exceed accepted")


def trotter_u(p: SpinChainParams, dt: float, order="exact") -> np.ndarray:
    """Unitary of the Hermitian generator H_XXX + g*sum_j X_j over one dt.

    order="exact": one multi-qubit exponential (L <= dense cap).
    order=1: first-order split, bond exponentials times the field rotation.
    """
    L = p.L
    if order == "exact":
        H = chain_mod.build_h_xxx(p)
        for j in range(1, L + 1):
            H = H + OperatorExpr.from_site_factors(
                L, {j: SiteOp.X}, Coeff.from_number(p.g))
        return scipy.linalg.expm(-1j * dt * H.to_dense())
    if order != 1:
        raise ValueError("order must be 'exact' or 1")
    field_1q = scipy.linalg.expm(-1j * dt * p.g * _SX)
    U = np.eye(1, dtype=np.complex128)
    for _ in range(L):
        U = np.kron(U, field_1q)
    bond = p.J * (np.kron(_SX, _SX) + np.kron(_SY, _SY) + np.kron(_SZ, _SZ))
    u_bond = scipy.linalg.expm(-1j * dt * bond)
    for j in range(1, L):
        op = np.eye(1, dtype=np.complex128)
        k = 1
        while k <= L:
            if k == j:
                op = np.kron(op, u_bond)
                k += 2
            else:
                op = np.kron(op, _ID)
                k += 1
        U = op @ U
    return U


def build_protocol(p: SpinChainParams, steps: int, dt: float,
                   init: str = "uniform", trotter_order=None) -> CircuitProgram:
    return CircuitProgram(params=p, steps=steps, dt=dt, init=init,
                          trotter_order=trotter_order)


def run_deterministic(prog: CircuitProgram,
                      psi0: np.ndarray | None = None) -> list[np.ndarray]:
    """Unnormalized all-|0>_a branch states after steps 0..k_max."""
    psi = (prog.initial_state() if psi0 is None
           else np.asarray(psi0, dtype=np.complex128)).copy()
    step_op = prog.branch_step_operator()
    states = [psi.copy()]
    for _ in range(prog.steps):
        psi = step_op @ psi
        states.append(psi.copy())
    return states


def _depolarize(states, alive, lam, rng, L):
    """Optional qualitative noise: random single-site Pauli with prob lam."""
    idx = np.flatnonzero(alive)
    if idx.size == 0:
        return
    for site in range(1, L + 1):
        hit = idx[rng.random(idx.size) < lam]
        if hit.size == 0:
            continue
        which = rng.integers(0, 3, size=hit.size)
        for pauli_i, gate in enumerate((_SX, _SY, _SZ)):
            rows = hit[which == pauli_i]
            if rows.size:
                full = _site_operator(gate, site, L)
                states[rows] = states[rows] @ full.T


def run_sampling(prog: CircuitProgram, psi0: np.ndarray | None = None,
                 shots: int = 10**5, seed: int = 0,
                 noise: float = 0.0) -> TrajectoryStats:
    """Born-rule sampling of every ancilla measurement over many shots.

    Trajectories hitting a |1>_a outcome are terminated; survivors are
    z-measured (Bernoulli on the all-down probability) at every recorded
    step.  All randomness comes from one counter-based Philox stream keyed
    by the seed, with a fixed (shot, step, site) layout, so results are
    independent of any parallel schedule.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    L = prog.params.L
    dim = 1 << L
    k_max = prog.steps
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    uniforms = rng.random((shots, k_max + 1, L + 1))
    noise_rng = (np.random.Generator(np.random.Philox(key=np.uint64(seed) + 1))
                 if noise > 0 else None)

    psi_init = (prog.initial_state() if psi0 is None
                else np.asarray(psi0, dtype=np.complex128))
    psi_init = psi_init / np.linalg.norm(psi_init)
    states = np.broadcast_to(psi_init, (shots, dim)).copy()
    alive = np.ones(shots, dtype=bool)
    down = chain_mod.polarized_index(L)

    total = np.empty(k_max + 1, dtype=np.int64)
    accepted = np.empty(k_max + 1, dtype=np.int64)
    all_down = np.empty(k_max + 1, dtype=np.int64)

    kraus_full = [prog.kept_kraus_full(site) for site in range(1, L + 1)]

    for k in range(k_max + 1):
        total[k] = shots
        accepted[k] = int(np.count_nonzero(alive))
        idx = np.flatnonzero(alive)
        if idx.size:
            p_down = np.abs(states[idx, down]) ** 2
            hits = uniforms[idx, k, L] < p_down
            all_down[k] = int(np.count_nonzero(hits))
        else:
            all_down[k] = 0
        if k == k_max:
            break
        # one protocol step on the surviving trajectories
        idx = np.flatnonzero(alive)
        states[idx] = states[idx] @ prog.u_step.T
        if noise_rng is not None:
            _depolarize(states, alive, noise, noise_rng, L)
        for site in range(1, L + 1):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            branch0 = states[idx] @ kraus_full[site - 1].T
            p0 = np.einsum("ij,ij->i", branch0, branch0.conj()).real
            keep = uniforms[idx, k, site - 1] < p0
            alive[idx[~keep]] = False
            kept = idx[keep]
            states[kept] = branch0[keep] / np.sqrt(p0[keep])[:, None]
    return TrajectoryStats(total, accepted, all_down, seed=seed, shots=shots,
                           meta={"dt": prog.dt, "delta": prog.params.delta,
                                 "L": L, "noise": noise})


def estimate_c1(stats: TrajectoryStats, prog: CircuitProgram,
                mode: str = "raw"):
    """Estimator series for the polarized-projector conserved quantity.

    raw (default): (all_down/total) * (cos dt'/sqrt2)^(-2Lk) -- the
    unnormalized sesquilinear form, which is the conserved object.
    normalized: all_down/accepted, the post-selected conditional
    probability.  Standard errors by binomial propagation; the series is
    truncated with a diagnostic once no trajectory survives.
    """
    from .dynamics import TimeSeries

    L = prog.params.L
    k = np.arange(prog.steps + 1)
    times = prog.dt * k
    amp2 = prog.branch_amp_per_site ** 2
    meta = {"mode": mode, "shots": stats.shots, "seed": stats.seed}
    if mode == "raw":
        denom = stats.total_started.astype(float)
        scale = amp2 ** (-L * k.astype(float))
    elif mode == "normalized":
        denom = stats.accepted.astype(float)
        scale = np.ones_like(times)
        if np.any(denom == 0):
            cut = int(np.argmax(denom == 0))
            meta["truncated_at_step"] = cut
            k, times, scale = k[:cut], times[:cut], scale[:cut]
            denom = denom[:cut]
    else:
        raise ValueError("mode must be 'raw' or 'normalized'")
    counts = stats.all_down[: times.size].astype(float)
    phat = counts / denom
    values = phat * scale
    stderr = np.sqrt(np.clip(phat * (1 - phat), 0, None) / denom) * scale
    meta["stderr"] = stderr
    return TimeSeries(times, values, label=f"C1_{mode}", meta=meta)
