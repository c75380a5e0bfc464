"""Concrete operators and states of the non-Hermitian Heisenberg chain.

All builders return exact `OperatorExpr` objects (coefficients are the exact
rationals of the defining formulas, or the exact rational value of the
closest double for irrational couplings) or numpy state vectors in the
shared basis convention of :mod:`epchain.opalg`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from gmpy2 import mpq

from .opalg import Coeff, OperatorExpr, SiteOp, conservation_residual, site_mask


@dataclass(frozen=True)
class SpinChainParams:
    """Couplings of the chain: L sites, bond coupling J, transverse field g,
    non-Hermitian deformation delta (delta = 0 is the exceptional point)."""

    L: int
    J: float = 1.0
    g: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        for name in ("J", "g", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class DefectSpec:
    """Single-site defect on an otherwise fully down-polarized chain."""

    site: int
    theta: float = math.pi / 2
    phi: float = 0.0


def build_h_xxx(p: SpinChainParams) -> OperatorExpr:
    """Isotropic Heisenberg chain J * sum_bonds (XX + YY + ZZ), open ends."""
    L = p.L
    H = OperatorExpr.zero(L)
    J = Coeff.from_number(p.J)
    for j in range(1, L):
        for op in (SiteOp.X, SiteOp.Y, SiteOp.Z):
            H = H + OperatorExpr.from_site_factors(L, {j: op, j + 1: op}, J)
    return H


def build_h_nhs(p: SpinChainParams) -> OperatorExpr:
    """H_XXX + g*sum_j X_j + i*g*(1-delta)*sum_j Y_j (open boundary)."""
    L = p.L
    H = build_h_xxx(p)
    g = mpq(p.g)
    y_coeff = Coeff(0, g * (1 - mpq(p.delta)))
    for j in range(1, L + 1):
        H = H + OperatorExpr.from_site_factors(L, {j: SiteOp.X}, Coeff(g))
        H = H + OperatorExpr.from_site_factors(L, {j: SiteOp.Y}, y_coeff)
    return H


def build_h_ahs(p: SpinChainParams) -> OperatorExpr:
    """Hermitian partner chain: H_XXX + sqrt(delta*(2-delta)) * sum_j X_j."""
    if not 0 <= p.delta <= 2:
        raise ValueError("build_h_ahs requires 0 <= delta <= 2")
    L = p.L
    field = Coeff.from_number(p.g * math.sqrt(p.delta * (2 - p.delta)))
    H = build_h_xxx(p)
    for j in range(1, L + 1):
        H = H + OperatorExpr.from_site_factors(L, {j: SiteOp.X}, field)
    return H


def build_similarity(p: SpinChainParams, inverse: bool = False) -> OperatorExpr:
    """Diagonal positive map [exp((Z/2) ln sqrt(delta/(2-delta)))]^(tensor L).

    Conjugating the non-Hermitian chain with it yields the Hermitian partner;
    requires 0 < delta < 2.
    """
    if not 0 < p.delta < 2:
        raise ValueError("similarity transform requires 0 < delta < 2")
    L = p.L
    d = p.delta / (2 - p.delta)
    up = d ** 0.25          # eigenvalue on |up>  (sigma^z = +1)
    if inverse:
        up = 1.0 / up
    down = 1.0 / up
    a = Coeff.from_number((up + down) / 2)
    b = Coeff.from_number((up - down) / 2)
    S = OperatorExpr.identity(L).scaled(1)
    for j in range(1, L + 1):
        factor = (OperatorExpr.from_site_factors(L, {}, a)
                  + OperatorExpr.from_site_factors(L, {j: SiteOp.Z}, b))
        S = S @ factor
    return S


def build_mx(i: int, L: int) -> OperatorExpr:
    """Density of the magnetization-type conserved quantity:
    ProjDown everywhere except X_i/2 on site i."""
    if not 1 <= i <= L:
        raise ValueError(f"site {i} out of range 1..{L}")
    factors = {k: SiteOp.ProjDown for k in range(1, L + 1)}
    factors[i] = SiteOp.X
    return OperatorExpr.from_site_factors(L, factors, Coeff(mpq(1, 2)))


def _proj_string_with(site_ops: dict[int, SiteOp], L: int, coeff) -> OperatorExpr:
    factors = {k: SiteOp.ProjDown for k in range(1, L + 1)}
    factors.update(site_ops)
    return OperatorExpr.from_site_factors(L, factors, coeff)


def build_current(i: int, L: int, J: float = 1.0) -> OperatorExpr:
    """Bond current J*[Pd..Pd Y_{i+1} Pd..Pd - Pd..Pd Y_i Pd..Pd]; the zero
    expression for i = 0 and i = L (no bond beyond the chain ends)."""
    if i in (0, L):
        return OperatorExpr.zero(L)
    if not 1 <= i <= L - 1:
        raise ValueError(f"bond index {i} out of range 0..{L}")
    Jc = Coeff.from_number(J)
    return (_proj_string_with({i + 1: SiteOp.Y}, L, Jc)
            - _proj_string_with({i: SiteOp.Y}, L, Jc))


def build_com_closed(n: int, L: int, density_sum: bool = False) -> OperatorExpr:
    """Closed-form conserved operators of the chain at its exceptional point.

    n=1: projector onto the fully polarized state, (Pd)^(tensor L).
    n=2: (1/L) * sum_i mx_i; with density_sum=True the 1/L is dropped
         (the plain density-sum convention).
    n=3: the two-defect correlation sum, requires L >= 2.
    """
    if n == 1:
        return _proj_string_with({}, L, Coeff(1))
    if n == 2:
        C = OperatorExpr.zero(L)
        for i in range(1, L + 1):
            C = C + build_mx(i, L)
        return C if density_sum else C.scaled(mpq(1, L))
    if n == 3:
        if L < 2:
            raise ValueError("n=3 requires L >= 2")
        return _build_c3(L)
    raise ValueError("n must be 1, 2 or 3")


def _pair_term(i: int, si: SiteOp, j: int, sj: SiteOp, L: int) -> OperatorExpr:
    """Pair operator: Pd background with (sigma^si_i/2) and (sigma^sj_j/2);
    on-site (i == j) same-sign pairs vanish, opposite signs contract to the
    on-site product sigma^si sigma^sj / 2."""
    quarter = Coeff(mpq(1, 4))
    if i != j:
        return _proj_string_with({i: si, j: sj}, L, quarter)
    if si == sj:
        return OperatorExpr.zero(L)
    # sigma^+ sigma^- / 2 = 2 ProjUp,  sigma^- sigma^+ / 2 = 2 ProjDown
    op = SiteOp.ProjUp if si == SiteOp.Plus else SiteOp.ProjDown
    return _proj_string_with({i: op}, L, Coeff(2))


def _build_c3(L: int) -> OperatorExpr:
    same = mpq(1, 8 * L * (L - 1))   # (1/(8 L^2)) * L/(L-1)
    cross = mpq(1, 8 * L * L)
    terms: dict = {}

    def add(expr: OperatorExpr, weight):
        w = Coeff.from_number(weight)
        for s, c in expr.terms.items():
            cw = c * w
            acc = terms.get(s)
            terms[s] = cw if acc is None else acc + cw

    signs = (SiteOp.Plus, SiteOp.Minus)
    for i in range(1, L + 1):
        for j in range(1, L + 1):
            for s in signs:
                sbar = SiteOp.Minus if s is SiteOp.Plus else SiteOp.Plus
                add(_pair_term(i, s, j, s, L), same)
                add(_pair_term(i, s, j, sbar, L), cross)
    add(build_com_closed(1, L), -mpq(1, 4 * L))
    return OperatorExpr(L, terms)


# ---- states -----------------------------------------------------------


def polarized_index(L: int) -> int:
    """Basis index of |down ... down> (all bits set)."""
    return (1 << L) - 1


def defect_index(i: int, L: int) -> int:
    """Basis index of the polarized chain with site i flipped up."""
    return polarized_index(L) ^ site_mask(i, L)


def build_state(kind: str, L: int, *, defect: DefectSpec | None = None,
                center: float | None = None,
                width: float | None = None) -> np.ndarray:
    """Initial states: 'uniform', 'polarized', 'defect', 'gaussian_defect'."""
    dim = 1 << L
    if kind == "uniform":
        return np.full(dim, 2.0 ** (-L / 2), dtype=np.complex128)
    if kind == "polarized":
        v = np.zeros(dim, dtype=np.complex128)
        v[polarized_index(L)] = 1.0
        return v
    if kind == "defect":
        if defect is None:
            raise ValueError("defect state needs a DefectSpec")
        if not 1 <= defect.site <= L:
            raise ValueError(f"defect site {defect.site} out of range 1..{L}")
        v = np.zeros(dim, dtype=np.complex128)
        v[polarized_index(L)] = np.exp(1j * defect.phi) * math.cos(defect.theta)
        v[defect_index(defect.site, L)] = math.sin(defect.theta)
        return v
    if kind == "gaussian_defect":
        if center is None or width is None:
            raise ValueError("gaussian_defect needs center and width")
        weights = np.array(
            [math.exp(-((i - center) ** 2) / (2 * width ** 2))
             for i in range(1, L + 1)])
        norm = 1.0 / math.sqrt(float(np.dot(weights, weights)))
        v = np.zeros(dim, dtype=np.complex128)
        v[polarized_index(L)] = 2.0 ** -0.5
        for i in range(1, L + 1):
            v[defect_index(i, L)] = 2.0 ** -0.5 * norm * weights[i - 1]
        return v
    raise ValueError(f"unknown state kind {kind!r}")


@lru_cache(maxsize=None)
def continuity_sign(L: int) -> int:
    """Global sign s making s*i*(H^dag mx_i - mx_i H) + (j_i - j_{i-1}) the
    exact zero expression at delta = 0, for every site; determined once by
    the symbolic identity."""
    H = build_h_nhs(SpinChainParams(L=L, J=1.0, g=1.0, delta=0.0))
    for s in (1, -1):
        ok = True
        for i in range(1, L + 1):
            commutator = conservation_residual(H, build_mx(i, L))
            div = build_current(i, L, 1.0) - build_current(i - 1, L, 1.0)
            residual = commutator.scaled(Coeff(0, s)) + div
            if not residual.is_zero():
                ok = False
                break
        if ok:
            return s
    raise RuntimeError(
        f"no global sign closes the continuity identity at L={L}")
