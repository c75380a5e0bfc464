"""Generalized-eigenvector machinery for exceptional points.

Covers the closed-form chain of the non-Hermitian Heisenberg model, numeric
Jordan chains for generic matrices, conserved-operator construction from a
chain, the brute-force conserved-operator space (the oracle every
construction is validated against), and the deformed-block theory with its
correspondence to the auxiliary Hermitian side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from gmpy2 import mpq

from . import chain as chain_mod
from .chain import SpinChainParams
from .opalg import Coeff, OperatorExpr, SiteOp, conservation_residual

DEFAULT_SVD_TOL = 1e-9

#: brute-force commutant solver cap (the kernel problem is dim^2-dimensional)
BRUTEFORCE_DIM_CAP = 128


@dataclass
class JordanChain:
    """Real eigenvalue E and generalized eigenvectors V_1..V_N of H^dagger,
    satisfying H^dag V_1 = E V_1 and H^dag V_n = E V_n + V_{n-1}."""

    energy: float
    vectors: list[np.ndarray]

    @property
    def order(self) -> int:
        return len(self.vectors)

    def residuals(self, H_dag: np.ndarray) -> list[float]:
        """Relative chain-equation residual per vector."""
        out = []
        prev = None
        for v in self.vectors:
            target = self.energy * v + (prev if prev is not None else 0.0)
            out.append(float(np.linalg.norm(H_dag @ v - target)
                             / np.linalg.norm(v)))
            prev = v
        return out

    def min_singular_value(self) -> float:
        stack = np.array([v / np.linalg.norm(v) for v in self.vectors])
        return float(np.linalg.svd(stack, compute_uv=False)[-1])

    def to_json_dict(self) -> dict:
        dim = len(self.vectors[0])
        return {
            "dim_log2": int(round(math.log2(dim))) if dim & (dim - 1) == 0 else None,
            "dim": dim,
            "energy": self.energy,
            "vectors": [np.column_stack([v.real, v.imag]).ravel().tolist()
                        for v in self.vectors],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, data: dict) -> "JordanChain":
        vectors = []
        for flat in data["vectors"]:
            arr = np.asarray(flat, dtype=float).reshape(-1, 2)
            vectors.append(arr[:, 0] + 1j * arr[:, 1])
        return cls(energy=float(data["energy"]), vectors=vectors)


@dataclass(frozen=True)
class BlockSpec:
    """One deformed Jordan block: size N, real eigenvalue E, deformation."""

    N: int
    E: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("block size N must be >= 1")


@dataclass
class ComBasis:
    """A family of conserved operators for a fixed Hamiltonian."""

    operators: list[np.ndarray]
    provenance: str
    energy: float | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.operators)

    def to_json_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "energy": self.energy,
            "dim": self.operators[0].shape[0] if self.operators else 0,
            "operators": [np.column_stack([m.real.ravel(), m.imag.ravel()])
                          .ravel().tolist() for m in self.operators],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())


# ---- Heisenberg chain, closed form -------------------------------------


def heisenberg_chain(L: int, J: float = 1.0, g: float = 1.0) -> JordanChain:
    """Closed-form chain V_n = c_n (sum_i sigma^+_i / 2)^(n-1) |down...down>
    for the chain at its exceptional point, n = 1..L+1.

    The eigenvalue is computed from H^dagger V_1 = E V_1, not assumed
    (it comes out as J*(L-1) for the open chain).
    """
    dim = 1 << L
    pol = chain_mod.polarized_index(L)
    v = np.zeros(dim, dtype=np.complex128)
    v[pol] = 1.0

    raise_half = OperatorExpr.zero(L)
    for i in range(1, L + 1):
        raise_half = raise_half + OperatorExpr.from_site_factors(
            L, {i: SiteOp.Plus}, Coeff(mpq(1, 2)))

    vectors = []
    powered = v
    for n in range(1, L + 2):
        c_n = (2.0 ** (1 - n) * math.factorial(L + 1 - n)
               / math.factorial(L) / math.factorial(n - 1)) * g ** (1 - n)
        vectors.append(c_n * powered)
        if n <= L:
            powered = raise_half.apply(powered)

    H = chain_mod.build_h_nhs(SpinChainParams(L=L, J=J, g=g, delta=0.0))
    hv = H.adjoint().apply(vectors[0])
    energy = float(np.real(np.vdot(vectors[0], hv)
                           / np.vdot(vectors[0], vectors[0])))
    result = JordanChain(energy=energy, vectors=vectors)
    worst = max(result.residuals(H.adjoint().to_dense())
                if L <= 8 else _matfree_residuals(result, H))
    if worst > 1e-9:
        raise RuntimeError(f"closed-form chain residual {worst:.2e} at L={L}")
    return result


def _matfree_residuals(c: JordanChain, H: OperatorExpr) -> list[float]:
    Hd = H.adjoint()
    out = []
    prev = None
    for v in c.vectors:
        target = c.energy * v + (prev if prev is not None else 0.0)
        out.append(float(np.linalg.norm(Hd.apply(v) - target)
                         / np.linalg.norm(v)))
        prev = v
    return out


# ---- generic numeric machinery -----------------------------------------


def numeric_jordan_chain(H: np.ndarray, E: float,
                         tol: float = DEFAULT_SVD_TOL) -> JordanChain:
    """Maximal Jordan chain of H^dagger at eigenvalue E, grown from the
    numerical kernel vector of (H^dag - E).

    Each extension is the minimum-norm least-squares solution of
    (H^dag - E) x = V_{n-1}; the chain stops when that system is no longer
    consistent at the given relative tolerance.
    """
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    A = H.conj().T - E * np.eye(H.shape[0])
    u, s, vh = np.linalg.svd(A)
    threshold = tol * (s[0] if s.size and s[0] > 0 else 1.0)
    if s[-1] > threshold:
        raise ValueError(f"E={E} is not an eigenvalue of H^dagger at tol={tol}")
    v1 = vh[-1].conj()
    vectors = [v1]
    pinv = np.linalg.pinv(A, rcond=tol)
    while True:
        prev = vectors[-1]
        x = pinv @ prev
        if np.linalg.norm(A @ x - prev) > tol * max(1.0, np.linalg.norm(prev)):
            break
        vectors.append(x)
        stack = np.array([w / np.linalg.norm(w) for w in vectors])
        if np.linalg.svd(stack, compute_uv=False)[-1] < tol:
            vectors.pop()
            break
    return JordanChain(energy=float(E), vectors=vectors)


def coms_from_chain(chain: JordanChain) -> ComBasis:
    """Conserved operators C_n = sum_{j=1..n} |V_j><V_{n-j+1}| built from a
    Jordan chain; each is Hermitian by the j <-> n-j+1 symmetry of the sum."""
    N = chain.order
    ops = []
    for n in range(1, N + 1):
        dim = len(chain.vectors[0])
        C = np.zeros((dim, dim), dtype=np.complex128)
        for j in range(1, n + 1):
            C += np.outer(chain.vectors[j - 1],
                          chain.vectors[n - j].conj())
        ops.append(C)
    return ComBasis(operators=ops, provenance="chain-constructed",
                    energy=chain.energy)


def com_space_bruteforce(H: np.ndarray,
                         tol: float = DEFAULT_SVD_TOL) -> ComBasis:
    """Orthonormal basis (Frobenius inner product) of the full solution
    space of H^dag X = X H, via SVD of the d^2-dimensional linear map.

    This is the oracle used to validate every constructed conserved
    operator; dimension capped at BRUTEFORCE_DIM_CAP.
    """
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    d = H.shape[0]
    if d > BRUTEFORCE_DIM_CAP:
        raise ValueError(f"dimension {d} exceeds cap {BRUTEFORCE_DIM_CAP}")
    eye = np.eye(d)
    # column-stacking vec: vec(A X B) = (B^T kron A) vec(X)
    M = np.kron(eye, H.conj().T) - np.kron(H.T, eye)
    u, s, vh = np.linalg.svd(M)
    smax = s[0] if s.size and s[0] > 0 else 1.0
    kernel = vh[s <= tol * smax].conj()
    ops = [vec.reshape(d, d, order="F") for vec in kernel]
    return ComBasis(operators=ops, provenance="brute-force")


def principal_angles(basis_a: list[np.ndarray],
                     basis_b: list[np.ndarray]) -> np.ndarray:
    """Principal angles between the operator subspaces spanned by two
    families (flattened, Frobenius inner product)."""
    A = np.array([m.ravel() for m in basis_a]).T
    B = np.array([m.ravel() for m in basis_b]).T
    if A.shape[1] > B.shape[1]:
        A, B = B, A
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    cos_sv = np.sort(np.clip(
        np.linalg.svd(qa.conj().T @ qb, compute_uv=False), 0.0, 1.0))[::-1]
    # sine-based values resolve angles below the arccos precision floor
    sin_sv = np.sort(np.clip(np.linalg.svd(
        qa - qb @ (qb.conj().T @ qa), compute_uv=False), 0.0, 1.0))
    return np.sort(np.arctan2(sin_sv, cos_sv))[::-1]


# ---- deformed Jordan blocks --------------------------------------------


def spin_matrices(N: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin-(N-1)/2 matrices (Sx, Sy, Sz) in the z-basis, hbar = 1;
    all-zero 1x1 matrices for N = 1."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if N == 1:
        z = np.zeros((1, 1), dtype=np.complex128)
        return z, z.copy(), z.copy()
    s = (N - 1) / 2
    m = s - np.arange(N)
    ladder = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    Sp = np.zeros((N, N), dtype=np.complex128)
    Sp[np.arange(N - 1), np.arange(1, N)] = ladder
    Sm = Sp.conj().T
    Sx = (Sp + Sm) / 2
    Sy = (Sp - Sm) / (2j)
    Sz = np.diag(m).astype(np.complex128)
    return Sx, Sy, Sz


def deformed_block(spec: BlockSpec) -> np.ndarray:
    """E*I + Sx + i(1-delta)*Sy; a rescaled Jordan block at delta = 0."""
    Sx, Sy, _ = spin_matrices(spec.N)
    return spec.E * np.eye(spec.N) + Sx + 1j * (1 - spec.delta) * Sy


def auxiliary_block(spec: BlockSpec) -> np.ndarray:
    """Hermitian partner E*I + sqrt(delta*(2-delta))*Sx."""
    if not 0 <= spec.delta <= 2:
        raise ValueError("auxiliary block requires 0 <= delta <= 2")
    Sx, _, _ = spin_matrices(spec.N)
    return spec.E * np.eye(spec.N) + math.sqrt(
        spec.delta * (2 - spec.delta)) * Sx


def block_similarity(spec: BlockSpec, inverse: bool = False) -> np.ndarray:
    """Diagonal map exp(Sz ln sqrt(delta/(2-delta))) conjugating the
    deformed block into its Hermitian partner."""
    if not 0 < spec.delta < 2:
        raise ValueError("block similarity requires 0 < delta < 2")
    _, _, Sz = spin_matrices(spec.N)
    exponent = np.real(np.diag(Sz)) * math.log(
        math.sqrt(spec.delta / (2 - spec.delta)))
    if inverse:
        exponent = -exponent
    return np.diag(np.exp(exponent)).astype(np.complex128)


def block_chain(N: int, E: float = 0.0) -> JordanChain:
    """Closed-form Jordan chain of the delta = 0 block: V_n is a multiple of
    the (N+1-n)-th z-basis vector, fixed by S^- V_n = V_{n-1}, V_1 = e_N."""
    Sx, Sy, _ = spin_matrices(N)
    Sm = (Sx - 1j * Sy)
    vectors = [np.eye(N, dtype=np.complex128)[:, N - 1]]
    for n in range(2, N + 1):
        k = N - n + 1          # position (1-based) of the new vector
        amp = vectors[-1][k] / Sm[k, k - 1]
        v = np.zeros(N, dtype=np.complex128)
        v[k - 1] = amp
        vectors.append(v)
    return JordanChain(energy=float(E), vectors=vectors)


def block_com_correspondence(spec: BlockSpec, n: int
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Conserved-operator pair (C_aux, C_ep) for one deformed block.

    C_ep is the chain-built conserved operator of the delta = 0 block
    (scalar factor 1 relative to the chain construction).  C_aux is its
    auxiliary-side partner delta^((N-n)/2) * C_ep with delta-ratio
    d = delta/(2-delta); it commutes with the Hermitian block and maps back
    exactly, S^dag C_aux S = C_ep, at every delta in (0, 2).
    """
    if not 1 <= n <= spec.N:
        raise ValueError(f"n={n} out of range 1..{spec.N}")
    if not 0 < spec.delta < 2:
        raise ValueError("correspondence requires 0 < delta < 2")
    C_ep = coms_from_chain(block_chain(spec.N, spec.E)).operators[n - 1]
    d = spec.delta / (2 - spec.delta)
    C_aux = d ** ((spec.N - n) / 2) * C_ep
    return C_aux, C_ep


def block_ratio_condition_residual(C_aux: np.ndarray, N: int) -> float:
    """Largest violation of the anti-diagonal coefficient ratio condition
    c_{a-1,b}/c_{a,b-1} = sqrt((N+1-b)(b-1)) / sqrt((N+1-a)(a-1))
    over entries where both sides are defined."""
    worst = 0.0
    for a in range(2, N + 1):
        for b in range(2, N + 1):
            lhs_den = C_aux[a - 1, b - 2]     # c_{a, b-1}, zero-based
            num = math.sqrt((N + 1 - b) * (b - 1))
            den = math.sqrt((N + 1 - a) * (a - 1))
            if abs(lhs_den) < 1e-300 or den == 0:
                continue
            lhs = C_aux[a - 2, b - 1] / lhs_den   # c_{a-1, b} / c_{a, b-1}
            worst = max(worst, abs(lhs - num / den))
    return worst


# ---- verification reports ----------------------------------------------


def heisenberg_correspondence_check(L: int, delta: float,
                                    J: float = 1.0) -> dict:
    """Verify, for n = 1..L+1: (a) each generalized eigenvector is an
    eigenvector of the similarity map, (b) S^dag C_n S = d^((n-1-L)/2) C_n
    with d = delta/(2-delta), (c) the rescaled partner d^((L-n+1)/2) C_n
    commutes with the isotropic chain."""
    if not 0 < delta < 2:
        raise ValueError("requires 0 < delta < 2")
    p = SpinChainParams(L=L, J=J, delta=delta)
    S = chain_mod.build_similarity(p).to_dense()
    d = delta / (2 - delta)
    jc = heisenberg_chain(L, J=J)
    coms = coms_from_chain(jc).operators
    Hxxx = chain_mod.build_h_xxx(p).to_dense()
    report = {"L": L, "delta": delta, "per_n": []}
    for n in range(1, L + 2):
        v = jc.vectors[n - 1]
        sv = S @ v
        lam = np.vdot(v, sv) / np.vdot(v, v)
        eig_res = float(np.linalg.norm(sv - lam * v) / np.linalg.norm(sv))
        measured_exp = float(np.log(np.real(lam)) / np.log(d)) if d != 1 else None
        C = coms[n - 1]
        scale = d ** ((n - 1 - L) / 2)
        scaling_res = float(np.linalg.norm(S.conj().T @ C @ S - scale * C)
                            / np.linalg.norm(scale * C))
        C_aux = d ** ((L - n + 1) / 2) * C
        comm = C_aux @ Hxxx - Hxxx @ C_aux
        comm_res = float(np.linalg.norm(comm)
                         / max(np.linalg.norm(C_aux), 1e-300))
        report["per_n"].append({
            "n": n,
            "eigenvector_residual": eig_res,
            "similarity_eigenvalue_exponent": measured_exp,
            "scaling_residual": scaling_res,
            "xxx_commutator_residual": comm_res,
        })
    report["max_residual"] = max(
        max(e["eigenvector_residual"], e["scaling_residual"],
            e["xxx_commutator_residual"]) for e in report["per_n"])
    return report


def divergence_obstruction_check(L: int, deltas) -> dict:
    """Show that the total z-magnetization, though conserved by the
    isotropic chain, has no regularizable exceptional-point limit: its
    similarity image carries diagonal entries with different powers of
    d = delta/(2-delta), so no scalar rescaling gives a finite nonzero
    limit; and it is not conserved by the chain at the exceptional point."""
    deltas = list(deltas)
    if not all(0 < d < 1 for d in deltas):
        raise ValueError("deltas must lie in (0, 1)")
    if not all(b < a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")

    Mz = OperatorExpr.zero(L)
    for i in range(1, L + 1):
        Mz = Mz + OperatorExpr.from_site_factors(L, {i: SiteOp.Z},
                                                 Coeff(mpq(1, 2)))
    p0 = SpinChainParams(L=L, delta=0.0)
    commutes_with_xxx = conservation_residual(
        chain_mod.build_h_xxx(p0), Mz).is_zero()
    ep_residual_nonzero = not conservation_residual(
        chain_mod.build_h_nhs(p0), Mz).is_zero()

    Mz_dense = Mz.to_dense()
    ratios = []
    per_delta = []
    for delta in deltas:
        S = chain_mod.build_similarity(
            SpinChainParams(L=L, delta=delta)).to_dense()
        img = np.real(np.diag(S.conj().T @ Mz_dense @ S))
        nz = np.abs(img[np.abs(img) > 1e-300])
        ratio = float(nz.max() / nz.min()) if nz.size else 0.0
        ratios.append(ratio)
        per_delta.append({"delta": delta, "magnitude_ratio": ratio})

    # per-entry scaling exponents in d = delta/(2-delta) from the last pair
    d_pair = [x / (2 - x) for x in deltas[-2:]]
    S_pair = [chain_mod.build_similarity(
        SpinChainParams(L=L, delta=x)).to_dense() for x in deltas[-2:]]
    diag_pair = [np.real(np.diag(S.conj().T @ Mz_dense @ S)) for S in S_pair]
    exponents = []
    for a, b in zip(diag_pair[0], diag_pair[1]):
        if abs(a) > 1e-300 and abs(b) > 1e-300:
            exponents.append(round(math.log(abs(b) / abs(a))
                                   / math.log(d_pair[1] / d_pair[0]), 6))
    negative_powers = sorted({e for e in exponents if e < 0})

    # ratio grows like a negative power of d: log-log slope clearly below 0
    log_d = [math.log(x / (2 - x)) for x in deltas]
    slope = float(np.polyfit(log_d, np.log(ratios), 1)[0])
    ratio_diverges = all(b > a for a, b in zip(ratios, ratios[1:])) \
        and slope < -0.5
    return {
        "L": L,
        "commutes_with_xxx": commutes_with_xxx,
        "ep_residual_nonzero": ep_residual_nonzero,
        "per_delta": per_delta,
        "scaling_exponents": sorted(set(exponents)),
        "distinct_negative_powers": negative_powers,
        "ratio_diverges": ratio_diverges,
        "passed": bool(commutes_with_xxx and ep_residual_nonzero
                       and ratio_diverges),
    }
