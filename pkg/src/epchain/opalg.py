"""Exact operator algebra over tensor products of single-site spin operators.

Operators are stored as linear combinations of Pauli strings (letters I, X,
Y, Z per site) with exact complex-rational coefficients, so that identities
like "this commutator-type residual vanishes" can be decided exactly.  Dense
matrices and matrix-free state application are derived from the same data.

Basis convention (shared by every module): site 1 is the most significant
bit of the basis index, |up> maps to bit 0 and |down> to bit 1.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from enum import Enum

import numpy as np
from gmpy2 import mpq

PAULI_LETTERS = "IXYZ"

#: largest site count for which dense 2^L x 2^L materialization is allowed
DENSE_SITE_CAP = 10


class Coeff:
    """Exact complex number with rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = mpq(re)
        self.im = mpq(im)

    @staticmethod
    def from_number(z) -> "Coeff":
        if isinstance(z, Coeff):
            return z
        if isinstance(z, complex):
            return Coeff(mpq(z.real), mpq(z.imag))
        return Coeff(mpq(z))

    def __add__(self, other: "Coeff") -> "Coeff":
        return Coeff(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "Coeff") -> "Coeff":
        return Coeff(self.re - other.re, self.im - other.im)

    def __neg__(self) -> "Coeff":
        return Coeff(-self.re, -self.im)

    def __mul__(self, other: "Coeff") -> "Coeff":
        a, b, c, d = self.re, self.im, other.re, other.im
        return Coeff(a * c - b * d, a * d + b * c)

    def conj(self) -> "Coeff":
        return Coeff(self.re, -self.im)

    def times_i_pow(self, p: int) -> "Coeff":
        """Multiply by i**p (p taken mod 4) without general multiplication."""
        p &= 3
        if p == 0:
            return self
        if p == 1:
            return Coeff(-self.im, self.re)
        if p == 2:
            return Coeff(-self.re, -self.im)
        return Coeff(self.im, -self.re)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, Coeff):
            other = Coeff.from_number(other)
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self) -> complex:
        return float(self.re) + 1j * float(self.im)

    def __repr__(self):
        return f"Coeff({self.re}, {self.im})"


ZERO = Coeff(0)
ONE = Coeff(1)
HALF = Coeff(mpq(1, 2))
I_UNIT = Coeff(0, 1)


class SiteOp(Enum):
    """Single-site operators; each expands exactly over {I, X, Y, Z}."""

    I = "I"
    X = "X"
    Y = "Y"
    Z = "Z"
    Plus = "+"        # sigma^x + i sigma^y
    Minus = "-"       # sigma^x - i sigma^y
    ProjDown = "Pd"   # |down><down| = (I - Z)/2
    ProjUp = "Pu"     # |up><up|   = (I + Z)/2


_SITE_EXPANSION = {
    SiteOp.I: {"I": ONE},
    SiteOp.X: {"X": ONE},
    SiteOp.Y: {"Y": ONE},
    SiteOp.Z: {"Z": ONE},
    SiteOp.Plus: {"X": ONE, "Y": I_UNIT},
    SiteOp.Minus: {"X": ONE, "Y": Coeff(0, -1)},
    SiteOp.ProjDown: {"I": HALF, "Z": Coeff(mpq(-1, 2))},
    SiteOp.ProjUp: {"I": HALF, "Z": HALF},
}

# Pauli multiplication table: (a, b) -> (p, letter) with a*b = i**p * letter.
_PAULI_PROD = {}
for _a in PAULI_LETTERS:
    _PAULI_PROD[("I", _a)] = (0, _a)
    _PAULI_PROD[(_a, "I")] = (0, _a)
    _PAULI_PROD[(_a, _a)] = (0, "I")
_PAULI_PROD[("X", "Y")] = (1, "Z")
_PAULI_PROD[("Y", "X")] = (3, "Z")
_PAULI_PROD[("Y", "Z")] = (1, "X")
_PAULI_PROD[("Z", "Y")] = (3, "X")
_PAULI_PROD[("Z", "X")] = (1, "Y")
_PAULI_PROD[("X", "Z")] = (3, "Y")

_I_POW = (1 + 0j, 1j, -1 + 0j, -1j)


def pauli_product(a: str, b: str) -> tuple[Coeff, str]:
    """Exact product of two Pauli letters, a*b = phase * letter."""
    p, letter = _PAULI_PROD[(a, b)]
    return ONE.times_i_pow(p), letter


def site_mask(i: int, length: int) -> int:
    """Bit mask of site i (1-based, site 1 = most significant bit)."""
    if not 1 <= i <= length:
        raise ValueError(f"site {i} out of range 1..{length}")
    return 1 << (length - i)


class OperatorExpr:
    """Canonical weighted sum of length-L Pauli strings, exact coefficients.

    Instances are immutable once constructed; all arithmetic returns new
    objects, so sharing across threads is safe.
    """

    __slots__ = ("length", "terms", "_compiled")

    def __init__(self, length: int, terms: dict[str, Coeff] | None = None):
        if length < 1:
            raise ValueError("length must be >= 1")
        self.length = length
        clean = {}
        if terms:
            for s, c in terms.items():
                if len(s) != length or any(ch not in PAULI_LETTERS for ch in s):
                    raise ValueError(f"bad Pauli string {s!r} for L={length}")
                if not c.is_zero():
                    clean[s] = c
        self.terms = clean
        self._compiled = None

    # ---- constructors -------------------------------------------------

    @classmethod
    def zero(cls, length: int) -> "OperatorExpr":
        return cls(length)

    @classmethod
    def identity(cls, length: int) -> "OperatorExpr":
        return cls(length, {"I" * length: ONE})

    @classmethod
    def from_site_factors(cls, length: int, factors: dict[int, SiteOp],
                          coeff=1) -> "OperatorExpr":
        """Tensor product of single-site operators (1-based site -> op),
        identity on unlisted sites, scaled by coeff."""
        strings = {"": Coeff.from_number(coeff)}
        for i in range(1, length + 1):
            op = factors.get(i, SiteOp.I)
            expansion = _SITE_EXPANSION[op]
            nxt = {}
            for s, c in strings.items():
                for letter, w in expansion.items():
                    cw = c * w
                    key = s + letter
                    acc = nxt.get(key)
                    nxt[key] = cw if acc is None else acc + cw
            strings = nxt
        return cls(length, strings)

    # ---- linear structure ---------------------------------------------

    def _check_length(self, other: "OperatorExpr"):
        if self.length != other.length:
            raise ValueError(
                f"length mismatch: {self.length} vs {other.length}")

    def __add__(self, other: "OperatorExpr") -> "OperatorExpr":
        self._check_length(other)
        terms = dict(self.terms)
        for s, c in other.terms.items():
            acc = terms.get(s)
            terms[s] = c if acc is None else acc + c
        return OperatorExpr(self.length, terms)

    def __sub__(self, other: "OperatorExpr") -> "OperatorExpr":
        self._check_length(other)
        terms = dict(self.terms)
        for s, c in other.terms.items():
            acc = terms.get(s)
            terms[s] = -c if acc is None else acc - c
        return OperatorExpr(self.length, terms)

    def scaled(self, factor) -> "OperatorExpr":
        f = Coeff.from_number(factor)
        return OperatorExpr(self.length,
                            {s: c * f for s, c in self.terms.items()})

    def __mul__(self, factor):
        return self.scaled(factor)

    __rmul__ = __mul__

    def __neg__(self) -> "OperatorExpr":
        return OperatorExpr(self.length,
                            {s: -c for s, c in self.terms.items()})

    # ---- products and adjoints -----------------------------------------

    def __matmul__(self, other: "OperatorExpr") -> "OperatorExpr":
        """Exact operator product in canonical form."""
        self._check_length(other)
        out: dict[str, Coeff] = {}
        for s1, c1 in self.terms.items():
            for s2, c2 in other.terms.items():
                p = 0
                letters = []
                for a, b in zip(s1, s2):
                    dp, letter = _PAULI_PROD[(a, b)]
                    p += dp
                    letters.append(letter)
                key = "".join(letters)
                c = (c1 * c2).times_i_pow(p)
                acc = out.get(key)
                out[key] = c if acc is None else acc + c
        return OperatorExpr(self.length, out)

    def adjoint(self) -> "OperatorExpr":
        return OperatorExpr(self.length,
                            {s: c.conj() for s, c in self.terms.items()})

    def is_zero(self) -> bool:
        return not self.terms

    def is_hermitian(self) -> bool:
        return all(c.im == 0 for c in self.terms.values())

    def __eq__(self, other) -> bool:
        return (isinstance(other, OperatorExpr)
                and self.length == other.length and self.terms == other.terms)

    def __hash__(self):
        return hash((self.length, frozenset(self.terms.items())))

    def n_terms(self) -> int:
        return len(self.terms)

    # ---- numeric conversion --------------------------------------------

    def _common_denominator(self) -> int:
        """Largest-safe common denominator D such that every coefficient
        times D is an exactly double-representable Gaussian integer.

        Factoring D out before compiling keeps the numeric coefficient data
        exact, which matters when expectation values of slowly varying
        observables are taken in states whose norm has grown by many orders
        of magnitude (rounding a coefficient like 1/240 would otherwise be
        amplified by the squared norm).  Returns 1 when no such D exists
        (e.g. coefficients derived from irrational couplings).
        """
        if not self.terms:
            return 1
        D = 1
        for c in self.terms.values():
            D = math.lcm(D, int(c.re.denominator), int(c.im.denominator))
            if D > 1 << 40:
                return 1
        for c in self.terms.values():
            if abs(int(c.re.numerator) * (D // int(c.re.denominator))) >= 1 << 52:
                return 1
            if abs(int(c.im.numerator) * (D // int(c.im.denominator))) >= 1 << 52:
                return 1
        return D

    def _groups(self):
        """Compiled numeric form: (scale, [(xmask, diag), ...]) with diag[i]
        the column-i coefficient of the group, to be multiplied by scale."""
        if self._compiled is not None:
            return self._compiled
        dim = 1 << self.length
        idx = np.arange(dim, dtype=np.uint64)
        D = self._common_denominator()
        by_mask: dict[int, list] = {}
        for s, c in self.terms.items():
            if D != 1:
                c = Coeff(c.re * D, c.im * D)
            xmask = zymask = 0
            ny = 0
            for k, letter in enumerate(s):
                bit = 1 << (self.length - 1 - k)
                if letter == "X":
                    xmask |= bit
                elif letter == "Y":
                    xmask |= bit
                    zymask |= bit
                    ny += 1
                elif letter == "Z":
                    zymask |= bit
            by_mask.setdefault(xmask, []).append((complex(c), zymask, ny))
        groups = []
        for xmask, entries in by_mask.items():
            diag = np.zeros(dim, dtype=np.complex128)
            for c, zymask, ny in entries:
                if zymask:
                    parity = np.bitwise_count(idx & np.uint64(zymask)) & 1
                    sign = 1.0 - 2.0 * parity
                else:
                    sign = 1.0
                diag += (c * _I_POW[ny & 3]) * sign
            groups.append((xmask, diag))
        self._compiled = (1.0 / D, groups)
        return self._compiled

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Matrix-free action on a state vector (no site-count cap)."""
        dim = 1 << self.length
        if v.shape != (dim,):
            raise ValueError(f"state has shape {v.shape}, expected ({dim},)")
        out = np.zeros(dim, dtype=np.complex128)
        idx = np.arange(dim)
        scale, groups = self._groups()
        for xmask, diag in groups:
            if xmask == 0:
                out += diag * v
            else:
                out[idx ^ xmask] += diag * v
        if scale != 1.0:
            out *= scale
        return out

    def to_dense(self, dense_cap: int = DENSE_SITE_CAP) -> np.ndarray:
        if self.length > dense_cap:
            raise ValueError(
                f"dense materialization refused for L={self.length} "
                f"(cap {dense_cap})")
        dim = 1 << self.length
        idx = np.arange(dim)
        mat = np.zeros((dim, dim), dtype=np.complex128)
        scale, groups = self._groups()
        for xmask, diag in groups:
            mat[idx ^ xmask, idx] += diag
        if scale != 1.0:
            mat *= scale
        return mat

    # ---- serialization --------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "L": self.length,
            "terms": [
                {"string": s, "re": str(c.re), "im": str(c.im)}
                for s, c in sorted(self.terms.items())
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "OperatorExpr":
        terms = {
            t["string"]: Coeff(mpq(t["re"]), mpq(t["im"]))
            for t in data["terms"]
        }
        return cls(int(data["L"]), terms)

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def loads(cls, text: str) -> "OperatorExpr":
        return cls.from_json_dict(json.loads(text))

    def __repr__(self):
        if not self.terms:
            return f"OperatorExpr(L={self.length}, 0)"
        parts = [f"({complex(c):.4g})*{s}"
                 for s, c in sorted(self.terms.items())[:4]]
        more = "" if len(self.terms) <= 4 else f" ... [{len(self.terms)} terms]"
        return f"OperatorExpr(L={self.length}, {' + '.join(parts)}{more})"


def conservation_residual(H: OperatorExpr, O: OperatorExpr) -> OperatorExpr:
    """Exact H^dagger O - O H; the zero expression iff O is conserved."""
    return (H.adjoint() @ O) - (O @ H)


def write_atomic(path: str, text: str):
    """Write a text file atomically (temp file + rename)."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
