"""Rational transfer-function arithmetic for small MIMO models.

Polynomials are stored as ascending coefficient arrays (numpy.polynomial
convention). Only what the inverse-controller derivation and the
controllability toolkit need: evaluation at s = j*omega, 2x2 inversion,
determinants, scaling, and root-based simplification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly


def _trim(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    return npoly.polytrim(coeffs, tol=0.0)


@dataclass(frozen=True)
class Rational:
    """Ratio of two real polynomials in s, num/den, ascending coefficients."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "num", _trim(self.num))
        object.__setattr__(self, "den", _trim(self.den))
        if np.allclose(self.den, 0.0):
            raise ZeroDivisionError("rational function with zero denominator")

    @classmethod
    def constant(cls, value: float) -> "Rational":
        return cls(np.array([float(value)]), np.array([1.0]))

    @classmethod
    def from_roots(cls, gain: float, zeros: list[float], poles: list[float]) -> "Rational":
        return cls(gain * npoly.polyfromroots(zeros), npoly.polyfromroots(poles))

    def __add__(self, other: "Rational") -> "Rational":
        # Shared denominators (common for entries of one transfer matrix) stay
        # shared; cross-multiplying would manufacture repeated roots that the
        # numerical simplifier then splits.
        if np.array_equal(self.den, other.den):
            return Rational(npoly.polyadd(self.num, other.num), self.den)
        num = npoly.polyadd(npoly.polymul(self.num, other.den),
                            npoly.polymul(other.num, self.den))
        return Rational(num, npoly.polymul(self.den, other.den))

    def __sub__(self, other: "Rational") -> "Rational":
        return self + (-other)

    def __mul__(self, other) -> "Rational":
        if isinstance(other, (int, float)):
            return Rational(self.num * float(other), self.den)
        return Rational(npoly.polymul(self.num, other.num),
                        npoly.polymul(self.den, other.den))

    __rmul__ = __mul__

    def __truediv__(self, other: "Rational") -> "Rational":
        return Rational(npoly.polymul(self.num, other.den),
                        npoly.polymul(self.den, other.num))

    def __neg__(self) -> "Rational":
        return Rational(-self.num, self.den)

    def is_zero(self) -> bool:
        return bool(np.allclose(self.num, 0.0))

    def __call__(self, s: complex) -> complex:
        return complex(npoly.polyval(s, self.num) / npoly.polyval(s, self.den))

    def simplified(self, tol: float = 1e-6) -> "Rational":
        """Cancel matching numerator/denominator roots; make the denominator monic.

        The match tolerance is relative and loose enough to survive the root
        splitting that numerical root finders show on repeated roots. Cancelled
        factors are divided out of the original coefficient arrays (rather than
        rebuilding from the surviving roots) to keep the result accurate.
        """
        if self.is_zero():
            return Rational(np.array([0.0]), np.array([1.0]))
        den_gain = self.den[-1]
        num_roots = list(npoly.polyroots(self.num)) if len(self.num) > 1 else []
        den_roots = list(npoly.polyroots(self.den)) if len(self.den) > 1 else []
        cancel_num, cancel_den = [], []
        for root in list(num_roots):
            scale = max(1.0, abs(root))
            match = next((p for p in den_roots if abs(p - root) < tol * scale), None)
            if match is not None:
                num_roots.remove(root)
                den_roots.remove(match)
                cancel_num.append(root)
                cancel_den.append(match)
        num, den = self.num / den_gain, self.den / den_gain
        if cancel_num:
            # Divide each side by the factor built from its own computed roots;
            # synthetic division at a polynomial's own root is near-exact.
            new_num, rem_num = npoly.polydiv(num, npoly.polyfromroots(cancel_num))
            new_den, rem_den = npoly.polydiv(den, npoly.polyfromroots(cancel_den))
            exact = (np.max(np.abs(rem_num)) <= 1e-6 * max(1.0, np.max(np.abs(num)))
                     and np.max(np.abs(rem_den)) <= 1e-6 * max(1.0, np.max(np.abs(den))))
            if exact:
                num, den = new_num, new_den
        num = np.real_if_close(num, tol=1e6)
        den = np.real_if_close(den, tol=1e6)
        return Rational(np.real(num), np.real(den))

    def poles(self) -> np.ndarray:
        simplified = self.simplified()
        if len(simplified.den) <= 1:
            return np.array([])
        return npoly.polyroots(simplified.den)

    def __str__(self) -> str:
        return f"({_poly_str(self.num)}) / ({_poly_str(self.den)})"


def _poly_str(coeffs: np.ndarray) -> str:
    terms = []
    for power in range(len(coeffs) - 1, -1, -1):
        coef = coeffs[power]
        if coef == 0 and len(coeffs) > 1:
            continue
        if power == 0:
            terms.append(f"{coef:g}")
        elif power == 1:
            terms.append(f"{coef:g}*s" if coef != 1 else "s")
        else:
            terms.append(f"{coef:g}*s^{power}" if coef != 1 else f"s^{power}")
    return " + ".join(terms).replace("+ -", "- ") or "0"


class RationalMatrix:
    """Dense matrix of Rational entries."""

    def __init__(self, entries):
        self.entries = [[e if isinstance(e, Rational) else Rational.constant(e)
                         for e in row] for row in entries]
        self.rows = len(self.entries)
        self.cols = len(self.entries[0]) if self.rows else 0

    def __getitem__(self, idx) -> Rational:
        i, j = idx
        return self.entries[i][j]

    def evaluate(self, s: complex) -> np.ndarray:
        return np.array([[entry(s) for entry in row] for row in self.entries])

    def at_omega(self, omega: float) -> np.ndarray:
        """Frequency response G(j omega)."""
        return self.evaluate(1j * omega)

    def determinant(self) -> Rational:
        if self.rows != self.cols:
            raise ValueError("determinant of a non-square rational matrix")
        if self.rows == 1:
            return self[0, 0]
        if self.rows == 2:
            return self[0, 0] * self[1, 1] - self[0, 1] * self[1, 0]
        raise NotImplementedError("determinant implemented for sizes 1 and 2 only")

    def inverse(self) -> "RationalMatrix":
        """Inverse as a rational matrix (2x2 via the adjugate)."""
        det = self.determinant().simplified()
        if det.is_zero():
            raise ZeroDivisionError("rational matrix is structurally singular")
        if self.rows == 1:
            return RationalMatrix([[Rational.constant(1.0) / self[0, 0]]])
        adj = [[self[1, 1], -self[0, 1]],
               [-self[1, 0], self[0, 0]]]
        return RationalMatrix([[(entry / det).simplified() for entry in row] for row in adj])

    def __matmul__(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.cols != other.rows:
            raise ValueError("rational matrix dimension mismatch")
        out = []
        for i in range(self.rows):
            row = []
            for j in range(other.cols):
                acc = Rational.constant(0.0)
                for k in range(self.cols):
                    acc = acc + self[i, k] * other[k, j]
                row.append(acc.simplified())
            out.append(row)
        return RationalMatrix(out)

    def scale(self, row_factors, col_factors) -> "RationalMatrix":
        """Entrywise row_factors[i] * G[i, j] * col_factors[j]."""
        return RationalMatrix([
            [self[i, j] * (row_factors[i] * col_factors[j]) for j in range(self.cols)]
            for i in range(self.rows)
        ])

    def simplified(self) -> "RationalMatrix":
        return RationalMatrix([[e.simplified() for e in row] for row in self.entries])

    def pole_set(self) -> np.ndarray:
        """Union of entry poles (duplicates collapsed)."""
        poles: list[complex] = []
        for row in self.entries:
            for entry in row:
                for p in entry.poles():
                    if not any(abs(p - q) < 1e-7 * max(1.0, abs(q)) for q in poles):
                        poles.append(complex(p))
        return np.array(poles)

    def __str__(self) -> str:
        return "\n".join("[" + ",  ".join(str(e) for e in row) + "]" for row in self.entries)


def transfer_matrix(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> RationalMatrix:
    """G(s) = C (sI - A)^-1 B via the Faddeev-LeVerrier resolvent expansion."""
    a = np.asarray(a, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n = a.shape[0]
    # char(s) = s^n + alpha_1 s^(n-1) + ...; resolvent numerator matrices N_k.
    coeffs = [1.0]
    n_mats = [np.eye(n)]
    m = np.eye(n)
    for k in range(1, n + 1):
        m = a @ m
        alpha = -np.trace(m) / k
        coeffs.append(alpha)
        m = m + alpha * np.eye(n)
        if k < n:
            n_mats.append(m.copy())
    char_poly = np.array(coeffs[::-1])  # ascending
    entries = []
    for i in range(c.shape[0]):
        row = []
        for j in range(b.shape[1]):
            # numerator(s) = sum_k (C N_k B)_ij s^(n-1-k)
            num = np.zeros(n)
            for k, nk in enumerate(n_mats):
                num[n - 1 - k] = c[i] @ nk @ b[:, j]
            row.append(Rational(num, char_poly).simplified())
        entries.append(row)
    return RationalMatrix(entries)
