"""Finite Fourier-mode expansions on flat tori.

Modes are plane waves phi_k(x) = e^{i k.x} / (2 pi)^{d/2}, k in Z^d, an
orthonormal family.  These expansions feed the resolvent identities and the
phase-space (quantization) diagnostics; sphere data never takes this form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass
class ModeExpansion:
    ks: np.ndarray       # (M, d) integer wavevectors
    coeffs: np.ndarray   # (M,) complex

    def __post_init__(self):
        self.ks = np.atleast_2d(np.asarray(self.ks, dtype=np.int64))
        self.coeffs = np.asarray(self.coeffs, dtype=complex).ravel()
        if len(self.ks) != len(self.coeffs):
            raise ValueError("one coefficient per wavevector required")

    @classmethod
    def from_pairs(cls, pairs, d):
        """Build from (k, c) pairs, summing coefficients on repeated k."""
        seen = {}
        for k, c in pairs:
            k = tuple(int(x) for x in k)
            if len(k) != d:
                raise ValueError(f"wavevector {k} has wrong dimension")
            seen[k] = seen.get(k, 0.0) + complex(c)
        ks = np.array(sorted(seen), dtype=np.int64).reshape(-1, d)
        return cls(ks, np.array([seen[tuple(k)] for k in ks]))

    @property
    def d(self):
        return self.ks.shape[1]

    def lam_sq(self):
        return np.sum(self.ks * self.ks, axis=1).astype(np.float64)

    def norm_sq(self):
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def normalized(self):
        n = np.sqrt(self.norm_sq())
        if n == 0.0:
            raise ValueError("cannot normalize the zero expansion")
        return ModeExpansion(self.ks, self.coeffs / n)

    def evaluate(self, points):
        """Pointwise values; points is (d,) or (P, d)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        phases = pts @ self.ks.T.astype(float)          # (P, M)
        vals = np.exp(1j * phases) @ self.coeffs / TWO_PI ** (self.d / 2.0)
        return vals if np.asarray(points).ndim > 1 else vals[0]

    def apply_helmholtz(self, eta):
        """(Delta - eta) u, exact on the span of the modes."""
        return ModeExpansion(self.ks, (self.lam_sq() - eta) * self.coeffs)

    def inner(self, other):
        """<self, other>, antilinear in self; expansions may differ in support."""
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        idx = {tuple(k): i for i, k in enumerate(self.ks)}
        total = 0.0 + 0.0j
        for k, c in zip(other.ks, other.coeffs):
            i = idx.get(tuple(k))
            if i is not None:
                total += np.conj(self.coeffs[i]) * c
        return complex(total)


def green_mode_coefficients(Q, beta, eta, ks):
    """Fourier coefficients of sum_q beta_q G_eta^q at the given wavevectors.

    G_eta^q has coefficient e^{-i k.q} / ((2 pi)^{d/2} (|k|^2 - eta)) at mode k.
    """
    ks = np.atleast_2d(np.asarray(ks, dtype=float))
    Qa = np.atleast_2d(np.asarray(Q, dtype=float))
    beta = np.asarray(beta, dtype=complex).ravel()
    d = ks.shape[1]
    lam_sq = np.sum(ks * ks, axis=1)
    if np.any(np.abs(lam_sq - eta) < 1e-12):
        raise ZeroDivisionError(f"eta={eta!r} sits on a requested mode's eigenvalue")
    phases = np.exp(-1j * (ks @ Qa.T))                # (M, N)
    return (phases @ beta) / (lam_sq - eta) / TWO_PI ** (d / 2.0)
