"""Boundary frames for self-adjoint point perturbations.

A perturbation supported on N points is encoded by a pair of complex N x N
matrices (C, S) whose stacked columns span a Lagrangian subspace of the
boundary-value space.  Concretely the pair must satisfy

    C* C + S* S = Id      and      C* S = S* C.

Two frames describe the same perturbation exactly when they differ by a
unitary right factor.  The unperturbed operator corresponds to (Id, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrameValidationError

FRAME_TOL = 1e-10


@dataclass(frozen=True)
class LagrangianFrame:
    C: np.ndarray
    S: np.ndarray

    @property
    def N(self):
        return self.C.shape[0]

    @property
    def is_real(self):
        return bool(np.all(self.C.imag == 0.0) and np.all(self.S.imag == 0.0))

    def stacked(self):
        return np.vstack([self.C, self.S])


def frame_residuals(C, S):
    """Frobenius norms of the two Lagrangian defect matrices."""
    eye = np.eye(C.shape[0])
    ortho = np.linalg.norm(C.conj().T @ C + S.conj().T @ S - eye)
    commute = np.linalg.norm(C.conj().T @ S - S.conj().T @ C)
    return ortho, commute


def validate_frame(C, S, tol=FRAME_TOL):
    C = np.asarray(C, dtype=complex)
    S = np.asarray(S, dtype=complex)
    if C.ndim != 2 or C.shape != S.shape or C.shape[0] != C.shape[1]:
        raise ValueError(f"expected two square matrices of equal size, got {C.shape} and {S.shape}")
    ortho, commute = frame_residuals(C, S)
    if ortho > tol or commute > tol:
        raise FrameValidationError(ortho, commute, tol)
    return LagrangianFrame(C, S)


def trivial_frame(N):
    """The unperturbed operator: boundary condition 'no delta coupling'."""
    return LagrangianFrame(np.eye(N, dtype=complex), np.zeros((N, N), dtype=complex))


def isotropic_frame(theta, N=1):
    """(cos(theta) Id, sin(theta) Id): the same scalar coupling at every point."""
    c, s = np.cos(theta), np.sin(theta)
    return LagrangianFrame(c * np.eye(N, dtype=complex), s * np.eye(N, dtype=complex))


def frame_from_hermitian(A):
    """Frame with invertible S and coupling-strength matrix C S^{-1} = A.

    For Hermitian A the columns of [A; Id] span a Lagrangian subspace; the
    orthonormalizing right factor (A^2 + Id)^{-1/2} turns them into a frame.
    """
    A = np.asarray(A, dtype=complex)
    herm_defect = np.linalg.norm(A - A.conj().T)
    if herm_defect > FRAME_TOL * max(1.0, np.linalg.norm(A)):
        raise ValueError(f"coupling matrix must be Hermitian (defect {herm_defect:.2e})")
    w, V = np.linalg.eigh(A)
    inv_half = V @ np.diag(1.0 / np.sqrt(w * w + 1.0)) @ V.conj().T
    return validate_frame(A @ inv_half, inv_half)


def rotate_frame(frame, U):
    """Right-multiply by a unitary: an equivalent frame for the same perturbation."""
    U = np.asarray(U, dtype=complex)
    if np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0])) > 1e-9:
        raise ValueError("rotation factor is not unitary")
    return LagrangianFrame(frame.C @ U, frame.S @ U)


def frames_equivalent(f1, f2, tol=1e-8):
    """Do the two frames span the same Lagrangian subspace?

    The only candidate unitary with [C1; S1] = [C2; S2] U is
    U = C2* C1 + S2* S1 (using the frame identity); the frames are
    equivalent iff that U is unitary and actually reproduces frame 1.
    """
    if f1.N != f2.N:
        return False
    U = f2.C.conj().T @ f1.C + f2.S.conj().T @ f1.S
    eye = np.eye(f1.N)
    if np.linalg.norm(U.conj().T @ U - eye) > tol:
        return False
    resid = np.linalg.norm(f2.C @ U - f1.C) + np.linalg.norm(f2.S @ U - f1.S)
    return bool(resid <= tol * max(1.0, np.linalg.norm(f1.stacked())))


def random_unitary(rng, N):
    Z = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_frame(rng, N, real=False):
    """Varied valid frames: angle spectra (singular S included) in a random basis.

    C = V cos(Theta) V* W and S = V sin(Theta) V* W for unitary V, W and a
    diagonal angle matrix Theta; with probability ~1/4 some angles are pinned
    to 0 or pi/2 so that degenerate C or S blocks show up in tests too.
    """
    thetas = rng.uniform(0.0, np.pi, size=N)
    pin = rng.random(N)
    thetas[pin < 0.15] = 0.0
    thetas[pin > 0.9] = 0.5 * np.pi
    if real:
        V = np.linalg.qr(rng.normal(size=(N, N)))[0].astype(complex)
        W = np.linalg.qr(rng.normal(size=(N, N)))[0].astype(complex)
    else:
        V = random_unitary(rng, N)
        W = random_unitary(rng, N)
    Cd = V @ np.diag(np.cos(thetas)).astype(complex) @ V.conj().T
    Sd = V @ np.diag(np.sin(thetas)).astype(complex) @ V.conj().T
    return validate_frame(Cd @ W, Sd @ W)
