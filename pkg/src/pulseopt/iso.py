"""Real embedding of complex matrices and vectors.

A d x d complex matrix A is represented by the 2d x 2d real matrix
[[Re A, -Im A], [Im A, Re A]]; a complex vector by (Re, Im) stacking.
Matrix products, transposes and norms carry over, so the whole gate
synthesis problem can be driven with real-valued linear algebra.  The
optimizer state is the flat length-2d^2 vector holding all real parts
(row-major) followed by all imaginary parts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BlockStructureViolation, DimensionMismatch

__all__ = [
    "IsoMatrix",
    "IsoVector",
    "embed_matrix",
    "extract_matrix",
    "embed_vector",
    "extract_vector",
    "vectorize_unitary",
    "devectorize_unitary",
    "apply_propagator_to_state",
]


def _read_only(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IsoMatrix:
    """2d x 2d real image of a d x d complex matrix."""

    dim: int
    mat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mat", _read_only(self.mat))
        if self.dim < 1 or self.mat.shape != (2 * self.dim, 2 * self.dim):
            raise DimensionMismatch(
                f"expected shape {(2 * self.dim, 2 * self.dim)}, got {self.mat.shape}"
            )


@dataclass(frozen=True)
class IsoVector:
    """Length-2d real image of a d-dimensional complex vector."""

    dim: int
    vec: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vec", _read_only(self.vec))
        if self.dim < 1 or self.vec.shape != (2 * self.dim,):
            raise DimensionMismatch(
                f"expected shape {(2 * self.dim,)}, got {self.vec.shape}"
            )


def embed_matrix(a) -> IsoMatrix:
    """Embed a complex d x d matrix as its [[Re, -Im], [Im, Re]] real image."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return IsoMatrix(a.shape[0], _embed(a))


def _embed(a: np.ndarray) -> np.ndarray:
    re, im = a.real, a.imag
    return np.block([[re, -im], [im, re]])


def extract_matrix(m, tol: float = 1e-12) -> np.ndarray:
    """Invert :func:`embed_matrix`.

    Raises BlockStructureViolation when the block symmetry is broken by
    more than ``tol`` (max-abs), which indicates corruption upstream.
    """
    arr = m.mat if isinstance(m, IsoMatrix) else np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2:
        raise DimensionMismatch(f"expected an even square matrix, got shape {arr.shape}")
    d = arr.shape[0] // 2
    re1, re2 = arr[:d, :d], arr[d:, d:]
    im1, im2 = arr[d:, :d], arr[:d, d:]
    err = max(np.max(np.abs(re1 - re2)), np.max(np.abs(im1 + im2)))
    if err > tol:
        raise BlockStructureViolation(
            f"block symmetry violated by {err:.3e} (tolerance {tol:.1e})"
        )
    return 0.5 * (re1 + re2) + 0.5j * (im1 - im2)


def embed_vector(psi) -> IsoVector:
    """Embed a complex vector as its (Re, Im) stacked real image."""
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {psi.shape}")
    return IsoVector(psi.shape[0], np.concatenate([psi.real, psi.imag]))


def extract_vector(v) -> np.ndarray:
    arr = v.vec if isinstance(v, IsoVector) else np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] % 2:
        raise DimensionMismatch(f"expected an even-length vector, got shape {arr.shape}")
    d = arr.shape[0] // 2
    return arr[:d] + 1j * arr[d:]


def vectorize_unitary(u) -> np.ndarray:
    """Flatten a complex matrix to the optimizer state layout.

    All real parts come first, then all imaginary parts, each block
    row-major.  The result has length 2d^2.
    """
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {u.shape}")
    return np.concatenate([u.real.ravel(), u.imag.ravel()])


def devectorize_unitary(x, dim: int) -> np.ndarray:
    """Inverse of :func:`vectorize_unitary` for a known dimension."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (2 * dim * dim,):
        raise DimensionMismatch(f"expected length {2 * dim * dim}, got shape {x.shape}")
    halves = x.reshape(2, dim, dim)
    return halves[0] + 1j * halves[1]


def apply_propagator_to_state(p, x) -> np.ndarray:
    """Left-multiply the matrix encoded by ``x`` by the embedded propagator ``p``.

    Works column-wise on the stacked (Re, Im) representation; no complex
    product is materialized.
    """
    if isinstance(p, IsoMatrix):
        d, mat = p.dim, p.mat
    else:
        mat = np.asarray(p, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] % 2:
            raise DimensionMismatch(f"expected an even square matrix, got shape {mat.shape}")
        d = mat.shape[0] // 2
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (2 * d * d,):
        raise DimensionMismatch(
            f"state length {x.shape} does not match propagator dimension {d}"
        )
    return _apply(mat, x, d)


def _apply(mat: np.ndarray, x: np.ndarray, d: int) -> np.ndarray:
    # x reshaped to 2d x d is the first block-column of the embedded matrix.
    return (mat @ x.reshape(2 * d, d)).ravel()
