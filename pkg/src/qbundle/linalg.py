"""Dense complex linear algebra used throughout the package.

States are 1-d complex arrays and operators are square 2-d complex arrays.
Nothing here mutates its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionTooLarge, DimMismatch, NonFinite, ZeroState

MAX_DIM = 64

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"i": SIGMA_I, "x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


@dataclass(frozen=True)
class Tolerance:
    """Absolute/relative tolerance pair.

    A value ``r`` is accepted against a reference magnitude ``scale`` when
    ``r <= abs + rel * scale``.
    """

    abs: float = 1e-5
    rel: float = 0.0

    def __post_init__(self):
        if self.abs < 0 or self.rel < 0:
            raise ValueError("tolerances must be non-negative")
        if self.abs + self.rel <= 0:
            raise ValueError("abs + rel must be positive")

    def bound(self, scale: float = 1.0) -> float:
        return self.abs + self.rel * scale

    def accepts(self, value: float, scale: float = 1.0) -> bool:
        return bool(value <= self.bound(scale))


def _check_dim(n: int) -> None:
    if n < 1:
        raise DimMismatch("dimension must be at least 1")
    if n > MAX_DIM:
        raise DimensionTooLarge(f"dimension {n} exceeds the supported maximum {MAX_DIM}")


def as_state(psi, dim: int | None = None) -> np.ndarray:
    """Validate and convert ``psi`` to a complex state vector."""
    v = np.asarray(psi, dtype=complex)
    if v.ndim != 1:
        raise DimMismatch(f"state must be one-dimensional, got shape {v.shape}")
    _check_dim(v.shape[0])
    if dim is not None and v.shape[0] != dim:
        raise DimMismatch(f"state has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise NonFinite("state has non-finite components")
    return v


def as_operator(a, dim: int | None = None) -> np.ndarray:
    """Validate and convert ``a`` to a square complex matrix."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimMismatch(f"operator must be square, got shape {m.shape}")
    _check_dim(m.shape[0])
    if dim is not None and m.shape[0] != dim:
        raise DimMismatch(f"operator has dimension {m.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(m)):
        raise NonFinite("operator has non-finite entries")
    return m


def pauli_string(label: str) -> np.ndarray:
    """Kronecker product of Pauli matrices, e.g. ``"zx"`` -> Z (x) X."""
    out = np.ones((1, 1), dtype=complex)
    for ch in label.lower():
        try:
            out = np.kron(out, PAULI[ch])
        except KeyError:
            raise ValueError(f"unknown Pauli label {ch!r} in {label!r}") from None
    return out


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def norm(a) -> float:
    """Frobenius norm for operators, Euclidean norm for vectors."""
    return float(np.linalg.norm(a))


def is_hermitian(a: np.ndarray, atol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= atol * max(1.0, norm(a)))


def unitarity_defect(u: np.ndarray) -> float:
    """``||U^dag U - I||_F``."""
    return norm(dagger(u) @ u - np.eye(u.shape[-1]))


def inner(phi, psi) -> complex:
    """``<phi|psi>``, antilinear in the first slot."""
    return complex(np.vdot(phi, psi))


def mean_value(a, psi):
    """Normalized expectation value ``<psi|A psi> / <psi|psi>``.

    Returns a float when ``a`` is Hermitian (to 1e-10) and the complex ratio
    otherwise.
    """
    v = as_state(psi)
    m = as_operator(a, dim=v.shape[0])
    den = np.vdot(v, v).real
    if den == 0.0:
        raise ZeroState("mean value requested for the zero vector")
    val = np.vdot(v, m @ v) / den
    if is_hermitian(m):
        return float(val.real)
    return complex(val)


def commutator(a, b) -> np.ndarray:
    """``[A, B] = AB - BA``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimMismatch(f"commutator of shapes {a.shape} and {b.shape}")
    return a @ b - b @ a


def polar_unitary(m: np.ndarray) -> np.ndarray:
    """Closest unitary to ``m`` in Frobenius norm (unitary polar factor)."""
    w, _, vh = np.linalg.svd(m)
    return w @ vh


def central_difference(f: Callable[[float], np.ndarray], t: float, h: float) -> np.ndarray:
    return (np.asarray(f(t + h)) - np.asarray(f(t - h))) / (2.0 * h)


# Pade(13) scaling and squaring, Higham (2005).
_THETA_13 = 5.371920351148152
_B13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)


def matrix_exponential(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a [13/13] Pade approximant.

    Accepts a single square matrix or a stack of them with shape
    ``(..., n, n)``; each matrix in a stack gets its own scaling power.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimMismatch(f"matrix_exponential needs square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix_exponential of non-finite input")
    n = a.shape[-1]
    _check_dim(n)
    single = a.ndim == 2
    stack = a.reshape((-1, n, n))

    norms = np.abs(stack).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        s = np.where(norms > _THETA_13, np.ceil(np.log2(norms / _THETA_13)), 0).astype(int)
    s = np.maximum(s, 0)
    x = stack / (2.0 ** s)[:, None, None]

    b = _B13
    ident = np.broadcast_to(np.eye(n, dtype=complex), x.shape)
    x2 = x @ x
    x4 = x2 @ x2
    x6 = x4 @ x2
    u = x @ (
        x6 @ (b[13] * x6 + b[11] * x4 + b[9] * x2)
        + b[7] * x6 + b[5] * x4 + b[3] * x2 + b[1] * ident
    )
    v = (
        x6 @ (b[12] * x6 + b[10] * x4 + b[8] * x2)
        + b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * ident
    )
    r = np.linalg.solve(v - u, v + u)

    for k in range(int(s.max(initial=0))):
        mask = s > k
        r[mask] = r[mask] @ r[mask]
    r[norms == 0] = np.eye(n)

    return r[0] if single else r.reshape(a.shape)
