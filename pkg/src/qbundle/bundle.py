"""Hilbert-bundle geometry along an observer's world line.

The fibre over ``gamma(t)`` is a copy of C^n identified with the typical
Hilbert space by an invertible trivialization ``l(t)``. Fibre vectors and
fibre endomorphisms are stored in their own coordinates; the fibre inner
product is pulled back through the trivialization,
``<Phi|Psi>_t = <l(t) Phi | l(t) Psi>``.

Matrices "in a frame" use a field of bases ``E(t)`` whose columns are the
frame vectors written in fibre coordinates. The identity frame is the
working frame of every operation that does not take one explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import BoundaryTime, DimMismatch, SingularSeed, SingularTrivialization, ZeroState
from .linalg import as_operator, as_state, central_difference, dagger, norm, unitarity_defect
from .propagation import DEFAULT_FD_STEP, HamiltonianFamily, Propagator

ATLAS_KINDS = ("identity", "unitary-field", "invertible-field")

MAX_TRIV_COND = 1e6
_MEMO_LIMIT = 4096


@dataclass(frozen=True)
class ObserverPath:
    """World line parameterized by its own time coordinate on ``[t_min, t_max]``.

    Using ``t`` itself as the base coordinate makes the path injective, so
    sections along it are single valued.
    """

    t_min: float
    t_max: float
    label: str = "gamma"

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValueError("observer path interval must be non-degenerate")

    def contains(self, t: float, slack: float = 1e-12) -> bool:
        return self.t_min - slack <= t <= self.t_max + slack


@dataclass(frozen=True)
class BundleAtlas:
    path: ObserverPath
    triv: Callable[[float], np.ndarray]
    dim: int
    kind: str = "invertible-field"
    triv_derivative: Callable[[float], np.ndarray] | None = None
    _memo: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ATLAS_KINDS:
            raise ValueError(f"unknown atlas kind {self.kind!r}")

    def _cached(self, key, make):
        # l(t) and its inverse are requested at the same few times over and over
        hit = self._memo.get(key)
        if hit is None:
            if len(self._memo) >= _MEMO_LIMIT:
                self._memo.clear()
            hit = make()
            hit.setflags(write=False)
            self._memo[key] = hit
        return hit

    @classmethod
    def identity(cls, path: ObserverPath, dim: int) -> "BundleAtlas":
        eye = np.eye(dim, dtype=complex)
        eye.setflags(write=False)
        zero = np.zeros((dim, dim), dtype=complex)
        zero.setflags(write=False)
        return cls(path, lambda t: eye, dim, "identity", lambda t: zero)

    def l(self, t: float) -> np.ndarray:
        t = float(t)
        return self._cached(("l", t), lambda: np.array(as_operator(self.triv(t), self.dim)))

    def l_inv(self, t: float) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(self.dim, dtype=complex)
        t = float(t)
        return self._cached(("inv", t), lambda: self._invert(t))

    def _invert(self, t: float) -> np.ndarray:
        m = self.l(t)
        if self.kind == "unitary-field":
            return np.array(dagger(m))
        if np.linalg.cond(m) > MAX_TRIV_COND:
            raise SingularTrivialization(f"trivialization ill-conditioned at t={t}")
        return np.linalg.inv(m)

    def l_derivative(self, t: float, h: float = DEFAULT_FD_STEP) -> np.ndarray:
        if self.triv_derivative is not None:
            return np.asarray(self.triv_derivative(t), dtype=complex)
        return central_difference(self.l, t, h)

    def metric(self, t: float) -> np.ndarray:
        """Gram matrix ``l(t)^dag l(t)`` of the fibre inner product."""
        m = self.l(t)
        return dagger(m) @ m

    def validate(self, t_samples: Iterable[float]) -> None:
        """Check the invariants of the atlas kind at the given times."""
        for t in t_samples:
            m = self.l(t)
            cond = np.linalg.cond(m)
            if not np.isfinite(cond) or cond > MAX_TRIV_COND:
                raise SingularTrivialization(f"condition number {cond:.3e} at t={t}")
            if self.kind == "unitary-field" and unitarity_defect(m) > 1e-10:
                raise SingularTrivialization(f"unitary-field atlas not unitary at t={t}")
            if self.kind == "identity" and norm(m - np.eye(self.dim)) != 0.0:
                raise SingularTrivialization("identity atlas must return the identity")


def fibre_inner(atlas: BundleAtlas, t: float, phi, psi) -> complex:
    l = atlas.l(t)
    return complex(np.vdot(l @ phi, l @ psi))


def fibre_vector_norm(atlas: BundleAtlas, t: float, v) -> float:
    return norm(atlas.l(t) @ v)


def fibre_operator_norm(atlas: BundleAtlas, t: float, m) -> float:
    """Frobenius norm of a fibre endomorphism after pushing it to the Hilbert space."""
    return norm(atlas.l(t) @ m @ atlas.l_inv(t))


def fibre_adjoint(atlas: BundleAtlas, m, t: float, s: float) -> np.ndarray:
    """Metric adjoint of a map from the fibre at ``s`` to the fibre at ``t``.

    The result maps the fibre at ``t`` back to the fibre at ``s`` and is
    characterized by ``<m^+ Phi | Psi>_s = <Phi | m Psi>_t``.
    """
    return np.linalg.solve(atlas.metric(s), dagger(np.asarray(m)) @ atlas.metric(t))


@dataclass(frozen=True)
class StateSection:
    atlas: BundleAtlas
    values: Callable[[float], np.ndarray]

    def __call__(self, t: float) -> np.ndarray:
        return as_state(self.values(t), self.atlas.dim)


@dataclass(frozen=True)
class MorphismField:
    """Time family of fibre endomorphisms ``A_gamma(t)``.

    ``derivative`` is the coordinate derivative ``dA_gamma/dt``; without it
    central differences of ``values`` are used.
    """

    atlas: BundleAtlas
    values: Callable[[float], np.ndarray]
    source_observable: HamiltonianFamily | None = None
    derivative: Callable[[float], np.ndarray] | None = None

    def __call__(self, t: float) -> np.ndarray:
        return as_operator(self.values(t), self.atlas.dim)

    def d(self, t: float, h: float = DEFAULT_FD_STEP) -> np.ndarray:
        if self.derivative is not None:
            return np.asarray(self.derivative(t), dtype=complex)
        return central_difference(self, t, h)

    def hilbert(self, t: float) -> np.ndarray:
        """The Hilbert-space operator ``l(t) A_gamma(t) l^{-1}(t)``."""
        return self.atlas.l(t) @ self(t) @ self.atlas.l_inv(t)


class EvolutionTransport:
    """Fibre-to-fibre evolution ``U_gamma(t, s) = l^{-1}(t) U(t, s) l(s)``."""

    def __init__(self, atlas: BundleAtlas, base_propagator: Propagator):
        if atlas.dim != base_propagator.dim:
            raise DimMismatch("atlas and propagator dimensions differ")
        self.atlas = atlas
        self.base_propagator = base_propagator
        self.dim = atlas.dim
        self.hbar = base_propagator.hbar
        self.t_start = max(atlas.path.t_min, base_propagator.t_start)
        self.t_end = min(atlas.path.t_max, base_propagator.t_end)

    def __call__(self, t: float, s: float) -> np.ndarray:
        if t == s:
            self.base_propagator._check_time(t)
            return np.eye(self.dim, dtype=complex)
        return self.atlas.l_inv(t) @ self.base_propagator(t, s) @ self.atlas.l(s)

    def require_interior(self, t: float, h: float) -> None:
        if t - h < self.t_start - 1e-12 or t + h > self.t_end + 1e-12:
            raise BoundaryTime(
                f"stencil [{t - h}, {t + h}] leaves the transport window "
                f"[{self.t_start}, {self.t_end}]"
            )


@dataclass(frozen=True)
class FrameField:
    """Field of bases with its connection coefficients and matrix Hamiltonian.

    ``gamma(t)`` is the matrix of transport coefficients in this frame and
    ``hm(t) = -i hbar gamma(t)`` the matrix-bundle Hamiltonian.
    """

    atlas: BundleAtlas
    basis: Callable[[float], np.ndarray]
    gamma: Callable[[float], np.ndarray]
    hm: Callable[[float], np.ndarray]

    def matrix_of(self, m, t: float) -> np.ndarray:
        """Matrix of a fibre endomorphism at ``t`` in this frame."""
        e = self.basis(t)
        return np.linalg.solve(e, np.asarray(m) @ e)

    def components(self, v, t: float) -> np.ndarray:
        return np.linalg.solve(self.basis(t), np.asarray(v))


def lift_state(atlas: BundleAtlas, psi_traj: Callable[[float], np.ndarray]) -> StateSection:
    """Section ``Psi_gamma(t) = l^{-1}(t) psi(t)``."""

    def values(t):
        if atlas.kind == "identity":
            return as_state(psi_traj(t), atlas.dim)
        l = atlas.l(t)
        if np.linalg.cond(l) > MAX_TRIV_COND:
            raise SingularTrivialization(f"trivialization ill-conditioned at t={t}")
        return np.linalg.solve(l, as_state(psi_traj(t), atlas.dim))

    return StateSection(atlas, values)


def evolution_transport(atlas: BundleAtlas, U: Propagator, t: float, s: float) -> np.ndarray:
    return EvolutionTransport(atlas, U)(t, s)


def transport_state(T: EvolutionTransport, section_value, s: float, t: float) -> np.ndarray:
    """Carry a fibre vector from ``gamma(s)`` to ``gamma(t)``."""
    v = as_state(section_value, T.dim)
    if t == s:
        return v
    return T(t, s) @ v


def lift_observable(atlas: BundleAtlas, A_traj) -> MorphismField:
    """Morphism field ``A_gamma(t) = l^{-1}(t) A(t) l(t)``.

    ``A_traj`` may be a constant matrix, a callable, or a
    :class:`HamiltonianFamily`; for a family with an analytic derivative and
    an atlas with an analytic trivialization derivative the coordinate
    derivative of the field is assembled analytically.
    """
    if not callable(A_traj):
        fixed = as_operator(A_traj, atlas.dim)
        A_traj = HamiltonianFamily.constant(fixed)
    family = A_traj if isinstance(A_traj, HamiltonianFamily) else None

    def values(t):
        return atlas.l_inv(t) @ as_operator(A_traj(t), atlas.dim) @ atlas.l(t)

    derivative = None
    if family is not None and atlas.triv_derivative is not None and (
        family.time_derivative is not None or family.kind == "constant"
    ):

        def derivative(t):
            l, li, dl = atlas.l(t), atlas.l_inv(t), atlas.l_derivative(t)
            a = family(t)
            g = li @ dl
            return -g @ li @ a @ l + li @ family.derivative(t) @ l + li @ a @ l @ g

    return MorphismField(atlas, values, family, derivative)


def fibre_mean_value(F: MorphismField, S: StateSection, t: float):
    """Mean of ``A_gamma(t)`` in ``Psi_gamma(t)`` under the fibre metric."""
    psi = S(t)
    g = F.atlas.metric(t)
    den = np.vdot(psi, g @ psi).real
    if den == 0.0:
        raise ZeroState(f"state section vanishes at t={t}")
    val = np.vdot(psi, g @ (F(t) @ psi)) / den
    a_h = F.hilbert(t)
    if np.allclose(a_h, dagger(a_h), atol=1e-10 * max(1.0, norm(a_h))):
        return float(val.real)
    return complex(val)


def transport_matrix(T: EvolutionTransport, t: float, s: float, basis=None) -> np.ndarray:
    """Matrix ``E(t)^{-1} U_gamma(t, s) E(s)`` of the transport in a frame."""
    u = T(t, s)
    if basis is None:
        return u
    return np.linalg.solve(basis(t), u @ basis(s))


def connection_coefficients(T: EvolutionTransport, t: float, h: float = DEFAULT_FD_STEP,
                            basis: Callable[[float], np.ndarray] | None = None):
    """Connection coefficients and matrix-bundle Hamiltonian at ``t``.

    ``Gamma(t) = d/ds [matrix of U_gamma(t, s)] at s = t`` by central
    differences, and ``H^m = -i hbar Gamma``.

    Returns
    -------
    gamma, hm : ndarray
    """
    T.require_interior(t, h)
    up = transport_matrix(T, t, t + h, basis)
    dn = transport_matrix(T, t, t - h, basis)
    gamma = (up - dn) / (2.0 * h)
    return gamma, -1j * T.hbar * gamma


def frame_field(T: EvolutionTransport, basis: Callable[[float], np.ndarray] | None = None,
                h: float = DEFAULT_FD_STEP) -> FrameField:
    """Frame with lazily differenced connection coefficients.

    ``basis=None`` is the identity (working) frame.
    """
    if basis is None:
        eye = np.eye(T.dim, dtype=complex)

        def basis(t):
            return eye

        coeff_basis = None
    else:
        coeff_basis = basis

    def gamma(t):
        return connection_coefficients(T, t, h, coeff_basis)[0]

    def hm(t):
        return connection_coefficients(T, t, h, coeff_basis)[1]

    return FrameField(T.atlas, basis, gamma, hm)


def normal_frame(T: EvolutionTransport, t0: float, seed_basis=None,
                 h: float = DEFAULT_FD_STEP) -> FrameField:
    """Frame ``E(t) = U_gamma(t, t0) E(t0)`` in which the transport matrix is 1."""
    seed = np.eye(T.dim, dtype=complex) if seed_basis is None else as_operator(seed_basis, T.dim)
    cond = np.linalg.cond(seed)
    if not np.isfinite(cond) or cond > MAX_TRIV_COND:
        raise SingularSeed(f"seed basis is singular (condition number {cond:.3e})")

    def basis(t):
        return T(t, t0) @ seed

    return frame_field(T, basis, h)


def section_derivation_residual(T: EvolutionTransport, S: StateSection,
                                t_samples: Iterable[float], h: float = DEFAULT_FD_STEP) -> float:
    """Max of ``||i hbar dPsi/dt - H^m Psi|| / max(1, ||Psi||)`` in the working frame."""
    worst = 0.0
    for t in t_samples:
        _, hm = connection_coefficients(T, t, h)
        psi = S(t)
        dpsi = central_difference(S, t, h)
        r = norm(1j * T.hbar * dpsi - hm @ psi) / max(1.0, norm(psi))
        worst = max(worst, r)
    return worst


def morphism_derivation(T: EvolutionTransport, F: MorphismField, t: float,
                        h: float = DEFAULT_FD_STEP, frame: FrameField | None = None) -> np.ndarray:
    """Matrix of the induced derivation ``-[A^m, Gamma] + dA^m/dt`` at ``t``.

    With ``frame=None`` the working frame is used and the result is a fibre
    endomorphism at ``gamma(t)``; otherwise it is the matrix in ``frame``.
    """
    T.require_interior(t, h)
    if frame is None:
        gamma, _ = connection_coefficients(T, t, h)
        a = F(t)
        da = F.d(t, h)
    else:
        gamma = frame.gamma(t)
        a = frame.matrix_of(F(t), t)
        da = (frame.matrix_of(F(t + h), t + h) - frame.matrix_of(F(t - h), t - h)) / (2.0 * h)
    return da - (a @ gamma - gamma @ a)


# The derivation of morphisms written as dC/dt + [Gamma, C] is the same map.
tilde_derivation = morphism_derivation


def morphism_derivation_limit(T: EvolutionTransport, F: MorphismField, t: float,
                              eps: float) -> np.ndarray:
    """Difference quotient ``(U(t,t+eps) A(t+eps) U(t+eps,t) - A(t)) / eps``."""
    moved = transport_morphism(T, F(t + eps), t + eps, t)
    return (moved - F(t)) / eps


def transport_morphism(T: EvolutionTransport, A_at_s, s: float, t: float) -> np.ndarray:
    """Induced transport ``U_gamma(t, s) A U_gamma(s, t)`` of a fibre endomorphism."""
    a = as_operator(A_at_s, T.dim)
    if t == s:
        return a
    return T(t, s) @ a @ T(s, t)
