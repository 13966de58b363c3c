"""Pictures of motion: Heisenberg, general V-picture and interaction picture.

Every quantity exists in a Hilbert-space form and in a bundle form; the
bundle forms live in the fibre over the anchor time and are measured with
the fibre metric there, so residuals of both descriptions are comparable
number for number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bundle import BundleAtlas, EvolutionTransport, MorphismField, fibre_operator_norm
from .errors import BoundaryTime
from .linalg import as_operator, as_state, central_difference, commutator, dagger, norm
from .propagation import (
    DEFAULT_FD_STEP,
    HamiltonianFamily,
    IntegratorConfig,
    Propagator,
)

NORMALIZATION_TOL = 1e-10


def as_family(A, dim: int | None = None) -> HamiltonianFamily:
    """Coerce a matrix, callable, or family into a :class:`HamiltonianFamily`."""
    if isinstance(A, HamiltonianFamily):
        return A
    if callable(A):
        probe = np.asarray(A(0.0))
        return HamiltonianFamily(A, probe.shape[0])
    return HamiltonianFamily.constant(as_operator(A, dim))


@dataclass(frozen=True)
class UnitaryFamily:
    """Unitary ``V(t1, t)`` for fixed anchor ``t1`` as a function of ``t``.

    The anchor normalization ``V(t1, t1) = 1`` is checked at construction.
    """

    anchor: float
    eval: Callable[[float], np.ndarray]
    dim: int
    derivative: Callable[[float], np.ndarray] | None = None
    fd_step: float = DEFAULT_FD_STEP

    def __post_init__(self):
        v = np.asarray(self.eval(self.anchor), dtype=complex)
        if norm(v - np.eye(self.dim)) > NORMALIZATION_TOL:
            raise ValueError("unitary family must satisfy V(t1, t1) = identity")

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.eval(t), dtype=complex)

    def inverse(self, t: float) -> np.ndarray:
        return dagger(self(t))

    def d(self, t: float) -> np.ndarray:
        if self.derivative is not None:
            return np.asarray(self.derivative(t), dtype=complex)
        return central_difference(self, t, self.fd_step)

    @classmethod
    def identity(cls, dim: int, anchor: float = 0.0) -> "UnitaryFamily":
        eye = np.eye(dim, dtype=complex)
        eye.setflags(write=False)
        zero = np.zeros((dim, dim), dtype=complex)
        zero.setflags(write=False)
        return cls(anchor, lambda t: eye, dim, lambda t: zero)

    @classmethod
    def from_propagator(cls, U: Propagator, anchor: float,
                        fd_step: float = DEFAULT_FD_STEP) -> "UnitaryFamily":
        """``V(t1, t) = U(t1, t)``, the family that produces the Heisenberg picture."""
        return cls(anchor, lambda t: U(anchor, t), U.dim, None, fd_step)

    def bundle(self, atlas: BundleAtlas, t: float) -> np.ndarray:
        """``V_gamma(t1, t) = l^{-1}(t1) V(t1, t) l(t)``."""
        return atlas.l_inv(self.anchor) @ self(t) @ atlas.l(t)

    def bundle_inverse(self, atlas: BundleAtlas, t: float) -> np.ndarray:
        return atlas.l_inv(t) @ self.inverse(t) @ atlas.l(self.anchor)


# Heisenberg picture ---------------------------------------------------------

def to_heisenberg_observable(U: Propagator, A, t: float, t0: float) -> np.ndarray:
    """``A_t^H(t0) = U(t0, t) A(t) U(t, t0)``."""
    a = as_operator(A(t) if callable(A) else A, U.dim)
    return U(t0, t) @ a @ U(t, t0)


def heisenberg_morphism(T: EvolutionTransport, F: MorphismField, t: float, t0: float) -> np.ndarray:
    """Bundle Heisenberg morphism ``U_gamma(t0, t) A_gamma(t) U_gamma(t, t0)``."""
    a = F(t)
    if t == t0:
        return a
    return T(t0, t) @ a @ T(t, t0)


def heisenberg_state(psi_traj: Callable[[float], np.ndarray], t0: float) -> np.ndarray:
    return as_state(psi_traj(t0)).copy()


def heisenberg_hamiltonian(U: Propagator, H: HamiltonianFamily, t: float, t0: float) -> np.ndarray:
    """``H_t^H(t0) = U^{-1}(t, t0) H(t) U(t, t0)``."""
    return to_heisenberg_observable(U, H, t, t0)


def heisenberg_propagator(U: Propagator, t: float, t0: float) -> np.ndarray:
    """Evolution operator of the Heisenberg picture, ``U(t0,t) U(t,t0)``.

    It is the identity; the product is still formed so the identity is a
    checked consequence and not an assumption.
    """
    return v_propagator(UnitaryFamily.from_propagator(U, t0), U, t, t0)


def _require(U: Propagator, t: float, h: float):
    if t - h < U.t_start - 1e-12 or t + h > U.t_end + 1e-12:
        raise BoundaryTime(f"stencil [{t - h}, {t + h}] leaves [{U.t_start}, {U.t_end}]")


def heisenberg_eom_residual(U: Propagator, H: HamiltonianFamily, A, t: float, t0: float,
                            h: float = DEFAULT_FD_STEP) -> float:
    """``||i hbar dA^H/dt - [A^H, H^H] - i hbar (dA/dt)^H||`` by central differences."""
    _require(U, t, h)
    fam = as_family(A, U.dim)
    hbar = U.hbar
    d_ah = central_difference(lambda s: to_heisenberg_observable(U, fam, s, t0), t, h)
    a_h = to_heisenberg_observable(U, fam, t, t0)
    h_h = heisenberg_hamiltonian(U, H, t, t0)
    da_h = to_heisenberg_observable(U, fam.derivative(t, h), t, t0)
    return norm(1j * hbar * d_ah - commutator(a_h, h_h) - 1j * hbar * da_h)


def bundle_heisenberg_eom_residual(T: EvolutionTransport, H: HamiltonianFamily, A, t: float,
                                   t0: float, h: float = DEFAULT_FD_STEP) -> float:
    """Bundle form of the Heisenberg equation, measured with the metric at ``gamma(t0)``.

    Every morphism is taken in the fibre over ``t0`` as
    ``l^{-1}(t0) X^H l(t0)`` with ``X^H`` obtained through the transport.
    """
    _require(T.base_propagator, t, h)
    atlas = T.atlas
    fam = as_family(A, T.dim)
    hbar = T.hbar

    def morph(family_value, s):
        return T(t0, s) @ (atlas.l_inv(s) @ family_value @ atlas.l(s)) @ T(s, t0)

    d_ah = (morph(fam(t + h), t + h) - morph(fam(t - h), t - h)) / (2.0 * h)
    a_h = morph(fam(t), t)
    h_h = morph(H(t), t)
    da_h = morph(fam.derivative(t, h), t)
    r = 1j * hbar * d_ah - commutator(a_h, h_h) - 1j * hbar * da_h
    return fibre_operator_norm(atlas, t0, r)


# V-picture ------------------------------------------------------------------

def to_v_picture(V: UnitaryFamily, psi, A, t: float):
    """``(V(t1,t) psi, V(t1,t) A V^{-1}(t1,t))``."""
    v = V(t)
    psi = as_state(psi, V.dim)
    a = as_operator(A, V.dim)
    return v @ psi, v @ a @ V.inverse(t)


def to_bundle_v_picture(V: UnitaryFamily, atlas: BundleAtlas, Psi, A_gamma, t: float):
    """Bundle V-picture pair in the fibre over the anchor."""
    vg = V.bundle(atlas, t)
    return vg @ as_state(Psi, V.dim), vg @ as_operator(A_gamma, V.dim) @ V.bundle_inverse(atlas, t)


def v_hamiltonians(V: UnitaryFamily, H: HamiltonianFamily, t: float):
    """Transformed Hamiltonian, V-generator, and modified Hamiltonian.

    Returns
    -------
    h_v : ndarray
        ``V H V^{-1}``.
    gen_v : ndarray
        ``-i hbar dV/dt V^{-1}``.
    h_mod_v : ndarray
        ``h_v - gen_v``, the generator of the V-picture state.
    """
    v, vinv = V(t), V.inverse(t)
    h_v = v @ H(t) @ vinv
    gen_v = -1j * H.hbar * V.d(t) @ vinv
    return h_v, gen_v, h_v - gen_v


def v_propagator(V: UnitaryFamily, U: Propagator, t: float, t0: float) -> np.ndarray:
    """``U^V(t, t1, t0) = V(t1, t) U(t, t0) V^{-1}(t1, t0)``."""
    return V(t) @ U(t, t0) @ V.inverse(t0)


def bundle_v_propagator(V: UnitaryFamily, T: EvolutionTransport, t: float, t0: float) -> np.ndarray:
    """``V_gamma(t1, t) U_gamma(t, t0) V_gamma^{-1}(t1, t0)``."""
    return V.bundle(T.atlas, t) @ T(t, t0) @ V.bundle_inverse(T.atlas, t0)


def v_propagator_residual(V: UnitaryFamily, H: HamiltonianFamily, U: Propagator, t: float,
                          t0: float, h: float = DEFAULT_FD_STEP) -> float:
    """``||i hbar dU^V/dt - H~^V U^V||``."""
    _require(U, t, h)
    d_uv = central_difference(lambda s: v_propagator(V, U, s, t0), t, h)
    _, _, h_mod = v_hamiltonians(V, H, t)
    return norm(1j * H.hbar * d_uv - h_mod @ v_propagator(V, U, t, t0))


def v_eom_residuals(V: UnitaryFamily, H: HamiltonianFamily, psi_traj, A, t: float,
                    h: float = DEFAULT_FD_STEP):
    """State and observable equation-of-motion residuals in the V-picture.

    Returns ``(state_residual, observable_residual)`` where the state
    residual is ``||i hbar dpsi^V/dt - H~^V psi^V||`` and the observable
    residual ``||i hbar dA^V/dt - [A^V, gen^V] - i hbar (dA/dt)^V||``.
    """
    fam = as_family(A, V.dim)
    hbar = H.hbar

    def psi_v(s):
        return V(s) @ as_state(psi_traj(s), V.dim)

    def a_v(s):
        return V(s) @ fam(s) @ V.inverse(s)

    _, gen_v, h_mod = v_hamiltonians(V, H, t)
    state_res = norm(1j * hbar * central_difference(psi_v, t, h) - h_mod @ psi_v(t))
    av = a_v(t)
    da_v = V(t) @ fam.derivative(t, h) @ V.inverse(t)
    obs_res = norm(1j * hbar * central_difference(a_v, t, h) - commutator(av, gen_v)
                   - 1j * hbar * da_v)
    return state_res, obs_res


def bundle_v_eom_residuals(V: UnitaryFamily, atlas: BundleAtlas, H: HamiltonianFamily, psi_traj,
                           A, t: float, h: float = DEFAULT_FD_STEP):
    """Bundle V-picture residuals computed from fibre quantities only.

    States and morphisms are built with ``V_gamma`` from the lifted section
    and morphism field; the residuals are measured in the fibre metric at
    the anchor.
    """
    fam = as_family(A, V.dim)
    hbar = H.hbar
    t1 = V.anchor
    li1, l1 = atlas.l_inv(t1), atlas.l(t1)

    def lift_op(m, s):
        return atlas.l_inv(s) @ m @ atlas.l(s)

    def psi_v(s):
        return V.bundle(atlas, s) @ np.linalg.solve(atlas.l(s), as_state(psi_traj(s), V.dim))

    def a_v(s):
        return V.bundle(atlas, s) @ lift_op(fam(s), s) @ V.bundle_inverse(atlas, s)

    _, gen_v, h_mod = v_hamiltonians(V, H, t)
    h_mod_g = li1 @ h_mod @ l1
    gen_g = li1 @ gen_v @ l1
    pv = psi_v(t)
    r_state = 1j * hbar * central_difference(psi_v, t, h) - h_mod_g @ pv
    state_res = norm(l1 @ r_state)
    av = a_v(t)
    da_v = V.bundle(atlas, t) @ lift_op(fam.derivative(t, h), t) @ V.bundle_inverse(atlas, t)
    r_obs = 1j * hbar * central_difference(a_v, t, h) - commutator(av, gen_g) - 1j * hbar * da_v
    return state_res, fibre_operator_norm(atlas, t1, r_obs)


# Interaction picture --------------------------------------------------------

@dataclass(frozen=True)
class InteractionPicture:
    """Free, interaction-picture, and full propagators on one time window."""

    free: Propagator
    interaction: Propagator
    full: Propagator
    anchor: float
    free_hamiltonian: HamiltonianFamily
    interaction_hamiltonian: HamiltonianFamily

    @property
    def V(self) -> UnitaryFamily:
        """``V(t0, t) = U0(t0, t)``, the family realizing this picture."""
        return UnitaryFamily.from_propagator(self.free, self.anchor)

    def transformed_interaction(self, t: float) -> np.ndarray:
        """``U0(t0, t) H_I(t) U0(t, t0)``."""
        return self.free(self.anchor, t) @ self.interaction_hamiltonian(t) @ self.free(t, self.anchor)


def interaction_picture(H0: HamiltonianFamily, H_I: HamiltonianFamily, t_start: float,
                        t_end: float, anchor: float | None = None,
                        cfg: IntegratorConfig | None = None) -> InteractionPicture:
    if H0.dim != H_I.dim:
        raise ValueError("free and interaction Hamiltonians differ in dimension")
    anchor = t_start if anchor is None else anchor
    u0 = Propagator(H0, t_start, t_end, cfg)

    def h_int(t):
        return u0(anchor, t) @ H_I(t) @ u0(t, anchor)

    fam = HamiltonianFamily(h_int, H0.dim, hbar=H0.hbar)
    ui = Propagator(fam, t_start, t_end, cfg)
    ufull = Propagator(H0 + H_I, t_start, t_end, cfg)
    return InteractionPicture(u0, ui, ufull, anchor, H0, H_I)


def interaction_split(H0: HamiltonianFamily, H_I: HamiltonianFamily, t: float, t0: float,
                      cfg: IntegratorConfig | None = None):
    """``(U0(t,t0), U_I(t,t0), U(t,t0))``; ``U = U0 U_I`` up to integrator error."""
    if t == t0:
        eye = np.eye(H0.dim, dtype=complex)
        return eye, eye.copy(), eye.copy()
    ip = interaction_picture(H0, H_I, min(t, t0), max(t, t0), anchor=t0, cfg=cfg)
    return ip.free(t, t0), ip.interaction(t, t0), ip.full(t, t0)


def interaction_eom_residuals(ip: InteractionPicture, psi_traj, A, t: float,
                              h: float = DEFAULT_FD_STEP):
    """Interaction-picture state and observable residuals.

    The state is driven by the transformed interaction Hamiltonian; the
    observable rotates with the free Hamiltonian.
    """
    _require(ip.free, t, h)
    V = ip.V
    fam = as_family(A, V.dim)
    hbar = ip.free.hbar

    def psi_i(s):
        return V(s) @ as_state(psi_traj(s), V.dim)

    def a_i(s):
        return V(s) @ fam(s) @ V.inverse(s)

    h_int = ip.transformed_interaction(t)
    state_res = norm(1j * hbar * central_difference(psi_i, t, h) - h_int @ psi_i(t))
    h0_i = V(t) @ ip.free_hamiltonian(t) @ V.inverse(t)
    da_i = V(t) @ fam.derivative(t, h) @ V.inverse(t)
    ai = a_i(t)
    obs_res = norm(1j * hbar * central_difference(a_i, t, h) - commutator(ai, h0_i)
                   - 1j * hbar * da_i)
    return state_res, obs_res
