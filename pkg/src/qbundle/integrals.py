"""Integral-of-motion certificates and the Lax-pair form of the criterion.

Five residuals are computed for one observable; each one vanishes exactly
when the observable is an integral of motion:

* spread of mean values over a spanning set of states,
* generalized commutation with the evolution operator,
* the Lax equation ``dA^m/dt = [A^m, Gamma]`` in a frame,
* the induced derivation of the morphism field,
* constancy of the Heisenberg-picture operator.

Operator residuals are divided by ``max(1, max_t ||A(t)||)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .bundle import (
    EvolutionTransport,
    FrameField,
    MorphismField,
    fibre_operator_norm,
    frame_field,
    morphism_derivation,
)
from .errors import DimMismatch, InsufficientStates, SingularGauge
from .generators import spanning_states
from .linalg import Tolerance, as_state, central_difference, mean_value, norm
from .pictures import as_family
from .propagation import DEFAULT_FD_STEP, Propagator

DEFAULT_TOL = Tolerance(1e-5, 0.0)


@dataclass(frozen=True)
class IntegralVerdict:
    mean_constancy_residual: float
    commutation_residual: float
    lax_residual: float
    derivation_residual: float
    heisenberg_constancy_residual: float
    is_integral: bool
    tol: Tolerance = field(default_factory=lambda: DEFAULT_TOL)

    def residuals(self) -> dict[str, float]:
        return {
            "mean_constancy": self.mean_constancy_residual,
            "commutation": self.commutation_residual,
            "lax": self.lax_residual,
            "derivation": self.derivation_residual,
            "heisenberg_constancy": self.heisenberg_constancy_residual,
        }

    @property
    def max_residual(self) -> float:
        return max(self.residuals().values())

    @property
    def unanimous(self) -> bool:
        """True when all criteria pass or all of them fail."""
        flags = [self.tol.accepts(r) for r in self.residuals().values()]
        return all(flags) or not any(flags)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["tol"] = {"abs": self.tol.abs, "rel": self.tol.rel}
        return d


def _scale(values: Iterable[np.ndarray]) -> float:
    return max(1.0, max((norm(v) for v in values), default=0.0))


def mean_constancy_residual(U: Propagator, A, states: Sequence, t_samples: Iterable[float],
                            t0: float) -> float:
    """Max over states and samples of ``|<A(t)>_psi(t) - <A(t0)>_psi(t0)|``.

    ``states`` are initial vectors at ``t0`` and must span the space.
    """
    fam = as_family(A, U.dim)
    vs = [as_state(s, U.dim) for s in states]
    if len(vs) < U.dim or np.linalg.matrix_rank(np.stack(vs, axis=1)) < U.dim:
        raise InsufficientStates("mean-value criterion needs a spanning set of states")
    a0 = fam(t0)
    worst = 0.0
    for t in t_samples:
        at = fam(t)
        ut = U(t, t0)
        for v in vs:
            worst = max(worst, abs(mean_value(at, ut @ v) - mean_value(a0, v)))
    return worst


def commutation_residual(U: Propagator, A, t_samples: Iterable[float], t0: float) -> float:
    """Max of ``||U(t0,t) A(t) - A(t0) U(t0,t)||``, normalized."""
    fam = as_family(A, U.dim)
    a0 = fam(t0)
    worst, mats = 0.0, [a0]
    for t in t_samples:
        at = fam(t)
        mats.append(at)
        u = U(t0, t)
        worst = max(worst, norm(u @ at - a0 @ u))
    return worst / _scale(mats)


def heisenberg_constancy_residual(U: Propagator, A, t_samples: Iterable[float],
                                  t0: float) -> float:
    """Max of ``||A_t^H(t0) - A(t0)||``, normalized."""
    fam = as_family(A, U.dim)
    a0 = fam(t0)
    worst, mats = 0.0, [a0]
    for t in t_samples:
        at = fam(t)
        mats.append(at)
        worst = max(worst, norm(U(t0, t) @ at @ U(t, t0) - a0))
    return worst / _scale(mats)


def lax_pair_residual(A_m: Callable[[float], np.ndarray], gamma: Callable[[float], np.ndarray],
                      t_samples: Iterable[float], h: float = DEFAULT_FD_STEP) -> float:
    """Max of ``||dA^m/dt - [A^m, Gamma]||`` for raw matrix families, normalized."""
    worst, mats = 0.0, []
    for t in t_samples:
        a = np.asarray(A_m(t))
        g = np.asarray(gamma(t))
        mats.append(a)
        da = central_difference(A_m, t, h)
        worst = max(worst, norm(da - (a @ g - g @ a)))
    return worst / _scale(mats)


def lax_residual(F: MorphismField, frame: FrameField, t_samples: Iterable[float],
                 h: float = DEFAULT_FD_STEP) -> float:
    """Lax-equation residual of a morphism field written in ``frame``."""
    return lax_pair_residual(lambda t: frame.matrix_of(F(t), t), frame.gamma, t_samples, h)


def derivation_residual(T: EvolutionTransport, F: MorphismField, t_samples: Iterable[float],
                        h: float = DEFAULT_FD_STEP) -> float:
    """Max of the induced derivation of ``F``, in the fibre metric, normalized."""
    worst, mats = 0.0, []
    for t in t_samples:
        d = morphism_derivation(T, F, t, h)
        worst = max(worst, fibre_operator_norm(T.atlas, t, d))
        mats.append(F.hilbert(t))
    return worst / _scale(mats)


def gauge_transform(A_m: Callable[[float], np.ndarray], gamma: Callable[[float], np.ndarray],
                    W: Callable[[float], np.ndarray], dW: Callable[[float], np.ndarray] | None = None,
                    h: float = DEFAULT_FD_STEP, max_cond: float = 1e8):
    """Gauge action on a Lax pair.

    ``A -> W A W^{-1}`` and ``Gamma -> W Gamma W^{-1} - dW/dt W^{-1}``.
    Returns the transformed pair as callables of ``t``.
    """

    def w_and_inv(t):
        w = np.asarray(W(t), dtype=complex)
        cond = np.linalg.cond(w)
        if not np.isfinite(cond) or cond > max_cond:
            raise SingularGauge(f"gauge matrix singular at t={t} (cond {cond:.3e})")
        return w, np.linalg.inv(w)

    def a_new(t):
        w, wi = w_and_inv(t)
        return w @ np.asarray(A_m(t)) @ wi

    def gamma_new(t):
        w, wi = w_and_inv(t)
        dw = np.asarray(dW(t)) if dW is not None else central_difference(W, t, h)
        return w @ np.asarray(gamma(t)) @ wi - dw @ wi

    return a_new, gamma_new


def eigenvalue_constancy_check(U: Propagator, A, psi0, t_samples: Iterable[float], t0: float,
                               tol: float = 1e-8):
    """Follow an eigenvector of ``A(t0)`` under the evolution.

    Returns ``(is_eigen_trajectory, eigenvalue_drift)``. When ``psi0`` is
    not an eigenvector of ``A(t0)`` the drift is NaN.
    """
    fam = as_family(A, U.dim)
    v0 = as_state(psi0, U.dim)
    a0 = fam(t0)
    lam0 = np.vdot(v0, a0 @ v0) / np.vdot(v0, v0)
    if norm(a0 @ v0 - lam0 * v0) > tol * norm(v0):
        return False, float("nan")
    eigen, drift = True, 0.0
    for t in t_samples:
        v = U(t, t0) @ v0
        at = fam(t)
        lam = np.vdot(v, at @ v) / np.vdot(v, v)
        if norm(at @ v - lam * v) > tol * norm(v):
            eigen = False
        drift = max(drift, abs(lam - lam0))
    return eigen, float(drift)


def default_samples(T: EvolutionTransport, count: int = 9, h: float = DEFAULT_FD_STEP):
    margin = max(2 * h, 1e-3 * (T.t_end - T.t_start))
    return np.linspace(T.t_start + margin, T.t_end - margin, count)


def certify(U: Propagator, T: EvolutionTransport, F: MorphismField,
            tol: Tolerance = DEFAULT_TOL, t_samples: Iterable[float] | None = None,
            t0: float | None = None, frame: FrameField | None = None,
            rng: np.random.Generator | None = None, h: float = DEFAULT_FD_STEP) -> IntegralVerdict:
    """Run all five integral-of-motion criteria on one morphism field.

    The mean-value and Heisenberg criteria use the bundle side (fibre means
    of transported sections, Heisenberg morphisms at ``gamma(t0)``); the
    commutation criterion uses the Hilbert-space operator ``l A_gamma l^{-1}``.
    """
    if not (U.dim == T.dim == F.atlas.dim):
        raise DimMismatch("propagator, transport, and morphism field differ in dimension")
    t0 = T.t_start if t0 is None else t0
    ts = list(default_samples(T, h=h) if t_samples is None else t_samples)
    rng = np.random.default_rng(0) if rng is None else rng
    frame = frame_field(T, h=h) if frame is None else frame
    atlas = T.atlas
    a_fibre0 = F(t0)
    scale = _scale([F.hilbert(t) for t in [t0, *ts]])

    states = spanning_states(rng, T.dim, max(8, 2 * T.dim))
    g0 = atlas.metric(t0)
    mean_res = 0.0
    for v in states:
        m0 = (np.vdot(v, g0 @ a_fibre0 @ v) / np.vdot(v, g0 @ v)).real
        for t in ts:
            w = T(t, t0) @ v
            g = atlas.metric(t)
            mt = (np.vdot(w, g @ F(t) @ w) / np.vdot(w, g @ w)).real
            mean_res = max(mean_res, abs(mt - m0))

    comm_res = commutation_residual(U, F.hilbert, ts, t0)

    heis_res = 0.0
    for t in ts:
        a_h = T(t0, t) @ F(t) @ T(t, t0)
        heis_res = max(heis_res, fibre_operator_norm(atlas, t0, a_h - a_fibre0))
    heis_res /= scale

    lax_res = lax_residual(F, frame, ts, h)
    der_res = derivation_residual(T, F, ts, h)

    residuals = (mean_res, comm_res, lax_res, der_res, heis_res)
    return IntegralVerdict(
        *(float(r) for r in residuals),
        is_integral=all(tol.accepts(r) for r in residuals),
        tol=tol,
    )
