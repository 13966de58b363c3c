"""Time-dependent Hamiltonians and the unitary evolution operator U(t, t0).

The propagator is built once on a fixed time grid and then evaluated at
arbitrary times inside that grid: grid points come from cached products of
per-step factors, off-grid times add one partial step from the nearest grid
point below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BoundaryTime, DomainError, NonHermitianInput, StepFailure
from .linalg import (
    Tolerance,
    as_operator,
    as_state,
    central_difference,
    dagger,
    is_hermitian,
    matrix_exponential,
    norm,
    polar_unitary,
    unitarity_defect,
)

EXACT_PIECEWISE = "exact-piecewise-constant"
MIDPOINT_MAGNUS = "midpoint-magnus-1"
SCHEMES = (EXACT_PIECEWISE, MIDPOINT_MAGNUS)

FAMILY_KINDS = ("general", "constant", "piecewise-constant")

DEFAULT_FD_STEP = 1e-4

_TIME_SLACK = 1e-12


@dataclass(frozen=True)
class HamiltonianFamily:
    """A Hermitian operator-valued function of time.

    Also used for observables, in which case ``time_derivative`` plays the
    role of the explicit time derivative of the observable.
    """

    eval: Callable[[float], np.ndarray]
    dim: int
    time_derivative: Callable[[float], np.ndarray] | None = None
    hbar: float = 1.0
    kind: str = "general"
    breakpoints: tuple[float, ...] = ()
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")

    def __call__(self, t: float) -> np.ndarray:
        if self.domain is not None:
            lo, hi = self.domain
            if not (lo - _TIME_SLACK <= t <= hi + _TIME_SLACK):
                raise DomainError(f"t={t} outside family domain [{lo}, {hi}]")
        return np.asarray(self.eval(t), dtype=complex)

    def derivative(self, t: float, h: float = DEFAULT_FD_STEP) -> np.ndarray:
        """Analytic derivative when available, else a central difference."""
        if self.time_derivative is not None:
            return np.asarray(self.time_derivative(t), dtype=complex)
        if self.kind == "constant":
            return np.zeros((self.dim, self.dim), dtype=complex)
        return central_difference(self, t, h)

    @classmethod
    def constant(cls, matrix, hbar: float = 1.0) -> "HamiltonianFamily":
        m = as_operator(matrix)
        m.setflags(write=False)
        zero = np.zeros_like(m)
        zero.setflags(write=False)
        return cls(lambda t: m, m.shape[0], lambda t: zero, hbar, "constant")

    @classmethod
    def zero(cls, dim: int, hbar: float = 1.0) -> "HamiltonianFamily":
        return cls.constant(np.zeros((dim, dim), dtype=complex), hbar)

    @classmethod
    def piecewise_constant(
        cls, breakpoints: Sequence[float], matrices: Sequence, hbar: float = 1.0
    ) -> "HamiltonianFamily":
        """``matrices[k]`` holds on ``[breakpoints[k-1], breakpoints[k])``.

        There is one more matrix than breakpoints; the first and last pieces
        extend to -inf and +inf.
        """
        bps = tuple(float(b) for b in breakpoints)
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        mats = [as_operator(m) for m in matrices]
        if len(mats) != len(bps) + 1:
            raise ValueError("need exactly one more matrix than breakpoints")
        dim = mats[0].shape[0]
        mats = [as_operator(m, dim) for m in mats]
        zero = np.zeros((dim, dim), dtype=complex)
        edges = np.asarray(bps)

        def h_of_t(t):
            return mats[int(np.searchsorted(edges, t, side="right"))]

        return cls(h_of_t, dim, lambda t: zero, hbar, "piecewise-constant", bps)

    @classmethod
    def from_terms(
        cls,
        terms: Iterable[tuple[Callable, Callable | None, np.ndarray]],
        hbar: float = 1.0,
    ) -> "HamiltonianFamily":
        """Sum of ``f_k(t) * M_k`` with real coefficient functions.

        Each term is ``(f, df, M)``; ``df`` may be None, in which case the
        family falls back to finite differences for its derivative.
        """
        terms = [(f, df, as_operator(m)) for f, df, m in terms]
        if not terms:
            raise ValueError("at least one term is required")
        dim = terms[0][2].shape[0]
        for _, _, m in terms:
            as_operator(m, dim)

        def h_of_t(t):
            return sum(f(t) * m for f, _, m in terms)

        deriv = None
        if all(df is not None for _, df, _ in terms):

            def deriv(t):
                return sum(df(t) * m for _, df, m in terms)

        return cls(h_of_t, dim, deriv, hbar)

    def with_hbar(self, hbar: float) -> "HamiltonianFamily":
        return HamiltonianFamily(
            self.eval, self.dim, self.time_derivative, hbar, self.kind,
            self.breakpoints, self.domain,
        )

    def __add__(self, other: "HamiltonianFamily") -> "HamiltonianFamily":
        if other.dim != self.dim:
            raise ValueError("cannot add families of different dimension")
        d1, d2 = self, other

        def deriv(t):
            return d1.derivative(t) + d2.derivative(t)

        kinds = {self.kind, other.kind}
        if kinds == {"constant"}:
            kind = "constant"
        elif kinds <= {"constant", "piecewise-constant"}:
            kind = "piecewise-constant"
        else:
            kind = "general"
        bps = tuple(sorted(set(self.breakpoints) | set(other.breakpoints)))
        return HamiltonianFamily(
            lambda t: d1(t) + d2(t), self.dim, deriv, self.hbar, kind, bps, self.domain,
        )


@dataclass(frozen=True)
class IntegratorConfig:
    max_step: float = 1e-3
    tol: Tolerance = field(default_factory=lambda: Tolerance(1e-10, 0.0))
    reunitarize: bool = False

    def __post_init__(self):
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


def _build_grid(t_start, t_end, breakpoints, max_step, subdivide):
    cuts = [t_start] + [b for b in breakpoints if t_start < b < t_end] + [t_end]
    grid = [t_start]
    for a, b in zip(cuts, cuts[1:]):
        n = max(1, math.ceil((b - a) / max_step - 1e-9)) if subdivide else 1
        grid.extend(np.linspace(a, b, n + 1)[1:])
    grid[-1] = t_end
    return np.asarray(grid, dtype=float)


class Propagator:
    """Two-time evolution operator ``U(t, s)`` on ``[t_start, t_end]``.

    Parameters
    ----------
    source : HamiltonianFamily
    t_start, t_end : float
        Time window; queries outside it raise :class:`DomainError`.
    config : IntegratorConfig, optional
    scheme : str, optional
        ``"midpoint-magnus-1"`` (one exponential of the midpoint Hamiltonian
        per step) or ``"exact-piecewise-constant"``. Defaults to the exact
        scheme for constant and piecewise-constant families.
    """

    _CACHE_LIMIT = 4096

    def __init__(self, source: HamiltonianFamily, t_start: float, t_end: float,
                 config: IntegratorConfig | None = None, scheme: str | None = None):
        if not t_end > t_start:
            raise ValueError("propagator window must satisfy t_start < t_end")
        if source.domain is not None:
            lo, hi = source.domain
            if t_start < lo - _TIME_SLACK or t_end > hi + _TIME_SLACK:
                raise DomainError("propagator window exceeds the family domain")
        config = config or IntegratorConfig()
        piecewise = source.kind in ("constant", "piecewise-constant")
        if scheme is None:
            scheme = EXACT_PIECEWISE if piecewise else MIDPOINT_MAGNUS
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if scheme == EXACT_PIECEWISE and not piecewise:
            raise ValueError("exact-piecewise-constant needs a piecewise-constant family")

        self.source = source
        self.config = config
        self.scheme = scheme
        self.hbar = source.hbar
        self.dim = source.dim
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.grid = _build_grid(
            self.t_start, self.t_end, source.breakpoints, config.max_step,
            subdivide=(scheme == MIDPOINT_MAGNUS),
        )
        mids = 0.5 * (self.grid[:-1] + self.grid[1:])
        dts = np.diff(self.grid)
        hs = np.stack([self._sample(m) for m in mids])
        factors = matrix_exponential((-1j / self.hbar) * dts[:, None, None] * hs)
        if not np.all(np.isfinite(factors)):
            raise StepFailure("non-finite step factor")
        if config.reunitarize:
            factors = np.stack([polar_unitary(f) for f in factors])
        defects = np.linalg.norm(
            np.conj(np.swapaxes(factors, -1, -2)) @ factors - np.eye(self.dim), axis=(-2, -1)
        )
        worst = float(defects.max())
        if worst > config.tol.bound(1.0):
            raise StepFailure(
                f"step factor unitarity defect {worst:.3e} exceeds {config.tol.bound():.3e}"
            )
        cum = np.empty((len(self.grid), self.dim, self.dim), dtype=complex)
        cum[0] = np.eye(self.dim)
        for k, f in enumerate(factors):
            cum[k + 1] = f @ cum[k]
            if config.reunitarize:
                cum[k + 1] = polar_unitary(cum[k + 1])
        factors.setflags(write=False)
        cum.setflags(write=False)
        self.factors = factors
        self._cum = cum
        self._cache: dict[float, np.ndarray] = {}

    def _sample(self, t):
        h = as_operator(self.source(t), self.dim)
        if not is_hermitian(h, 1e-10):
            raise NonHermitianInput(f"Hamiltonian is not Hermitian at t={t}")
        return h

    def _check_time(self, t):
        if not (self.t_start - _TIME_SLACK <= t <= self.t_end + _TIME_SLACK):
            raise DomainError(f"t={t} outside propagator window [{self.t_start}, {self.t_end}]")

    def from_start(self, t: float) -> np.ndarray:
        """``U(t, t_start)``."""
        t = float(t)
        self._check_time(t)
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        k = int(np.searchsorted(self.grid, t, side="right")) - 1
        k = min(max(k, 0), len(self.grid) - 1)
        tau = t - self.grid[k]
        if abs(tau) <= _TIME_SLACK:
            out = self._cum[k]
        else:
            if k == len(self.grid) - 1:
                k -= 1
                tau = t - self.grid[k]
            h = self._sample(self.grid[k] + 0.5 * tau)
            step = matrix_exponential((-1j * tau / self.hbar) * h)
            if self.config.reunitarize:
                step = polar_unitary(step)
            out = step @ self._cum[k]
            out.setflags(write=False)
        if len(self._cache) < self._CACHE_LIMIT:
            self._cache[t] = out
        return out

    def __call__(self, t: float, s: float) -> np.ndarray:
        """``U(t, s)``; the identity is returned untouched when ``t == s``."""
        if t == s:
            self._check_time(t)
            return np.eye(self.dim, dtype=complex)
        return self.from_start(t) @ dagger(self.from_start(s))

    def contains(self, t: float) -> bool:
        return self.t_start - _TIME_SLACK <= t <= self.t_end + _TIME_SLACK

    def step_unitarity_defect(self) -> float:
        return max(unitarity_defect(f) for f in self.factors)


def propagate(H: HamiltonianFamily, t0: float, t: float,
              cfg: IntegratorConfig | None = None, scheme: str | None = None) -> np.ndarray:
    """Evolution operator ``U(t, t0)`` solving ``i hbar dU/dt = H(t) U``."""
    if t == t0:
        if H.domain is not None:
            H(t0)
        return np.eye(H.dim, dtype=complex)
    lo, hi = min(t0, t), max(t0, t)
    return Propagator(H, lo, hi, cfg, scheme)(t, t0)


def _require_interior(U: Propagator, t: float, h: float):
    if t - h < U.t_start - _TIME_SLACK or t + h > U.t_end + _TIME_SLACK:
        raise BoundaryTime(
            f"stencil [{t - h}, {t + h}] leaves propagator window [{U.t_start}, {U.t_end}]"
        )


def hamiltonian_from_propagator(U: Propagator, t: float, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Recover ``H(t) = i hbar dU(t,t0)/dt U^{-1}(t,t0)`` by central differences."""
    _require_interior(U, t, h)
    du = central_difference(U.from_start, t, h)
    return 1j * U.hbar * du @ dagger(U.from_start(t))


def schrodinger_residual(H: HamiltonianFamily, psi_traj: Callable[[float], np.ndarray],
                         t_samples: Iterable[float], h: float = DEFAULT_FD_STEP) -> float:
    """Max over samples of ``||i hbar dpsi/dt - H psi|| / max(1, ||psi||)``."""
    worst = 0.0
    for t in t_samples:
        psi = as_state(psi_traj(t))
        dpsi = central_difference(psi_traj, t, h)
        r = norm(1j * H.hbar * dpsi - H(t) @ psi) / max(1.0, norm(psi))
        worst = max(worst, r)
    return worst
