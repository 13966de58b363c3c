"""Seeded random systems: Hamiltonians, states, atlases, unitary families, gauges.

Every generator takes a ``numpy.random.Generator``; :func:`rng_for` derives
independent labeled streams from a single root seed so that adding a
consumer never shifts another consumer's draws.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .bundle import BundleAtlas, ObserverPath
from .errors import InsufficientStates
from .linalg import dagger, matrix_exponential
from .propagation import HamiltonianFamily


def rng_for(seed: int, label: str) -> np.random.Generator:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    """GUE sample rescaled to spectral norm ``scale``."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (z + dagger(z))
    return h * (scale / max(np.linalg.norm(h, 2), 1e-300))


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar unitary via QR with phase correction."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def spanning_states(rng: np.random.Generator, dim: int, count: int | None = None,
                    max_cond: float = 1e4, attempts: int = 100) -> list[np.ndarray]:
    """``count`` (default ``2*dim``) random states whose Gram matrix is well conditioned."""
    count = 2 * dim if count is None else count
    if count < dim:
        raise InsufficientStates(f"{count} states cannot span dimension {dim}")
    for _ in range(attempts):
        states = [random_state(rng, dim) for _ in range(count)]
        m = np.stack(states, axis=1)
        if np.linalg.cond(m @ dagger(m)) <= max_cond:
            return states
    raise InsufficientStates("could not draw a well-conditioned spanning set")


class _SmoothHermitian:
    """``K(t) = c0 K0 + (t - ta) K1 + sin(w (t - ta) + p) K2 + cos(v (t - ta)) K3``."""

    def __init__(self, rng, dim, scale, anchor=0.0, pinned=False):
        self.ks = [random_hermitian(rng, dim, scale) for _ in range(4)]
        self.w, self.v = rng.uniform(0.5, 2.0, size=2)
        self.p = 0.0 if pinned else rng.uniform(0, 2 * np.pi)
        self.c0 = 0.0 if pinned else 1.0
        self.anchor = anchor
        self.pinned = pinned

    def __call__(self, t):
        x = t - self.anchor
        k0, k1, k2, k3 = self.ks
        out = self.c0 * k0 + x * k1 + np.sin(self.w * x + self.p) * k2
        if self.pinned:
            return out + (np.cos(self.v * x) - 1.0) * k3
        return out + np.cos(self.v * x) * k3

    def derivative(self, t):
        x = t - self.anchor
        _, k1, k2, k3 = self.ks
        return k1 + self.w * np.cos(self.w * x + self.p) * k2 - self.v * np.sin(self.v * x) * k3


def random_smooth_hamiltonian(rng: np.random.Generator, dim: int, scale: float = 1.0,
                              hbar: float = 1.0) -> HamiltonianFamily:
    """``H(t) = H0 + cos(w1 t + p1) H1 + sin(w2 t + p2) H2`` with analytic derivative."""
    h0, h1, h2 = (random_hermitian(rng, dim, scale) for _ in range(3))
    w1, w2 = rng.uniform(0.5, 2.0, size=2)
    p1, p2 = rng.uniform(0, 2 * np.pi, size=2)
    return HamiltonianFamily.from_terms(
        [
            (lambda t: 1.0, lambda t: 0.0, h0),
            (lambda t: np.cos(w1 * t + p1), lambda t: -w1 * np.sin(w1 * t + p1), h1),
            (lambda t: np.sin(w2 * t + p2), lambda t: w2 * np.cos(w2 * t + p2), h2),
        ],
        hbar=hbar,
    )


def random_observable(rng: np.random.Generator, dim: int, scale: float = 1.0,
                      static: bool = False) -> HamiltonianFamily:
    """Random Hermitian observable, optionally with explicit time dependence."""
    if static:
        return HamiltonianFamily.constant(random_hermitian(rng, dim, scale))
    a0, a1 = random_hermitian(rng, dim, scale), random_hermitian(rng, dim, scale)
    w = rng.uniform(0.5, 2.0)
    return HamiltonianFamily.from_terms(
        [
            (lambda t: 1.0, lambda t: 0.0, a0),
            (lambda t: np.cos(w * t), lambda t: -w * np.sin(w * t), a1),
        ]
    )


def unitary_field_atlas(path: ObserverPath, dim: int, seed: int, scale: float = 0.7) -> BundleAtlas:
    """Trivializations ``l(t) = exp(-i K(t))`` for a smooth Hermitian ``K``."""
    k = _SmoothHermitian(np.random.default_rng(seed), dim, scale, anchor=path.t_min)

    def triv(t):
        return matrix_exponential(-1j * k(t))

    return BundleAtlas(path, triv, dim, "unitary-field")


def invertible_field_atlas(path: ObserverPath, dim: int, seed: int, cond_cap: float = 100.0,
                           scale: float = 0.7) -> BundleAtlas:
    """Non-unitary trivializations ``l(t) = (1 + P(t)) exp(-i K(t))``.

    ``P`` is Hermitian with spectral norm at most ``c = (cap-1)/(cap+1)``, so
    the condition number of ``l(t)`` never exceeds ``cond_cap``.
    """
    if cond_cap < 1:
        raise ValueError("cond_cap must be at least 1")
    rng = np.random.default_rng(seed)
    k = _SmoothHermitian(rng, dim, scale, anchor=path.t_min)
    c = (cond_cap - 1.0) / (cond_cap + 1.0)
    p1, p2 = random_hermitian(rng, dim, 0.5 * c), random_hermitian(rng, dim, 0.5 * c)
    w = rng.uniform(0.5, 2.0)
    eye = np.eye(dim)

    def triv(t):
        return (eye + np.cos(w * t) * p1 + np.sin(w * t) * p2) @ matrix_exponential(-1j * k(t))

    return BundleAtlas(path, triv, dim, "invertible-field")


def make_atlas(kind: str, path: ObserverPath, dim: int, seed: int = 0,
               cond_cap: float = 100.0) -> BundleAtlas:
    if kind == "identity":
        return BundleAtlas.identity(path, dim)
    if kind == "unitary-field":
        return unitary_field_atlas(path, dim, seed)
    if kind == "invertible-field":
        return invertible_field_atlas(path, dim, seed, cond_cap)
    raise ValueError(f"unknown atlas kind {kind!r}")


def random_unitary_curve(rng: np.random.Generator, dim: int, anchor: float,
                         scale: float = 0.7):
    """Smooth ``t -> exp(-i K(t))`` with ``K(anchor) = 0`` and its derivative-free callable."""
    k = _SmoothHermitian(rng, dim, scale, anchor=anchor, pinned=True)

    def curve(t):
        return matrix_exponential(-1j * k(t))

    return curve


def random_gauge(rng: np.random.Generator, dim: int, strength: float = 0.4, scale: float = 0.7):
    """Smooth invertible matrix field ``W(t) = (1 + P(t)) exp(-i K(t))``."""
    k = _SmoothHermitian(rng, dim, scale)
    p1, p2 = random_hermitian(rng, dim, 0.5 * strength), random_hermitian(rng, dim, 0.5 * strength)
    w = rng.uniform(0.5, 2.0)
    eye = np.eye(dim)

    def gauge(t):
        return (eye + np.cos(w * t) * p1 + np.sin(w * t) * p2) @ matrix_exponential(-1j * k(t))

    return gauge
