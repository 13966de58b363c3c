"""Check registry and the suite runner.

Each check maps a scenario to one residual and a threshold. Checks are
grouped into suites; a scenario's ``checks`` list may name suites,
individual checks, or ``all``. Every check draws randomness from its own
labeled stream, so adding a check never shifts another check's draws.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from ..bundle import (
    EvolutionTransport,
    MorphismField,
    ObserverPath,
    connection_coefficients,
    fibre_adjoint,
    fibre_mean_value,
    fibre_operator_norm,
    lift_observable,
    lift_state,
    morphism_derivation,
    normal_frame,
    section_derivation_residual,
    transport_matrix,
    transport_morphism,
)
from ..errors import QBundleError, ValidationError
from ..generators import make_atlas, random_gauge, random_observable, random_state, random_unitary
from ..generators import random_unitary_curve, rng_for
from ..integrals import IntegralVerdict, certify, eigenvalue_constancy_check, gauge_transform
from ..linalg import central_difference, commutator, dagger, mean_value, norm, unitarity_defect
from ..pictures import (
    UnitaryFamily,
    bundle_heisenberg_eom_residual,
    bundle_v_eom_residuals,
    bundle_v_propagator,
    heisenberg_eom_residual,
    heisenberg_morphism,
    heisenberg_propagator,
    interaction_eom_residuals,
    interaction_picture,
    to_heisenberg_observable,
    v_eom_residuals,
    v_propagator,
    v_propagator_residual,
)
from ..propagation import DEFAULT_FD_STEP, IntegratorConfig, Propagator, hamiltonian_from_propagator
from ..propagation import schrodinger_residual
from .scenario import ScenarioSpec, build_family, split_hamiltonian

EXACT = 1e-9
H = DEFAULT_FD_STEP
SAMPLE_COUNT = 7
WORKERS_ENV = "QBUNDLE_WORKERS"


class Context:
    """Objects derived from a scenario, built lazily and shared by checks."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.t0, self.t1 = spec.time.t0, spec.time.t1
        self.dim = spec.dimension
        self.tol = spec.tolerances
        self.cfg = IntegratorConfig(max_step=spec.time.max_step)

    @cached_property
    def hamiltonian(self):
        return build_family(self.spec.hamiltonian, self.spec.hbar)

    @cached_property
    def U(self) -> Propagator:
        return Propagator(self.hamiltonian, self.t0, self.t1, self.cfg)

    @cached_property
    def atlas(self):
        a = self.spec.atlas
        path = ObserverPath(self.t0, self.t1, "observer")
        return make_atlas(a.kind, path, self.dim, a.seed, a.cond_cap)

    @cached_property
    def T(self) -> EvolutionTransport:
        return EvolutionTransport(self.atlas, self.U)

    @cached_property
    def psi0(self) -> np.ndarray:
        return random_state(rng_for(self.spec.seed, "initial-state"), self.dim)

    def psi(self, t):
        return self.U(t, self.t0) @ self.psi0

    @cached_property
    def observables(self):
        """Named observable families declared by the scenario."""
        return [(o.name, build_family(o, 1.0)) for o in self.spec.observables]

    @cached_property
    def probes(self):
        """Observables for equation checks; a seeded probe stands in when none are declared."""
        if self.observables:
            return self.observables
        return [("probe", random_observable(rng_for(self.spec.seed, "probe-observable"), self.dim))]

    @cached_property
    def fields(self):
        return [(name, lift_observable(self.atlas, fam)) for name, fam in self.probes]

    @cached_property
    def samples(self) -> np.ndarray:
        margin = max(4 * H, 0.02 * (self.t1 - self.t0))
        return np.linspace(self.t0 + margin, self.t1 - margin, SAMPLE_COUNT)

    @cached_property
    def V(self) -> UnitaryFamily | None:
        p = self.spec.picture("v")
        if p is None:
            return None
        curve = random_unitary_curve(rng_for(p.seed, "v-family"), self.dim, self.t0)
        return UnitaryFamily(self.t0, curve, self.dim)

    @cached_property
    def interaction(self):
        p = self.spec.picture("interaction")
        if p is None:
            return None
        h0, hi = split_hamiltonian(self.spec, p.split)
        return interaction_picture(h0, hi, self.t0, self.t1, anchor=self.t0, cfg=self.cfg)

    def scale(self, fam) -> float:
        return max(1.0, max(norm(fam(t)) for t in [self.t0, *self.samples]))

    def fibre_scale(self, F: MorphismField, t: float) -> float:
        return max(1.0, max(fibre_operator_norm(self.atlas, t, F(s)) for s in [t, *self.samples]))

    @cached_property
    def verdicts(self) -> list[tuple[str, IntegralVerdict]]:
        out = []
        for name, fam in self.observables:
            F = lift_observable(self.atlas, fam)
            v = certify(self.U, self.T, F, self.tol, self.samples, self.t0,
                        rng=rng_for(self.spec.seed, f"certify:{name}"))
            out.append((name, v))
        return out


@dataclass(frozen=True)
class Check:
    name: str
    suite: str
    equation: str
    summary: str
    fn: Callable[[Context, np.random.Generator], float]
    exact: bool = False
    requires: str | None = None

    def threshold(self, ctx: Context) -> float:
        return EXACT if self.exact else ctx.tol.bound()


REGISTRY: list[Check] = []


def check(name, suite, equation, summary, exact=False, requires=None):
    def register(fn):
        REGISTRY.append(Check(name, suite, equation, summary, fn, exact, requires))
        return fn

    return register


def _triples(rng, ctx, count=6):
    return rng.uniform(ctx.t0, ctx.t1, size=(count, 3))


# Propagator -----------------------------------------------------------------

@check("propagator-unitarity", "propagator", "(2.1)", "step factors and U(t,t0) are unitary",
       exact=True)
def _(ctx, rng):
    worst = ctx.U.step_unitarity_defect()
    for t in ctx.samples:
        worst = max(worst, unitarity_defect(ctx.U(t, ctx.t0)))
    return worst


@check("propagator-composition", "propagator", "(2.1)", "U(t,s)U(s,r) = U(t,r)", exact=True)
def _(ctx, rng):
    U = ctx.U
    return max(norm(U(t, s) @ U(s, r) - U(t, r)) for t, s, r in _triples(rng, ctx))


@check("propagator-inverse", "propagator", "(4.2b)", "U(t,s)^dagger = U(s,t) = U(t,s)^-1",
       exact=True)
def _(ctx, rng):
    U, eye = ctx.U, np.eye(ctx.dim)
    worst = 0.0
    for t, s, _ in _triples(rng, ctx):
        worst = max(worst, norm(dagger(U(t, s)) - U(s, t)), norm(U(s, t) @ U(t, s) - eye))
    return worst


@check("schrodinger-equation", "propagator", "(2.5)", "psi(t) = U(t,t0) psi0 solves the state equation")
def _(ctx, rng):
    return schrodinger_residual(ctx.hamiltonian, ctx.psi, ctx.samples, H)


@check("hamiltonian-recovery", "propagator", "(2.7)", "i hbar dU/dt U^-1 reproduces H(t)")
def _(ctx, rng):
    fam = ctx.hamiltonian
    worst = max(norm(hamiltonian_from_propagator(ctx.U, t, H) - fam(t)) for t in ctx.samples)
    return worst / ctx.scale(fam)


# Bundle ---------------------------------------------------------------------

@check("lift-roundtrip", "bundle", "(4.3a)", "l(t) l^-1(t) = 1 and l Psi = psi", exact=True)
def _(ctx, rng):
    atlas, eye = ctx.atlas, np.eye(ctx.dim)
    section = lift_state(atlas, ctx.psi)
    worst = 0.0
    for t in ctx.samples:
        worst = max(worst, norm(atlas.l(t) @ atlas.l_inv(t) - eye),
                    norm(atlas.l(t) @ section(t) - ctx.psi(t)))
    return worst


@check("transport-composition", "bundle", "(4.4)", "transport composes like the propagator",
       exact=True)
def _(ctx, rng):
    T = ctx.T
    worst = 0.0
    for t, s, r in _triples(rng, ctx):
        ref = T(t, r)
        worst = max(worst, norm(T(t, s) @ T(s, r) - ref) / max(1.0, norm(ref)))
    return worst


@check("transport-adjoint", "bundle", "(4.11)", "fibre adjoint of U_gamma(t,s) is U_gamma(s,t)",
       exact=True)
def _(ctx, rng):
    T = ctx.T
    worst = 0.0
    for t, s, _ in _triples(rng, ctx):
        ref = T(s, t)
        worst = max(worst, norm(fibre_adjoint(ctx.atlas, T(t, s), t, s) - ref) / max(1.0, norm(ref)))
    return worst


@check("fibre-mean", "bundle", "(6.1'')", "fibre mean values equal Hilbert-space means", exact=True)
def _(ctx, rng):
    section = lift_state(ctx.atlas, ctx.psi)
    worst = 0.0
    for (_, fam), (_, F) in zip(ctx.probes, ctx.fields):
        for t in ctx.samples:
            worst = max(worst, abs(fibre_mean_value(F, section, t) - mean_value(fam(t), ctx.psi(t))))
    return worst


@check("section-derivation", "bundle", "(5.13)", "transported sections have zero derivation")
def _(ctx, rng):
    return section_derivation_residual(ctx.T, lift_state(ctx.atlas, ctx.psi), ctx.samples, H)


@check("normal-frame", "bundle", "(7.3)", "transport matrix is 1 and Gamma vanishes in a normal frame")
def _(ctx, rng):
    seed_basis = random_unitary(rng, ctx.dim)
    frame = normal_frame(ctx.T, ctx.t0, seed_basis, H)
    eye = np.eye(ctx.dim)
    worst = 0.0
    for t in ctx.samples:
        m = transport_matrix(ctx.T, t, ctx.t0, frame.basis)
        worst = max(worst, norm(m - eye), norm(frame.gamma(t)))
    return worst


# Heisenberg ---------------------------------------------------------------

@check("heisenberg-mean", "heisenberg", "(7.5)/(7.11)",
       "Heisenberg means equal Schrodinger means", exact=True, requires="heisenberg")
def _(ctx, rng):
    atlas, t0 = ctx.atlas, ctx.t0
    psi0_fibre = lift_state(atlas, ctx.psi)(t0)
    g0 = atlas.metric(t0)
    worst = 0.0
    for (_, fam), (_, F) in zip(ctx.probes, ctx.fields):
        for t in ctx.samples:
            ref = mean_value(fam(t), ctx.psi(t))
            a_h = to_heisenberg_observable(ctx.U, fam, t, t0)
            m_h = heisenberg_morphism(ctx.T, F, t, t0)
            fibre = np.vdot(psi0_fibre, g0 @ m_h @ psi0_fibre) / np.vdot(psi0_fibre, g0 @ psi0_fibre)
            worst = max(worst, abs(mean_value(a_h, ctx.psi0) - ref), abs(fibre - ref))
    return worst


@check("heisenberg-eom", "heisenberg", "(7.8)/(7.10)",
       "Heisenberg operators and morphisms obey the Heisenberg equation", requires="heisenberg")
def _(ctx, rng):
    worst = 0.0
    for name, fam in ctx.probes:
        s = ctx.scale(fam)
        for t in ctx.samples:
            r1 = heisenberg_eom_residual(ctx.U, ctx.hamiltonian, fam, t, ctx.t0, H)
            r2 = bundle_heisenberg_eom_residual(ctx.T, ctx.hamiltonian, fam, t, ctx.t0, H)
            worst = max(worst, r1 / s, r2 / s)
    return worst


@check("heisenberg-propagator", "heisenberg", "(7.35a)",
       "the Heisenberg-picture evolution operator is the identity", exact=True,
       requires="heisenberg")
def _(ctx, rng):
    eye = np.eye(ctx.dim)
    return max(norm(heisenberg_propagator(ctx.U, t, ctx.t0) - eye) for t in ctx.samples)


@check("heisenberg-transport", "heisenberg", "(7.13b2)/(7.13b3)",
       "Heisenberg morphisms are transported Heisenberg operators", exact=True,
       requires="heisenberg")
def _(ctx, rng):
    atlas, t0, T = ctx.atlas, ctx.t0, ctx.T
    l0, li0 = atlas.l(t0), atlas.l_inv(t0)
    t_mid = ctx.samples[len(ctx.samples) // 2]
    worst = 0.0
    for (_, fam), (_, F) in zip(ctx.probes, ctx.fields):
        s = ctx.fibre_scale(F, t0)
        for t in ctx.samples:
            m_h = heisenberg_morphism(T, F, t, t0)
            ref = li0 @ to_heisenberg_observable(ctx.U, fam, t, t0) @ l0
            moved = transport_morphism(T, m_h, t0, t_mid)
            worst = max(worst, fibre_operator_norm(atlas, t0, m_h - ref) / s,
                        fibre_operator_norm(atlas, t_mid, moved - heisenberg_morphism(T, F, t, t_mid)) / s)
    return worst


@check("induced-derivation", "heisenberg", "(7.13b5)/(7.13b6)",
       "matrix form of the derivation matches (1/i hbar)[A,H] + dA/dt", requires="heisenberg")
def _(ctx, rng):
    atlas, hbar = ctx.atlas, ctx.spec.hbar
    worst = 0.0
    for (_, fam), (_, F) in zip(ctx.probes, ctx.fields):
        for t in ctx.samples:
            d = morphism_derivation(ctx.T, F, t, H)
            explicit = commutator(fam(t), ctx.hamiltonian(t)) / (1j * hbar) + fam.derivative(t, H)
            ref = atlas.l_inv(t) @ explicit @ atlas.l(t)
            worst = max(worst, fibre_operator_norm(atlas, t, d - ref) / ctx.fibre_scale(F, t))
    return worst


@check("derivation-transport", "heisenberg", "(7.13b8)",
       "the derivation annihilates transported morphisms", requires="heisenberg")
def _(ctx, rng):
    T, t0 = ctx.T, ctx.t0
    worst = 0.0
    for _, F in ctx.fields:
        a0 = F(t0)
        moved = MorphismField(ctx.atlas, lambda t, a0=a0: transport_morphism(T, a0, t0, t))
        for t in ctx.samples:
            d = morphism_derivation(T, moved, t, H)
            worst = max(worst, fibre_operator_norm(ctx.atlas, t, d) / ctx.fibre_scale(moved, t))
    return worst


@check("heisenberg-derivation", "heisenberg", "(7.13b7)",
       "d/dt of the Heisenberg morphism is the transported derivation", requires="heisenberg")
def _(ctx, rng):
    T, t0 = ctx.T, ctx.t0
    worst = 0.0
    for _, F in ctx.fields:
        s = ctx.fibre_scale(F, t0)
        for t in ctx.samples:
            lhs = central_difference(lambda u: heisenberg_morphism(T, F, u, t0), t, H)
            rhs = transport_morphism(T, morphism_derivation(T, F, t, H), t, t0)
            worst = max(worst, fibre_operator_norm(ctx.atlas, t0, lhs - rhs) / s)
    return worst


# V-picture ------------------------------------------------------------------

@check("v-mean", "v-picture", "(7.14)/(7.17)",
       "V-picture means equal Schrodinger means in both descriptions", exact=True, requires="v")
def _(ctx, rng):
    V, atlas = ctx.V, ctx.atlas
    g1 = atlas.metric(V.anchor)
    section = lift_state(atlas, ctx.psi)
    worst = 0.0
    for (_, fam), (_, F) in zip(ctx.probes, ctx.fields):
        for t in ctx.samples:
            ref = mean_value(fam(t), ctx.psi(t))
            psi_v = V(t) @ ctx.psi(t)
            a_v = V(t) @ fam(t) @ V.inverse(t)
            pb = V.bundle(atlas, t) @ section(t)
            ab = V.bundle(atlas, t) @ F(t) @ V.bundle_inverse(atlas, t)
            fibre = np.vdot(pb, g1 @ ab @ pb) / np.vdot(pb, g1 @ pb)
            worst = max(worst, abs(mean_value(a_v, psi_v) - ref), abs(fibre - ref))
    return worst


@check("v-equations", "v-picture", "(7.24)/(7.27)",
       "V-picture states and observables obey their equations of motion", requires="v")
def _(ctx, rng):
    V, Hf = ctx.V, ctx.hamiltonian
    worst = 0.0
    for _, fam in ctx.probes:
        s = ctx.scale(fam)
        for t in ctx.samples:
            r = v_eom_residuals(V, Hf, ctx.psi, fam, t, H)
            rb = bundle_v_eom_residuals(V, ctx.atlas, Hf, ctx.psi, fam, t, H)
            worst = max(worst, r[0], r[1] / s, rb[0], rb[1] / s)
    return worst


@check("v-propagator", "v-picture", "(7.32)/(7.34)",
       "the V-picture evolution operator solves its equation; bundle and Hilbert forms agree",
       requires="v")
def _(ctx, rng):
    V, atlas, t0 = ctx.V, ctx.atlas, ctx.t0
    l1, li1 = atlas.l(V.anchor), atlas.l_inv(V.anchor)
    worst = 0.0
    for t in ctx.samples:
        uv = v_propagator(V, ctx.U, t, t0)
        worst = max(worst, v_propagator_residual(V, ctx.hamiltonian, ctx.U, t, t0, H) / norm(uv))
        ref = li1 @ uv @ l1
        worst = max(worst, norm(bundle_v_propagator(V, ctx.T, t, t0) - ref) / max(1.0, norm(ref)))
    return worst


# Interaction picture -------------------------------------------------------

@check("interaction-split", "interaction", "(7.38)", "U = U0 U_I", requires="interaction")
def _(ctx, rng):
    ip = ctx.interaction
    t0 = ip.anchor
    return max(norm(ip.free(t, t0) @ ip.interaction(t, t0) - ip.full(t, t0)) for t in ctx.samples)


@check("interaction-equations", "interaction", "(7.39)/(7.40)",
       "interaction-picture states and observables obey their equations of motion",
       requires="interaction")
def _(ctx, rng):
    ip = ctx.interaction
    worst = 0.0
    for _, fam in ctx.probes:
        s = ctx.scale(fam)
        for t in ctx.samples:
            rs, ro = interaction_eom_residuals(ip, ctx.psi, fam, t, H)
            worst = max(worst, rs, ro / s)
    return worst


@check("interaction-mean", "interaction", "(7.17)",
       "interaction-picture means equal Schrodinger means", exact=True, requires="interaction")
def _(ctx, rng):
    ip = ctx.interaction
    t0 = ip.anchor
    worst = 0.0
    for _, fam in ctx.probes:
        for t in ctx.samples:
            w = ip.free(t0, t)
            psi_i = w @ ctx.psi(t)
            a_i = w @ fam(t) @ dagger(w)
            worst = max(worst, abs(mean_value(a_i, psi_i) - mean_value(fam(t), ctx.psi(t))))
    return worst


# Integrals of motion ----------------------------------------------------------

@check("integral-certify", "integral", "(8.5)-(8.17a)",
       "the five integral-of-motion criteria agree (count of split verdicts)")
def _(ctx, rng):
    return float(sum(not v.unanimous for _, v in ctx.verdicts))


@check("integral-gauge", "integral", "(Lax-invariance)",
       "the Lax residual transforms by similarity under a random gauge")
def _(ctx, rng):
    T = ctx.T
    worst = 0.0
    for _, F in ctx.fields:
        W = random_gauge(rng, ctx.dim)

        def gamma(t):
            return connection_coefficients(T, t, H)[0]

        a_new, g_new = gauge_transform(F, gamma, W, h=H)
        s = ctx.fibre_scale(F, ctx.t0)
        for t in ctx.samples:
            r = F.d(t, H) - commutator(F(t), gamma(t))
            r_new = central_difference(a_new, t, H) - commutator(a_new(t), g_new(t))
            w = W(t)
            worst = max(worst, norm(r_new - w @ r @ np.linalg.inv(w)) / s)
    return worst


@check("integral-eigenvalue", "integral", "(8.4)",
       "eigenvalues of certified integrals stay constant along the evolution")
def _(ctx, rng):
    worst = 0.0
    fams = dict(ctx.observables)
    for name, verdict in ctx.verdicts:
        if not verdict.is_integral:
            continue
        fam = fams[name]
        _, vecs = np.linalg.eigh(fam(ctx.t0))
        for k in range(ctx.dim):
            _, drift = eigenvalue_constancy_check(ctx.U, fam, vecs[:, k], ctx.samples, ctx.t0)
            if math.isnan(drift):
                return math.inf
            worst = max(worst, drift)
    return worst


# Registry queries ----------------------------------------------------------

SUITES = tuple(dict.fromkeys(c.suite for c in REGISTRY))
_BY_NAME = {c.name: c for c in REGISTRY}
assert len(_BY_NAME) == len(REGISTRY), "check names must be unique"


def expand_checks(names) -> list[Check]:
    """Resolve suite names, check names, and ``all`` to registry order."""
    wanted = set()
    for n in names:
        if n == "all":
            wanted.update(c.name for c in REGISTRY)
        elif n in SUITES:
            wanted.update(c.name for c in REGISTRY if c.suite == n)
        elif n in _BY_NAME:
            wanted.add(n)
        else:
            raise ValidationError(f"unknown check or suite {n!r}", "checks")
    return [c for c in REGISTRY if c.name in wanted]


def enabled_checks(spec: ScenarioSpec) -> list[Check]:
    """Checks selected by the scenario whose picture is enabled."""
    kinds = {p.kind for p in spec.pictures}
    return [c for c in expand_checks(spec.checks) if c.requires is None or c.requires in kinds]


# Running ---------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    check: str
    equation: str
    residual: float
    threshold: float
    passed: bool
    error: str | None
    seconds: float


def _run_one(c: Check, ctx: Context) -> CheckResult:
    start = time.perf_counter()
    error = None
    try:
        residual = float(c.fn(ctx, rng_for(ctx.spec.seed, c.name)))
    except (QBundleError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        residual, error = math.inf, f"{type(exc).__name__}: {exc}"
    threshold = c.threshold(ctx)
    passed = error is None and math.isfinite(residual) and residual <= threshold
    return CheckResult(c.name, c.equation, residual, threshold, passed, error,
                       time.perf_counter() - start)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_checks(ctx: Context, checks: list[Check]) -> list[CheckResult]:
    workers = worker_count()
    if workers == 1 or len(checks) < 2:
        return [_run_one(c, ctx) for c in checks]
    # Shared lazy objects are built up front so threads only read them.
    for attr in ("U", "T", "fields", "samples", "psi0", "V", "interaction", "verdicts"):
        try:
            getattr(ctx, attr)
        except (QBundleError, ValueError):
            pass
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: _run_one(c, ctx), checks))
