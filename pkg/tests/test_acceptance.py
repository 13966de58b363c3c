"""Acceptance suite: nine criteria, each printed as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from oracles import rk4_propagator  # noqa: E402
from qbundle.bundle import (  # noqa: E402
    EvolutionTransport,
    MorphismField,
    ObserverPath,
    fibre_mean_value,
    fibre_operator_norm,
    frame_field,
    lift_observable,
    lift_state,
    morphism_derivation,
    morphism_derivation_limit,
    normal_frame,
    transport_matrix,
    transport_morphism,
)
from qbundle.generators import (  # noqa: E402
    make_atlas,
    random_gauge,
    random_hermitian,
    random_observable,
    random_smooth_hamiltonian,
    random_state,
    random_unitary_curve,
)
from qbundle.integrals import certify, eigenvalue_constancy_check  # noqa: E402
from qbundle.linalg import (  # noqa: E402
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    Tolerance,
    central_difference,
    mean_value,
    norm,
    unitarity_defect,
)
from qbundle.pictures import (  # noqa: E402
    UnitaryFamily,
    bundle_heisenberg_eom_residual,
    bundle_v_eom_residuals,
    bundle_v_propagator,
    heisenberg_eom_residual,
    heisenberg_morphism,
    heisenberg_propagator,
    interaction_eom_residuals,
    interaction_picture,
    to_bundle_v_picture,
    to_heisenberg_observable,
    to_v_picture,
    v_eom_residuals,
    v_hamiltonians,
    v_propagator,
    v_propagator_residual,
)
from qbundle.propagation import (  # noqa: E402
    EXACT_PIECEWISE,
    HamiltonianFamily,
    IntegratorConfig,
    Propagator,
)

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "scenarios" / "golden.yaml"
GOLDEN_REPORT = ROOT / "tests" / "golden" / "golden.jsonl"
PATH = ObserverPath(0.0, 1.0, "acceptance")
KINDS = ("identity", "unitary-field", "invertible-field")
DIMS = (2, 3, 4, 8)
FD = 1e-4


def fibre_mean(atlas, t, a, v):
    g = atlas.metric(t)
    return (np.vdot(v, g @ a @ v) / np.vdot(v, g @ v)).real


def system(rng, dim, kind):
    h = random_smooth_hamiltonian(rng, dim)
    u = Propagator(h, 0.0, 1.0)
    T = EvolutionTransport(make_atlas(kind, PATH, dim, int(rng.integers(1 << 30)), 10), u)
    return h, u, T


def law_residuals(u, rng):
    t0, t1, t2 = rng.uniform(0.0, 1.0, size=3)
    n = u.dim
    unit = max(unitarity_defect(u(t1, t0)), u.step_unitarity_defect())
    comp = norm(u(t2, t0) - u(t2, t1) @ u(t1, t0))
    fwd = u(t2, t1)
    inv = max(norm(fwd.conj().T - np.linalg.inv(fwd)), norm(np.linalg.inv(fwd) - u(t1, t2)),
              norm(u(t1, t2) @ fwd - np.eye(n)))
    return max(unit, comp, inv)


# ---------------------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(101)
    magnus = 0.0
    for k in range(50):
        magnus = max(magnus, law_residuals(system(rng, DIMS[k % 4], "identity")[1], rng))
    exact = 0.0
    for k in range(50):
        n = DIMS[k % 4]
        bps = np.sort(rng.uniform(0.05, 0.95, size=3))
        fam = HamiltonianFamily.piecewise_constant(bps, [random_hermitian(rng, n) for _ in range(4)])
        u = Propagator(fam, 0.0, 1.0)
        assert u.scheme == EXACT_PIECEWISE
        exact = max(exact, law_residuals(u, rng))
    ratios = []
    for n in DIMS:
        h = random_smooth_hamiltonian(rng, n)
        ref = rk4_propagator(h, 0.0, 1.0, 1e-4)
        errs = [norm(Propagator(h, 0.0, 1.0, IntegratorConfig(max_step=dt))(1.0, 0.0) - ref)
                for dt in (4e-3, 2e-3, 1e-3)]
        ratios += [errs[0] / errs[1], errs[1] / errs[2]]
    ok = exact <= 1e-9 and magnus <= 1e-7 and min(ratios) >= 3.5
    return ok, f"exact-piecewise {exact:.2e} <= 1e-9, magnus {magnus:.2e} <= 1e-7, " \
               f"min halving ratio {min(ratios):.2f} >= 3.5"


def criterion_2():
    rng = np.random.default_rng(202)
    worst = 0.0
    for k in range(100):
        n = (2, 3, 4)[k % 3]
        _, u, T = system(rng, n, KINDS[k % 3])
        atlas = T.atlas
        a = random_observable(rng, n)
        psi0 = random_state(rng, n)

        def psi(s, psi0=psi0, u=u):
            return u(s, 0.0) @ psi0

        t, t1 = rng.uniform(0.05, 0.95, size=2)
        V = UnitaryFamily(t1, random_unitary_curve(rng, n, t1), n)
        ref = mean_value(a(t), psi(t))
        F, S = lift_observable(atlas, a), lift_state(atlas, psi)
        means = [
            mean_value(to_heisenberg_observable(u, a, t, 0.0), psi0),
            fibre_mean_value(F, S, t),
            fibre_mean(atlas, 0.0, heisenberg_morphism(T, F, t, 0.0), S(0.0)),
        ]
        pv, av = to_v_picture(V, psi(t), a(t), t)
        means.append(mean_value(av, pv))
        pb, ab = to_bundle_v_picture(V, atlas, S(t), F(t), t)
        means.append(fibre_mean(atlas, t1, ab, pb))
        worst = max(worst, max(abs(m - ref) for m in means))
    return worst <= 1e-9, f"max |picture mean - Schrodinger mean| {worst:.2e} <= 1e-9 over 100 tuples"


def criterion_3():
    rng = np.random.default_rng(303)
    worst = 0.0
    for k in range(50):
        n = (2, 3, 4)[k % 3]
        h, u, T = system(rng, n, KINDS[k % 3])
        a = random_observable(rng, n, static=(k % 5 == 0))
        t = rng.uniform(0.1, 0.9)
        worst = max(worst, heisenberg_eom_residual(u, h, a, t, 0.0, FD),
                    bundle_heisenberg_eom_residual(T, h, a, t, 0.0, FD))
    u = Propagator(HamiltonianFamily.constant(SIGMA_Z), 0.0, 1.0)
    golden = norm(to_heisenberg_observable(u, SIGMA_X, np.pi / 4, 0.0) + SIGMA_Y)
    ok = worst <= 1e-5 and golden <= 1e-8
    return ok, f"eom residual {worst:.2e} <= 1e-5 on 50 systems, sigma_x(pi/4) + sigma_y {golden:.2e} <= 1e-8"


def criterion_4():
    rng = np.random.default_rng(404)
    transport, gamma = 0.0, 0.0
    for k in range(20):
        n = (2, 3, 4)[k % 3]
        _, _, T = system(rng, n, KINDS[k % 3])
        t0 = rng.uniform(0.2, 0.8)
        seed = random_hermitian(rng, n, 0.3) + np.eye(n)
        E = normal_frame(T, t0, seed)
        for t in (0.1, 0.5, 0.9):
            transport = max(transport, norm(transport_matrix(T, t, t0, E.basis) - np.eye(n)))
            gamma = max(gamma, norm(E.gamma(t)))
    ok = transport <= 1e-9 and gamma <= 1e-5
    return ok, f"transport matrix - 1 {transport:.2e} <= 1e-9, |Gamma| {gamma:.2e} <= 1e-5 on 20 systems"


def criterion_5():
    rng = np.random.default_rng(505)
    slopes, annihilated, two_sided = [], 0.0, 0.0
    eps = np.array([1e-2, 5e-3, 2.5e-3, 1.25e-3])
    for k in range(6):
        n = (2, 3, 4)[k % 3]
        _, _, T = system(rng, n, KINDS[k % 3])
        atlas = T.atlas
        F = lift_observable(atlas, random_observable(rng, n))
        t = rng.uniform(0.3, 0.7)
        d = morphism_derivation(T, F, t, FD)
        errs = [norm(morphism_derivation_limit(T, F, t, e) - d) for e in eps]
        slopes.append(np.polyfit(np.log(eps), np.log(errs), 1)[0])
        a0 = F(0.0)
        moved = MorphismField(atlas, lambda s, a0=a0: transport_morphism(T, a0, 0.0, s))
        scale = max(1.0, fibre_operator_norm(atlas, t, moved(t)))
        annihilated = max(annihilated,
                          fibre_operator_norm(atlas, t, morphism_derivation(T, moved, t, FD)) / scale)
        lhs = central_difference(lambda s: heisenberg_morphism(T, F, s, 0.0), t, FD)
        rhs = transport_morphism(T, d, t, 0.0)
        scale = max(1.0, fibre_operator_norm(atlas, 0.0, F(0.0)))
        two_sided = max(two_sided, fibre_operator_norm(atlas, 0.0, lhs - rhs) / scale)
    ok = min(slopes) >= 0.9 and annihilated <= 1e-5 and two_sided <= 1e-5
    return ok, f"min slope {min(slopes):.3f} >= 0.9, D(U) {annihilated:.2e} <= 1e-5, " \
               f"Heisenberg derivation {two_sided:.2e} <= 1e-5"


def criterion_6():
    rng = np.random.default_rng(606)
    eqs, exact_id, heis, ident = 0.0, True, 0.0, 0.0
    for k in range(20):
        n = (2, 3, 4)[k % 3]
        h, u, T = system(rng, n, KINDS[k % 3])
        atlas = T.atlas
        psi0 = random_state(rng, n)

        def psi(s, psi0=psi0, u=u):
            return u(s, 0.0) @ psi0

        a = random_observable(rng, n)
        t1 = rng.uniform(0.1, 0.9)
        V = UnitaryFamily(t1, random_unitary_curve(rng, n, t1), n)
        t = rng.uniform(0.1, 0.9)
        eqs = max(eqs, *v_eom_residuals(V, h, psi, a, t, FD),
                  *bundle_v_eom_residuals(V, atlas, h, psi, a, t, FD),
                  v_propagator_residual(V, h, u, t, 0.3))

        one = UnitaryFamily.identity(n)
        pv, av = to_v_picture(one, psi(t), a(t), t)
        hv, gen, hmod = v_hamiltonians(one, h, t)
        exact_id &= (np.array_equal(pv, psi(t)) and np.array_equal(av, a(t))
                     and np.array_equal(v_propagator(one, u, t, 0.2), u(t, 0.2))
                     and np.array_equal(hv, h(t)) and not gen.any() and np.array_equal(hmod, h(t)))

        VH = UnitaryFamily.from_propagator(u, 0.0)
        pv, av = to_v_picture(VH, psi(t), a(t), t)
        heis = max(heis, norm(av - to_heisenberg_observable(u, a, t, 0.0)), norm(pv - psi0))

        VT = UnitaryFamily.from_propagator(u, 0.0)
        ident = max(ident, norm(heisenberg_propagator(u, t, 0.0) - np.eye(n)),
                    norm(bundle_v_propagator(VT, T, t, 0.0) - np.eye(n)))
    # identity to rounding: a few ulps of the unitary products
    ok = eqs <= 1e-5 and exact_id and heis <= 1e-10 and ident <= 1e-13
    return ok, f"V equations {eqs:.2e} <= 1e-5, identity collapse bit-exact={exact_id}, " \
               f"V=U vs Heisenberg {heis:.2e} <= 1e-10, Heisenberg propagator - 1 {ident:.2e} <= 1e-13"


def criterion_7():
    rng = np.random.default_rng(707)
    split, eqs = 0.0, 0.0
    grid = np.linspace(0.0, 1.0, 101)
    for k in range(20):
        n = (2, 3, 4)[k % 3]
        h0 = random_smooth_hamiltonian(rng, n)
        raw = random_smooth_hamiltonian(rng, n)
        c = 0.5 * min(norm(h0(s)) for s in grid) / max(norm(raw(s)) for s in grid)
        hi = HamiltonianFamily(lambda s, raw=raw, c=c: c * raw(s), n,
                               lambda s, raw=raw, c=c: c * raw.derivative(s))
        ip = interaction_picture(h0, hi, 0.0, 1.0, cfg=IntegratorConfig(max_step=1e-3))
        split = max(split, norm(ip.free(1.0, 0.0) @ ip.interaction(1.0, 0.0) - ip.full(1.0, 0.0)))
        psi0 = random_state(rng, n)
        a = random_observable(rng, n)
        for t in (0.25, 0.5, 0.75):
            eqs = max(eqs, *interaction_eom_residuals(ip, lambda s: ip.full(s, 0.0) @ psi0, a, t, FD))
    ok = split <= 1e-6 and eqs <= 1e-5
    return ok, f"|U0 U_I - U| {split:.2e} <= 1e-6 on 20 pairs, picture equations {eqs:.2e} <= 1e-5"


def criterion_8():
    rng = np.random.default_rng(808)
    tol = Tolerance(1e-5, 0.0)
    disagreements, wrong, cases = 0, 0, 0
    for k in range(60):
        n = (2, 3, 4)[k % 3]
        h = random_smooth_hamiltonian(rng, n)
        u = Propagator(h, 0.0, 1.0)
        integral = k < 30
        if integral:
            a0 = random_hermitian(rng, n)

            def target(s, a0=a0, u=u):
                return u(s, 0.0) @ a0 @ u(0.0, s)
        else:
            target = random_observable(rng, n)
        seed = int(rng.integers(1 << 30))
        for kind in KINDS:
            T = EvolutionTransport(make_atlas(kind, PATH, n, seed, 10), u)
            F = lift_observable(T.atlas, target)
            frames = [None]
            if kind == "invertible-field":
                frames += [frame_field(T, random_gauge(rng, n)) for _ in range(10)]
            for frame in frames:
                v = certify(u, T, F, tol, frame=frame, rng=np.random.default_rng(seed))
                cases += 1
                flags = [r <= tol.abs for r in v.residuals().values()]
                separated = all(r <= tol.abs for r in v.residuals().values()) or all(
                    r > 10 * tol.abs for r in v.residuals().values())
                disagreements += (len(set(flags)) > 1) or not separated
                wrong += v.is_integral != integral
    drift = 0.0
    for k in range(10):
        n = (2, 3, 4)[k % 3]
        hm = random_hermitian(rng, n)
        u = Propagator(HamiltonianFamily.constant(hm), 0.0, 1.0)
        vecs = np.linalg.eigh(hm)[1]
        eigen, d = eigenvalue_constancy_check(u, hm, vecs[:, k % n], np.linspace(0.1, 1.0, 10), 0.0)
        drift = max(drift, d if eigen else np.inf)
    ok = disagreements == 0 and wrong == 0 and drift <= 1e-8
    return ok, f"{cases} certifications: {disagreements} disagreements, {wrong} wrong verdicts; " \
               f"eigenvalue drift {drift:.2e} <= 1e-8"


def criterion_9():
    def cli(*args):
        return subprocess.run([sys.executable, "-m", "qbundle.harness.cli", *args],
                              capture_output=True, check=False)

    runs = [cli("run", str(GOLDEN)) for _ in range(3)]
    outputs = {r.stdout for r in runs}
    identical = len(outputs) == 1 and runs[0].stdout == GOLDEN_REPORT.read_bytes()
    codes_ok = all(r.returncode == 0 for r in runs)
    with tempfile.TemporaryDirectory() as tmp:
        bad = Path(tmp) / "bad.yaml"
        bad.write_text("dimension: 2\nbogus: 1\n")
        small = Path(tmp) / "small.yaml"
        small.write_text("dimension: 2\nhamiltonian: {kind: pauli-series, terms: [{pauli: z}]}\n"
                         "checks: [propagator]\n")
        codes_ok &= cli("run", str(small), "--tol", "1e-15").returncode == 1
        codes_ok &= cli("run", str(bad)).returncode == 2
        codes_ok &= cli("frobnicate").returncode == 2
        codes_ok &= cli("validate", str(GOLDEN)).returncode == 0
    return identical and codes_ok, f"3 runs byte-identical to golden={identical}, exit codes 0/1/2 honored={codes_ok}"


CRITERIA = [
    (1, "propagator laws", criterion_1),
    (2, "picture equivalence of means", criterion_2),
    (3, "Heisenberg equation", criterion_3),
    (4, "normal frames", criterion_4),
    (5, "induced derivation consistency", criterion_5),
    (6, "V-picture", criterion_6),
    (7, "interaction splitting", criterion_7),
    (8, "integrals of motion", criterion_8),
    (9, "harness determinism", criterion_9),
]


def evaluate(fn):
    start = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - start


def line(number, name, ok, detail, seconds):
    return f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} ({detail}) [{seconds:.1f}s]"


@pytest.mark.parametrize("number,name,fn", CRITERIA, ids=[f"criterion-{c[0]}" for c in CRITERIA])
def test_criterion(number, name, fn, capsys):
    ok, detail, seconds = evaluate(fn)
    with capsys.disabled():
        print("\n" + line(number, name, ok, detail, seconds))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for number, name, fn in CRITERIA:
        ok, detail, seconds = evaluate(fn)
        results.append(ok)
        print(line(number, name, ok, detail, seconds), flush=True)
    sys.exit(0 if all(results) else 1)
