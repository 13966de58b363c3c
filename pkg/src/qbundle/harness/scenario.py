"""Scenario documents: parsing, validation, canonical form, and digests.

Scenarios are YAML (JSON is accepted as a subset). Field names and
defaults::

    dimension: 2                 # required
    hbar: 1.0
    seed: 0
    time: {t0: 0.0, t1: 1.0, steps: 200}
    hamiltonian: <operator spec> # required
    atlas: {kind: identity}      # or unitary-field(seed) / invertible-field(seed, cond_cap)
    observables: []              # list of operator specs, each with optional name
    pictures: [schrodinger, heisenberg, v, interaction]
    checks: [all]
    tolerances: {abs: 1.0e-5, rel: 0.0}

Operator specs are tagged by ``kind``: ``constant-matrix`` (``matrix``),
``piecewise-constant`` (``breakpoints``, ``matrices``), ``pauli-series``
(``terms`` of ``{pauli, coeff}`` with ``coeff`` a number or
``{fn: const|sin|cos|poly, args: [...]}``), and ``explicit-samples``
(``times``, ``matrices``, linearly interpolated).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from ..errors import ParseError, ValidationError
from ..linalg import MAX_DIM, Tolerance, pauli_string
from ..propagation import HamiltonianFamily

OPERATOR_KINDS = ("constant-matrix", "piecewise-constant", "pauli-series", "explicit-samples")
COEFF_FNS = ("const", "sin", "cos", "poly")
PICTURE_KINDS = ("schrodinger", "heisenberg", "v", "interaction")
ATLAS_KINDS = ("identity", "unitary-field", "invertible-field")

TOP_KEYS = {
    "dimension", "hbar", "seed", "time", "hamiltonian", "atlas", "observables",
    "pictures", "checks", "tolerances",
}

DEFAULT_STEPS = 200
DEFAULT_TOL = 1e-5


@dataclass(frozen=True)
class TimeSpec:
    t0: float = 0.0
    t1: float = 1.0
    steps: int = DEFAULT_STEPS

    @property
    def max_step(self) -> float:
        return (self.t1 - self.t0) / self.steps


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    data: dict
    name: str = ""


@dataclass(frozen=True)
class AtlasSpec:
    kind: str = "identity"
    seed: int = 0
    cond_cap: float = 100.0


@dataclass(frozen=True)
class PictureSpec:
    kind: str
    seed: int | None = None
    split: Any = "diagonal"


@dataclass(frozen=True)
class ScenarioSpec:
    dimension: int
    hamiltonian: OperatorSpec
    hbar: float = 1.0
    seed: int = 0
    time: TimeSpec = field(default_factory=TimeSpec)
    atlas: AtlasSpec = field(default_factory=AtlasSpec)
    observables: tuple[OperatorSpec, ...] = ()
    pictures: tuple[PictureSpec, ...] = tuple(PictureSpec(k) for k in PICTURE_KINDS)
    checks: tuple[str, ...] = ("all",)
    tolerances: Tolerance = field(default_factory=lambda: Tolerance(DEFAULT_TOL, 0.0))

    def picture(self, kind: str) -> PictureSpec | None:
        for p in self.pictures:
            if p.kind == kind:
                return p
        return None

    def canonical(self) -> dict:
        """JSON-ready normal form; two specs are equal iff their canonical forms are."""
        return {
            "dimension": self.dimension,
            "hbar": self.hbar,
            "seed": self.seed,
            "time": {"t0": self.time.t0, "t1": self.time.t1, "steps": self.time.steps},
            "hamiltonian": _canonical_operator(self.hamiltonian),
            "atlas": {"kind": self.atlas.kind, "seed": self.atlas.seed,
                      "cond_cap": self.atlas.cond_cap},
            "observables": [_canonical_operator(o) for o in self.observables],
            "pictures": [{"kind": p.kind, "seed": p.seed, "split": p.split} for p in self.pictures],
            "checks": list(self.checks),
            "tolerances": {"abs": self.tolerances.abs, "rel": self.tolerances.rel},
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "ScenarioSpec":
        from dataclasses import replace

        return replace(self, **changes)


def _canonical_operator(o: OperatorSpec) -> dict:
    return {"kind": o.kind, "name": o.name, **_plain(o.data)}


def _plain(x):
    """Replace complex entries by ``[re, im]`` pairs so the tree is JSON-ready."""
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


# Parsing ---------------------------------------------------------------------

class _Located:
    """Python value tree built from YAML nodes, remembering source lines."""

    def __init__(self):
        self.lines: dict[tuple, int] = {}

    def convert(self, node, path=()):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                key = self.convert(k, path + ("<key>",))
                if not isinstance(key, str):
                    raise ParseError("mapping keys must be strings", k.start_mark.line + 1)
                if key in out:
                    raise ParseError("duplicate key", k.start_mark.line + 1, _fmt(path + (key,)))
                self.lines[path + (key,)] = k.start_mark.line + 1
                out[key] = self.convert(v, path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self.convert(v, path + (i,)) for i, v in enumerate(node.value)]
        return yaml.safe_load(yaml.serialize(node))


def _fmt(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


class _Parser:
    def __init__(self, located: _Located):
        self.loc = located

    def line(self, path):
        while path and path not in self.loc.lines:
            path = path[:-1]
        return self.loc.lines.get(path)

    def fail(self, msg, path):
        raise ParseError(msg, self.line(path), _fmt(path))

    def keys(self, d, allowed, path, required=()):
        if not isinstance(d, dict):
            self.fail("expected a mapping", path)
        for k in d:
            if k not in allowed:
                self.fail(f"unknown key {k!r}", path + (k,))
        for k in required:
            if k not in d:
                self.fail(f"missing required key {k!r}", path)

    def number(self, v, path, integer=False):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail("expected a number", path)
        if integer:
            if isinstance(v, float) and not v.is_integer():
                self.fail("expected an integer", path)
            return int(v)
        if not math.isfinite(v):
            self.fail("expected a finite number", path)
        return float(v)

    def complex_entry(self, v, path):
        if isinstance(v, bool):
            self.fail("expected a complex number", path)
        if isinstance(v, (int, float)):
            return complex(v)
        if isinstance(v, str):
            try:
                return complex(v.replace(" ", "").replace("i", "j"))
            except ValueError:
                self.fail(f"cannot read {v!r} as a complex number", path)
        if isinstance(v, list) and len(v) == 2:
            return complex(self.number(v[0], path + (0,)), self.number(v[1], path + (1,)))
        self.fail("expected a number, a complex string, or a [re, im] pair", path)

    def matrix(self, v, path):
        if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
            self.fail("expected a list of rows", path)
        n = len(v)
        if any(len(r) != n for r in v):
            self.fail("matrix must be square", path)
        rows = [[self.complex_entry(x, path + (i, j)) for j, x in enumerate(r)]
                for i, r in enumerate(v)]
        return rows

    def coeff(self, v, path):
        if v is None:
            return {"fn": "const", "args": [1.0]}
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return {"fn": "const", "args": [self.number(v, path)]}
        self.keys(v, {"fn", "args"}, path, required=("fn",))
        fn = v["fn"]
        if fn not in COEFF_FNS:
            self.fail(f"coefficient function must be one of {COEFF_FNS}", path + ("fn",))
        args = v.get("args", [])
        if not isinstance(args, list):
            self.fail("args must be a list", path + ("args",))
        args = [self.number(a, path + ("args", i)) for i, a in enumerate(args)]
        limits = {"const": (1, 1), "sin": (1, 3), "cos": (1, 3), "poly": (1, 64)}
        lo, hi = limits[fn]
        if not lo <= len(args) <= hi:
            self.fail(f"{fn} takes between {lo} and {hi} arguments", path + ("args",))
        return {"fn": fn, "args": args}

    def operator(self, v, path, allow_name=False):
        if not isinstance(v, dict):
            self.fail("operator spec must be a mapping with a 'kind'", path)
        kind = v.get("kind")
        if kind not in OPERATOR_KINDS:
            self.fail(f"kind must be one of {OPERATOR_KINDS}", path + ("kind",))
        extra = {"name"} if allow_name else set()
        name = ""
        if allow_name and "name" in v:
            if not isinstance(v["name"], str):
                self.fail("name must be a string", path + ("name",))
            name = v["name"]
        if kind == "constant-matrix":
            self.keys(v, {"kind", "matrix"} | extra, path, required=("matrix",))
            data = {"matrix": self.matrix(v["matrix"], path + ("matrix",))}
        elif kind == "piecewise-constant":
            self.keys(v, {"kind", "breakpoints", "matrices"} | extra, path,
                      required=("breakpoints", "matrices"))
            bps = v["breakpoints"]
            if not isinstance(bps, list):
                self.fail("breakpoints must be a list", path + ("breakpoints",))
            mats = v["matrices"]
            if not isinstance(mats, list):
                self.fail("matrices must be a list", path + ("matrices",))
            data = {
                "breakpoints": [self.number(b, path + ("breakpoints", i)) for i, b in enumerate(bps)],
                "matrices": [self.matrix(m, path + ("matrices", i)) for i, m in enumerate(mats)],
            }
        elif kind == "pauli-series":
            self.keys(v, {"kind", "terms"} | extra, path, required=("terms",))
            terms = v["terms"]
            if not isinstance(terms, list) or not terms:
                self.fail("terms must be a non-empty list", path + ("terms",))
            out = []
            for i, term in enumerate(terms):
                tp = path + ("terms", i)
                self.keys(term, {"pauli", "coeff"}, tp, required=("pauli",))
                label = term["pauli"]
                if not isinstance(label, str) or not label or set(label.lower()) - set("ixyz"):
                    self.fail("pauli label must be a string over i, x, y, z", tp + ("pauli",))
                out.append({"pauli": label.lower(), "coeff": self.coeff(term.get("coeff"), tp + ("coeff",))})
            data = {"terms": out}
        else:
            self.keys(v, {"kind", "times", "matrices"} | extra, path, required=("times", "matrices"))
            times, mats = v["times"], v["matrices"]
            if not isinstance(times, list) or not isinstance(mats, list):
                self.fail("times and matrices must be lists", path)
            data = {
                "times": [self.number(t, path + ("times", i)) for i, t in enumerate(times)],
                "matrices": [self.matrix(m, path + ("matrices", i)) for i, m in enumerate(mats)],
            }
        return OperatorSpec(kind, data, name)

    def picture(self, v, path, root_seed):
        if isinstance(v, str):
            kind, opts = v, {}
        elif isinstance(v, dict) and len(v) == 1:
            (kind, opts), = v.items()
            opts = {} if opts is None else opts
        else:
            self.fail("picture must be a name or a one-key mapping", path)
        if kind not in PICTURE_KINDS:
            self.fail(f"picture must be one of {PICTURE_KINDS}", path)
        if kind in ("schrodinger", "heisenberg"):
            if opts:
                self.fail(f"picture {kind!r} takes no options", path)
            return PictureSpec(kind)
        if kind == "v":
            self.keys(opts, {"seed"}, path + ("v",))
            seed = self.number(opts.get("seed", root_seed), path + ("v", "seed"), integer=True)
            return PictureSpec("v", seed=seed)
        self.keys(opts, {"split"}, path + ("interaction",))
        split = opts.get("split", "diagonal")
        if split != "diagonal":
            split = self.number(split, path + ("interaction", "split"), integer=True)
        return PictureSpec("interaction", split=split)


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse and validate a scenario document, filling defaults."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"malformed document: {getattr(exc, 'problem', exc)}",
                         None if mark is None else mark.line + 1) from None
    if node is None:
        raise ParseError("empty scenario document", 1)
    loc = _Located()
    doc = loc.convert(node)
    p = _Parser(loc)
    p.keys(doc, TOP_KEYS, (), required=("dimension", "hamiltonian"))

    dim = p.number(doc["dimension"], ("dimension",), integer=True)
    hbar = p.number(doc.get("hbar", 1.0), ("hbar",))
    seed = p.number(doc.get("seed", 0), ("seed",), integer=True)

    t = doc.get("time", {})
    p.keys(t, {"t0", "t1", "steps"}, ("time",))
    time = TimeSpec(
        p.number(t.get("t0", 0.0), ("time", "t0")),
        p.number(t.get("t1", 1.0), ("time", "t1")),
        p.number(t.get("steps", DEFAULT_STEPS), ("time", "steps"), integer=True),
    )

    ham = p.operator(doc["hamiltonian"], ("hamiltonian",))

    a = doc.get("atlas", {"kind": "identity"})
    if isinstance(a, str):
        a = {"kind": a}
    p.keys(a, {"kind", "seed", "cond_cap"}, ("atlas",), required=("kind",))
    if a["kind"] not in ATLAS_KINDS:
        p.fail(f"atlas kind must be one of {ATLAS_KINDS}", ("atlas", "kind"))
    atlas = AtlasSpec(
        a["kind"],
        p.number(a.get("seed", seed), ("atlas", "seed"), integer=True),
        p.number(a.get("cond_cap", 100.0), ("atlas", "cond_cap")),
    )

    obs_raw = doc.get("observables", [])
    if not isinstance(obs_raw, list):
        p.fail("observables must be a list", ("observables",))
    observables = tuple(p.operator(o, ("observables", i), allow_name=True)
                        for i, o in enumerate(obs_raw))
    observables = tuple(
        o if o.name else OperatorSpec(o.kind, o.data, f"A{i}") for i, o in enumerate(observables)
    )

    pics_raw = doc.get("pictures", list(PICTURE_KINDS))
    if not isinstance(pics_raw, list):
        p.fail("pictures must be a list", ("pictures",))
    pictures = tuple(p.picture(v, ("pictures", i), seed) for i, v in enumerate(pics_raw))

    checks = doc.get("checks", ["all"])
    if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
        p.fail("checks must be a list of names", ("checks",))

    tol = doc.get("tolerances", {})
    p.keys(tol, {"abs", "rel"}, ("tolerances",))
    tol_abs = p.number(tol.get("abs", DEFAULT_TOL), ("tolerances", "abs"))
    tol_rel = p.number(tol.get("rel", 0.0), ("tolerances", "rel"))

    spec = ScenarioSpec(
        dimension=dim, hamiltonian=ham, hbar=hbar, seed=seed, time=time, atlas=atlas,
        observables=observables, pictures=pictures, checks=tuple(checks),
        tolerances=_tolerance(tol_abs, tol_rel),
    )
    validate(spec)
    return spec


def _tolerance(a, r) -> Tolerance:
    try:
        return Tolerance(a, r)
    except ValueError as exc:
        raise ValidationError(str(exc), "tolerances") from None


# Validation ------------------------------------------------------------------

def validate(spec: ScenarioSpec) -> None:
    """Check the cross-field invariants of a scenario."""
    from .checks import expand_checks

    n = spec.dimension
    if not 1 <= n <= MAX_DIM:
        raise ValidationError(f"dimension must lie in [1, {MAX_DIM}]", "dimension")
    if spec.hbar <= 0:
        raise ValidationError("hbar must be positive", "hbar")
    if not spec.time.t1 > spec.time.t0:
        raise ValidationError("time.t1 must exceed time.t0", "time")
    if spec.time.steps < 4:
        raise ValidationError("time.steps must be at least 4", "time.steps")
    if spec.atlas.cond_cap < 1:
        raise ValidationError("cond_cap must be at least 1", "atlas.cond_cap")
    _validate_operator(spec.hamiltonian, n, "hamiltonian")
    names = set()
    for i, o in enumerate(spec.observables):
        _validate_operator(o, n, f"observables[{i}]")
        if o.name in names:
            raise ValidationError(f"duplicate observable name {o.name!r}", f"observables[{i}]")
        names.add(o.name)
    kinds = [p.kind for p in spec.pictures]
    if len(set(kinds)) != len(kinds):
        raise ValidationError("each picture may appear once", "pictures")
    ip = spec.picture("interaction")
    if ip is not None and ip.split != "diagonal":
        if spec.hamiltonian.kind != "pauli-series":
            raise ValidationError("an integer split needs a pauli-series hamiltonian",
                                  "pictures.interaction.split")
        nterms = len(spec.hamiltonian.data["terms"])
        if not 0 <= ip.split <= nterms:
            raise ValidationError(f"split must lie in [0, {nterms}]", "pictures.interaction.split")
    expand_checks(spec.checks)


def _validate_operator(o: OperatorSpec, n: int, where: str) -> None:
    def check_matrix(rows, field):
        m = np.asarray(rows, dtype=complex)
        if m.shape != (n, n):
            raise ValidationError(
                f"dimension mismatch: {m.shape[0]}x{m.shape[1]} matrix in a dimension-{n} scenario",
                field,
            )
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise ValidationError("matrix is not Hermitian", field)

    if o.kind == "constant-matrix":
        check_matrix(o.data["matrix"], f"{where}.matrix")
    elif o.kind == "piecewise-constant":
        bps, mats = o.data["breakpoints"], o.data["matrices"]
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValidationError("breakpoints must be strictly increasing", f"{where}.breakpoints")
        if len(mats) != len(bps) + 1:
            raise ValidationError("need one more matrix than breakpoints", f"{where}.matrices")
        for i, m in enumerate(mats):
            check_matrix(m, f"{where}.matrices[{i}]")
    elif o.kind == "pauli-series":
        for i, term in enumerate(o.data["terms"]):
            if 2 ** len(term["pauli"]) != n:
                raise ValidationError(
                    f"dimension mismatch: Pauli string {term['pauli']!r} acts on dimension "
                    f"{2 ** len(term['pauli'])}, scenario has {n}",
                    f"{where}.terms[{i}].pauli",
                )
    else:
        times, mats = o.data["times"], o.data["matrices"]
        if len(times) < 2 or len(times) != len(mats):
            raise ValidationError("need at least two samples and one matrix per time", where)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("sample times must be strictly increasing", f"{where}.times")
        for i, m in enumerate(mats):
            check_matrix(m, f"{where}.matrices[{i}]")


# Building families -----------------------------------------------------------

def _coefficient(c):
    fn, args = c["fn"], c["args"]
    if fn == "const":
        (v,) = args
        return (lambda t: v), (lambda t: 0.0)
    if fn in ("sin", "cos"):
        amp, w, ph = (list(args) + [1.0, 0.0])[:3] if len(args) > 1 else (args[0], 1.0, 0.0)
        if len(args) == 2:
            amp, w, ph = args[0], args[1], 0.0
        if fn == "sin":
            return (lambda t: amp * math.sin(w * t + ph)), (lambda t: amp * w * math.cos(w * t + ph))
        return (lambda t: amp * math.cos(w * t + ph)), (lambda t: -amp * w * math.sin(w * t + ph))
    coeffs = list(args)

    def poly(t):
        return sum(c * t ** k for k, c in enumerate(coeffs))

    def dpoly(t):
        return sum(k * c * t ** (k - 1) for k, c in enumerate(coeffs) if k)

    return poly, dpoly


def build_family(o: OperatorSpec, hbar: float = 1.0) -> HamiltonianFamily:
    if o.kind == "constant-matrix":
        return HamiltonianFamily.constant(np.asarray(o.data["matrix"], dtype=complex), hbar)
    if o.kind == "piecewise-constant":
        return HamiltonianFamily.piecewise_constant(
            o.data["breakpoints"], [np.asarray(m, dtype=complex) for m in o.data["matrices"]], hbar
        )
    if o.kind == "pauli-series":
        terms = []
        for term in o.data["terms"]:
            f, df = _coefficient(term["coeff"])
            terms.append((f, df, pauli_string(term["pauli"])))
        fam = HamiltonianFamily.from_terms(terms, hbar)
        if all(t["coeff"]["fn"] == "const" for t in o.data["terms"]):
            return HamiltonianFamily.constant(fam(0.0), hbar)
        return fam
    times = np.asarray(o.data["times"], dtype=float)
    mats = np.asarray(o.data["matrices"], dtype=complex)

    def value(t):
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        w = np.clip((t - times[k]) / (times[k + 1] - times[k]), 0.0, 1.0)
        return (1 - w) * mats[k] + w * mats[k + 1]

    def slope(t):
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        if t < times[0] or t > times[-1]:
            return np.zeros_like(mats[0])
        return (mats[k + 1] - mats[k]) / (times[k + 1] - times[k])

    return HamiltonianFamily(value, mats.shape[1], slope, hbar, "general")


def split_hamiltonian(spec: ScenarioSpec, split) -> tuple[HamiltonianFamily, HamiltonianFamily]:
    """Free and interaction parts of the scenario Hamiltonian."""
    hbar = spec.hbar
    if split == "diagonal":
        full = build_family(spec.hamiltonian, hbar)

        def diag(t):
            return np.diag(np.diag(full(t)))

        def ddiag(t):
            return np.diag(np.diag(full.derivative(t)))

        kind = "constant" if full.kind == "constant" else "general"
        h0 = HamiltonianFamily(diag, full.dim, ddiag, hbar, kind)
        hi = HamiltonianFamily(lambda t: full(t) - diag(t), full.dim,
                               lambda t: full.derivative(t) - ddiag(t), hbar, kind)
        return h0, hi
    terms = spec.hamiltonian.data["terms"]
    zero = HamiltonianFamily.zero(spec.dimension, hbar)

    def part(ts):
        if not ts:
            return zero
        return build_family(OperatorSpec("pauli-series", {"terms": ts}), hbar)

    return part(terms[:split]), part(terms[split:])
