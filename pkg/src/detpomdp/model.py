"""Det-POMDP problem instances: data type, validation, file format, generators.

A model is a finite-horizon deterministic POMDP.  All tables are indexed by
integer positions into ``states``, ``controls`` and ``observations``.  Every
time-indexed table holds either one slice (the same data at every time step)
or exactly ``horizon`` slices.

Costs are exact :class:`~fractions.Fraction` values or :data:`INF`.
"""

from __future__ import annotations

import json
import math
import random
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Optional, Sequence

from .measure import Belief, make_belief

INF = math.inf

ERROR = "error"
WARNING = "warning"

_RATIONAL_RE = re.compile(r"^\s*-?\d+(\s*/\s*\d+)?\s*$")


class ModelError(ValueError):
    """A model document or object cannot be used."""


class ModelSyntaxError(ModelError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ModelValidationError(ModelError):
    def __init__(self, report: "ValidationReport"):
        errors = [i for i in report.issues if i[0] == ERROR]
        lines = "; ".join(f"{path}: {msg}" for _, path, msg in errors)
        super().__init__(f"invalid model ({len(errors)} error(s)): {lines}")
        self.report = report


class ModelWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Structure:
    """Declared shape of the dynamics on numeric state labels.

    ``kind`` is ``"affine"`` (``f_t(x, u) = x + g_t(u)``) or ``"product"``
    (``f_t(x, u) = x * g_t(u)``).  ``g`` has one or ``horizon`` slices, each
    indexed by control.  The declaration is only trusted after
    :func:`detpomdp.analysis.verify_structure` checks it against ``dynamics``.
    """

    kind: str
    g: tuple


@dataclass(frozen=True)
class DetPomdpModel:
    horizon: int
    states: tuple
    controls: tuple
    observations: tuple
    dynamics: tuple
    obs0: tuple
    obs: tuple
    cost: tuple
    final_cost: tuple
    admissible: tuple
    initial_belief: Optional[Belief] = None
    structure: Optional[Structure] = None

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    @property
    def stationary(self) -> bool:
        return all(len(t) == 1 for t in (self.dynamics, self.obs, self.cost, self.admissible))

    @property
    def stationary_filter(self) -> bool:
        """True when the belief dynamics do not depend on time."""
        return len(self.dynamics) == 1 and len(self.obs) == 1

    @property
    def full_admissibility(self) -> bool:
        every = tuple(range(self.n_controls))
        return all(tuple(a) == every for s in self.admissible for a in s)

    def dynamics_at(self, t: int) -> tuple:
        return self.dynamics[0 if len(self.dynamics) == 1 else t]

    def obs_at(self, t: int) -> tuple:
        """Observation table ``h_{t+1}[y][u]`` used after the step from ``t``."""
        return self.obs[0 if len(self.obs) == 1 else t]

    def cost_at(self, t: int) -> tuple:
        return self.cost[0 if len(self.cost) == 1 else t]

    def admissible_at(self, t: int) -> tuple:
        return self.admissible[0 if len(self.admissible) == 1 else t]

    def f(self, t: int, x: int, u: int) -> int:
        return self.dynamics_at(t)[x][u]

    def h(self, t: int, y: int, u: int) -> int:
        """Observation emitted at time ``t+1`` from state ``y`` after control ``u``."""
        return self.obs_at(t)[y][u]

    def state_index(self, label) -> int:
        return self.states.index(str(label))

    def belief_from_labels(self, weights: dict) -> Belief:
        return make_belief({self.state_index(k): v for k, v in weights.items()})


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(sev == ERROR for sev, _, _ in self.issues)

    @property
    def errors(self) -> list:
        return [i for i in self.issues if i[0] == ERROR]

    def add(self, severity: str, path: str, message: str) -> None:
        self.issues.append((severity, path, message))


def _valid_cost(value) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, (int, Fraction)):
        return True
    return isinstance(value, float) and value == INF


def validate_model(model: DetPomdpModel) -> ValidationReport:
    """Check finiteness, table shapes and index ranges; never raises."""
    report = ValidationReport()
    err = lambda path, msg: report.add(ERROR, path, msg)
    T = model.horizon
    if not isinstance(T, int) or isinstance(T, bool) or T < 1:
        err("horizon", f"horizon must be a positive integer, got {T!r}")
        return report
    nx, nu, no = len(model.states), len(model.controls), len(model.observations)
    for name, n in (("states", nx), ("controls", nu), ("observations", no)):
        if n < 1:
            err(name, "must be non-empty")
    for name, labels in (("states", model.states), ("controls", model.controls),
                         ("observations", model.observations)):
        if len(set(labels)) != len(labels):
            err(name, "labels must be distinct")
    if not report.ok:
        return report

    def check_slices(name, table):
        if len(table) not in (1, T):
            err(name, f"expected 1 or {T} time slices, got {len(table)}")
            return False
        return True

    def check_index(path, v, n):
        if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < n:
            err(path, f"index {v!r} out of range [0, {n})")

    def check_grid(name, table, inner, check):
        for s, sl in enumerate(table):
            if len(sl) != nx:
                err(f"{name}[{s}]", f"expected {nx} rows, got {len(sl)}")
                continue
            for x, row in enumerate(sl):
                if inner is None:
                    check(f"{name}[{s}][{x}]", row)
                    continue
                if len(row) != inner:
                    err(f"{name}[{s}][{x}]", f"expected {inner} entries, got {len(row)}")
                    continue
                for u, v in enumerate(row):
                    check(f"{name}[{s}][{x}][{u}]", v)

    if check_slices("dynamics", model.dynamics):
        check_grid("dynamics", model.dynamics, nu, lambda p, v: check_index(p, v, nx))
    if check_slices("obs", model.obs):
        check_grid("obs", model.obs, nu, lambda p, v: check_index(p, v, no))
    if len(model.obs0) != nx:
        err("obs0", f"expected {nx} entries, got {len(model.obs0)}")
    else:
        for x, v in enumerate(model.obs0):
            check_index(f"obs0[{x}]", v, no)

    def check_cost(path, v):
        if not _valid_cost(v):
            err(path, f"cost must be a finite rational or inf, got {v!r}")

    if check_slices("cost", model.cost):
        check_grid("cost", model.cost, nu, check_cost)
    if len(model.final_cost) != nx:
        err("final_cost", f"expected {nx} entries, got {len(model.final_cost)}")
    else:
        for x, v in enumerate(model.final_cost):
            check_cost(f"final_cost[{x}]", v)

    def check_adm(path, v):
        for u in v:
            check_index(path, u, nu)
        if len(set(v)) != len(v):
            err(path, "duplicate control indices")
        elif not v:
            report.add(WARNING, path, "no admissible control (value will be +inf)")

    if check_slices("admissible", model.admissible):
        check_grid("admissible", model.admissible, None, check_adm)

    b = model.initial_belief
    if b is not None and not b.is_cemetery:
        for x in b.states:
            check_index("initial_belief", x, nx)

    if model.structure is not None:
        st = model.structure
        if st.kind not in ("affine", "product"):
            err("structure.kind", f"unknown structure {st.kind!r}")
        if len(st.g) not in (1, T):
            err("structure.g", f"expected 1 or {T} time slices, got {len(st.g)}")
        for s, sl in enumerate(st.g):
            if len(sl) != nu:
                err(f"structure.g[{s}]", f"expected {nu} entries, got {len(sl)}")
        for x, label in enumerate(model.states):
            try:
                Fraction(label)
            except (ValueError, ZeroDivisionError):
                err(f"states[{x}]", "structured dynamics need numeric state labels")
    return report


# -- document format ---------------------------------------------------------

_FIELDS = ("horizon", "states", "controls", "observations", "dynamics", "obs0",
           "obs", "cost", "final_cost", "admissible")


def _emit_rational(v):
    if isinstance(v, float) and v == INF:
        return "inf"
    v = Fraction(v)
    return v.numerator if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _read_rational(v, allow_inf: bool):
    """Parse a literal; malformed literals are returned as-is for validation to flag."""
    if isinstance(v, bool):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        s = v.strip()
        if allow_inf and s == "inf":
            return INF
        if _RATIONAL_RE.match(s):
            try:
                return Fraction(s.replace(" ", ""))
            except ZeroDivisionError:
                return v
    return v


def serialize_model(model: DetPomdpModel) -> str:
    """Canonical text form: sorted keys, one top-level key per line, reduced fractions."""
    doc: dict[str, Any] = {
        "horizon": model.horizon,
        "stationary": model.stationary,
        "states": list(model.states),
        "controls": list(model.controls),
        "observations": list(model.observations),
        "dynamics": [[list(r) for r in sl] for sl in model.dynamics],
        "obs0": list(model.obs0),
        "obs": [[list(r) for r in sl] for sl in model.obs],
        "cost": [[[_emit_rational(v) for v in r] for r in sl] for sl in model.cost],
        "final_cost": [_emit_rational(v) for v in model.final_cost],
        "admissible": [[sorted(a) for a in sl] for sl in model.admissible],
    }
    if model.initial_belief is not None:
        doc["initial_belief"] = {
            model.states[x]: _emit_rational(p)
            for x, p in model.initial_belief.probabilities().items()
        }
    if model.structure is not None:
        doc["structure"] = {
            "kind": model.structure.kind,
            "g": [[_emit_rational(v) for v in sl] for sl in model.structure.g],
        }
    lines = [f"  {json.dumps(k)}: {json.dumps(doc[k], sort_keys=True)}" for k in sorted(doc)]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def parse_model(text: str) -> DetPomdpModel:
    """Inverse of :func:`serialize_model`; raises :class:`ModelError` subclasses."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ModelSyntaxError("top level must be an object", 1, 1)
    missing = [k for k in _FIELDS if k not in doc]
    if missing:
        raise ModelError(f"missing field(s): {', '.join(missing)}")

    def tup(v):
        return tuple(tup(i) for i in v) if isinstance(v, list) else v

    labels = {k: tuple(str(s) for s in doc[k]) for k in ("states", "controls", "observations")}
    cost = tuple(tuple(tuple(_read_rational(v, True) for v in r) for r in sl) for sl in doc["cost"])
    final_cost = tuple(_read_rational(v, True) for v in doc["final_cost"])
    admissible = tuple(tuple(tuple(sorted(a)) for a in sl) for sl in doc["admissible"])

    belief = None
    if doc.get("initial_belief") is not None:
        raw = doc["initial_belief"]
        weights = {}
        for label, w in raw.items():
            if label not in labels["states"]:
                raise ModelError(f"initial_belief: unknown state label {label!r}")
            value = _read_rational(w, False)
            if not isinstance(value, Fraction):
                raise ModelError(f"initial_belief[{label}]: not an exact rational: {w!r}")
            weights[labels["states"].index(label)] = value
        try:
            belief = make_belief(weights)
        except ValueError as exc:
            raise ModelError(f"initial_belief: {exc}") from None

    structure = None
    if doc.get("structure") is not None:
        st = doc["structure"]
        g = tuple(tuple(_read_rational(v, False) for v in sl) for sl in st.get("g", []))
        structure = Structure(st.get("kind"), g)

    model = DetPomdpModel(
        horizon=doc["horizon"],
        states=labels["states"],
        controls=labels["controls"],
        observations=labels["observations"],
        dynamics=tup(doc["dynamics"]),
        obs0=tup(doc["obs0"]),
        obs=tup(doc["obs"]),
        cost=cost,
        final_cost=final_cost,
        admissible=admissible,
        initial_belief=belief,
        structure=structure,
    )
    report = validate_model(model)
    if not report.ok:
        raise ModelValidationError(report)
    if "stationary" in doc and bool(doc["stationary"]) != model.stationary:
        raise ModelError("stationary flag disagrees with the number of time slices")
    return model


def load_model(path) -> DetPomdpModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def save_model(model: DetPomdpModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_model(model))


# -- generators --------------------------------------------------------------

def gen_tight_bound(n: int, horizon: Optional[int] = None) -> DetPomdpModel:
    """Separated instance whose reachable set meets ``1 + (2^k - k)·n`` exactly.

    Control ``u1`` keeps the state, ``u2`` rotates ``x_i -> x_{i+1}`` (and
    ``x_n -> x_1``).  Observation ``o2`` is emitted only at ``x_n`` after
    ``u1``.  The initial belief is uniform on ``{x1, x2}``.
    """
    if n < 3:
        raise ValueError(f"tight-bound construction needs n >= 3, got {n}")
    T = 2 * n if horizon is None else horizon
    dyn = tuple((x, (x + 1) % n) for x in range(n))
    obs = tuple((1 if y == n - 1 else 0, 0) for y in range(n))
    zero = Fraction(0)
    return DetPomdpModel(
        horizon=T,
        states=tuple(f"x{i}" for i in range(1, n + 1)),
        controls=("u1", "u2"),
        observations=("o1", "o2"),
        dynamics=(dyn,),
        obs0=tuple(1 if x == n - 1 else 0 for x in range(n)),
        obs=(obs,),
        cost=(tuple((zero, zero) for _ in range(n)),),
        final_cost=tuple(zero for _ in range(n)),
        admissible=(tuple((0, 1) for _ in range(n)),),
        initial_belief=make_belief({0: Fraction(1, 2), 1: Fraction(1, 2)}),
    )


def square_wave_prices(horizon: int, period: int = 20, levels=(1, 3)) -> tuple:
    """Periodic selling prices alternating between two levels."""
    half = period // 2
    return tuple(Fraction(levels[0] if (t % period) < half else levels[1]) for t in range(horizon))


@dataclass(frozen=True)
class TankParams:
    states: tuple
    controls: tuple
    thresholds: tuple
    horizon: int
    prices: Optional[tuple] = None
    initial_support: Optional[tuple] = None
    belief_seed: int = 0


PRESETS = {
    "paper-1": TankParams(
        states=tuple(range(301)),
        controls=tuple(range(10)),
        thresholds=(0, 1) + tuple(range(20, 301, 20)),
        horizon=100,
        initial_support=tuple(range(260, 301)),
    ),
    "paper-2": TankParams(
        states=tuple(range(301)),
        controls=tuple(range(10)),
        thresholds=(1, 6, 11, 51, 101, 151, 201, 251),
        horizon=100,
        initial_support=tuple(range(260, 301)),
    ),
}


def generic_belief(support: Iterable[int], seed: int, scale: int = 10**9) -> dict:
    """Random positive integer weights (normalized) on ``support``.

    With weights drawn from a range this large, renormalized restrictions of
    the belief to different sub-intervals are distinct with overwhelming
    probability, which is what the tank cardinality relies on.
    """
    rng = random.Random(seed)
    raw = {x: rng.randint(1, scale) for x in support}
    total = sum(raw.values())
    return {x: Fraction(w, total) for x, w in raw.items()}


def gen_tank(params: TankParams) -> DetPomdpModel:
    """Partially observed tank emptied by integer withdrawals.

    ``f(x, u) = x - u``, observed through the highest threshold not above the
    level, with ``u`` admissible iff ``u <= x``.  ``prices`` are selling
    prices per unit; the stage cost is ``-price_t * u``.  Inadmissible withdrawals
    (``u > x``) are clamped to the lowest level so the table stays total;
    they are never taken by an admissible policy.  Levels below the lowest
    threshold emit an extra ``"floor"`` observation.
    """
    xs = sorted(int(x) for x in params.states)
    us = sorted(int(u) for u in params.controls)
    thresholds = sorted(int(o) for o in params.thresholds)
    T = params.horizon
    if not xs or not us or not thresholds:
        raise ValueError("states, controls and thresholds must be non-empty")
    if min(us) > max(xs):
        raise ValueError("every withdrawal exceeds the largest level")
    if min(xs) < 0 or min(us) < 0:
        raise ValueError("levels and withdrawals are nonnegative integers")
    if max(thresholds) > max(xs):
        warnings.warn(f"thresholds above {max(xs)} are never observed", ModelWarning)
    obs_labels = [str(o) for o in thresholds]
    floor = None
    if min(thresholds) > min(xs):
        warnings.warn("levels below the lowest threshold observe 'floor'", ModelWarning)
        floor = len(obs_labels)
        obs_labels.append("floor")

    index = {x: i for i, x in enumerate(xs)}

    def observe(x):
        below = [j for j, o in enumerate(thresholds) if o <= x]
        return below[-1] if below else floor

    dyn, adm = [], []
    for x in xs:
        row, allowed = [], []
        for j, u in enumerate(us):
            if u <= x:
                if x - u not in index:
                    raise ValueError(f"level {x} - {u} is not on the state grid")
                row.append(index[x - u])
                allowed.append(j)
            else:
                row.append(0)
        dyn.append(tuple(row))
        adm.append(tuple(allowed))
    h = tuple(tuple(observe(y) for _ in us) for y in xs)

    prices = square_wave_prices(T) if params.prices is None else tuple(Fraction(p) for p in params.prices)
    if len(prices) < T:
        raise ValueError(f"need {T} prices, got {len(prices)}")
    prices = prices[:T]
    slices = [prices[0]] if len(set(prices)) == 1 else prices
    # Selling water earns money, so the stage cost is minus the revenue.
    cost = tuple(tuple(tuple(-c * u for u in us) for _ in xs) for c in slices)

    belief = None
    if params.initial_support:
        weights = generic_belief(params.initial_support, params.belief_seed)
        belief = make_belief({index[x]: w for x, w in weights.items()})

    return DetPomdpModel(
        horizon=T,
        states=tuple(str(x) for x in xs),
        controls=tuple(str(u) for u in us),
        observations=tuple(obs_labels),
        dynamics=(tuple(dyn),),
        obs0=tuple(observe(x) for x in xs),
        obs=(h,),
        cost=cost,
        final_cost=tuple(Fraction(0) for _ in xs),
        admissible=(tuple(adm),),
        initial_belief=belief,
        structure=Structure("affine", (tuple(Fraction(-u) for u in us),)),
    )


def gen_random(
    seed: int,
    sizes: Sequence[int],
    *,
    affine: bool = False,
    product: bool = False,
    full_admissibility: bool = False,
    adm_rate: float = 0.75,
    inf_cost_rate: float = 0.0,
    stationary: bool = True,
    support_size: Optional[int] = None,
    max_cost: int = 5,
) -> DetPomdpModel:
    """Seeded random instance of the given ``(|X|, |U|, |O|, T)``.

    ``affine`` uses integer levels with ``f_t(x, u) = clamp(x + g_t(u))``;
    ``product`` uses levels ``1..n`` with ``f_t(x, u) = clamp(x * g_t(u))``.
    In both cases a control is admissible only where the unclamped value
    stays on the grid, so the declared structure holds on admissible pairs.
    """
    nx, nu, no, T = sizes
    if min(nx, nu, no, T) < 1:
        raise ValueError(f"all sizes must be >= 1, got {tuple(sizes)}")
    if affine and product:
        raise ValueError("choose at most one of affine/product")
    rng = random.Random(seed)
    n_slices = 1 if stationary else T

    if affine:
        levels = list(range(nx))
    elif product:
        levels = list(range(1, nx + 1))
    else:
        levels = None

    structure = None
    dynamics, admissible = [], []
    if levels is None:
        for _ in range(n_slices):
            dynamics.append(tuple(tuple(rng.randrange(nx) for _ in range(nu)) for _ in range(nx)))
            admissible.append(tuple(_random_subset(rng, nu, 1.0 if full_admissibility else adm_rate)
                                    for _ in range(nx)))
    else:
        gs = []
        lo, hi = levels[0], levels[-1]
        for _ in range(n_slices):
            if affine:
                g = tuple(rng.randint(-2, 2) for _ in range(nu))
                raw = [[x + g[u] for u in range(nu)] for x in levels]
            else:
                g = tuple(rng.choice((1, 1, 2, 3)) for _ in range(nu))
                raw = [[x * g[u] for u in range(nu)] for x in levels]
            gs.append(tuple(Fraction(v) for v in g))
            dynamics.append(tuple(tuple(min(max(v, lo), hi) - lo for v in row) for row in raw))
            rows = []
            for row in raw:
                if full_admissibility:
                    rows.append(tuple(range(nu)))
                else:
                    rows.append(tuple(u for u in range(nu) if lo <= row[u] <= hi))
            admissible.append(tuple(rows))
        structure = Structure("affine" if affine else "product", tuple(gs))

    obs = [tuple(tuple(rng.randrange(no) for _ in range(nu)) for _ in range(nx)) for _ in range(n_slices)]

    def draw_cost():
        if inf_cost_rate and rng.random() < inf_cost_rate:
            return INF
        return Fraction(rng.randint(0, max_cost))

    cost = [tuple(tuple(draw_cost() for _ in range(nu)) for _ in range(nx)) for _ in range(n_slices)]
    final_cost = tuple(draw_cost() for _ in range(nx))

    k = support_size if support_size is not None else rng.randint(1, nx)
    k = max(1, min(k, nx))
    supp = sorted(rng.sample(range(nx), k))
    raw_w = {x: rng.randint(1, 20) for x in supp}
    total = sum(raw_w.values())
    belief = make_belief({x: Fraction(w, total) for x, w in raw_w.items()})

    labels = [str(v) for v in levels] if levels is not None else [f"s{i}" for i in range(nx)]
    return DetPomdpModel(
        horizon=T,
        states=tuple(labels),
        controls=tuple(f"a{j}" for j in range(nu)),
        observations=tuple(f"z{j}" for j in range(no)),
        dynamics=tuple(dynamics),
        obs0=tuple(rng.randrange(no) for _ in range(nx)),
        obs=tuple(obs),
        cost=tuple(cost),
        final_cost=final_cost,
        admissible=tuple(admissible),
        initial_belief=belief,
        structure=structure,
    )


def _random_subset(rng: random.Random, n: int, rate: float) -> tuple:
    if rate >= 1.0:
        return tuple(range(n))
    return tuple(u for u in range(n) if rng.random() < rate)
