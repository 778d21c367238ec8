"""Separation checks and cardinality bounds for reachable belief sets.

A family of maps is *separated* when two members that agree at one point
agree everywhere.  The ∂-variant only asks this on the points both maps
keep inside ``X``.  A model whose composed step mappings form a ∂-separated
family has at most ``1 + (2^k - k)·|X|`` reachable beliefs, where ``k`` is
the size of the initial support.

Admissibility.  A model may restrict controls per state.  When it does,
two readings of "separated" are possible: the raw tables (every control
applied everywhere) or the tables cut down to admissible pairs, which is
what the dynamic programming recursion explores.  The checks below try the
raw reading first and fall back to the admissible one; the verdict records
which one succeeded so the bound can be compared against the matching
reachable set.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from .measure import CEMETERY, Belief, StepMapping
from .model import DetPomdpModel
from .reachability import (
    DEFAULT_BELIEF_CAP,
    DEFAULT_CLOSURE_CAP,
    CapExceeded,
    MappingClosure,
    dynamics_closure,
    mapping_closure,
    reachable_layers,
    replay_path,
)

log = logging.getLogger(__name__)

SEPARATED_EXACT = "separated_exact"
SEPARATED_BY_DYNAMICS = "separated_by_dynamics"
SEPARATED_BY_AFFINE = "separated_by_affine_structure"
SEPARATED_BY_PRODUCT = "separated_by_product_structure"
NOT_SEPARATED = "not_separated"
UNDETERMINED_CAP = "undetermined_cap"

_SEPARATED = {SEPARATED_EXACT, SEPARATED_BY_DYNAMICS, SEPARATED_BY_AFFINE, SEPARATED_BY_PRODUCT}


class AnalysisWarning(UserWarning):
    pass


def _table(g) -> tuple:
    return g.images if isinstance(g, StepMapping) else tuple(g)


# ---------------------------------------------------------------- mapping sets

def is_separated_mapping_set(maps: Iterable) -> tuple:
    """Check that any two maps agreeing at one point are equal.

    ``maps`` holds total tables (sequences or :class:`StepMapping`) over a
    common domain.  Returns ``(True, None)`` or ``(False, (g1, g2, y, y2))``
    where ``g1(y) == g2(y)`` and ``g1(y2) != g2(y2)``.
    """
    tables = list(dict.fromkeys(_table(g) for g in maps))
    if not tables:
        return True, None
    n = len(tables[0])
    if any(len(t) != n for t in tables):
        raise ValueError("all maps must share one domain")
    for y in range(n):
        seen: dict = {}
        for t in tables:
            other = seen.setdefault(t[y], t)
            if other is not t:
                y2 = next(z for z in range(n) if other[z] != t[z])
                return False, (other, t, y, y2)
    return True, None


def _live(table) -> frozenset:
    return frozenset(x for x, v in enumerate(table) if v is not CEMETERY)


def cemetery_pair_witness(g1, g2) -> Optional[tuple]:
    """``(y, y2)`` showing that ``g1, g2`` are not ∂-separated, or ``None``.

    Only points sent into ``X`` by both maps count.  When no such point
    exists the pair is separated vacuously.
    """
    t1, t2 = _table(g1), _table(g2)
    agree = differ = None
    for y, (a, b) in enumerate(zip(t1, t2)):
        if a is CEMETERY or b is CEMETERY:
            continue
        if a == b:
            if agree is None:
                agree = y
        elif differ is None:
            differ = y
        if agree is not None and differ is not None:
            return agree, differ
    return None


def is_cemetery_separated(maps: Iterable) -> tuple:
    """∂-separation of a set of maps fixing ∂.

    Returns ``(True, None)`` or ``(False, (g1, g2, y, y2))`` with both maps
    live at ``y`` and ``y2``, equal at ``y`` and different at ``y2``.
    """
    tables = list(dict.fromkeys(_table(g) for g in maps))
    if not tables:
        return True, None
    n = len(tables[0])
    if any(len(t) != n for t in tables):
        raise ValueError("all maps must share one domain")
    checked: set = set()
    # Only pairs that agree somewhere can fail, so bucket by (point, value).
    for y in range(n):
        buckets: dict = {}
        for k, t in enumerate(tables):
            if t[y] is not CEMETERY:
                buckets.setdefault(t[y], []).append(k)
        for members in buckets.values():
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    pair = (members[a], members[b])
                    if pair in checked:
                        continue
                    checked.add(pair)
                    w = cemetery_pair_witness(tables[pair[0]], tables[pair[1]])
                    if w is not None:
                        return False, (tables[pair[0]], tables[pair[1]]) + w
    return True, None


# ---------------------------------------------------------------- structure

def _numeric_labels(model: DetPomdpModel) -> Optional[list]:
    try:
        values = [Fraction(s) for s in model.states]
    except (ValueError, ZeroDivisionError):
        return None
    if len(set(values)) != len(values):
        return None
    return values


def verify_structure(model: DetPomdpModel, respect_admissibility: bool = False) -> bool:
    """Check the declared affine/product shape against the dynamics table.

    Affine means ``f_t(x, u) = x + g_t(u)`` and product ``f_t(x, u) = x·g_t(u)``
    with ``0`` not a state, both read on the numeric state labels.  With
    ``respect_admissibility`` only admissible pairs are checked.
    """
    s = model.structure
    if s is None or s.kind not in ("affine", "product"):
        return False
    labels = _numeric_labels(model)
    if labels is None:
        return False
    if s.kind == "product" and 0 in labels:
        return False
    if len(s.g) not in (1, model.horizon):
        return False
    if any(len(sl) != model.n_controls for sl in s.g):
        return False
    slices = max(len(s.g), len(model.dynamics), len(model.admissible))
    for t in range(slices):
        g = s.g[0 if len(s.g) == 1 else t]
        dyn, adm = model.dynamics_at(t), model.admissible_at(t)
        for x in range(model.n_states):
            allowed = adm[x] if respect_admissibility else range(model.n_controls)
            for u in allowed:
                gu = Fraction(g[u])
                want = labels[x] + gu if s.kind == "affine" else labels[x] * gu
                if labels[dyn[x][u]] != want:
                    return False
    return True


# ---------------------------------------------------------------- model verdicts

@dataclass(frozen=True)
class SeparationWitness:
    """Two step sequences whose composed maps break ∂-separation.

    ``kind`` is ``"step"`` (observation-filtered mappings) or ``"dynamics"``.
    """

    kind: str
    path1: tuple
    path2: tuple
    agree_at: int
    differ_at: int
    respect_admissibility: bool


def replay_witness(model: DetPomdpModel, w: SeparationWitness) -> bool:
    """Rebuild both maps from their paths and confirm the violation."""
    g1 = replay_path(model, w.path1, w.respect_admissibility)
    g2 = replay_path(model, w.path2, w.respect_admissibility)
    a, d = w.agree_at, w.differ_at
    live = all(g(p) is not CEMETERY for g in (g1, g2) for p in (a, d))
    return live and g1(a) == g2(a) and g1(d) != g2(d)


@dataclass
class SeparationVerdict:
    status: str
    witness: Optional[SeparationWitness] = None
    trace: list = field(default_factory=list)
    restricted_to_admissible: bool = False

    @property
    def separated(self) -> bool:
        return self.status in _SEPARATED


def _closure_check(model, kind, cap, respect) -> tuple:
    """Exact check on one closure; returns ``(ok, witness, size)``."""
    if kind == "dynamics":
        closure = dynamics_closure(model, cap=cap, respect_admissibility=respect)
    else:
        closure = mapping_closure(model, cap=cap, respect_admissibility=respect)
    union = closure.union()
    if kind == "dynamics" and not respect:
        ok, wit = is_separated_mapping_set(union)
    else:
        ok, wit = is_cemetery_separated(union)
    if ok:
        return True, None, len(union)
    g1, g2, y, y2 = wit
    path1 = union[StepMapping(g1)]
    path2 = union[StepMapping(g2)]
    return False, SeparationWitness(kind, path1, path2, y, y2, respect), len(union)


def exact_separation(model: DetPomdpModel, *, cap: int = DEFAULT_CLOSURE_CAP,
                     respect_admissibility: bool = False) -> tuple:
    """∂-separation of the composed step mappings, checked table by table.

    Returns ``(ok, witness, closure_size)``.  Raises :class:`CapExceeded`
    when the closure outgrows ``cap``.
    """
    return _closure_check(model, "step", cap, respect_admissibility)


def dynamics_separation(model: DetPomdpModel, *, cap: int = DEFAULT_CLOSURE_CAP,
                        respect_admissibility: bool = False) -> tuple:
    """Separation of the composed state maps (observations ignored)."""
    return _closure_check(model, "dynamics", cap, respect_admissibility)


def check_separated_dpomdp(model: DetPomdpModel, *, closure_cap: int = DEFAULT_CLOSURE_CAP) -> SeparationVerdict:
    """Classify the model, cheapest test first.

    Order: declared affine structure, declared product structure, composed
    dynamics, then the exact check on the step-mapping closure.  Only the
    last one can conclude ``not_separated``.  Caps lead to
    ``undetermined_cap`` rather than an error.
    """
    trace: list = []
    modes = [False] if model.full_admissibility else [False, True]

    if model.structure is not None:
        status = SEPARATED_BY_AFFINE if model.structure.kind == "affine" else SEPARATED_BY_PRODUCT
        for respect in modes:
            ok = verify_structure(model, respect)
            trace.append(f"{model.structure.kind} structure"
                         f"{' on admissible pairs' if respect else ''}: {'verified' if ok else 'fails'}")
            if ok:
                return SeparationVerdict(status, trace=trace, restricted_to_admissible=respect)
    else:
        trace.append("no declared structure")

    capped = False
    for respect in modes:
        where = " on admissible pairs" if respect else ""
        try:
            ok, _, size = dynamics_separation(model, cap=closure_cap, respect_admissibility=respect)
        except CapExceeded as exc:
            trace.append(f"composed dynamics{where}: {exc}")
            capped = True
            continue
        trace.append(f"composed dynamics{where}: {size} maps, {'separated' if ok else 'not separated'}")
        if ok:
            return SeparationVerdict(SEPARATED_BY_DYNAMICS, trace=trace, restricted_to_admissible=respect)

    first_witness = None
    for respect in modes:
        where = " on admissible pairs" if respect else ""
        try:
            ok, wit, size = exact_separation(model, cap=closure_cap, respect_admissibility=respect)
        except CapExceeded as exc:
            trace.append(f"step-mapping closure{where}: {exc}")
            capped = True
            continue
        trace.append(f"step-mapping closure{where}: {size} maps, {'separated' if ok else 'not separated'}")
        if ok:
            return SeparationVerdict(SEPARATED_EXACT, trace=trace, restricted_to_admissible=respect)
        if first_witness is None:
            first_witness = wit
    if capped:
        return SeparationVerdict(UNDETERMINED_CAP, trace=trace)
    return SeparationVerdict(NOT_SEPARATED, witness=first_witness, trace=trace)


def preimage_group_sizes(closure: MappingClosure | Iterable) -> dict:
    """Count distinct closure maps per live domain (points not sent to ∂).

    For a ∂-separated family each group has at most ``|X|`` members.
    """
    maps = closure.union() if isinstance(closure, MappingClosure) else closure
    groups: dict = {}
    for g in maps:
        dom = _live(_table(g))
        groups[dom] = groups.get(dom, 0) + 1
    return groups


# ---------------------------------------------------------------- bounds

def bound_littman(model: DetPomdpModel) -> int:
    n = model.n_states
    return (1 + n) ** n


@dataclass(frozen=True)
class DetPomdpBound:
    term_a: int
    term_b: Optional[int]
    value: int
    note: str = ""


def bound_detpomdp(model: DetPomdpModel, b0: Belief) -> DetPomdpBound:
    """``min((1+|X|)^k, 1 + k·|U|^(T+1))`` with ``k = |supp b0|``.

    The second term needs at least two controls; with one control only the
    first term is reported.
    """
    k = len(b0.states)
    a = (1 + model.n_states) ** k
    if model.n_controls > 1:
        b = 1 + k * model.n_controls ** (model.horizon + 1)
        return DetPomdpBound(a, b, min(a, b))
    return DetPomdpBound(a, None, a, "single control: second term not applicable")


def stable_set(model: DetPomdpModel, b0: Belief, respect_admissibility: bool = False) -> frozenset:
    """Smallest superset of ``supp b0`` closed under every ``f_t(., u)``."""
    slices = max(len(model.dynamics), len(model.admissible))
    found = set(b0.states)
    frontier = list(found)
    while frontier:
        x = frontier.pop()
        for t in range(slices):
            row = model.dynamics_at(t)[x]
            allowed = model.admissible_at(t)[x] if respect_admissibility else range(model.n_controls)
            for u in allowed:
                y = row[u]
                if y not in found:
                    found.add(y)
                    frontier.append(y)
    return frozenset(found)


def _check_stable(model, b0, A, respect) -> None:
    A = frozenset(A)
    if not set(b0.states) <= A:
        raise ValueError("the stable set must contain the support of the initial belief")
    slices = max(len(model.dynamics), len(model.admissible))
    for t in range(slices):
        dyn, adm = model.dynamics_at(t), model.admissible_at(t)
        for x in A:
            allowed = adm[x] if respect else range(model.n_controls)
            for u in allowed:
                if dyn[x][u] not in A:
                    raise ValueError(f"set is not stable: state {x} moves to {dyn[x][u]} under control {u}")


def bound_separated(model: DetPomdpModel, b0: Belief, stable: Optional[Iterable[int]] = None, *,
                    verdict: Optional[SeparationVerdict] = None) -> int:
    """``1 + (2^k - k)·|A|`` with ``A = X`` unless a stable set is given.

    The bound is only meaningful for separated models; pass the verdict to
    get a warning when it does not apply.  A given ``stable`` set is checked
    for containment and stability first.
    """
    respect = verdict.restricted_to_admissible if verdict is not None else False
    if verdict is not None and not verdict.separated:
        warnings.warn(f"model is not known to be separated ({verdict.status})", AnalysisWarning)
    k = len(b0.states)
    size = model.n_states
    if stable is not None:
        _check_stable(model, b0, stable, respect)
        size = len(frozenset(stable))
    return 1 + (2**k - k) * size


def sci(n: int) -> str:
    """Short decimal approximation of a (possibly huge) integer."""
    if n < 10**6:
        return str(n)
    digits = str(n)
    return f"{digits[0]}.{digits[1:4]}e+{len(digits) - 1}"


@dataclass
class BoundsReport:
    """Reachable-set size next to every bound that applies.

    ``empirical`` is ``|B^R_[1,T]|`` with every control applied,
    ``empirical_admissible`` the same count when only belief-admissible
    controls are expanded.  The separated bounds are compared with the count
    matching the verdict's admissibility reading.
    """

    littman: int
    thm1: DetPomdpBound
    thm2: Optional[int]
    thm2_stable: Optional[int]
    stable_set_size: Optional[int]
    empirical: int
    empirical_with_b0: int
    empirical_admissible: int
    separation: SeparationVerdict
    conformance: dict = field(default_factory=dict)
    tight: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.conformance.values())

    @property
    def violations(self) -> list:
        return [k for k, v in self.conformance.items() if not v]

    def rows(self) -> list:
        """``(field, value)`` pairs in a fixed order, for text/CSV output."""
        out = [
            ("littman", self.littman),
            ("littman_approx", sci(self.littman)),
            ("thm1_term_a", self.thm1.term_a),
            ("thm1_term_b", "" if self.thm1.term_b is None else self.thm1.term_b),
            ("thm1", self.thm1.value),
            ("thm1_approx", sci(self.thm1.value)),
            ("separation", self.separation.status),
            ("restricted_to_admissible", str(self.separation.restricted_to_admissible).lower()),
            ("thm2", "" if self.thm2 is None else self.thm2),
            ("thm2_stable", "" if self.thm2_stable is None else self.thm2_stable),
            ("stable_set_size", "" if self.stable_set_size is None else self.stable_set_size),
            ("empirical", self.empirical),
            ("empirical_with_b0", self.empirical_with_b0),
            ("empirical_admissible", self.empirical_admissible),
        ]
        for name in sorted(self.conformance):
            out.append((f"conform_{name}", str(self.conformance[name]).lower()))
        out.append(("tight", str(any(self.tight.values())).lower()))
        for name in sorted(self.tight):
            out.append((f"tight_{name}", str(self.tight[name]).lower()))
        return out


def _union_size(reach, start: int) -> int:
    if reach.depth < start:
        return 0
    return reach.cumulative_sizes(start)[-1]


def verify_bounds(model: DetPomdpModel, b0: Optional[Belief] = None, *,
                  cap_beliefs: int = DEFAULT_BELIEF_CAP,
                  closure_cap: int = DEFAULT_CLOSURE_CAP,
                  verdict: Optional[SeparationVerdict] = None) -> BoundsReport:
    """Enumerate the reachable set and compare it with every applicable bound."""
    if b0 is None:
        b0 = model.initial_belief
    if b0 is None or b0.is_cemetery:
        raise ValueError("bounds need an initial belief on the states")
    if verdict is None:
        verdict = check_separated_dpomdp(model, closure_cap=closure_cap)

    reach = reachable_layers(model, b0, cap=cap_beliefs)
    empirical = _union_size(reach, 1)
    with_b0 = _union_size(reach, 0)
    if model.full_admissibility:
        empirical_adm = empirical
    else:
        empirical_adm = _union_size(reachable_layers(model, b0, admissible_only=True, cap=cap_beliefs), 1)

    littman = bound_littman(model)
    thm1 = bound_detpomdp(model, b0)
    report = BoundsReport(littman, thm1, None, None, None, empirical, with_b0, empirical_adm, verdict)
    report.conformance["littman"] = with_b0 <= littman
    report.conformance["thm1"] = empirical <= thm1.value
    report.tight["thm1"] = empirical == thm1.value
    if verdict.separated:
        respect = verdict.restricted_to_admissible
        count = empirical_adm if respect else empirical
        report.thm2 = bound_separated(model, b0)
        A = stable_set(model, b0, respect)
        report.stable_set_size = len(A)
        report.thm2_stable = bound_separated(model, b0, A, verdict=verdict)
        report.conformance["thm2"] = count <= report.thm2
        report.conformance["thm2_stable"] = count <= report.thm2_stable
        report.tight["thm2"] = count == report.thm2
        report.tight["thm2_stable"] = count == report.thm2_stable
    log.debug("bounds: %s", report.rows())
    return report

