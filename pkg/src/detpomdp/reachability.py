"""Reachable belief sets and closures of composed step mappings.

Beliefs are interned: each distinct belief gets a dense integer id and the
layers store ids.  When the filter is stationary, the successors of a belief
are computed once and reused at every time step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from .filtering import StepKey, admissible_belief_controls, expand, step_mapping
from .measure import CEMETERY_BELIEF, Belief, StepMapping, backward_restrict, compose_mappings, pushforward, renormalize
from .model import DetPomdpModel

log = logging.getLogger(__name__)

DEFAULT_BELIEF_CAP = 10**7
DEFAULT_CLOSURE_CAP = 10**5


class CapExceeded(RuntimeError):
    def __init__(self, what: str, cap: int):
        super().__init__(f"{what} exceeded the cap of {cap}")
        self.cap = cap


@dataclass
class ReachLayers:
    """Layered reachable sets ``B^R_0, ..., B^R_t_max`` from ``b0``.

    ``layers[t]`` is a sorted tuple of belief ids; ``beliefs[i]`` is the
    belief with id ``i``.  ``transitions[(key, i)]`` holds, per control, the
    flattened ``(mass, successor_id, ...)`` branches with nonzero
    probability, or ``None`` when the control was not expanded.
    """

    model: DetPomdpModel
    b0: Belief
    admissible_only: bool
    beliefs: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    layers: list = field(default_factory=list)
    transitions: dict = field(default_factory=dict)
    first_seen: list = field(default_factory=list)

    def intern(self, b: Belief, t: int) -> int:
        i = self.index.get(b.key)
        if i is None:
            i = self.index[b.key] = len(self.beliefs)
            self.beliefs.append(b)
            self.first_seen.append(t)
        return i

    def id_of(self, b: Belief) -> int:
        return self.index[b.key]

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def cemetery_id(self) -> Optional[int]:
        return self.index.get(CEMETERY_BELIEF.key)

    def layer(self, t: int) -> list:
        return [self.beliefs[i] for i in self.layers[t]]

    def layer_sizes(self) -> list:
        return [len(layer) for layer in self.layers]

    def cumulative_sizes(self, start: int = 0) -> list:
        """``|B^R_[start, t]|`` for every ``t >= start``."""
        seen: set = set()
        out = []
        for layer in self.layers[start:]:
            seen.update(layer)
            out.append(len(seen))
        return out

    def cemetery_reached(self) -> list:
        cem = self.cemetery_id
        return [cem is not None and cem in set(layer) for layer in self.layers]

    def union_ids(self, t_from: int, t_to: int) -> set:
        if not 0 <= t_from < t_to <= self.depth:
            raise ValueError(f"need 0 <= t_from < t_to <= {self.depth}, got [{t_from}, {t_to}]")
        out: set = set()
        for layer in self.layers[t_from:t_to + 1]:
            out.update(layer)
        return out

    def transition_key(self, t: int):
        return (0 if _time_invariant(self.model, self.admissible_only) else t)


def _time_invariant(model: DetPomdpModel, admissible_only: bool) -> bool:
    if not model.stationary_filter:
        return False
    return not admissible_only or len(model.admissible) == 1


def _expand_belief(model: DetPomdpModel, reach: ReachLayers, t: int, i: int, n_obs: int):
    b = reach.beliefs[i]
    if b.is_cemetery:
        return (None,) * model.n_controls, frozenset((i,))
    if reach.admissible_only:
        allowed = set(admissible_belief_controls(model, t, b))
    else:
        allowed = None
    per_u = []
    succ = set()
    cem_needed = False
    for u in range(model.n_controls):
        if allowed is not None and u not in allowed:
            per_u.append(None)
            continue
        branches = expand(model, t, b, u)
        flat = []
        for o in sorted(branches):
            mass, post = branches[o]
            j = reach.intern(post, t + 1)
            flat.append(mass)
            flat.append(j)
            succ.add(j)
        if len(branches) < n_obs:
            cem_needed = True
        per_u.append(tuple(flat))
    if cem_needed:
        succ.add(reach.intern(CEMETERY_BELIEF, t + 1))
    return tuple(per_u), frozenset(succ)


def reachable_layers(
    model: DetPomdpModel,
    b0: Belief,
    t_max: Optional[int] = None,
    *,
    admissible_only: bool = False,
    cap: int = DEFAULT_BELIEF_CAP,
) -> ReachLayers:
    """Breadth-first enumeration of the reachable beliefs up to ``t_max``.

    Every control and every observation is applied, so δ_∂ appears as soon
    as some observation is impossible.  With ``admissible_only`` a belief is
    expanded only through the controls admissible on its whole support,
    which is all the dynamic programming recursion ever visits.
    """
    T = model.horizon if t_max is None else t_max
    if not 0 <= T <= model.horizon:
        raise ValueError(f"t_max must lie in [0, {model.horizon}], got {T}")
    reach = ReachLayers(model=model, b0=b0, admissible_only=admissible_only)
    reach.layers.append((reach.intern(b0, 0),))
    n_obs = model.n_observations
    successors: dict = {}
    for t in range(T):
        key = reach.transition_key(t)
        nxt: set = set()
        for i in reach.layers[t]:
            succ = successors.get((key, i))
            if succ is None:
                per_u, succ = _expand_belief(model, reach, t, i, n_obs)
                reach.transitions[(key, i)] = per_u
                successors[(key, i)] = succ
            nxt |= succ
        if len(reach.beliefs) > cap:
            raise CapExceeded("number of reachable beliefs", cap)
        reach.layers.append(tuple(sorted(nxt)))
        log.debug("t=%d layer=%d total=%d", t + 1, len(nxt), len(reach.beliefs))
    return reach


def reachable_union(reach: ReachLayers, t_from: int, t_to: int) -> set:
    """``B^R_[t_from, t_to]`` as a set of beliefs."""
    return {reach.beliefs[i] for i in reach.union_ids(t_from, t_to)}


@dataclass
class MappingClosure:
    """Distinct composed step mappings ``F_{0:t}`` for ``t = 0..depth``.

    ``depths[t]`` maps each distinct table to one step sequence producing
    it (a tuple of :class:`StepKey`, earliest step first).
    """

    depths: list = field(default_factory=list)
    fixed_point: Optional[int] = None

    def union(self) -> dict:
        out: dict = {}
        for d in self.depths:
            for g, path in d.items():
                out.setdefault(g, path)
        return out

    def __len__(self) -> int:
        return len(self.union())


def _closure(generators, n_steps: int, cap: int, stationary: bool, what: str) -> MappingClosure:
    closure = MappingClosure()
    seen_sets: dict = {}
    current: dict = {}
    for t in range(n_steps):
        gens = generators(t)
        nxt: dict = {}
        if t == 0:
            for key, g in gens:
                nxt.setdefault(g, (key,))
        else:
            for prev, path in current.items():
                for key, g in gens:
                    nxt.setdefault(compose_mappings(g, prev), path + (key,))
        if len(nxt) > cap:
            raise CapExceeded(what, cap)
        closure.depths.append(nxt)
        if sum(len(d) for d in closure.depths) > cap:
            raise CapExceeded(what, cap)
        current = nxt
        if stationary:
            sig = frozenset(nxt)
            if sig in seen_sets:
                closure.fixed_point = t
                break
            seen_sets[sig] = t
    return closure


def mapping_closure(
    model: DetPomdpModel,
    t_max: Optional[int] = None,
    *,
    cap: int = DEFAULT_CLOSURE_CAP,
    restrict_to=None,
    respect_admissibility: bool = False,
) -> MappingClosure:
    """Closure of the step mappings ``F^{u,o}_t`` under composition along time.

    ``t_max`` steps are composed (default: the horizon, giving
    ``F_{0:0}, ..., F_{0:T-1}``).  ``restrict_to`` sends every state outside
    the given set to ∂ first; only the action on that set matters when the
    mappings are pushed against a belief supported there.  For stationary
    models the iteration stops once a depth repeats an earlier one.
    """
    n = model.horizon if t_max is None else t_max
    mask = None if restrict_to is None else backward_restrict(range(model.n_states), restrict_to)
    cache: dict = {}

    def generators(t):
        key = 0 if model.stationary_filter and (not respect_admissibility or len(model.admissible) == 1) else t
        gens = cache.get(key)
        if gens is None:
            gens = []
            for u in range(model.n_controls):
                for o in range(model.n_observations):
                    g = step_mapping(model, t, u, o, respect_admissibility)
                    gens.append((StepKey(t, u, o), g))
            cache[key] = gens
        if t == 0 and mask is not None:
            return [(k, compose_mappings(g, mask)) for k, g in gens]
        return [(StepKey(t, k.u, k.o), g) for k, g in gens]

    stationary = model.stationary_filter and (not respect_admissibility or len(model.admissible) == 1)
    return _closure(generators, n, cap, stationary, "mapping closure size")


def dynamics_closure(
    model: DetPomdpModel,
    t_max: Optional[int] = None,
    *,
    cap: int = DEFAULT_CLOSURE_CAP,
    respect_admissibility: bool = False,
) -> MappingClosure:
    """Closure of the state maps ``f_t(., u)`` (observations ignored).

    Paths hold ``StepKey(t, u, -1)``.  With ``respect_admissibility`` a
    state where ``u`` is not admissible is sent to ∂.
    """
    n = model.horizon if t_max is None else t_max

    def generators(t):
        dyn, adm = model.dynamics_at(t), model.admissible_at(t)
        gens = []
        for u in range(model.n_controls):
            f = [row[u] for row in dyn]
            keep = [x for x in range(model.n_states) if u in adm[x]] if respect_admissibility else range(model.n_states)
            gens.append((StepKey(t, u, -1), backward_restrict(f, keep)))
        return gens

    stationary = len(model.dynamics) == 1 and (not respect_admissibility or len(model.admissible) == 1)
    return _closure(generators, n, cap, stationary, "dynamics closure size")


def closure_beliefs(closure: MappingClosure, b0: Belief) -> set:
    """``{R(g⋆b0) : g in the closure}``."""
    return {renormalize(pushforward(g, b0)) for g in closure.union()}


def replay_path(model: DetPomdpModel, path, respect_admissibility: bool = False) -> StepMapping:
    """Rebuild the composed mapping described by a closure path."""
    g = StepMapping.identity(model.n_states)
    for key in path:
        if key.o < 0:
            f = [row[key.u] for row in model.dynamics_at(key.t)]
            adm = model.admissible_at(key.t)
            keep = [x for x in range(model.n_states) if key.u in adm[x]] if respect_admissibility else range(model.n_states)
            step = backward_restrict(f, keep)
        else:
            step = step_mapping(model, key.t, key.u, key.o, respect_admissibility)
        g = compose_mappings(step, g)
    return g
