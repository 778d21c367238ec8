"""Belief-space dynamic programming with admissibility constraints.

Values are exact.  Internally the recursion runs on scaled integers: for a
belief with integer weights ``w`` (total ``M``) and costs scaled by the
common denominator ``D``, the stored number is ``W = M * D * V``.  The
Bellman step then reads

    W_t(b) = min_u  sum_x w_x D L_t(x, u)  +  sum_o g_o W_{t+1}(b_o)

where ``g_o`` is the integer factor between the raw observation branch and
the reduced successor belief ``b_o``.  No fraction is formed until a value
is read back.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from array import array
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Optional

from .filtering import admissible_belief_controls, expand
from .measure import CEMETERY_BELIEF, Belief
from .model import INF, DetPomdpModel
from .reachability import DEFAULT_BELIEF_CAP, CapExceeded, ReachLayers, reachable_layers

__all__ = [
    "INFEASIBLE",
    "Solution",
    "SimulationAborted",
    "TrajectoryRecord",
    "admissible_belief_controls",
    "brute_force_value",
    "policy_action",
    "simulate",
    "solve",
]

log = logging.getLogger(__name__)

#: Policy entry for a belief with no admissible control.
INFEASIBLE = -1
_NO_ACTION = -2

DEFAULT_ORACLE_CAP = 10**6


def is_infinite(v) -> bool:
    return isinstance(v, float) and v == INF


def _cost_scale(model: DetPomdpModel) -> int:
    dens = [1]
    for sl in model.cost:
        for row in sl:
            dens.extend(Fraction(v).denominator for v in row if not is_infinite(v))
    dens.extend(Fraction(v).denominator for v in model.final_cost if not is_infinite(v))
    return lcm(*dens)


def _scaled(v, scale: int):
    return INF if is_infinite(v) else int(Fraction(v) * scale)


@dataclass
class Solution:
    """Value table and policy over the reachable beliefs of one ``b0``.

    ``scaled_values[t][k]`` and ``controls[t][k]`` belong to the belief
    ``reach.layers[t][k]``.
    """

    model: DetPomdpModel
    reach: ReachLayers
    scale: int
    scaled_values: list = field(default_factory=list)
    controls: list = field(default_factory=list)

    def _position(self, t: int, b: Belief) -> int:
        i = self.reach.index.get(b.key)
        layer = self.reach.layers[t]
        if i is not None:
            k = bisect_left(layer, i)
            if k < len(layer) and layer[k] == i:
                return k
        raise LookupError(f"belief {b!r} is not reachable at time {t}")

    def value(self, t: int, b: Belief):
        """``V_t(b)`` as a Fraction, or ``INF``."""
        if b.is_cemetery:
            return Fraction(0)
        w = self.scaled_values[t][self._position(t, b)]
        return INF if is_infinite(w) else Fraction(w, b.total * self.scale)

    @property
    def value0(self):
        return self.value(0, self.reach.b0)

    def action(self, t: int, b: Belief) -> int:
        if b.is_cemetery:
            raise ValueError("no control is stored for the cemetery belief")
        if t >= self.model.horizon:
            raise ValueError(f"no control at the final time {t}")
        return self.controls[t][self._position(t, b)]

    def items(self, t: int):
        """Yield ``(belief, value)`` for the beliefs of layer ``t``."""
        for i in self.reach.layers[t]:
            b = self.reach.beliefs[i]
            yield b, self.value(t, b)

    def bellman_residuals(self) -> list:
        """Re-evaluate the Bellman equation in fractions; return failing ``(t, belief)``."""
        model = self.model
        bad = []
        for t in range(model.horizon):
            cost = model.cost_at(t)
            for i in self.reach.layers[t]:
                b = self.reach.beliefs[i]
                if b.is_cemetery:
                    continue
                probs = b.probabilities()
                best = INF
                for u in admissible_belief_controls(model, t, b):
                    total = sum((p * cost[x][u] for x, p in probs.items()), Fraction(0))
                    for o, (mass, post) in expand(model, t, b, u).items():
                        total = total + Fraction(mass, b.total) * self.value(t + 1, post)
                    if total < best:
                        best = total
                if best != self.value(t, b):
                    bad.append((t, b))
        return bad


def solve(model: DetPomdpModel, b0: Optional[Belief] = None, *,
          cap: int = DEFAULT_BELIEF_CAP) -> Solution:
    """Backward induction over the beliefs reachable through admissible controls.

    Ties go to the lowest control index.  Branches with zero probability
    contribute nothing (``V(δ_∂) = 0``); an empty admissible set gives ``+inf``.
    """
    if b0 is None:
        b0 = model.initial_belief
    if b0 is None or b0.is_cemetery:
        raise ValueError("solve needs an initial belief on the states")
    T = model.horizon
    reach = reachable_layers(model, b0, admissible_only=True, cap=cap)
    scale = _cost_scale(model)
    nu = model.n_controls
    cem = reach.cemetery_id

    final = [_scaled(v, scale) for v in model.final_cost]
    values: list = [None] * (T + 1)
    controls: list = [None] * T

    last = []
    for i in reach.layers[T]:
        b = reach.beliefs[i]
        if i == cem:
            last.append(0)
            continue
        w = 0
        for x, wx in zip(b.states, b.weights):
            c = final[x]
            if is_infinite(c):
                w = INF
                break
            w += wx * c
        last.append(w)
    values[T] = last

    for t in range(T - 1, -1, -1):
        nxt = dict(zip(reach.layers[t + 1], values[t + 1]))
        if cem is not None:
            nxt[cem] = 0
        key = reach.transition_key(t)
        cost = [[_scaled(v, scale) for v in row] for row in model.cost_at(t)]
        uniform = []
        for u in range(nu):
            col = {cost[x][u] for x in range(model.n_states)}
            uniform.append(col.pop() if len(col) == 1 else None)
        layer_values, layer_controls = [], array("b" if nu < 128 else "i")
        for i in reach.layers[t]:
            if i == cem:
                layer_values.append(0)
                layer_controls.append(_NO_ACTION)
                continue
            b = reach.beliefs[i]
            best, best_u = INF, INFEASIBLE
            for u, flat in enumerate(reach.transitions[(key, i)]):
                if flat is None:
                    continue
                c = uniform[u]
                if c is None:
                    total = 0
                    for x, wx in zip(b.states, b.weights):
                        cx = cost[x][u]
                        if is_infinite(cx):
                            total = INF
                            break
                        total += wx * cx
                elif is_infinite(c):
                    total = INF
                else:
                    total = b.total * c
                if not is_infinite(total):
                    for k in range(0, len(flat), 2):
                        j = flat[k + 1]
                        wj = nxt[j]
                        if is_infinite(wj):
                            total = INF
                            break
                        total += (flat[k] // reach.beliefs[j].total) * wj
                if best_u == INFEASIBLE or total < best:
                    best, best_u = total, u
            layer_values.append(best)
            layer_controls.append(best_u)
        values[t] = layer_values
        controls[t] = layer_controls
        log.debug("backward t=%d beliefs=%d", t, len(layer_values))

    return Solution(model=model, reach=reach, scale=scale, scaled_values=values, controls=controls)


def policy_action(solution: Solution, t: int, b: Belief) -> int:
    """Control chosen at ``(t, b)``; :data:`INFEASIBLE` if no control is admissible."""
    return solution.action(t, b)


class SimulationAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    t: int
    state: int
    observation: Optional[int]
    control: Optional[int]
    step_cost: object
    supp_min: int
    supp_max: int
    supp_size: int
    belief_key: tuple


def simulate(model: DetPomdpModel, solution: Solution, x0: int,
             b0: Optional[Belief] = None) -> tuple:
    """Closed-loop rollout from the true initial state ``x0``.

    Returns ``(records, total_cost)`` with one record per time ``0..T``.
    The record at ``T`` carries no control and the final cost.
    """
    b = solution.reach.b0 if b0 is None else b0
    if x0 not in b.states:
        warnings.warn(f"true state {x0} is outside the support of the initial belief")
    x = x0
    obs = model.obs0[x0]
    records, total = [], Fraction(0)
    for t in range(model.horizon + 1):
        if b.is_cemetery:
            raise SimulationAborted(
                f"belief collapsed to the cemetery at t={t}: the observations are "
                f"inconsistent with the initial belief (true state {x0})")
        if t == model.horizon:
            step_cost, u = model.final_cost[x], None
        else:
            u = solution.action(t, b)
            if u == INFEASIBLE:
                raise SimulationAborted(f"no admissible control for the belief at t={t}")
            if u not in model.admissible_at(t)[x]:
                raise SimulationAborted(f"internal inconsistency: control {u} not admissible at state {x}, t={t}")
            step_cost = model.cost_at(t)[x][u]
        records.append(TrajectoryRecord(t, x, obs, u, step_cost, b.states[0], b.states[-1],
                                        len(b.states), b.key))
        total = total + step_cost
        if u is None:
            break
        x = model.f(t, x, u)
        obs = model.h(t, x, u)
        branches = expand(model, t, b, u)
        b = branches[obs][1] if obs in branches else CEMETERY_BELIEF
    return records, total


def brute_force_value(model: DetPomdpModel, b0: Optional[Belief] = None, *,
                      cap: int = DEFAULT_ORACLE_CAP):
    """Optimal expected cost by enumerating every deterministic policy tree.

    A policy assigns a control to each observation history ``(o_1..o_t)``,
    ``t < T``.  Each policy is scored by rolling every initial state of the
    support forward; a control that is inadmissible at a state reached with
    positive probability makes the policy cost ``+inf``.  Independent of the
    belief machinery; meant for tiny instances only.
    """
    if b0 is None:
        b0 = model.initial_belief
    T, nu, no = model.horizon, model.n_controls, model.n_observations
    histories = [()]
    frontier = [()]
    for _ in range(T - 1):
        frontier = [h + (o,) for h in frontier for o in range(no)]
        histories.extend(frontier)
    node = {h: k for k, h in enumerate(histories)}
    if nu ** len(histories) > cap:
        raise CapExceeded("number of policy trees", cap)

    start = list(b0.probabilities().items())
    best = INF
    for choice in itertools.product(range(nu), repeat=len(histories)):
        expected = Fraction(0)
        for x, p in start:
            c, hist = Fraction(0), ()
            for t in range(T):
                u = choice[node[hist]]
                if u not in model.admissible_at(t)[x]:
                    c = INF
                    break
                c = c + model.cost_at(t)[x][u]
                x = model.f(t, x, u)
                hist = hist + (model.h(t, x, u),)
            else:
                c = c + model.final_cost[x]
            expected = expected + p * c
            if is_infinite(expected):
                break
        if expected < best:
            best = expected
    if is_infinite(best):
        return INF
    return Fraction(best)
