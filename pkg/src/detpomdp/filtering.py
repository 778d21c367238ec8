"""Belief filtering for Det-POMDPs.

Two independent routes compute the belief update:

* :func:`belief_step` evaluates the Bayes update directly from the preimages
  of the dynamics, in exact fractions;
* :func:`belief_step_via_pushforward` pushes the belief through the step
  mapping ``F^{u,o}_t`` and renormalizes.

:func:`expand` is the integer fast path used by enumeration and the solver.
It returns all observation branches of a ``(belief, control)`` pair at once.
"""

from __future__ import annotations

from fractions import Fraction
from typing import NamedTuple

from .measure import (
    CEMETERY_BELIEF,
    Belief,
    StepMapping,
    backward_restrict,
    compose_mappings,
    forward_restrict,
    pushforward,
    renormalize,
)
from .model import DetPomdpModel


class StepKey(NamedTuple):
    t: int
    u: int
    o: int


def obs_prob(model: DetPomdpModel, t: int, b: Belief, u: int, o: int) -> Fraction:
    """Probability of observing ``o`` at ``t+1`` after applying ``u`` from ``b``."""
    if b.is_cemetery:
        return Fraction(0)
    f, h = model.dynamics_at(t), model.obs_at(t)
    mass = sum(w for x, w in zip(b.states, b.weights) if h[f[x][u]][u] == o)
    return Fraction(mass, b.total)


def belief_step(model: DetPomdpModel, t: int, b: Belief, u: int, o: int) -> Belief:
    """Posterior after control ``u`` and observation ``o``; δ_∂ if ``o`` is impossible."""
    q = obs_prob(model, t, b, u, o)
    if q == 0:
        return CEMETERY_BELIEF
    f, h = model.dynamics_at(t), model.obs_at(t)
    probs = b.probabilities()
    posterior = {}
    for y in range(model.n_states):
        if h[y][u] != o:
            continue
        mass = sum((p for x, p in probs.items() if f[x][u] == y), Fraction(0))
        if mass:
            posterior[y] = mass / q
    return Belief.from_fractions(posterior.items())


def step_mapping(model: DetPomdpModel, t: int, u: int, o: int,
                 respect_admissibility: bool = False) -> StepMapping:
    """``F^{u,o}_t``: move by ``f_t(., u)``, keep the result only if it emits ``o``.

    With ``respect_admissibility`` the states where ``u`` is not admissible
    are also sent to ∂.
    """
    f = [row[u] for row in model.dynamics_at(t)]
    h = model.obs_at(t)
    consistent = [y for y in range(model.n_states) if h[y][u] == o]
    g = forward_restrict(f, consistent)
    if respect_admissibility:
        allowed = [x for x, a in enumerate(model.admissible_at(t)) if u in a]
        g = compose_mappings(g, backward_restrict(range(model.n_states), allowed))
    return g


def belief_step_via_pushforward(model: DetPomdpModel, t: int, b: Belief, u: int, o: int) -> Belief:
    return renormalize(pushforward(step_mapping(model, t, u, o), b))


def expand(model: DetPomdpModel, t: int, b: Belief, u: int) -> dict:
    """All nonzero observation branches of ``(b, u)`` at time ``t``.

    Returns ``{o: (mass, posterior)}`` where ``mass / b.total`` is the
    observation probability.  Observations absent from the result have
    probability zero and lead to δ_∂.
    """
    f, h = model.dynamics_at(t), model.obs_at(t)
    groups: dict = {}
    for x, w in zip(b.states, b.weights):
        y = f[x][u]
        o = h[y][u]
        g = groups.get(o)
        if g is None:
            groups[o] = {y: w}
        else:
            g[y] = g.get(y, 0) + w
    return {
        o: (sum(g.values()), Belief.from_integer_weights(g.items()))
        for o, g in groups.items()
    }


def admissible_belief_controls(model: DetPomdpModel, t: int, b: Belief) -> tuple:
    """Controls admissible at every state of the support of ``b``."""
    if b.is_cemetery:
        raise ValueError("admissible controls are not defined at the cemetery belief")
    adm = model.admissible_at(t)
    common = set(adm[b.states[0]])
    for x in b.states[1:]:
        common.intersection_update(adm[x])
        if not common:
            break
    return tuple(sorted(common))
