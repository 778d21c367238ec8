"""Exact measures on the extended state set ``X ∪ {∂}``.

States are integer indices ``0..n-1``; the cemetery point is the
:data:`CEMETERY` sentinel.  Every probability is an exact
:class:`fractions.Fraction`, so beliefs can be compared for equality.

Two value types live here:

* :class:`Measure` -- any nonnegative finite measure, stored sparsely.
* :class:`Belief` -- a probability measure that is either carried by the
  states or is exactly the cemetery belief ``δ_∂``.  Internally a belief is
  a projective integer vector (coprime positive integers); the probability
  of a state is its integer weight divided by the total.  That form makes
  the canonical key cheap and keeps filtering in integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Callable, Iterable, Mapping, Sequence, Union


class _Cemetery:
    __slots__ = ()

    def __repr__(self) -> str:
        return "CEMETERY"

    def __reduce__(self):
        return "CEMETERY"


#: The extra point ∂ added to the state set.
CEMETERY = _Cemetery()

ExtendedState = Union[int, _Cemetery]
Rational = Union[int, Fraction, str]


def point_order(p: ExtendedState) -> tuple:
    """Sort key placing states by index and ∂ last."""
    return (1, 0) if p is CEMETERY else (0, p)


def to_fraction(value: Rational) -> Fraction:
    if isinstance(value, float):
        raise TypeError(f"floats are not exact rationals: {value!r}")
    if isinstance(value, bool):
        raise TypeError(f"not a rational: {value!r}")
    return Fraction(value)


class Measure:
    """Nonnegative measure on ``X ∪ {∂}`` with only positive entries stored."""

    __slots__ = ("_items",)

    def __init__(self, weights: Mapping[ExtendedState, Rational] | None = None):
        items = []
        for point, value in (weights or {}).items():
            value = to_fraction(value)
            if value < 0:
                raise ValueError(f"negative weight {value} at {point!r}")
            if value:
                items.append((point, value))
        items.sort(key=lambda kv: point_order(kv[0]))
        self._items = tuple(items)

    def items(self) -> tuple:
        return self._items

    def __getitem__(self, point: ExtendedState) -> Fraction:
        for p, v in self._items:
            if p is point or p == point:
                return v
        return Fraction(0)

    def support(self) -> tuple:
        return tuple(p for p, _ in self._items)

    def total(self) -> Fraction:
        return sum((v for _, v in self._items), Fraction(0))

    def state_mass(self) -> Fraction:
        """Mass carried by ``X``, i.e. everything except ∂."""
        return sum((v for p, v in self._items if p is not CEMETERY), Fraction(0))

    def __eq__(self, other) -> bool:
        if isinstance(other, Belief):
            other = other.as_measure()
        return isinstance(other, Measure) and self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        body = ", ".join(f"{p!r}: {v}" for p, v in self._items)
        return f"Measure({{{body}}})"


class Belief:
    """Exact probability on ``X``, or the cemetery belief ``δ_∂``.

    ``states`` is sorted and ``weights`` are coprime positive integers of the
    same length.  The cemetery belief has both tuples empty.
    """

    __slots__ = ("states", "weights", "total", "_hash")

    def __init__(self, states: tuple = (), weights: tuple = ()):
        self.states = states
        self.weights = weights
        self.total = sum(weights)
        self._hash = hash((states, weights))

    @classmethod
    def from_integer_weights(cls, pairs: Iterable[tuple[int, int]]) -> "Belief":
        """Build from unnormalized nonnegative integer weights (any scale)."""
        pairs = sorted((x, w) for x, w in pairs if w)
        if not pairs:
            return CEMETERY_BELIEF
        g = 0
        for _, w in pairs:
            if w < 0:
                raise ValueError("negative weight")
            g = gcd(g, w)
        return cls(tuple(x for x, _ in pairs), tuple(w // g for _, w in pairs))

    @classmethod
    def from_fractions(cls, pairs: Iterable[tuple[int, Fraction]]) -> "Belief":
        pairs = [(x, Fraction(w)) for x, w in pairs if w]
        if not pairs:
            return CEMETERY_BELIEF
        scale = lcm(*(w.denominator for _, w in pairs))
        return cls.from_integer_weights(
            (x, w.numerator * (scale // w.denominator)) for x, w in pairs
        )

    @property
    def is_cemetery(self) -> bool:
        return not self.states

    def prob(self, x: ExtendedState) -> Fraction:
        if self.is_cemetery:
            return Fraction(1 if x is CEMETERY else 0)
        if x is CEMETERY:
            return Fraction(0)
        for s, w in zip(self.states, self.weights):
            if s == x:
                return Fraction(w, self.total)
        return Fraction(0)

    __getitem__ = prob

    def probabilities(self) -> dict:
        """``{state: Fraction}`` over the support (``{∂: 1}`` for δ_∂)."""
        if self.is_cemetery:
            return {CEMETERY: Fraction(1)}
        return {s: Fraction(w, self.total) for s, w in zip(self.states, self.weights)}

    def support(self) -> tuple:
        return (CEMETERY,) if self.is_cemetery else self.states

    def as_measure(self) -> Measure:
        return Measure(self.probabilities())

    @property
    def key(self) -> tuple:
        return (self.states, self.weights)

    def __eq__(self, other) -> bool:
        if isinstance(other, Belief):
            return self.states == other.states and self.weights == other.weights
        if isinstance(other, Measure):
            return self.as_measure() == other
        return NotImplemented

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        if self.is_cemetery:
            return "Belief(CEMETERY)"
        body = ", ".join(
            f"{s}: {Fraction(w, self.total)}" for s, w in zip(self.states, self.weights)
        )
        return f"Belief({{{body}}})"


#: The cemetery belief δ_∂.
CEMETERY_BELIEF = Belief((), ())


def make_belief(weights: Mapping[int, Rational]) -> Belief:
    """Belief on ``X`` from exact weights that sum to one.

    >>> make_belief({0: "1/2", 1: "1/2"})
    Belief({0: 1/2, 1: 1/2})
    """
    fractions = {}
    for x, w in weights.items():
        if x is CEMETERY:
            raise ValueError("initial beliefs live on X; use CEMETERY_BELIEF for δ_∂")
        w = to_fraction(w)
        if w < 0:
            raise ValueError(f"negative weight {w} for state {x}")
        fractions[x] = w
    mass = sum(fractions.values(), Fraction(0))
    if mass != 1:
        raise ValueError(f"belief weights sum to {mass}, not 1")
    return Belief.from_fractions(fractions.items())


def support(b: Belief | Measure) -> tuple:
    return b.support()


def canonical_key(b: Belief) -> tuple:
    """Hashable key, equal for two beliefs iff they are equal as rational vectors."""
    return b.key


def renormalize(m: Measure | Belief) -> Belief:
    """Drop the ∂ mass and rescale to a probability; ``δ_∂`` if ``X`` carries nothing."""
    if isinstance(m, Belief):
        return m
    mass = m.state_mass()
    if mass == 0:
        return CEMETERY_BELIEF
    return Belief.from_fractions((p, v / mass) for p, v in m.items() if p is not CEMETERY)


@dataclass(frozen=True)
class StepMapping:
    """Self-map of ``X ∪ {∂}`` given by its table on ``X`` and the image of ∂.

    Everything built by this package fixes ∂; ``cemetery_image`` exists so
    arbitrary maps can be fed to :func:`pushforward` in tests.
    """

    images: tuple
    cemetery_image: ExtendedState = CEMETERY

    def __call__(self, x: ExtendedState) -> ExtendedState:
        if x is CEMETERY:
            return self.cemetery_image
        return self.images[x]

    @property
    def n_states(self) -> int:
        return len(self.images)

    @classmethod
    def identity(cls, n: int) -> "StepMapping":
        return cls(tuple(range(n)))

    def live_domain(self) -> frozenset:
        """States of ``X`` not sent to ∂."""
        return frozenset(x for x, y in enumerate(self.images) if y is not CEMETERY)

    def preimage(self, y: ExtendedState) -> tuple:
        pts = [x for x, img in enumerate(self.images) if img is y or img == y]
        if self.cemetery_image is y:
            pts.append(CEMETERY)
        return tuple(pts)

    def __repr__(self) -> str:
        return f"StepMapping({list(self.images)})"


def pushforward(g: Callable[[ExtendedState], ExtendedState], m: Measure | Belief) -> Measure:
    """Image measure ``g⋆m``: the weight of ``d`` is ``m(g⁻¹(d))``."""
    if isinstance(m, Belief):
        m = m.as_measure()
    out: dict = {}
    for point, value in m.items():
        target = g(point)
        out[target] = out.get(target, Fraction(0)) + value
    return Measure(out)


def forward_restrict(f: Sequence[int], keep: Iterable[int]) -> StepMapping:
    """Apply ``f`` but send ``x`` to ∂ whenever ``f(x)`` falls outside ``keep``."""
    keep = frozenset(keep)
    return StepMapping(tuple(y if y in keep else CEMETERY for y in f))


def backward_restrict(f: Sequence[int], keep: Iterable[int]) -> StepMapping:
    """Apply ``f`` on ``keep`` only; every other state goes to ∂."""
    keep = frozenset(keep)
    return StepMapping(tuple(y if x in keep else CEMETERY for x, y in enumerate(f)))


def compose_mappings(g2: StepMapping, g1: StepMapping) -> StepMapping:
    """``g2 ∘ g1`` (apply ``g1`` first)."""
    images = tuple(g2(y) for y in g1.images)
    return StepMapping(images, g2(g1.cemetery_image))


def preimage_of_set(f: Sequence[int], ys: Iterable[int]) -> frozenset:
    ys = frozenset(ys)
    return frozenset(x for x, y in enumerate(f) if y in ys)
