"""Polarizations (two-point rearrangements), symmetrization, iterated
polarization towards the symmetrization, and a randomized conformance check
of the framework axioms.

For vectors a polarizer is a compare-swap ``(i, j)`` with ``i < j`` keeping
the larger value at ``i``; the symmetrization sorts ``|u|`` in nonincreasing
order.  For grids a polarizer is the reflection ``x -> 2a - x`` with
``a = k * h / 2``; the kept side is the one containing the origin
(``x > 0`` when ``a == 0``).  The symmetrization places the k-th largest
value of ``|u|`` at the node of k-th smallest ``|x|``, positive side first on
ties.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ModelMismatch, NotInCone, ScheduleExhausted
from .spaces import FunctionElement, ModelDescriptor, ModelKind, in_cone, vnorm

NONEXPANSIVE_TOL = 1e-12
SWEEP_TOL = 1e-10


@dataclass(frozen=True)
class Polarizer:
    """One element of the finite polarizer family.

    ``index`` is the pair ``(i, j)`` for vectors (0-based, ``i < j``) and the
    integer ``k = 2a / h`` for grid reflections.
    """

    model: ModelDescriptor
    index: object

    def __post_init__(self):
        model = self.model
        if model.kind is ModelKind.VECTOR:
            i, j = (int(t) for t in self.index)
            if not (0 <= i < j < model.n):
                raise ValueError(f"invalid pair {self.index!r} for n={model.n}")
            object.__setattr__(self, "index", (i, j))
        else:
            k = int(self.index)
            m = model.half_width
            if abs(k) > 2 * m - 1:
                raise ValueError(f"reflection index {k} pairs no grid nodes")
            object.__setattr__(self, "index", k)

    @property
    def center(self):
        """Reflection center a (grid) or None."""
        if self.model.is_grid:
            return self.index * self.model.h_mesh / 2
        return None

    @functools.cached_property
    def slots(self):
        """Array positions ``(kept, partner)`` of the paired entries."""
        if not self.model.is_grid:
            i, j = self.index
            return np.array([i]), np.array([j])
        m = self.model.half_width
        k = self.index
        labels = np.arange(-m, m + 1)
        partner = k - labels
        ok = (partner >= -m) & (partner <= m)
        if k > 0:
            keep = ok & (2 * labels < k)
        elif k < 0:
            keep = ok & (2 * labels > k)
        else:
            keep = ok & (labels > 0)
        kept = labels[keep]
        return kept + m, (k - kept) + m

    def to_dict(self):
        if self.model.is_grid:
            return {"kind": "reflection", "k": self.index, "center": self.center}
        return {"kind": "pair", "i": self.index[0], "j": self.index[1]}

    @classmethod
    def from_dict(cls, model, d):
        if d["kind"] == "pair":
            return cls(model, (d["i"], d["j"]))
        return cls(model, int(d["k"]))


def polarizer_family(model: ModelDescriptor):
    """All admissible polarizers of the model."""
    if model.is_grid:
        top = 2 * model.half_width - 1
        return [Polarizer(model, k) for k in range(-top, top + 1)]
    n = model.n
    return [Polarizer(model, (i, j)) for i in range(n) for j in range(i + 1, n)]


def sweep_order(model: ModelDescriptor):
    """One pass of the deterministic sweep.

    Vectors: an even round then an odd round of adjacent compare-swaps.
    Grids: every reflection center in increasing ``|a|``, positive first.
    """
    if model.is_grid:
        top = 2 * model.half_width - 1
        ks = [0] + [s * k for k in range(1, top + 1) for s in (1, -1)]
        return [Polarizer(model, k) for k in ks]
    n = model.n
    even = [Polarizer(model, (i, i + 1)) for i in range(0, n - 1, 2)]
    odd = [Polarizer(model, (i, i + 1)) for i in range(1, n - 1, 2)]
    return even + odd


def universal_sequence(model: ModelDescriptor):
    """A fixed polarizer sequence that sends every u in S exactly to u*.

    Vectors: n rounds of odd-even transposition sort (n(n-1)/2 compare-swaps).
    Grids: n passes of :func:`sweep_order`; each pass contains the ``a = 0``
    and ``a = h/2`` reflections, which together form one odd-even
    transposition round in the symmetrization's rank order.
    """
    one = sweep_order(model)
    if model.is_grid:
        return one * model.n
    seq = one * (model.n // 2)
    if model.n % 2 == 1:
        seq += [p for p in one if p.index[0] % 2 == 0]
    return seq


def _apply(values, pol):
    kept, partner = pol.slots
    a = values[kept]
    b = values[partner]
    out = values.copy()
    out[kept] = np.maximum(a, b)
    out[partner] = np.minimum(a, b)
    return out


def polarize(u: FunctionElement, H: Polarizer) -> FunctionElement:
    if u.model != H.model:
        raise ModelMismatch(f"{u.model} vs {H.model}")
    return FunctionElement(u.model, _apply(u.values, H))


@functools.lru_cache(maxsize=64)
def _rank_slots(model):
    """Array positions ordered by distance to the origin, positive first."""
    if not model.is_grid:
        return np.arange(model.n)
    labels = model.node_indices()
    order = sorted(range(model.n), key=lambda p: (abs(labels[p]), labels[p] < 0))
    return np.array(order)


def _symmetrize_values(model, values):
    desc = np.sort(np.abs(values))[::-1]
    out = np.empty_like(desc)
    out[_rank_slots(model)] = desc
    return out


def symmetrize(u: FunctionElement) -> FunctionElement:
    """The symmetrization u* of ``theta(u)``."""
    return FunctionElement(u.model, _symmetrize_values(u.model, u.values))


def is_symmetric(u: FunctionElement) -> bool:
    return np.array_equal(u.values, _symmetrize_values(u.model, u.values))


class Strategy(str, enum.Enum):
    DETERMINISTIC_SWEEP = "deterministic_sweep"
    SEEDED_RANDOM = "seeded_random"


@dataclass(frozen=True)
class PolarizationSchedule:
    strategy: Strategy = Strategy.DETERMINISTIC_SWEEP
    seed: Optional[int] = None
    max_steps: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.strategy is Strategy.SEEDED_RANDOM and self.seed is None:
            raise ValueError("SeededRandom needs an explicit seed")

    @classmethod
    def sweep(cls, max_steps=100_000):
        return cls(Strategy.DETERMINISTIC_SWEEP, None, max_steps)

    @classmethod
    def seeded(cls, seed, max_steps=100_000):
        return cls(Strategy.SEEDED_RANDOM, int(seed), max_steps)

    def polarizers(self, model):
        """Infinite iterator over the polarizers of this schedule."""
        if self.strategy is Strategy.DETERMINISTIC_SWEEP:
            one = sweep_order(model)
            while True:
                yield from one
        family = polarizer_family(model)
        rng = np.random.default_rng(self.seed)
        while True:
            for idx in rng.integers(0, len(family), size=256):
                yield family[idx]

    def to_dict(self):
        return {"strategy": self.strategy.value, "seed": self.seed, "max_steps": self.max_steps}


def approx_symmetrize(u: FunctionElement, rho: float, schedule: PolarizationSchedule):
    """Iterated polarizations of ``u`` until within ``rho`` of ``u*`` in V.

    Returns ``(T_rho u, polarizers_used)``.  The distance is measured against
    the exactly computed symmetrization after every step.

    Raises
    ------
    NotInCone
        If ``u`` has a negative entry.
    ScheduleExhausted
        If ``schedule.max_steps`` polarizations do not reach the rho-ball.
    """
    if not in_cone(u):
        raise NotInCone("approx_symmetrize needs u in S")
    if not rho > 0:
        raise ValueError("rho must be positive")
    model = u.model
    target = _symmetrize_values(model, u.values)
    x = u.values
    used = []
    if vnorm(model, x - target) < rho:
        return u, used
    for step, pol in enumerate(schedule.polarizers(model)):
        if step >= schedule.max_steps:
            raise ScheduleExhausted(
                f"{schedule.max_steps} polarizations left distance {vnorm(model, x - target):.3e} >= rho={rho}"
            )
        x = _apply(x, pol)
        used.append(pol)
        if vnorm(model, x - target) < rho:
            return FunctionElement(model, x), used
    raise AssertionError("unreachable")


def replay(u: FunctionElement, polarizers):
    """Apply a polarizer sequence in order."""
    x = u.values
    for pol in polarizers:
        x = _apply(x, pol)
    return FunctionElement(u.model, x)


# --------------------------------------------------------------------------
# conformance


@dataclass
class AxiomResult:
    name: str
    passed: bool = True
    worst_residual: float = 0.0
    checks: int = 0
    witness: Optional[dict] = None

    def record(self, residual, ok, witness):
        self.checks += 1
        self.worst_residual = max(self.worst_residual, residual)
        if not ok and self.passed:
            self.passed = False
            self.witness = witness

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_residual": self.worst_residual,
            "checks": self.checks,
            "witness": self.witness,
        }


@dataclass
class ConformanceReport:
    model: ModelDescriptor
    samples: int
    seed: int
    axioms: list = field(default_factory=list)

    @property
    def passed(self):
        return all(a.passed for a in self.axioms)

    def axiom(self, name):
        return next(a for a in self.axioms if a.name == name)

    def to_dict(self):
        return {
            "schema": "symek.conformance/1",
            "model": self.model.to_dict(),
            "samples": self.samples,
            "seed": self.seed,
            "passed": self.passed,
            "axioms": [a.to_dict() for a in self.axioms],
        }


def random_cone_element(model, rng, scale=1.0):
    """Random point of S; every third draw is quantized so ties occur."""
    draw = rng.random(model.n) * scale
    if rng.random() < 1 / 3:
        levels = int(rng.integers(2, 5))
        draw = np.floor(draw * levels / scale) * (scale / levels)
    return FunctionElement(model, draw)


def _witness(**items):
    out = {}
    for key, val in items.items():
        out[key] = val.to_dict() if hasattr(val, "to_dict") else val
    return out


def verify_framework(
    model: ModelDescriptor,
    samples: int,
    seed: int,
    polarize_fn: Callable[[FunctionElement, Polarizer], FunctionElement] = polarize,
) -> ConformanceReport:
    """Randomized check of the symmetrization framework on ``model``.

    Four groups are checked over ``samples`` draws of u, v in S and a
    polarizer H: 1-Lipschitz continuity of ``u -> u^H`` for nearby pairs,
    the fixed-point and idempotence identities (bitwise), exact convergence
    of the universal sweep to u*, and nonexpansiveness for arbitrary pairs.
    ``polarize_fn`` exists so broken polarizations can be injected as
    negative controls.  Failures are reported with a witness, never raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    family = polarizer_family(model)
    seq = universal_sequence(model)
    continuity = AxiomResult("continuity")
    fixed_point = AxiomResult("fixed_point_idempotence")
    convergence = AxiomResult("sweep_convergence")
    nonexpansive = AxiomResult("nonexpansive")

    for _ in range(samples):
        u = random_cone_element(model, rng)
        v = random_cone_element(model, rng)
        H = family[int(rng.integers(len(family)))]
        uH = polarize_fn(u, H)
        vH = polarize_fn(v, H)

        bump = rng.normal(size=model.n) * 1e-6
        w = FunctionElement(model, np.abs(u.values + bump))
        lhs = vnorm(model, uH.values - polarize_fn(w, H).values)
        rhs = vnorm(model, u.values - w.values)
        continuity.record(lhs - rhs, lhs <= rhs + NONEXPANSIVE_TOL, _witness(u=u, v=w, H=H))

        star = symmetrize(u)
        ok = (
            polarize_fn(star, H) == star
            and symmetrize(uH) == star
            and polarize_fn(uH, H) == uH
        )
        fixed_point.record(0.0 if ok else 1.0, ok, _witness(u=u, H=H))

        if polarize_fn is polarize:
            x = u.values
            for pol in seq:
                x = _apply(x, pol)
        else:
            x = u
            for pol in seq:
                x = polarize_fn(x, pol)
            x = x.values
        res = vnorm(model, x - star.values)
        convergence.record(res, res <= SWEEP_TOL, _witness(u=u))

        lhs = vnorm(model, uH.values - vH.values)
        rhs = vnorm(model, u.values - v.values)
        nonexpansive.record(lhs - rhs, lhs <= rhs + NONEXPANSIVE_TOL, _witness(u=u, v=v, H=H))

    return ConformanceReport(model, samples, seed, [continuity, fixed_point, convergence, nonexpansive])
