"""Extended-real objectives on X, their polarization-monotonicity contract and
a catalog of functionals that satisfy it.

Functionals evaluate raw value arrays internally (``value``/``grad``) and
expose the element-level interface (``__call__``, ``gradient``,
``inner_min``, ``cone_reduce``) used by the variational procedures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import solvers
from .errors import ConfigError, ModelMismatch, NotNonnegative, NotSymmetric
from .rearrangement import polarize, polarizer_family, random_cone_element, symmetrize
from .spaces import FunctionElement, ModelDescriptor, theta, vnorm, xnorm

MONOTONE_TOL = 1e-10


class Functional:
    """Base class for f: X -> R u {+inf}.

    Subclasses implement ``value`` (never NaN, +inf allowed) and, when
    differentiable, ``grad``.  ``known_min_value`` is the exact infimum when
    it is known analytically.
    """

    name = "functional"
    claims_polarization_monotone = False
    known_minimizer: Optional[FunctionElement] = None
    known_min_value: Optional[float] = None
    sample_scale = 2.0

    def __init__(self, model: ModelDescriptor):
        self.model = model

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        return None

    def descent_grad(self, x):
        """An element of the generalized gradient, defined everywhere on dom f."""
        g = self.grad(x)
        if g is None:
            raise NotImplementedError(f"{self.name} has no descent direction at this point")
        return g

    def lower_bound(self):
        raise NotImplementedError

    def _check(self, u):
        if u.model != self.model:
            raise ModelMismatch(f"{u.model} vs {self.model}")

    def __call__(self, u: FunctionElement) -> float:
        self._check(u)
        return self.value(u.values)

    def gradient(self, u: FunctionElement) -> Optional[FunctionElement]:
        """Partial derivatives at u, or None where f is not differentiable."""
        self._check(u)
        g = self.grad(u.values)
        return None if g is None else FunctionElement(self.model, g)

    def cone_reduce(self, u: FunctionElement) -> FunctionElement:
        return theta(u)

    def project_domain(self, x):
        return x

    def inner_min(self, center: FunctionElement, sigma, tol, budget) -> FunctionElement:
        """Approximate minimizer of ``w -> f(w) + sigma * norm_X(w - center)``."""
        self._check(center)
        w, _ = solvers.proximal_perturbed_min(
            self.model, self.value, self.descent_grad, center.values, sigma, tol, budget
        )
        return FunctionElement(self.model, w)

    def params(self):
        return {}

    def describe(self):
        return {"name": self.name, "model": self.model.to_dict(), "params": self.params()}


def _require_symmetric(t: FunctionElement, what):
    if symmetrize(t) != t:
        raise NotSymmetric(f"{what} must equal its symmetrization")


class QuadraticTarget(Functional):
    """``f(u) = ||u - t||_V^2`` for a symmetric-decreasing target t."""

    name = "quadratic"
    claims_polarization_monotone = True
    known_min_value = 0.0

    def __init__(self, target: FunctionElement):
        super().__init__(target.model)
        _require_symmetric(target, "target")
        self.target = target
        self.known_minimizer = target
        self._t = target.values
        self._w = target.model.weight

    def value(self, x):
        d = x - self._t
        return self._w * float(d @ d)

    def grad(self, x):
        return 2.0 * self._w * (x - self._t)

    def lower_bound(self):
        return 0.0

    def inner_min(self, center, sigma, tol, budget):
        self._check(center)
        w = solvers.quadratic_perturbed_min(self.model, self._w, self._t, center.values, sigma)
        return FunctionElement(self.model, w)

    def params(self):
        return {"target": self._t.tolist()}


def build_quadratic_target(model: ModelDescriptor, t: FunctionElement) -> QuadraticTarget:
    if t.model != model:
        raise ModelMismatch(f"{t.model} vs {model}")
    return QuadraticTarget(t)


# -- potentials -------------------------------------------------------------


class DoubleWell:
    """W(s) = s^4/4 - s^2/2, minimum -1/4 at s = +-1."""

    name = "double-well"
    lower = -0.25

    def __call__(self, s):
        s2 = s * s
        return 0.25 * s2 * s2 - 0.5 * s2

    def deriv(self, s):
        return s * s * s - s

    def tilted_min(self, g):
        """min over s >= 0 of W(s) - g*s."""
        roots = np.roots([1.0, 0.0, -1.0, -g])
        cands = [0.0] + [r.real for r in roots if abs(r.imag) < 1e-12 and r.real >= 0]
        return min(self(s) - g * s for s in cands)


class ZeroPotential:
    name = "zero"
    lower = 0.0

    def __call__(self, s):
        return np.zeros_like(s)

    def deriv(self, s):
        return np.zeros_like(s)

    def tilted_min(self, g):
        return -math.inf if g > 0 else 0.0


POTENTIALS = {"double-well": DoubleWell, "zero": ZeroPotential}


class DirichletPotential(Functional):
    """Discrete Dirichlet energy with a pointwise potential and a linear tilt.

    For u in S::

        f(u) = h/2 * sum_edges ((u_{i+1} - u_i)/h)^2 + h*sum W(u_i) - h*sum g_i u_i

    where the edge sum includes the two boundary edges to the zero extension
    outside the grid.  Off the cone ``f(u) = f(|u|) + penalty * dist_V(u, S)^2``.
    """

    name = "dirichlet"
    claims_polarization_monotone = True

    def __init__(self, model, g: FunctionElement, potential=None, penalty=1.0):
        if not model.is_grid:
            raise ConfigError("dirichlet potential needs a grid1d model", field="model")
        if g.model != model:
            raise ModelMismatch(f"{g.model} vs {model}")
        if np.any(g.values < 0):
            raise NotNonnegative("g must be nonnegative")
        _require_symmetric(g, "g")
        super().__init__(model)
        self.g = g
        self.potential = potential if potential is not None else DoubleWell()
        self.penalty = float(penalty)
        self._g = g.values
        self._h = model.h_mesh

    def _edges(self, v):
        ext = np.concatenate(([0.0], v, [0.0]))
        return np.diff(ext) / self._h

    def energy(self, v):
        """Unextended energy of a raw array (no absolute value, no penalty)."""
        h = self._h
        d = self._edges(v)
        return 0.5 * h * float(d @ d) + h * float(np.sum(self.potential(v))) - h * float(self._g @ v)

    def _energy_grad(self, v):
        d = self._edges(v)
        return d[:-1] - d[1:] + self._h * (self.potential.deriv(v) - self._g)

    def value(self, x):
        neg = np.minimum(x, 0.0)
        return self.energy(np.abs(x)) + self.penalty * self._h * float(neg @ neg)

    def _pieces(self, x):
        ge = self._energy_grad(np.abs(x))
        pen = 2.0 * self.penalty * self._h * np.minimum(x, 0.0)
        return ge, pen

    def grad(self, x):
        ge, pen = self._pieces(x)
        if np.any((x == 0) & (ge != 0)):
            return None
        return np.sign(x) * ge + pen

    def descent_grad(self, x):
        ge, pen = self._pieces(x)
        at_zero = np.where(ge < 0, ge, 0.0)
        return np.where(x == 0, at_zero, np.sign(x) * ge) + pen

    def lower_bound(self):
        h = self._h
        n = self.model.n
        # discrete Poincare inequality for the Dirichlet Laplacian plus Cauchy-Schwarz
        lam1 = 4.0 / h**2 * math.sin(math.pi / (2 * (n + 1))) ** 2
        gnorm = vnorm(self.model, self._g)
        poincare = n * h * self.potential.lower - gnorm**2 / (2.0 * lam1)
        pointwise = h * sum(self.potential.tilted_min(float(gi)) for gi in self._g)
        return max(poincare, pointwise)

    def inner_min(self, center, sigma, tol, budget):
        self._check(center)
        if np.any(center.values < 0):
            return super().inner_min(center, sigma, tol, budget)
        w, _ = solvers.perturbed_min(self.model, self.value, self.descent_grad, center.values, sigma, tol, budget)
        return FunctionElement(self.model, w)

    def params(self):
        return {"g": self._g.tolist(), "potential": self.potential.name, "penalty": self.penalty}


def build_dirichlet_potential(model, g: FunctionElement, W=None, penalty=1.0) -> DirichletPotential:
    return DirichletPotential(model, g, W, penalty)


class NonsmoothBox(Functional):
    """``base`` restricted to the box [0, upper]^n, +inf outside."""

    name = "box"

    def __init__(self, base: Functional, upper: float):
        if not upper > 0:
            raise ValueError("upper must be positive")
        super().__init__(base.model)
        self.base = base
        self.upper = float(upper)
        self.name = f"{base.name}-box"
        self.claims_polarization_monotone = base.claims_polarization_monotone
        self.sample_scale = self.upper

    def _inside(self, x):
        return bool(np.all(x >= 0) and np.all(x <= self.upper))

    def value(self, x):
        return self.base.value(x) if self._inside(x) else math.inf

    def grad(self, x):
        if np.all(x > 0) and np.all(x < self.upper):
            return self.base.grad(x)
        return None

    def lower_bound(self):
        return self.base.lower_bound()

    def project_domain(self, x):
        return np.clip(x, 0.0, self.upper)

    def inner_min(self, center, sigma, tol, budget):
        self._check(center)
        if not self._inside(center.values):
            return center
        w, _ = solvers.perturbed_min(
            self.model, self.base.value, self.base.descent_grad,
            center.values, sigma, tol, budget, 0.0, self.upper,
        )
        return FunctionElement(self.model, w)

    def params(self):
        return {"base": self.base.describe(), "upper": self.upper}


def build_nonsmooth_box(base: Functional, upper: float) -> NonsmoothBox:
    return NonsmoothBox(base, upper)


class LinearTilt(Functional):
    """``f(u) = +h * sum g_i u_i``: polarization increases it (negative control)."""

    name = "linear-tilt"
    claims_polarization_monotone = False

    def __init__(self, g: FunctionElement):
        super().__init__(g.model)
        self._g = g.values * g.model.weight

    def value(self, x):
        return float(self._g @ x)

    def grad(self, x):
        return self._g.copy()

    def lower_bound(self):
        return -math.inf

    def params(self):
        return {"g": (self._g / self.model.weight).tolist()}


# -- monotonicity checker ---------------------------------------------------


@dataclass
class MonotonicityReport:
    functional: str
    samples: int
    seed: int
    max_violation: float
    passed: bool
    tolerance: float = MONOTONE_TOL
    skipped: int = 0
    witness: Optional[dict] = None

    def to_dict(self):
        return {
            "schema": "symek.monotonicity/1",
            "functional": self.functional,
            "samples": self.samples,
            "seed": self.seed,
            "max_violation": self.max_violation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "skipped": self.skipped,
            "witness": self.witness,
        }


def check_polarization_monotone(f: Functional, model, samples, seed, scale=None) -> MonotonicityReport:
    """Largest observed ``f(u^H) - f(u)`` over random u in S and polarizers H."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if model != f.model:
        raise ModelMismatch(f"{model} vs {f.model}")
    rng = np.random.default_rng(seed)
    family = polarizer_family(model)
    scale = f.sample_scale if scale is None else scale
    worst = -math.inf
    witness = None
    skipped = 0
    for _ in range(samples):
        u = random_cone_element(model, rng, scale)
        H = family[int(rng.integers(len(family)))]
        fu = f(u)
        if math.isinf(fu):
            skipped += 1
            continue
        viol = f(polarize(u, H)) - fu
        if viol > worst:
            worst = viol
            witness = {"u": u.to_dict(), "H": H.to_dict(), "f_u": fu, "f_uH": fu + viol}
    passed = worst <= MONOTONE_TOL
    return MonotonicityReport(f.name, samples, seed, worst, passed, skipped=skipped, witness=witness)


# -- catalog ----------------------------------------------------------------


def default_profile(model, amplitude=1.0):
    """A symmetric-decreasing nonnegative profile on the model."""
    if model.is_grid:
        x = model.nodes()
        vals = amplitude * np.exp(-x * x)
    else:
        n = model.n
        vals = amplitude * (n - np.arange(n)) / n
    return symmetrize(FunctionElement(model, vals))


@dataclass(frozen=True)
class FunctionalCatalogEntry:
    name: str
    builder: object
    description: str
    negative_control: bool = False

    def build(self, model, params=None):
        return self.builder(model, dict(params or {}))


def _take(params, key, default, kind=float):
    val = params.pop(key, default)
    try:
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {val!r}", field=key) from None


def _finish(params):
    if params:
        raise ConfigError(f"unknown parameters {sorted(params)}", field="functional")


def _profile(model, params, key="amplitude"):
    if "target" in params:
        return FunctionElement(model, params.pop("target"))
    return default_profile(model, _take(params, key, 1.0))


def _quadratic(model, params):
    t = _profile(model, params)
    _finish(params)
    return QuadraticTarget(t)


def _dirichlet(model, params):
    g = _profile(model, params)
    pot = params.pop("potential", "double-well")
    if pot not in POTENTIALS:
        raise ConfigError(f"unknown potential {pot!r}", field="potential")
    penalty = _take(params, "penalty", 1.0)
    upper = params.pop("upper", None)
    _finish(params)
    f = DirichletPotential(model, g, POTENTIALS[pot](), penalty)
    return f if upper is None else NonsmoothBox(f, float(upper))


def _dirichlet_box(model, params):
    params.setdefault("upper", 3.0)
    return _dirichlet(model, params)


def _linear_tilt(model, params):
    g = _profile(model, params)
    _finish(params)
    return LinearTilt(g)


CATALOG = {
    e.name: e
    for e in [
        FunctionalCatalogEntry("quadratic", _quadratic, "squared V-distance to a symmetric target"),
        FunctionalCatalogEntry("dirichlet", _dirichlet, "Dirichlet energy + double-well - g*u (grid)"),
        FunctionalCatalogEntry("dirichlet-box", _dirichlet_box, "dirichlet restricted to [0, upper]^n"),
        FunctionalCatalogEntry("linear-tilt", _linear_tilt, "+g*u, fails monotonicity", negative_control=True),
    ]
}


def build_functional(name, model, params=None) -> Functional:
    try:
        entry = CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown functional {name!r}; known: {sorted(CATALOG)}", field="functional") from None
    try:
        return entry.build(model, params)
    except (NotSymmetric, NotNonnegative, ModelMismatch, ValueError) as exc:
        raise ConfigError(str(exc), field="functional") from exc


class LatticeRestriction(Functional):
    """``base`` restricted to the grid ``levels^n`` (+inf elsewhere).

    ``inner_min`` is an exhaustive search over every lattice point, preferring
    the center on ties, which makes it a brute-force oracle for small n.
    """

    def __init__(self, base: Functional, levels):
        super().__init__(base.model)
        if base.model.n > 6:
            raise ValueError("exhaustive lattice search is limited to n <= 6")
        self.base = base
        self.levels = np.asarray(sorted(set(float(x) for x in levels)))
        self.name = f"{base.name}-lattice"
        self.claims_polarization_monotone = base.claims_polarization_monotone
        mesh = np.meshgrid(*([self.levels] * self.model.n), indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)
        self._values = np.array([base.value(p) for p in self.points])

    def on_lattice(self, x):
        return bool(np.all(np.isin(x, self.levels)))

    def value(self, x):
        return self.base.value(x) if self.on_lattice(x) else math.inf

    def lower_bound(self):
        return float(self._values.min())

    def cone_reduce(self, u):
        return u

    def inner_min(self, center, sigma, tol, budget):
        self._check(center)
        c = center.values
        phi = self._values + sigma * np.array([xnorm(self.model, p - c) for p in self.points])
        best = int(np.argmin(phi))
        if self.on_lattice(c) and self.base.value(c) <= phi[best]:
            return center
        return FunctionElement(self.model, self.points[best])
