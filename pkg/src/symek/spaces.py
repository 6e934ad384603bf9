"""Concrete function spaces: points of X, the cone S, the two norms and the
retraction onto the cone.

Two models are provided.  ``VectorModel`` is R^n with the Euclidean norm used
for both X and V.  ``Grid1DModel`` samples functions at the nodes
``x_i = i * h`` for ``i = -m..m`` (``n = 2m + 1``); V is the discrete L2 norm
and X the discrete H1 norm built from interior differences.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ModelMismatch

#: Lipschitz constant of the retraction ``theta`` in the V-norm.
THETA_LIPSCHITZ = 1.0


class ModelKind(str, enum.Enum):
    VECTOR = "vector"
    GRID1D = "grid1d"


@dataclass(frozen=True)
class ModelDescriptor:
    kind: ModelKind
    n: int
    h_mesh: float = 1.0

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        h = float(self.h_mesh)
        if not (h > 0 and math.isfinite(h)):
            raise ValueError(f"h_mesh must be positive, got {self.h_mesh!r}")
        if kind is ModelKind.VECTOR and h != 1.0:
            raise ValueError("VectorModel has h_mesh fixed to 1")
        if kind is ModelKind.GRID1D and (self.n < 3 or self.n % 2 == 0):
            raise ValueError(f"Grid1DModel needs odd n >= 3, got {self.n}")
        object.__setattr__(self, "h_mesh", h)

    @classmethod
    def vector(cls, n):
        return cls(ModelKind.VECTOR, n, 1.0)

    @classmethod
    def grid1d(cls, n, h_mesh=1.0):
        return cls(ModelKind.GRID1D, n, h_mesh)

    @property
    def is_grid(self):
        return self.kind is ModelKind.GRID1D

    @property
    def half_width(self):
        """m such that the grid indices run over -m..m."""
        return (self.n - 1) // 2

    def node_indices(self):
        """Integer node labels: 0..n-1 for vectors, -m..m for grids."""
        if self.is_grid:
            m = self.half_width
            return np.arange(-m, m + 1)
        return np.arange(self.n)

    def nodes(self):
        if self.is_grid:
            return self.node_indices() * self.h_mesh
        return self.node_indices().astype(float)

    @property
    def weight(self):
        """Quadrature weight of the V inner product (1 or h)."""
        return self.h_mesh if self.is_grid else 1.0

    def to_dict(self):
        return {"kind": self.kind.value, "n": self.n, "h_mesh": self.h_mesh}

    @classmethod
    def from_dict(cls, d):
        return cls(ModelKind(d["kind"]), int(d["n"]), float(d.get("h_mesh", 1.0)))


class FunctionElement:
    """An immutable point of X."""

    __slots__ = ("model", "values")

    def __init__(self, model: ModelDescriptor, values):
        arr = np.array(values, dtype=float)
        if arr.shape != (model.n,):
            raise ValueError(f"expected {model.n} values, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("FunctionElement is immutable")

    def __repr__(self):
        return f"FunctionElement({self.model.kind.value}, {self.values.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, FunctionElement):
            return NotImplemented
        return self.model == other.model and np.array_equal(self.values, other.values)

    __hash__ = None

    def _check(self, other):
        if self.model != other.model:
            raise ModelMismatch(f"{self.model} vs {other.model}")

    def __sub__(self, other):
        self._check(other)
        return FunctionElement(self.model, self.values - other.values)

    def __add__(self, other):
        self._check(other)
        return FunctionElement(self.model, self.values + other.values)

    def __mul__(self, scalar):
        return FunctionElement(self.model, self.values * float(scalar))

    __rmul__ = __mul__

    def with_values(self, values):
        return FunctionElement(self.model, values)

    def to_dict(self):
        return {"model": self.model.to_dict(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(ModelDescriptor.from_dict(d["model"]), d["values"])


@dataclass(frozen=True)
class NormPair:
    norm_X: float
    norm_V: float


def zeros(model):
    return FunctionElement(model, np.zeros(model.n))


def in_cone(u: FunctionElement) -> bool:
    return bool(np.all(u.values >= 0))


def vnorm(model, x):
    """V-norm of a raw value array."""
    return math.sqrt(model.weight * float(np.dot(x, x)))


def xnorm(model, x):
    """X-norm of a raw value array."""
    if not model.is_grid:
        return math.sqrt(float(np.dot(x, x)))
    h = model.h_mesh
    d = np.diff(x) / h
    return math.sqrt(h * float(np.dot(x, x)) + h * float(np.dot(d, d)))


def norm_V(u: FunctionElement) -> float:
    return vnorm(u.model, u.values)


def norm_X(u: FunctionElement) -> float:
    return xnorm(u.model, u.values)


def norms(u: FunctionElement) -> NormPair:
    return NormPair(norm_X=norm_X(u), norm_V=norm_V(u))


def embedding_constant(model: ModelDescriptor) -> float:
    """Constant K with ``norm_V <= K * norm_X``.

    The X-norm squared is the V-norm squared plus a nonnegative term in both
    models, so K = 1.
    """
    return 1.0


def theta(u: FunctionElement) -> FunctionElement:
    """Retraction of X onto the cone: componentwise absolute value."""
    if in_cone(u):
        return u
    return FunctionElement(u.model, np.abs(u.values))


@functools.lru_cache(maxsize=64)
def gram_matrix(model: ModelDescriptor) -> np.ndarray:
    """Matrix A with ``norm_X(u)**2 == u @ A @ u``."""
    n = model.n
    if not model.is_grid:
        a = np.eye(n)
    else:
        h = model.h_mesh
        d = np.diff(np.eye(n), axis=0)
        a = h * np.eye(n) + (d.T @ d) / h
    a.setflags(write=False)
    return a


@functools.lru_cache(maxsize=64)
def whitening(model: ModelDescriptor):
    """Upper Cholesky factor R of the X Gram matrix and its inverse.

    With ``y = R @ x`` the X-norm of x is the Euclidean norm of y.
    """
    r = linalg.cholesky(gram_matrix(model), lower=False)
    r_inv = linalg.solve_triangular(r, np.eye(model.n), lower=False)
    r.setflags(write=False)
    r_inv.setflags(write=False)
    return r, r_inv


def dual_norm_X(model, g):
    """Norm in X' of the functional ``w -> g @ w`` (g a partial-derivative array)."""
    _, r_inv = whitening(model)
    return float(np.linalg.norm(r_inv.T @ np.asarray(g, dtype=float)))


def riesz_representative(model, g):
    """Element r of X with ``<r, w>_X == g @ w`` for all w."""
    return linalg.solve(gram_matrix(model), np.asarray(g, dtype=float), assume_a="pos")
