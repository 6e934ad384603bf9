import math

import numpy as np
import pytest

from symek.errors import ConfigError, NotSymmetric
from symek.functionals import (
    CATALOG,
    DirichletPotential,
    DoubleWell,
    LatticeRestriction,
    LinearTilt,
    NonsmoothBox,
    QuadraticTarget,
    ZeroPotential,
    build_functional,
    check_polarization_monotone,
    default_profile,
)
from symek.rearrangement import polarize, polarizer_family, random_cone_element
from symek.spaces import FunctionElement, ModelDescriptor, dual_norm_X, gram_matrix, xnorm, zeros

GRID = ModelDescriptor.grid1d(17, 0.25)


def dirichlet_oracle(h, g, u, W):
    # loop form, zero beyond both ends
    ext = [0.0] + list(u) + [0.0]
    e = 0.0
    for a, b in zip(ext, ext[1:]):
        e += 0.5 * h * ((b - a) / h) ** 2
    for gi, ui in zip(g, u):
        e += h * (W(ui) - gi * ui)
    return e


def fd_grad(f, x, step=1e-6):
    out = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        out[i] = (f.value(x + e) - f.value(x - e)) / (2 * step)
    return out


def test_quadratic_basics(vec16):
    f = build_functional("quadratic", vec16)
    assert f(f.target) == 0
    assert f.lower_bound() == 0
    with pytest.raises(NotSymmetric):
        QuadraticTarget(FunctionElement(ModelDescriptor.vector(3), [1, 2, 3]))


def test_quadratic_gradient(grid17):
    f = build_functional("quadratic", grid17)
    x = np.random.default_rng(0).random(17)
    assert f.grad(x) == pytest.approx(fd_grad(f, x), abs=1e-6)


def test_dirichlet_matches_loop_oracle():
    f = build_functional("dirichlet", GRID)
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = rng.random(17) * 2
        assert f.value(u) == pytest.approx(dirichlet_oracle(0.25, f.g.values, u, DoubleWell()), rel=1e-12)


def test_dirichlet_zero_and_constant():
    f = DirichletPotential(GRID, zeros(GRID), ZeroPotential())
    assert f(zeros(GRID)) == 0
    c = 1.5
    # only the two boundary edges to the zero extension contribute
    assert f.value(np.full(17, c)) == pytest.approx(c * c / 0.25, rel=1e-14)


def test_dirichlet_gradient_and_kinks():
    f = build_functional("dirichlet", GRID)
    x = np.random.default_rng(2).random(17) + 0.1
    assert f.grad(x) == pytest.approx(fd_grad(f, x), abs=1e-6)
    y = x.copy()
    y[0] = 0.0
    assert f.grad(y) is None
    d = f.descent_grad(y)
    # one-sided derivative into the cone is the positive-side partial
    e = np.zeros(17)
    e[0] = 1e-7
    slope = (f.value(y + e) - f.value(y)) / 1e-7
    assert d[0] == pytest.approx(min(slope, 0.0), abs=1e-5)


def test_dirichlet_off_cone_is_penalized():
    f = build_functional("dirichlet", GRID)
    x = np.random.default_rng(3).random(17)
    y = x.copy()
    y[3] = -y[3]
    assert f.value(y) > f.value(np.abs(y))
    assert f.cone_reduce(FunctionElement(GRID, y)) == FunctionElement(GRID, np.abs(y))


def test_dirichlet_lower_bound_is_valid():
    f = build_functional("dirichlet", GRID)
    lb = f.lower_bound()
    assert math.isfinite(lb)
    rng = np.random.default_rng(4)
    for _ in range(2000):
        assert f.value(rng.random(17) * 3) >= lb
    # a near minimizer found by descent also respects it
    from symek.variational import near_minimum

    assert f(near_minimum(f, GRID)) >= lb


def test_box():
    base = build_functional("dirichlet", GRID)
    f = NonsmoothBox(base, 2.0)
    x = np.full(17, 1.0)
    assert f.value(x) == base.value(x)
    x[4] = 2.5
    assert f.value(x) == math.inf
    assert f.grad(np.full(17, 2.0)) is None
    assert f.project_domain(x).max() == 2.0
    rng = np.random.default_rng(5)
    for _ in range(500):
        u = random_cone_element(GRID, rng, 2.0)
        H = polarizer_family(GRID)[int(rng.integers(len(polarizer_family(GRID))))]
        assert math.isfinite(f(polarize(u, H)))


@pytest.mark.parametrize("name", ["quadratic", "dirichlet", "dirichlet-box"])
def test_catalog_is_monotone(name):
    model = GRID
    f = build_functional(name, model)
    rep = check_polarization_monotone(f, model, 1000, 11)
    assert rep.passed, rep.to_dict()
    assert rep.max_violation <= 1e-10


def test_quadratic_monotone_on_vectors(vec16):
    f = build_functional("quadratic", vec16)
    assert check_polarization_monotone(f, vec16, 1000, 3).passed


def test_negative_control_fails_reproducibly(vec16):
    f = build_functional("linear-tilt", vec16)
    a = check_polarization_monotone(f, vec16, 500, 9)
    b = check_polarization_monotone(f, vec16, 500, 9)
    assert not a.passed and a.max_violation > 0
    assert a.to_dict() == b.to_dict()
    w = a.witness
    u = FunctionElement.from_dict(w["u"])
    from symek.rearrangement import Polarizer

    H = Polarizer.from_dict(vec16, w["H"])
    assert f(polarize(u, H)) - f(u) == pytest.approx(a.max_violation)
    assert CATALOG["linear-tilt"].negative_control
    assert isinstance(f, LinearTilt)


def test_build_functional_errors(vec16):
    with pytest.raises(ConfigError):
        build_functional("nope", vec16)
    with pytest.raises(ConfigError):
        build_functional("dirichlet", vec16)
    with pytest.raises(ConfigError):
        build_functional("quadratic", vec16, {"bogus": 1})
    with pytest.raises(ConfigError):
        build_functional("dirichlet", GRID, {"potential": "cubic"})


def perturbed_optimality(f, w, c, sigma):
    """Residual of 0 in grad f(w) + sigma * A(w-c)/|w-c|_X."""
    model = w.model
    d = w.values - c.values
    nrm = xnorm(model, d)
    g = f.grad(w.values)
    if nrm == 0:
        return max(dual_norm_X(model, g) - sigma, 0.0)
    return dual_norm_X(model, g + sigma * gram_matrix(model) @ d / nrm)


@pytest.mark.parametrize("model", [ModelDescriptor.vector(6), GRID])
def test_quadratic_inner_min_is_exact(model):
    f = QuadraticTarget(default_profile(model, 2.0))
    rng = np.random.default_rng(6)
    for _ in range(20):
        c = FunctionElement(model, rng.random(model.n) * 3)
        for sigma in (0.01, 0.1, 1.0):
            w = f.inner_min(c, sigma, 1e-12, 100)
            assert perturbed_optimality(f, w, c, sigma) <= 1e-9


def test_dirichlet_inner_min_beats_sampled_points():
    f = build_functional("dirichlet", GRID)
    rng = np.random.default_rng(7)
    for _ in range(5):
        c = random_cone_element(GRID, rng, 2.0)
        sigma = 0.1
        w = f.inner_min(c, sigma, 1e-10, 5000)
        phi = lambda x: f.value(x) + sigma * xnorm(GRID, x - c.values)
        assert phi(w.values) <= f(c)
        for _ in range(200):
            p = w.values + rng.normal(size=17) * 10 ** rng.uniform(-6, -1)
            assert phi(p) >= phi(w.values) - 1e-9


def test_lattice_restriction():
    m = ModelDescriptor.vector(3)
    base = QuadraticTarget(FunctionElement(m, [1.2, 0.7, 0.1]))
    f = LatticeRestriction(base, [0, 0.5, 1])
    assert len(f.points) == 27
    assert f.value(np.array([0.5, 0.5, 0.25])) == math.inf
    assert f.lower_bound() == min(base.value(p) for p in f.points)
    c = FunctionElement(m, [0, 1, 0])
    w = f.inner_min(c, 0.2, 0, 1)
    phis = [f.value(p) + 0.2 * xnorm(m, p - c.values) for p in f.points]
    assert f.value(w.values) + 0.2 * xnorm(m, w.values - c.values) == min(phis)
