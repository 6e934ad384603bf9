import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symek.errors import NotInCone, ScheduleExhausted
from symek.rearrangement import (
    PolarizationSchedule,
    Polarizer,
    approx_symmetrize,
    is_symmetric,
    polarize,
    polarizer_family,
    random_cone_element,
    replay,
    symmetrize,
    universal_sequence,
    verify_framework,
)
from symek.spaces import FunctionElement, ModelDescriptor, norm_V

nonneg = st.floats(0, 100, allow_nan=False)


def pairing_oracle(h, values, a):
    """Polarize by brute force over node coordinates."""
    m = (len(values) - 1) // 2
    xs = [i * h for i in range(-m, m + 1)]
    out = list(values)
    for p, x in enumerate(xs):
        xr = 2 * a - x
        q = next((q for q, y in enumerate(xs) if abs(y - xr) < 1e-9 * h), None)
        if q is None or q == p:
            continue
        on_origin_side = x < a if a > 0 else (x > a if a < 0 else x > 0)
        if on_origin_side:
            out[p] = max(values[p], values[q])
            out[q] = min(values[p], values[q])
    return out


def placement_oracle(model, values):
    """Arrangement maximizing sum u_pi(i) * w_i for a strictly rank-decreasing w."""
    x = model.nodes()
    w = -np.abs(x) - 0.1 * model.h_mesh * (x < 0)
    vals = np.abs(values)
    best = max(itertools.permutations(vals), key=lambda p: float(np.dot(p, w)))
    return np.array(best)


def test_vector_polarize_example():
    m = ModelDescriptor.vector(3)
    u = FunctionElement(m, [1, 3, 2])
    assert polarize(u, Polarizer(m, (0, 1))).values.tolist() == [3, 1, 2]


def test_grid_polarize_example():
    m = ModelDescriptor.grid1d(5, 1.0)
    u = FunctionElement(m, [0, 0, 1, 5, 0])
    H = Polarizer(m, 1)
    assert H.center == 0.5
    assert polarize(u, H).values.tolist() == [0, 0, 5, 1, 0]
    assert pairing_oracle(1.0, [0, 0, 1, 5, 0], 0.5) == [0, 0, 5, 1, 0]


@pytest.mark.parametrize("h", [1.0, 0.3])
def test_grid_polarize_matches_pairing_oracle(h):
    m = ModelDescriptor.grid1d(7, h)
    rng = np.random.default_rng(3)
    for H in polarizer_family(m):
        for _ in range(20):
            u = random_cone_element(m, rng)
            expect = pairing_oracle(h, u.values.tolist(), H.center)
            assert polarize(u, H).values.tolist() == expect


def test_symmetrize_examples():
    v = ModelDescriptor.vector(3)
    assert symmetrize(FunctionElement(v, [1, 3, 2])).values.tolist() == [3, 2, 1]
    assert symmetrize(FunctionElement(v, [-1, 3, -2])).values.tolist() == [3, 2, 1]
    g = ModelDescriptor.grid1d(3, 1.0)
    assert symmetrize(FunctionElement(g, [0.2, 0.5, 0.9])).values.tolist() == [0.2, 0.9, 0.5]


@pytest.mark.parametrize("model", [ModelDescriptor.grid1d(7, 0.5), ModelDescriptor.vector(6)])
def test_symmetrize_matches_placement_oracle(model):
    rng = np.random.default_rng(4)
    for _ in range(15):
        u = random_cone_element(model, rng)
        assert symmetrize(u).values == pytest.approx(placement_oracle(model, u.values), abs=0)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 9, elements=nonneg), st.integers(-7, 7))
def test_grid_polarization_properties(values, k):
    m = ModelDescriptor.grid1d(9, 0.5)
    u = FunctionElement(m, values)
    H = Polarizer(m, k)
    uh = polarize(u, H)
    assert polarize(uh, H) == uh
    assert sorted(uh.values) == sorted(u.values)
    us = symmetrize(u)
    assert polarize(us, H) == us
    assert symmetrize(uh) == us


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 6, elements=nonneg), arrays(np.float64, 6, elements=nonneg), st.data())
def test_vector_polarization_nonexpansive(a, b, data):
    m = ModelDescriptor.vector(6)
    i = data.draw(st.integers(0, 4))
    j = data.draw(st.integers(i + 1, 5))
    H = Polarizer(m, (i, j))
    u, v = FunctionElement(m, a), FunctionElement(m, b)
    assert norm_V(polarize(u, H) - polarize(v, H)) <= norm_V(u - v) * (1 + 1e-12) + 1e-12


def odd_even_sort_oracle(values):
    x = list(values)
    swaps = 0
    for r in range(len(x)):
        for i in range(r % 2, len(x) - 1, 2):
            swaps += 1
            if x[i] < x[i + 1]:
                x[i], x[i + 1] = x[i + 1], x[i]
    return x, swaps


def test_universal_sequence_is_a_sorting_network():
    for n in (4, 5, 16):
        m = ModelDescriptor.vector(n)
        seq = universal_sequence(m)
        assert len(seq) == n * (n - 1) // 2
        rng = np.random.default_rng(n)
        for _ in range(50):
            u = random_cone_element(m, rng)
            expect, swaps = odd_even_sort_oracle(u.values)
            assert swaps == len(seq)
            assert replay(u, seq).values.tolist() == expect


def test_grid_universal_sequence_reaches_symmetrization():
    m = ModelDescriptor.grid1d(17, 0.25)
    rng = np.random.default_rng(5)
    seq = universal_sequence(m)
    for _ in range(50):
        u = random_cone_element(m, rng)
        assert replay(u, seq) == symmetrize(u)


def test_approx_symmetrize_examples():
    m = ModelDescriptor.vector(4)
    u = FunctionElement(m, [1, 2, 3, 4])
    t, used = approx_symmetrize(u, 1e-3, PolarizationSchedule.sweep())
    assert t.values.tolist() == [4, 3, 2, 1]
    assert len(used) <= 6
    s = FunctionElement(m, [4, 3, 3, 0])
    t, used = approx_symmetrize(s, 0.5, PolarizationSchedule.sweep())
    assert t == s and used == []


def test_approx_symmetrize_seeded_random():
    m = ModelDescriptor.vector(16)
    rng = np.random.default_rng(6)
    steps = []
    for s in range(200):
        u = random_cone_element(m, rng)
        t, used = approx_symmetrize(u, 1e-3, PolarizationSchedule.seeded(s))
        assert norm_V(t - symmetrize(u)) < 1e-3
        assert replay(u, used) == t
        steps.append(len(used))
    assert max(steps) < 100_000


def test_approx_symmetrize_errors():
    m = ModelDescriptor.vector(4)
    with pytest.raises(NotInCone):
        approx_symmetrize(FunctionElement(m, [1, -1, 0, 0]), 0.1, PolarizationSchedule.sweep())
    with pytest.raises(ScheduleExhausted):
        approx_symmetrize(FunctionElement(m, [1, 2, 3, 4]), 1e-3, PolarizationSchedule.sweep(max_steps=2))
    with pytest.raises(ValueError):
        PolarizationSchedule("seeded_random", None)


def test_polarizer_round_trip(model):
    for H in polarizer_family(model):
        assert Polarizer.from_dict(model, H.to_dict()) == H


@pytest.mark.parametrize("model", [ModelDescriptor.vector(8), ModelDescriptor.grid1d(9, 0.5)])
def test_verify_framework_passes(model):
    rep = verify_framework(model, 200, 7)
    assert rep.passed, rep.to_dict()
    assert rep.axiom("fixed_point_idempotence").worst_residual == 0


def test_verify_framework_catches_broken_polarizer():
    def broken(u, H):
        kept, partner = H.slots
        x = u.values.copy()
        a, b = x[kept], x[partner]
        x[kept], x[partner] = np.minimum(a, b), np.maximum(a, b)
        return FunctionElement(u.model, x)

    rep = verify_framework(ModelDescriptor.vector(6), 100, 1, polarize_fn=broken)
    ax = rep.axiom("fixed_point_idempotence")
    assert not ax.passed
    assert ax.witness is not None


def test_is_symmetric():
    m = ModelDescriptor.grid1d(5, 1.0)
    assert is_symmetric(FunctionElement(m, [0, 1, 3, 2, 0]))
    assert not is_symmetric(FunctionElement(m, [0, 2, 3, 1, 0]))
