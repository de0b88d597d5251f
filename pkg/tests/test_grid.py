import json

import numpy as np
import pytest

from debias_lab.errors import (
    DegenerateSliceError,
    DimensionMismatchError,
    InfeasibleRadiusError,
    PreconditionError,
)
from debias_lab.grid import (
    Axis,
    Dataset,
    Density,
    GridSpace,
    SignedDensity,
    add_scaled,
    binary,
    conditional,
    continuous,
    ess_sup_distance,
    feasible_radius,
    hellinger_sq,
    integrate,
    l2_nuisance_distance,
    marginal,
    point_mass,
    sample,
    uniform_density,
)


def two_point_space():
    return GridSpace((binary("w"),))


def test_atom_weights_product_rule():
    space = GridSpace((continuous("z1", 8), binary("z2"), binary("w")))
    assert space.atom_weight == pytest.approx(1.0 / 8)
    # total base-measure mass is 1 per continuous axis times 2 per binary axis
    assert space.n_atoms * space.atom_weight == pytest.approx(4.0)


def test_integrate_uniform_normalization():
    space = GridSpace((binary("z1"), binary("w")))
    p = uniform_density(space)
    assert integrate(p, np.ones(space.shape)) == pytest.approx(1.0)


def test_integrate_signed_zero_mass():
    h = SignedDensity(two_point_space(), np.array([1.0, -1.0]))
    assert integrate(h, np.ones(2)) == 0.0


def test_integrate_midpoint_quadrature_exact():
    # int_0^1 x dx on 4 cells: (0.125 + 0.375 + 0.625 + 0.875) / 4 exactly
    space = GridSpace((continuous("z1", 4),))
    p = uniform_density(space)
    assert integrate(p, space.coords(0)) == pytest.approx(0.5, abs=0)


def test_integrate_dimension_mismatch():
    p = uniform_density(two_point_space())
    with pytest.raises(DimensionMismatchError):
        integrate(p, np.ones(3))


def test_add_scaled_linear_arithmetic():
    p = uniform_density(two_point_space())
    h = SignedDensity(two_point_space(), np.array([0.5, -0.5]))
    out = add_scaled(p, 0.5, h)
    assert np.allclose(out.values, [0.75, 0.25], atol=0)


def test_add_scaled_infeasible_reports_radius():
    p = uniform_density(two_point_space())
    h = SignedDensity(two_point_space(), np.array([0.5, -0.5]))
    with pytest.raises(InfeasibleRadiusError) as err:
        add_scaled(p, 2.0, h)
    assert err.value.radius == pytest.approx(1.0)


def test_add_scaled_identity_at_zero():
    p = uniform_density(two_point_space())
    h = SignedDensity(two_point_space(), np.array([0.5, -0.5]))
    assert np.array_equal(add_scaled(p, 0.0, h).values, p.values)


def test_add_scaled_round_trip_is_stable():
    rng = np.random.default_rng(0)
    space = GridSpace((continuous("z1", 16), binary("w")))
    vals = rng.uniform(0.2, 1.0, size=space.shape)
    vals /= vals.sum() * space.atom_weight
    p = Density(space, vals)
    h_raw = rng.standard_normal(space.shape)
    h_raw -= h_raw.mean()
    h = SignedDensity(space, h_raw)
    t = 0.25 * feasible_radius(p, h)
    back = add_scaled(add_scaled(p, t, h), -t, h)
    assert np.max(np.abs(back.values - p.values)) < 1e-14


def test_feasible_radius_cases():
    p = uniform_density(two_point_space())
    h = SignedDensity(two_point_space(), np.array([0.5, -0.5]))
    assert feasible_radius(p, h) == pytest.approx(1.0)
    zero = SignedDensity(two_point_space(), np.zeros(2))
    assert feasible_radius(p, zero) == np.inf
    boundary = Density(two_point_space(), np.array([0.0, 1.0]))
    assert feasible_radius(boundary, h) == 0.0


def test_marginal_product_factorization():
    space = GridSpace((continuous("z1", 8), binary("w")))
    q = 0.4 + 0.2 * space.coords(0)
    r = np.array([0.3, 0.7])
    q_norm = q / (q.sum() / 8)
    p = Density(space, q_norm[:, None] * r[None, :])
    marg = marginal(p, [0])
    assert np.allclose(marg.values, q_norm, atol=1e-15)


def test_marginal_onto_treatment():
    from debias_lab import estimands as est

    space = est.make_space(est.ATE, x_cells=16)
    p = est.ate_joint(space, np.full(16, 0.3), np.full((16, 2), 0.5))
    marg = marginal(p, [1])
    assert np.allclose(marg.values, [0.7, 0.3], atol=1e-15)


def test_conditional_of_uniform_is_uniform():
    space = GridSpace((continuous("z1", 4), binary("w")))
    p = uniform_density(space)
    cond = conditional(p, {0: 2})
    assert np.allclose(cond.values, uniform_density(cond.space).values)


def test_conditional_times_marginal_reconstructs():
    rng = np.random.default_rng(1)
    space = GridSpace((continuous("z1", 6), binary("z2"), binary("w")))
    vals = rng.uniform(0.1, 1.0, size=space.shape)
    vals /= vals.sum() * space.atom_weight
    p = Density(space, vals)
    marg = marginal(p, [0, 1])
    for i in range(6):
        for d in range(2):
            cond = conditional(p, {0: i, 1: d})
            recon = cond.values * marg.values[i, d]
            assert np.max(np.abs(recon - p.values[i, d, :])) < 1e-12


def test_conditional_zero_mass_slice():
    space = GridSpace((binary("z1"), binary("w")))
    p = Density(space, np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(DegenerateSliceError):
        conditional(p, {0: 1})


def test_sample_point_mass():
    space = GridSpace((continuous("z1", 4), binary("w")))
    p = point_mass(space, 5)
    data = sample(p, 50, seed=3)
    assert np.all(data.rows == 5)


def test_sample_frequency_concentrates():
    p = uniform_density(two_point_space())
    data = sample(p, 1_000_000, seed=0)
    freq = np.mean(data.rows == 0)
    assert 0.498 <= freq <= 0.502


def test_sample_deterministic_and_empty():
    p = uniform_density(two_point_space())
    a = sample(p, 100, seed=11)
    b = sample(p, 100, seed=11)
    assert np.array_equal(a.rows, b.rows)
    assert sample(p, 0, seed=1).n == 0


def test_hellinger_basic_values():
    half = Density(two_point_space(), np.array([0.5, 0.5]))
    sure = Density(two_point_space(), np.array([0.0, 1.0]))
    assert hellinger_sq(half, half) == 0.0
    assert hellinger_sq(half, sure) == pytest.approx(2.0 - np.sqrt(2.0), abs=1e-15)
    other = Density(two_point_space(), np.array([1.0, 0.0]))
    assert hellinger_sq(sure, other) == pytest.approx(2.0)


def test_hellinger_symmetry_and_bounds():
    rng = np.random.default_rng(5)
    space = GridSpace((continuous("z1", 12), binary("w")))
    for _ in range(20):
        a = rng.uniform(0.01, 1.0, size=space.shape)
        b = rng.uniform(0.01, 1.0, size=space.shape)
        a /= a.sum() * space.atom_weight
        b /= b.sum() * space.atom_weight
        pa, pb = Density(space, a), Density(space, b)
        h = hellinger_sq(pa, pb)
        assert h == pytest.approx(hellinger_sq(pb, pa), abs=0)
        assert 0.0 <= h <= 2.0
    assert hellinger_sq(pa, pa) == 0.0


def test_l2_nuisance_distance():
    space = GridSpace((continuous("z1", 8),))
    p_z = uniform_density(space)
    f = np.linspace(0, 1, 8)
    assert l2_nuisance_distance(f, f, p_z) == 0.0
    assert l2_nuisance_distance(f, f - 0.3, p_z) == pytest.approx(0.3)
    delta = np.ones(8)
    delta[4:] = -1.0
    assert l2_nuisance_distance(f + 0.17 * delta, f, p_z) == pytest.approx(0.17)


def test_mass_invariants_enforced():
    space = two_point_space()
    with pytest.raises(PreconditionError):
        Density(space, np.array([0.6, 0.6]))
    with pytest.raises(PreconditionError):
        SignedDensity(space, np.array([0.5, 0.1]))
    with pytest.raises(PreconditionError):
        Density(space, np.array([1.5, -0.5]))


def test_density_json_round_trip():
    space = GridSpace((continuous("z1", 4), binary("w")))
    p = uniform_density(space)
    doc = json.loads(json.dumps(p.to_json()))
    q = Density.from_json(doc)
    assert q.space == p.space
    assert np.array_equal(q.values, p.values)


def test_dataset_csv_round_trip():
    space = GridSpace((continuous("z1", 4), binary("w")))
    data = sample(uniform_density(space), 20, seed=2)
    text = data.to_csv()
    back = Dataset.from_csv(space, text, seed=2)
    assert np.array_equal(back.rows, data.rows)


def test_ess_sup_distance():
    a = Density(two_point_space(), np.array([0.5, 0.5]))
    b = Density(two_point_space(), np.array([0.3, 0.7]))
    assert ess_sup_distance(a, b) == pytest.approx(0.2)
