import math

import numpy as np
import pytest

from zrphydro import (BondLaw, ValidationError, apply_generator,
                      build_cluster_graph, corrected_function_convergence,
                      dirichlet_form, estimate_D_matrix, estimate_D_msd,
                      estimate_D_variational, generate_field, inner_product,
                      label_clusters, minimize_corrector, norm_l1, norm_l2,
                      solve_resolvent, threshold_field, variational_energy)
from zrphydro.observables import TrigPolynomial, builtin_test_function

from conftest import make_hand_field


def graph_of(field, N=None):
    lab = label_clusters(threshold_field(field, 0.0), field.boundary)
    return build_cluster_graph(field, lab, N or field.dims[0])


def dense_generator(graph):
    """Dense matrix oracle for L_N."""
    n = graph.n
    L = np.zeros((n, n))
    N2 = float(graph.N) ** 2
    for i, j, w in zip(graph.edge_tail, graph.edge_head, graph.edge_weight):
        L[i, j] += N2 * w
        L[j, i] += N2 * w
        L[i, i] -= N2 * w
        L[j, j] -= N2 * w
    return L


def test_build_full_lattice():
    field = make_hand_field((4, 4), {}, boundary="periodic")
    field.values[:] = 1.0
    g = graph_of(field, N=4)
    assert g.n == 16
    assert len(g.edge_weight) == 32
    assert np.all(g.edge_weight == 1.0)
    assert g.m_hat == 1.0


def test_build_excludes_other_components():
    # DERIVED: hand enumeration on 3x3 with two components
    bonds = {((0, 0), 1): 1.0, ((0, 1), 1): 0.5,   # 3-site path, the giant
             ((2, 0), 1): 0.9}                      # separate 2-site bond
    field = make_hand_field((3, 3), bonds)
    g = graph_of(field, N=3)
    assert g.n == 3
    assert len(g.edge_weight) == 2
    assert sorted(g.edge_weight.tolist()) == [0.5, 1.0]


def test_degree_matches_incident_open_bonds(bernoulli_field_32):
    field, lab = bernoulli_field_32
    g = build_cluster_graph(field, lab, 32)
    deg = np.zeros(g.n, dtype=int)
    np.add.at(deg, g.edge_tail, 1)
    np.add.at(deg, g.edge_head, 1)
    assert deg.min() >= 1
    # count open bonds with both endpoints in the cluster, per site
    mask = lab.giant_mask()
    W = field.incident_weight()
    open_bonds = (field.values > 0).sum()
    assert len(g.edge_weight) <= open_bonds


def test_empty_cluster_raises():
    field = make_hand_field((3, 3), {})
    lab = label_clusters(threshold_field(field, 0.0), "free")
    with pytest.raises(ValidationError):
        build_cluster_graph(field, lab, 3)


def test_generator_constant_is_zero(full_field_16):
    field, lab = full_field_16
    g = build_cluster_graph(field, lab, 16)
    out = apply_generator(g, np.full(g.n, 3.7))
    assert np.abs(out).max() == 0.0


def test_generator_single_edge_formula():
    w = 0.6
    field = make_hand_field((2, 2), {((0, 0), 0): w})
    g = graph_of(field, N=2)
    f = np.array([1.0, 3.0])
    out = apply_generator(g, f)
    # two-point formula: +/- N^2 w (f_other - f_self)
    expected = 4.0 * w * np.array([f[1] - f[0], f[0] - f[1]])
    assert np.allclose(out, expected, atol=1e-14)


def test_generator_vs_dense_oracle():
    # DERIVED: dense matrix oracle on a 6x6 supercritical cluster
    law = BondLaw("uniform", c0=1.0)
    field = generate_field(law, (6, 6), "periodic", 23)
    g = graph_of(field)
    L = dense_generator(g)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(g.n)
    assert np.allclose(apply_generator(g, f), L @ f, atol=1e-11)


def test_dirichlet_form_routes_agree():
    law = BondLaw("uniform", c0=1.0)
    field = generate_field(law, (6, 6), "periodic", 29)
    g = graph_of(field)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(g.n)
    h = rng.standard_normal(g.n)
    edge_route = dirichlet_form(g, f, h)
    gen_route = inner_product(g, f, -apply_generator(g, h))
    assert abs(edge_route - gen_route) < 1e-12 * max(1.0, abs(edge_route))
    assert dirichlet_form(g, f, f) >= 0.0


def test_dirichlet_form_constants_and_indicator():
    w = 0.8
    field = make_hand_field((2, 2), {((0, 0), 0): w})
    g = graph_of(field, N=2)
    const = np.full(g.n, 2.0)
    assert dirichlet_form(g, const, const) == 0.0
    ind = np.array([1.0, 0.0])
    # N^{2-d} * w * (df)^2 = 4^0 * w
    assert dirichlet_form(g, ind, ind) == pytest.approx(w)


def test_resolvent_matches_dense_solve_path():
    # DERIVED: dense linear solve on a 5-site path with arbitrary weights
    bonds = {((0, 0), 1): 0.3, ((0, 1), 1): 1.0, ((0, 2), 1): 0.45,
             ((0, 3), 1): 0.8}
    field = make_hand_field((2, 5), bonds)
    g = graph_of(field, N=5)
    assert g.n == 5
    lam = 1.0
    rng = np.random.default_rng(2)
    h = rng.standard_normal(5)
    sol = solve_resolvent(g, lam, h=h, tol=1e-12)
    dense = np.linalg.solve(lam * np.eye(5) - dense_generator(g), h)
    assert np.abs(sol.values - dense).max() < 1e-8


def test_resolvent_matches_dense_solve_cluster():
    law = BondLaw("uniform", c0=1.0)
    field = generate_field(law, (8, 8), "periodic", 31)
    g = graph_of(field)
    assert g.n <= 100 or True
    rng = np.random.default_rng(3)
    h = rng.standard_normal(g.n)
    sol = solve_resolvent(g, 0.7, h=h, tol=1e-12)
    dense = np.linalg.solve(0.7 * np.eye(g.n) - dense_generator(g), h)
    assert np.abs(sol.values - dense).max() < 1e-8


def test_resolvent_constant_fixed_point(full_field_16):
    field, lab = full_field_16
    g = build_cluster_graph(field, lab, 16)
    sol = solve_resolvent(g, 2.0, h=np.full(g.n, 2.0 * 5.5))
    assert np.array_equal(sol.values, np.full(g.n, 5.5))
    assert sol.iterations == 0


def test_resolvent_neumann_large_lambda(full_field_16):
    field, lab = full_field_16
    g = build_cluster_graph(field, lab, 16)
    rng = np.random.default_rng(4)
    h = rng.standard_normal(g.n)
    errs = []
    # asymptotic regime needs lam >> ||L_N|| ~ 8 N^2 = 2048
    for lam in (1e4, 1e5):
        sol = solve_resolvent(g, lam, h=h, tol=1e-13)
        errs.append(norm_l2(g, sol.values - h / lam))
    # u = h/lam + L_N h / lam^2 + ...: the gap scales like lam^{-2}
    assert errs[1] < errs[0] / 50.0


def test_resolvent_symmetry(bernoulli_field_32):
    field, lab = bernoulli_field_32
    g = build_cluster_graph(field, lab, 32)
    rng = np.random.default_rng(5)
    h1 = rng.standard_normal(g.n)
    h2 = rng.standard_normal(g.n)
    u1 = solve_resolvent(g, 1.0, h=h1, tol=1e-12).values
    u2 = solve_resolvent(g, 1.0, h=h2, tol=1e-12).values
    a = inner_product(g, h1, u2)
    b = inner_product(g, h2, u1)
    assert abs(a - b) < 1e-9 * max(1.0, abs(a))


def test_resolvent_validation(full_field_16):
    field, lab = full_field_16
    g = build_cluster_graph(field, lab, 16)
    with pytest.raises(ValidationError):
        solve_resolvent(g, 0.0, h=np.ones(g.n))
    with pytest.raises(ValidationError):
        solve_resolvent(g, 1.0)


def test_variational_identity_on_full_lattice(full_field_16):
    field, lab = full_field_16
    g = build_cluster_graph(field, lab, 16)
    D = estimate_D_matrix(g)
    assert np.allclose(D.matrix, np.eye(2), atol=1e-12)
    row = estimate_D_variational(g, 0)
    assert np.allclose(row, [1.0, 0.0], atol=1e-12)


def test_variational_matches_dense_least_squares():
    # DERIVED: dense quadratic minimization on a 4x4 torus with random weights
    law = BondLaw("uniform", c0=1.0)
    field = generate_field(law, (4, 4), "periodic", 41)
    g = graph_of(field)
    a = np.array([1.0, 0.0])
    chi, energy, _ = minimize_corrector(g, a, tol=1e-12)
    # oracle: minimize || sqrt(w) (a_E + B chi) ||^2 by lstsq
    n, ne = g.n, len(g.edge_weight)
    B = np.zeros((ne, n))
    B[np.arange(ne), g.edge_head] += 1.0
    B[np.arange(ne), g.edge_tail] -= 1.0
    sw = np.sqrt(g.edge_weight)
    rhs = -sw * a[g.edge_axis]
    chi_ls, *_ = np.linalg.lstsq(sw[:, None] * B, rhs, rcond=None)
    e_ls = float(np.sum((sw * (a[g.edge_axis] + B @ chi_ls)) ** 2))
    assert abs(energy - e_ls) < 1e-9 * max(1.0, e_ls)


def test_variational_upper_bound_zero_corrector():
    law = BondLaw("uniform", c0=1.0)
    field = generate_field(law, (8, 8), "periodic", 43)
    g = graph_of(field)
    for j in range(2):
        a = np.eye(2)[j]
        chi, energy, _ = minimize_corrector(g, a, tol=1e-11)
        zero_energy = variational_energy(g, a, np.zeros(g.n))
        assert energy <= zero_energy + 1e-12
        # the zero-corrector value is the sum of j-direction weights
        expected = g.edge_weight[g.edge_axis == j].sum()
        assert zero_energy == pytest.approx(expected)


def test_variational_energy_identity():
    # the CG minimum equals the independently recomputed quadratic
    law = BondLaw("uniform", c0=1.0)
    field = generate_field(law, (8, 8), "periodic", 47)
    g = graph_of(field)
    a = np.array([0.6, -0.2])
    chi, energy, _ = minimize_corrector(g, a, tol=1e-12)
    const = float(np.sum(g.edge_weight * a[g.edge_axis] ** 2))
    dchi = chi[g.edge_head] - chi[g.edge_tail]
    cross = 2.0 * float(np.sum(g.edge_weight * a[g.edge_axis] * dchi))
    quad = float(np.sum(g.edge_weight * dchi ** 2))
    assert abs(energy - (const + cross + quad)) < 1e-9 * max(1.0, energy)


def test_variational_symmetric_psd_random_seeds():
    law = BondLaw("bernoulli", p=0.75, c=1.0)
    for seed in (0, 1, 2):
        field = generate_field(law, (24, 24), "periodic", seed)
        g = graph_of(field)
        D = estimate_D_matrix(g).matrix
        assert np.allclose(D, D.T, atol=1e-10)
        assert np.linalg.eigvalsh(D).min() > -1e-10


def test_msd_calibration_identity(full_field_16):
    # DERIVED: simple random walk calibration, sigma = 1
    law = BondLaw("bernoulli", p=1.0, c=1.0)
    field = generate_field(law, (64, 64), "periodic", 0)
    lab = label_clusters(threshold_field(field, 0.0), "periodic")
    est = estimate_D_msd(field, lab, n_walkers=40_000, t_end=40.0, seed=7)
    assert abs(est.sigma - 1.0) < 0.03
    assert abs(est.matrix[0, 1]) < 0.03


def test_msd_walker_seed_self_consistency():
    law = BondLaw("bernoulli", p=0.7, c=1.0)
    field = generate_field(law, (64, 64), "periodic", 3)
    lab = label_clusters(threshold_field(field, 0.0), "periodic")
    e1 = estimate_D_msd(field, lab, n_walkers=20_000, t_end=40.0, seed=1)
    e2 = estimate_D_msd(field, lab, n_walkers=20_000, t_end=40.0, seed=2)
    # same quenched environment, independent walkers: agree within CI
    assert abs(e1.sigma - e2.sigma) < 0.05


def test_msd_monotone_in_p():
    # DERIVED: denser environments diffuse faster
    sig = {}
    for p in (0.7, 0.95):
        vals = []
        for seed in (0, 1):
            law = BondLaw("bernoulli", p=p, c=1.0)
            field = generate_field(law, (64, 64), "periodic", seed)
            lab = label_clusters(threshold_field(field, 0.0), "periodic")
            vals.append(estimate_D_msd(field, lab, n_walkers=8_000,
                                       t_end=40.0, seed=seed).sigma)
        sig[p] = np.mean(vals)
    assert sig[0.95] > sig[0.7]


def test_msd_short_run_warns():
    law = BondLaw("bernoulli", p=1.0, c=1.0)
    field = generate_field(law, (16, 16), "periodic", 0)
    lab = label_clusters(threshold_field(field, 0.0), "periodic")
    with pytest.warns(UserWarning, match="below 10"):
        estimate_D_msd(field, lab, n_walkers=500, t_end=2.0, seed=0)


def test_corrected_function_ladder_full_lattice():
    # DERIVED: with exact sigma = 1 the corrected functions converge to G
    G = TrigPolynomial([(1.0, (1, 0), "cos"), (0.5, (1, 1), "sin")])
    graphs = []
    for N in (8, 16, 32):
        law = BondLaw("bernoulli", p=1.0, c=1.0)
        field = generate_field(law, (N, N), "periodic", 0)
        lab = label_clusters(threshold_field(field, 0.0), "periodic")
        graphs.append(build_cluster_graph(field, lab, N))
    rows = corrected_function_convergence(graphs, lam=1.0, G=G, sigma=1.0)
    gaps = [r["l2_gap"] for r in rows]
    assert gaps[2] < gaps[1] < gaps[0]
    # Cauchy-Schwarz audit: ||f||_1 <= ||f||_2 * sqrt(total volume)
    for r, g in zip(rows, graphs):
        vol = g.n / float(g.N) ** g.d
        assert r["l1_gap"] <= r["l2_gap"] * math.sqrt(vol) * (1 + 1e-12)


def test_zero_rhs_solution_is_zero(full_field_16):
    field, lab = full_field_16
    g = build_cluster_graph(field, lab, 16)
    sol = solve_resolvent(g, 1.0, h=np.zeros(g.n))
    assert np.all(sol.values == 0.0)
    G = TrigPolynomial([(1.0, (1, 0), "cos")])
    gap = norm_l2(g, sol.values - G.value(g.points()))
    assert gap == pytest.approx(norm_l2(g, G.value(g.points())))
