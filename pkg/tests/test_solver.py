import math

import numpy as np
import pytest
from scipy.integrate import quad

from cuspflow.geometry import CuspProfile, StripMap, eigen_bounds
from cuspflow.mesh import Mesh, TransformedDomain, build_domain, build_mesh
from cuspflow.solver import (
    CompatibilityError,
    SolverError,
    assemble_load,
    assemble_stiffness,
    dirichlet_energy,
    manufactured_case,
    solve_channel_problem,
    solve_zero_mean,
    _unit_square_mesh,
)


def test_single_element_stiffness_matches_hand_value():
    mesh = _unit_square_mesh(1)
    K = assemble_stiffness(mesh).matrix.toarray()
    # classical bilinear element on the unit square, in counterclockwise
    # corner order (the mesh numbers nodes x-major)
    order = mesh.quads[0]
    local = K[np.ix_(order, order)]
    ref = np.array(
        [
            [2 / 3, -1 / 6, -1 / 3, -1 / 6],
            [-1 / 6, 2 / 3, -1 / 6, -1 / 3],
            [-1 / 3, -1 / 6, 2 / 3, -1 / 6],
            [-1 / 6, -1 / 3, -1 / 6, 2 / 3],
        ]
    )
    assert np.allclose(local, ref, atol=1e-14)
    assert np.allclose(K.sum(axis=1), 0.0, atol=1e-14)


def test_constant_nullspace():
    prof = CuspProfile(kappa=1, alpha=2, epsilon=1e-2)
    smap = StripMap(prof)
    mesh = build_mesh(build_domain(prof), n_across=8, grading=1.2)
    K = assemble_stiffness(mesh, smap)
    ones = np.ones(K.n)
    assert np.max(np.abs(K.matrix @ ones)) <= 1e-12
    sym_gap = abs(K.matrix - K.matrix.T).max()
    assert sym_gap <= 1e-14 * abs(K.matrix).max()


def test_linear_field_energy_is_area():
    # u = x1 with identity coefficients: energy = measured area
    mesh = Mesh(np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0]), n_block_cols=0)
    K = assemble_stiffness(mesh)
    u = mesh.nodes[:, 0].copy()
    assert dirichlet_energy(K, u) == pytest.approx(1.0, rel=1e-14)


def test_manufactured_convergence_orders():
    report = manufactured_case(16)
    assert report["energy_target"] == pytest.approx(np.pi**2 / 2)
    assert 3.5 <= report["energy_error_ratio"] <= 4.5
    assert 3.5 <= report["nodal_error_ratio"] <= 4.5
    # mean of the exact solution vanishes, so the zero-mean solve is consistent
    mesh = _unit_square_mesh(16)
    exact = np.cos(np.pi * mesh.nodes[:, 0]) * np.cos(np.pi * mesh.nodes[:, 1])
    w = mesh.lumped_areas()
    assert abs(w @ exact) / w.sum() <= 1e-12


def test_zero_load_gives_zero_field():
    prof = CuspProfile(kappa=1, alpha=1, epsilon=1e-1)
    mesh = build_mesh(build_domain(prof), n_across=4, grading=1.0)
    K = assemble_stiffness(mesh)
    sol = solve_zero_mean(K, np.zeros(K.n), tol=1e-12)
    assert np.all(sol.u == 0.0)
    assert sol.dirichlet_energy == 0.0


def test_incompatible_load_raises():
    prof = CuspProfile(kappa=1, alpha=1, epsilon=1e-1)
    mesh = build_mesh(build_domain(prof), n_across=4, grading=1.0)
    K = assemble_stiffness(mesh)
    b = np.ones(K.n)
    with pytest.raises(CompatibilityError):
        solve_zero_mean(K, b)


def test_incompatible_data_raises_with_defect():
    mesh = _unit_square_mesh(8)
    with pytest.raises(CompatibilityError) as err:
        assemble_load(mesh, volume_source=lambda x, y: np.ones_like(x))
    assert err.value.defect == pytest.approx(1.0, rel=1e-10)


def test_nonconvergence_carries_history():
    mesh = _unit_square_mesh(12)
    K = assemble_stiffness(mesh)
    f = lambda x, y: np.sign(x - 0.5) * y
    b = assemble_load(mesh, volume_source=f, compat_tol=1.0)
    b -= b.mean()
    with pytest.raises(SolverError) as err:
        solve_zero_mean(K, b, tol=1e-14, max_iter=3, jacobi=False)
    assert len(err.value.history) == 4


def test_solution_mean_and_energy_identity():
    prof = CuspProfile(kappa=1, alpha=2, epsilon=1e-3)
    sol, mesh, smap, dom = solve_channel_problem(prof, n_across=8, grading=1.2)
    w = mesh.lumped_areas()
    assert abs(w @ sol.u) / w.sum() <= 1e-10
    # energy identity: u'Ku equals the boundary work for f = 0
    assert abs(sol.dirichlet_energy - sol.boundary_work) <= 1e-8 * sol.dirichlet_energy


def test_load_vector_component_sum_vanishes():
    prof = CuspProfile(kappa=1, alpha=2, epsilon=1e-3)
    smap = StripMap(prof)
    dom = build_domain(prof)
    mesh = build_mesh(dom, n_across=8, grading=1.2)
    b = assemble_load(mesh, strip_map=smap, domain=dom)
    assert abs(b.sum()) <= 1e-8 * np.abs(b).sum()


def test_dirichlet_principle_discrete_consistency():
    # J(v) = b.v - v'Kv/2 is maximized by the solution, J(u) = E/2
    prof = CuspProfile(kappa=1, alpha=2.5, epsilon=1e-3)
    smap = StripMap(prof)
    dom = build_domain(prof)
    mesh = build_mesh(dom, n_across=8, grading=1.2)
    K = assemble_stiffness(mesh, smap)
    b = assemble_load(mesh, strip_map=smap, domain=dom)
    sol = solve_zero_mean(K, b, tol=1e-12, coarse_basis=mesh.column_basis())
    eng = sol.dirichlet_energy
    rng = np.random.default_rng(3)
    for _ in range(8):
        v = rng.standard_normal(K.n)
        v = sol.u + 0.3 * v / np.linalg.norm(v)
        j = b @ v - 0.5 * v @ (K.matrix @ v)
        assert j <= eng / 2 + 1e-8 * max(eng, 1.0)


def test_ellipticity_sandwich_against_identity_operator():
    prof = CuspProfile(kappa=1.5, alpha=2.0, epsilon=1e-2, delta=-0.9)
    smap = StripMap(prof)
    mesh = build_mesh(build_domain(prof), n_across=6, grading=1.2)
    K = assemble_stiffness(mesh, smap).matrix
    K_id = assemble_stiffness(mesh, None).matrix
    lam1, lam2 = eigen_bounds(prof)
    rng = np.random.default_rng(5)
    for _ in range(20):
        v = rng.standard_normal(K.shape[0])
        qa = v @ (K @ v)
        qi = v @ (K_id @ v)
        assert lam1 * qi <= qa * (1 + 1e-10)
        assert qa <= lam2 * qi * (1 + 1e-10)


def test_cavity_monotonicity_small_case():
    # enlarging the block never increases the energy (common data support)
    prof = CuspProfile(kappa=1, alpha=2, epsilon=1e-2)
    narrow, *_ = solve_channel_problem(prof, n_across=8, grading=1.2, d_width=1.0)
    wide, *_ = solve_channel_problem(prof, n_across=8, grading=1.2, d_width=2.0)
    assert wide.dirichlet_energy <= narrow.dirichlet_energy * (1 + 1e-9)


def test_degenerate_cell_rejected():
    cols = np.array([0.0, 0.5, 0.5, 1.0])
    mesh = Mesh(cols, np.array([0.0, 1.0]), n_block_cols=0)
    with pytest.raises(ValueError, match="Jacobian"):
        assemble_stiffness(mesh)


def test_truncated_strip_energy_stability():
    # truncation error budget: L and 2L runs agree within the solver budget
    prof = CuspProfile(kappa=1, alpha=1, epsilon=0)
    e = {}
    for L in (60.0, 120.0):
        sol, *_ = solve_channel_problem(prof, n_across=8, grading=1.15, truncation=L)
        e[L] = sol.dirichlet_energy
    assert abs(e[120.0] - e[60.0]) <= 2e-2 * e[120.0]


def test_jacobi_toggle_and_plain_cg_agree():
    prof = CuspProfile(kappa=1, alpha=1, epsilon=1e-1)
    smap = StripMap(prof)
    dom = build_domain(prof)
    mesh = build_mesh(dom, n_across=6, grading=1.0)
    K = assemble_stiffness(mesh, smap)
    b = assemble_load(mesh, strip_map=smap, domain=dom)
    with_j = solve_zero_mean(K, b, tol=1e-12, jacobi=True)
    without = solve_zero_mean(K, b, tol=1e-12, jacobi=False)
    assert with_j.dirichlet_energy == pytest.approx(without.dirichlet_energy, rel=1e-10)


def test_solution_export_columns(tmp_path):
    prof = CuspProfile(kappa=1, alpha=1, epsilon=1e-1)
    sol, mesh, *_ = solve_channel_problem(prof, n_across=4, grading=1.0)
    path = tmp_path / "field.txt"
    with open(path, "w") as fh:
        fh.write("# x1 x2 u\n")
        for (x, y), v in zip(mesh.nodes, sol.u):
            fh.write(f"{x:.16e} {y:.16e} {v:.16e}\n")
    rows = np.loadtxt(path)
    assert rows.shape == (mesh.n_nodes, 3)
    assert np.allclose(rows[:, 2], sol.u)
