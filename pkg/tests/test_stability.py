import numpy as np
import pytest
from scipy.linalg import null_space
from scipy.optimize import linprog

from conftest import FEASIBLE_PRESETS, cached_construction
from stablelbm.equilibrium import PRESET_FRACTIONS, PRESETS, BackgroundState, lee_equilibrium_map
from stablelbm.errors import ConstructionError, Infeasible, InputError
from stablelbm.lattice import build_m1_d3q33, build_velocity_set
from stablelbm.stability import (
    assemble_collision,
    build_fully_relative_m2,
    build_relative_m3,
    certify,
    constraint_matrix,
    exact_kernel_dimension,
    find_weights,
    gram_schmidt_tail,
    is_feasible,
    kernel_basis,
    operator_from_file,
    relative_setup,
    separating_vector,
    solve_weights_lp,
    verify_prestability,
    verify_projection,
    write_construction,
)


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_kernel_dimension(preset):
    _, _, m3 = relative_setup(BackgroundState(1.0, PRESETS[preset]))
    a = constraint_matrix(m3)
    assert a.shape == (24, 33)
    basis = kernel_basis(a)
    assert basis.shape[1] == 14
    assert null_space(a, rcond=1e-10).shape[1] == 14
    assert exact_kernel_dimension(PRESET_FRACTIONS[preset]) == 14
    np.testing.assert_allclose(a @ basis, 0, atol=1e-11)


def test_exact_kernel_dimension_matches_sympy():
    sympy = pytest.importorskip("sympy")
    from sympy.polys.matrices import DomainMatrix

    from stablelbm.lattice import SECOND_MOMENT_PAIRS

    m1 = build_m1_d3q33().entries.astype(int)
    s3 = sympy.sqrt(3)
    u = [sympy.Rational(c.numerator, c.denominator) / s3 for c in PRESET_FRACTIONS["preset-2"]]
    rows = [[sympy.Integer(v) for v in m1[i]] for i in range(4)]
    for k, (a, b) in enumerate(SECOND_MOMENT_PAIRS):
        e = [(sympy.Rational(1, 3) if a == b else 0) - u[a] * u[b]]
        e += [(u[a] if b == d else 0) + (u[b] if a == d else 0) for d in range(3)]
        rows.append([m1[4 + k][n] - sum(e[q] * m1[q][n] for q in range(4)) for n in range(33)])
    a_ = [[rows[i][n] * rows[j][n] for n in range(33)] for i in range(4) for j in range(4, 10)]
    dm = DomainMatrix.from_list_sympy(24, 33, a_).convert_to(sympy.QQ.algebraic_field(s3))
    assert 33 - dm.rank() == exact_kernel_dimension(PRESET_FRACTIONS["preset-2"])


def test_kernel_basis_exact_path():
    a = np.array([[1, 1, 0], [0, 1, 1]], dtype=object)
    k = kernel_basis(a)
    assert k.shape == (3, 1)
    np.testing.assert_allclose(np.array(a, dtype=float) @ k, 0)


def test_m3_consistency_rows_are_relative_second_moments():
    bg = BackgroundState(1.0, PRESETS["preset-1"])
    _, _, m3 = relative_setup(bg)
    v = build_velocity_set("D3Q33").velocities - bg.u0_array
    from stablelbm.lattice import SECOND_MOMENT_PAIRS

    for k, (a, b) in enumerate(SECOND_MOMENT_PAIRS):
        expected = v[:, a] * v[:, b] - (bg.cs2 if a == b else 0.0)
        np.testing.assert_allclose(m3.entries[4 + k], expected, atol=1e-14)
    np.testing.assert_array_equal(m3.entries[10:], build_m1_d3q33().entries[10:])


def test_fully_relative_requires_tail_map():
    m1 = build_m1_d3q33()
    eq = lee_equilibrium_map(BackgroundState())
    with pytest.raises(InputError, match="e31"):
        build_fully_relative_m2(m1, eq)


def test_fully_relative_with_zero_tail_map_equals_partial():
    from stablelbm.equilibrium import EquilibriumMap

    m1 = build_m1_d3q33()
    eq = lee_equilibrium_map(BackgroundState(1.0, PRESETS["preset-1"]))
    m2 = build_fully_relative_m2(m1, EquilibriumMap(eq.e21, np.zeros((23, 4))))
    np.testing.assert_array_equal(m2.entries, build_relative_m3(m1, eq).entries)


@pytest.mark.parametrize("preset", FEASIBLE_PRESETS)
def test_lp_matches_scipy(preset):
    _, _, m3 = relative_setup(BackgroundState(1.0, PRESETS[preset]))
    basis = kernel_basis(constraint_matrix(m3))
    lam = solve_weights_lp(basis)
    d = basis.shape[1]
    ref = linprog(basis.sum(axis=0), A_ub=-basis, b_ub=-np.ones(33), bounds=[(None, None)] * d, method="highs")
    assert ref.status == 0
    assert lam.sum() == pytest.approx(ref.fun, rel=1e-7)
    assert lam.min() >= 1 - 1e-9


def test_weights_scale_invariance():
    # kernel is a cone: any positive multiple of the weights is admissible
    c = cached_construction("preset-1")
    a = c.constraint
    np.testing.assert_allclose(a @ c.lam, 0, atol=1e-9 * np.abs(a).max() * c.lam.max())
    mt = gram_schmidt_tail(c.m3, 7.5 * c.lam)
    np.testing.assert_allclose(mt.entries, c.modified.entries, atol=1e-10)


def test_preset4_infeasible_with_farkas_certificate():
    mpmath = pytest.importorskip("mpmath")
    bg = BackgroundState(1.0, PRESETS["preset-4"])
    assert not is_feasible(bg)
    with pytest.raises(Infeasible):
        find_weights(bg)
    _, _, m3 = relative_setup(bg)
    a = constraint_matrix(m3)
    y = separating_vector(a)
    assert y is not None
    # re-evaluate A^T y in 50-digit arithmetic: strictly positive in every entry
    mpmath.mp.dps = 50
    am = mpmath.matrix(a.T.tolist())
    ym = mpmath.matrix(y.tolist())
    vals = am * ym
    assert min(vals[i] for i in range(33)) > 0.5


def test_separating_vector_absent_when_feasible():
    c = cached_construction("preset-1")
    assert separating_vector(c.constraint) is None


def test_d3q27_infeasible_at_preset1():
    assert not is_feasible(BackgroundState(1.0, PRESETS["preset-1"]), "D3Q27")


def test_d3q27_feasible_at_rest():
    assert is_feasible(BackgroundState(), "D3Q27")


def test_certificate(construction):
    cert = construction.certificate
    assert cert.symmetrization_residual <= 1e-10
    assert cert.idempotency_residual <= 1e-10
    assert cert.rank_h == 4
    assert cert.relaxation_rates == (0.0, 2.0)
    assert cert.certified and cert.stable


def test_lambda_orthogonality_of_tail(construction):
    mt = construction.modified.entries
    lam = construction.lam
    gram = (mt[:4] * lam) @ mt[4:].T
    assert np.abs(gram).max() <= 1e-10 * np.abs(mt).max() ** 2 * lam.max()


def test_reduced_and_full_routes_agree(construction, rng):
    op = construction.operator
    f = rng.normal(size=(33, 10))
    np.testing.assert_allclose(op.apply(f), op.update_matrix() @ f, atol=1e-12)


def test_equilibrium_projection_fixes_equilibria(construction, rng):
    op = construction.operator
    feq = op.equilibrium(rng.normal(size=33))
    np.testing.assert_allclose(op.apply(feq), feq, atol=1e-12)


def test_collision_conserves(construction, rng):
    op = construction.operator
    f = rng.normal(size=33)
    np.testing.assert_allclose(op.conserved_rows @ op.apply(f), op.conserved_rows @ f, atol=1e-12)


def test_energy_nonincreasing_per_node(construction, rng):
    op = construction.operator
    lam = construction.lam
    for tau in (0.5, 0.8, 2.0):
        o = assemble_collision(construction.modified, tau)
        for _ in range(5):
            f = rng.normal(size=33)
            g = o.apply(f)
            assert np.sum(g * g / lam) <= np.sum(f * f / lam) * (1 + 1e-12)
    assert op.tau == 0.5


def test_prestability_detects_broken_weights(construction):
    lam = construction.lam.copy()
    lam[5] *= 1.5
    assert verify_prestability(construction.operator, lam) > 1e-6


def test_projection_residual_at_other_tau(construction):
    op = assemble_collision(construction.modified, 0.5)
    assert verify_projection(op) < 1e-10


def test_bad_lambda_rejected():
    c = cached_construction("preset-1")
    with pytest.raises(InputError):
        gram_schmidt_tail(c.m3, -c.lam)


def test_dependent_conserved_rows():
    c = cached_construction("preset-1")
    e = c.m3.entries.copy()
    e[1] = e[0]
    with pytest.raises(ConstructionError):
        gram_schmidt_tail(c.m3.with_entries(e), c.lam)


def test_non_positive_tau():
    c = cached_construction("preset-1")
    with pytest.raises(InputError):
        assemble_collision(c.modified, 0.0)


def test_roundtrip_file(tmp_path):
    c = cached_construction("preset-2")
    path = tmp_path / "op.txt"
    write_construction(path, c)
    op, lam, bg = operator_from_file(path)
    np.testing.assert_array_equal(lam, c.lam)
    assert bg == c.background
    np.testing.assert_allclose(op.full_matrix, c.operator.full_matrix, atol=1e-14)
    assert verify_prestability(op, lam) < 1e-10


def test_certify_rest_state():
    c = certify(BackgroundState())
    assert c.certificate.certified


def test_rest_state_has_exact_positive_kernel_element():
    # at u0 = 0 every entry of A is rational: project the float weights onto the
    # exact kernel in rational arithmetic and confirm strict positivity
    sympy = pytest.importorskip("sympy")
    from fractions import Fraction

    from stablelbm.linalg import exact_nullspace

    bg = BackgroundState()
    _, _, m3 = relative_setup(bg)
    a = [[Fraction(v).limit_denominator(1000) for v in row] for row in constraint_matrix(m3)]
    basis = sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in vec] for vec in exact_nullspace(a)]).T
    lam = sympy.Matrix([sympy.Rational(Fraction(v).limit_denominator(10**6).numerator,
                                       Fraction(v).limit_denominator(10**6).denominator) for v in find_weights(bg)])
    coef = (basis.T * basis).LUsolve(basis.T * lam)
    exact = basis * coef
    assert sympy.Matrix(a) * exact == sympy.zeros(24, 1)
    assert min(exact) > 0
