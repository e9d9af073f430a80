import json

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hermitian_system
from hyperjump.errors import InputError, NotCharacteristicError, SheetError
from hyperjump.symbol_core import (HyperbolicSystem, assemble_symbol, builtin_system, fit_sheet, load_system,
                                   paraxial_form, propagator, richardson_derivatives, save_system,
                                   spectral_decompose, sphere_samples, system_from_dict,
                                   verify_strong_hyperbolicity)


def lam_s1(eta):
    return (1 - np.sqrt(1 + 4 * eta**2)) / 2


def test_assemble_symbol_examples(s1):
    assert np.array_equal(assemble_symbol(s1, [1, 0]), [[0, 0], [0, 1]])
    assert np.array_equal(assemble_symbol(s1, [0, 0]), np.zeros((2, 2)))
    assert np.array_equal(assemble_symbol(s1, [1, 1]), [[0, 1], [1, 1]])


def test_assemble_symbol_dimension_mismatch(s1):
    with pytest.raises(InputError):
        assemble_symbol(s1, [1.0, 2.0, 3.0])


def test_system_rejects_bad_shapes():
    with pytest.raises(InputError):
        HyperbolicSystem(np.zeros((2, 2, 3)))
    with pytest.raises(InputError):
        HyperbolicSystem(np.zeros((1, 2, 2)))
    with pytest.raises(InputError):
        HyperbolicSystem(np.array([[[0, 1], [0, 0]], [[0, 0], [0, 0]]]), symmetric=True)


def test_decompose_diagonal(s1):
    sd = spectral_decompose(s1, [1.0, 0.0])
    assert np.allclose(sd.eigenvalues, [0, 1])
    assert np.allclose(sd.projectors[0], np.diag([1, 0]))
    assert np.allclose(sd.projectors[1], np.diag([0, 1]))


def test_decompose_offdiagonal(s1):
    sd = spectral_decompose(s1, [0.0, 1.0])
    assert np.allclose(sd.eigenvalues, [-1, 1])
    assert np.allclose(sd.projectors[0], 0.5 * np.array([[1, -1], [-1, 1]]))
    assert np.allclose(sd.projectors[1], 0.5 * np.array([[1, 1], [1, 1]]))


@pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
def test_decompose_small_eps_closed_form(s1, eps):
    sd = spectral_decompose(s1, [1.0, eps])
    exact = np.array([(1 - np.sqrt(1 + 4 * eps**2)) / 2, (1 + np.sqrt(1 + 4 * eps**2)) / 2])
    assert np.allclose(sd.eigenvalues, exact, atol=1e-14)
    assert abs(sd.eigenvalues[0] + eps**2) <= 3 * eps**4


def test_decompose_merges_multiplicity():
    S = HyperbolicSystem(np.array([np.eye(3), np.diag([1.0, 1.0, 2.0])]), True)
    sd = spectral_decompose(S, [1.0, 1.0])
    assert list(sd.multiplicities) == [2, 1]
    assert np.allclose(sd.projectors[0], np.diag([1, 1, 0]))


def test_random_hermitian_invariants():
    rng = np.random.default_rng(7)
    for _ in range(50):
        S = random_hermitian_system(rng)
        for xi in rng.standard_normal((10, S.d)):
            sd = spectral_decompose(S, xi)
            comp, orth, rec = sd.residuals(assemble_symbol(S, xi))
            assert comp <= 1e-10 and orth <= 1e-10
            assert rec <= 1e-9 * max(1.0, np.linalg.norm(assemble_symbol(S, xi), 2))
            assert sd.multiplicities.sum() == S.k
            assert np.all(np.diff(sd.eigenvalues) > 0)


def test_projector_scale_invariance():
    rng = np.random.default_rng(3)
    S = random_hermitian_system(rng, d=3, k=4)
    xi = rng.standard_normal(3)
    a, b = spectral_decompose(S, xi), spectral_decompose(S, 7.5 * xi)
    assert np.allclose(7.5 * a.eigenvalues, b.eigenvalues, atol=1e-8)
    assert np.allclose(a.projectors, b.projectors, atol=1e-8)


def test_verify_symmetric_s1(s1):
    rep = verify_strong_hyperbolicity(s1, sphere_samples(2, 500))
    assert rep.conditionA
    assert abs(rep.kreiss_sup - 1) <= 1e-10


def test_verify_defective():
    S = HyperbolicSystem(np.array([[[0.0, 1.0], [0.0, 0.0]], np.zeros((2, 2))]))
    rep = verify_strong_hyperbolicity(S, [[1.0, 0.0]])
    assert not rep.conditionA
    assert rep.failures[0]["xi"] == [1.0, 0.0]


def test_verify_not_hyperbolic():
    S = HyperbolicSystem(np.array([[[0.0, 1.0], [-1.0, 0.0]], np.zeros((2, 2))]))
    assert not verify_strong_hyperbolicity(S, [[1.0, 0.0]]).conditionA


def test_verify_acoustics(s2):
    rep = verify_strong_hyperbolicity(s2, sphere_samples(2, 500))
    assert rep.conditionA
    assert rep.conditionB_sup <= 1 + 1e-10


def test_verify_needs_samples(s1):
    with pytest.raises(InputError):
        verify_strong_hyperbolicity(s1, np.zeros((0, 2)))


def test_propagator_examples(s1):
    assert np.allclose(propagator(s1, [0.3, -1.2], 0.0), np.eye(2))
    assert np.allclose(propagator(s1, [1.0, 0.0], np.pi), np.diag([1, -1]))
    for t in (0.1, 1.0, 17.3):
        ref = scipy.linalg.expm(1j * t * assemble_symbol(s1, [0.0, 1.0]))
        assert np.abs(propagator(s1, [0.0, 1.0], t) - ref).max() <= 1e-10


@settings(max_examples=40, deadline=None)
@given(t=st.floats(-20, 20), s=st.floats(-20, 20), seed=st.integers(0, 1000))
def test_propagator_semigroup(t, s, seed):
    rng = np.random.default_rng(seed)
    S = random_hermitian_system(rng)
    xi = rng.standard_normal(S.d)
    lhs = propagator(S, xi, t) @ propagator(S, xi, s)
    assert np.abs(lhs - propagator(S, xi, t + s)).max() <= 1e-9


def test_fit_sheet_s1(sheet1):
    assert np.allclose(sheet1.v, [0, 0], atol=1e-10)
    assert sheet1.hessian[0, 0] == pytest.approx(-2.0, abs=1e-8)
    assert sheet1.rank_class == "maximal"
    Q = paraxial_form(sheet1)
    assert Q(1.5) == pytest.approx(-2.25, abs=1e-8)
    assert Q(0.0) == 0.0


def test_sheet_value_matches_branch(sheet1):
    eta = np.linspace(-0.5, 0.5, 11)
    xi = np.stack([np.ones_like(eta), eta], axis=-1)
    assert np.allclose(sheet1.value(xi), lam_s1(eta), atol=1e-13)
    assert np.allclose(sheet1.value(-xi), -lam_s1(eta), atol=1e-13)


def test_fit_sheet_s2_flat(sheet2):
    assert np.allclose(sheet2.v, 0, atol=1e-10)
    assert np.allclose(sheet2.hessian, 0, atol=1e-8)
    assert sheet2.rank_class == "flat"
    assert paraxial_form(sheet2)(0.7) == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("name", ["S1", "S2"])
def test_sheet_invariants(name):
    sh = fit_sheet(builtin_system(name))
    e1 = np.array([1.0, 0.0])
    assert abs(sh.value(2 * e1)) <= 1e-12
    assert sh.checks["euler"] <= 1e-8
    assert abs(sh.v[0]) <= 1e-8


def test_fit_sheet_not_characteristic():
    S = HyperbolicSystem(np.array([np.diag([1.0, 2.0]), [[0.0, 1.0], [1.0, 0.0]]]), True)
    with pytest.raises(NotCharacteristicError):
        fit_sheet(S)


def test_fit_sheet_collision_in_cone():
    # eigenvalues 0 and 0.1 xi1 + xi2 meet on xi2 = -0.1 xi1, inside the cone
    A1 = np.diag([0.0, 0.1])
    A2 = np.diag([0.0, 1.0])
    S = HyperbolicSystem(np.array([A1, A2]), True)
    with pytest.raises(SheetError) as exc:
        fit_sheet(S, cone_halfangle=0.5)
    assert "smooth variety hypothesis fails" in str(exc.value)
    assert exc.value.xi[1] == pytest.approx(-0.1 * exc.value.xi[0], abs=0.01)


def test_intermediate_rank():
    S = system_from_dict({"d": 3, "k": 2, "symmetric": True,
                          "matrices": [{"re": [0, 0, 0, 1]}, {"re": [0, 1, 1, 0]}, {"re": [0, 0, 0, 0]}]})
    assert fit_sheet(S).rank_class == "intermediate(1)"


def test_richardson_order(sheet1):
    errs = []
    for h in (0.1, 0.05):
        _, H = richardson_derivatives(sheet1.value, np.array([1.0, 0.0]), h)
        errs.append(abs(H[1, 1] + 2))
    assert np.log2(errs[0] / errs[1]) >= 3.5


def test_system_file_round_trip(tmp_path, s2):
    p = tmp_path / "s2.json"
    save_system(s2, p)
    back = load_system(p)
    assert np.array_equal(back.A, s2.A)
    assert json.loads(p.read_text())["symmetric"] is True


def test_system_file_complex_matrices():
    S = system_from_dict({"d": 2, "k": 2, "matrices": [{"re": [0, 0, 0, 1]},
                                                        {"re": [0, 0, 0, 0], "im": [0, -1, 1, 0]}]})
    assert S.hermitian
    assert np.iscomplexobj(S.A)


def test_system_file_schema_errors():
    with pytest.raises(InputError):
        system_from_dict({"d": 2, "k": 2, "matrices": [{"re": [0, 0, 0]}, {"re": [0, 0, 0, 0]}]})
    with pytest.raises(InputError):
        system_from_dict({"d": 2, "matrices": []})
