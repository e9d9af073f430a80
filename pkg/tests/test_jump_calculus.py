import numpy as np
import pytest
from scipy.integrate import quad

from hyperjump import jump_calculus as jc
from hyperjump.errors import DomainError, NotCharacteristicError, ResolutionError
from hyperjump.spectral_solver import PolyGauss, SourceModel, SourceTerm, TimeProfile, make_source
from hyperjump.symbol_core import HyperbolicSystem, fit_sheet


def characteristic_system(rng, k=4, d=3, eps=0.3):
    """Hermitian system whose A1 has a simple zero eigenvalue."""
    U, _ = np.linalg.qr(rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k)))
    ev = np.array([0.0, 2.0, -3.0, 4.0, -5.0, 6.0][:k])
    A = [U @ np.diag(ev) @ U.conj().T]
    for _ in range(d - 1):
        B = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
        A.append(eps * (B + B.conj().T) / 2)
    return HyperbolicSystem(np.array(A), True)


@pytest.fixture(scope="module")
def pair1(s1):
    return jc.reference_projector(s1)


def test_reference_projector_s1(pair1, s1):
    assert np.allclose(pair1.pi, np.diag([1, 0]))
    assert np.allclose(pair1.Qinv, np.diag([0, 1]))
    assert max(pair1.residuals(s1.A[0]).values()) <= 1e-10


def test_reference_projector_s2(s2):
    pair = jc.reference_projector(s2)
    null = np.linalg.svd(s2.A[0])[2][-1]
    assert np.allclose(pair.pi, np.outer(null, null))
    assert np.allclose(pair.pi, np.diag([0, 0, 1]))
    assert max(pair.residuals(s2.A[0]).values()) <= 1e-10


def test_reference_projector_random_symmetric():
    rng = np.random.default_rng(11)
    for _ in range(5):
        S = characteristic_system(rng)
        pair = jc.reference_projector(S)
        assert max(pair.residuals(S.A[0]).values()) <= 1e-10
        assert np.allclose(pair.pi, pair.pi.conj().T)
        assert np.linalg.norm(pair.pi, 2) == pytest.approx(1.0)


def test_reference_projector_not_characteristic():
    S = HyperbolicSystem(np.array([np.diag([1.0, 2.0]), np.eye(2)]), True)
    with pytest.raises(NotCharacteristicError):
        jc.reference_projector(S)


def test_transport_identity_random():
    # pi A_j pi = v_j pi for every tangential direction
    rng = np.random.default_rng(5)
    for _ in range(4):
        S = characteristic_system(rng)
        pair = jc.reference_projector(S)
        sheet = fit_sheet(S, cone_halfangle=0.2)
        for j in range(1, S.d):
            assert np.abs(pair.pi @ S.A[j] @ pair.pi - sheet.v[j] * pair.pi).max() <= 1e-6


def test_diffractive_identity_random():
    rng = np.random.default_rng(9)
    for _ in range(4):
        S = characteristic_system(rng)
        P = jc.diffractive_operator(jc.reference_projector(S), fit_sheet(S, cone_halfangle=0.2))
        assert P.identity_ok


def test_diffractive_s1(pair1, sheet1):
    P = jc.diffractive_operator(pair1, sheet1)
    assert np.allclose(P.coeffs[0, 0], -pair1.pi, atol=1e-8)
    assert P.identity_ok and P.identity_residual <= 1e-6
    assert not P.is_zero


def test_diffractive_flat(s2, sheet2):
    assert jc.diffractive_operator(jc.reference_projector(s2), sheet2).is_zero


def test_diffractive_kills_constants(s1, pair1, sheet1):
    grid = jc.HyperplaneGrid.uniform(1.0, 11, [32], [10.0])
    P = jc.diffractive_operator(pair1, sheet1)
    F = np.ones(grid.shape + (2,))
    assert np.abs(P.apply(F, jc.TangentialStencil(s1, grid))).max() <= 1e-12


def test_tangential_stencil_constant(s1):
    grid = jc.HyperplaneGrid.uniform(2.0, 21, [32], [10.0])
    F = np.broadcast_to([1.5, -2.0], grid.shape + (2,)).copy()
    assert np.abs(jc.TangentialStencil(s1, grid).apply(F)).max() <= 1e-12


def test_tangential_stencil_nonperiodic(s1):
    grid = jc.HyperplaneGrid.uniform(1.0, 21, [200], [20.0], periodic=False)
    st = jc.TangentialStencil(s1, grid)
    X = grid.mesh()[..., 0]
    F = np.broadcast_to(np.sin(X), grid.shape)
    assert np.abs(st.dx(F, 0)[:, 5:-5] - np.cos(X)[None, 5:-5]).max() <= 1e-4


def test_grid_validation():
    with pytest.raises(Exception):
        jc.HyperplaneGrid(np.array([0.0, 1.0, 3.0, 4, 5, 6, 7, 8]), [8], [1.0])
    with pytest.raises(Exception):
        jc.HyperplaneGrid(np.linspace(1, 2, 10), [8], [1.0])


def test_jump0_constant_in_space(pair1):
    grid = jc.HyperplaneGrid.uniform(3.0, 301, [16], [10.0])
    h = TimeProfile("poly", 1.0, 3)
    c = np.array([2.0, 5.0])
    Jf0 = h(grid.t)[:, None, None] * c
    Jf0 = np.broadcast_to(Jf0, grid.shape + (2,))
    J = jc.solve_jump0(pair1, [0.0, 0.0], Jf0, grid)
    expect = h.integral(grid.t)[:, None] * np.array([2.0, 0.0])
    assert np.abs(J - expect[:, None, :]).max() <= 1e-6


def test_jump0_zero_source(pair1):
    grid = jc.HyperplaneGrid.uniform(1.0, 21, [16], [10.0])
    Jf0 = np.zeros(grid.shape + (2,))
    Jf0[..., 1] = 1.0
    assert np.abs(jc.solve_jump0(pair1, [0, 0], Jf0, grid)).max() == 0


@pytest.mark.parametrize("periodic", [True, False])
def test_jump0_moving_pulse(pair1, periodic):
    grid = jc.HyperplaneGrid.uniform(4.0, 801, [256], [40.0], periodic)
    h = TimeProfile("poly", 1.0, 3)
    v = 1.3
    src = lambda t, x: h(t) * np.exp(-(x - 0.5) ** 2)
    X = grid.mesh()[..., 0]
    Jf0 = np.stack([src(grid.t[:, None], X[None]), np.zeros(grid.shape)], axis=-1)
    J = jc.solve_jump0(pair1, [0.0, v], Jf0, grid)
    ax = grid.axes()[0]
    for it in (200, 500, 800):
        t = grid.t[it]
        ref = np.array([quad(lambda s: src(s, x - v * (t - s)), 0, min(t, 1.0))[0] for x in ax])
        assert np.abs(J[it, :, 0] - ref).max() <= (1e-8 if periodic else 1e-4)


def test_jump0_domain_error(pair1):
    grid = jc.HyperplaneGrid.uniform(20.0, 101, [64], [10.0])
    Jf0 = np.zeros(grid.shape + (2,))
    Jf0[:5, 32, 0] = 1.0
    with pytest.raises(DomainError) as exc:
        jc.solve_jump0(pair1, [0.0, 1.0], Jf0, grid)
    assert exc.value.required > 10.0


def test_jump_n_zero(s1, pair1, sheet1):
    grid = jc.HyperplaneGrid.uniform(1.0, 21, [16], [10.0])
    st = jc.TangentialStencil(s1, grid)
    Z = np.zeros(grid.shape + (2,))
    assert np.abs(jc.solve_jump_n(pair1, sheet1, st, Z, Z)).max() == 0


def test_jump_n_resolution_error(s1, pair1, sheet1):
    grid = jc.HyperplaneGrid.uniform(1.0, 21, [16], [40.0])
    st = jc.TangentialStencil(s1, grid)
    J = np.zeros(grid.shape + (2,))
    J[:, 8, 0] = 1.0
    with pytest.raises(ResolutionError):
        jc.solve_jump_n(pair1, sheet1, st, J, np.zeros_like(J))


@pytest.fixture(scope="module")
def s1_sequence(s1, sheet1):
    src = make_source("gaussian", {}, 2, 2)
    grid = jc.HyperplaneGrid.uniform(30.0, 1501, [256], [40.0])
    return src, jc.solve_jump_sequence(s1, sheet1, src, grid, M=2)


def test_sequence_causal_and_in_kernel(s1, s1_sequence):
    _, seq = s1_sequence
    pi = jc.reference_projector(s1).pi
    # J0 vanishes at t = 0 exactly; higher jumps up to the time-difference error
    assert np.abs(seq.jumps[0][0]).max() == 0
    for J in seq.jumps[1:]:
        assert np.abs(J[0]).max() <= 1e-3 * np.abs(J).max()
    J0 = seq.jumps[0]
    assert np.abs(np.einsum("ij,...j->...i", np.eye(2) - pi, J0)).max() <= 1e-12
    assert np.abs(np.einsum("ij,...j->...i", s1.A[0], J0)).max() <= 1e-8


def test_growth_matches_prediction(s1, pair1, sheet1, s1_sequence):
    src, seq = s1_sequence
    P = jc.diffractive_operator(pair1, sheet1)
    pred = jc.predict_growth_slope(P, lambda t, x: src.jump(0, t, x), [0.0], sheet1.v, src.T, pair1)
    assert pred.slope == pytest.approx(-2.0, rel=1e-6)
    t = seq.grid.t
    i0 = seq.grid.N[0] // 2
    w = (t >= 2) & (t <= 10)
    slope = np.polyfit(t[w], seq.jumps[1][w, i0, 0], 1)[0]
    assert slope == pytest.approx(pred.slope, rel=0.02)
    s = np.abs(seq.jumps[1][..., 0]).max(axis=1)
    c = np.polyfit(t[w], s[w], 1)
    assert c[0] > 0
    assert np.linalg.norm(s[w] - np.polyval(c, t[w])) <= 0.05 * np.linalg.norm(s[w])


def test_prediction_zero_cases(pair1, sheet1, s2, sheet2):
    P0 = jc.diffractive_operator(jc.reference_projector(s2), sheet2)
    assert jc.predict_growth_slope(P0, lambda t, x: np.ones(3), [0.0], sheet2.v, 1.0).slope == 0.0
    # odd transverse profile: P J_f^0 vanishes on x2 = 0
    P = jc.diffractive_operator(pair1, sheet1)
    h = TimeProfile("poly", 1.0, 3)
    odd = lambda t, x: h(t) * x[0] * np.exp(-x[0] ** 2) * np.array([1.0, 0.0])
    assert abs(jc.predict_growth_slope(P, odd, [0.0], sheet1.v, 1.0, pair1).slope) <= 1e-9


def test_flat_rigidity(s2, sheet2):
    src = make_source("gaussian", {"vector": [1.0, 1.0, 1.0]}, 3, 2)
    grid = jc.HyperplaneGrid.uniform(10.0, 501, [128], [40.0])
    seq = jc.solve_jump_sequence(s2, sheet2, src, grid, M=1)
    after = grid.t >= src.T
    for J in seq.jumps:
        tail = J[after]
        assert np.abs(tail - tail[-1]).max() <= 1e-6 * np.abs(J).max()


def test_reconstruct_heaviside():
    grid = jc.HyperplaneGrid.uniform(1.0, 11, [4], [1.0])
    seq = jc.JumpSequence(grid, [np.ones(grid.shape + (1,))])
    x1 = np.array([-1.0, 0.0, 0.5, 2.0])
    v = jc.reconstruct_expansion(seq, x1, t_index=3)
    assert np.allclose(v[..., 0], np.array([0, 0.5, 1, 1])[:, None])


def test_reconstruct_polynomial():
    grid = jc.HyperplaneGrid.uniform(1.0, 11, [4], [1.0])
    J = [np.full(grid.shape + (1,), c) for c in (1.0, -2.0, 3.0)]
    x1 = np.linspace(-1, 1, 9)
    v = jc.reconstruct_expansion(jc.JumpSequence(grid, J), x1)
    expect = np.where(x1 > 0, 1 - 2 * x1 + 1.5 * x1**2, 0.0)
    expect[x1 == 0] = 0.5
    assert np.allclose(v[2, :, 1, 0], expect)
    zero = jc.JumpSequence(grid, [np.zeros(grid.shape + (1,))] * 3)
    assert not np.any(jc.reconstruct_expansion(zero, x1))


def test_residual_smooth_source_zero(s1, sheet1):
    pg = PolyGauss([1.0], 2.0)
    src = SourceModel([SourceTerm(np.array([1.0, 0.5]), pg, pg, [PolyGauss([1.0], 1.0)])],
                      TimeProfile("poly", 1.0, 3), 2, 2)
    grid = jc.HyperplaneGrid.uniform(3.0, 201, [64], [20.0])
    seq = jc.solve_jump_sequence(s1, sheet1, src, grid, M=2)
    assert all(np.abs(J).max() == 0 for J in seq.jumps)
    rep = jc.residual_smoothness_check(s1, seq, src, M=2)
    assert max(rep.jump_norms) <= 1e-8


def test_residual_detects_corruption(s1, sheet1):
    p = {"time": {"kind": "poly", "T": 4.0, "p": 4}, "vector": [1.0, 1.0],
         "x1": {"right": {"poly": [1, 0.5], "width": 2}, "left": {"poly": [0.3], "width": 1.5}},
         "transverse": [{"poly": [1], "width": 2}]}
    src = make_source("gaussian", p, 2, 2)
    grid = jc.HyperplaneGrid.uniform(10.0, 401, [128], [40.0])
    seq = jc.solve_jump_sequence(s1, sheet1, src, grid, M=2)
    good = jc.residual_smoothness_check(s1, seq, src, M=2)
    bad_seq = jc.JumpSequence(grid, [seq.jumps[0], 2 * seq.jumps[1], seq.jumps[2]])
    bad = jc.residual_smoothness_check(s1, bad_seq, src, M=2)
    assert max(good.jump_norms) <= 1e-4
    assert bad.jump_norms[0] >= 0.1


def test_sequence_save(tmp_path, s1_sequence):
    _, seq = s1_sequence
    small = jc.JumpSequence(seq.grid, [J[:3] for J in seq.jumps])
    small.grid = jc.HyperplaneGrid(seq.grid.t[:3].tolist() + list(seq.grid.t[3:8]), seq.grid.N, seq.grid.L)
    small = jc.JumpSequence(small.grid, [J[:8] for J in seq.jumps])
    paths = small.save(tmp_path)
    data = np.loadtxt(paths[1], delimiter=",", skiprows=1)
    assert data.shape == (8 * 256, 2 + 4)
    assert open(paths[0]).readline().strip() == "t,x2,re_J0,im_J0,re_J1,im_J1"
