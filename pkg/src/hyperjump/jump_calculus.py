"""Jumps across the characteristic hyperplane ``x1 = 0``.

If ``f`` jumps across ``x1 = 0`` with jumps ``J_f^n`` of its ``x1``
derivatives, the solution's jumps ``J_u^n`` obey

    A1 J^0 = 0,    A1 J^{n+1} + L_tan J^n = J_f^n   (n >= 0),

with ``L_tan = d/dt + sum_{j>=2} A_j d/dx_j``.  Splitting with the kernel
projector ``pi`` of ``A1`` and its partial inverse ``Qinv`` gives

    (1 - pi) J^n = Qinv (J_f^{n-1} - L_tan J^{n-1}),
    (d/dt + v.d) pi J^n = pi J_f^n - pi L_tan (1 - pi) J^n,

so ``pi J^n`` is transported along ``x' = x0' + v' t``.  Beyond the source,
``pi J^1`` grows at rate ``-P J^0`` where ``P`` is the diffractive operator.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.ndimage
from scipy.interpolate import CubicSpline

from ._stencils import fd_derivative, fd_weights
from .errors import DomainError, InputError, NotCharacteristicError, ResolutionError
from .symbol_core import spectral_decompose

RESOLUTION_TOL = 1e-8


@dataclass(frozen=True)
class HyperplaneGrid:
    """Uniform ``(t, x')`` grid; ``t`` starts at 0, ``x'`` centred like ``GridSpec``."""

    t: np.ndarray
    N: tuple
    L: tuple
    periodic: bool = True

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 8 or t[0] != 0.0:
            raise InputError("time grid must be 1-D, start at 0 and have >= 8 nodes")
        if not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0):
            raise InputError("time grid must be uniform")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "N", tuple(int(n) for n in np.atleast_1d(self.N)))
        object.__setattr__(self, "L", tuple(float(v) for v in np.atleast_1d(self.L)))

    @classmethod
    def uniform(cls, t_max, nt, N, L, periodic=True):
        return cls(np.linspace(0.0, t_max, nt), N, L, periodic)

    @property
    def dt(self):
        return self.t[1] - self.t[0]

    @property
    def dx(self):
        return tuple(l / n for l, n in zip(self.L, self.N))

    @property
    def shape(self):
        return (self.t.size,) + self.N

    def axes(self):
        return [(np.arange(n) - n // 2) * h for n, h in zip(self.N, self.dx)]

    def mesh(self):
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def freqs(self):
        return [2 * np.pi * np.fft.fftfreq(n, h) for n, h in zip(self.N, self.dx)]

    def sample(self, fn):
        """Evaluate ``fn(t, x')`` on the grid, shape ``(nt, *N, k)``."""
        return np.asarray(fn(self.t, self.mesh()))

    def as_dict(self):
        return {"t_max": float(self.t[-1]), "nt": int(self.t.size), "N": list(self.N),
                "L": list(self.L), "periodic": self.periodic}


@dataclass
class ProjectorPair:
    pi: np.ndarray
    Qinv: np.ndarray

    def residuals(self, A1):
        k = A1.shape[0]
        I = np.eye(k)
        return {
            "A1_pi": float(np.abs(A1 @ self.pi).max()),
            "pi_A1": float(np.abs(self.pi @ A1).max()),
            "Qinv_A1": float(np.abs(self.Qinv @ A1 @ (I - self.pi) - (I - self.pi)).max()),
            "idempotent": float(np.abs(self.pi @ self.pi - self.pi).max()),
            "Qinv_pi": float(np.abs(self.Qinv @ self.pi).max()),
        }


def reference_projector(system):
    """Kernel projector ``pi`` of ``A1`` and the partial inverse ``Qinv``.

    ``Qinv = sum_{lambda != 0} pi_lambda / lambda`` so that ``Qinv pi = 0``.
    """
    e1 = np.zeros(system.d)
    e1[0] = 1.0
    sd = spectral_decompose(system, e1)
    scale = max(1.0, np.abs(sd.eigenvalues).max())
    zero = np.abs(sd.eigenvalues) <= 1e-9 * scale
    if not np.any(zero):
        raise NotCharacteristicError("hyperplane not characteristic: A1 is invertible")
    pi = sd.projectors[zero].sum(axis=0)
    Qinv = sum((p / lam for lam, p in zip(sd.eigenvalues[~zero], sd.projectors[~zero])),
               np.zeros_like(pi))
    return ProjectorPair(pi, Qinv)


@dataclass
class JumpSequence:
    grid: HyperplaneGrid
    jumps: list
    meta: dict = field(default_factory=dict)

    @property
    def order(self):
        return len(self.jumps) - 1

    def save(self, directory, stem="jump"):
        """One CSV per order: columns t, x'..., then re/im per component."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        T = np.broadcast_to(self.grid.t.reshape((-1,) + (1,) * len(self.grid.N)), self.grid.shape)
        X = np.broadcast_to(self.grid.mesh(), self.grid.shape + (len(self.grid.N),))
        paths = []
        for n, J in enumerate(self.jumps):
            cols = [T.ravel()] + [X[..., j].ravel() for j in range(X.shape[-1])]
            head = ["t"] + [f"x{j + 2}" for j in range(X.shape[-1])]
            for c in range(J.shape[-1]):
                cols += [J[..., c].real.ravel(), J[..., c].imag.ravel()]
                head += [f"re_J{c}", f"im_J{c}"]
            p = directory / f"{stem}{n}.csv"
            np.savetxt(p, np.column_stack(cols), delimiter=",", header=",".join(head),
                       comments="", fmt="%.12e")
            paths.append(p)
        return paths


class TangentialStencil:
    """Discrete ``L_tan = d/dt + sum_{j>=2} A_j d/dx_j`` on a hyperplane grid.

    Time derivatives use five-point stencils (one-sided at both ends); ``x'``
    derivatives are spectral on periodic grids and five-point otherwise.
    """

    def __init__(self, system, grid):
        if len(grid.N) != system.d - 1:
            raise InputError("hyperplane grid must have d - 1 transverse axes")
        self.system, self.grid = system, grid
        self.A_tan = system.A[1:]

    def dt(self, F, m=1):
        return fd_derivative(F, self.grid.dt, axis=0, m=m)

    def dx(self, F, j, m=1, lead=1):
        ax = lead + j
        if self.grid.periodic:
            k = self.grid.freqs()[j]
            shape = [1] * F.ndim
            shape[ax] = -1
            mult = ((1j * k) ** m).reshape(shape)
            out = scipy.fft.ifft(mult * scipy.fft.fft(F, axis=ax), axis=ax)
            return out if np.iscomplexobj(F) else out.real
        return fd_derivative(F, self.grid.dx[j], axis=ax, m=m)

    def matvec(self, M, F):
        return np.einsum("ij,...j->...i", M, F)

    def apply(self, F):
        out = self.dt(F)
        for j, A in enumerate(self.A_tan):
            out = out + self.matvec(A, self.dx(F, j))
        return out

    def tail_fraction(self, F):
        """Energy share of the top third of the ``x'`` spectrum."""
        G = F
        for j in range(len(self.grid.N)):
            G = scipy.fft.fft(G, axis=1 + j)
        e = np.abs(G) ** 2
        e = e.sum(axis=0)
        if e.ndim > len(self.grid.N):
            e = e.sum(axis=-1)
        K = np.stack(np.meshgrid(*self.grid.freqs(), indexing="ij"), axis=-1)
        nyq = np.array([np.pi / h for h in self.grid.dx])
        mask = np.any(np.abs(K) > (2.0 / 3.0) * nyq, axis=-1)
        tot = e.sum()
        return float(e[mask].sum() / tot) if tot > 0 else 0.0


def _support_halfwidth(S, grid, tol=1e-8):
    mag = np.abs(S)
    while mag.ndim > 1 + len(grid.N):
        mag = mag.max(axis=-1)
    mag = mag.max(axis=0)
    peak = mag.max()
    if peak == 0:
        return 0.0
    X = grid.mesh()
    return float(np.linalg.norm(X[mag > tol * peak], axis=-1).max())


def transport(grid, v_tan, S):
    """Solve ``(d/dt + v'.grad') U = S`` with ``U = 0`` at ``t = 0``.

    Exact characteristics: ``U(t, x') = int_0^t S(s, x' - v'(t - s)) ds``.
    The source is shifted into characteristic coordinates (Fourier phase on
    periodic grids, cubic interpolation otherwise), integrated cumulatively
    with a cubic-spline antiderivative and shifted back.
    """
    v_tan = np.atleast_1d(np.asarray(v_tan, dtype=float))
    S = np.asarray(S)
    t = grid.t
    shift = np.abs(v_tan).max(initial=0.0) * t[-1]
    if shift > 0:
        need = _support_halfwidth(S, grid) + shift
        if need > min(grid.L) / 2:
            raise DomainError(
                f"characteristics leave the x' domain: need half-extent {need:.3g}, "
                f"have {min(grid.L) / 2:.3g}", required=2 * need)
    nx = len(grid.N)
    if shift == 0:
        return CubicSpline(t, S, axis=0).antiderivative()(t)
    if grid.periodic:
        G = S.astype(complex)
        for j in range(nx):
            G = scipy.fft.fft(G, axis=1 + j)
        K = np.stack(np.meshgrid(*grid.freqs(), indexing="ij"), axis=-1)
        kv = K @ v_tan
        ph = np.exp(1j * t.reshape((-1,) + (1,) * nx) * kv)
        ph = ph.reshape(ph.shape + (1,) * (G.ndim - ph.ndim))
        W = CubicSpline(t, G * ph, axis=0).antiderivative()(t) / ph
        for j in range(nx):
            W = scipy.fft.ifft(W, axis=1 + j)
        return W if np.iscomplexobj(S) else W.real
    # non-periodic: S(s, y + v's) by cubic interpolation, then shift back
    H = _shift_slices(grid, S, v_tan, +1)
    W = CubicSpline(t, H, axis=0).antiderivative()(t)
    return _shift_slices(grid, W, v_tan, -1)


def _shift_slices(grid, F, v, sign):
    """``out[i](x') = F[i](x' + sign * v * t_i)`` with cubic interpolation."""
    out = np.empty_like(F)
    nx = len(grid.N)
    idx = np.indices(grid.N).astype(float)
    for i, ti in enumerate(grid.t):
        coords = np.stack([idx[j] + sign * v[j] * ti / grid.dx[j] for j in range(nx)])
        sl = F[i]
        extra = sl.shape[nx:]
        flat = sl.reshape(grid.N + (-1,))
        res = np.empty_like(flat)
        for c in range(flat.shape[-1]):
            part = flat[..., c]
            if np.iscomplexobj(part):
                res[..., c] = (scipy.ndimage.map_coordinates(part.real, coords, order=3, mode="constant")
                               + 1j * scipy.ndimage.map_coordinates(part.imag, coords, order=3, mode="constant"))
            else:
                res[..., c] = scipy.ndimage.map_coordinates(part, coords, order=3, mode="constant")
        out[i] = res.reshape(grid.N + extra)
    return out


def solve_jump0(pair, v, Jf0, grid):
    """``J^0``: transport of ``pi J_f^0`` along ``x' = x0' + v' t``."""
    Jf0 = np.asarray(Jf0)
    if Jf0.shape[:1 + len(grid.N)] != grid.shape:
        raise InputError(f"Jf0 shape {Jf0.shape} does not match grid {grid.shape}")
    v = np.asarray(v, dtype=float)
    src = np.einsum("ij,...j->...i", pair.pi, Jf0)
    return transport(grid, v[1:], src)


def solve_jump_n(pair, sheet, stencil, J_prev, Jf_n, Jf_prev=None):
    """``J^n`` (n >= 1) from ``J^{n-1}`` and the source jumps.

    ``(1 - pi) J^n = Qinv (J_f^{n-1} - L_tan J^{n-1})`` and ``pi J^n`` is
    transported with source ``pi J_f^n - pi L_tan (1 - pi) J^n``.
    """
    J_prev = np.asarray(J_prev)
    if stencil.tail_fraction(J_prev) > RESOLUTION_TOL:
        raise ResolutionError("J^{n-1} is not resolved well enough for second tangential derivatives")
    Jf_prev = np.zeros_like(J_prev) if Jf_prev is None else np.asarray(Jf_prev)
    ell = stencil.matvec(pair.Qinv, Jf_prev - stencil.apply(J_prev))
    src = stencil.matvec(pair.pi, np.asarray(Jf_n) - stencil.apply(ell))
    return transport(stencil.grid, np.asarray(sheet.v)[1:], src) + ell


def solve_jump_sequence(system, sheet, source, grid, M=2, pair=None):
    """Solve ``J^0 .. J^M`` for a registered source on a hyperplane grid."""
    pair = reference_projector(system) if pair is None else pair
    stencil = TangentialStencil(system, grid)
    X = grid.mesh()
    Jf = [source.jump(n, grid.t, X) for n in range(M + 1)]
    jumps = [solve_jump0(pair, sheet.v, Jf[0], grid)]
    for n in range(1, M + 1):
        jumps.append(solve_jump_n(pair, sheet, stencil, jumps[-1], Jf[n], Jf[n - 1]))
    return JumpSequence(grid, jumps, {"M": M})


@dataclass
class DiffractiveOperator:
    """``P = sum_{mu,nu} coeffs[mu, nu] d_mu d_nu`` over transverse variables."""

    coeffs: np.ndarray
    identity_residual: float
    identity_ok: bool

    @property
    def is_zero(self):
        return not np.any(np.abs(self.coeffs) > 1e-12)

    def apply(self, F, stencil):
        out = np.zeros_like(F, dtype=np.result_type(F, self.coeffs))
        n = self.coeffs.shape[0]
        for a in range(n):
            for b in range(n):
                C = self.coeffs[a, b]
                if not np.any(C):
                    continue
                D = stencil.dx(F, a, 2) if a == b else stencil.dx(stencil.dx(F, a), b)
                out = out + stencil.matvec(C, D)
        return out

    def symbol_action(self, B, c):
        """``P`` applied to the quadratic ``x'^T B x' / 2`` times the vector ``c``."""
        return np.einsum("ab,abij,j->i", B, self.coeffs, c)


def diffractive_operator(pair, sheet, n_probe=8, tol=1e-6, seed=0):
    """``P = (1/2) pi sum lambda_{mu nu}(1,0,..) d_mu d_nu``, with the identity check.

    The check compares ``-pi L_tan Qinv L_tan pi`` against ``P`` on random
    quadratic polynomials times random vectors.  A mismatch beyond ``tol`` is
    flagged rather than raised.
    """
    A_tan = sheet.system.A[1:]
    n = A_tan.shape[0]
    coeffs = 0.5 * sheet.hessian[:, :, None, None] * pair.pi[None, None]
    lhs = np.zeros_like(coeffs, dtype=np.result_type(coeffs, A_tan))
    for a in range(n):
        for b in range(n):
            M = A_tan[a] @ pair.Qinv @ A_tan[b] + A_tan[b] @ pair.Qinv @ A_tan[a]
            lhs[a, b] = -0.5 * pair.pi @ M @ pair.pi
    rng = np.random.default_rng(seed)
    res = 0.0
    for _ in range(n_probe):
        B = rng.standard_normal((n, n))
        B = B + B.T
        c = rng.standard_normal(pair.pi.shape[0])
        res = max(res, float(np.abs(np.einsum("ab,abij,j->i", B, lhs - coeffs, c)).max()))
    scale = max(1.0, float(np.abs(coeffs).max()))
    ok = res <= tol * scale
    return DiffractiveOperator(coeffs, res, ok)


@dataclass
class GrowthPrediction:
    slope: float
    vector: np.ndarray


def _second_derivs(fn, t, xp, h):
    """Five-point second derivatives of ``fn(t, x')`` in every transverse pair."""
    xp = np.asarray(xp, dtype=float)
    n = xp.shape[-1]
    w = fd_weights(0.0, np.arange(-2, 3), 2) / h**2
    w1 = fd_weights(0.0, np.arange(-2, 3), 1) / h
    E = np.eye(n)
    D = {}
    for a in range(n):
        D[a, a] = sum(w[j] * fn(t, xp + (j - 2) * h * E[a]) for j in range(5))
        for b in range(a + 1, n):
            acc = 0
            for i in range(5):
                for j in range(5):
                    if w1[i] and w1[j]:
                        acc = acc + w1[i] * w1[j] * fn(t, xp + (i - 2) * h * E[a] + (j - 2) * h * E[b])
            D[a, b] = D[b, a] = acc
    return D


def predict_growth_slope(P, Jf0, x0, v, T, pair=None, n_panels=8, h=1e-3):
    """Asymptotic ``d(pi J^1)/dt`` on the characteristic ``x' = x0' + v' t``.

    Equals ``int_0^T (-P J_f^0)(s, x0' + v' s) ds`` with ``Jf0`` a callable
    ``(t, x') -> k-vector`` supported in ``0 <= t <= T``.  ``slope`` is the
    coordinate along ``range(pi)`` when that range is one-dimensional and
    the Euclidean norm otherwise.
    """
    if P.is_zero:
        k = P.coeffs.shape[-1]
        return GrowthPrediction(0.0, np.zeros(k))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))[-x0.size:]
    xg, wg = np.polynomial.legendre.leggauss(20)
    edges = np.linspace(0.0, T, n_panels + 1)
    s = (0.5 * (edges[1:] - edges[:-1])[:, None] * (xg + 1) + edges[:-1, None]).ravel()
    ws = (0.5 * (edges[1:] - edges[:-1])[:, None] * wg).ravel()
    pts = x0[None, :] + s[:, None] * v[None, :]

    def f(tt, xx):
        return np.stack([np.asarray(Jf0(ti, xi)) for ti, xi in zip(tt, xx)])

    D = _second_derivs(f, s, pts, h)
    n = x0.size
    PJ = 0
    for a in range(n):
        for b in range(n):
            PJ = PJ + np.einsum("ij,sj->si", P.coeffs[a, b], D[a, b])
    vec = -(ws[:, None] * PJ).sum(axis=0)
    ref = pair.pi if pair is not None else P.coeffs[0, 0]
    rank = np.linalg.matrix_rank(ref, tol=1e-10) if np.any(ref) else 0
    if rank == 1:
        col = ref[:, np.argmax(np.linalg.norm(ref, axis=0))]
        r = col / np.linalg.norm(col)
        slope = float(np.real(np.vdot(r, vec)))
    else:
        slope = float(np.linalg.norm(vec))
    return GrowthPrediction(slope, vec)


def reconstruct_expansion(jumps, x1, t_index=None):
    """``sum_n J^n x1^n / n!`` on ``x1 > 0``, zero on ``x1 < 0``, half of ``J^0`` at 0.

    Returns shape ``(nt, n1, *N', k)``, or ``(n1, *N', k)`` for one time.
    """
    x1 = np.asarray(x1, dtype=float)
    Js = [J if t_index is None else J[t_index][None] for J in jumps.jumps]
    shape = Js[0].shape
    out = np.zeros((shape[0], x1.size) + shape[1:], dtype=np.result_type(*Js))
    fact = 1.0
    for n, J in enumerate(Js):
        if n:
            fact *= n
        w = np.where(x1 > 0, x1**n / fact, 0.0)
        if n == 0:
            w = np.where(x1 == 0, 0.5, w)
        out += w.reshape((1, -1) + (1,) * (J.ndim - 1)) * J[:, None]
    return out[0] if t_index is not None else out


@dataclass
class ResidualReport:
    jump_norms: list
    A1J0: float
    h1: float

    def as_dict(self):
        return {"jump_norms": self.jump_norms, "A1J0": self.A1J0, "h1": self.h1}


def residual_smoothness_check(system, jumps, source, M=None, h1=0.02, n_side=7):
    """Jumps of ``L v - f`` and its ``x1`` derivatives across ``x1 = 0``.

    ``v`` is the jump carrier built from ``jumps``; ``L v - f`` is evaluated
    at ``n_side`` nodes on each side of the hyperplane with stencils
    independent of the solver (spline time derivatives, one-sided ``x1``
    differences) and extrapolated to ``x1 = 0+-``.  Orders ``0 .. M-1`` are
    reported together with ``max |A1 J^0|``.
    """
    M = jumps.order if M is None else M
    if M < 1 or M > jumps.order:
        raise InputError("need 1 <= M <= available jump order")
    grid = jumps.grid
    x1 = np.concatenate([-h1 * np.arange(n_side, 0, -1), h1 * np.arange(1, n_side + 1)])
    seq = JumpSequence(grid, jumps.jumps[:M + 1])
    v = reconstruct_expansion(seq, x1)
    nx = len(grid.N)
    stencil = TangentialStencil(system, grid)
    Ltv = CubicSpline(grid.t, v, axis=0).derivative()(grid.t)
    for j, A in enumerate(system.A[1:]):
        Ltv = Ltv + stencil.matvec(A, stencil.dx(v, j, lead=2))
    # d/dx1 inside each side separately
    dv = np.empty_like(v)
    for side in (slice(0, n_side), slice(n_side, 2 * n_side)):
        dv[:, side] = fd_derivative(v[:, side], h1, axis=1, m=1, width=n_side)
    X = grid.mesh()
    pts = np.concatenate([np.broadcast_to(x1.reshape((-1,) + (1,) * nx + (1,)), (x1.size,) + grid.N + (1,)),
                          np.broadcast_to(X, (x1.size,) + X.shape)], axis=-1)
    f = source.time(grid.t).reshape((-1,) + (1,) * (nx + 2)) * source.spatial(pts)[None]
    R = Ltv + stencil.matvec(system.A[0], dv) - f
    norms = []
    jj = np.arange(1, n_side + 1)
    for m in range(M):
        wr = fd_weights(0.0, jj * h1, m)
        wl = fd_weights(0.0, -jj * h1, m)
        right = np.tensordot(wr, R[:, n_side:], axes=(0, 1))
        left = np.tensordot(wl, R[:, n_side - 1::-1], axes=(0, 1))
        norms.append(float(np.abs(right - left).max()))
    a1j0 = float(np.abs(stencil.matvec(system.A[0], jumps.jumps[0])).max())
    return ResidualReport(norms, a1j0, h1)
