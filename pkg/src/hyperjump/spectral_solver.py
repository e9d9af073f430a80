"""Pseudospectral evolution on a periodic box standing in for R^d.

Fourier convention: ``u(x) = sum_m u_hat[m] exp(i xi_m . x)`` (numpy FFT),
so ``L = d/dt + sum_j A_j d/dx_j`` becomes ``d/dt + i A(xi)`` mode by mode
and the Duhamel solution is ``u_hat(t) = int_0^t exp(-i (t - s) A(xi)) f_hat(s) ds``.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft
from numpy.polynomial import Polynomial

from ._stencils import fd_weights, smoothstep
from .errors import ContractError, DomainError, InputError
from .symbol_core import symbol_eigensystem, sphere_samples, _sorted_eigvals

N_QUAD = 32
ALIAS_TOL = 1e-6
OUT_OF_CONE_TOL = 1e-6


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid, node ``m`` at ``(m - N/2) * L / N`` on each axis."""

    N: tuple
    L: tuple
    horizon: float = 0.0
    output_times: tuple = ()

    def __post_init__(self):
        N = tuple(int(n) for n in np.atleast_1d(self.N))
        L = tuple(float(v) for v in np.atleast_1d(self.L))
        if len(N) != len(L):
            raise InputError("N and L must have the same length")
        for n in N:
            if n < 8 or n & (n - 1):
                raise InputError(f"grid sizes must be powers of two >= 8, got {n}")
        if any(v <= 0 for v in L):
            raise InputError("box lengths must be positive")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "output_times", tuple(float(t) for t in self.output_times))

    @property
    def d(self):
        return len(self.N)

    @property
    def dx(self):
        return tuple(l / n for l, n in zip(self.L, self.N))

    @property
    def origin(self):
        return tuple(n // 2 for n in self.N)

    def axes(self):
        return [(np.arange(n) - n // 2) * h for n, h in zip(self.N, self.dx)]

    def freqs(self):
        return [2 * np.pi * np.fft.fftfreq(n, h) for n, h in zip(self.N, self.dx)]

    def mesh(self):
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def kmesh(self):
        return np.stack(np.meshgrid(*self.freqs(), indexing="ij"), axis=-1)

    def as_dict(self):
        return {"N": list(self.N), "L": list(self.L), "horizon": self.horizon,
                "output_times": list(self.output_times)}


_MAGIC = b"HJGF"


@dataclass(eq=False)
class GridField:
    """Complex k-vector field on a ``GridSpec``; ``values`` has shape ``(*N, k)``."""

    spec: GridSpec
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape[:-1] != self.spec.N:
            raise InputError(f"values shape {v.shape} does not match grid {self.spec.N}")
        if not np.all(np.isfinite(v)):
            raise ContractError("grid field has non-finite entries")
        self.values = v

    @property
    def k(self):
        return self.values.shape[-1]

    def save(self, path):
        """Flat little-endian binary with header, plus a JSON sidecar."""
        path = Path(path)
        s = self.spec
        head = struct.pack("<4sIII", _MAGIC, 1, s.d, self.k)
        head += struct.pack(f"<{s.d}Q", *s.N) + struct.pack(f"<{s.d}d", *s.L)
        head += struct.pack("<d", self.time)
        data = np.ascontiguousarray(self.values, dtype="<c16").tobytes()
        path.write_bytes(head + data)
        meta = {"d": s.d, "k": self.k, "N": list(s.N), "L": list(s.L), "time": self.time,
                "dtype": "complex128", "byteorder": "little", "layout": "C order, (*N, k)",
                "header_bytes": len(head), "sha256": hashlib.sha256(head + data).hexdigest()}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path):
        raw = Path(path).read_bytes()
        magic, version, d, k = struct.unpack_from("<4sIII", raw, 0)
        if magic != _MAGIC:
            raise InputError(f"{path} is not a grid field file")
        off = 16
        N = struct.unpack_from(f"<{d}Q", raw, off)
        off += 8 * d
        L = struct.unpack_from(f"<{d}d", raw, off)
        off += 8 * d
        (t,) = struct.unpack_from("<d", raw, off)
        off += 8
        vals = np.frombuffer(raw, dtype="<c16", offset=off).reshape(tuple(N) + (k,))
        return cls(GridSpec(N, L), vals.copy(), t)


def export_line_csv(field_, path, axis=0):
    """Line through the origin along ``axis``: coordinate, then re/im per component."""
    idx = list(field_.spec.origin)
    idx[axis] = slice(None)
    line = field_.values[tuple(idx)]
    x = field_.spec.axes()[axis]
    cols = [x]
    header = ["x"]
    for c in range(field_.k):
        cols += [line[:, c].real, line[:, c].imag]
        header += [f"re_u{c}", f"im_u{c}"]
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header),
               comments="", fmt="%.12e")


def export_plane_csv(field_, path):
    """Full 2-D field as rows ``x1, x2, |u|``."""
    if field_.spec.d != 2:
        raise InputError("plane export needs d = 2")
    X = field_.spec.mesh().reshape(-1, 2)
    mag = np.linalg.norm(field_.values, axis=-1).ravel()
    np.savetxt(path, np.column_stack([X, mag]), delimiter=",", header="x1,x2,abs_u",
               comments="", fmt="%.9e")


# ---------------------------------------------------------------- sources

class TimeProfile:
    """Time envelope supported in ``[0, T]`` with unit integral.

    ``box`` is ``1/T`` on ``[0, T)``; ``poly`` is proportional to
    ``(t (T - t))^p``, which is ``C^{p-1}`` across both ends.
    """

    def __init__(self, kind="poly", T=1.0, p=3):
        if T <= 0:
            raise InputError("source duration T must be positive")
        if kind not in ("box", "poly"):
            raise InputError(f"unknown time profile {kind!r}")
        self.kind, self.T, self.p = kind, float(T), int(p)
        if kind == "poly":
            P = Polynomial([0.0, 1.0]) ** self.p * Polynomial([self.T, -1.0]) ** self.p
            Pi = P.integ()
            c = 1.0 / (Pi(self.T) - Pi(0.0))
            self._P = c * P
            self._Pi = c * Pi
        else:
            self._P = Polynomial([1.0 / self.T])
            self._Pi = self._P.integ()

    def _inside(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= 0) & (t < self.T) if self.kind == "box" else (t >= 0) & (t <= self.T)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(self._inside(t), self._P(t), 0.0)

    def deriv(self, t, n=1):
        t = np.asarray(t, dtype=float)
        return np.where(self._inside(t), self._P.deriv(n)(t), 0.0)

    def integral(self, t):
        """``int_0^t h``."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.T)
        return self._Pi(t) - self._Pi(0.0)

    def as_dict(self):
        return {"kind": self.kind, "T": self.T, "p": self.p}


class PolyGauss:
    """``P(x - c) exp(-(x - c)^2 / w^2)`` with ``P`` a polynomial."""

    def __init__(self, coef, width, center=0.0):
        if not width > 0:
            raise InputError("Gaussian width must be positive")
        self.P = Polynomial(np.atleast_1d(np.asarray(coef, dtype=float)))
        self.w = float(width)
        self.c = float(center)

    def __call__(self, x):
        y = np.asarray(x, dtype=float) - self.c
        return self.P(y) * np.exp(-(y / self.w) ** 2)

    def deriv(self, n=1):
        P = self.P
        for _ in range(n):
            P = P.deriv() - Polynomial([0.0, 2.0 / self.w**2]) * P
        return PolyGauss(P.coef, self.w, self.c)

    def radius(self, tol=1e-10):
        """Distance from the origin beyond which ``|value|`` is below ``tol * max``."""
        deg = max(self.P.degree(), 0)
        r = self.w * np.sqrt(np.log(1.0 / tol) + deg * np.log(1.0 + 10 * self.w))
        return abs(self.c) + r

    def as_dict(self):
        return {"poly": self.P.coef.tolist(), "width": self.w, "center": self.c}


@dataclass
class SourceTerm:
    vector: np.ndarray
    right: PolyGauss = None
    left: PolyGauss = None
    transverse: list = field(default_factory=list)


class SourceModel:
    """Piecewise smooth source ``f(t, x) = h(t) sum_terms e * X1^{+-}(x1) * prod X_j(x_j)``.

    ``X1^+`` applies on ``x1 > 0`` and ``X1^-`` on ``x1 < 0``; either may be
    absent (zero).  Nodes exactly on ``x1 = 0`` take the mean of the two
    one-sided limits.
    """

    def __init__(self, terms, time, k, d, family="custom", params=None):
        self.terms, self.time, self.k, self.d = terms, time, int(k), int(d)
        self.family, self.params = family, params or {}
        for term in terms:
            if len(term.transverse) != d - 1:
                raise InputError("each source term needs d - 1 transverse factors")
            if np.asarray(term.vector).shape != (k,):
                raise InputError("source vector must have k components")

    @property
    def T(self):
        return self.time.T

    def _side(self, term, x1, side, n):
        g = term.right if side > 0 else term.left
        if g is None:
            return np.zeros_like(np.asarray(x1, dtype=float))
        return g.deriv(n)(x1) if n else g(x1)

    def _transverse(self, term, xp, derivs=None):
        out = 1.0
        for j, g in enumerate(term.transverse):
            m = 0 if derivs is None else derivs[j]
            out = out * (g.deriv(m)(xp[..., j]) if m else g(xp[..., j]))
        return out

    def spatial(self, X):
        """Time-free part on points ``X`` of shape ``(..., d)``; midpoint on x1 = 0."""
        X = np.asarray(X, dtype=float)
        x1 = X[..., 0]
        out = np.zeros(X.shape[:-1] + (self.k,), dtype=float)
        for term in self.terms:
            r = self._side(term, x1, 1, 0)
            l = self._side(term, x1, -1, 0)
            s = np.where(x1 > 0, r, np.where(x1 < 0, l, 0.5 * (r + l)))
            out += (s * self._transverse(term, X[..., 1:]))[..., None] * np.asarray(term.vector)
        return out

    def evaluate(self, t, X):
        return self.time(t) * self.spatial(X)

    def one_sided(self, X, side, n=0, dt=0, t=None):
        """Smooth extension from one side: ``d^n/dx1^n`` and ``dt``-th time derivative."""
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[:-1] + (self.k,), dtype=float)
        for term in self.terms:
            s = self._side(term, X[..., 0], side, n) * self._transverse(term, X[..., 1:])
            out += s[..., None] * np.asarray(term.vector)
        if t is None:
            return out
        h = self.time.deriv(t, dt) if dt else self.time(t)
        return np.asarray(h)[..., None] * out if np.ndim(h) else h * out

    def jump(self, n, t, xp):
        """``J_f^n(t, x')`` of shape ``t.shape + xp.shape[:-1] + (k,)``."""
        t = np.asarray(t, dtype=float)
        xp = np.asarray(xp, dtype=float)
        prof = np.zeros(xp.shape[:-1] + (self.k,), dtype=float)
        for term in self.terms:
            jr = float(self._side(term, np.array(0.0), 1, n))
            jl = float(self._side(term, np.array(0.0), -1, n))
            prof += ((jr - jl) * self._transverse(term, xp))[..., None] * np.asarray(term.vector)
        h = self.time(t)
        return h.reshape(h.shape + (1,) * prof.ndim) * prof

    def jump_fn(self, n):
        """Callable ``(t, x') -> J_f^n``, convenient for quadrature."""
        return lambda t, xp: self.jump(n, t, xp)

    def radius(self, tol=1e-10):
        r = 0.0
        for term in self.terms:
            parts = [g.radius(tol) for g in (term.right, term.left) if g is not None]
            parts += [g.radius(tol) for g in term.transverse]
            r = max(r, float(np.sqrt(np.sum(np.square(parts)))) if parts else 0.0)
        return r

    def as_dict(self):
        return {"family": self.family, "params": self.params, "time": self.time.as_dict()}


def _pg(spec):
    if spec is None:
        return None
    return PolyGauss(spec.get("poly", [1.0]), spec.get("width", 1.0), spec.get("center", 0.0))


def make_source(family, params, k, d):
    """Registered source families.

    ``gaussian``: one term, vector ``params['vector']``, one-sided x1 factors
    ``params['x1'] = {'right': pg, 'left': pg}`` and transverse factors
    ``params['transverse']`` (each ``pg = {'poly', 'width', 'center'}``).

    ``solenoidal`` (d = 2): ``f[a] = d psi/dx2``, ``f[b] = -d psi/dx1`` for a
    stream function ``psi = h(t) S^{+-}(x1) G(x2)`` with a kink on x1 = 0;
    ``params['components'] = [a, b]``.
    """
    tp = params.get("time", {"kind": "poly", "T": 1.0, "p": 3})
    time = TimeProfile(tp.get("kind", "poly"), tp.get("T", 1.0), tp.get("p", 3))
    if family == "gaussian":
        x1 = params.get("x1", {"right": {"poly": [1.0], "width": 2.0}})
        trans = params.get("transverse", [{"poly": [1.0], "width": 1.0}] * (d - 1))
        vec = np.asarray(params.get("vector", np.eye(k)[0]), dtype=float)
        term = SourceTerm(vec, _pg(x1.get("right")), _pg(x1.get("left")), [_pg(t) for t in trans])
        return SourceModel([term], time, k, d, family, params)
    if family == "solenoidal":
        if d != 2:
            raise InputError("solenoidal family is two-dimensional")
        a, b = params.get("components", [1, 2])
        st = params.get("stream", {"right": {"poly": [1.0, 1.0], "width": 2.0},
                                   "left": {"poly": [1.0, -1.0], "width": 2.0}})
        G = _pg(params.get("transverse", [{"poly": [1.0], "width": 1.0}])[0])
        right, left = _pg(st.get("right")), _pg(st.get("left"))
        ea, eb = np.eye(k)[a], np.eye(k)[b]
        t1 = SourceTerm(ea, right, left, [G.deriv(1)])
        t2 = SourceTerm(-eb, right.deriv(1) if right else None, left.deriv(1) if left else None, [G])
        return SourceModel([t1, t2], time, k, d, family, params)
    raise InputError(f"unknown source family {family!r}")


def sample_source(src, spec, t):
    """Source sampled on the grid at time ``t`` (zero outside its support)."""
    return GridField(spec, src.evaluate(t, spec.mesh()).astype(complex), float(t))


# ---------------------------------------------------------------- cutoffs

@dataclass(frozen=True)
class CutoffSymbol:
    """Even, degree-zero conic cutoff ``chi`` and radial switch ``phi``.

    ``chi = 1`` within angle ``theta_N1`` of the ``x1`` axis and ``0``
    beyond ``theta_N``; ``phi(xi1) = 0`` for ``|xi1| <= floor[0]`` and ``1``
    for ``|xi1| >= floor[1]``.
    """

    theta_N: float
    theta_N1: float
    floor: tuple = (1.0, 2.0)

    def chi(self, xi):
        xi = np.asarray(xi, dtype=float)
        ang = np.arctan2(np.linalg.norm(xi[..., 1:], axis=-1), np.abs(xi[..., 0]))
        out = 1.0 - smoothstep((ang - self.theta_N1) / (self.theta_N - self.theta_N1))
        return np.where(np.all(xi == 0, axis=-1), 1.0, out)

    def chi_ratio(self, rho):
        """``chi`` as a function of ``|xi'| / |xi1|``."""
        ang = np.arctan(np.abs(rho))
        return 1.0 - smoothstep((ang - self.theta_N1) / (self.theta_N - self.theta_N1))

    def phi(self, xi1):
        a, b = self.floor
        return smoothstep((np.abs(np.asarray(xi1, dtype=float)) - a) / (b - a))


def build_cutoff(theta_N, theta_N1, cone_halfangle=None, floor=(1.0, 2.0)):
    if not 0 < theta_N1 < theta_N:
        raise InputError("need 0 < theta_N1 < theta_N")
    if cone_halfangle is not None and theta_N >= cone_halfangle:
        raise InputError("outer cutoff cone must lie inside the fitted sheet cone")
    if theta_N >= np.pi / 2:
        raise InputError("theta_N must be below pi/2")
    return CutoffSymbol(float(theta_N), float(theta_N1), tuple(floor))


# ---------------------------------------------------------------- evolution

def _fftn(u, d):
    return scipy.fft.fftn(u, axes=tuple(range(d)))


def _ifftn(u, d):
    return scipy.fft.ifftn(u, axes=tuple(range(d)))


def shell_fraction(u_hat, spec, frac=2.0 / 3.0):
    """Energy fraction in modes with some ``|xi_j|`` above ``frac`` of Nyquist."""
    K = spec.kmesh()
    nyq = np.array([np.pi / h for h in spec.dx])
    mask = np.any(np.abs(K) > frac * nyq, axis=-1)
    e = np.abs(u_hat) ** 2
    if e.ndim > spec.d:
        e = e.sum(axis=-1)
    tot = e.sum()
    return float(e[mask].sum() / tot) if tot > 0 else 0.0


class Trajectory:
    """Lazily evaluated Duhamel solution at the requested output times."""

    def __init__(self, spec, times, lam, V, coeffs, time_profile, n_quad, warnings):
        self.spec, self.times = spec, np.asarray(times, dtype=float)
        self._lam, self._V, self._c = lam, V, coeffs
        self._h, self._n = time_profile, n_quad
        self.warnings = warnings
        T = time_profile.T
        self._WT = self._weights(T)

    def _weights(self, t):
        T = self._h.T
        if t >= T and hasattr(self, "_WT"):
            return np.exp(-1j * (t - T) * self._lam) * self._WT
        top = min(t, T)
        if top <= 0:
            return np.zeros_like(self._lam, dtype=complex)
        x, w = np.polynomial.legendre.leggauss(self._n)
        s = 0.5 * top * (x + 1.0)
        w = 0.5 * top * w
        W = np.zeros(self._lam.shape, dtype=complex)
        for sq, wq in zip(s, w):
            hq = float(self._h(sq))
            if hq != 0.0:
                W += wq * hq * np.exp(-1j * (t - sq) * self._lam)
        return W

    def modes(self, t):
        a = self._weights(float(t)) * self._c
        return np.einsum("...ij,...j->...i", self._V, a)

    def field(self, t):
        return GridField(self.spec, _ifftn(self.modes(t), self.spec.d), float(t))

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i):
        return self.field(self.times[i])

    def __iter__(self):
        for t in self.times:
            yield self.field(t)


def solve_duhamel(system, src, spec, output_times, n_quad=N_QUAD):
    """Solve ``L u = f``, ``u = 0`` for ``t <= 0``, on the periodic grid.

    The source is separable, ``f = h(t) S(x)``, so the time integral per mode
    is a Gauss-Legendre sum over ``[0, min(t, T)]`` followed by free
    propagation.  Returns a lazy :class:`Trajectory`.
    """
    if system.d != spec.d or src.d != spec.d or src.k != system.k:
        raise InputError("system, source and grid dimensions disagree")
    K = spec.kmesh()
    lam, V, Vinv = symbol_eigensystem(system, K)
    S_hat = _fftn(src.spatial(spec.mesh()).astype(complex), spec.d)
    warnings = []
    alias = shell_fraction(S_hat, spec)
    if alias > ALIAS_TOL:
        warnings.append(f"resolution: top-third spectral shell carries {alias:.3g} of source energy")
    coeffs = np.einsum("...ij,...j->...i", Vinv, S_hat)
    return Trajectory(spec, output_times, lam, V, coeffs, src.time, n_quad, warnings)


def evolve_free(system, field_, t):
    """Homogeneous evolution ``exp(-i t A(D))`` of a grid field."""
    spec = field_.spec
    lam, V, Vinv = symbol_eigensystem(system, spec.kmesh())
    a = np.einsum("...ij,...j->...i", Vinv, _fftn(field_.values, spec.d))
    u = np.einsum("...ij,...j->...i", V, np.exp(-1j * t * lam) * a)
    return GridField(spec, _ifftn(u, spec.d), field_.time + t)


def scalar_evolve(sheet, w0, t, cone=None):
    """``exp(-i t lambda(D)) w0`` for a scalar field with in-cone spectrum.

    Modes outside the double cone of half-angle ``cone`` (default: the
    sheet's) are annihilated after checking they carry at most 1e-6 of the
    energy.
    """
    spec = w0.spec
    if w0.k != 1:
        raise InputError("scalar_evolve expects a scalar field (k = 1)")
    cone = sheet.cone_halfangle if cone is None else cone
    K = spec.kmesh()
    w_hat = _fftn(w0.values[..., 0], spec.d)
    ang = np.arctan2(np.linalg.norm(K[..., 1:], axis=-1), np.abs(K[..., 0]))
    inside = (ang <= cone) & np.any(K != 0, axis=-1)
    e = np.abs(w_hat) ** 2
    tot = e.sum()
    out = e[~inside].sum() / tot if tot > 0 else 0.0
    if out > OUT_OF_CONE_TOL:
        raise ContractError(f"out-of-cone energy fraction {out:.3g} exceeds {OUT_OF_CONE_TOL}")
    res = np.zeros_like(w_hat)
    res[inside] = w_hat[inside] * np.exp(-1j * t * sheet.value(K[inside]))
    return GridField(spec, _ifftn(res, spec.d)[..., None], w0.time + t)


@dataclass
class MicrolocalSplit:
    easy: GridField
    main: GridField
    rest: GridField
    flags: list


def microlocal_split(field_, cutoff, sheet):
    """``((1 - chi(D)) u, pi(D) chi(D) u, (1 - pi(D)) chi(D) u)``.

    ``pi`` is the sheet's spectral projector.  The zero mode gets ``chi = 1``
    and the projector limit along ``e1``; this is recorded in ``flags``.
    """
    spec = field_.spec
    K = spec.kmesh()
    u_hat = _fftn(field_.values, spec.d)
    chi = cutoff.chi(K)
    cu = chi[..., None] * u_hat
    main = np.zeros_like(cu)
    mask = chi > 0
    zero = np.all(K == 0, axis=-1)
    flags = []
    if np.any(zero):
        flags.append("zero mode: chi=1 and projector taken as the limit along e1")
    pts = np.where(zero[..., None], sheet.direction, K)[mask]
    if pts.size:
        P = sheet.projector(pts)
        main[mask] = np.einsum("nij,nj->ni", P, cu[mask])
    easy = GridField(spec, _ifftn(u_hat - cu, spec.d), field_.time)
    m = GridField(spec, _ifftn(main, spec.d), field_.time)
    rest = GridField(spec, _ifftn(cu - main, spec.d), field_.time)
    return MicrolocalSplit(easy, m, rest, flags)


# ---------------------------------------------------------------- diagnostics

N_SIDE = 5


def extract_jump(field_, order=0):
    """Jump across ``x1 = 0`` of ``u`` (order 0) or ``du/dx1`` (order 1).

    One-sided degree-4 polynomial extrapolation from the five nodes strictly
    on each side; returns right minus left, shape ``(*N', k)``.
    """
    if order not in (0, 1):
        raise InputError("extract_jump supports orders 0 and 1")
    spec = field_.spec
    i0 = spec.origin[0]
    if i0 - N_SIDE < 0 or i0 + N_SIDE >= spec.N[0]:
        raise DomainError("jump stencil leaves the box", required=2 * N_SIDE + 1)
    h = spec.dx[0]
    j = np.arange(1, N_SIDE + 1)
    wr = fd_weights(0.0, j, order) / h**order
    wl = fd_weights(0.0, -j, order) / h**order
    u = field_.values
    right = np.tensordot(wr, u[i0 + j], axes=(0, 0))
    left = np.tensordot(wl, u[i0 - j], axes=(0, 0))
    return right - left


def sup_norm(field_):
    """Max over nodes of the Euclidean norm of the k-vector."""
    return float(np.sqrt((np.abs(field_.values) ** 2).sum(axis=-1).max()))


def sup_history(trajectory):
    return np.array([sup_norm(f) for f in trajectory])


def boundary_shell_fraction(field_, margin):
    """Fraction of the L2 energy within ``margin`` of any box face."""
    spec = field_.spec
    X = spec.mesh()
    half = np.array(spec.L) / 2
    mask = np.any(np.abs(X) > half - margin, axis=-1)
    e = (np.abs(field_.values) ** 2).sum(axis=-1)
    tot = e.sum()
    return float(e[mask].sum() / tot) if tot > 0 else 0.0


def max_speed(system, n=4000, seed=0):
    """Sampled ``max |lambda| / |xi|`` over the unit sphere."""
    xi = sphere_samples(system.d, n, radii=(1.0,), seed=seed)
    return float(np.abs(_sorted_eigvals(system, xi)).max())


def required_box_length(system, t_max, radius, margin):
    return 2.0 * (max_speed(system) * t_max + radius + margin)
