"""Symbols, spectral projectors, hyperbolicity checks and sheet fitting.

A first-order system ``L = d/dt + sum_j A_j d/dx_j`` is described by its
coefficient matrices.  Everything here is a pure function of those
matrices and of frequency vectors ``xi``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import scipy.linalg

from .errors import (
    InputError,
    NotCharacteristicError,
    NotDiagonalizableError,
    NotHyperbolicError,
    SheetError,
    ContractError,
)

CLUSTER_TOL = 1e-8
HERMITIAN_TOL = 1e-12
IMAG_TOL = 1e-8
COND_MAX = 1e8
RANK_RATIO = 1e-8
# Below this the Hessian is treated as identically zero; finite-difference
# noise at the default step sits near 1e-10.
FLAT_ABS_TOL = 1e-7


SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["d", "k", "matrices"],
    "properties": {
        "name": {"type": "string"},
        "d": {"type": "integer", "minimum": 2},
        "k": {"type": "integer", "minimum": 1},
        "symmetric": {"type": "boolean"},
        "matrices": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["re"],
                "properties": {
                    "re": {"type": "array", "items": {"type": "number"}},
                    "im": {"type": "array", "items": {"type": "number"}},
                },
            },
        },
    },
}


@dataclass(frozen=True, eq=False)
class HyperbolicSystem:
    """Coefficient matrices ``A[j]`` of shape ``(d, k, k)``."""

    A: np.ndarray
    symmetric: bool = False
    name: str = ""

    def __post_init__(self):
        A = np.array(self.A)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise InputError(f"expected A of shape (d, k, k), got {A.shape}")
        if A.shape[0] < 2:
            raise InputError("spatial dimension d must be at least 2")
        if np.iscomplexobj(A) and np.abs(A.imag).max(initial=0.0) == 0.0:
            A = A.real
        A = A.astype(complex if np.iscomplexobj(A) else float)
        if not np.all(np.isfinite(A)):
            raise InputError("coefficient matrices must be finite")
        herm = all(_is_hermitian(a) for a in A)
        if self.symmetric and not herm:
            raise InputError("system flagged symmetric but some A_j is not Hermitian")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "_hermitian", herm)

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def k(self):
        return self.A.shape[1]

    @property
    def hermitian(self):
        return self._hermitian

    def __repr__(self):
        return f"HyperbolicSystem(name={self.name!r}, d={self.d}, k={self.k})"


def _is_hermitian(a):
    return np.abs(a - a.conj().T).max(initial=0.0) <= HERMITIAN_TOL * max(1.0, np.abs(a).max())


def system_from_dict(data):
    """Build a system from the JSON layout documented in the README."""
    try:
        jsonschema.validate(data, SYSTEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InputError(f"invalid system definition: {exc.message}") from exc
    d, k = data["d"], data["k"]
    if len(data["matrices"]) != d:
        raise InputError(f"expected {d} matrices, found {len(data['matrices'])}")
    mats = []
    for m in data["matrices"]:
        re = np.asarray(m["re"], dtype=float)
        im = np.asarray(m.get("im", np.zeros(k * k)), dtype=float)
        if re.size != k * k or im.size != k * k:
            raise InputError(f"each matrix needs {k * k} row-major entries")
        mats.append((re + 1j * im).reshape(k, k))
    return HyperbolicSystem(np.array(mats), bool(data.get("symmetric", False)),
                            data.get("name", ""))


def system_to_dict(system):
    mats = []
    for a in system.A:
        a = np.asarray(a, dtype=complex)
        entry = {"re": a.real.ravel().tolist()}
        if np.any(a.imag != 0):
            entry["im"] = a.imag.ravel().tolist()
        mats.append(entry)
    return {"name": system.name, "d": system.d, "k": system.k,
            "symmetric": bool(system.symmetric), "matrices": mats}


def load_system(path):
    with open(path) as fh:
        return system_from_dict(json.load(fh))


def save_system(system, path):
    Path(path).write_text(json.dumps(system_to_dict(system), indent=2) + "\n")


def builtin_system(name):
    """Reference systems used throughout the tests and default configs.

    ``S1``: d=2, k=2, A1 = diag(0, 1), A2 = [[0, 1], [1, 0]]; curved sheet.
    ``S2``: 2-D acoustics with the pressure-like component decoupled along
    x1, giving a flat sheet through (1, 0).
    """
    key = name.upper()
    if key == "S1":
        A = [np.diag([0.0, 1.0]), np.array([[0.0, 1.0], [1.0, 0.0]])]
    elif key == "S2":
        A1 = np.zeros((3, 3))
        A1[0, 1] = A1[1, 0] = 1.0
        A2 = np.zeros((3, 3))
        A2[0, 2] = A2[2, 0] = 1.0
        A = [A1, A2]
    else:
        raise InputError(f"unknown builtin system {name!r}")
    return HyperbolicSystem(np.array(A), True, key)


def assemble_symbol(system, xi):
    """``A(xi) = sum_j A_j xi_j``; ``xi`` may carry leading batch axes."""
    xi = np.asarray(xi)
    if xi.ndim == 0 or xi.shape[-1] != system.d:
        raise InputError(f"xi must have trailing dimension {system.d}, got shape {xi.shape}")
    return np.tensordot(xi, system.A, axes=([-1], [0]))


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    projectors: np.ndarray
    multiplicities: np.ndarray

    def reconstruct(self):
        return np.einsum("m,mij->ij", self.eigenvalues, self.projectors)

    def residuals(self, A):
        """Completeness, orthogonality and reconstruction errors."""
        k = self.projectors.shape[-1]
        comp = np.abs(self.projectors.sum(axis=0) - np.eye(k)).max()
        orth = 0.0
        for i in range(len(self.eigenvalues)):
            for j in range(len(self.eigenvalues)):
                if i != j:
                    orth = max(orth, np.abs(self.projectors[i] @ self.projectors[j]).max())
        rec = np.abs(A - self.reconstruct()).max()
        return comp, orth, rec


def _eig_with_inverse(system, M, xi):
    if system.hermitian:
        w, V = np.linalg.eigh(M)
        return w, V, V.conj().T
    w, V = np.linalg.eig(M)
    scale = max(1.0, np.abs(w).max(initial=0.0))
    if np.abs(w.imag).max(initial=0.0) > IMAG_TOL * scale:
        raise NotHyperbolicError(xi, f"(max |Im lambda| = {np.abs(w.imag).max():.3g})")
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise NotDiagonalizableError(xi, cond)
    order = np.argsort(w.real)
    w, V = w.real[order], V[:, order]
    return w, V, np.linalg.inv(V)


def spectral_decompose(system, xi, cluster_tol=CLUSTER_TOL):
    """Distinct real eigenvalues of ``A(xi)`` with their spectral projectors.

    Eigenvalues closer than ``cluster_tol`` times the spectral radius are
    merged into one projector.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (system.d,):
        raise InputError(f"xi must have shape ({system.d},), got {xi.shape}")
    if not np.all(np.isfinite(xi)):
        raise InputError("xi must be finite")
    M = assemble_symbol(system, xi)
    w, V, W = _eig_with_inverse(system, M, xi)
    tol = cluster_tol * np.abs(w).max(initial=0.0)
    groups = [[0]]
    for i in range(1, len(w)):
        if w[i] - w[groups[-1][-1]] > tol:
            groups.append([i])
        else:
            groups[-1].append(i)
    vals = np.array([w[g].mean() for g in groups])
    projs = np.array([V[:, g] @ W[g, :] for g in groups])
    if np.isrealobj(M) and np.abs(projs.imag).max(initial=0.0) < 1e-14:
        projs = projs.real
    mults = np.array([len(g) for g in groups])
    return SpectralDecomposition(vals, projs, mults)


def propagator(system, xi, t):
    """``exp(i t A(xi))`` assembled from the spectral projectors."""
    sd = spectral_decompose(system, xi)
    return np.einsum("m,mij->ij", np.exp(1j * t * sd.eigenvalues), sd.projectors)


def sphere_samples(d, n, radii=(0.1, 1.0, 10.0), seed=0):
    """Random directions on the unit sphere, scaled cyclically by ``radii``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * np.resize(np.asarray(radii, dtype=float), n)[:, None]


@dataclass
class HyperbolicityReport:
    conditionA: bool
    conditionB_sup: float
    kreiss_sup: float
    n_samples: int
    failures: list = field(default_factory=list)
    note: str = "sampled estimate, not a proof"

    def as_dict(self):
        return {"conditionA": self.conditionA, "conditionB_sup": self.conditionB_sup,
                "kreiss_sup": self.kreiss_sup, "n_samples": self.n_samples,
                "failures": self.failures[:10], "note": self.note}


def verify_strong_hyperbolicity(system, samples=None, n=500, seed=0):
    """Sample conditions A/B and the exponential bound on a set of ``xi``."""
    if samples is None:
        samples = sphere_samples(system.d, n, seed=seed)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise InputError("need at least one sample")
    cond_a, bsup, ksup, failures = True, 0.0, 0.0, []
    for xi in samples:
        try:
            sd = spectral_decompose(system, xi)
        except (NotHyperbolicError, NotDiagonalizableError) as exc:
            cond_a = False
            failures.append({"xi": xi.tolist(), "reason": str(exc)})
            E = scipy.linalg.expm(1j * assemble_symbol(system, xi))
            ksup = max(ksup, np.linalg.norm(E, 2))
            continue
        bsup = max(bsup, max(np.linalg.norm(p, 2) for p in sd.projectors))
        E = np.einsum("m,mij->ij", np.exp(1j * sd.eigenvalues), sd.projectors)
        ksup = max(ksup, np.linalg.norm(E, 2))
    return HyperbolicityReport(cond_a, float(bsup), float(ksup), len(samples), failures)


def symbol_eigensystem(system, xis):
    """Batched eigen-decomposition ``A(xi) = V diag(lam) V^{-1}`` over ``xis``.

    Returns ``(lam, V, Vinv)`` with eigenvalues sorted ascending per mode.
    """
    M = assemble_symbol(system, xis)
    if system.hermitian:
        lam, V = np.linalg.eigh(M)
        return lam, V, np.conj(np.swapaxes(V, -1, -2))
    w, V = np.linalg.eig(M)
    scale = np.maximum(1.0, np.abs(w).max(axis=-1, initial=0.0))
    bad = np.abs(w.imag).max(axis=-1) > IMAG_TOL * scale
    if np.any(bad):
        raise NotHyperbolicError(np.asarray(xis)[bad][0])
    cond = np.linalg.cond(V)
    if np.any(~np.isfinite(cond) | (cond > COND_MAX)):
        i = np.flatnonzero(~np.isfinite(cond.ravel()) | (cond.ravel() > COND_MAX))[0]
        raise NotDiagonalizableError(np.asarray(xis).reshape(-1, system.d)[i], cond.ravel()[i])
    order = np.argsort(w.real, axis=-1)
    lam = np.take_along_axis(w.real, order, axis=-1)
    V = np.take_along_axis(V, order[..., None, :], axis=-1)
    return lam, V, np.linalg.inv(V)


def _sorted_eigvals(system, xis):
    M = assemble_symbol(system, xis)
    if system.hermitian:
        return np.linalg.eigvalsh(M)
    return np.sort(np.linalg.eigvals(M).real, axis=-1)


@dataclass(eq=False)
class SheetModel:
    """A simple eigenvalue branch of ``A(xi)`` through ``lambda(1,0,..,0) = 0``.

    ``value(xi)`` tracks the branch on the double cone of half-angle
    ``cone_halfangle`` about ``+-e1``; on the ``xi1 < 0`` half it uses
    ``lambda(-xi) = -lambda(xi)``.
    """

    system: HyperbolicSystem
    index: int
    v: np.ndarray
    hessian: np.ndarray
    rank: int
    rank_class: str
    cone_halfangle: float
    gap: float
    stencil_radius: float
    checks: dict = field(default_factory=dict)

    @property
    def direction(self):
        e = np.zeros(self.system.d)
        e[0] = 1.0
        return e

    @property
    def Q(self):
        return 0.5 * self.hessian

    @property
    def value_fn(self):
        return self.value

    def _fold(self, xi):
        xi = np.asarray(xi, dtype=float)
        s = np.where(xi[..., 0] < 0, -1.0, 1.0)
        return s, xi * s[..., None]

    def value(self, xi):
        s, y = self._fold(xi)
        return s * _sorted_eigvals(self.system, y)[..., self.index]

    def lam1(self, eta):
        """``lambda(1, eta)`` for transverse ``eta`` of shape ``(..., d-1)``."""
        eta = np.asarray(eta, dtype=float)
        if self.system.d == 2 and (eta.ndim == 0 or eta.shape[-1] != 1):
            eta = eta[..., None]
        xi = np.concatenate([np.ones(eta.shape[:-1] + (1,)), eta], axis=-1)
        return self.value(xi)

    def _branch_vectors(self, y):
        lam, V, Vinv = symbol_eigensystem(self.system, y)
        r = V[..., :, self.index]
        lt = Vinv[..., self.index, :]
        return r, lt

    def gradient(self, xi):
        """Group-velocity field ``grad lambda(xi)`` by Hellmann-Feynman."""
        _, y = self._fold(xi)
        r, lt = self._branch_vectors(y)
        g = np.einsum("...i,jik,...k->...j", lt, self.system.A, r)
        return np.real(g / np.einsum("...i,...i->...", lt, r)[..., None])

    def projector(self, xi):
        """Spectral projector of the branch, ``pi(-xi) = pi(xi)``."""
        _, y = self._fold(xi)
        r, lt = self._branch_vectors(y)
        P = r[..., :, None] * lt[..., None, :] / np.einsum("...i,...i->...", lt, r)[..., None, None]
        return P

    def angle(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.arctan2(np.linalg.norm(xi[..., 1:], axis=-1), np.abs(xi[..., 0]))

    def in_cone(self, xi):
        return self.angle(xi) <= self.cone_halfangle


def richardson_derivatives(fn, point, h):
    """Gradient and Hessian of a scalar ``fn`` at ``point``.

    Central differences at steps ``h`` and ``h/2`` combined by Richardson
    extrapolation, so both are fourth-order accurate.  ``fn`` must accept a
    stack of points of shape ``(n, d)``.
    """
    p = np.asarray(point, dtype=float)
    d = p.size
    E = np.eye(d)

    def stencil(step):
        pts = [p]
        for i in range(d):
            pts += [p + step * E[i], p - step * E[i]]
        for i in range(d):
            for j in range(i + 1, d):
                pts += [p + step * (E[i] + E[j]), p + step * (E[i] - E[j]),
                        p - step * (E[i] - E[j]), p - step * (E[i] + E[j])]
        vals = fn(np.array(pts))
        f0 = vals[0]
        g = np.zeros(d)
        H = np.zeros((d, d))
        for i in range(d):
            fp, fm = vals[1 + 2 * i], vals[2 + 2 * i]
            g[i] = (fp - fm) / (2 * step)
            H[i, i] = (fp - 2 * f0 + fm) / step**2
        c = 1 + 2 * d
        for i in range(d):
            for j in range(i + 1, d):
                a, b, e, f = vals[c:c + 4]
                H[i, j] = H[j, i] = (a - b - e + f) / (4 * step**2)
                c += 4
        return g, H

    g1, H1 = stencil(h)
    g2, H2 = stencil(h / 2)
    return (4 * g2 - g1) / 3, (4 * H2 - H1) / 3


def _cone_directions(d, n_rays, seed=0):
    if d == 2:
        return np.array([[1.0], [-1.0]])
    if d == 3:
        a = np.linspace(0, 2 * np.pi, n_rays, endpoint=False)
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    w = np.random.default_rng(seed).standard_normal((n_rays, d - 1))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def fit_sheet(system, cone_halfangle=0.5, stencil_radius=1e-3, n_steps=64, n_rays=16):
    """Fit the eigenvalue branch through ``lambda(1,0,..,0) = 0``.

    Verifies by ray continuation that the branch stays simple on the cone,
    then computes ``v`` and the transverse Hessian by Richardson-extrapolated
    central differences.
    """
    if not 0 < cone_halfangle < np.pi / 2:
        raise InputError("cone_halfangle must lie in (0, pi/2)")
    d = system.d
    e1 = np.zeros(d)
    e1[0] = 1.0
    sd = spectral_decompose(system, e1)
    scale = max(1.0, np.abs(sd.eigenvalues).max())
    zero = np.flatnonzero(np.abs(sd.eigenvalues) <= 1e-9 * scale)
    if zero.size == 0:
        raise NotCharacteristicError("hyperplane not characteristic: A1 is invertible")
    z = zero[0]
    if sd.multiplicities[z] != 1:
        raise SheetError(e1, "(zero eigenvalue of A1 is not simple)")
    index = int(sd.multiplicities[:z].sum())
    others = np.delete(sd.eigenvalues, z)
    gap = float(np.abs(others).min()) if others.size else np.inf

    # ray continuation with nearest-eigenvalue matching
    dirs = _cone_directions(d, n_rays)
    alphas = np.linspace(0.0, cone_halfangle, n_steps + 1)[1:]
    pts = np.concatenate([np.cos(alphas)[None, :, None] * np.ones((len(dirs), 1, 1)),
                          np.sin(alphas)[None, :, None] * dirs[:, None, :]], axis=2)
    lam, V, _ = symbol_eigensystem(system, pts)
    prev = np.zeros(len(dirs))
    _, V0, _ = symbol_eigensystem(system, e1[None])
    prev_vec = np.repeat(V0[:, :, index], len(dirs), axis=0)
    min_gap = gap
    for s in range(n_steps):
        w = lam[:, s, :]
        dist = np.abs(w - prev[:, None])
        order = np.argsort(dist, axis=1)
        j = order[:, 0]
        if system.k > 1:
            j2 = order[:, 1]
            near_tie = dist[np.arange(len(dirs)), j2] < 1.1 * dist[np.arange(len(dirs)), j]
            if np.any(near_tie):
                vecs = V[:, s]
                ov1 = np.abs(np.einsum("ri,ri->r", prev_vec.conj(), vecs[np.arange(len(dirs)), :, j]))
                ov2 = np.abs(np.einsum("ri,ri->r", prev_vec.conj(), vecs[np.arange(len(dirs)), :, j2]))
                j = np.where(near_tie & (ov2 > ov1), j2, j)
        bad = j != index
        if np.any(bad):
            r = np.flatnonzero(bad)[0]
            raise SheetError(pts[r, s], "(branch changed position in the spectrum)")
        if system.k > 1:
            sel = w[:, index]
            rest = np.delete(w, index, axis=1)
            g = np.abs(rest - sel[:, None]).min(axis=1)
            if np.any(g < 1e-6 * scale):
                r = np.argmin(g)
                raise SheetError(pts[r, s], "(eigenvalue collision)")
            min_gap = min(min_gap, float(g.min()))
        prev = w[np.arange(len(dirs)), index]
        prev_vec = V[np.arange(len(dirs)), s, :, index]

    sheet = SheetModel(system, index, np.zeros(d), np.zeros((d - 1, d - 1)), 0, "flat",
                       float(cone_halfangle), float(min_gap), float(stencil_radius))
    grad, H = richardson_derivatives(sheet.value, e1, stencil_radius)
    sheet.v = grad
    sheet.hessian = H[1:, 1:]
    sv = np.linalg.svd(sheet.hessian, compute_uv=False)
    if sv.max(initial=0.0) <= FLAT_ABS_TOL:
        rank = 0
    else:
        rank = int(np.sum(sv > RANK_RATIO * sv.max()))
    sheet.rank = rank
    if rank == 0:
        sheet.rank_class = "flat"
    elif rank == d - 1:
        sheet.rank_class = "maximal"
    else:
        sheet.rank_class = f"intermediate({rank})"
    sheet.checks = _sheet_checks(sheet)
    return sheet


def _sheet_checks(sheet, tol=1e-8):
    d = sheet.system.d
    e1 = sheet.direction
    rng = np.random.default_rng(1)
    w = rng.standard_normal((20, d - 1))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    ang = rng.uniform(0, sheet.cone_halfangle, 20)
    xi = np.concatenate([np.cos(ang)[:, None], np.sin(ang)[:, None] * w], axis=1)
    base = sheet.value(xi)
    homog = 0.0
    for s in (0.5, 2.0, 10.0):
        homog = max(homog, np.abs(sheet.value(s * xi) - s * base).max() / s)
    lam0 = abs(float(sheet.value(e1)))
    checks = {
        "homogeneity": float(homog),
        "normalization": lam0,
        "euler": abs(float(sheet.v[0]) - lam0),
        "v1": abs(float(sheet.v[0])),
    }
    failed = [k for k, val in checks.items() if val > tol]
    if failed:
        raise ContractError(f"sheet invariants violated: {failed} ({checks})")
    return checks


@dataclass(frozen=True)
class ParaxialForm:
    """Quadratic form ``Q(xi', xi') = xi'^T Q xi'`` over transverse frequencies."""

    matrix: np.ndarray

    def __call__(self, xp):
        xp = np.asarray(xp, dtype=float)
        if self.matrix.shape[0] == 1 and (xp.ndim == 0 or xp.shape[-1] != 1):
            xp = xp[..., None]
        return np.einsum("...i,ij,...j->...", xp, self.matrix, xp)


def paraxial_form(sheet):
    return ParaxialForm(np.array(sheet.Q, dtype=float))
