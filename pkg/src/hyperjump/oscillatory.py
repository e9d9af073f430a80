"""Oscillatory integrals behind the boundedness argument.

Everything here is direct quadrature: Gauss-Kronrod panels whose phase
increment stays below ``pi``, with integration-by-parts endpoint
expansions where the phase runs off to infinity.  Profile integrals are
restricted to ``d = 2`` (one transverse frequency).

The profile integral is

    u(t, x) = PV int chi(xi) phi(xi1) a(xi') / xi1 * exp(i (x.xi + t lambda(xi))) dxi,

taken exactly as written (no ``(2 pi)^-d`` factor).  Pairing ``xi1`` with
``-xi1`` at fixed ``xi'`` and writing ``lambda(xi) = v'.xi' + xi1 G(xi'/xi1)``
turns it into

    int a(xi') e^{i (x' + t v').xi'} int_0^inf chi phi / xi1
        [e^{i (x1 xi1 + t xi1 G(eta))} - e^{-i (x1 xi1 + t xi1 G(-eta))}] dxi1 dxi',

with ``eta = xi'/xi1``; each inner integral converges on its own.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import Chebyshev

from ._stencils import smoothstep
from .errors import AccuracyError, InputError, StationaryRayError
from .spectral_solver import GridField, GridSpec, PolyGauss, scalar_evolve

# Kronrod 15 / Gauss 7 on [-1, 1]
_XK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                0.207784955007898467600689403773245, 0.0])
_WK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])
GK_X = np.concatenate([-_XK[:-1], _XK[::-1]])
GK_WK = np.concatenate([_WK[:-1], _WK[::-1]])
GK_WG = np.zeros(15)
GK_WG[1:7:2] = _WG[:3]
GK_WG[7] = _WG[3]
GK_WG[9:14:2] = _WG[2::-1]

CHUNK = 250_000
MAX_REFINE = 3


def gk_nodes(lo, hi):
    """Nodes and Kronrod/Gauss weights for panels ``[lo, hi]``; shapes ``(P, 15)``."""
    lo = np.asarray(lo, dtype=float)[:, None]
    hi = np.asarray(hi, dtype=float)[:, None]
    half = 0.5 * (hi - lo)
    return lo + half * (GK_X + 1.0), half * GK_WK, half * GK_WG


def gk_integrate(fn, edges):
    """Integrate ``fn`` over the panels ``edges``; returns ``(value, |K - G|)``."""
    edges = np.asarray(edges, dtype=float)
    x, wk, wg = gk_nodes(edges[:-1], edges[1:])
    f = fn(x)
    return np.sum(wk * f), np.sum(np.abs(np.sum((wk - wg) * f, axis=1)))


def _ragged_integrate(edges_list, fn, params):
    """Integrate ``fn(x, p)`` per owner over ragged panel lists.

    ``edges_list[i]`` are panel edges for owner ``i`` and ``params`` holds
    per-owner arrays passed to ``fn`` broadcast against the nodes.  Returns
    per-owner values and Kronrod-Gauss error estimates.
    """
    n = len(edges_list)
    counts = np.array([len(e) - 1 for e in edges_list])
    lo = np.concatenate([e[:-1] for e in edges_list])
    hi = np.concatenate([e[1:] for e in edges_list])
    owner = np.repeat(np.arange(n), counts)
    val = np.zeros(n, dtype=complex)
    err = np.zeros(n)
    for s in range(0, lo.size, CHUNK):
        sl = slice(s, s + CHUNK)
        x, wk, wg = gk_nodes(lo[sl], hi[sl])
        own = owner[sl]
        p = {k: v[own][:, None] for k, v in params.items()}
        f = fn(x, p)
        pk = np.sum(wk * f, axis=1)
        pe = np.abs(np.sum((wk - wg) * f, axis=1))
        val += np.bincount(own, pk.real, n) + 1j * np.bincount(own, pk.imag, n)
        err += np.bincount(own, pe, n)
    return val, err


def _invert_monotone(fn, lo, hi, targets, iters=80):
    """Solve ``fn(u) = targets`` on ``[lo, hi]`` for monotone ``fn`` by bisection."""
    targets = np.asarray(targets, dtype=float)
    a = np.full(targets.shape, lo, dtype=float)
    b = np.full(targets.shape, hi, dtype=float)
    inc = fn(hi) >= fn(lo)
    for _ in range(iters):
        m = 0.5 * (a + b)
        above = (fn(m) >= targets) if inc else (fn(m) <= targets)
        b = np.where(above, m, b)
        a = np.where(above, a, m)
    return 0.5 * (a + b)


def _phase_edges(psi, lo, hi, max_width, max_panels, step=np.pi / 2):
    """Panel edges on ``[lo, hi]`` at phase multiples of ``step`` (``psi`` monotone)."""
    p0, p1 = psi(lo), psi(hi)
    n = int(np.floor(abs(p1 - p0) / step))
    if n > max_panels:
        raise AccuracyError(f"{n} phase panels exceed the cap {max_panels}", achieved=np.inf)
    inner = _invert_monotone(psi, lo, hi, p0 + np.sign(p1 - p0) * step * np.arange(1, n + 1)) if n else []
    e = np.unique(np.concatenate([[lo, hi], inner, np.linspace(lo, hi, int(np.ceil((hi - lo) / max_width)) + 1)]))
    return e


# ---------------------------------------------------------------- Van der Corput integral

def _corput_derivs(x, lam, k, u, n):
    """``d^n/du^n`` of ``x e^u + lam e^{-k u}``."""
    return x * np.exp(u) + lam * (-k) ** n * np.exp(-k * u)


def _corput_antideriv(x, lam, k, u):
    """Endpoint expansion of ``int sin(psi) du`` and its error term ``|h3|``."""
    d1, d2, d3, d4 = (_corput_derivs(x, lam, k, u, n) for n in (1, 2, 3, 4))
    psi = _corput_derivs(x, lam, k, u, 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return _expansion(psi, d1, d2, d3, d4)


def _expansion(psi, d1, d2, d3, d4):
    h0 = 1.0 / d1
    h1 = -d2 / d1**3
    h2 = -d3 / d1**4 + 3 * d2**2 / d1**5
    h3 = -d4 / d1**5 + 10 * d2 * d3 / d1**6 - 15 * d2**3 / d1**7
    c, s = np.cos(psi), np.sin(psi)
    return -c * h0 + s * h1 + c * h2 - s * h3, np.nan_to_num(np.abs(h3), nan=np.inf)


def corput_integral(x, Lam, k, interval, tol=1e-8, max_panels=200_000, return_error=False):
    """``int_a^b sin(x eta + Lam / eta^k) / eta d eta`` over ``interval = (a, b)``.

    Computed in ``u = ln eta``.  The interval is split where ``|psi'|`` is
    smallest; each monotone piece gets panels with phase increments of at
    most ``pi`` until an endpoint expansion is accurate enough to finish it.
    """
    a, b = (float(v) for v in interval)
    if not 0 < a < b < np.inf:
        raise InputError("interval must satisfy 0 < a < b < inf")
    if k <= 0:
        raise InputError("k must be positive")
    x, Lam, k = float(x), float(Lam), float(k)
    if x == 0 and Lam == 0:
        return (0.0, 0.0) if return_error else 0.0
    u0, u1 = np.log(a), np.log(b)
    cuts = [u0, u1]
    for num in (k * Lam, -k * k * Lam):
        if x != 0 and num / x > 0:
            uc = np.log(num / x) / (1 + k)
            if u0 < uc < u1:
                cuts.append(uc)
    cuts = np.sort(cuts)
    psi = lambda u: _corput_derivs(x, Lam, k, u, 0)
    dpsi = lambda u: _corput_derivs(x, Lam, k, u, 1)
    total, err = 0.0, 0.0
    budget = tol / (4 * len(cuts))
    for p, q in zip(cuts[:-1], cuts[1:]):
        # start where |psi'| is small, march toward the other end
        start, end = (p, q) if abs(dpsi(p)) <= abs(dpsi(q)) else (q, p)
        scan = np.linspace(start, end, 400)
        _, eh = _corput_antideriv(x, Lam, k, scan)
        ok = eh <= budget
        bad = np.nonzero(~ok)[0]
        if bad.size == 0:
            c = start
        elif bad[-1] == scan.size - 1:
            c = end
        else:
            c = scan[bad[-1] + 1]
        if c != start:
            lo, hi = min(start, c), max(start, c)
            e = _phase_edges(psi, lo, hi, 0.5, max_panels)
            v, ev = gk_integrate(lambda u: np.sin(psi(u)), e)
            total += v
            err += ev
        if c != end:
            Fe, he = _corput_antideriv(x, Lam, k, end)
            Fc, hc = _corput_antideriv(x, Lam, k, c)
            sgn = 1.0 if end > c else -1.0
            total += sgn * (Fe - Fc)
            err += he + hc
    if err > tol:
        raise AccuracyError(f"corput_integral reached {err:.3g} > tol {tol:.3g}", achieved=err)
    return (float(total), float(err)) if return_error else float(total)


def hill_sum_bound():
    """``3 int_0^pi sin(v)/v dv``, the alternating-hill bound."""
    from scipy.special import sici
    return 3.0 * sici(np.pi)[0]


@dataclass
class CorputSweep:
    """Random ``(x, Lam, interval)`` draws at one ``k`` and the band maxima."""

    k: float
    x: np.ndarray
    Lam: np.ndarray
    a: np.ndarray
    b: np.ndarray
    values: np.ndarray
    errors: np.ndarray

    def band_max(self, lo, hi):
        sel = (np.abs(self.Lam) >= lo) & (np.abs(self.Lam) <= hi)
        return float(np.abs(self.values[sel]).max()) if sel.any() else float("nan")

    def growth_ratio(self, low=(1.0, 1e3), high=(1e3, 1e6)):
        """Max over the high ``|Lam|`` band divided by the max over the low band."""
        return self.band_max(*high) / self.band_max(*low)

    def columns(self):
        return {"x": self.x, "Lambda": self.Lam, "a": self.a, "b": self.b,
                "value": self.values, "error": self.errors}


def corput_sweep(k, draws, rng, x_log10=(-3, 3), lambda_log10=(-3, 6), a_log10=(-3, 1),
                 span_log10=(0.3, 4), tol=1e-8):
    """Evaluate ``corput_integral`` on log-uniform draws with random signs.

    Intervals are ``(a, a * 10**s)`` with ``log10 a`` and ``s`` uniform in
    the given ranges.
    """
    sx = rng.choice([-1.0, 1.0], draws) * 10 ** rng.uniform(*x_log10, draws)
    sl = rng.choice([-1.0, 1.0], draws) * 10 ** rng.uniform(*lambda_log10, draws)
    a = 10 ** rng.uniform(*a_log10, draws)
    b = a * 10 ** rng.uniform(*span_log10, draws)
    out = np.array([corput_integral(xi, li, k, (ai, bi), tol=tol, return_error=True)
                    for xi, li, ai, bi in zip(sx, sl, a, b)])
    return CorputSweep(float(k), sx, sl, a, b, out[:, 0], out[:, 1])


def hill_sum_check(rng, draws=200, tol=1e-9):
    """``|int_K sin v / v dv|`` over random intervals ``K`` (``corput_integral`` at ``Lam = 0``).

    Compare against ``hill_sum_bound``.
    """
    lo = 10 ** rng.uniform(-3, 3, draws)
    hi = lo * 10 ** rng.uniform(0, 3, draws)
    return np.array([abs(corput_integral(1.0, 0.0, 1.0, (a, b), tol=tol)) for a, b in zip(lo, hi)])


def parity_check(cutoff, rng, draws=50, M=20.0, tol=1e-8):
    """Largest gap between the two-sided and the sin form of the inner integral."""
    gaps = []
    for _ in range(draws):
        x1 = rng.uniform(-10, 10)
        lam = rng.uniform(-50, 50)
        xi2 = rng.uniform(-1, 1)
        a = inner_limit_integral(x1, lam, xi2, cutoff, M, form="sin", tol=tol)
        b = inner_limit_integral(x1, lam, xi2, cutoff, M, form="two_sided", tol=tol)
        gaps.append(abs(a - b))
    return float(max(gaps))


# ---------------------------------------------------------------- phases and profiles

@dataclass
class Phase:
    """``psi(xi) = x.xi + t lambda(xi)`` for a sheet (or any ``value``/``gradient`` symbol)."""

    symbol: object
    t: float
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)

    def value(self, xi):
        xi = np.asarray(xi, dtype=float)
        return xi @ self.x + self.t * self.symbol.value(xi)

    def gradient(self, xi):
        return self.x + self.t * self.symbol.gradient(np.asarray(xi, dtype=float))

    def is_stationary(self, xi, rtol=1e-8):
        g = np.linalg.norm(self.gradient(xi), axis=-1)
        return g <= rtol * (abs(self.t) + np.linalg.norm(self.x))

    def min_gradient(self, theta_max, n=721):
        """Smallest ``|grad psi|`` over unit directions within ``theta_max`` of ``+-e1``."""
        if self.x.size != 2:
            raise InputError("direction scan implemented for d = 2")
        th = np.linspace(-theta_max, theta_max, n)
        xi = np.stack([np.cos(th), np.sin(th)], axis=-1)
        g = np.linalg.norm(self.gradient(xi), axis=-1)
        i = int(np.argmin(g))
        return float(g[i]), xi[i]


@dataclass
class ProfileSpec:
    """Cutoffs plus the transverse amplitude ``a(xi')`` (Gaussian times polynomial).

    ``band = (b0, b1)`` multiplies by a smooth taper that is 1 for
    ``|xi1| <= b0`` and 0 for ``|xi1| >= b1``; used to compare against the
    grid route, which cannot represent the untruncated ``1/xi1`` tail.
    """

    cutoff: object
    amplitude: PolyGauss = field(default_factory=lambda: PolyGauss([1.0], 1.0))
    band: tuple = None

    def a(self, xi2):
        return self.amplitude(xi2)

    def taper(self, xi1):
        if self.band is None:
            return np.ones_like(np.asarray(xi1, dtype=float))
        b0, b1 = self.band
        return 1.0 - smoothstep((np.abs(xi1) - b0) / (b1 - b0))

    def radius(self, rel=1e-17):
        return self.amplitude.radius(rel)

    def check_decay(self, n=2001):
        """``sup |a| (1 + |xi'|)^8`` on samples; finite for a Schwartz amplitude."""
        s = np.linspace(-4 * self.radius(), 4 * self.radius(), n)
        return float(np.max(np.abs(self.a(s)) * (1 + np.abs(s)) ** 8))

    def datum(self, xi):
        """``chi phi a / xi1`` times the taper on frequency points ``(..., 2)``; zero at ``xi1 = 0``."""
        xi = np.asarray(xi, dtype=float)
        x1 = xi[..., 0]
        safe = np.where(x1 == 0, 1.0, x1)
        val = self.cutoff.chi(xi) * self.cutoff.phi(x1) * self.a(xi[..., 1]) * self.taper(x1) / safe
        return np.where(x1 == 0, 0.0, val)

    def as_dict(self):
        return {"cutoff": {"theta_N": self.cutoff.theta_N, "theta_N1": self.cutoff.theta_N1,
                           "floor": list(self.cutoff.floor)},
                "amplitude": self.amplitude.as_dict(), "band": None if self.band is None else list(self.band)}


class _TransverseModel:
    """``G(eta) = lambda(1, eta) - v'.eta`` as a Chebyshev interpolant on ``|eta| <= eta_max``."""

    def __init__(self, G, eta_max, exact_poly=False):
        dom = [-eta_max, eta_max]
        if exact_poly:
            self.G = G
        else:
            for deg in (24, 40, 64, 96, 128):
                cheb = Chebyshev.interpolate(G, deg, domain=dom)
                s = np.linspace(*dom, 1001)
                ref = G(s)
                if np.max(np.abs(cheb(s) - ref)) <= 1e-13 * max(1.0, np.max(np.abs(ref))):
                    break
            self.G = cheb
        self.dG = self.G.deriv()
        self.d2G = self.dG.deriv()
        s = np.linspace(*dom, 2001)
        s = s[s != 0]
        if exact_poly:
            self.Gq = Chebyshev.fit(s, self.G(s) / s, 8, domain=dom)
        else:
            self.Gq = Chebyshev.interpolate(lambda e: self.G(e) / e, 2 * (self.G.degree() // 2) + 1, domain=dom)
        self.gq_max = float(np.max(np.abs(self.Gq(s))))
        self.dG_max = float(np.max(np.abs(self.dG(s))))
        self.slope_c2 = float(np.max(np.abs((self.G(s) - s * self.dG(s)) / s**2)))
        self.eta_max = eta_max


def _exact_model(sheet, eta_max):
    v2 = float(sheet.v[1])
    return _TransverseModel(lambda e: sheet.lam1(e) - v2 * e, eta_max)


def _paraxial_model(Q, eta_max):
    q = float(np.asarray(getattr(Q, "matrix", Q), dtype=float).reshape(-1)[0])
    return _TransverseModel(Chebyshev.fit([-eta_max, 0, eta_max], [q * eta_max**2, 0, q * eta_max**2], 2,
                                          domain=[-eta_max, eta_max]), eta_max, exact_poly=True)


def _inner_rho(m, s, t, model, profile, refine):
    """Inner integrals at ``x1 = 0`` in ``rho = |xi2| / xi1``."""
    cut = profile.cutoff
    tn = np.tan(cut.theta_N)
    edges = []
    for mi in m:
        rmax = min(mi, tn)
        n = int(refine * (np.ceil(t * mi * model.gq_max / np.pi) + 24))
        if profile.band is None:
            edges.append(np.linspace(0.0, rmax, n + 1))
        else:
            b0, b1 = profile.band
            r_lo, r_mid = mi / b1, min(mi / b0, rmax)
            edges.append(np.concatenate([np.linspace(r_lo, r_mid, 16 * refine + 1),
                                         np.linspace(r_mid, rmax, n + 1)[1:]]))

    def fn(r, p):
        mm, ss = p["m"], p["s"]
        x1 = mm / r
        amp = cut.chi_ratio(r) * cut.phi(x1) * profile.taper(x1) / r
        ap = t * mm * ss * model.Gq(ss * r)
        am = -t * mm * ss * model.Gq(-ss * r)
        return amp * (np.exp(1j * ap) - np.exp(-1j * am))

    return _ragged_integrate(edges, fn, {"m": m, "s": s})


def _inner_xi1(m, s, t, x1, model, profile, refine):
    """Inner integrals at ``x1 != 0`` in ``xi1``.

    Panels run up to a point ``X`` beyond which the amplitude is exactly
    ``1/xi1`` and ``x1`` dominates the phase speed; the rest is integrated
    along a rotated contour (see ``_xi1_tail``).  With a band taper the range
    is finite and no tail is needed.
    """
    cut = profile.cutoff
    tn, tn1 = np.tan(cut.theta_N), np.tan(cut.theta_N1)
    ax = abs(x1)
    edges = []
    ends = np.empty(m.size)
    for i, mi in enumerate(m):
        lo = max(cut.floor[0], mi / tn)
        r1 = max(cut.floor[1], mi / tn1) * 1.01
        if profile.band is not None:
            top = profile.band[1]
        else:
            top = max(r1, 5.0 / ax, mi * np.sqrt(4.0 * abs(t) * model.slope_c2 / ax))
        ap_near = ax + abs(t) * model.slope_c2 * (mi / lo) ** 2
        n1 = int(refine * max(24, np.ceil((r1 - lo) * ap_near / (np.pi / 2))))
        segs = [np.linspace(lo, r1, n1 + 1)]
        a0 = r1
        while a0 < top:
            b = min(2 * a0, top)
            ap = ax + abs(t) * model.slope_c2 * (mi / a0) ** 2
            n = int(refine * (np.ceil((b - a0) * ap / (np.pi / 2)) + 4))
            if profile.band is not None and b > profile.band[0]:
                width = profile.band[1] - profile.band[0]
                n = max(n, int(refine * np.ceil(24 * (b - max(a0, profile.band[0])) / width)))
            segs.append(np.linspace(a0, b, n + 1)[1:])
            a0 = b
        edges.append(np.concatenate(segs))
        ends[i] = top

    def fn(k, p):
        mm, ss = p["m"], p["s"]
        eta = ss * mm / k
        amp = cut.chi_ratio(eta) * cut.phi(k) * profile.taper(k) / k
        ap = x1 * k + t * k * model.G(eta)
        am = x1 * k + t * k * model.G(-eta)
        return amp * (np.exp(1j * ap) - np.exp(-1j * am))

    val, err = _ragged_integrate(edges, fn, {"m": m, "s": s})
    if profile.band is None:
        tail, terr = _xi1_tail(ends, s * m, t, x1, model)
        val = val + tail
        err = err + terr
    return val, err


def _laguerre_tail(X, xi2, t, x1, model, n, sgn):
    """``int_X^inf e^{i sgn (x1 k + t k G(sgn xi2/k))} / k dk`` on the rotated ray.

    ``k = X + i sgn sign(x1) y`` makes ``e^{i sgn x1 k}`` decay like
    ``e^{-|x1| y}``; ``G`` is a polynomial, so the rotation is exact.
    """
    z, w = np.polynomial.laguerre.laggauss(n)
    direction = 1j * sgn * np.sign(x1)
    k = X[:, None] + direction * z[None, :] / abs(x1)
    ph = sgn * t * k * model.G(sgn * xi2[:, None] / k)
    g = np.exp(1j * sgn * x1 * X)[:, None] * np.exp(1j * ph) / k
    return direction / abs(x1) * (g @ w)


def _xi1_tail(X, xi2, t, x1, model):
    """Tail ``int_X^inf (1/k)(e^{i a+} - e^{-i a-}) dk`` by Gauss-Laguerre on rotated rays."""
    out = _laguerre_tail(X, xi2, t, x1, model, 40, 1.0) - _laguerre_tail(X, xi2, t, x1, model, 40, -1.0)
    ref = _laguerre_tail(X, xi2, t, x1, model, 64, 1.0) - _laguerre_tail(X, xi2, t, x1, model, 64, -1.0)
    return ref, np.abs(ref - out)


def _profile_integral(t, x1, y2, model, profile, tol, return_error):
    R = profile.radius()
    speed = abs(y2) + abs(t) * model.dG_max
    h = min(0.25, np.pi / max(speed, 1e-12))
    value, err = None, np.inf
    for level in range(MAX_REFINE + 1):
        refine = 2**level
        n = int(np.ceil(R / (h / refine)))
        edges = np.linspace(0.0, R, n + 1)
        x, wk, wg = gk_nodes(edges[:-1], edges[1:])
        xi = np.concatenate([x.ravel(), -x.ravel()])
        wK = np.concatenate([wk.ravel(), wk.ravel()])
        wG = np.concatenate([wg.ravel(), wg.ravel()])
        m, s = np.abs(xi), np.sign(xi)
        if x1 == 0:
            inner, ierr = _inner_rho(m, s, t, model, profile, refine)
        else:
            inner, ierr = _inner_xi1(m, s, t, x1, model, profile, refine)
        g = profile.a(xi) * np.exp(1j * y2 * xi) * inner
        value = np.sum(wK * g)
        outer = np.abs(np.sum(((wK - wG) * g).reshape(2, -1, 15), axis=2)).sum()
        err = outer + np.sum(wK * np.abs(profile.a(xi)) * ierr)
        if err <= tol:
            break
    if err > tol:
        raise AccuracyError(f"profile integral reached {err:.3g} > tol {tol:.3g}", achieved=err)
    return (complex(value), float(err)) if return_error else complex(value)


def _check_d2(sheet_or_d):
    d = getattr(getattr(sheet_or_d, "system", None), "d", sheet_or_d)
    if d != 2:
        raise InputError("direct profile evaluators are implemented for d = 2")


def pv_profile_integral(t, x, profile, sheet, tol=1e-8, return_error=False, model=None):
    """Principal-value profile integral with the exact sheet ``lambda``.

    The ``v'`` translation is applied analytically; ``x1 = 0`` uses the
    substitution ``rho = |xi2| / xi1`` which compactifies the inner range.
    """
    _check_d2(sheet)
    x = np.asarray(x, dtype=float)
    model = model or _exact_model(sheet, np.tan(profile.cutoff.theta_N))
    y2 = x[1] + t * sheet.v[1]
    return _profile_integral(float(t), float(x[0] + t * sheet.v[0]), float(y2), model, profile, tol, return_error)


def paraxial_profile_integral(t, x, profile, v, Q, tol=1e-8, return_error=False):
    """Profile integral with ``lambda`` replaced by ``v.xi + Q(xi', xi') / xi1``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.size != 2:
        raise InputError("direct profile evaluators are implemented for d = 2")
    model = _paraxial_model(Q, np.tan(profile.cutoff.theta_N))
    return _profile_integral(float(t), float(x[0] + t * v[0]), float(x[1] + t * v[1]), model, profile,
                             tol, return_error)


def inner_limit_integral(x1, Lam, xi2, cutoff, M, form="sin", tol=1e-10):
    """The paraxial inner integral at fixed ``xi'`` truncated at ``|xi1| <= M``.

    ``form='two_sided'`` integrates ``chi phi e^{i(x1 xi1 + Lam/xi1)} / xi1``
    over ``[-M, M]`` with the (empty) excision around 0; ``form='sin'`` is the
    parity-reduced ``2i int_0^M chi phi sin(x1 xi1 + Lam/xi1) / xi1``.
    """
    lo = cutoff.floor[0]
    if M <= lo:
        return 0.0
    rate = abs(x1) + abs(Lam) / lo**2
    n = int(np.ceil((M - lo) * max(rate, 1.0) / np.pi * 4)) + 256
    e = np.linspace(lo, M, n + 1)

    def amp(k):
        return cutoff.chi_ratio(xi2 / k) * cutoff.phi(k) / k

    if form == "sin":
        v, err = gk_integrate(lambda k: amp(k) * np.sin(x1 * k + Lam / k), e)
        v, err = 2j * v, 2 * err
    elif form == "two_sided":
        vp, ep = gk_integrate(lambda k: amp(k) * np.exp(1j * (x1 * k + Lam / k)), e)
        vm, em = gk_integrate(lambda k: -amp(k) * np.exp(-1j * (x1 * k + Lam / k)), e)
        v, err = vp + vm, ep + em
    else:
        raise InputError(f"unknown form {form!r}")
    if err > tol:
        raise AccuracyError(f"inner integral reached {err:.3g}", achieved=err)
    return complex(v)


# ---------------------------------------------------------------- grid route

@dataclass
class ParaxialSymbol:
    """``v.xi + Q(xi', xi') / xi1`` with a ``value`` method for ``scalar_evolve``."""

    v: np.ndarray
    Q: float
    cone_halfangle: float

    def value(self, xi):
        xi = np.asarray(xi, dtype=float)
        x1 = xi[..., 0]
        safe = np.where(x1 == 0, 1.0, x1)
        return xi @ np.asarray(self.v, dtype=float) + np.where(x1 == 0, 0.0, self.Q * xi[..., 1] ** 2 / safe)


def grid_profile_value(t, x, profile, symbol, spec):
    """Profile integral by the spectral route: Riemann sum in ``xi`` then FFT.

    The datum has coefficients ``N_tot dxi^d F(K)`` so that the inverse FFT
    is the trapezoidal rule for ``int F e^{i x.xi} dxi`` on the centred
    nodes; ``scalar_evolve``
    to ``-t`` supplies ``e^{+i t lambda}``.  ``x`` must be a grid node.
    """
    K = spec.kmesh()
    dxi = np.prod([2 * np.pi / L for L in spec.L])
    # node m sits at (m - N/2) dx, so shift the FFT origin to the centre
    shift = np.exp(-1j * K @ (np.asarray(spec.L) / 2))
    coef = np.prod(spec.N) * dxi * profile.datum(K) * shift
    from scipy.fft import ifftn
    w0 = GridField(spec, ifftn(coef)[..., None], 0.0)
    w = scalar_evolve(symbol, w0, -t)
    idx = tuple(int(round(xj / h)) + n // 2 for xj, h, n in zip(np.atleast_1d(x), spec.dx, spec.N))
    if not np.allclose([(i - n // 2) * h for i, n, h in zip(idx, spec.N, spec.dx)], x, atol=1e-12):
        raise InputError("evaluation point must be a grid node")
    return complex(w.values[idx + (0,)])


def grid_profile_estimate(t, x, profile, symbol, spec):
    """Grid value and an error estimate from doubling the box (halving ``dxi``)."""
    fine = GridSpec(tuple(2 * n for n in spec.N), tuple(2 * L for L in spec.L))
    a = grid_profile_value(t, x, profile, symbol, spec)
    b = grid_profile_value(t, x, profile, symbol, fine)
    return b, abs(b - a)


# ---------------------------------------------------------------- nonstationary decay

@dataclass
class DecayFit:
    exponent: float
    s: np.ndarray
    values: np.ndarray
    used: np.ndarray
    min_gradient: float
    rms_residual: float

    def as_dict(self):
        return {"exponent": self.exponent, "s": self.s.tolist(), "abs_values": np.abs(self.values).tolist(),
                "used": self.used.tolist(), "min_gradient": self.min_gradient,
                "rms_residual": self.rms_residual}


def nonstationary_decay_probe(profile, sheet, ray, s_grid, tol=1e-12, floor=100.0, stationary_rtol=1e-3):
    """Fitted log-log slope of ``|u(s t_hat, s x_hat)|`` along a nonstationary ray.

    Values below ``floor * tol`` are dropped from the fit, since they sit at
    the quadrature noise level.
    """
    ray = np.asarray(ray, dtype=float)
    th, xh = ray[0], ray[1:]
    ph = Phase(sheet, th, xh)
    g, xi = ph.min_gradient(profile.cutoff.theta_N)
    if g <= stationary_rtol * (abs(th) + np.linalg.norm(xh)):
        raise StationaryRayError(xi, g)
    s = np.asarray(s_grid, dtype=float)
    model = _exact_model(sheet, np.tan(profile.cutoff.theta_N))
    vals = np.array([pv_profile_integral(si * th, si * xh, profile, sheet, tol=tol, model=model) for si in s])
    used = np.abs(vals) > floor * tol
    if used.sum() < 3:
        raise AccuracyError("fewer than three values above the noise floor; shorten the s-grid",
                            achieved=float(np.abs(vals).max()))
    ls, lv = np.log(s[used]), np.log(np.abs(vals[used]))
    coef = np.polyfit(ls, lv, 1)
    res = lv - np.polyval(coef, ls)
    return DecayFit(float(coef[0]), s, vals, used, g, float(np.sqrt(np.mean(res**2))))


# ---------------------------------------------------------------- dyadic partition

def default_bump(r):
    """Smooth, 1 on ``[1, 2]``, supported in ``[1/2, 4]``."""
    r = np.asarray(r, dtype=float)
    return smoothstep((r - 0.5) / 0.5) * (1.0 - smoothstep((r - 2.0) / 2.0))


@dataclass
class DyadicPartition:
    g: object
    support: tuple

    def _radius(self, x):
        """Scalars and 1-D arrays are radii; arrays of rank >= 2 are points ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        return np.abs(x) if x.ndim <= 1 else np.linalg.norm(x, axis=-1)

    def G(self, r):
        r = np.asarray(r, dtype=float)
        lo, hi = self.support
        kmin = int(np.floor(np.log2(lo / r.max()))) - 1
        kmax = int(np.ceil(np.log2(hi / r.min()))) + 1
        return sum(self.g(2.0**k * r) for k in range(kmin, kmax + 1))

    def chi(self, x):
        """``chi_d(x) = g(|x|) / G(|x|)``, zero at the origin."""
        r = np.atleast_1d(self._radius(x))
        out = np.zeros_like(r)
        nz = r > 0
        if np.any(nz):
            out[nz] = self.g(r[nz]) / self.G(r[nz])
        return out if np.ndim(self._radius(x)) else out[0]

    def partition_sum(self, x):
        """``sum_k chi_d(2^k x)``; 1 for every ``x != 0``."""
        r = np.atleast_1d(self._radius(x)).astype(float)
        lo, hi = self.support
        kmin = int(np.floor(np.log2(lo / r.max()))) - 1
        kmax = int(np.ceil(np.log2(hi / r.min()))) + 1
        total = sum(self.chi(2.0**k * r) for k in range(kmin, kmax + 1))
        return total if np.ndim(self._radius(x)) else total[0]


def dyadic_partition(g=None, support=(0.5, 4.0), n_check=2001):
    """Build ``chi_d = g / G`` with ``G(x) = sum_k g(2^k x)``.

    ``g`` must be nonnegative, vanish outside ``support`` and be at least 1
    on ``1 <= |x| <= 2``.
    """
    g = default_bump if g is None else g
    lo, hi = support
    if not 0 < lo < 1 and hi > 2:
        raise InputError("support must contain [1, 2] strictly inside (0, inf)")
    r = np.linspace(1.0, 2.0, n_check)
    if np.any(g(r) < 1.0 - 1e-12):
        raise InputError("bump must be >= 1 on 1 <= |x| <= 2")
    wide = np.geomspace(lo / 4, hi * 4, 4 * n_check)
    vals = g(wide)
    if np.any(vals < 0):
        raise InputError("bump must be nonnegative")
    if np.any(vals[(wide < lo) | (wide > hi)] != 0):
        raise InputError("bump does not vanish outside the declared support")
    return DyadicPartition(g, (float(lo), float(hi)))


# ---------------------------------------------------------------- stationary phase scaling

def _bump_cutoff(x, plateau, edge):
    ax = np.abs(x)
    return 1.0 - smoothstep((ax - plateau) / (edge - plateau))


SP_FAMILIES = {
    # name: (phase, phase', amplitude, support half-width, critical point)
    "gaussian": (lambda x: 0.5 * x * x, lambda x: x,
                 lambda x: np.exp(-0.5 * x * x) * _bump_cutoff(x, 7.0, 9.0), 9.0),
    "bump": (lambda x: 0.5 * x * x + x**3 / 6.0, lambda x: x + 0.5 * x * x,
             lambda x: np.where(np.abs(x) < 1, np.exp(-1.0 / np.maximum(1e-300, 1 - x * x)), 0.0), 1.0),
    "zero": (lambda x: 0.5 * x * x, lambda x: x, lambda x: np.zeros_like(x), 1.0),
}


def gaussian_closed_form(eps):
    """``int e^{i x^2 / (2 eps)} e^{-x^2/2} dx = sqrt(2 pi) (1 - i/eps)^{-1/2}``."""
    return np.sqrt(2 * np.pi) * (1 - 1j / np.asarray(eps, dtype=float)) ** -0.5


@lru_cache(maxsize=1024)
def _sp_1d(family, eps, tol):
    phi, dphi, f, half = SP_FAMILIES[family]
    total, err = 0.0 + 0.0j, 0.0
    for lo, hi in ((-half, 0.0), (0.0, half)):
        e = _phase_edges(lambda x: phi(x) / eps, lo, hi, 0.05, 5_000_000)
        v, ev = gk_integrate(lambda x: np.exp(1j * phi(x) / eps) * f(x), e)
        total += v
        err += ev
    if err > tol:
        raise AccuracyError(f"stationary-phase quadrature reached {err:.3g}", achieved=err)
    return total, err


@dataclass
class SPReport:
    family: str
    n: int
    eps: np.ndarray
    values: np.ndarray
    ratio: np.ndarray
    sup_ratio: float
    trend_slope: float
    no_upward_trend: bool

    def as_dict(self):
        return {"family": self.family, "n": self.n, "eps": self.eps.tolist(),
                "abs_values": np.abs(self.values).tolist(), "ratio": self.ratio.tolist(),
                "sup_ratio": self.sup_ratio, "trend_slope": self.trend_slope,
                "no_upward_trend": self.no_upward_trend}


def eps_grid(lo=1e-4, hi=1.0, per_decade=25):
    n = int(round(np.log10(hi / lo) * per_decade)) + 1
    return np.geomspace(lo, hi, n)


def stationary_phase_estimate(family="gaussian", n=1, eps=None, tol=1e-10, trend_tol=0.05):
    """``I(eps) = int e^{i phi/eps} f dx`` and the ratio ``|I| / (eps^{n/2} ln(1 + 1/eps) sup|f|)``.

    ``n``-dimensional cases are separable products of the one-dimensional
    family, so ``I_n = I_1^n``.  The trend test fits ``log ratio`` against
    ``log eps`` over the smallest decade; a slope below ``-trend_tol`` means
    the ratio grows as ``eps`` shrinks.
    """
    if family not in SP_FAMILIES:
        raise InputError(f"unknown stationary-phase family {family!r}")
    if n not in (1, 2):
        raise InputError("n must be 1 or 2")
    eps = eps_grid() if eps is None else np.asarray(eps, dtype=float)
    vals = np.array([_sp_1d(family, float(e), float(tol))[0] for e in eps]) ** n
    f = SP_FAMILIES[family][2]
    norm = float(np.max(np.abs(f(np.linspace(-SP_FAMILIES[family][3], SP_FAMILIES[family][3], 4001))))) ** n
    scale = eps ** (n / 2) * np.log1p(1 / eps) * (norm if norm > 0 else 1.0)
    ratio = np.abs(vals) / scale
    small = eps <= eps.min() * 10 * (1 + 1e-12)
    fit = small & (ratio > 0)
    slope = float(np.polyfit(np.log(eps[fit]), np.log(ratio[fit]), 1)[0]) if fit.sum() >= 3 else 0.0
    return SPReport(family, n, eps, vals, ratio, float(ratio.max()), slope, slope >= -trend_tol)
