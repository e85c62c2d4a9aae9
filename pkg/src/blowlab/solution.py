"""The solution u and its mixed derivatives, plus the explicit leading term.

u = -i sqrt(3) d/dx m1, so d_x^q1 d_t^q2 u = -i sqrt(3) D(q1 + 1, q2) with D
the multiplier moments computed in :mod:`blowlab.series`.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .contour import Y_CAP, QuadratureGrid, build_grid, composite_rule, panel_breaks, truncation_error
from .errors import (BlowlabError, BudgetError, ConvergenceError, DomainError,
                     IntegrabilityError, ParamError, WindowError)
from .kernel import assemble
from .scattering import (OMEGA, OMEGA2, DerivativeBlowup, ScatteringProfile,
                         f1_eval, log_eval)
from .series import derivative_table, m_at

SQRT3 = math.sqrt(3.0)
DEFAULT_WINDOW = 20.0
REAL_TOL = 1e-9


@dataclass
class SolutionSample:
    x: float
    t: float
    derivs: dict
    err: dict
    leading: dict = field(default_factory=dict)
    flags: tuple = ()
    imag: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.derivs[tuple(key)]


def derivative_pairs(order_q):
    """All (q1, q2) with q1 + 2 q2 <= order_q."""
    return [(q1, q2) for q2 in range(order_q // 2 + 1)
            for q1 in range(order_q - 2 * q2 + 1)]


def _check_time(profile, t, pairs):
    if not 0.0 <= t <= profile.T:
        raise ParamError(f"t={t} outside [0, T={profile.T}]")
    if t < profile.T or profile.degenerate:
        return
    if not isinstance(profile.kind, DerivativeBlowup):
        raise IntegrabilityError("u is unbounded at t=T for this profile")
    worst = max(q1 + 2 * q2 for q1, q2 in pairs)
    if worst > profile.q:
        raise IntegrabilityError(
            f"derivatives of order {worst} > q={profile.q} blow up at t=T; refused")


def solution_grid(profile, t, tol, degree, builder=build_grid):
    """Grid for integrands of multiplier degree ``degree``.

    At t = T the pure power-law tail may need Y_max beyond the grid cap; the
    grid is then capped and the true truncation error is reported instead.
    """
    try:
        return builder(profile, t, tol, q_max=degree), False
    except BudgetError:
        if t < profile.T:
            raise
    breaks = panel_breaks(Y_CAP, extra=(profile.ya, profile.y0))
    nodes, weights = composite_rule(breaks, 16)
    grid = QuadratureGrid(nodes=nodes, weights=weights, breaks=breaks, order=16,
                          Y_max=Y_CAP, tol=tol, t_ref=t, q_max=degree,
                          profile_hash=profile.content_hash)
    return grid, True


def derivative_values(profile, x, t, pairs, tol=1e-10, mode="direct", grid=None):
    """Complex values -i sqrt(3) D(q1+1, q2) and the operator used."""
    degree = max(q1 + 1 + 2 * q2 for q1, q2 in pairs)
    relaxed = False
    if grid is None:
        grid, relaxed = solution_grid(profile, t, tol, degree)
    targets = [(q1 + 1, q2) for q1, q2 in pairs]
    op = assemble(profile, grid, x, t, targets=targets)
    table = derivative_table(op, targets, mode=mode, profile=profile, grid=grid)
    vals = {(q1, q2): -1j * SQRT3 * table[(q1 + 1, q2)].value for q1, q2 in pairs}
    trunc = {(q1, q2): SQRT3 * table[(q1 + 1, q2)].trunc_bound for q1, q2 in pairs}
    return vals, trunc, op, grid, relaxed


def u_eval(profile: ScatteringProfile, x, t, order_q=0, tol=1e-10, *,
           window=DEFAULT_WINDOW, allow_unverified=False, mode="direct",
           with_leading=False, grid=None):
    pairs = derivative_pairs(order_q)
    _check_time(profile, t, pairs)
    flags = []
    if abs(x - profile.x0) > window:
        if not allow_unverified:
            raise WindowError(f"|x - x0| = {abs(x - profile.x0):g} outside the "
                              f"validated window {window:g}")
        flags.append("unverified")
    vals, trunc, op, grid, relaxed = derivative_values(profile, x, t, pairs, tol, mode, grid)
    if relaxed:
        flags.append("tol-relaxed")
    derivs, err, imag = {}, {}, {}
    for pq in pairs:
        v = vals[pq]
        if abs(v.imag) > REAL_TOL * (1.0 + abs(v.real)):
            raise ConvergenceError(
                f"realness check failed for {pq}: imaginary part {v.imag:.3e}")
        derivs[pq] = float(v.real)
        imag[pq] = float(v.imag)
        deg = pq[0] + 1 + 2 * pq[1]
        cut = 0.0 if profile.degenerate else truncation_error(profile, t, grid.Y_max, deg)
        # the leading integrand carries sqrt(3)/pi; the series adds at most M/(M-1)
        scale = SQRT3 / math.pi * (1.0 + profile.M / (profile.M - 1.0))
        err[pq] = {"trunc": trunc[pq] + scale * cut, "quad": grid.tol}
    leading = {}
    if with_leading and t < profile.T:
        leading = {pq: u_leading(profile, x, t, *pq) for pq in pairs}
    return SolutionSample(x=float(x), t=float(t), derivs=derivs, err=err,
                          leading=leading, flags=tuple(flags), imag=imag)


def derivative_at(profile: ScatteringProfile, x, t, q1=0, q2=0, tol=1e-10, grid=None):
    """Real value of a single derivative, with the realness check."""
    _check_time(profile, t, [(q1, q2)])
    vals, _, _, _, _ = derivative_values(profile, x, t, [(q1, q2)], tol, grid=grid)
    v = vals[(q1, q2)]
    if abs(v.imag) > REAL_TOL * (1.0 + abs(v.real)):
        raise ConvergenceError(f"realness check failed: imaginary part {v.imag:.3e}")
    return float(v.real)


def _leading_integrand(profile, x, t, q1, q2):
    phase0 = (-1j) ** q1

    def f(y):
        base = (math.exp(-0.25 * (profile.T - t) * y * y - 0.25 * t / (y * y))
                * (0.5 * (y + 1.0 / y)) ** (q1 + 1)
                * (0.25 * (y * y - 1.0 / (y * y))) ** q2)
        z = (phase0 * complex(math.cos(0.5 * (x - profile.x0) * y + 0.5 * x / y),
                              -math.sin(0.5 * (x - profile.x0) * y + 0.5 * x / y))
             * f1_eval(profile, y) * (OMEGA + OMEGA2 / (y * y)))
        return base * z.real
    return f


def u_leading(profile: ScatteringProfile, x, t, q1=0, q2=0):
    """The explicit j = 1 integral for d_x^q1 d_t^q2 u, by adaptive quadrature."""
    if t >= profile.T:
        raise ParamError("u_leading needs t < T")
    if profile.degenerate:
        return 0.0
    f = _leading_integrand(profile, x, t, q1, q2)
    g = 0.25 * (profile.T - t)
    d = q1 + 1 + 2 * q2 + profile.eta
    # past Y the Gaussian has killed the integrand below 1e-300 of its peak
    Y = math.sqrt(700.0 / g)
    Y = math.sqrt((700.0 + max(d, 0.0) * math.log(Y)) / g)
    dx = abs(x - profile.x0)
    cuts = [profile.ya, profile.y0]
    # pieces: geometric growth, capped at 40 oscillation periods
    step_cap = 40 * 4.0 * math.pi / dx if dx > 0 else math.inf
    y = profile.y0
    while y < Y:
        y = min(Y, y + min(0.5 * y, step_cap))
        cuts.append(y)
    total = 0.0
    with warnings.catch_warnings():
        # quad flags roundoff once a piece is already at machine precision
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b > a:
                total += integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-13, limit=400)[0]
    return -SQRT3 / math.pi * total


def gauss_moment(nu):
    """int_0^inf exp(-y^2) y^(nu+1) dy = Gamma((nu+2)/2)/2, nu > -2."""
    if not nu > -2.0:
        raise ParamError("moment diverges at 0 for nu <= -2")
    return 0.5 * special.gamma(0.5 * (nu + 2.0))


def asymptotic_prediction(profile: ScatteringProfile, t, q1=0, q2=0):
    """Leading asymptotics of d_x^q1 d_t^q2 u(x0, t) as t -> T."""
    if profile.degenerate:
        raise ParamError("no blow-up for the degenerate profile")
    if not t < profile.T:
        raise ParamError("prediction needs t < T")
    d = q1 + 2 * q2
    power = profile.eta + d + 2.0
    if power <= 0:
        raise ParamError(f"(q1, q2) = ({q1}, {q2}) does not blow up for this profile")
    ell = 2.0 / math.sqrt(profile.T - t)
    if profile.log.p and not ell > profile.log.threshold:
        raise DomainError(f"ell = {ell:g} below the LOG domain threshold")
    c = -SQRT3 * ((-1j) ** q1 * OMEGA).real / (2.0 ** (d + 1) * math.pi)
    return c * ell ** power * log_eval(profile.log, ell) * gauss_moment(profile.eta + d)


def n_assemble(op, k):
    """n = (m(omega k), m(omega^2 k), m(k))."""
    k = complex(k)
    vals = m_at(op, np.array([OMEGA * k, OMEGA2 * k, k]))
    return tuple(v.value for v in vals)


@dataclass
class GridCell:
    x: float
    t: float
    sample: SolutionSample | None
    error: str | None = None


def u_grid(profile: ScatteringProfile, xs, ts, order_q=0, tol=1e-10, threads=1,
           allow_unverified=True, window=DEFAULT_WINDOW, builder=build_grid):
    """Sweep u_eval over xs x ts; cells are ordered x-major then t."""
    grids = {}
    for t in ts:
        try:
            grids[t] = solution_grid(profile, t, tol, order_q + 1, builder)[0]
        except BlowlabError as exc:
            grids[t] = exc

    def one(cell):
        x, t = cell
        g = grids[t]
        if isinstance(g, Exception):
            return GridCell(x, t, None, f"{type(g).__name__}: {g}")
        try:
            s = u_eval(profile, x, t, order_q, tol, window=window,
                       allow_unverified=allow_unverified, grid=g)
            return GridCell(x, t, s)
        except BlowlabError as exc:
            return GridCell(x, t, None, f"{type(exc).__name__}: {exc}")

    cells = [(float(x), float(t)) for x in xs for t in ts]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, cells))
    return [one(c) for c in cells]
