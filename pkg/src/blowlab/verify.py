"""Verification harness: PDE residual, blow-up fits, audits and oracles.

Everything here recomputes quantities a second way or checks a structural
property; nothing in the evaluation path depends on this module.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .contour import BRANCHES, build_grid, composite_rule, ray_point
from .errors import BudgetError, FitError, ParamError
from .kernel import assemble, kernel_F, kernel_F1, multipliers
from .scattering import DerivativeBlowup, ScatteringProfile, Unbounded, log_eval
from .series import m_at, moment_solve, term_sups
from .solution import (REAL_TOL, SQRT3, asymptotic_prediction, derivative_at,
                       derivative_values, u_leading)

DEFAULT_LADDER = tuple(np.geomspace(1e-1, 1e-6, 12))
RESIDUAL_PAIRS = ((0, 0), (1, 0), (2, 0), (4, 0), (0, 2))


# ------------------------------------------------------------ PDE residual

@dataclass
class ResidualReport:
    points: list
    residual: list
    scale: list
    rel: list
    budget: list
    tol: float

    @property
    def max_rel(self):
        return max(self.rel) if self.rel else 0.0

    def as_dict(self):
        return asdict(self)


def pde_residual(profile: ScatteringProfile, pts, tol=1e-10,
                 builder=build_grid) -> ResidualReport:
    """|u_tt - u_xx - (u^2)_xx - u_xxxx| from exact-multiplier derivatives."""
    out = ResidualReport([], [], [], [], [], tol)
    grids = {}
    for x, t in pts:
        if t >= profile.T:
            raise ParamError("the residual needs t < T so that u_xxxx exists")
        if t not in grids:
            grids[t] = builder(profile, t, tol, q_max=5)
        vals, trunc, _, _, _ = derivative_values(profile, x, t, RESIDUAL_PAIRS, tol,
                                                 grid=grids[t])
        u, ux, uxx, u4, utt = (vals[pq].real for pq in RESIDUAL_PAIRS)
        sq_xx = 2.0 * (ux * ux + u * uxx)
        terms = (utt, uxx, sq_xx, u4)
        res = abs(utt - uxx - sq_xx - u4)
        scale = max(abs(v) for v in terms)
        out.points.append((float(x), float(t)))
        out.residual.append(res)
        out.scale.append(scale)
        out.rel.append(res / scale if scale > 0 else 0.0)
        out.budget.append(sum(trunc.values()) + len(trunc) * tol)
    return out


# ------------------------------------------------------------ blow-up fits

@dataclass
class BlowupFit:
    delta_hat: float
    log_correction: float
    rungs: list
    r2: float
    target: dict
    values: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    sign_expected: int = 1
    sign_ok: bool = True
    corrected: bool = True

    def as_dict(self):
        return asdict(self)


def expected_sign(profile: ScatteringProfile, q1):
    return (-1) ** math.ceil(q1 / 2) * (-1) ** profile.log.sigma


def check_ladder(profile, ladder):
    rungs = [float(v) for v in ladder]
    if len(rungs) < 6:
        raise ParamError(f"a fit needs at least 6 rungs, got {len(rungs)}")
    if any(not 0.0 < r < profile.T for r in rungs):
        raise ParamError("ladder rungs T-t must lie in (0, T)")
    if any(b >= a for a, b in zip(rungs, rungs[1:])):
        raise ParamError("ladder must be strictly decreasing in T-t")
    return rungs


def ladder_values(profile, x, ladder, q1=0, q2=0, tol=1e-10, builder=None):
    out = []
    for r in ladder:
        t = profile.T - r
        grid = None if builder is None else builder(profile, t, tol, q_max=q1 + 1 + 2 * q2)
        out.append(derivative_at(profile, x, t, q1, q2, tol, grid=grid))
    return out


def fit_blowup(profile: ScatteringProfile, target=(0, 0), ladder=DEFAULT_LADDER,
               tol=1e-10, correct_log=True, values=None) -> BlowupFit:
    """Fit log|value at x0| against log ell; the exponent delta is slope/2."""
    if profile.degenerate:
        raise ParamError("the degenerate profile does not blow up")
    q1, q2 = target
    rungs = check_ladder(profile, ladder)
    if values is None:
        values = ladder_values(profile, profile.x0, rungs, q1, q2, tol)
    values = [float(v) for v in values]
    if any(v == 0.0 for v in values):
        raise FitError("zero value on the ladder; cannot take logs")
    ell = 2.0 / np.sqrt(np.asarray(rungs))
    ylog = np.log(np.abs(values))
    if correct_log and profile.log.p:
        ylog = ylog - np.log(np.abs(log_eval(profile.log, ell)))
    X = np.log(ell)
    slope, icept = np.polyfit(X, ylog, 1)
    fitted = slope * X + icept
    ss_res = float(np.sum((ylog - fitted) ** 2))
    ss_tot = float(np.sum((ylog - ylog.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    # trend of the residual against log log ell: ~0 once LOG is divided out
    LL = np.log(X)
    trend = float(np.polyfit(LL - LL.mean(), ylog - fitted, 1)[0])
    preds = []
    for r in rungs:
        try:
            preds.append(asymptotic_prediction(profile, profile.T - r, q1, q2))
        except Exception:
            preds.append(float("nan"))
    sgn = expected_sign(profile, q1)
    fit = BlowupFit(
        delta_hat=float(slope / 2.0), log_correction=trend, rungs=rungs, r2=r2,
        target={"q1": q1, "q2": q2, "delta": profile.delta, "kind": profile.kind.name,
                "rvec": list(profile.log.rvec), "avec": list(profile.log.avec),
                "sigma": profile.log.sigma},
        values=values, predictions=preds, sign_expected=sgn,
        sign_ok=bool(all(np.sign(v) == sgn for v in values[-3:])), corrected=correct_log)
    if r2 < 0.99:
        raise FitError(f"regression r2 = {r2:.4f} < 0.99", fit=fit)
    return fit


def envelope_halfwidth(M):
    return 4.0 * math.pi / (M - 1.0)


def ratio_to_leading(profile: ScatteringProfile, ladder=DEFAULT_LADDER, tol=1e-10,
                     values=None):
    """u(x0, t) / asymptotic_prediction per rung."""
    if profile.degenerate:
        raise ParamError("ratio undefined for the degenerate profile")
    if not isinstance(profile.kind, Unbounded):
        raise ParamError("ratio_to_leading is defined for Unbounded profiles")
    if values is None:
        values = ladder_values(profile, profile.x0, ladder, tol=tol)
    return [float(v / asymptotic_prediction(profile, profile.T - r))
            for v, r in zip(values, ladder)]


WITNESS_OFFSETS = (-10.0, -5.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 5.0, 10.0)


@dataclass
class WitnessReport:
    running: list
    skipped: list = field(default_factory=list)

    def as_dict(self):
        return {"running_max": [float(v) for v in self.running],
                "skipped": [list(c) for c in self.skipped]}


def bound_witness(profile: ScatteringProfile, ladder=DEFAULT_LADDER, tol=1e-10,
                  offsets=WITNESS_OFFSETS, builder=None) -> WitnessReport:
    """Empirical constant C in the spatial bound away from x0, per rung.

    Unbounded: max |u| (x-x0)^2 / (1+x^2).  DerivativeBlowup: max over
    q1 = q+1 of |d_x^q1 u| |x-x0| / (1+|x|).  The running max is a witness
    that some finite C exists, not a certified value.  Cells whose
    oscillation cannot be resolved within the memory budget are skipped
    and listed as (x, T-t).
    """
    if profile.degenerate:
        return WitnessReport([0.0] * len(ladder))
    deriv = isinstance(profile.kind, DerivativeBlowup)
    q1 = profile.q + 1 if deriv else 0
    xs = [profile.x0 + d for d in offsets]
    rep, best = WitnessReport([]), 0.0
    rungs = [float(r) for r in ladder]
    if any(not 0.0 < r < profile.T for r in rungs):
        raise ParamError("ladder rungs T-t must lie in (0, T)")
    for r in rungs:
        t = profile.T - r
        grid = (builder or build_grid)(profile, t, tol, q_max=q1 + 1)
        for x in xs:
            try:
                v = abs(derivative_at(profile, x, t, q1, 0, tol, grid=grid))
            except BudgetError:
                rep.skipped.append((float(x), float(r)))
                continue
            dx = abs(x - profile.x0)
            w = dx / (1.0 + abs(x)) if deriv else dx * dx / (1.0 + x * x)
            best = max(best, v * w)
        rep.running.append(best)
    return rep


# ------------------------------------------------------------ toy model

def toy_model_u(f1_spec, x, t, T, q1=0, tol=1e-12):
    """d_x^q1 of the single-integral toy model, by adaptive quadrature.

    ``f1_spec`` maps y to f1(i/y); ``None`` means f1 = 0.  The toy model is
    not a solution of the equation, only an independent quadrature exercise.
    """
    if not t < T:
        raise ParamError("toy model needs t < T")
    if f1_spec is None:
        return 0j
    g = 0.25 * (T - t)

    def integrand(y):
        amp = (f1_spec(y) * math.exp(-g * y * y - 0.25 * t / (y * y))
               * (0.5 * (y + 1.0 / y)) ** (q1 + 1))
        ph = -0.5 * x * (y + 1.0 / y)
        return amp * complex(math.cos(ph), math.sin(ph))

    Y = math.sqrt((700.0 + 20.0 * math.log1p(1.0 / g)) / g)
    cuts = [1.0]
    step = 8.0 * math.pi / abs(x) if x else math.inf
    while cuts[-1] < Y:
        cuts.append(min(Y, cuts[-1] + min(cuts[-1], step)))
    re = im = 0.0
    with warnings.catch_warnings():
        # roundoff warnings near machine precision are expected at tight tol
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(cuts[:-1], cuts[1:]):
            re += integrate.quad(lambda y: integrand(y).real, a, b, epsabs=0.0,
                                 epsrel=tol, limit=400)[0]
            im += integrate.quad(lambda y: integrand(y).imag, a, b, epsabs=0.0,
                                 epsrel=tol, limit=400)[0]
    return -SQRT3 / (2.0 * math.pi) * (-1j) ** q1 * complex(re, im)


# ------------------------------------------------------------ audits

SAFE_GAP = 0.1
_CUT_ANGLES = (math.pi / 6, -5 * math.pi / 6, 5 * math.pi / 6, -math.pi / 6)


def _angle_ok(theta):
    for c in _CUT_ANGLES:
        d = (theta - c + math.pi) % (2 * math.pi) - math.pi
        if abs(d) < SAFE_GAP:
            return False
    return True


def sample_off_contour(n, seed=0, rmin=1e-2, rmax=1e2):
    """Random k away from the rays carrying the kernel singularities."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        theta = rng.uniform(-math.pi, math.pi)
        if not _angle_ok(theta):
            continue
        r = math.exp(rng.uniform(math.log(rmin), math.log(rmax)))
        if abs(r - 1.0) < 1e-2:
            continue
        out.append(r * complex(math.cos(theta), math.sin(theta)))
    return np.asarray(out)


@dataclass
class SymmetryReport:
    max_diff: float
    far_dev: float
    n: int
    x: float
    t: float

    def passed(self, tol=1e-9, far_tol=1e-5):
        return self.max_diff < tol and self.far_dev < far_tol

    def as_dict(self):
        return asdict(self)


def symmetry_audit(profile: ScatteringProfile, x, t, sample_ks=None, tol=1e-10, op=None):
    """max |m(k) - m(1/k)| over off-contour samples and |m - 1| far out."""
    if sample_ks is None:
        sample_ks = sample_off_contour(100)
    ks = np.asarray(sample_ks, dtype=complex)
    if op is None:
        op = assemble(profile, build_grid(profile, t, tol), x, t)
    a = np.array([r.value for r in m_at(op, ks)])
    b = np.array([r.value for r in m_at(op, 1.0 / ks)])
    far = np.array([1e-6, 1e6]) * complex(math.cos(1.0), math.sin(1.0))
    mf = np.array([r.value for r in m_at(op, far)])
    return SymmetryReport(max_diff=float(np.max(np.abs(a - b))),
                          far_dev=float(np.max(np.abs(mf - 1.0))), n=ks.size,
                          x=float(x), t=float(t))


@dataclass
class NormReport:
    points: list
    norm_est: list
    bound: float
    term_sups: list

    def passed(self, slack=1e-10):
        return all(v <= self.bound + slack for v in self.norm_est)

    def decay_ok(self, M, factor=1.01):
        return all(s <= factor * M ** -(j + 1)
                   for row in self.term_sups for j, s in enumerate(row))

    def as_dict(self):
        return asdict(self)


def norm_audit(profile: ScatteringProfile, xs, ts, tol=1e-10, jmax=10, builder=build_grid):
    pts, norms, sups = [], [], []
    for t in ts:
        grid = builder(profile, float(t), tol, q_max=1)
        for x in xs:
            op = assemble(profile, grid, x, t, check_norm=False)
            pts.append((float(x), float(t)))
            norms.append(op.norm_est)
            sups.append(term_sups(op, jmax))
    return NormReport(pts, norms, 1.0 / profile.M, sups)


# ------------------------------------------------------------ oracles

def _oracle_grid(profile, t, tol):
    """Independent grid: uniform-ratio panels and a different order."""
    ref = build_grid(profile, t, tol, q_max=3)
    Y = ref.Y_max
    lo = max(2.0, profile.ya)
    pts = [lo]
    while pts[-1] < Y:
        pts.append(min(Y, pts[-1] * 1.3 + 0.2))
    extra = [profile.y0] if lo < profile.y0 < Y else []
    breaks = np.unique(np.asarray(pts + extra))
    return composite_rule(breaks, 22)


def tensor_terms(profile: ScatteringProfile, x, t, q1=1, q2=0, jmax=3, tol=1e-10):
    """j-th terms of D(q1, q2) by nested tensor quadrature with pointwise kernels."""
    y, w = _oracle_grid(profile, t, tol)
    ks, F1, a, b = [], [], [], []
    for br in BRANCHES:
        ks.append(ray_point(br, y))
        F1.append(kernel_F1(profile, x, t, y, br) * w * br.direction)
        aa, bb = multipliers(y, br)
        a.append(aa)
        b.append(bb)
    ks, F1, a, b = (np.concatenate(v) for v in (ks, F1, a, b))
    n = ks.size
    F = np.empty((n, n), dtype=complex)
    for br in BRANCHES:
        sl = slice(0, y.size) if br is BRANCHES[0] else slice(y.size, n)
        F[:, sl] = kernel_F(profile, x, t, ks[:, None], y[None, :], br) * (w * br.direction)[None, :]
    out = [complex(np.sum(F1 * a ** q1 * b ** q2))]
    if jmax >= 2:
        A = a[:, None] + a[None, :]
        B = b[:, None] + b[None, :]
        out.append(complex(np.sum(F1[:, None] * F * A ** q1 * B ** q2)))
    if jmax >= 3:
        tot = 0j
        for i in range(n):
            chain = F1[i] * F[i, :, None] * F  # (k2, k3)
            A3 = a[i] + a[:, None] + a[None, :]
            B3 = b[i] + b[:, None] + b[None, :]
            tot += np.sum(chain * A3 ** q1 * B3 ** q2)
        out.append(complex(tot))
    return out


def series_terms(profile: ScatteringProfile, x, t, q1=1, q2=0, jmax=3, tol=1e-10):
    grid = build_grid(profile, t, tol, q_max=max(q1 + 2 * q2, 1))
    op = assemble(profile, grid, x, t, targets=[(q1, q2)])
    _, terms = moment_solve(op, [(q1, q2)], mode="neumann", jmax=jmax)
    return terms[(q1, q2)]


@dataclass
class OracleReport:
    tensor_rel: float
    fd_rel: float
    leading_rel: float
    detail: dict

    def passed(self, tensor_tol=1e-9, fd_tol=1e-6, leading_tol=1e-9):
        return (self.tensor_rel < tensor_tol and self.fd_rel < fd_tol
                and self.leading_rel < leading_tol)

    def as_dict(self):
        return asdict(self)


def _rel(a, b):
    d = abs(a - b)
    return d / abs(b) if b != 0 else d


def fd_check(profile: ScatteringProfile, x, t, h=1e-4, tol=1e-10):
    """Multiplier derivatives against centred differences of lower ones."""
    grid = build_grid(profile, min(t + h, profile.T), tol, q_max=3)
    grid_lo = build_grid(profile, t - h, tol, q_max=3)
    grid = grid if grid.Y_max >= grid_lo.Y_max else grid_lo

    def vals(xx, tt):
        return derivative_values(profile, xx, tt, [(0, 0), (1, 0), (0, 1)], tol,
                                 grid=grid)[0]
    c = vals(x, t)
    xp, xm = vals(x + h, t), vals(x - h, t)
    tp, tm = vals(x, t + h), vals(x, t - h)
    out = {
        "u_x": (c[(1, 0)].real, (xp[(0, 0)] - xm[(0, 0)]).real / (2 * h)),
        "u_t": (c[(0, 1)].real, (tp[(0, 0)] - tm[(0, 0)]).real / (2 * h)),
        "u_xt": ((vals(x, t + h)[(1, 0)] - vals(x, t - h)[(1, 0)]).real / (2 * h),
                 (xp[(0, 1)] - xm[(0, 1)]).real / (2 * h)),
    }
    return {k: (a, b, _rel(a, b)) for k, (a, b) in out.items()}


def oracle_suite(profile: ScatteringProfile, x=0.5, t=0.5, tol=1e-13):
    if profile.degenerate:
        return OracleReport(0.0, 0.0, 0.0, {})
    ser = series_terms(profile, x, t, 1, 0, 3, tol)
    ten = tensor_terms(profile, x, t, 1, 0, 3, tol)
    tensor_rel = max(_rel(s, o) for s, o in zip(ser, ten))
    fd = fd_check(profile, x, t, tol=tol)
    fd_rel = max(v[2] for v in fd.values())
    lead = u_leading(profile, x, t)
    j1 = (-1j * SQRT3 * ser[0]).real
    return OracleReport(tensor_rel, fd_rel, _rel(j1, lead), {
        "series_terms": [[v.real, v.imag] for v in ser],
        "tensor_terms": [[v.real, v.imag] for v in ten],
        "fd": {k: list(v) for k, v in fd.items()},
        "leading": [lead, j1], "x": x, "t": t})


def realness_ok(v):
    return abs(v.imag) <= REAL_TOL * (1.0 + abs(v.real))


def is_derivative_profile(profile):
    return isinstance(profile.kind, DerivativeBlowup)
