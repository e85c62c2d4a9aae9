"""Neumann series for m, m1 and the mixed derivatives of m1.

Derivatives use the multiplier identities: d/dx and d/dt of a chain
F1(k1) F(k1,k2) ... F(k_{j-1},k_j) multiply it by sum_p a(k_p) and
sum_p b(k_p).  Expanding the powers binomially over the appended node gives a
recursion on row vectors S_j^{(r)} indexed by the multi-index r = (r1, r2):

    S_1^{(r)}     = g^{(r)}                       (F1 weights times a^r1 b^r2)
    S_{j+1}^{(r)} = sum_{s <= r} C(r1,s1) C(r2,s2) A_s^T S_j^{(r-s)}

where A_s carries a^s1 b^s2 at the integration node.  Summing over j turns
this into a block-triangular system solved with one LU factorisation of
I - A^T.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import linalg

from .contour import BRANCHES, QuadratureGrid
from .errors import DivergenceGuard, IntegrabilityError, ParamError
from .kernel import KernelOperator, downward_closure
from .scattering import ScatteringProfile, f1_eval


@dataclass(frozen=True)
class SeriesResult:
    value: complex
    j_used: object
    trunc_bound: float
    quad_tol: float
    terms: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class DerivativeTable:
    entries: dict
    x: float
    t: float

    def __getitem__(self, key):
        return self.entries[tuple(key)]


def _guard(op: KernelOperator):
    if not op.norm_est < 1.0:
        raise DivergenceGuard(f"operator norm estimate {op.norm_est:.3g} >= 1")


def _check_mode(mode, jmax):
    if mode not in ("direct", "neumann"):
        raise ParamError(f"unknown series mode {mode!r}")
    if mode == "neumann" and jmax < 1:
        raise ParamError("jmax must be >= 1")


def _binom_terms(r):
    for s in product(range(r[0] + 1), range(r[1] + 1)):
        yield s, math.comb(r[0], s[0]) * math.comb(r[1], s[1])


def moment_solve(op: KernelOperator, targets, mode="direct", jmax=40):
    """D(q1, q2) for every multi-index below the targets.

    Returns ``(values, terms)``; in neumann mode ``terms[r]`` lists the
    per-j contributions.
    """
    _guard(op)
    _check_mode(mode, jmax)
    order = downward_closure(targets)
    missing = [r for r in order if r not in op.moments]
    if missing:
        raise ParamError(f"operator lacks moment matrices for {missing}")
    values, terms = {}, {}
    if mode == "direct":
        U = {}
        for r in order:
            rhs = op.f1_moment(r).copy()
            for s, c in _binom_terms(r):
                if s == (0, 0):
                    continue
                rs = (r[0] - s[0], r[1] - s[1])
                rhs += c * (op.moment(s).T @ U[rs])
            U[r] = linalg.lu_solve(op.lu, rhs, trans=1, check_finite=False)
            values[r] = complex(U[r].sum())
        return values, terms
    S = {r: op.f1_moment(r).copy() for r in order}
    for r in order:
        terms[r] = [complex(S[r].sum())]
    for _ in range(2, jmax + 1):
        new = {}
        for r in order:
            acc = np.zeros_like(S[r])
            for s, c in _binom_terms(r):
                rs = (r[0] - s[0], r[1] - s[1])
                acc += c * (op.moment(s).T @ S[rs])
            new[r] = acc
            terms[r].append(complex(acc.sum()))
        S = new
    for r in order:
        values[r] = complex(math.fsum(v.real for v in terms[r])
                            + 1j * math.fsum(v.imag for v in terms[r]))
    return values, terms


def grid_moments(profile: ScatteringProfile, grid: QuadratureGrid, t, powers):
    """Integrals of exp(-(T-t) y^2/4) y^s |f1(i/y)| dy on the grid."""
    y, w = grid.nodes, grid.weights
    base = w * np.abs(f1_eval(profile, y)) * np.exp(-0.25 * (profile.T - t) * y * y)
    return {s: float(np.dot(base, y ** s)) for s in powers}


def remainder_terms(M, Q, I_Q, I_Qm1, j):
    """Per-term bound for the Q-th order derivative of m_j^(1)."""
    j = np.asarray(j, dtype=float)
    if Q == 0:
        return I_Q / M ** (j - 1)
    if Q == 1:
        return I_Q / M ** (j - 1) + (j - 1) / M ** (j - 2) * I_Qm1 ** 2
    return I_Q / M ** (j - 1) + (j ** Q - 1) / M ** (j - Q) * I_Qm1 ** Q


def remainder_tail(M, Q, I_Q, I_Qm1, j_from):
    if not (math.isfinite(I_Q) and math.isfinite(I_Qm1)):
        return math.inf
    if I_Q == 0 and I_Qm1 == 0:
        return 0.0
    total = 0.0
    j = j_from
    while True:
        chunk = remainder_terms(M, Q, I_Q, I_Qm1, np.arange(j, j + 64))
        total += float(chunk.sum())
        j += 64
        if chunk[-1] <= 1e-18 * total or j > 100000:
            return total


def _derivative_bound(op, profile, grid, q1, q2, j_from):
    Q = q1 + 2 * q2
    if profile is None or grid is None:
        # geometric fallback from the discrete operator alone
        rho = op.norm_est
        mags = np.abs(op.f1_moment((q1, q2))).sum()
        return float(mags * rho ** (j_from - 1) / (1.0 - rho)) * max(1, j_from) ** Q
    mom = grid_moments(profile, grid, op.t, (Q, max(Q - 1, 0)))
    return remainder_tail(profile.M, Q, mom[Q], mom[max(Q - 1, 0)], j_from)


def m1_series(op: KernelOperator, mode="direct", jmax=40, profile=None, grid=None):
    values, terms = moment_solve(op, [(0, 0)], mode, jmax)
    if mode == "direct":
        return SeriesResult(values[(0, 0)], "direct-solve", 0.0, op.tol)
    return SeriesResult(values[(0, 0)], jmax,
                        _derivative_bound(op, profile, grid, 0, 0, jmax + 1),
                        op.tol, tuple(terms[(0, 0)]))


def derivative_m1(op: KernelOperator, q1, q2, mode="direct", jmax=40,
                  profile=None, grid=None):
    if q1 < 0 or q2 < 0:
        raise ParamError("derivative orders must be nonnegative")
    if profile is not None and op.t >= profile.T:
        if profile.eta + q1 + 2 * q2 + 1.0 >= 0:
            raise IntegrabilityError(
                f"moment of degree {q1 + 2 * q2} diverges at t=T")
    values, terms = moment_solve(op, [(q1, q2)], mode, jmax)
    if mode == "direct":
        return SeriesResult(values[(q1, q2)], "direct-solve", 0.0, op.tol)
    return SeriesResult(values[(q1, q2)], jmax,
                        _derivative_bound(op, profile, grid, q1, q2, jmax + 1),
                        op.tol, tuple(terms[(q1, q2)]))


def derivative_table(op: KernelOperator, targets, mode="direct", jmax=40,
                     profile=None, grid=None):
    values, terms = moment_solve(op, targets, mode, jmax)
    entries = {}
    for r, v in values.items():
        if mode == "direct":
            entries[r] = SeriesResult(v, "direct-solve", 0.0, op.tol)
        else:
            entries[r] = SeriesResult(v, jmax, _derivative_bound(
                op, profile, grid, r[0], r[1], jmax + 1), op.tol, tuple(terms[r]))
    return DerivativeTable(entries, op.x, op.t)


def term_sups(op: KernelOperator, jmax=10):
    """sup over the nodes of |m_j| = |(A^j 1)_i| for j = 1..jmax."""
    v = np.ones(op.n, dtype=complex)
    out = []
    for _ in range(jmax):
        v = op.A @ v
        out.append(float(np.max(np.abs(v))))
    return out


def m_at(op: KernelOperator, k, mode="direct", jmax=40):
    """m(x, t, k) = 1 + int F(k, k1) m(k1) dk1 at off-contour points."""
    _guard(op)
    _check_mode(mode, jmax)
    rows = op.rows(k)
    one = np.ones(op.n, dtype=complex)
    if mode == "direct":
        V = linalg.lu_solve(op.lu, one, check_finite=False)
        trunc = 0.0
    else:
        V = one.copy()
        cur = one
        for _ in range(jmax):
            cur = op.A @ cur
            V = V + cur
        rho = op.norm_est
        trunc = float(rho ** (jmax + 1) / (1.0 - rho))
    vals = 1.0 + rows @ V
    if np.ndim(k) == 0:
        return SeriesResult(complex(vals[0]), "direct-solve" if mode == "direct" else jmax,
                            trunc, op.tol)
    return [SeriesResult(complex(v), "direct-solve" if mode == "direct" else jmax,
                         trunc, op.tol) for v in vals]


def fixed_point_residual(op: KernelOperator):
    """Relative residual of the discrete equation (I - A) V = 1."""
    one = np.ones(op.n, dtype=complex)
    V = linalg.lu_solve(op.lu, one, check_finite=False)
    r = V - op.A @ V - one
    return float(np.max(np.abs(r)) / max(1.0, np.max(np.abs(V))))


def tail_bound(profile: ScatteringProfile, grid: QuadratureGrid, t, q1, q2, j_from=2):
    """Bound on the j >= j_from part of the (q1, q2) derivative of u.

    Includes the sqrt(3) factor relating u to d/dx m1; for (0, 0) and
    j_from = 2 this is the classical remainder estimate with constants
    1/(M-1) and M^2/(M-1)^2.
    """
    if profile.degenerate:
        return 0.0
    Q = q1 + 1 + 2 * q2
    mom = grid_moments(profile, grid, t, (Q, Q - 1))
    return math.sqrt(3.0) * remainder_tail(profile.M, Q, mom[Q], mom[Q - 1], j_from)
