"""Kernel F, boundary functional F1, multipliers and Nystrom assembly.

Node order is B2 ascending then B5 ascending.  The unknowns of the discrete
equations are values of smooth functions of k at these coarse nodes.  All
oscillation in x lives in the integration variable k1 through
exp(+-i (x - x0) y/2), so when that factor is under-resolved by the coarse
panels each panel is integrated on a finer sub-grid with the unknown
interpolated from its coarse nodes (product integration).  Without
oversampling this reduces exactly to the plain Nystrom matrix
A[i, j] = F(k_i, k_j) w_j.
"""
from __future__ import annotations

import math
import struct
import hashlib
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import linalg

from .contour import (BRANCHES, QuadratureGrid, RayBranch, gauss_legendre,
                      omega_point, ray_point)
from .errors import BudgetError, CacheError, DomainError, NormBoundViolation, ParamError, SingularityError
from .scattering import OMEGA, OMEGA2, ScatteringProfile, f1_eval, rtilde

SING_GUARD = 1e-13
# largest oversampled block (N x fine nodes of one panel), in bytes
MAX_BLOCK_BYTES = 2 ** 28
# fine nodes per period of exp(i (x - x0) y / 2)
NODES_PER_PERIOD = 8
TWO_PI_I = 2j * math.pi


def theta21(x, t, k):
    k = np.asarray(k, dtype=complex)
    if np.any(k == 0):
        raise DomainError("theta21 is singular at k = 0")
    out = 0.5 * x * (k - 1.0 / k) + 0.25 * t * (1.0 / (k * k) - k * k)
    return complex(out) if out.ndim == 0 else out


def multipliers(y1, branch: RayBranch):
    """x- and t-multipliers a(k1), b(k1) at ordinate y1 on a branch."""
    y = np.asarray(y1, dtype=float)
    a = 0.5j * branch.sign * (y + 1.0 / y)
    b = 0.25 * (y * y - 1.0 / (y * y)) + 0j
    if np.ndim(y1) == 0:
        return complex(a), complex(b)
    return a, b


def ftilde0(profile: ScatteringProfile, y, branch: RayBranch):
    """f~0(omega k1): f2(iy) on B2, f1(i/y) on B5."""
    f1 = f1_eval(profile, y)
    if branch is RayBranch.B2:
        return rtilde(1j * np.asarray(y, dtype=float)) * f1
    return np.asarray(f1, dtype=complex) if np.ndim(y) else complex(f1)


def column_factor(profile: ScatteringProfile, x, t, y, branch: RayBranch):
    """Everything in F except the Cauchy bracket.

    exp((x-x0) w/2) exp((T-t) w^2/4) f~0(w) exp(-x/(2w) + t/(4 w^2)) / (2 pi i)
    with w = omega k1 = +-i y.
    """
    y = np.asarray(y, dtype=float)
    s = branch.sign
    phase = s * (0.5 * (x - profile.x0) * y + 0.5 * x / y)
    decay = -0.25 * (profile.T - t) * y * y - 0.25 * t / (y * y)
    return np.exp(decay + 1j * phase) * ftilde0(profile, y, branch) / TWO_PI_I


def bracket(k, k1):
    """omega^2/(omega^2 k1 - k) - (omega/k1^2)/(1/(omega^2 k1) - k)."""
    k = np.asarray(k, dtype=complex)
    k1 = np.asarray(k1, dtype=complex)
    d1 = OMEGA2 * k1 - k
    d2 = 1.0 / (OMEGA2 * k1) - k
    if np.any(np.abs(d1) < SING_GUARD) or np.any(np.abs(d2) < SING_GUARD):
        raise SingularityError("k too close to omega^2 k1 or 1/(omega^2 k1)")
    return OMEGA2 / d1 - (OMEGA / (k1 * k1)) / d2


def _check_t(profile, t):
    if t > profile.T:
        raise ParamError(f"t={t} beyond the blow-up time T={profile.T}")


def kernel_F(profile: ScatteringProfile, x, t, k, y1, branch: RayBranch):
    _check_t(profile, t)
    out = bracket(k, ray_point(branch, y1)) * column_factor(profile, x, t, y1, branch)
    return complex(out) if np.ndim(out) == 0 else out


def kernel_F1(profile: ScatteringProfile, x, t, y1, branch: RayBranch):
    _check_t(profile, t)
    k1 = ray_point(branch, y1)
    out = -column_factor(profile, x, t, y1, branch) * (OMEGA2 - OMEGA / (k1 * k1))
    return complex(out) if np.ndim(out) == 0 else out


def barycentric_matrix(xs, targets):
    """Lagrange basis of nodes xs evaluated at targets, shape (targets, xs)."""
    xs = np.asarray(xs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    diff = xs[:, None] - xs[None, :]
    np.fill_diagonal(diff, 1.0)
    wb = 1.0 / np.prod(diff, axis=1)
    d = targets[:, None] - xs[None, :]
    hit = d == 0.0
    d[hit] = 1.0
    num = wb[None, :] / d
    out = num / num.sum(axis=1, keepdims=True)
    rows = np.any(hit, axis=1)
    out[rows] = hit[rows].astype(float)
    return out


def downward_closure(targets):
    out = set()
    for q1, q2 in targets:
        for s in product(range(q1 + 1), range(q2 + 1)):
            out.add(s)
    return sorted(out, key=lambda s: (s[0] + s[1], s))


@dataclass(frozen=True)
class FinePanel:
    """Integration nodes for one coarse panel on one branch."""
    cols: np.ndarray       # coarse column indices of the panel
    k: np.ndarray          # fine contour points
    c: np.ndarray          # column factor * direction * weight
    f1w: np.ndarray        # F1 * direction * weight
    a: np.ndarray
    b: np.ndarray
    interp: np.ndarray | None  # (fine, coarse) Lagrange matrix; None means identity


@dataclass(frozen=True, eq=False)
class KernelOperator:
    x: float
    t: float
    k: np.ndarray
    A: np.ndarray
    F1w: np.ndarray
    a_diag: np.ndarray
    b_diag: np.ndarray
    norm_est: float
    moments: dict
    F1_moments: dict
    M: float
    tol: float
    oversample: int
    resolved: bool
    profile_hash: str = ""
    grid_hash: str = ""
    panels: tuple = field(default=(), repr=False)
    _lu: tuple = field(default=None, repr=False)

    @property
    def n(self):
        return self.k.size

    @property
    def lu(self):
        return self._lu

    def moment(self, s):
        """Matrix with multiplier a^s1 b^s2 attached to the integration node."""
        return self.moments[tuple(s)]

    def f1_moment(self, s):
        return self.F1_moments[tuple(s)]

    def rows(self, ks):
        """Discrete F(k, .) rows at arbitrary off-contour points k."""
        ks = np.atleast_1d(np.asarray(ks, dtype=complex))
        out = np.zeros((ks.size, self.n), dtype=complex)
        if not self.panels:
            raise CacheError("operator was loaded without quadrature data")
        for p in self.panels:
            blk = bracket(ks[:, None], p.k[None, :]) * p.c[None, :]
            if p.interp is not None:
                blk = blk @ p.interp
            out[:, p.cols] += blk
        return out


def _oversampling(grid, x, x0):
    """Sub-panels per coarse panel needed to resolve exp(i (x-x0) y / 2)."""
    dx = abs(x - x0)
    widths = np.diff(grid.breaks)
    if dx == 0.0:
        return np.ones(widths.size, dtype=int)
    period = 4.0 * math.pi / dx
    per_node = widths / grid.order
    need = per_node * NODES_PER_PERIOD / period
    return np.maximum(1, np.ceil(need - 1e-12)).astype(int)


def assemble(profile: ScatteringProfile, grid: QuadratureGrid, x, t,
             targets=((1, 0),), check_norm=True):
    """Nystrom operator at (x, t) with moment matrices for the given targets.

    ``targets`` lists the (q1, q2) derivative orders of m1 that will be
    requested; all multi-indices below them are prepared.
    """
    _check_t(profile, t)
    if grid.profile_hash and grid.profile_hash != profile.content_hash:
        raise ParamError("grid was built for a different profile")
    x = float(x)
    t = float(t)
    svals = downward_closure(list(targets) + [(0, 0)])
    n1 = grid.count
    order = grid.order
    k_nodes = np.concatenate([ray_point(b, grid.nodes) for b in BRANCHES])
    N = k_nodes.size
    moments = {s: np.zeros((N, N), dtype=complex) for s in svals}
    f1m = {s: np.zeros(N, dtype=complex) for s in svals}
    sub = _oversampling(grid, x, profile.x0)
    block = 16 * N * int(sub.max()) * order
    if block > MAX_BLOCK_BYTES:
        raise BudgetError(
            f"resolving exp(i(x-x0)y/2) to Y_max={grid.Y_max:.3g} at |x-x0|="
            f"{abs(x - profile.x0):g} needs a {block / 2**20:.0f} MiB block")
    gx, gw = gauss_legendre(order)
    panels = []
    norm_est = 0.0
    for bi, br in enumerate(BRANCHES):
        for p in range(grid.n_panels):
            cols = np.arange(p * order, (p + 1) * order) + bi * n1
            lo, hi = grid.breaks[p], grid.breaks[p + 1]
            if sub[p] == 1:
                y = grid.nodes[p * order:(p + 1) * order]
                w = grid.weights[p * order:(p + 1) * order]
                interp = None
            else:
                edges = np.linspace(lo, hi, sub[p] + 1)
                half = 0.5 * np.diff(edges)[:, None]
                y = (0.5 * (edges[:-1, None] + edges[1:, None]) + half * gx).ravel()
                w = (half * gw).ravel()
                interp = barycentric_matrix(grid.nodes[p * order:(p + 1) * order], y)
            kf = ray_point(br, y)
            colf = column_factor(profile, x, t, y, br) * br.direction * w
            f1f = -colf * (OMEGA2 - OMEGA / (kf * kf))
            a, b = multipliers(y, br)
            blk = bracket(k_nodes[:, None], kf[None, :]) * colf[None, :]
            norm_est += float(np.sum(np.max(np.abs(blk), axis=0)))
            for s in svals:
                mu = a ** s[0] * b ** s[1] if s != (0, 0) else None
                mb = blk if mu is None else blk * mu[None, :]
                fv = f1f if mu is None else f1f * mu
                if interp is not None:
                    mb = mb @ interp
                    fv = fv @ interp
                moments[s][:, cols] = mb
                f1m[s][cols] = fv
            panels.append(FinePanel(cols=cols, k=kf, c=colf, f1w=f1f, a=a, b=b,
                                    interp=interp))
    if check_norm and norm_est > 1.0 / profile.M + 10.0 * grid.tol:
        raise NormBoundViolation(
            f"norm estimate {norm_est:.6g} exceeds 1/M = {1.0 / profile.M:.6g}")
    A = moments[(0, 0)]
    a_diag = np.concatenate([multipliers(grid.nodes, b)[0] for b in BRANCHES])
    b_diag = np.concatenate([multipliers(grid.nodes, b)[1] for b in BRANCHES])
    lu = linalg.lu_factor(np.eye(N) - A, check_finite=False)
    return KernelOperator(x=x, t=t, k=k_nodes, A=A, F1w=f1m[(0, 0)],
                          a_diag=a_diag, b_diag=b_diag, norm_est=norm_est,
                          moments=moments, F1_moments=f1m, M=profile.M,
                          tol=grid.tol, oversample=int(sub.max()),
                          resolved=True, profile_hash=profile.content_hash,
                          grid_hash=grid.grid_hash, panels=tuple(panels), _lu=lu)


# ------------------------------------------------------------ binary cache

OP_MAGIC = b"BLKOP001"
_OP_HEADER = struct.Struct("<8s32s32sddddddIII")


def save_operator(op: KernelOperator, path):
    keys = sorted(op.moments)
    head = _OP_HEADER.pack(OP_MAGIC, bytes.fromhex(op.profile_hash),
                           bytes.fromhex(op.grid_hash), op.x, op.t, op.norm_est,
                           op.M, op.tol, 0.0, op.n, len(keys), op.oversample)
    parts = [head, np.asarray(keys, dtype="<u4").tobytes()]
    for s in keys:
        parts.append(op.moments[s].astype("<c16").tobytes())
    parts.append(op.F1w.astype("<c16").tobytes())
    parts.append(op.a_diag.astype("<c16").tobytes())
    parts.append(op.b_diag.astype("<c16").tobytes())
    for s in keys:
        parts.append(op.F1_moments[s].astype("<c16").tobytes())
    parts.append(op.k.astype("<c16").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload + hashlib.sha256(payload).digest())


def load_operator(path, profile_hash=None, grid_hash=None):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CacheError(f"cannot read operator cache {path}: {exc}") from exc
    payload, digest = raw[:-32], raw[-32:]
    if len(raw) < _OP_HEADER.size + 32 or hashlib.sha256(payload).digest() != digest:
        raise CacheError("operator cache corrupted")
    (magic, phash, ghash, x, t, norm_est, M, tol, _, n, nk,
     over) = _OP_HEADER.unpack_from(payload)
    if magic != OP_MAGIC:
        raise CacheError("not a blowlab operator cache")
    if profile_hash is not None and phash.hex() != profile_hash:
        raise CacheError("operator cache belongs to a different profile")
    if grid_hash is not None and ghash.hex() != grid_hash:
        raise CacheError("operator cache belongs to a different grid")
    off = _OP_HEADER.size
    keys = np.frombuffer(payload, dtype="<u4", count=2 * nk, offset=off).reshape(nk, 2)
    off += 8 * nk
    expect = off + 16 * (nk * n * n + 3 * n + nk * n + n)
    if len(payload) != expect:
        raise CacheError("operator cache size mismatch")

    def take(count):
        nonlocal off
        arr = np.frombuffer(payload, dtype="<c16", count=count, offset=off).copy()
        off += 16 * count
        return arr

    keys = [tuple(int(v) for v in s) for s in keys]
    moments = {s: take(n * n).reshape(n, n) for s in keys}
    F1w, a_diag, b_diag = take(n), take(n), take(n)
    f1m = {s: take(n) for s in keys}
    k = take(n)
    lu = linalg.lu_factor(np.eye(n) - moments[(0, 0)], check_finite=False)
    return KernelOperator(x=x, t=t, k=k, A=moments[(0, 0)], F1w=F1w, a_diag=a_diag,
                          b_diag=b_diag, norm_est=norm_est, moments=moments,
                          F1_moments=f1m, M=M, tol=tol, oversample=over, resolved=True,
                          profile_hash=phash.hex(), grid_hash=ghash.hex(), _lu=lu)
