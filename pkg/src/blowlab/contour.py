"""Rays of the integration contour and their composite Gauss-Legendre grids.

Both rays are parametrised by the ordinate y = |k1| >= 1:

    B2: k1 = y e^{-i pi/6},   omega k1 =  i y
    B5: k1 = y e^{5i pi/6},   omega k1 = -i y

The cutoff makes every integrand vanish for y <= 2, so grids live on [2, Y_max].
Panels start with width 0.5 and grow by 1.5, which keeps the ratio of panel
width to distance from the origin bounded (all kernel singularities sit at
distance ~|k1|), so a fixed order per panel gives uniform accuracy.
"""
from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, CacheError, IntegrabilityError, ParamError
from .scattering import ScatteringProfile, log_eval, moment_integral

Y_START = 2.0
FIRST_WIDTH = 0.5
GROWTH = 1.5
Y_CAP = 1e7
DEFAULT_ORDER = 16


class RayBranch(enum.Enum):
    B2 = 2
    B5 = 5

    @property
    def angle(self):
        return -math.pi / 6 if self is RayBranch.B2 else 5 * math.pi / 6

    @property
    def direction(self):
        """dk1/dy along the outward orientation."""
        s3 = math.sqrt(3.0) / 2.0
        return complex(s3, -0.5) if self is RayBranch.B2 else complex(-s3, 0.5)

    @property
    def sign(self):
        """omega k1 = sign * i y."""
        return 1.0 if self is RayBranch.B2 else -1.0


BRANCHES = (RayBranch.B2, RayBranch.B5)


def ray_point(branch: RayBranch, y):
    return np.asarray(y, dtype=float) * branch.direction if np.ndim(y) else y * branch.direction


def omega_point(branch: RayBranch, y):
    """omega * ray_point(branch, y), returned exactly as +-i y."""
    return 1j * branch.sign * np.asarray(y, dtype=float) if np.ndim(y) else 1j * branch.sign * y


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    breaks: np.ndarray
    order: int
    Y_max: float
    tol: float
    t_ref: float
    q_max: int
    profile_hash: str = ""

    @property
    def count(self):
        return self.nodes.size

    @property
    def n_panels(self):
        return self.breaks.size - 1

    def integrate(self, values):
        return np.dot(self.weights, values)

    @property
    def grid_hash(self):
        h = hashlib.sha256()
        h.update(self.nodes.astype("<f8").tobytes())
        h.update(self.weights.astype("<f8").tobytes())
        return h.hexdigest()


_GL_CACHE = {}


def gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def panel_breaks(Y_max, extra=()):
    """Geometric breakpoints on [2, Y_max] with the given points inserted."""
    pts = [Y_START]
    w = FIRST_WIDTH
    while pts[-1] < Y_max:
        pts.append(pts[-1] + w)
        w *= GROWTH
    pts = [p for p in pts if p < Y_max]
    pts += [p for p in extra if Y_START < p < Y_max]
    pts.append(Y_max)
    pts = np.unique(np.asarray(pts, dtype=float))
    # drop slivers created by the inserted points
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > 1e-9 * p:
            keep.append(p)
        else:
            keep[-1] = p
    return np.asarray(keep)


def composite_rule(breaks, order):
    x, w = gauss_legendre(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b) + half * x[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def _pointwise_sup(profile, Y, power, g):
    # sup over y >= Y of y^power |f1| e^{-g y^2}; the LOG factor is slowly
    # varying, so it is evaluated at the maximiser of the power-Gaussian part.
    s = power + profile.eta
    ystar = Y
    if g > 0 and s > 0:
        ystar = max(Y, math.sqrt(s / (2 * g)))
    elif g == 0 and s > 0:
        return math.inf
    val = ystar ** s * math.exp(-g * ystar * ystar)
    if profile.log.p:
        val *= abs(log_eval(profile.log, ystar))
    return val


def truncation_error(profile: ScatteringProfile, t, Y, q_max):
    """Bound on what is discarded by stopping the grid at Y."""
    g = (profile.T - t) / 4.0
    tail = moment_integral(profile, q_max, lo=Y, gauss=g)
    return max(tail, _pointwise_sup(profile, Y, q_max, g))


def choose_Y_max(profile: ScatteringProfile, t, tol, q_max):
    if profile.degenerate:
        return profile.y0
    lo = profile.y0
    if t >= profile.T and profile.eta + q_max + 1.0 >= 0:
        raise IntegrabilityError(
            f"moment of degree {q_max} diverges at t=T for eta={profile.eta}")
    if truncation_error(profile, t, lo, q_max) < tol:
        return lo
    if truncation_error(profile, t, Y_CAP, q_max) >= tol:
        raise BudgetError(
            f"Y_max would exceed {Y_CAP:g} for tol={tol:g} at T-t={profile.T - t:g}")
    hi = Y_CAP
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if truncation_error(profile, t, mid, q_max) < tol:
            hi = mid
        else:
            lo = mid
        if hi / lo < 1.0 + 1e-4:
            break
    return hi


def build_grid(profile: ScatteringProfile, t, tol=1e-10, q_max=1,
               order=DEFAULT_ORDER):
    if not 0.0 <= t <= profile.T:
        raise ParamError(f"t={t} outside [0, T={profile.T}]")
    if not 0.0 < tol <= 1e-2:
        raise ParamError("tol must lie in (0, 1e-2]")
    if q_max < 1:
        raise ParamError("q_max must be >= 1")
    Y_max = choose_Y_max(profile, t, tol, q_max)
    breaks = panel_breaks(Y_max, extra=(profile.ya, profile.y0))
    nodes, weights = composite_rule(breaks, order)
    return QuadratureGrid(nodes=nodes, weights=weights, breaks=breaks,
                          order=int(order), Y_max=float(Y_max), tol=float(tol),
                          t_ref=float(t), q_max=int(q_max),
                          profile_hash=profile.content_hash)


# ------------------------------------------------------------ binary cache

GRID_MAGIC = b"BLGRID01"
GRID_VERSION = 1
_HEADER = struct.Struct("<8sI32sddIIIId")


def save_grid(grid: QuadratureGrid, path):
    head = _HEADER.pack(GRID_MAGIC, GRID_VERSION, bytes.fromhex(grid.profile_hash),
                        grid.t_ref, grid.tol, grid.q_max, grid.count, grid.order,
                        grid.n_panels, grid.Y_max)
    body = (grid.nodes.astype("<f8").tobytes() + grid.weights.astype("<f8").tobytes()
            + grid.breaks.astype("<f8").tobytes())
    digest = hashlib.sha256(head + body).digest()
    with open(path, "wb") as fh:
        fh.write(head + body + digest)


def load_grid(path, profile_hash=None):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CacheError(f"cannot read grid cache {path}: {exc}") from exc
    if len(raw) < _HEADER.size + 32:
        raise CacheError("grid cache truncated")
    payload, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CacheError("grid cache checksum mismatch")
    (magic, version, phash, t_ref, tol, q_max, count, order, npan,
     Y_max) = _HEADER.unpack_from(payload)
    if magic != GRID_MAGIC or version != GRID_VERSION:
        raise CacheError("not a blowlab grid cache")
    if profile_hash is not None and phash.hex() != profile_hash:
        raise CacheError("grid cache belongs to a different profile")
    need = _HEADER.size + 8 * (2 * count + npan + 1)
    if len(payload) != need:
        raise CacheError("grid cache size mismatch")
    data = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size)
    return QuadratureGrid(nodes=data[:count].copy(), weights=data[count:2 * count].copy(),
                          breaks=data[2 * count:].copy(), order=order, Y_max=Y_max,
                          tol=tol, t_ref=t_ref, q_max=q_max, profile_hash=phash.hex())
