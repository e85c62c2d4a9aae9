"""Scattering data for the blow-up profiles.

On the segment (0, i] the data is parametrised by the ordinate y >= 1 through
k = i/y.  Everything downstream only needs f1(i/y), which is real:

    f1(i/y) = 0                                  for 1 <= y <= 2
    f1(i/y) = y**eta * LOG(y) * step(...)        on the blend (ya, y0)
    f1(i/y) = y**eta * LOG(y)                    for y >= y0

with ``step`` the standard C-infinity partition built from exp(-1/s).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, ConvergenceError, DomainError, ParamError, PoleError

OMEGA = complex(-0.5, math.sqrt(3.0) / 2.0)
OMEGA2 = OMEGA * OMEGA

SCHEMA_ID = "blowlab-profile/1"
BLEND_ID = "std_c_infinity"
Y0_MIN = 4.0
Y0_MAX = 1e9
# y0 is reported on a dyadic grid so that configs round-trip exactly
Y0_GRID = 2.0 ** -10


def iterated_exp0(r):
    """exp applied r times to 0: the domain threshold of log_r."""
    v = 0.0
    for _ in range(r):
        v = math.exp(v)
    return v


def iterated_log(s, r):
    v = np.asarray(s, dtype=float)
    for _ in range(r):
        if np.any(v <= 0):
            raise DomainError(f"log_{r} undefined: intermediate value <= 0")
        v = np.log(v)
    return v


@dataclass(frozen=True)
class LogFamily:
    """Products of powers of iterated logarithms with a sign.

    LOG(s) = (-1)**sigma * prod_j (log_{r_j} s)**a_j; the empty product is 1.
    """

    rvec: tuple = ()
    avec: tuple = ()
    sigma: int = 0

    def __post_init__(self):
        rvec = tuple(int(r) for r in self.rvec)
        avec = tuple(float(a) for a in self.avec)
        object.__setattr__(self, "rvec", rvec)
        object.__setattr__(self, "avec", avec)
        if len(rvec) != len(avec):
            raise ParamError("rvec and avec must have the same length")
        if any(r < 1 for r in rvec):
            raise ParamError("rvec entries must be positive integers")
        if any(b <= a for a, b in zip(rvec, rvec[1:])):
            raise ParamError("rvec must be strictly increasing")
        if any(not a >= 0 for a in avec):
            raise ParamError("avec entries must be nonnegative")
        if self.sigma not in (0, 1):
            raise ParamError("sigma must be 0 or 1")

    @property
    def p(self):
        return len(self.rvec)

    @property
    def sign(self):
        return -1.0 if self.sigma else 1.0

    @property
    def threshold(self):
        """LOG is defined for s strictly above this value."""
        if not self.rvec:
            return -math.inf
        return iterated_exp0(self.rvec[-1])

    def __call__(self, s):
        return log_eval(self, s)


def log_eval(log: LogFamily, s):
    """Evaluate LOG(s); scalars give a float, arrays an array."""
    arr = np.asarray(s, dtype=float)
    if log.p and np.any(~(arr > log.threshold)):
        raise DomainError(
            f"LOG with r_p={log.rvec[-1]} needs s > {log.threshold:.6g}")
    out = np.full(arr.shape, log.sign)
    v = arr
    depth = 0
    for r, a in zip(log.rvec, log.avec):
        while depth < r:
            v = np.log(v)
            depth += 1
        if a != 0.0:
            out = out * v ** a
    if np.ndim(s) == 0:
        return float(out)
    return out


def log_from_log(log: LogFamily, ly):
    """LOG(e^ly) without forming e^ly, for very large arguments."""
    out = log.sign
    v = ly
    depth = 1
    for r, a in zip(log.rvec, log.avec):
        while depth < r:
            v = math.log(v)
            depth += 1
        if a != 0.0:
            out *= v ** a
    return out


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 1.0, 1.0, 0.0)
    inner = (s > 0.0) & (s < 1.0)
    si = s[inner]
    # phi(s)/(phi(s)+phi(1-s)) with phi = exp(-1/s), written as a logistic
    out[inner] = special.expit(1.0 / (1.0 - si) - 1.0 / si)
    return out


@dataclass(frozen=True)
class Unbounded:
    delta: float
    name = "unbounded"


@dataclass(frozen=True)
class DerivativeBlowup:
    q: int
    delta: float
    name = "derivative"


@dataclass(frozen=True)
class Degenerate:
    """f1 identically zero; used for closure tests."""
    name = "zero"


Kind = Union[Unbounded, DerivativeBlowup, Degenerate]


def default_M(kind: Kind):
    if isinstance(kind, DerivativeBlowup):
        return 2.0 * (1.0 + 2.0 ** (kind.q + 3) * math.pi)
    return 2.0 * (1.0 + 4.0 * math.pi)


def eta_for(kind: Kind):
    if isinstance(kind, Unbounded):
        return -2.0 + 2.0 * kind.delta
    if isinstance(kind, DerivativeBlowup):
        return -kind.q - 3.0 + 2.0 * kind.delta
    return 0.0


def blend_start(log: LogFamily):
    thr = log.threshold
    return 2.0 if thr < 2.0 else thr + 1.0


@dataclass(frozen=True)
class ScatteringProfile:
    kind: Kind
    T: float
    x0: float
    eta: float
    log: LogFamily
    M: float
    y0: float
    ya: float = 2.0
    blend: str = BLEND_ID
    _hash: str = field(default="", compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hashlib.sha256(
            canonical_text(self).encode()).hexdigest())

    @property
    def degenerate(self):
        return isinstance(self.kind, Degenerate)

    @property
    def q(self):
        return self.kind.q if isinstance(self.kind, DerivativeBlowup) else 0

    @property
    def delta(self):
        return getattr(self.kind, "delta", float("nan"))

    @property
    def content_hash(self):
        return self._hash

    def tail(self, y):
        """y**eta * LOG(y), the large-y form of f1(i/y)."""
        y = np.asarray(y, dtype=float)
        return y ** self.eta * log_eval(self.log, y)

    def f1(self, y):
        return f1_eval(self, y)

    def f2(self, y):
        return f2_eval(self, y)

    def r1(self, y):
        return r1_eval(self, y)


def f1_eval(profile: ScatteringProfile, y):
    """f1(i/y) for y >= 1 (real)."""
    yy = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.zeros(yy.shape)
    if not profile.degenerate:
        live = yy > profile.ya
        if np.any(live):
            yl = yy[live]
            s = (yl - profile.ya) / (profile.y0 - profile.ya)
            out[live] = profile.tail(yl) * smooth_step(s)
    if np.ndim(y) == 0:
        return float(out[0])
    return out


def rtilde(k):
    k = np.asarray(k, dtype=complex)
    den = 1.0 - OMEGA2 * k * k
    if np.any(np.abs(den) < 1e-14):
        raise PoleError("rtilde has poles at k = +-omega^2")
    out = (OMEGA2 - k * k) / den
    return complex(out) if out.ndim == 0 else out


def f2_eval(profile: ScatteringProfile, y):
    """f2(iy) = rtilde(iy) * f1(i/y); conjugation is trivial since f1 is real."""
    yy = np.asarray(y, dtype=float)
    return rtilde(1j * yy) * f1_eval(profile, y)


def r1_eval(profile: ScatteringProfile, y):
    """r1(i/y) = f1(i/y) exp(i x0 y/2) exp(-T y^2/4)."""
    yy = np.asarray(y, dtype=float)
    out = f1_eval(profile, y) * np.exp(1j * profile.x0 * yy / 2.0
                                       - profile.T * yy * yy / 4.0)
    return complex(out) if np.ndim(out) == 0 else out


def moment_integral(profile: ScatteringProfile, power, lo=None, hi=np.inf,
                    gauss=0.0):
    """Integral of y**power * |f1(i/y)| * exp(-gauss*y^2) over [lo, hi]."""
    if profile.degenerate:
        return 0.0
    lo = profile.ya if lo is None else max(lo, profile.ya)
    if hi <= lo:
        return 0.0
    opts = dict(epsabs=1e-15, epsrel=1e-12, limit=500)
    total = 0.0
    ya, y0 = profile.ya, profile.y0
    a, b = max(lo, ya), min(hi, y0)
    if b > a:
        total += integrate.quad(
            lambda y: y ** power * abs(f1_eval(profile, y)) * math.exp(-gauss * y * y),
            a, b, **opts)[0]
    a = max(lo, y0)
    if hi > a:
        if gauss == 0.0 and math.isinf(hi):
            e = profile.eta + power + 1.0
            if e >= 0:
                return math.inf
            if profile.log.p == 0:
                return total + a ** e / -e
        # substitute y = a e^u so power-law tails become exponentials
        umax = math.log(hi / a) if math.isfinite(hi) else np.inf

        la = math.log(a)
        if gauss > 0.0:
            # beyond yh the Gaussian factor is below exp(-700) of the power part
            sp = max(0.0, power + 1 + profile.eta)
            yh = math.sqrt(750.0 / gauss)
            yh = math.sqrt((750.0 + sp * math.log(yh)) / gauss)
            umax = min(umax, math.log(yh / a))
            if umax <= 0.0:
                return total

        def g(u):
            ly = la + u
            ex = (power + 1 + profile.eta) * ly
            if gauss > 0.0:
                ex -= gauss * math.exp(2 * ly)
            if ex < -745.0:
                return 0.0
            lg = abs(log_from_log(profile.log, ly)) if profile.log.p else 1.0
            return math.exp(ex) * lg
        total += integrate.quad(g, 0.0, umax, **opts)[0]
    return total


def l1_norm(profile: ScatteringProfile):
    """The budget integral of |f1(i/y)|/y over [1, inf)."""
    return moment_integral(profile, -1.0)


def _with_y0(kind, T, x0, log, M, eta, y0, ya):
    return ScatteringProfile(kind=kind, T=float(T), x0=float(x0), eta=eta,
                             log=log, M=float(M), y0=float(y0), ya=ya)


def build_profile(kind: Kind, T=1.0, x0=0.0, log: Optional[LogFamily] = None,
                  M_override=None, y0=None):
    """Construct an admissible profile, choosing y0 by bisection if not given."""
    log = LogFamily() if log is None else log
    if not (T > 0 and math.isfinite(T)):
        raise ParamError("T must be positive")
    if not math.isfinite(x0):
        raise ParamError("x0 must be finite")
    if isinstance(kind, Unbounded):
        if not 0.0 < kind.delta < 1.0:
            raise ParamError(f"Unbounded needs delta in (0,1), got {kind.delta}")
    elif isinstance(kind, DerivativeBlowup):
        if int(kind.q) != kind.q or kind.q < 0:
            raise ParamError("q must be a nonnegative integer")
        if not 0.0 < kind.delta < 0.5:
            raise ParamError(f"DerivativeBlowup needs delta in (0,1/2), got {kind.delta}")
    elif not isinstance(kind, Degenerate):
        raise ParamError(f"unknown profile kind {kind!r}")
    M = default_M(kind) if M_override is None else float(M_override)
    if not M >= 2.0:
        raise ParamError("M must be >= 2")
    eta = eta_for(kind)
    ya = blend_start(log)
    if y0 is not None:
        if not y0 > ya:
            raise ParamError(f"y0 must exceed the blend start {ya}")
        return _with_y0(kind, T, x0, log, M, eta, y0, ya)
    lo = max(Y0_MIN, ya + 2.0)
    if isinstance(kind, Degenerate):
        return _with_y0(kind, T, x0, log, M, eta, lo, ya)

    def over(v):
        return l1_norm(_with_y0(kind, T, x0, log, M, eta, v, ya)) > 1.0 / M

    if not over(lo):
        return _with_y0(kind, T, x0, log, M, eta, lo, ya)
    hi = lo
    while over(hi):
        if hi >= Y0_MAX:
            raise ConvergenceError("no y0 <= 1e9 satisfies the L1 budget")
        hi = min(2.0 * hi, Y0_MAX)
    while hi - lo > Y0_GRID * 0.5:
        mid = 0.5 * (lo + hi)
        if over(mid):
            lo = mid
        else:
            hi = mid
    v = math.ceil(hi / Y0_GRID) * Y0_GRID
    while over(v):
        v += Y0_GRID
    # step down while the grid value below still satisfies the budget
    while v - Y0_GRID > lo and not over(v - Y0_GRID):
        v -= Y0_GRID
    return _with_y0(kind, T, x0, log, M, eta, v, ya)


@dataclass
class ValidationReport:
    l1: float
    budget: float
    l1_pass: bool
    below: dict
    above: dict
    notes: list

    @property
    def passed(self):
        return self.l1_pass and self.below["pass"] and self.above["pass"]

    def as_dict(self):
        return {"l1": self.l1, "budget": self.budget, "l1_pass": self.l1_pass,
                "blowup_time_below": self.below, "blowup_time_above": self.above,
                "notes": list(self.notes), "pass": self.passed}


def _time_criterion(profile, t, grid):
    # log of exp(t y^2/4)|r1(i/y)| = log|f1| + (t - T) y^2/4, kept in log space
    with np.errstate(divide="ignore"):
        lg = np.log(np.abs(f1_eval(profile, grid))) + (t - profile.T) * grid ** 2 / 4.0
    tail = np.diff(lg[-8:])
    return {"t": t, "log_sup": float(np.max(lg)),
            "tail_decreasing": bool(np.all(tail < 0)),
            "tail_increasing": bool(np.all(tail > 0))}


def validate_profile(profile: ScatteringProfile):
    notes = []
    l1 = l1_norm(profile)
    budget = 1.0 / profile.M
    l1_pass = bool(l1 <= budget * (1.0 + 1e-12))
    if profile.degenerate:
        notes.append("f1 is identically zero; blow-up time checks are vacuous")
        below = {"t": profile.T * (1 - 1e-3), "pass": True}
        above = {"t": profile.T * (1 + 1e-3), "pass": True}
        return ValidationReport(l1, budget, l1_pass, below, above, notes)
    eps = 1e-3 * profile.T
    # the sign of d/dy log changes near sqrt(2|eta|/eps); go well past it
    ycross = math.sqrt(2.0 * (abs(profile.eta) + 1.0) / eps)
    ymax = max(10.0 * profile.y0, 20.0 * ycross)
    grid = np.geomspace(profile.y0, ymax, 400)
    below = _time_criterion(profile, profile.T - eps, grid)
    below["pass"] = bool(np.isfinite(below["log_sup"]) and below["tail_decreasing"])
    above = _time_criterion(profile, profile.T + eps, grid)
    above["pass"] = bool(above["tail_increasing"])
    if not l1_pass:
        notes.append(f"L1 budget {l1:.6g} exceeds 1/M = {budget:.6g}")
    return ValidationReport(l1, budget, l1_pass, below, above, notes)


# ---------------------------------------------------------------- config I/O

CONFIG_KEYS = ("schema", "kind", "delta", "q", "T", "x0", "p", "rvec", "avec",
               "sigma", "M", "y0", "blend")


def _fmt(v):
    return repr(float(v))


def canonical_text(profile: ScatteringProfile):
    kind = profile.kind
    lines = [f"schema={SCHEMA_ID}", f"kind={kind.name}"]
    if not isinstance(kind, Degenerate):
        lines.append(f"delta={_fmt(kind.delta)}")
    if isinstance(kind, DerivativeBlowup):
        lines.append(f"q={int(kind.q)}")
    lines += [
        f"T={_fmt(profile.T)}",
        f"x0={_fmt(profile.x0)}",
        f"p={profile.log.p}",
        "rvec=" + ",".join(str(r) for r in profile.log.rvec),
        "avec=" + ",".join(_fmt(a) for a in profile.log.avec),
        f"sigma={profile.log.sigma}",
        f"M={_fmt(profile.M)}",
        f"y0={_fmt(profile.y0)}",
        f"blend={profile.blend}",
    ]
    return "\n".join(lines) + "\n"


def to_config(profile: ScatteringProfile):
    return canonical_text(profile)


def _num(raw, key, lineno, cast=float):
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r}", lineno, key) from None


def parse_config(text):
    """Parse the key=value profile schema. Unknown keys are errors."""
    vals = {}
    where = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected key=value", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError("unknown key", lineno, key)
        if key in vals:
            raise ConfigError("duplicate key", lineno, key)
        vals[key] = raw
        where[key] = lineno
    if "schema" in vals and vals["schema"] != SCHEMA_ID:
        raise ConfigError(f"unsupported schema {vals['schema']!r}", where["schema"], "schema")
    if "blend" in vals and vals["blend"] != BLEND_ID:
        raise ConfigError(f"unsupported blend {vals['blend']!r}", where["blend"], "blend")
    if "kind" not in vals:
        raise ConfigError("missing required key", None, "kind")

    def get(key, cast=float, default=None, required=False):
        if key not in vals:
            if required:
                raise ConfigError("missing required key", None, key)
            return default
        return _num(vals[key], key, where[key], cast)

    kname = vals["kind"]
    if kname == "unbounded":
        kind = Unbounded(get("delta", required=True))
    elif kname == "derivative":
        kind = DerivativeBlowup(get("q", int, required=True), get("delta", required=True))
    elif kname == "zero":
        kind = Degenerate()
    else:
        raise ConfigError(f"unknown kind {kname!r}", where["kind"], "kind")

    def vec(key, cast):
        raw = vals.get(key, "").strip()
        if not raw:
            return ()
        return tuple(_num(s.strip(), key, where[key], cast) for s in raw.split(","))

    rvec, avec = vec("rvec", int), vec("avec", float)
    p = get("p", int, default=len(rvec))
    if p != len(rvec) or p != len(avec):
        raise ConfigError("p must equal the lengths of rvec and avec", where.get("p"), "p")
    log = LogFamily(rvec, avec, get("sigma", int, default=0))
    return build_profile(kind, T=get("T", default=1.0), x0=get("x0", default=0.0),
                         log=log, M_override=get("M"), y0=get("y0"))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
