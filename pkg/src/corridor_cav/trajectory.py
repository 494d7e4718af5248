"""Piecewise-cubic position trajectories under piecewise-linear control."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Arc:
    """One unconstrained arc: u = a*s + b, with s = t - origin.

    v = a s^2/2 + b s + c and p = a s^3/6 + b s^2/2 + c s + d. The optimizer
    re-bases time to the entry instant, so ``origin`` is normally ``t0``.
    """

    a: float
    b: float
    c: float
    d: float
    t_start: float
    t_end: float
    origin: float = 0.0

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise DomainError(f"arc interval [{self.t_start}, {self.t_end}] is empty")

    def u(self, t):
        s = np.asarray(t, dtype=float) - self.origin
        return self.a * s + self.b

    def v(self, t):
        s = np.asarray(t, dtype=float) - self.origin
        return 0.5 * self.a * s**2 + self.b * s + self.c

    def p(self, t):
        s = np.asarray(t, dtype=float) - self.origin
        return self.a * s**3 / 6.0 + 0.5 * self.b * s**2 + self.c * s + self.d

    @property
    def lambda_p(self) -> float:
        return self.a

    def lambda_v(self, t):
        return -self.u(t)

    def absolute_coefficients(self) -> tuple[float, float, float, float]:
        """Coefficients of the same polynomials written in absolute time t."""
        a, b, c, d, o = self.a, self.b, self.c, self.d, self.origin
        return (
            a,
            b - a * o,
            0.5 * a * o**2 - b * o + c,
            -a * o**3 / 6.0 + 0.5 * b * o**2 - c * o + d,
        )

    def energy(self) -> float:
        """Exact integral of u^2/2 over the arc."""
        s0 = self.t_start - self.origin
        s1 = self.t_end - self.origin
        a, b = self.a, self.b
        return 0.5 * (
            a * a * (s1**3 - s0**3) / 3.0 + a * b * (s1**2 - s0**2) + b * b * (s1 - s0)
        )

    def taylor(self, t: float) -> tuple[float, float, float, float]:
        """(p, v, u, jerk) at ``t``; p(t + s) = p + v s + u s^2/2 + jerk s^3/6."""
        return float(self.p(t)), float(self.v(t)), float(self.u(t)), self.a


def cruise_arc(t_start: float, t_end: float, p_start: float, speed: float) -> Arc:
    return Arc(0.0, 0.0, speed, p_start, t_start, t_end, origin=t_start)


class Trajectory:
    """Contiguous sequence of arcs; at a seam the later arc is reported."""

    def __init__(self, arcs: Sequence[Arc]):
        if not arcs:
            raise DomainError("trajectory needs at least one arc")
        for left, right in zip(arcs, arcs[1:]):
            if abs(left.t_end - right.t_start) > 1e-12:
                raise DomainError("arcs are not contiguous in time")
        self.arcs = tuple(arcs)
        self._starts = np.array([a.t_start for a in self.arcs])

    @property
    def t_start(self) -> float:
        return self.arcs[0].t_start

    @property
    def t_end(self) -> float:
        return self.arcs[-1].t_end

    @property
    def breakpoints(self) -> list[float]:
        return [a.t_start for a in self.arcs] + [self.t_end]

    def _index(self, t):
        t = np.asarray(t, dtype=float)
        tol = 1e-9
        if np.any(t < self.t_start - tol) or np.any(t > self.t_end + tol):
            raise DomainError(
                f"time outside trajectory span [{self.t_start}, {self.t_end}]"
            )
        idx = np.searchsorted(self._starts, t, side="right") - 1
        return np.clip(idx, 0, len(self.arcs) - 1)

    def _eval(self, t, attr):
        t_arr = np.asarray(t, dtype=float)
        idx = self._index(t_arr)
        out = np.empty(t_arr.shape)
        for k, arc in enumerate(self.arcs):
            mask = idx == k
            if np.any(mask):
                out[mask] = getattr(arc, attr)(t_arr[mask])
        return out if out.ndim else float(out)

    def p(self, t):
        return self._eval(t, "p")

    def v(self, t):
        return self._eval(t, "v")

    def u(self, t):
        return self._eval(t, "u")

    def arc_at(self, t: float) -> Arc:
        return self.arcs[int(self._index(t))]

    def time_at_position(self, x: float) -> float:
        """First time at which the position reaches ``x``."""
        for arc in self.arcs:
            p0 = float(arc.p(arc.t_start))
            p1 = float(arc.p(arc.t_end))
            if p0 >= x:
                return arc.t_start
            if p1 < x and not _max_on_arc_exceeds(arc, x):
                continue
            # p(t_start + s) - x as a cubic in s
            pp, vv, uu, jj = arc.taylor(arc.t_start)
            roots = np.roots([jj / 6.0, uu / 2.0, vv, pp - x])
            span = arc.t_end - arc.t_start
            cands = [
                r.real for r in roots
                if abs(r.imag) < 1e-9 and -1e-12 <= r.real <= span + 1e-12
            ]
            if cands:
                s = _polish(arc, x, min(cands), span)
                return arc.t_start + s
        raise DomainError(f"trajectory never reaches position {x}")


def _max_on_arc_exceeds(arc: Arc, x: float) -> bool:
    # v is quadratic on an arc; position can peak inside only where v = 0
    if arc.a == 0.0:
        return False
    s_v = np.roots([arc.a / 2.0, arc.b, arc.c])
    for s in s_v:
        if abs(s.imag) < 1e-12:
            t = arc.origin + s.real
            if arc.t_start < t < arc.t_end and float(arc.p(t)) >= x:
                return True
    return False


def _polish(arc: Arc, x: float, s: float, span: float) -> float:
    t0 = arc.t_start
    for _ in range(3):
        f = float(arc.p(t0 + s)) - x
        df = float(arc.v(t0 + s))
        if df == 0.0:
            break
        s -= f / df
    return min(max(s, 0.0), span)


def min_headway_margin(leader: Trajectory, follower: Trajectory, delta0: float, h: float,
                       t_from: float | None = None, t_to: float | None = None):
    """Exact minimum of p_L - p_F - (delta0 + h v_F) over the common time span.

    Returns ``(margin, t_at_min)``, or ``(inf, None)`` when the spans do not
    overlap.
    """
    lo = max(leader.t_start, follower.t_start)
    hi = min(leader.t_end, follower.t_end)
    if t_from is not None:
        lo = max(lo, t_from)
    if t_to is not None:
        hi = min(hi, t_to)
    if hi < lo:
        return float("inf"), None
    cuts = sorted({lo, hi, *[t for t in leader.breakpoints + follower.breakpoints if lo < t < hi]})
    best, t_best = float("inf"), None
    for ta, tb in zip(cuts[:-1], cuts[1:]) if len(cuts) > 1 else [(lo, lo)]:
        mid = 0.5 * (ta + tb)
        la, fa = leader.arc_at(mid), follower.arc_at(mid)
        pl, vl, ul, jl = la.taylor(ta)
        pf, vf, uf, jf = fa.taylor(ta)
        # f(s) = c0 + c1 s + c2 s^2 + c3 s^3
        c0 = pl - pf - delta0 - h * vf
        c1 = vl - vf - h * uf
        c2 = 0.5 * (ul - uf) - 0.5 * h * jf
        c3 = (jl - jf) / 6.0
        span = tb - ta
        cand = [0.0, span]
        if c3 != 0.0 or c2 != 0.0:
            for r in np.roots([3 * c3, 2 * c2, c1]) if c3 != 0.0 else [-c1 / (2 * c2)]:
                r = complex(r)
                if abs(r.imag) < 1e-12 and 0.0 < r.real < span:
                    cand.append(r.real)
        for s in cand:
            val = c0 + c1 * s + c2 * s * s + c3 * s**3
            if val < best:
                best, t_best = val, ta + s
    return best, t_best
