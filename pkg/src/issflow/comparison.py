"""Piecewise-linear comparison functions.

Gains, decrease rates, and decay envelopes are all represented as
piecewise-linear nondecreasing curves with a linear tail, so evaluation,
inversion, and composition stay exact up to floating point.  Two-argument
decay envelopes are built from a one-argument decrease rate, either by
integrating a scalar ODE (continuous time) or by iterating a recursion
(discrete time).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ContractError, DomainError


class DecreaseClipWarning(UserWarning):
    """The discrete decrease rate was clipped to keep one-step maps monotone."""


def _as_float_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ContractError("expected a nonempty 1-d array")
    return a


@dataclass(frozen=True)
class MonotoneCurve:
    """Nondecreasing piecewise-linear function on [0, inf).

    The graph interpolates (breakpoints[i], values[i]) and continues past the
    last breakpoint with slope tail_slope.  breakpoints[0] and values[0] must
    both be 0 so the curve is a comparison function candidate.  strict=True
    additionally asserts strict increase (every segment slope positive and a
    positive tail), which is what inversion requires.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    tail_slope: float
    strict: bool = False

    def __post_init__(self):
        bp = _as_float_array(self.breakpoints)
        v = _as_float_array(self.values)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tail_slope", float(self.tail_slope))
        if bp.shape != v.shape:
            raise ContractError("breakpoints and values must have equal length")
        if bp[0] != 0.0 or v[0] != 0.0:
            raise ContractError("curve must pass through the origin")
        if np.any(np.diff(bp) <= 0):
            raise ContractError("breakpoints must be strictly increasing")
        if np.any(np.diff(v) < 0) or self.tail_slope < 0:
            raise ContractError("values must be nondecreasing with tail_slope >= 0")
        if self.strict:
            if bp.size > 1 and np.any(np.diff(v) <= 0):
                raise ContractError("strict curve has a flat segment")
            if self.tail_slope <= 0:
                raise ContractError("strict curve needs a positive tail slope")

    def evaluate(self, r):
        """Value at r; r may be a scalar or array, and must be >= 0."""
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0):
            raise DomainError("curve evaluated at a negative argument")
        out = np.interp(r_arr, self.breakpoints, self.values)
        last_b, last_v = self.breakpoints[-1], self.values[-1]
        out = np.where(r_arr > last_b, last_v + self.tail_slope * (r_arr - last_b), out)
        return float(out) if np.isscalar(r) or r_arr.ndim == 0 else out

    def __call__(self, r):
        return self.evaluate(r)

    def invert(self, s):
        """Unique r with evaluate(r) == s.  Requires a strict curve."""
        if not self.strict:
            raise ContractError("inversion requires a strictly increasing curve")
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < 0):
            raise DomainError("inverse evaluated at a negative argument")
        out = np.interp(s_arr, self.values, self.breakpoints)
        last_b, last_v = self.breakpoints[-1], self.values[-1]
        out = np.where(s_arr > last_v, last_b + (s_arr - last_v) / self.tail_slope, out)
        return float(out) if np.isscalar(s) or s_arr.ndim == 0 else out

    def is_unbounded(self) -> bool:
        return self.tail_slope > 0

    def to_dict(self) -> dict:
        return {
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
            "tail_slope": self.tail_slope,
            "strict": self.strict,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonotoneCurve":
        return cls(
            breakpoints=np.asarray(d["breakpoints"], dtype=float),
            values=np.asarray(d["values"], dtype=float),
            tail_slope=float(d["tail_slope"]),
            strict=bool(d["strict"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "MonotoneCurve":
        return cls.from_dict(json.loads(s))


def linear_curve(slope: float) -> MonotoneCurve:
    """The curve r -> slope * r (strict when slope > 0)."""
    return MonotoneCurve(np.array([0.0]), np.array([0.0]), slope, strict=slope > 0)


def pw_from_samples(rs, vs, tail_slope=None, strict=None) -> MonotoneCurve:
    """Interpolating curve through (rs, vs) with a linear tail.

    tail_slope defaults to the slope of the last segment.  No shifting or
    inflation happens here; use majorize_kinfty for a certified majorant.
    """
    rs = _as_float_array(rs)
    vs = _as_float_array(vs)
    if tail_slope is None:
        tail_slope = (vs[-1] - vs[-2]) / (rs[-1] - rs[-2]) if rs.size > 1 else 0.0
    if strict is None:
        strict = bool(np.all(np.diff(vs) > 0)) and tail_slope > 0 and rs.size >= 1
    return MonotoneCurve(rs, vs, float(tail_slope), strict=strict)


def add_linear_term(curve: MonotoneCurve, slope: float) -> MonotoneCurve:
    """Pointwise sum curve(r) + slope * r."""
    if slope < 0:
        raise ContractError("slope must be nonnegative")
    vals = curve.values + slope * curve.breakpoints
    tail = curve.tail_slope + slope
    strict = tail > 0 and (vals.size == 1 or bool(np.all(np.diff(vals) > 0)))
    return MonotoneCurve(curve.breakpoints.copy(), vals, tail, strict=strict)


def scale_curve(curve: MonotoneCurve, factor: float) -> MonotoneCurve:
    """Pointwise product factor * curve(r) for factor > 0."""
    if factor <= 0:
        raise ContractError("factor must be positive")
    return MonotoneCurve(
        curve.breakpoints.copy(),
        factor * curve.values,
        factor * curve.tail_slope,
        strict=curve.strict,
    )


def invert_curve(curve: MonotoneCurve) -> MonotoneCurve:
    """Exact piecewise-linear inverse of a strict unbounded curve.

    Swapping the breakpoint and value axes inverts a strictly increasing
    piecewise-linear map exactly; the tail slope becomes its reciprocal.
    """
    if not curve.strict:
        raise ContractError("only strict curves are invertible")
    return MonotoneCurve(
        curve.values.copy(),
        curve.breakpoints.copy(),
        1.0 / curve.tail_slope,
        strict=True,
    )


def compose(outer: MonotoneCurve, inner: MonotoneCurve) -> MonotoneCurve:
    """Exact piecewise-linear representation of outer(inner(r)).

    The result's breakpoints are inner's breakpoints plus the pullbacks of
    outer's breakpoints through each linear piece of inner, so every segment
    of the composition is genuinely linear.
    """
    bp_in, v_in = inner.breakpoints, inner.values
    knots = set(bp_in.tolist())
    targets = outer.breakpoints
    for i in range(bp_in.size - 1):
        lo, hi = v_in[i], v_in[i + 1]
        if hi <= lo:
            continue
        inside = targets[(targets > lo) & (targets < hi)]
        for t in inside:
            knots.add(bp_in[i] + (t - lo) * (bp_in[i + 1] - bp_in[i]) / (hi - lo))
    if inner.tail_slope > 0:
        beyond = targets[targets > v_in[-1]]
        for t in beyond:
            knots.add(bp_in[-1] + (t - v_in[-1]) / inner.tail_slope)
    bp = np.array(sorted(knots))
    vals = np.array([outer.evaluate(inner.evaluate(b)) for b in bp])
    tail = outer.tail_slope * inner.tail_slope if inner.tail_slope > 0 else 0.0
    return MonotoneCurve(bp, vals, tail, strict=outer.strict and inner.strict)


def majorize_kinfty(rs, vs, anchor_gap=None) -> MonotoneCurve:
    """Strictly increasing unbounded majorant of nondecreasing sample data.

    Given levels 0 = r_0 < r_1 < ... < r_K with nondecreasing ordinates
    starting at 0, the returned curve interpolates the shifted pairs
    (r_k, v_{k+1}) and then adds an eps * r term with
    eps = 1e-9 * max(1, v_K).  The shift makes the curve dominate any
    nondecreasing function passing through the samples on [anchor_gap, r_K],
    which is what turns empirical sublevel maxima into a usable gain.

    anchor_gap is the abscissa at which the curve is allowed to have climbed
    from 0 to v_1; it must be below the smallest positive abscissa whose
    ordinate needs to be dominated (default r_1 / 2).
    """
    rs = _as_float_array(rs)
    vs = _as_float_array(vs)
    if rs.shape != vs.shape:
        raise ContractError("sample arrays must have equal length")
    if rs[0] != 0.0 or np.any(np.diff(rs) <= 0):
        raise ContractError("sample abscissae must strictly increase from 0")
    if vs[0] != 0.0 or np.any(vs < 0) or np.any(np.diff(vs) < 0):
        raise ContractError("sample ordinates must be nondecreasing from 0")
    eps = 1e-9 * max(1.0, float(vs[-1]))
    if rs.size == 1:
        return linear_curve(eps)
    bp = list(rs[:-1])
    val = list(vs[1:])
    if val[0] > 0.0:
        gap = float(anchor_gap) if anchor_gap is not None else rs[1] / 2.0
        if not 0.0 < gap < rs[1]:
            raise ContractError("anchor_gap must lie strictly between 0 and the first positive level")
        bp = [0.0, gap] + bp[1:]
        val = [0.0, val[0]] + val[1:]
    else:
        bp[0], val[0] = 0.0, 0.0
    bp_arr = np.array(bp)
    val_arr = np.array(val)
    tail = (val_arr[-1] - val_arr[-2]) / (bp_arr[-1] - bp_arr[-2]) if bp_arr.size > 1 else 0.0
    return MonotoneCurve(bp_arr, val_arr + eps * bp_arr, tail + eps, strict=True)


def monotone_minorant(rs, vs, tail_slope: float = 0.0) -> MonotoneCurve:
    """Largest nondecreasing piecewise-linear function below the samples.

    Used to turn a pointwise-valid but possibly non-monotone decrease bound
    into a comparison-function candidate without ever overstating it.
    """
    rs = _as_float_array(rs)
    vs = np.minimum.accumulate(_as_float_array(vs)[::-1])[::-1]
    vs = np.maximum(vs, 0.0)
    if vs[0] != 0.0:
        vs = vs.copy()
        vs[0] = 0.0
    return MonotoneCurve(rs, vs, tail_slope, strict=False)


def _clip_to_identity(alpha: MonotoneCurve) -> tuple[MonotoneCurve, bool]:
    # refine the grid so min(alpha(r), r) is linear on every output segment
    knots = set(alpha.breakpoints.tolist())
    b, v = alpha.breakpoints, alpha.values
    for i in range(b.size - 1):
        d0, d1 = v[i] - b[i], v[i + 1] - b[i + 1]
        if d0 * d1 < 0:
            knots.add(b[i] + d0 * (b[i + 1] - b[i]) / (d0 - d1))
    if alpha.tail_slope != 1.0:
        # tail line v[-1] + s (r - b[-1]) crosses the identity at most once
        cross = (v[-1] - alpha.tail_slope * b[-1]) / (1.0 - alpha.tail_slope)
        if cross > b[-1]:
            knots.add(cross)
    grid = np.array(sorted(knots))
    raw = alpha.evaluate(grid)
    raw = np.atleast_1d(raw)
    clipped = np.minimum(raw, grid)
    probe = grid[-1] + max(1.0, grid[-1])
    identity_wins_far = alpha.evaluate(probe) > probe
    tail = 1.0 if identity_wins_far else alpha.tail_slope
    changed = bool(np.any(raw > grid * (1.0 + 1e-15))) or identity_wins_far
    return MonotoneCurve(grid, clipped, tail, strict=False), changed


@dataclass
class KLCurve:
    """Two-argument decay envelope beta(r, t) from a decrease rate.

    mode "continuous": beta(r, .) solves y' = -alpha(y)/2 from y(0) = r.
    mode "discrete":   beta(r, t) iterates y <- y - alpha(y), t integer steps,
    after alpha has been clipped to min(alpha(r), r) so iterates stay
    nonnegative (a warning reports when clipping was active).

    Evaluations are cached per initial value on a monotone grid; for the
    continuous mode the cached chords overestimate the convex solution, so
    interpolation errs on the conservative side.
    """

    alpha: MonotoneCurve
    mode: str
    rtol: float = 1e-8
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in ("continuous", "discrete"):
            raise ContractError("mode must be 'continuous' or 'discrete'")
        if not self.alpha.strict:
            raise ContractError("decrease rate must be a strict class-K curve")
        if self.mode == "discrete":
            clipped, changed = _clip_to_identity(self.alpha)
            if changed:
                warnings.warn(
                    "decrease rate exceeded the identity and was clipped to keep "
                    "one-step iterates nonnegative",
                    DecreaseClipWarning,
                )
            self.alpha = clipped

    def evaluate(self, r: float, t: float) -> float:
        r = float(r)
        t = float(t)
        if r < 0 or t < 0:
            raise DomainError("beta arguments must be nonnegative")
        if r == 0.0:
            return 0.0
        if self.mode == "discrete":
            return self._discrete(r, int(math.floor(t)))
        return self._continuous(r, t)

    def __call__(self, r, t):
        return self.evaluate(r, t)

    def _discrete(self, r: float, n: int) -> float:
        # cache entries are only ever replaced, never mutated in place, so
        # concurrent evaluations see consistent lists and agree on prefixes
        ys = self._cache.get(r)
        if ys is None or len(ys) <= n:
            ys = list(ys) if ys is not None else [r]
            while len(ys) <= n:
                y = ys[-1]
                ys.append(max(0.0, y - self.alpha.evaluate(y)))
            self._cache[r] = ys
        return ys[n]

    def _continuous(self, r: float, t: float) -> float:
        # the solve horizon is a pure function of t (power-of-two buckets),
        # so the interpolation grid backing an evaluation never depends on
        # which other times were requested first — results are reproducible
        # across evaluation orders and concurrent callers
        horizon = 1.0
        while horizon < t:
            horizon *= 2.0
        key = (r, horizon)
        cached = self._cache.get(key)
        if cached is None:
            cached = self._solve(r, horizon)
            self._cache[key] = cached
        ts, ys = cached
        return float(np.interp(t, ts, ys))

    def _solve(self, r: float, horizon: float):
        atol = 1e-12 * (1.0 + r)

        def rhs(_, y):
            return [-0.5 * self.alpha.evaluate(max(y[0], 0.0))]

        sol = solve_ivp(
            rhs, (0.0, horizon), [r], method="RK45",
            rtol=self.rtol, atol=atol, dense_output=True,
        )
        ts = [0.0]
        for i in range(sol.t.size - 1):
            t0, t1 = sol.t[i], sol.t[i + 1]
            y0 = max(float(sol.y[0, i]), 0.0)
            # subdivide so linear chords track the convex solution to ~1e-9
            curv = 0.25 * self.alpha.evaluate(y0) * self._alpha_slope(y0)
            h = t1 - t0
            budget = 1e-9 * (1.0 + y0)
            n_sub = 1 if curv <= 0 else int(min(256, max(1, math.ceil(h * math.sqrt(curv / (8.0 * budget))))))
            ts.extend(t0 + h * (k + 1) / n_sub for k in range(n_sub))
        ts = np.array(ts)
        ys = sol.sol(ts)[0]
        ys = np.minimum.accumulate(np.clip(ys, 0.0, r))
        return ts, ys

    def _alpha_slope(self, y: float) -> float:
        b = self.alpha.breakpoints
        i = int(np.searchsorted(b, y, side="right")) - 1
        if i >= b.size - 1:
            return self.alpha.tail_slope
        return (self.alpha.values[i + 1] - self.alpha.values[i]) / (b[i + 1] - b[i])


def kl_from_decrease(alpha: MonotoneCurve, mode: str, rtol: float = 1e-8) -> KLCurve:
    """Decay envelope induced by a decrease rate; see KLCurve."""
    return KLCurve(alpha=alpha, mode=mode, rtol=rtol)
