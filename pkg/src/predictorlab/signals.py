"""Time bookkeeping: sampling schedules, zero-order-hold inputs, dense state
histories and exogenous test signals.

Input signals are stored as exact piecewise-constant segments so that every
integral of the input is a finite sum of ``length * value`` terms.  State
histories keep the integrator nodes together with one-sided derivatives and
are evaluated with cubic Hermite interpolation.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, OutOfDomain


def _finite(*vals):
    return all(math.isfinite(v) for v in vals)


# --------------------------------------------------------------------------
# sampling schedule
# --------------------------------------------------------------------------

def schedule_next(tau_i: float, T1: float, b_val: float) -> float:
    """Next sampling time ``tau_i + T1 * exp(-b_val)``."""
    if not _finite(tau_i, T1, b_val):
        raise InvalidArgument("schedule_next: non-finite argument")
    if T1 <= 0:
        raise InvalidArgument(f"schedule_next: T1 must be positive, got {T1}")
    if b_val < 0:
        raise InvalidArgument(f"schedule_next: b must be non-negative, got {b_val}")
    return tau_i + T1 * math.exp(-b_val)


class SamplingSchedule:
    """Iterator over the sampling times ``0 = tau_0 < tau_1 < ...``.

    The gap after ``tau_i`` is ``T1 * exp(-b(tau_i))`` where ``b`` is any
    non-negative callable (typically an :class:`ExogenousSignal`).
    """

    def __init__(self, T1: float, b=None):
        if not (math.isfinite(T1) and T1 > 0):
            raise InvalidArgument(f"T1 must be positive and finite, got {T1}")
        self.T1 = float(T1)
        self.b = b if b is not None else ExogenousSignal.zero()

    def __iter__(self):
        tau = 0.0
        yield tau
        while True:
            tau = schedule_next(tau, self.T1, float(self.b(tau)))
            yield tau

    def times(self, t_end: float) -> list[float]:
        out = []
        for tau in self:
            if tau > t_end:
                break
            out.append(tau)
        return out


# --------------------------------------------------------------------------
# zero-order-hold signals
# --------------------------------------------------------------------------

class ZohSignal:
    """Right-open piecewise-constant signal.

    ``value(t) = values[j]`` for ``starts[j] <= t < starts[j+1]``.  The domain
    is ``[starts[0], end)``; ``end=None`` leaves the last segment open.
    New segments may be appended (the simulator records the applied input
    this way); existing segments are never modified.
    """

    def __init__(self, starts: Sequence[float], values: Sequence[float], end: float | None = None):
        starts = [float(s) for s in starts]
        values = [float(v) for v in values]
        if not starts or len(starts) != len(values):
            raise InvalidArgument("ZohSignal needs matching, non-empty starts and values")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise InvalidArgument("ZohSignal segment starts must be strictly increasing")
        if not all(math.isfinite(v) for v in starts + values):
            raise InvalidArgument("ZohSignal entries must be finite")
        if end is not None and end <= starts[-1]:
            raise InvalidArgument("ZohSignal end must lie after the last segment start")
        self._starts = starts
        self._values = values
        self.end = None if end is None else float(end)

    @classmethod
    def constant(cls, value: float, start: float, end: float | None = None) -> "ZohSignal":
        return cls([start], [value], end)

    @property
    def start(self) -> float:
        return self._starts[0]

    @property
    def starts(self) -> np.ndarray:
        return np.array(self._starts)

    @property
    def values(self) -> np.ndarray:
        return np.array(self._values)

    def __len__(self):
        return len(self._starts)

    def __repr__(self):
        return f"ZohSignal(n_segments={len(self)}, start={self.start}, end={self.end})"

    def segments(self):
        """List of ``(start, value)`` pairs."""
        return list(zip(self._starts, self._values))

    def append(self, start: float, value: float) -> None:
        if self.end is not None:
            raise InvalidArgument("cannot append to a signal with a closed domain")
        if not (math.isfinite(start) and math.isfinite(value)):
            raise InvalidArgument("appended segment must be finite")
        if start <= self._starts[-1]:
            raise InvalidArgument("appended segment must start after the last one")
        self._starts.append(float(start))
        self._values.append(float(value))

    def _check_time(self, t):
        if t < self._starts[0] or (self.end is not None and t >= self.end):
            raise OutOfDomain(f"t={t} outside signal domain [{self._starts[0]}, {self.end})")

    def value(self, t: float) -> float:
        self._check_time(t)
        return self._values[bisect_right(self._starts, t) - 1]

    __call__ = value

    def integral(self, a: float, b: float) -> float:
        """Exact integral over ``[a, b]`` as a sum of segment contributions."""
        if not _finite(a, b) or a > b:
            raise InvalidArgument(f"invalid integration interval [{a}, {b}]")
        if a < self._starts[0] or (self.end is not None and b > self.end):
            raise InvalidArgument(f"[{a}, {b}] not inside signal domain [{self._starts[0]}, {self.end})")
        if a == b:
            return 0.0
        starts, values = self._starts, self._values
        j = bisect_right(starts, a) - 1
        total = 0.0
        lo = a
        while j < len(starts) and lo < b:
            hi = starts[j + 1] if j + 1 < len(starts) else b
            hi = min(hi, b)
            total += (hi - lo) * values[j]
            lo = hi
            j += 1
        return total

    def cumulative(self, ts) -> np.ndarray:
        """Vectorised ``integral(start, t)`` for every entry of ``ts``."""
        ts = np.asarray(ts, dtype=float)
        starts = np.array(self._starts)
        values = np.array(self._values)
        if ts.size and (ts.min() < starts[0] or (self.end is not None and ts.max() > self.end)):
            raise InvalidArgument("cumulative: query outside signal domain")
        widths = np.diff(starts)
        prefix = np.concatenate(([0.0], np.cumsum(widths * values[:-1])))
        j = np.searchsorted(starts, ts, side="right") - 1
        return prefix[j] + values[j] * (ts - starts[j])

    def window(self, a: float, b: float) -> "ZohSignal":
        """Restriction to ``[a, b)``, keeping absolute time."""
        if a >= b:
            raise InvalidArgument("window needs a < b")
        if a < self._starts[0] or (self.end is not None and b > self.end):
            raise InvalidArgument(f"signal does not cover [{a}, {b})")
        j0 = bisect_right(self._starts, a) - 1
        j1 = bisect_right(self._starts, b) - 1
        # drop a trailing segment that starts exactly at b
        if self._starts[j1] >= b:
            j1 -= 1
        starts = [a] + self._starts[j0 + 1:j1 + 1]
        values = self._values[j0:j1 + 1]
        return ZohSignal(starts, values, end=b)

    def translate(self, offset: float) -> "ZohSignal":
        end = None if self.end is None else self.end + offset
        return ZohSignal([s + offset for s in self._starts], self._values, end)

    def sup_abs(self, a: float | None = None, b: float | None = None) -> float:
        """Largest ``|u|`` over ``[a, b)``; exact for piecewise-constant data."""
        a = self._starts[0] if a is None else a
        if b is None:
            b = self.end if self.end is not None else math.inf
        if b <= a:
            return 0.0
        j0 = max(bisect_right(self._starts, a) - 1, 0)
        best = 0.0
        for j in range(j0, len(self._starts)):
            s = self._starts[j]
            if s >= b:
                break
            nxt = self._starts[j + 1] if j + 1 < len(self._starts) else math.inf
            if nxt <= a:
                continue
            best = max(best, abs(self._values[j]))
        return best

    def breakpoints(self) -> list[float]:
        """Interior discontinuity candidates (every start after the first)."""
        return self._starts[1:]


def zoh_eval(u: ZohSignal, t: float) -> float:
    return u.value(t)


def zoh_integral(u: ZohSignal, a: float, b: float) -> float:
    return u.integral(a, b)


def shift_history(u: ZohSignal, t_now: float, r_plus_tau: float) -> ZohSignal:
    """Translate the open history on ``[t_now - r_plus_tau, t_now)`` to ``[0, r_plus_tau)``.

    The result ``v`` satisfies ``v(s) = u(t_now - r_plus_tau + s)``.
    """
    if not (r_plus_tau > 0 and math.isfinite(r_plus_tau) and math.isfinite(t_now)):
        raise InvalidArgument("shift_history needs a positive, finite window")
    a = t_now - r_plus_tau
    if a < u.start or (u.end is not None and t_now > u.end):
        raise InvalidArgument(
            f"input history does not cover [{a}, {t_now}) (domain starts at {u.start})")
    w = u.window(a, t_now)
    starts = [0.0]
    values = [w._values[0]]
    for s, v in zip(w._starts[1:], w._values[1:]):
        s2 = s - a
        if s2 <= starts[-1] or s2 >= r_plus_tau:
            # rounding collapsed the segment; later value wins
            if s2 <= starts[-1]:
                values[-1] = v
            continue
        starts.append(s2)
        values.append(v)
    return ZohSignal(starts, values, end=r_plus_tau)


# --------------------------------------------------------------------------
# dense state history
# --------------------------------------------------------------------------

class StateHistory:
    """Append-only record of ``x(t)`` with one-sided derivatives.

    Node ``k`` stores ``x_k``, the left derivative ``dl_k`` (end of the step
    arriving at the node) and the right derivative ``dr_k`` (start of the
    step leaving it).  Between nodes the cubic Hermite interpolant built from
    ``dr_k`` and ``dl_{k+1}`` is used, so derivative jumps at input
    breakpoints do not pollute the interpolant.  Interpolation order degrades
    at corners of a merely piecewise-smooth initial history.
    """

    def __init__(self, n: int, capacity: int = 1024):
        self.n = int(n)
        cap = max(int(capacity), 4)
        self._t = np.empty(cap)
        self._x = np.empty((cap, self.n))
        self._dl = np.empty((cap, self.n))
        self._dr = np.empty((cap, self.n))
        self._size = 0

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, x, t0: float, t1: float) -> "StateHistory":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        h = cls(x.size)
        zero = np.zeros_like(x)
        if t1 > t0:
            h._push(t0, x, zero, zero)
        h._push(t1, x, zero, np.full_like(x, np.nan))
        return h

    @classmethod
    def from_samples(cls, ts, xs, dxs=None) -> "StateHistory":
        """History through the given nodes.

        Without derivatives the secant slopes are used, which reproduces
        piecewise-linear interpolation exactly.
        """
        ts = np.asarray(ts, dtype=float)
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        if ts.ndim != 1 or len(ts) != len(xs) or len(ts) == 0:
            raise InvalidArgument("from_samples: shape mismatch")
        if np.any(np.diff(ts) <= 0):
            raise InvalidArgument("from_samples: times must be strictly increasing")
        h = cls(xs.shape[1], capacity=len(ts) + 16)
        if dxs is None:
            if len(ts) == 1:
                sl = np.zeros((0, xs.shape[1]))
            else:
                sl = np.diff(xs, axis=0) / np.diff(ts)[:, None]
            dl = np.vstack([sl[:1] if len(sl) else np.zeros((1, xs.shape[1])), sl])
            dr = np.vstack([sl, np.full((1, xs.shape[1]), np.nan)])
        else:
            dxs = np.asarray(dxs, dtype=float).reshape(xs.shape)
            dl = dxs.copy()
            dr = dxs.copy()
            dr[-1] = np.nan
        for k in range(len(ts)):
            h._push(ts[k], xs[k], dl[k], dr[k])
        return h

    def _grow(self):
        cap = 2 * len(self._t)
        for name in ("_t", "_x", "_dl", "_dr"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:])
            new[: self._size] = old[: self._size]
            setattr(self, name, new)

    def _push(self, t, x, dl, dr):
        if self._size and t <= self._t[self._size - 1]:
            raise InvalidArgument("history nodes must be strictly increasing")
        if self._size == len(self._t):
            self._grow()
        k = self._size
        self._t[k] = t
        self._x[k] = x
        self._dl[k] = dl
        self._dr[k] = dr
        self._size += 1

    def append_steps(self, ts, xs, d_start, d_end) -> None:
        """Append integrator nodes.

        ``d_start[k]`` is the derivative at the beginning of step ``k`` (the
        right derivative of the node preceding ``ts[k]``); ``d_end[k]`` is the
        derivative at ``ts[k]`` evaluated with the inputs of step ``k``.
        """
        m = len(ts)
        if m == 0:
            return
        if self._size == 0:
            raise InvalidArgument("append_steps needs an initial node")
        if ts[0] <= self._t[self._size - 1]:
            raise InvalidArgument("history nodes must be strictly increasing")
        while self._size + m > len(self._t):
            self._grow()
        k0 = self._size
        self._dr[k0 - 1] = d_start[0]
        self._t[k0:k0 + m] = ts
        self._x[k0:k0 + m] = xs
        self._dl[k0:k0 + m] = d_end
        if m > 1:
            self._dr[k0:k0 + m - 1] = d_start[1:]
        self._dr[k0 + m - 1] = np.nan
        self._size += m

    # queries ------------------------------------------------------------
    @property
    def t_first(self) -> float:
        return float(self._t[0])

    @property
    def t_last(self) -> float:
        return float(self._t[self._size - 1])

    @property
    def times(self) -> np.ndarray:
        return self._t[: self._size].copy()

    @property
    def states(self) -> np.ndarray:
        return self._x[: self._size].copy()

    def __len__(self):
        return self._size

    def sample(self, t: float) -> np.ndarray:
        """Interpolated state at ``t``; exact at stored nodes."""
        size = self._size
        if size == 0 or not math.isfinite(t):
            raise OutOfDomain("empty history or non-finite query")
        ts = self._t[:size]
        if t < ts[0] or t > ts[size - 1]:
            raise OutOfDomain(f"t={t} outside history window [{ts[0]}, {ts[size - 1]}]")
        k = int(np.searchsorted(ts, t, side="right")) - 1
        if ts[k] == t:
            return self._x[k].copy()
        t0, t1 = ts[k], ts[k + 1]
        hh = t1 - t0
        s = (t - t0) / hh
        s2 = s * s
        s3 = s2 * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        return (h00 * self._x[k] + h10 * hh * self._dr[k]
                + h01 * self._x[k + 1] + h11 * hh * self._dl[k + 1])

    def sample_many(self, tq) -> np.ndarray:
        tq = np.asarray(tq, dtype=float)
        size = self._size
        ts = self._t[:size]
        if tq.size and (tq.min() < ts[0] or tq.max() > ts[size - 1]):
            raise OutOfDomain("sample_many: query outside history window")
        k = np.searchsorted(ts, tq, side="right") - 1
        k = np.clip(k, 0, max(size - 2, 0))
        out = np.empty((tq.size, self.n))
        if size == 1:
            out[:] = self._x[0]
            return out
        t0 = ts[k]
        hh = ts[k + 1] - t0
        s = ((tq - t0) / hh)[:, None]
        s2 = s * s
        s3 = s2 * s
        dr = np.nan_to_num(self._dr[k])
        out = ((2 * s3 - 3 * s2 + 1) * self._x[k] + (s3 - 2 * s2 + s) * hh[:, None] * dr
               + (-2 * s3 + 3 * s2) * self._x[k + 1] + (s3 - s2) * hh[:, None] * self._dl[k + 1])
        exact = ts[k] == tq
        out[exact] = self._x[k[exact]]
        at_end = tq == ts[size - 1]
        out[at_end] = self._x[size - 1]
        return out

    def sup_norm(self, a: float, b: float) -> float:
        """Max Euclidean norm over the nodes in ``[a, b]`` (0 if none)."""
        ts = self._t[: self._size]
        i0 = np.searchsorted(ts, a, side="left")
        i1 = np.searchsorted(ts, b, side="right")
        if i1 <= i0:
            return 0.0
        return float(np.linalg.norm(self._x[i0:i1], axis=1).max())


def history_sample(h: StateHistory, t: float) -> np.ndarray:
    return h.sample(t)


# --------------------------------------------------------------------------
# exogenous signals
# --------------------------------------------------------------------------

_KINDS = ("zero", "constant", "sinusoid", "piecewise", "noise")


@dataclass(frozen=True)
class ExogenousSignal:
    """Deterministic scalar test signal used for ``d``, ``xi`` and ``b``.

    kinds
        ``zero``; ``constant`` (``value``); ``sinusoid`` (``amplitude``,
        ``frequency`` in rad/s, ``phase``, ``offset``); ``piecewise``
        (``times``, ``values``: value ``values[j]`` on ``[times[j],
        times[j+1])``, ``values[0]`` before ``times[0]``); ``noise``
        (``amplitude``, ``seed``, ``offset``, ``cell``: uniform draws in
        ``offset +- amplitude`` held constant on cells of width ``cell``).
    """

    kind: str = "zero"
    value: float = 0.0
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0
    offset: float = 0.0
    times: tuple = ()
    values: tuple = ()
    seed: int = 0
    cell: float = 0.01
    _cache: list = field(default_factory=list, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidArgument(f"unknown signal kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "piecewise":
            if not self.times or len(self.times) != len(self.values):
                raise InvalidArgument("piecewise signal needs matching times and values")
            if any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise InvalidArgument("piecewise signal times must increase")
            object.__setattr__(self, "times", tuple(float(t) for t in self.times))
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "noise" and not self.cell > 0:
            raise InvalidArgument("noise cell width must be positive")

    # convenience constructors
    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def const(cls, value):
        return cls("constant", value=float(value))

    @classmethod
    def sinusoid(cls, amplitude, frequency=1.0, phase=0.0, offset=0.0):
        return cls("sinusoid", amplitude=float(amplitude), frequency=float(frequency),
                   phase=float(phase), offset=float(offset))

    @classmethod
    def piecewise(cls, times, values):
        return cls("piecewise", times=tuple(times), values=tuple(values))

    @classmethod
    def noise(cls, amplitude, seed=0, offset=0.0, cell=0.01):
        return cls("noise", amplitude=float(amplitude), seed=int(seed), offset=float(offset),
                   cell=float(cell))

    def _noise_values(self, kmax: int) -> np.ndarray:
        cache = self._cache
        if not cache:
            cache.append(np.random.default_rng(self.seed))
            cache.append(np.empty(0))
        rng, vals = cache
        while len(vals) <= kmax:
            vals = np.concatenate([vals, rng.uniform(-1.0, 1.0, size=max(1024, len(vals)))])
        cache[1] = vals
        return vals

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        t = np.asarray(t, dtype=float)
        kind = self.kind
        if kind == "zero":
            out = np.zeros_like(t)
        elif kind == "constant":
            out = np.full_like(t, self.value)
        elif kind == "sinusoid":
            out = self.offset + self.amplitude * np.sin(self.frequency * t + self.phase)
        elif kind == "piecewise":
            idx = np.searchsorted(np.array(self.times), t, side="right") - 1
            out = np.array(self.values)[np.clip(idx, 0, None)]
        else:
            k = np.floor(np.maximum(t, 0.0) / self.cell).astype(np.int64)
            vals = self._noise_values(int(k.max()) if k.size else 0)
            out = self.offset + self.amplitude * vals[k]
        return float(out) if scalar else out

    def breakpoints(self, t_end: float) -> list[float]:
        """Discontinuity times in ``(0, t_end)``."""
        if self.kind == "piecewise":
            return [t for t in self.times if 0.0 < t < t_end]
        if self.kind == "noise":
            nmax = int(math.ceil(t_end / self.cell))
            return [k * self.cell for k in range(1, nmax) if k * self.cell < t_end]
        return []

    def lower_bound(self) -> float:
        """Infimum of the signal (used to validate ``b >= 0``)."""
        k = self.kind
        if k == "zero":
            return 0.0
        if k == "constant":
            return self.value
        if k == "sinusoid":
            return self.offset - abs(self.amplitude)
        if k == "piecewise":
            return min(self.values)
        return self.offset - abs(self.amplitude)

    def sup_abs(self) -> float:
        """Global supremum of ``|signal|``."""
        k = self.kind
        if k == "zero":
            return 0.0
        if k == "constant":
            return abs(self.value)
        if k == "piecewise":
            return max(abs(v) for v in self.values)
        return abs(self.offset) + abs(self.amplitude)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["value"] = self.value
        elif self.kind == "sinusoid":
            d.update(amplitude=self.amplitude, frequency=self.frequency, phase=self.phase,
                     offset=self.offset)
        elif self.kind == "piecewise":
            d.update(times=list(self.times), values=list(self.values))
        elif self.kind == "noise":
            d.update(amplitude=self.amplitude, seed=self.seed, offset=self.offset, cell=self.cell)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExogenousSignal":
        d = dict(d)
        kind = d.pop("kind", "zero")
        if "times" in d:
            d["times"] = tuple(d["times"])
        if "values" in d:
            d["values"] = tuple(d["values"])
        return cls(kind, **d)


def merge_times(groups: Iterable[Iterable[float]], tol: float = 1e-9) -> list[float]:
    """Sorted union of several time lists with near-duplicates collapsed."""
    allt = sorted(t for g in groups for t in g)
    out: list[float] = []
    for t in allt:
        if out and t - out[-1] <= tol:
            continue
        out.append(t)
    return out
