"""Event manifolds, crossing detection and trigger-time inversion.

An event is a scalar function ``e(x)`` whose zero set stops the propagation.
Every event kind goes through :func:`event_value`, which works on floats and on
:class:`TPoly` alike, so neural event nets are composed into the flow the same
way as spheres and planes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import polyalg as pa
from .errors import ConfigError, EventMissedError, TransversalityError
from .jetflow import FlowExpansion, Trajectory, expand_flow_to_event, rk_step
from .netpoly import PolicyNet, eval_net
from .polyalg import TaylorMap, TPoly

EPS_TRANSVERSAL = 1e-8
DIRECTIONS = ("any", "rising", "falling")
KINDS = ("sphere", "plane", "neural", "custom")


@dataclass(frozen=True)
class EventSpec:
    """Event manifold ``e(x) = 0`` over the state entries listed in ``indices``.

    ``scale`` is a typical magnitude of ``e``; refinement and grazing
    tolerances are relative to it.
    """

    kind: str
    center: tuple = ()
    radius: float = 0.0
    normal: tuple = ()
    offset: float = 0.0
    net: PolicyNet | None = None
    func: Callable | None = None
    indices: tuple = (0, 1, 2)
    direction: str = "any"
    refine_tol: float = 1e-12
    graze_tol: float = 1e-10
    eps_transversal: float = EPS_TRANSVERSAL
    scale: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown event kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"crossing direction must be one of {DIRECTIONS}")
        if self.kind == "sphere" and (len(self.center) != len(self.indices) or not self.radius > 0):
            raise ConfigError("sphere needs a center per index and a positive radius")
        if self.kind == "plane" and len(self.normal) != len(self.indices):
            raise ConfigError("plane needs a normal entry per index")
        if self.kind == "neural":
            if self.net is None or self.net.output_dim != 1:
                raise ConfigError("neural event needs a network with one output")
            if self.net.input_dim != len(self.indices):
                raise ConfigError("event net input_dim does not match indices")
        if self.kind == "custom" and self.func is None:
            raise ConfigError("custom event needs func")

    @classmethod
    def sphere(cls, center, radius, **kw):
        kw.setdefault("scale", float(radius) ** 2)
        return cls("sphere", center=tuple(float(c) for c in center), radius=float(radius), **kw)

    @classmethod
    def plane(cls, normal, offset=0.0, **kw):
        return cls("plane", normal=tuple(float(c) for c in normal), offset=float(offset), **kw)

    @classmethod
    def neural(cls, net: PolicyNet, **kw):
        return cls("neural", net=net, **kw)

    @classmethod
    def custom(cls, func: Callable, **kw):
        """``func(state)`` must use only algebra-generic operations."""
        return cls("custom", func=func, **kw)


def event_value(spec: EventSpec, state: Sequence):
    """Event function on a full state vector of floats or TPoly."""
    if spec.kind == "custom":
        return spec.func(state)
    if max(spec.indices) >= len(state):
        raise ConfigError(f"event reads state index {max(spec.indices)} of a {len(state)}-vector")
    p = [state[i] for i in spec.indices]
    if spec.kind == "sphere":
        acc = -(spec.radius * spec.radius)
        for x, c in zip(p, spec.center):
            d = x - c if c != 0.0 else x
            acc = d * d + acc
        return acc
    if spec.kind == "plane":
        acc = -spec.offset
        for x, n in zip(p, spec.normal):
            if n != 0.0:
                acc = n * x + acc
        return acc
    return eval_net(spec.net, p)[0]


def _const(v) -> float:
    return v.const if isinstance(v, TPoly) else float(v)


def event_rate(spec: EventSpec, y: np.ndarray, f: np.ndarray) -> float:
    """de/dt at state ``y`` moving with velocity ``f``."""
    if spec.kind == "plane":
        return float(sum(n * f[i] for n, i in zip(spec.normal, spec.indices)))
    if spec.kind == "sphere":
        return float(sum(2.0 * (y[i] - c) * f[i] for c, i in zip(spec.center, spec.indices)))
    space = pa.get_space(1, 1)
    e = event_value(spec, [TPoly(space, np.array([yi, fi], dtype=float)) for yi, fi in zip(y, f)])
    return float(e.coeffs[1]) if isinstance(e, TPoly) else 0.0


def _crosses(spec: EventSpec, e0: float, e1: float) -> bool:
    if e0 == 0.0:
        return False
    rising = e0 < 0.0 <= e1
    falling = e0 > 0.0 >= e1
    if spec.direction == "rising":
        return rising
    if spec.direction == "falling":
        return falling
    return rising or falling


def _rate_root(spec, fun, t0, y0, f0, h, y1, f1):
    """Time of the extremum of e inside the step when the rate changes sign, else None."""
    if not event_rate(spec, y0, f0) * event_rate(spec, y1, f1) < 0.0:
        return None

    def rate(tau):
        y, f, _ = rk_step(fun, t0, y0, f0, tau)
        return event_rate(spec, y, f)

    return brentq(rate, 0.0, h, xtol=1e-14 * max(h, 1e-300), rtol=4 * np.finfo(float).eps)


def _bracket(spec, fun, t0, y0, f0, h, y1=None, f1=None):
    """Sub-interval of the step holding the first accepted crossing, or None.

    Checks the end points first, then the two halves split at an interior
    extremum of e (a step can pass in and out of the manifold).  Raises on an
    extremum inside the graze band.
    """
    if y1 is None:
        y1, f1, _ = rk_step(fun, t0, y0, f0, h)
    e0 = _const(event_value(spec, list(y0)))
    e1 = _const(event_value(spec, list(y1)))
    tau = _rate_root(spec, fun, t0, y0, f0, h, y1, f1)
    if tau is None:
        return (0.0, h) if _crosses(spec, e0, e1) else None
    e_ext = _const(event_value(spec, list(rk_step(fun, t0, y0, f0, tau)[0])))
    if abs(e_ext) <= spec.graze_tol * spec.scale:
        raise TransversalityError(
            f"grazing contact: event extremum {e_ext:.3e} within the graze band at t={t0 + tau:.12g}"
        )
    if _crosses(spec, e0, e_ext):
        return 0.0, tau
    if _crosses(spec, e_ext, e1):
        return tau, h
    return None


def crossing_monitor(spec: EventSpec, fun: Callable, const_only: bool = False) -> Callable:
    """Step callback for :func:`jetflow._drive` signalling the first crossing.

    ``fun`` is the scalar right-hand side; with ``const_only`` the records hold
    jets and only their constant column is inspected.
    """

    def nominal(rec):
        if const_only:
            return rec.y[:, 0], rec.f[:, 0]
        return rec.y, rec.f

    def on_step(prev, rec) -> bool:
        y0, f0 = nominal(prev)
        y1, f1 = nominal(rec)
        e0 = _const(event_value(spec, list(y0)))
        e1 = _const(event_value(spec, list(y1)))
        if _crosses(spec, e0, e1):
            return True
        return _bracket(spec, fun, prev.t, y0, f0, rec.t - prev.t, y1, f1) is not None

    return on_step


def refine_crossing(spec: EventSpec, fun: Callable, t0: float, y0, f0, h: float):
    """Root of e along the DOP853 step from ``t0``; returns (tau, state)."""

    def g(tau):
        if tau == 0.0:
            return _const(event_value(spec, list(y0)))
        return _const(event_value(spec, list(rk_step(fun, t0, y0, f0, tau)[0])))

    if _crosses(spec, g(0.0), g(h)):
        lo, hi = 0.0, h
    else:
        br = _bracket(spec, fun, t0, y0, f0, h)
        if br is None:
            raise EventMissedError("no crossing inside the step")
        lo, hi = br
    if g(hi) == 0.0:
        tau = hi
    else:
        tau = brentq(g, lo, hi, xtol=1e-16 * h, rtol=4 * np.finfo(float).eps, maxiter=200)
    y = np.asarray(y0) if tau == 0.0 else rk_step(fun, t0, y0, f0, tau)[0]
    _transversality(spec, fun, t0, y0, f0, tau, h)
    return tau, y


def _transversality(spec, fun, t0, y0, f0, tau, h) -> float:
    y, f, _ = rk_step(fun, t0, y0, f0, tau) if tau > 0 else (np.asarray(y0), np.asarray(f0), None)
    rate = event_rate(spec, y, f)
    if abs(rate) < spec.eps_transversal:
        raise TransversalityError(f"event rate {rate:.3e} below transversality threshold at t={t0 + tau:.12g}")
    # quadratic model: distance from the crossing to the nearby extremum of e
    d = 1e-3 * h
    rp = event_rate(spec, *rk_step(fun, t0, y0, f0, tau + d)[:2])
    rm = event_rate(spec, *rk_step(fun, t0, y0, f0, max(tau - d, 0.0))[:2]) if tau - d > 0 else rate
    span = (tau + d) - max(tau - d, 0.0) if tau - d > 0 else d
    curv = (rp - rm) / span
    if curv != 0.0 and rate * rate / (2.0 * abs(curv)) <= spec.graze_tol * spec.scale:
        raise TransversalityError(f"near-tangent crossing at t={t0 + tau:.12g} (rate {rate:.3e})")
    return rate


@dataclass(frozen=True)
class EventHit:
    t: float
    state: np.ndarray
    rate: float
    segment: int


def detect(trajectory: Trajectory, spec: EventSpec) -> EventHit:
    """First crossing of ``spec`` along ``trajectory``, refined on the step."""
    fun = trajectory.fun
    recs = trajectory.records
    first = 0
    if trajectory.monitored is spec:
        if not trajectory.crossed:
            raise EventMissedError("trajectory never crosses the event manifold")
        first = len(recs) - 2
    for i in range(first, len(recs) - 1):
        a, b = recs[i], recs[i + 1]
        e0 = _const(event_value(spec, list(a.y)))
        e1 = _const(event_value(spec, list(b.y)))
        h = b.t - a.t
        if _crosses(spec, e0, e1) or _bracket(spec, fun, a.t, a.y, a.f, h, b.y, b.f) is not None:
            tau, y = refine_crossing(spec, fun, a.t, a.y, a.f, h)
            rate = event_rate(spec, y, fun(a.t + tau, y))
            return EventHit(a.t + tau, y, rate, i)
    raise EventMissedError("trajectory never crosses the event manifold")


# ---------------------------------------------------------------------------
# partial map inversion


def _max_abs(p: TPoly) -> float:
    return float(np.max(np.abs(p.coeffs))) if p.coeffs.size else 0.0


def invert_trigger_time(flow: FlowExpansion, spec: EventSpec, max_iter: int | None = None) -> TPoly:
    """Trigger-time polynomial T(dz) with T(0) = 0 and E(dz, T(dz)) = 0 to order k.

    Formal Newton iteration; each sweep doubles the number of correct orders.
    """
    if not flow.has_time:
        raise ConfigError("trigger-time inversion needs a flow expanded in time")
    tv = flow.time_var
    comps = list(flow.map.components)
    E = event_value(spec, comps)
    if not isinstance(E, TPoly):
        raise ConfigError("event value does not depend on the flow")
    Et = E.derivative(tv)
    if abs(Et.const) < spec.eps_transversal:
        raise TransversalityError(f"dE/dt = {Et.const:.3e} at the nominal crossing")
    n, k = E.nvars, E.order
    T = TPoly.constant(0.0, n, k)
    sweeps = math.ceil(math.log2(k + 1))
    max_iter = max_iter or sweeps + 3
    last = np.inf
    for it in range(max_iter):
        ET = pa.substitute(E, tv, T)
        EtT = pa.substitute(Et, tv, T)
        step = ET / EtT
        T = T - step
        last = _max_abs(step)
        if it + 1 >= sweeps and last <= 1e-13 * max(1.0, _max_abs(T)):
            break
    else:
        raise TransversalityError(f"trigger-time Newton iteration did not settle (last update {last:.3e})")
    return T.drop_vars(n - 1)


@dataclass(frozen=True)
class EventTransitionMap:
    """State at the event crossing as a Taylor map in dz."""

    ett: TaylorMap
    trigger_time: TPoly
    t_star: float
    transversality: float
    flow: FlowExpansion = field(repr=False, compare=False)

    def state(self, dz) -> np.ndarray:
        return self.ett.eval(dz)

    def time(self, dz) -> float:
        return self.t_star + self.trigger_time.eval(dz)


def _embed_T(T: TPoly, n_dz: int) -> TPoly:
    return T.embed(n_dz + 1, T.order)


def event_transition_map(flow: FlowExpansion, T: TPoly, spec: EventSpec | None = None) -> EventTransitionMap:
    """Substitute the trigger time back into the flow: ETT_i(dz) = flow_i(dz, T(dz))."""
    if not flow.has_time:
        raise ConfigError("flow has no time variable")
    if T.nvars != flow.n_dz or T.order != flow.order:
        raise ConfigError(f"trigger-time polynomial lives in ({T.nvars}, {T.order}), flow in ({flow.n_dz}, {flow.order})")
    tv = flow.time_var
    Tt = _embed_T(T, flow.n_dz)
    comps = tuple(pa.substitute(c, tv, Tt).drop_vars(flow.n_dz) for c in flow.map.components)
    m = flow.map
    ett = TaylorMap(comps, m.labels[: flow.n_dz], m.component_names, m.component_scales)
    rate = float("nan")
    if spec is not None:
        E = event_value(spec, list(m.components))
        rate = E.derivative(tv).const if isinstance(E, TPoly) else 0.0
    t0 = T.const
    T0 = T - t0 if t0 != 0.0 else T
    return EventTransitionMap(ett, T0, flow.t_nom + t0, rate, flow)


def event_residual(etm: EventTransitionMap, spec: EventSpec) -> float:
    """Largest coefficient of e(ETT(dz)); zero to truncation order when consistent."""
    e = event_value(spec, list(etm.ett.components))
    return _max_abs(e) if isinstance(e, TPoly) else abs(float(e))


def expand_to_event(
    model, policy, x0_nom, expand_vars, order, spec: EventSpec, t_max, settings=None, var_scales=None
) -> EventTransitionMap:
    """Flow to the nominal crossing, invert the trigger time, return the ETT."""
    flow = expand_flow_to_event(model, policy, x0_nom, expand_vars, order, spec, t_max, settings, var_scales)
    T = invert_trigger_time(flow, spec)
    return event_transition_map(flow, T, spec)


from .mesh import TriangleMesh, fit_event_net, point_in_mesh, signed_boundary_value  # noqa: E402,F401
