"""Trajectory integration and jet transport.

One embedded Dormand-Prince 8(5,3) stepper serves both scalar trajectories
(state shape ``(dim,)``) and jets (state shape ``(dim, N)``: one row of Taylor
coefficients per state component).  Jet error control looks at every degree
block, damping the contribution of high degrees.

The time direction of a flow expansion is added afterwards by Picard
iteration at the final state, which is exact order by order.
"""
from __future__ import annotations

import csv
import math
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from . import polyalg as pa
from .dynamics import DynamicsModel, closed_loop_rhs
from .errors import ConfigError, IntegrationError
from .netpoly import PolicyNet
from .polyalg import TaylorMap, TPoly, VarLabel

_A = _dop.A[: _dop.N_STAGES, : _dop.N_STAGES]
_B = _dop.B
_C = _dop.C[: _dop.N_STAGES]
_E3 = _dop.E3
_E5 = _dop.E5
_NS = _dop.N_STAGES

SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 10.0
ERR_EXP = -1.0 / 8.0


@dataclass(frozen=True)
class IntegratorSettings:
    """Tolerances in scaled units."""

    rtol: float = 1e-12
    atol: float = 1e-12
    max_steps: int = 200_000
    min_step: float = 1e-14
    # weight of degree-d error blocks (d >= 2) is damping**-(d-1)
    jet_damping: float = 10.0
    max_step: float = np.inf


def rk_step(fun: Callable, t: float, y: np.ndarray, f0: np.ndarray, h: float):
    """One DOP853 step; returns (y_new, f_new, stages as a (13, size) array)."""
    K = np.empty((_NS + 1, y.size))
    K[0] = f0.ravel()
    for s in range(1, _NS):
        dy = (_A[s, :s] @ K[:s]).reshape(y.shape)
        K[s] = fun(t + _C[s] * h, y + h * dy).ravel()
    y_new = y + h * (_B @ K[:_NS]).reshape(y.shape)
    f_new = fun(t + h, y_new)
    K[_NS] = f_new.ravel()
    return y_new, f_new, K


def _block_norm(err5, err3, n):
    e5 = float(np.sum(err5 * err5))
    e3 = float(np.sum(err3 * err3))
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return e5 / math.sqrt((e5 + 0.01 * e3) * n)


class _ErrorNorm:
    """scipy-style DOP853 error norm, evaluated per degree block for jets."""

    def __init__(self, shape: tuple, space: pa.Space | None, settings: IntegratorSettings):
        self.settings = settings
        self.blocks: list[tuple[object, float]] = []
        if space is None:
            self.blocks.append((Ellipsis, 1.0))
        else:
            for d in range(space.order + 1):
                w = 1.0 if d <= 1 else settings.jet_damping ** -(d - 1)
                self.blocks.append(((Ellipsis, space.block(d)), w))

    def __call__(self, K, h, y, y_new) -> float:
        st = self.settings
        scale = st.atol + st.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err5 = (_E5 @ K).reshape(y.shape) / scale
        err3 = (_E3 @ K).reshape(y.shape) / scale
        worst = 0.0
        for sel, w in self.blocks:
            e5, e3 = err5[sel], err3[sel]
            worst = max(worst, w * abs(h) * _block_norm(e5, e3, e5.size))
        return worst


def _initial_step(fun, t0, y0, f0, settings: IntegratorSettings) -> float:
    c0 = y0 if y0.ndim == 1 else y0[:, 0]
    fc = f0 if f0.ndim == 1 else f0[:, 0]
    scale = settings.atol + np.abs(c0) * settings.rtol
    d0 = np.linalg.norm(c0 / scale) / math.sqrt(c0.size)
    d1 = np.linalg.norm(fc / scale) / math.sqrt(c0.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    f1c = f1 if f1.ndim == 1 else f1[:, 0]
    d2 = np.linalg.norm((f1c - fc) / scale) / math.sqrt(c0.size) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100 * h0, h1, settings.max_step)


@dataclass
class StepRecord:
    t: float
    y: np.ndarray
    f: np.ndarray


@dataclass
class Trajectory:
    """Accepted steps of an integration (scaled units).

    ``state_at`` re-takes a DOP853 step from the preceding sample, which is
    dense output of the integrator's own order.
    """

    times: np.ndarray
    states: np.ndarray
    steps: int
    rejected: int
    fun: Callable = field(repr=False)
    records: list = field(repr=False, default_factory=list)
    crossed: bool = False
    # event whose crossings and grazes were already screened step by step
    monitored: object = field(repr=False, default=None)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def segment(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(i, 0), len(self.records) - 1)

    def state_at(self, t: float) -> np.ndarray:
        i = self.segment(t)
        rec = self.records[i]
        tau = t - rec.t
        if tau == 0.0:
            return rec.y
        return rk_step(self.fun, rec.t, rec.y, rec.f, tau)[0]

    def restep(self, i: int, tau: float) -> np.ndarray:
        rec = self.records[i]
        if tau == 0.0:
            return rec.y
        return rk_step(self.fun, rec.t, rec.y, rec.f, tau)[0]

    def to_csv(self, path, names: Sequence[str] | None = None, units=None) -> None:
        names = list(names or [f"s{i}" for i in range(self.states.shape[1])])
        units = np.ones(len(names)) if units is None else np.asarray(units)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + names)
            for t, y in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in y * units])


def _drive(
    fun: Callable,
    t0: float,
    y0: np.ndarray,
    t_end: float,
    settings: IntegratorSettings,
    space: pa.Space | None = None,
    on_step: Callable | None = None,
    keep: bool = True,
):
    """Adaptive integration from t0 toward t_end; ``on_step`` may stop early.

    ``on_step(prev_record, record)`` returns True to stop after that step.
    """
    norm = _ErrorNorm(y0.shape, space, settings)
    f0 = fun(t0, y0)
    h = _initial_step(fun, t0, y0, f0, settings)
    t, y, f = t0, y0, f0
    records = [StepRecord(t, y, f)]
    steps = rejected = 0
    stopped = False
    while t < t_end:
        if steps >= settings.max_steps:
            raise IntegrationError(f"step budget of {settings.max_steps} exhausted at t={t:.6g}")
        h = min(h, settings.max_step)
        last = t + h >= t_end
        h_try = t_end - t if last else h
        if h_try < settings.min_step * max(1.0, abs(t)):
            raise IntegrationError(f"step size collapsed to {h_try:.3g} at t={t:.6g}")
        y_new, f_new, K = rk_step(fun, t, y, f, h_try)
        if not np.all(np.isfinite(y_new)):
            h = h_try * MIN_FACTOR
            rejected += 1
            continue
        err = norm(K, h_try, y, y_new)
        if err < 1.0:
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err**ERR_EXP)
            prev = records[-1]
            t_new = t_end if last else t + h_try
            t, y, f = t_new, y_new, f_new
            steps += 1
            rec = StepRecord(t, y, f)
            if keep:
                records.append(rec)
            else:
                records[-1] = rec
            h = h_try * factor
            if on_step is not None and on_step(prev, rec):
                stopped = True
                break
        else:
            h = h_try * max(MIN_FACTOR, SAFETY * err**ERR_EXP)
            rejected += 1
    return records, steps, rejected, stopped


def scalar_rhs(model: DynamicsModel, policy: PolicyNet | None, consts: Mapping | None = None) -> Callable:
    def fun(t, y):
        return np.array(closed_loop_rhs(model, policy, list(y), consts), dtype=float)

    return fun


def jet_rhs(model: DynamicsModel, policy: PolicyNet | None, space: pa.Space, consts: Mapping | None = None, const_slots=()) -> Callable:
    """RHS on coefficient blocks of shape (dim, N).

    ``const_slots`` lists (name, variable index, nominal, scale) for expanded constants.
    """
    jet_consts = None
    if const_slots:
        jet_consts = dict(model.consts if consts is None else consts)
        for name, j, nominal, s in const_slots:
            jet_consts[name] = nominal + s * TPoly.variable(j, space.nvars, space.order)

    def fun(t, Y):
        states = [TPoly(space, row) for row in Y]
        out = closed_loop_rhs(model, policy, states, jet_consts if jet_consts is not None else consts)
        rows = np.zeros_like(Y)
        for i, v in enumerate(out):
            if isinstance(v, TPoly):
                rows[i] = v.coeffs
            else:
                rows[i, 0] = v
        return rows

    return fun


def integrate(
    model: DynamicsModel,
    policy: PolicyNet | None,
    x0,
    t_end: float | None = None,
    event=None,
    settings: IntegratorSettings | None = None,
    t_max: float | None = None,
    consts: Mapping | None = None,
):
    """Integrate a scalar trajectory in scaled units.

    With ``event`` the integration stops at the first accepted step whose end
    lies past a crossing (use :func:`eventjet.eventmap.detect` to refine), or
    at ``t_max`` if none happens.
    """
    settings = settings or IntegratorSettings()
    if (t_end is None) == (event is None):
        raise ConfigError("give exactly one of t_end or event")
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise IntegrationError("non-finite initial state")
    model.check_policy(policy)
    fun = scalar_rhs(model, policy, consts)
    on_step = None
    horizon = t_end
    if event is not None:
        if t_max is None:
            raise ConfigError("event integration needs t_max")
        horizon = t_max
        from .eventmap import crossing_monitor

        on_step = crossing_monitor(event, fun)
    records, steps, rejected, stopped = _drive(fun, 0.0, x0, horizon, settings, on_step=on_step)
    return Trajectory(
        times=np.array([r.t for r in records]),
        states=np.stack([r.y for r in records]),
        steps=steps,
        rejected=rejected,
        fun=fun,
        records=records,
        crossed=stopped,
        monitored=event,
    )


# ---------------------------------------------------------------------------
# flow expansion


@dataclass(frozen=True)
class FlowExpansion:
    """Taylor map of the final state in (dz) or (dz, dt) about the nominal."""

    map: TaylorMap
    t_nom: float
    model_id: str
    order: int
    n_dz: int
    has_time: bool
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def time_var(self) -> int:
        if not self.has_time:
            raise ConfigError("flow has no time variable")
        return self.n_dz


def _resolve_vars(model: DynamicsModel, expand_vars: Sequence[str], var_scales=None):
    """Map expansion names to slots; variable j moves its target by ``var_scales[j]`` per unit."""
    if not expand_vars:
        raise ConfigError("expand_vars must not be empty")
    if len(set(expand_vars)) != len(expand_vars):
        raise ConfigError(f"duplicate expansion variables {list(expand_vars)}")
    scales = np.ones(len(expand_vars)) if var_scales is None else np.asarray(var_scales, dtype=float)
    if scales.shape != (len(expand_vars),) or not np.all(scales > 0):
        raise ConfigError("var_scales needs one positive entry per expansion variable")
    consts = model.consts
    state_slots, const_slots, labels = [], [], []
    units = model.state_units
    for j, name in enumerate(expand_vars):
        s = float(scales[j])
        if name in model.state_names:
            i = model.state_names.index(name)
            state_slots.append((i, j, s))
            labels.append(VarLabel(f"d{name}", float(units[i]) * s))
        elif name in consts:
            const_slots.append((name, j, consts[name], s))
            labels.append(VarLabel(f"d{name}", s))
        else:
            raise ConfigError(f"{name!r} is neither a state of {model.id!r} nor an expandable constant")
    return state_slots, const_slots, labels


def _initial_jet(x0, space, state_slots):
    Y = np.zeros((len(x0), space.size))
    Y[:, 0] = x0
    for i, j, s in state_slots:
        Y[i, 1 + j] = s
    return Y


def _propagate(model, policy, x0_nom, expand_vars, order, t_end=None, event=None, settings=None, t_max=None, var_scales=None):
    settings = settings or IntegratorSettings()
    if order < 1:
        raise ConfigError("order must be >= 1")
    model.check_policy(policy)
    x0_nom = np.asarray(x0_nom, dtype=float)
    state_slots, const_slots, labels = _resolve_vars(model, expand_vars, var_scales)
    space = pa.get_space(len(expand_vars), order)
    fun = jet_rhs(model, policy, space, const_slots=const_slots)
    Y0 = _initial_jet(x0_nom, space, state_slots)
    t0 = _time.perf_counter()
    if event is None:
        records, steps, rejected, _ = _drive(fun, 0.0, Y0, t_end, settings, space=space, keep=False)
        Yf, tf = records[-1].y, records[-1].t
    else:
        from .eventmap import crossing_monitor, refine_crossing

        scalar = scalar_rhs(model, policy, model.consts)
        monitor = crossing_monitor(event, scalar, const_only=True)
        records, steps, rejected, stopped = _drive(
            fun, 0.0, Y0, t_max, settings, space=space, on_step=monitor, keep=True
        )
        if not stopped:
            from .errors import EventMissedError

            raise EventMissedError(f"nominal trajectory did not reach the event before t={t_max:.6g}")
        prev = records[-2]
        tau, _ = refine_crossing(event, scalar, prev.t, prev.y[:, 0], prev.f[:, 0], records[-1].t - prev.t)
        Yf = rk_step(fun, prev.t, prev.y, prev.f, tau)[0] if tau > 0 else prev.y
        tf = prev.t + tau
    stats = {"steps": steps, "rejected": rejected, "seconds": _time.perf_counter() - t0}
    return Yf, tf, space, fun, labels, const_slots, stats


def _picard_time(model, policy, Yf, space, const_slots):
    """Append a time variable and expand the flow in it about the final state."""
    n = space.nvars
    tspace = pa.get_space(n + 1, space.order)
    X0 = [TPoly(tspace, pa.embed_coeffs(space, tspace, row)) for row in Yf]
    consts = None
    if const_slots:
        consts = dict(model.consts)
        for name, j, nominal, s in const_slots:
            consts[name] = nominal + s * TPoly.variable(j, n + 1, space.order)
    X = X0
    for _ in range(space.order):
        F = closed_loop_rhs(model, policy, X, consts)
        X = [x0 + (f.antiderivative(n) if isinstance(f, TPoly) else TPoly.variable(n, n + 1, space.order) * f)
             for x0, f in zip(X0, F)]
    return X


def _make_map(model, comps, labels):
    return TaylorMap(
        tuple(comps),
        tuple(labels),
        tuple(model.state_names),
        tuple(float(u) for u in model.state_units),
    )


def expand_flow(model, policy, x0_nom, expand_vars, order, t_end, settings=None, var_scales=None) -> FlowExpansion:
    """Order-``order`` map of the state at fixed time ``t_end`` (scaled)."""
    Yf, tf, space, _, labels, _, stats = _propagate(
        model, policy, x0_nom, expand_vars, order, t_end=t_end, settings=settings, var_scales=var_scales
    )
    comps = [TPoly(space, row) for row in Yf]
    return FlowExpansion(_make_map(model, comps, labels), tf, model.id, order, len(labels), False, stats)


def expand_flow_with_time(model, policy, x0_nom, expand_vars, order, t_nom, settings=None, var_scales=None) -> FlowExpansion:
    """Map over (dz, dt) of the state at ``t_nom + dt``."""
    if not t_nom > 0:
        raise ConfigError("t_nom must be positive")
    Yf, tf, space, _, labels, const_slots, stats = _propagate(
        model, policy, x0_nom, expand_vars, order, t_end=t_nom, settings=settings, var_scales=var_scales
    )
    comps = _picard_time(model, policy, Yf, space, const_slots)
    labels = list(labels) + [VarLabel("dt", model.scaling.time)]
    return FlowExpansion(_make_map(model, comps, labels), tf, model.id, order, len(labels) - 1, True, stats)


def expand_flow_to_event(
    model, policy, x0_nom, expand_vars, order, event, t_max, settings=None, var_scales=None
) -> FlowExpansion:
    """Map over (dz, dt) about the nominal event crossing time."""
    Yf, tf, space, _, labels, const_slots, stats = _propagate(
        model, policy, x0_nom, expand_vars, order, event=event, settings=settings, t_max=t_max, var_scales=var_scales
    )
    comps = _picard_time(model, policy, Yf, space, const_slots)
    labels = list(labels) + [VarLabel("dt", model.scaling.time)]
    return FlowExpansion(_make_map(model, comps, labels), tf, model.id, order, len(labels) - 1, True, stats)


def perturbed_initial_state(model, x0_nom, expand_vars, dz, var_scales=None):
    """Initial state and constants for a perturbation ``dz`` of the expansion variables."""
    x0 = np.array(x0_nom, dtype=float)
    scales = np.ones(len(expand_vars)) if var_scales is None else np.asarray(var_scales, dtype=float)
    consts = None
    for name, d, s in zip(expand_vars, dz, scales):
        if name in model.state_names:
            x0[model.state_names.index(name)] += s * d
        else:
            consts = consts or dict(model.consts)
            consts[name] = consts[name] + s * d
    return x0, consts
