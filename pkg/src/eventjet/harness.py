"""Monte Carlo baselines and map-versus-sampling comparisons."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, EventMissedError, EventJetError, IntegrationError, TransversalityError
from .eventmap import EventSpec, detect, expand_to_event
from .jetflow import IntegratorSettings, integrate, perturbed_initial_state
from .uncert import MomentSet, UniformBox, propagate_moments

HIT, MISSED, FAILED, FILTERED = "event-hit", "event-missed", "integration-failed", "filtered"
STATUSES = (HIT, MISSED, FAILED, FILTERED)


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Generator for sample ``index``: Philox keyed by seed, counter fixed by index."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, index, 0, 0]))


def sample_box(box: UniformBox, n: int, seed: int = 0, start: int = 0) -> np.ndarray:
    """``n`` uniform draws; row i depends only on (seed, start + i)."""
    if n < 1:
        raise ConfigError("need n >= 1 samples")
    lo, hi = np.asarray(box.lower, float), np.asarray(box.upper, float)
    out = np.empty((n, box.dim))
    for i in range(n):
        out[i] = lo + (hi - lo) * sample_stream(seed, start + i).random(box.dim)
    return out


@dataclass
class MCResult:
    dz: np.ndarray
    states: np.ndarray  # NaN rows unless hit
    times: np.ndarray
    status: np.ndarray  # str
    seed: int
    component_names: tuple = ()
    component_scales: np.ndarray | None = None
    messages: dict = field(default_factory=dict)

    @property
    def counts(self) -> dict:
        return {s: int(np.count_nonzero(self.status == s)) for s in STATUSES}

    @property
    def hits(self) -> np.ndarray:
        return self.status == HIT

    def to_csv(self, path) -> None:
        names = list(self.component_names) or [f"s{i}" for i in range(self.states.shape[1])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "status", "t_event"] + [f"dz{j}" for j in range(self.dz.shape[1])] + names)
            for i in range(len(self.status)):
                w.writerow([i, self.status[i], repr(float(self.times[i]))]
                           + [repr(float(v)) for v in self.dz[i]] + [repr(float(v)) for v in self.states[i]])


def mc_to_event(
    model,
    policy,
    x0_nom,
    box: UniformBox,
    spec: EventSpec,
    n: int,
    seed: int = 0,
    expand_vars: Sequence[str] | None = None,
    var_scales=None,
    t_max: float = 10.0,
    accept: Callable | None = None,
    settings: IntegratorSettings | None = None,
) -> MCResult:
    """Integrate ``n`` perturbed initial conditions to the event.

    ``accept(state)`` is an optional post-hoc filter (e.g. a gate window);
    rejected hits are marked ``filtered``.  Misses and failures are recorded,
    not raised, except when the nominal itself misses.
    """
    expand_vars = list(expand_vars or model.state_names)
    if box.dim != len(expand_vars):
        raise ConfigError("box dimension does not match the perturbed variables")
    try:
        detect(integrate(model, policy, x0_nom, event=spec, t_max=t_max, settings=settings), spec)
    except EventMissedError as exc:
        raise EventMissedError(f"nominal trajectory misses the event: {exc}") from exc
    dz = sample_box(box, n, seed)
    dim = len(model.state_names)
    states = np.full((n, dim), np.nan)
    times = np.full(n, np.nan)
    status = np.empty(n, dtype=object)
    messages = {}
    for i in range(n):
        x0, consts = perturbed_initial_state(model, x0_nom, expand_vars, dz[i], var_scales)
        try:
            tr = integrate(model, policy, x0, event=spec, t_max=t_max, settings=settings, consts=consts)
            hit = detect(tr, spec)
        except EventMissedError:
            status[i] = MISSED
            continue
        except (IntegrationError, TransversalityError, EventJetError, FloatingPointError) as exc:
            status[i] = FAILED
            messages[i] = str(exc)
            continue
        states[i], times[i] = hit.state, hit.t
        status[i] = HIT if accept is None or accept(hit.state) else FILTERED
    return MCResult(dz, states, times, status.astype(str), seed, tuple(model.state_names),
                    np.asarray(model.state_units, dtype=float), messages)


def empirical_moments(result: MCResult, components: Sequence[int] | None = None) -> MomentSet:
    """Sample mean and unbiased covariance over event hits (index order)."""
    idx = list(range(result.states.shape[1])) if components is None else list(components)
    X = result.states[result.hits][:, idx]
    if len(X) < 2:
        raise ConfigError(f"need at least 2 event hits, got {len(X)}")
    mean = X.mean(axis=0)
    D = X - mean
    cov = D.T @ D / (len(X) - 1)
    names = tuple(result.component_names[i] for i in idx) if result.component_names else ()
    scales = None if result.component_scales is None else np.asarray(result.component_scales)[idx]
    return MomentSet(mean, cov, 0, names, scales, meta={"source": "monte-carlo", "n_hits": len(X), "seed": result.seed})


def frobenius_rel_error(A, B) -> float:
    A, B = np.asarray(A, float), np.asarray(B, float)
    if A.shape != B.shape:
        raise ConfigError(f"shape mismatch {A.shape} vs {B.shape}")
    ref = np.linalg.norm(B)
    if ref == 0:
        raise ConfigError("reference covariance has zero norm")
    return float(np.linalg.norm(A - B) / ref)


@dataclass
class SweepRow:
    order: int
    frobenius_rel_error: float
    mean_abs_error: float
    expand_seconds: float = 0.0
    moments_seconds: float = 0.0


@dataclass
class SweepResult:
    rows: list
    mc_counts: dict
    n_mc: int
    seed: int
    mc_seconds: float = 0.0

    def to_csv(self, path) -> None:
        """Deterministic table: no wall-clock columns."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["order", "frobenius_rel_error", "mean_abs_error"])
            for r in self.rows:
                w.writerow([r.order, repr(r.frobenius_rel_error), repr(r.mean_abs_error)])

    def timings(self) -> dict:
        return {
            "mc_seconds": self.mc_seconds,
            "orders": {r.order: {"expand": r.expand_seconds, "moments": r.moments_seconds} for r in self.rows},
        }

    def to_json(self, path) -> None:
        doc = {
            "n_mc": self.n_mc,
            "seed": self.seed,
            "mc_counts": self.mc_counts,
            "rows": [{"order": r.order, "frobenius_rel_error": r.frobenius_rel_error, "mean_abs_error": r.mean_abs_error}
                     for r in self.rows],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)


def order_sweep_study(
    model,
    policy,
    x0_nom,
    box: UniformBox,
    spec: EventSpec,
    orders: Sequence[int],
    n_mc: int,
    seed: int = 0,
    expand_vars: Sequence[str] | None = None,
    var_scales=None,
    t_max: float = 10.0,
    components: Sequence[int] | None = None,
    settings: IntegratorSettings | None = None,
    mc: MCResult | None = None,
) -> SweepResult:
    """One MC baseline against map-propagated covariances at each order."""
    expand_vars = list(expand_vars or model.state_names)
    t0 = time.perf_counter()
    if mc is None:
        mc = mc_to_event(model, policy, x0_nom, box, spec, n_mc, seed, expand_vars, var_scales, t_max, settings=settings)
    mc_seconds = time.perf_counter() - t0
    if mc.counts[HIT] != len(mc.status):
        # map moments describe the whole box; a partial baseline would not be comparable
        raise EventMissedError(f"MC baseline has non-hit samples {mc.counts}; shrink the box")
    comps = list(range(len(model.state_names))) if components is None else list(components)
    ref = empirical_moments(mc, comps)
    rows = []
    for k in orders:
        t1 = time.perf_counter()
        etm = expand_to_event(model, policy, x0_nom, expand_vars, k, spec, t_max, settings, var_scales)
        t2 = time.perf_counter()
        mom = propagate_moments(etm.ett, box).subset(comps)
        t3 = time.perf_counter()
        rows.append(SweepRow(k, frobenius_rel_error(mom.cov, ref.cov), float(np.max(np.abs(mom.mean - ref.mean))),
                             t2 - t1, t3 - t2))
    return SweepResult(rows, mc.counts, n_mc, seed, mc_seconds)


def mean_consistency(mom: MomentSet, ref: MomentSet) -> np.ndarray:
    """|map mean - MC mean| in units of the MC standard error."""
    n = ref.meta.get("n_hits", 0)
    se = np.sqrt(np.diag(ref.cov) / max(n, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(se > 0, np.abs(mom.mean - ref.mean) / se, np.where(mom.mean == ref.mean, 0.0, math.inf))
