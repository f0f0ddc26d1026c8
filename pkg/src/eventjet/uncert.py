"""Convergence-radius estimates and moment propagation through Taylor maps.

Moments of independent inputs factor per variable, so the expectation of a
monomial is a product of one-dimensional raw moments.  Means and covariances
of a polynomial map are then exact linear and bilinear forms in its
coefficients.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from . import polyalg as pa
from .errors import ConfigError, DomainError
from .polyalg import TaylorMap, TPoly

COV_CLAMP = 1e-12


# ---------------------------------------------------------------------------
# distributions


def uniform_raw_moment(a: float, b: float, n: int) -> float:
    """E[X^n] for X ~ U[a, b]."""
    if not a < b:
        raise DomainError(f"uniform bounds need a < b, got [{a}, {b}]")
    if n < 0:
        raise DomainError("moment order must be >= 0")
    if n == 0:
        return 1.0
    # sum form avoids cancellation in b^(n+1) - a^(n+1) when a ~ b
    return sum(a**j * b ** (n - j) for j in range(n + 1)) / (n + 1)


class MomentProvider(Protocol):
    labels: tuple

    @property
    def dim(self) -> int: ...

    def raw_moment(self, i: int, n: int) -> float: ...


@dataclass(frozen=True)
class UniformBox:
    """Independent uniforms on [lower_i, upper_i], in the map's variable units."""

    lower: tuple
    upper: tuple
    labels: tuple = ()

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ConfigError("lower and upper bounds differ in length")
        for a, b in zip(self.lower, self.upper):
            if not a < b:
                raise ConfigError(f"box needs lower < upper, got [{a}, {b}]")
        if self.labels and len(self.labels) != len(self.lower):
            raise ConfigError("one label per box variable")

    @classmethod
    def centered(cls, half_widths: Sequence[float], labels: Sequence[str] = ()) -> "UniformBox":
        h = [float(x) for x in half_widths]
        return cls(tuple(-x for x in h), tuple(h), tuple(labels))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def half_widths(self) -> np.ndarray:
        return (np.asarray(self.upper) - np.asarray(self.lower)) / 2

    def raw_moment(self, i: int, n: int) -> float:
        return uniform_raw_moment(self.lower[i], self.upper[i], n)


def expected_monomial(box: MomentProvider, alpha: Sequence[int]) -> float:
    if len(alpha) != box.dim:
        raise ConfigError(f"multi-index of length {len(alpha)} for a {box.dim}-variable box")
    return math.prod(box.raw_moment(i, a) for i, a in enumerate(alpha))


def _moment_table(box: MomentProvider, max_n: int) -> np.ndarray:
    return np.array([[box.raw_moment(i, n) for n in range(max_n + 1)] for i in range(box.dim)])


def monomial_expectations(space: pa.Space, box: MomentProvider) -> np.ndarray:
    table = _moment_table(box, space.order)
    ex = space.exponents
    return np.prod(table[np.arange(space.nvars), ex], axis=1)


def _second_moment_matrix(A: np.ndarray, space: pa.Space, table: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """A M A^T with M[a, b] = E[z^(a+b)], built in row chunks."""
    ex = space.exponents
    N = ex.shape[0]
    idx = np.arange(space.nvars)
    out = np.zeros((A.shape[0], A.shape[0]))
    for s in range(0, N, chunk):
        block = ex[s : s + chunk, None, :] + ex[None, :, :]
        M = np.prod(table[idx, block], axis=2)
        out += A[:, s : s + chunk] @ (M @ A.T)
    return out


# ---------------------------------------------------------------------------
# results


@dataclass
class MomentSet:
    mean: np.ndarray
    cov: np.ndarray
    order: int
    labels: tuple = ()
    scales: np.ndarray | None = None
    central: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cov = 0.5 * (self.cov + self.cov.T)
        d = np.diag(self.cov)
        if np.any(d < -COV_CLAMP * max(1.0, float(np.max(np.abs(d))) if d.size else 1.0)):
            raise DomainError(f"covariance diagonal {d.min():.3e} is negative beyond tolerance")
        if np.any(d < 0):
            self.cov[np.diag_indices_from(self.cov)] = np.maximum(d, 0.0)
            self.meta["clamped_negative_variance"] = True

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def _s(self):
        return np.ones(len(self.mean)) if self.scales is None else np.asarray(self.scales)

    def physical(self) -> "MomentSet":
        s = self._s()
        central = {m: v * s**m for m, v in self.central.items()}
        return MomentSet(self.mean * s, self.cov * np.outer(s, s), self.order, self.labels, None, central,
                         {**self.meta, "units": "physical"})

    def subset(self, idx: Sequence[int]) -> "MomentSet":
        idx = list(idx)
        s = None if self.scales is None else np.asarray(self.scales)[idx]
        labels = tuple(self.labels[i] for i in idx) if self.labels else ()
        central = {m: v[idx] for m, v in self.central.items()}
        return MomentSet(self.mean[idx], self.cov[np.ix_(idx, idx)], self.order, labels, s, central, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "labels": list(self.labels),
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "central": {str(m): v.tolist() for m, v in self.central.items()},
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path) -> None:
        labels = list(self.labels) or [f"c{i}" for i in range(len(self.mean))]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "mean"] + [f"cov_{l}" for l in labels])
            for i, name in enumerate(labels):
                w.writerow([name, repr(float(self.mean[i]))] + [repr(float(v)) for v in self.cov[i]])


def _check_labels(m: TaylorMap, box: MomentProvider):
    if box.dim != m.nvars:
        raise ConfigError(f"box has {box.dim} variables, map has {m.nvars}")
    if box.labels and tuple(box.labels) != tuple(l.name for l in m.labels):
        raise ConfigError(f"box labels {list(box.labels)} do not match map labels {[l.name for l in m.labels]}")


def propagate_moments(
    m: TaylorMap,
    box: MomentProvider,
    up_to: str | int = "covariance",
    radii: Sequence[float] | None = None,
) -> MomentSet:
    """Exact moments of the polynomial map under independent inputs.

    ``up_to`` is "mean", "covariance" or an integer m >= 2 for diagonal central
    moments through order m.  Covariances use the full product of two
    components, which is the expectation of the untruncated order-2k product.
    """
    _check_labels(m, box)
    space = m.space
    A = m.coefficient_matrix()
    meta = {"order": space.order, "distribution": type(box).__name__}
    if isinstance(box, UniformBox):
        meta["box"] = [list(box.lower), list(box.upper)]
    if radii is not None:
        hw = np.maximum(np.abs(np.asarray(box.lower if isinstance(box, UniformBox) else [])),
                        np.abs(np.asarray(box.upper if isinstance(box, UniformBox) else [])))
        if hw.size and np.any(hw > np.asarray(radii)):
            meta["box_exceeds_radius"] = True
            warnings.warn("uncertainty box extends past the estimated convergence radius", stacklevel=2)
    ev = monomial_expectations(space, box)
    mean = A @ ev
    names = tuple(m.component_names)
    scales = np.asarray(m.component_scales, dtype=float) if m.component_scales else None
    if up_to == "mean":
        return MomentSet(mean, np.zeros((len(mean), len(mean))), space.order, names, scales, meta={**meta, "up_to": "mean"})
    table = _moment_table(box, 2 * space.order)
    second = _second_moment_matrix(A, space, table)
    cov = second - np.outer(mean, mean)
    central = {}
    if isinstance(up_to, int) and not isinstance(up_to, bool):
        if up_to < 2:
            raise ConfigError("central moment order must be >= 2")
        central = _central_moments(m, box, mean, up_to)
    elif up_to != "covariance":
        raise ConfigError(f"up_to must be 'mean', 'covariance' or an int, got {up_to!r}")
    return MomentSet(mean, cov, space.order, names, scales, central, meta)


def _central_moments(m: TaylorMap, box, mean, up_to: int) -> dict:
    k, n = m.order, m.nvars
    big = pa.get_space(n, k * up_to)
    ev = monomial_expectations(big, box)
    out = {}
    centered = [
        TPoly(big, pa.embed_coeffs(m.space, big, c.coeffs)) - mu for c, mu in zip(m.components, mean)
    ]
    powers = list(centered)
    for order in range(2, up_to + 1):
        powers = [p * c for p, c in zip(powers, centered)]
        out[order] = np.array([p.coeffs @ ev for p in powers])
    return out


# ---------------------------------------------------------------------------
# convergence radius


@dataclass(frozen=True)
class RadiusEstimate:
    """Per-order radius values r_1..r_K; NaN marks a gap (zero degree slice)."""

    values: np.ndarray
    restriction: str | int = "full"
    method: str = "cauchy-hadamard"

    @property
    def orders(self) -> np.ndarray:
        return np.arange(1, len(self.values) + 1)

    @property
    def headline(self) -> float:
        """Value at the largest order with a nonzero slice of degree >= 2; inf for linear maps."""
        finite = [i for i, v in enumerate(self.values) if np.isfinite(v) and i >= 1]
        return float(self.values[finite[-1]]) if finite else math.inf


def _admissible(space: pa.Space, d: int, restriction):
    sel = np.arange(space.size)[space.block(d)]
    ex = space.exponents[sel]
    if restriction == "full":
        return sel, ex
    i = int(restriction)
    if not 0 <= i < space.nvars:
        raise ConfigError(f"restriction variable {i} out of range")
    keep = ex[:, i] == d
    return sel[keep], ex[keep]


def _slice_norms(poly: TPoly, restriction, weighted: bool) -> np.ndarray:
    space = poly.space
    out = np.zeros(space.order + 1)
    for d in range(space.order + 1):
        idx, ex = _admissible(space, d, restriction)
        if len(idx) == 0:
            continue
        c = np.abs(poly.coeffs[idx])
        if weighted and d > 0:
            fact = np.array([math.prod(math.factorial(int(a)) for a in e) for e in ex], dtype=float)
            c = c * np.sqrt(fact / math.factorial(d))
        out[d] = c.max()
    return out


def ch_radius(poly: TPoly, restriction: str | int = "full") -> RadiusEstimate:
    """Cauchy-Hadamard proxy r_k = 1 / max|a_alpha sqrt(alpha!/k!)|^(1/k) per degree k."""
    norms = _slice_norms(poly, restriction, weighted=True)
    if not np.any(norms[1:] > 0):
        raise DomainError("no nonzero coefficient of degree >= 1 under this restriction")
    vals = np.full(poly.order, np.nan)
    for k in range(1, poly.order + 1):
        if norms[k] > 0:
            vals[k - 1] = norms[k] ** (-1.0 / k)
    return RadiusEstimate(vals, restriction, "cauchy-hadamard")


def ratio_radius(poly: TPoly, restriction: str | int = "full") -> RadiusEstimate:
    """Ratio-test proxy between consecutive nonzero slices.

    When slice j < k is the previous nonzero one, r_k = (|slice_j| / |slice_k|)^(1/(k-j)),
    which reduces to the plain ratio for consecutive degrees.
    """
    norms = _slice_norms(poly, restriction, weighted=False)
    nz = [d for d in range(poly.order + 1) if norms[d] > 0]
    if len(nz) < 2:
        raise DomainError("ratio test needs at least two nonzero degree slices")
    vals = np.full(poly.order, np.nan)
    for j, k in zip(nz[:-1], nz[1:]):
        vals[k - 1] = (norms[j] / norms[k]) ** (1.0 / (k - j))
    return RadiusEstimate(vals, restriction, "ratio")


@dataclass(frozen=True)
class RadiusRow:
    component: str
    variable: str
    order: int
    radius: float
    radius_physical: float


def per_state_radius_sweep(m: TaylorMap, max_order: int | None = None) -> list[RadiusRow]:
    """Single-variable CH radii for every (component, variable) pair and order."""
    K = max_order or m.order
    if K > m.order:
        raise ConfigError(f"map order {m.order} < requested {K}")
    rows = []
    for c, cname in zip(m.components, m.component_names or [f"c{i}" for i in range(len(m.components))]):
        for j, lab in enumerate(m.labels):
            try:
                est = ch_radius(c.truncate(K), j)
                vals = est.values
            except DomainError:
                vals = np.full(K, np.nan)
            linear_only = not np.any(np.isfinite(vals[1:]))
            for k in range(1, K + 1):
                r = vals[k - 1]
                if linear_only:
                    r = math.inf  # polynomial of degree <= 1 in this variable: unbounded
                elif not np.isfinite(r):
                    continue
                rows.append(RadiusRow(cname, lab.name, k, float(r), float(r * lab.scale)))
    return rows


def headline_radii(rows: Sequence[RadiusRow]) -> dict:
    """(component, variable) -> radius at the largest reported order."""
    out: dict = {}
    for r in rows:
        key = (r.component, r.variable)
        if key not in out or r.order >= out[key].order:
            out[key] = r
    return out


def map_radius(m: TaylorMap) -> float:
    """Smallest full-multivariate headline radius over the map's components."""
    best = math.inf
    for c in m.components:
        try:
            best = min(best, ch_radius(c).headline)
        except DomainError:
            continue
    return best


def radius_rows_to_csv(rows: Sequence[RadiusRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "variable", "order", "radius", "radius_physical"])
        for r in rows:
            w.writerow([r.component, r.variable, r.order, repr(r.radius), repr(r.radius_physical)])


# ---------------------------------------------------------------------------
# requirement check


@dataclass(frozen=True)
class RequirementResult:
    fraction: float
    stderr: float
    n_samples: int
    seed: int
    assumption: str = "Gaussian event-state distribution with propagated mean and covariance"


def norm_le(c: float) -> Callable:
    return lambda X: np.linalg.norm(X, axis=1) <= c


def in_box(lo, hi) -> Callable:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return lambda X: np.all((X >= lo) & (X <= hi), axis=1)


def requirement_check(
    moments: MomentSet,
    components: Sequence[int],
    predicate: Callable,
    n_samples: int = 100_000,
    seed: int = 0,
) -> RequirementResult:
    """Fraction of Gaussian draws (subset mean/covariance) satisfying ``predicate``."""
    sub = moments.subset(components)
    cov = sub.cov
    w, V = np.linalg.eigh(cov) if cov.size else (np.zeros(0), np.zeros((0, 0)))
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w.min() < -COV_CLAMP * scale:
        raise DomainError(f"covariance not positive semidefinite (eigenvalue {w.min():.3e})")
    L = V * np.sqrt(np.maximum(w, 0.0))
    rng = np.random.Generator(np.random.Philox(key=seed))
    Z = rng.standard_normal((n_samples, len(sub.mean)))
    X = sub.mean + Z @ L.T
    ok = np.asarray(predicate(X), dtype=bool)
    p = float(ok.mean())
    return RequirementResult(p, math.sqrt(p * (1 - p) / n_samples), n_samples, seed)
