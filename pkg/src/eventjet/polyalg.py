"""Truncated multivariate Taylor polynomials.

A :class:`TPoly` stores the coefficients of a polynomial in ``nvars`` variables
truncated at total degree ``order``.  Coefficients live in a dense vector laid
out in graded-lexicographic order (degree ascending, then lexicographically
descending exponents), so ``1, x, y, x^2, xy, y^2, ...`` for two variables.
The index tables for a given ``(nvars, order)`` pair are built once and cached
in a :class:`Space`.

Most low-level routines operate on coefficient arrays of shape ``(..., N)`` so
that many polynomials sharing a space can be processed in one numpy call; the
network evaluator relies on this for whole layers at a time.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import AlgebraError, DomainError, SchemaError

__all__ = [
    "Space",
    "get_space",
    "TPoly",
    "TaylorMap",
    "VarLabel",
    "constant",
    "variable",
    "analytic_apply",
    "compose",
    "substitute",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "recip",
    "power",
    "tanh",
    "sigmoid",
    "softplus",
    "map_to_dict",
    "map_from_dict",
]


def _graded_lex(nvars: int, degree: int) -> Iterator[tuple[int, ...]]:
    if nvars == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _graded_lex(nvars - 1, degree - first):
            yield (first,) + rest


@dataclass(eq=False)
class Space:
    """Index tables for polynomials in ``nvars`` variables up to ``order``."""

    nvars: int
    order: int
    exponents: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)
    # start offset of each degree block; block d is offsets[d]:offsets[d+1]
    offsets: np.ndarray = field(repr=False)
    _keys: np.ndarray = field(repr=False)
    _radix: np.ndarray = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return int(self.exponents.shape[0])

    def index_of(self, alpha: Sequence[int]) -> int:
        alpha = np.asarray(alpha, dtype=np.int64)
        if alpha.shape != (self.nvars,) or np.any(alpha < 0):
            raise AlgebraError(f"bad multi-index {tuple(alpha)} for {self.nvars} variables")
        if alpha.sum() > self.order:
            raise AlgebraError(f"multi-index {tuple(alpha)} exceeds order {self.order}")
        return int(self.lookup(alpha[None, :])[0])

    def lookup(self, exps: np.ndarray) -> np.ndarray:
        """Vectorised exponent-row -> coefficient index (rows must be valid)."""
        keys = exps @ self._radix
        srt = self._cache.get("sorted")
        if srt is None:
            perm = np.argsort(self._keys, kind="stable")
            srt = (perm, self._keys[perm])
            self._cache["sorted"] = srt
        return srt[0][np.searchsorted(srt[1], keys)]

    def mul_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pairs (i, j) with deg i + deg j <= order, sorted by product index."""
        tab = self._cache.get("mul")
        if tab is None:
            n_le = self.offsets[1:]  # count of monomials with degree <= d
            counts = n_le[self.order - self.degrees]
            total = int(counts.sum())
            first = np.repeat(np.arange(self.size), counts)
            start = np.repeat(np.cumsum(counts) - counts, counts)
            second = np.arange(total) - start
            target = self.lookup(self.exponents[first] + self.exponents[second])
            perm = np.argsort(target, kind="stable")
            first, second, target = first[perm], second[perm], target[perm]
            starts = np.searchsorted(target, np.arange(self.size))
            tab = (first, second, starts)
            self._cache["mul"] = tab
        return tab

    def shift_table(self, var: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices (src, dst) with exponent(dst) = exponent(src) - e_var, src_var >= 1."""
        key = ("shift", var)
        tab = self._cache.get(key)
        if tab is None:
            src = np.nonzero(self.exponents[:, var] >= 1)[0]
            lowered = self.exponents[src].copy()
            lowered[:, var] -= 1
            tab = (src, self.lookup(lowered))
            self._cache[key] = tab
        return tab

    def block(self, degree: int) -> slice:
        return slice(int(self.offsets[degree]), int(self.offsets[degree + 1]))


@functools.lru_cache(maxsize=None)
def get_space(nvars: int, order: int) -> Space:
    if nvars < 1:
        raise AlgebraError("nvars must be >= 1")
    if order < 0:
        raise AlgebraError("order must be >= 0")
    rows = [alpha for d in range(order + 1) for alpha in _graded_lex(nvars, d)]
    exps = np.array(rows, dtype=np.int64).reshape(len(rows), nvars)
    degrees = exps.sum(axis=1)
    offsets = np.zeros(order + 2, dtype=np.int64)
    offsets[1:] = np.cumsum(np.bincount(degrees, minlength=order + 1))
    if (order + 1) ** nvars >= 2**62:
        raise AlgebraError(f"space ({nvars} vars, order {order}) is too large")
    radix = (order + 1) ** np.arange(nvars, dtype=np.int64)
    keys = exps @ radix
    for a in (exps, degrees, offsets, keys):
        a.setflags(write=False)
    return Space(nvars, order, exps, degrees, offsets, keys, radix)


# --------------------------------------------------------------------------
# coefficient-array kernels, shape (..., N)


def mul_coeffs(space: Space, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    first, second, starts = space.mul_table()
    prod = a[..., first] * b[..., second]
    return np.add.reduceat(prod, starts, axis=-1)


def _series_coeffs(name: str, a0: np.ndarray, order: int, param: float | None = None) -> np.ndarray:
    """Taylor coefficients f^(j)(a0)/j!, j = 0..order, shape a0.shape + (order+1,)."""
    a0 = np.asarray(a0, dtype=float)
    c = np.zeros(a0.shape + (order + 1,))
    js = np.arange(order + 1)
    fact = np.array([math.factorial(j) for j in range(order + 1)], dtype=float)
    if name == "sin" or name == "cos":
        s, co = np.sin(a0), np.cos(a0)
        # derivative cycle of sin: sin, cos, -sin, -cos
        cyc = [s, co, -s, -co] if name == "sin" else [co, -s, -co, s]
        for j in range(order + 1):
            c[..., j] = cyc[j % 4] / fact[j]
    elif name == "exp":
        e = np.exp(a0)
        c[...] = e[..., None] / fact
    elif name == "log":
        if np.any(a0 <= 0):
            raise DomainError("log requires a positive constant term")
        c[..., 0] = np.log(a0)
        for j in range(1, order + 1):
            c[..., j] = (-1.0) ** (j + 1) / (j * a0**j)
    elif name == "recip":
        if np.any(a0 == 0):
            raise DomainError("reciprocal of a polynomial with zero constant term")
        inv = 1.0 / a0
        c[..., 0] = inv
        for j in range(1, order + 1):
            c[..., j] = -c[..., j - 1] * inv
    elif name in ("sqrt", "pow"):
        p = 0.5 if name == "sqrt" else float(param)
        if name == "sqrt" and np.any(a0 <= 0):
            raise DomainError("sqrt requires a positive constant term")
        if name == "pow" and np.any(a0 <= 0) and not float(p).is_integer():
            raise DomainError("non-integer power requires a positive constant term")
        if name == "pow" and np.any(a0 == 0) and p < 0:
            raise DomainError("negative power of a polynomial with zero constant term")
        c[..., 0] = np.sqrt(a0) if name == "sqrt" else a0**p
        for j in range(1, order + 1):
            # binomial recurrence: c_j = c_{j-1} (p - j + 1) / (j a0)
            c[..., j] = c[..., j - 1] * (p - j + 1) / (j * a0)
    elif name in ("sigmoid", "tanh", "softplus"):
        # sigmoid: y' = y - y^2 ; tanh: y' = 1 - y^2, both as coefficient recurrences
        base = "tanh" if name == "tanh" else "sigmoid"
        kmax = order if name != "softplus" else max(order - 1, 0)
        y = np.zeros(a0.shape + (kmax + 1,))
        y[..., 0] = np.tanh(a0) if base == "tanh" else scalar_sigmoid(a0)
        for j in range(kmax):
            conv = np.einsum("...i,...i->...", y[..., : j + 1], y[..., j::-1])
            lead = (1.0 if j == 0 else 0.0) if base == "tanh" else y[..., j]
            y[..., j + 1] = (lead - conv) / (j + 1)
        if name == "softplus":
            c[..., 0] = scalar_softplus(a0)
            if order >= 1:
                c[..., 1:] = y[..., :order] / js[1:]
        else:
            c[...] = y
    else:
        raise AlgebraError(f"unknown function {name!r}")
    return c


def scalar_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def scalar_softplus(x):
    return np.logaddexp(0.0, x)


def series_apply(space: Space, a: np.ndarray, name: str, param: float | None = None) -> np.ndarray:
    """Apply ``name`` to a batch of coefficient arrays by Horner in the nilpotent part."""
    a0 = a[..., 0]
    c = _series_coeffs(name, a0, space.order, param)
    h = a.copy()
    h[..., 0] = 0.0
    out = np.zeros_like(a)
    out[..., 0] = c[..., space.order]
    for j in range(space.order - 1, -1, -1):
        out = mul_coeffs(space, out, h)
        out[..., 0] += c[..., j]
    return out


# --------------------------------------------------------------------------


class TPoly:
    """Immutable truncated Taylor polynomial.

    Supports ``+ - * /`` with scalars and polynomials of the same space, integer
    and real powers, and the analytic functions of this module.
    """

    __slots__ = ("space", "coeffs")
    __array_ufunc__ = None  # let numpy scalars defer to our reflected operators

    def __init__(self, space: Space, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.size,):
            raise AlgebraError(f"expected {space.size} coefficients, got shape {coeffs.shape}")
        if coeffs.flags.writeable:
            coeffs = coeffs.copy()
            coeffs.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("TPoly is immutable")

    # -- construction -------------------------------------------------------
    @classmethod
    def constant(cls, value: float, nvars: int, order: int) -> "TPoly":
        space = get_space(nvars, order)
        c = np.zeros(space.size)
        c[0] = value
        return cls(space, c)

    @classmethod
    def variable(cls, i: int, nvars: int, order: int, value: float = 0.0) -> "TPoly":
        if not 0 <= i < nvars:
            raise AlgebraError(f"variable index {i} out of range for {nvars} variables")
        if order < 1:
            raise AlgebraError("order must be >= 1 to hold a variable")
        space = get_space(nvars, order)
        c = np.zeros(space.size)
        c[0] = value
        c[1 + i] = 1.0
        return cls(space, c)

    @classmethod
    def from_terms(cls, terms: dict, nvars: int, order: int) -> "TPoly":
        space = get_space(nvars, order)
        c = np.zeros(space.size)
        for alpha, v in terms.items():
            c[space.index_of(alpha)] += v
        return cls(space, c)

    def _new(self, coeffs: np.ndarray) -> "TPoly":
        coeffs.setflags(write=False)
        return TPoly(self.space, coeffs)

    # -- introspection --------------------------------------------------------
    @property
    def nvars(self) -> int:
        return self.space.nvars

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def const(self) -> float:
        return float(self.coeffs[0])

    def coeff(self, alpha: Sequence[int]) -> float:
        return float(self.coeffs[self.space.index_of(alpha)])

    def terms(self) -> Iterator[tuple[tuple[int, ...], float]]:
        """Nonzero terms in canonical order."""
        for idx in np.nonzero(self.coeffs)[0]:
            yield tuple(int(e) for e in self.space.exponents[idx]), float(self.coeffs[idx])

    def degree_slice(self, k: int) -> list[tuple[tuple[int, ...], float]]:
        if not 0 <= k <= self.order:
            raise AlgebraError(f"degree {k} outside 0..{self.order}")
        blk = self.space.block(k)
        exps = self.space.exponents[blk]
        vals = self.coeffs[blk]
        return [(tuple(int(e) for e in exps[i]), float(vals[i])) for i in np.nonzero(vals)[0]]

    def degree(self) -> int:
        nz = np.nonzero(self.coeffs)[0]
        return int(self.space.degrees[nz[-1]]) if nz.size else 0

    def __repr__(self) -> str:
        parts = []
        for alpha, v in self.terms():
            mono = "*".join(f"x{i}^{e}" if e > 1 else f"x{i}" for i, e in enumerate(alpha) if e)
            parts.append(f"{v:+.6g}" + (f"*{mono}" if mono else ""))
        body = " ".join(parts) if parts else "0"
        return f"TPoly[{self.nvars},{self.order}]({body})"

    # -- arithmetic -----------------------------------------------------------
    def _check(self, other: "TPoly") -> None:
        if other.space is not self.space:
            raise AlgebraError(
                f"space mismatch: ({self.nvars} vars, order {self.order}) vs "
                f"({other.nvars} vars, order {other.order})"
            )

    def __add__(self, other):
        if isinstance(other, TPoly):
            self._check(other)
            return self._new(self.coeffs + other.coeffs)
        if np.isscalar(other):
            c = self.coeffs.copy()
            c[0] += other
            return self._new(c)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.coeffs)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, TPoly):
            self._check(other)
            return self._new(self.coeffs - other.coeffs)
        if np.isscalar(other):
            c = self.coeffs.copy()
            c[0] -= other
            return self._new(c)
        return NotImplemented

    def __rsub__(self, other):
        if np.isscalar(other):
            c = -self.coeffs
            c[0] += other
            return self._new(c)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, TPoly):
            self._check(other)
            return self._new(mul_coeffs(self.space, self.coeffs, other.coeffs))
        if np.isscalar(other):
            return self._new(self.coeffs * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, TPoly):
            return self * recip(other)
        if np.isscalar(other):
            return self._new(self.coeffs / other)
        return NotImplemented

    def __rtruediv__(self, other):
        if np.isscalar(other):
            return recip(self) * other
        return NotImplemented

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            result = TPoly.constant(1.0, self.nvars, self.order)
            base = self
            n = int(p)
            while n:
                if n & 1:
                    result = result * base
                n >>= 1
                if n:
                    base = base * base
            return result
        if np.isscalar(p):
            return power(self, float(p))
        return NotImplemented

    # -- calculus -------------------------------------------------------------
    def derivative(self, var: int) -> "TPoly":
        """Partial derivative; the top-degree block of the result is zero."""
        if not 0 <= var < self.nvars:
            raise AlgebraError(f"variable index {var} out of range")
        src, dst = self.space.shift_table(var)
        c = np.zeros(self.space.size)
        c[dst] = self.coeffs[src] * self.space.exponents[src, var]
        return self._new(c)

    def antiderivative(self, var: int) -> "TPoly":
        """Integral from 0 in ``var``, truncated at ``order``."""
        if not 0 <= var < self.nvars:
            raise AlgebraError(f"variable index {var} out of range")
        src, dst = self.space.shift_table(var)
        c = np.zeros(self.space.size)
        c[src] = self.coeffs[dst] / self.space.exponents[src, var]
        return self._new(c)

    # -- evaluation -----------------------------------------------------------
    def __call__(self, point) -> float:
        return self.eval(point)

    def eval(self, point) -> float:
        p = np.asarray(point, dtype=float)
        if p.shape != (self.nvars,):
            raise AlgebraError(f"point has shape {p.shape}, expected ({self.nvars},)")
        return float(self.eval_many(p[None, :])[0])

    def eval_many(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.nvars:
            raise AlgebraError(f"points have {pts.shape[1]} columns, expected {self.nvars}")
        return monomials(self.space, pts) @ self.coeffs

    # -- truncation / embedding ------------------------------------------------
    def truncate(self, k: int) -> "TPoly":
        """Same polynomial viewed in the order-``k`` space (drops degrees > k)."""
        target = get_space(self.nvars, k)
        return TPoly(target, embed_coeffs(self.space, target, self.coeffs))

    def embed(self, nvars: int | None = None, order: int | None = None) -> "TPoly":
        """Re-express in a space with more variables (appended) and/or other order."""
        target = get_space(nvars or self.nvars, self.order if order is None else order)
        return TPoly(target, embed_coeffs(self.space, target, self.coeffs))

    def drop_vars(self, nvars: int) -> "TPoly":
        """Keep the terms that only involve the first ``nvars`` variables."""
        target = get_space(nvars, self.order)
        keep = np.nonzero(self.space.exponents[:, nvars:].sum(axis=1) == 0)[0]
        c = np.zeros(target.size)
        c[target.lookup(self.space.exponents[keep, :nvars])] = self.coeffs[keep]
        return TPoly(target, c)

    def compose(self, inner: Sequence["TPoly"]) -> "TPoly":
        return compose(self, inner)

    def allclose(self, other: "TPoly", atol: float = 0.0, rtol: float = 0.0) -> bool:
        self._check(other)
        return bool(np.allclose(self.coeffs, other.coeffs, atol=atol, rtol=rtol))


def embed_coeffs(src: Space, dst: Space, coeffs: np.ndarray) -> np.ndarray:
    if dst.nvars < src.nvars:
        raise AlgebraError("cannot embed into a space with fewer variables")
    keep = np.nonzero(src.degrees <= dst.order)[0]
    exps = np.zeros((keep.size, dst.nvars), dtype=np.int64)
    exps[:, : src.nvars] = src.exponents[keep]
    out = np.zeros(coeffs.shape[:-1] + (dst.size,))
    out[..., dst.lookup(exps)] = coeffs[..., keep]
    return out


def monomials(space: Space, pts: np.ndarray) -> np.ndarray:
    """Matrix of point^alpha, shape (M, N)."""
    m = pts.shape[0]
    out = np.ones((m, space.size))
    k = space.order
    for v in range(space.nvars):
        pw = np.ones((m, k + 1))
        for j in range(1, k + 1):
            pw[:, j] = pw[:, j - 1] * pts[:, v]
        out *= pw[:, space.exponents[:, v]]
    return out


def constant(value: float, nvars: int, order: int) -> TPoly:
    return TPoly.constant(value, nvars, order)


def variable(i: int, nvars: int, order: int, value: float = 0.0) -> TPoly:
    return TPoly.variable(i, nvars, order, value)


# --------------------------------------------------------------------------
# analytic functions: scalars pass through to numpy, polynomials get the
# order-k expansion about their constant term


ANALYTIC = ("sin", "cos", "exp", "log", "sqrt", "recip", "pow", "tanh", "sigmoid", "softplus")

_SCALAR: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "recip": lambda x: 1.0 / x,
    "tanh": np.tanh,
    "sigmoid": scalar_sigmoid,
    "softplus": scalar_softplus,
}


def analytic_apply(f: str, a: TPoly, param: float | None = None) -> TPoly:
    if f not in ANALYTIC:
        raise AlgebraError(f"unknown analytic function {f!r}")
    if f == "pow" and param is None:
        raise AlgebraError("pow needs an exponent")
    if f == "pow" and float(param).is_integer() and param >= 0:
        return a ** int(param)
    return a._new(series_apply(a.space, a.coeffs, f, param))


def _dispatch(name: str):
    scalar = _SCALAR[name]

    def fn(x):
        if isinstance(x, TPoly):
            return analytic_apply(name, x)
        if name in ("log", "sqrt") and np.any(np.asarray(x) <= 0):
            raise DomainError(f"{name} of non-positive value")
        if name == "recip" and np.any(np.asarray(x) == 0):
            raise DomainError("reciprocal of zero")
        return scalar(x)

    fn.__name__ = name
    return fn


sin = _dispatch("sin")
cos = _dispatch("cos")
exp = _dispatch("exp")
log = _dispatch("log")
sqrt = _dispatch("sqrt")
recip = _dispatch("recip")
tanh = _dispatch("tanh")
sigmoid = _dispatch("sigmoid")
softplus = _dispatch("softplus")


def power(x, p: float):
    if isinstance(x, TPoly):
        return analytic_apply("pow", x, p)
    return x**p


# --------------------------------------------------------------------------
# composition


def _is_variable(poly: TPoly, i: int) -> bool:
    c = poly.coeffs
    return i < poly.nvars and c[1 + i] == 1.0 and np.count_nonzero(c) == 1


def substitute(outer: TPoly, var: int, g: TPoly) -> TPoly:
    """Replace variable ``var`` of ``outer`` by ``g`` (same space), others unchanged."""
    outer._check(g)
    space = outer.space
    k = space.order
    # outer = sum_p c_p(x without var) * x_var^p
    parts = [np.zeros(space.size) for _ in range(k + 1)]
    exps = space.exponents
    for p in range(k + 1):
        rows = np.nonzero(exps[:, var] == p)[0]
        if rows.size == 0:
            continue
        lowered = exps[rows].copy()
        lowered[:, var] = 0
        parts[p][space.lookup(lowered)] = outer.coeffs[rows]
    out = parts[k]
    for p in range(k - 1, -1, -1):
        out = mul_coeffs(space, out, g.coeffs) + parts[p]
    return TPoly(space, out)


def compose(outer: TPoly, inner: Sequence[TPoly]) -> TPoly:
    """Truncated ``outer(inner_1, ..., inner_n)``."""
    inner = list(inner)
    if len(inner) != outer.nvars:
        raise AlgebraError(f"compose needs {outer.nvars} inner polynomials, got {len(inner)}")
    if not inner:
        raise AlgebraError("empty inner list")
    space = inner[0].space
    for g in inner[1:]:
        if g.space is not space:
            raise AlgebraError("inner polynomials must share a space")
    if space.order < outer.order:
        outer = outer.truncate(space.order)
    # fast path: only one substituted variable, the rest are the identity
    if outer.nvars == space.nvars:
        moved = [i for i, g in enumerate(inner) if not _is_variable(g, i)]
        if len(moved) <= 1:
            same = TPoly(space, embed_coeffs(outer.space, space, outer.coeffs))
            return substitute(same, moved[0], inner[moved[0]]) if moved else same
    return _compose_general(outer, inner)


def _compose_general(outer: TPoly, inner: list[TPoly]) -> TPoly:
    space = inner[0].space
    osp = outer.space
    gstack = np.stack([g.coeffs for g in inner])
    mono = np.zeros((osp.size, space.size))
    mono[0, 0] = 1.0
    exps = osp.exponents
    for d in range(1, osp.order + 1):
        rows = np.arange(osp.offsets[d], osp.offsets[d + 1])
        # peel off the first variable with a positive exponent
        var = np.argmax(exps[rows] > 0, axis=1)
        parent_exps = exps[rows].copy()
        parent_exps[np.arange(rows.size), var] -= 1
        parents = osp.lookup(parent_exps)
        mono[rows] = mul_coeffs(space, mono[parents], gstack[var])
    return TPoly(space, outer.coeffs @ mono)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VarLabel:
    """Name of a perturbation variable and the physical size of one scaled unit."""

    name: str
    scale: float = 1.0


@dataclass(frozen=True)
class TaylorMap:
    """A vector of polynomials over a common, labelled set of variables."""

    components: tuple[TPoly, ...]
    labels: tuple[VarLabel, ...]
    component_names: tuple[str, ...] = ()
    component_scales: tuple[float, ...] = ()

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "labels", tuple(self.labels))
        if not comps:
            raise AlgebraError("TaylorMap needs at least one component")
        space = comps[0].space
        if any(c.space is not space for c in comps):
            raise AlgebraError("TaylorMap components must share a space")
        if len(self.labels) != space.nvars:
            raise AlgebraError(f"{len(self.labels)} labels for {space.nvars} variables")
        names = [lab.name for lab in self.labels]
        if len(set(names)) != len(names):
            raise AlgebraError(f"duplicate variable labels: {names}")
        if not self.component_names:
            object.__setattr__(self, "component_names", tuple(f"c{i}" for i in range(len(comps))))
        if not self.component_scales:
            object.__setattr__(self, "component_scales", (1.0,) * len(comps))

    @property
    def space(self) -> Space:
        return self.components[0].space

    @property
    def nvars(self) -> int:
        return self.space.nvars

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def nominal(self) -> np.ndarray:
        return np.array([c.const for c in self.components])

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> TPoly:
        return self.components[i]

    def coefficient_matrix(self) -> np.ndarray:
        return np.stack([c.coeffs for c in self.components])

    def eval(self, point) -> np.ndarray:
        return self.eval_many(np.asarray(point, dtype=float)[None, :])[0]

    def eval_many(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.nvars:
            raise AlgebraError(f"points have {pts.shape[1]} columns, expected {self.nvars}")
        return monomials(self.space, pts) @ self.coefficient_matrix().T

    def truncate(self, k: int) -> "TaylorMap":
        return TaylorMap(
            tuple(c.truncate(k) for c in self.components),
            self.labels,
            self.component_names,
            self.component_scales,
        )

    def label_index(self, name: str) -> int:
        for i, lab in enumerate(self.labels):
            if lab.name == name:
                return i
        raise AlgebraError(f"no variable labelled {name!r}")


def map_to_dict(tmap: TaylorMap) -> dict:
    return {
        "nvars": tmap.nvars,
        "order": tmap.order,
        "labels": [{"name": lab.name, "scale": lab.scale} for lab in tmap.labels],
        "component_names": list(tmap.component_names),
        "component_scales": list(tmap.component_scales),
        "components": [
            {"terms": [{"alpha": list(alpha), "coeff": v} for alpha, v in comp.terms()]}
            for comp in tmap.components
        ],
    }


def map_from_dict(doc: dict) -> TaylorMap:
    try:
        nvars, order = int(doc["nvars"]), int(doc["order"])
        labels = []
        for lab in doc["labels"]:
            if isinstance(lab, str):
                labels.append(VarLabel(lab))
            else:
                labels.append(VarLabel(str(lab["name"]), float(lab.get("scale", 1.0))))
        comps = []
        for comp in doc["components"]:
            space = get_space(nvars, order)
            c = np.zeros(space.size)
            for term in comp["terms"]:
                c[space.index_of(term["alpha"])] = float(term["coeff"])
            comps.append(TPoly(space, c))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed map document: {exc}") from exc
    return TaylorMap(
        tuple(comps),
        tuple(labels),
        tuple(doc.get("component_names", ())),
        tuple(float(s) for s in doc.get("component_scales", ())),
    )


def identity_map(nvars: int, order: int, nominal: Iterable[float] | None = None) -> list[TPoly]:
    nominal = list(nominal) if nominal is not None else [0.0] * nvars
    return [TPoly.variable(i, nvars, order, nominal[i]) for i in range(nvars)]
