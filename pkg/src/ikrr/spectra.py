"""Closed-form Laplace-Beltrami spectra on flat tori, the 2-sphere, and products.

Conventions used throughout the package:

* the flat torus has side 2*pi (unit radii), so eigenvalues |k|^2 are
  exact integers; the circle is ``Torus(1)``;
* eigenfunctions are real and orthonormal in L^2(M, dvol);
* each +/-k pair on the torus is stored once, with the representative
  whose first nonzero coordinate is positive;
* sphere harmonics are real, evaluated by the fully normalized
  associated-Legendre upward recurrence (Condon-Shortley phase).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ._intlat import lattice_ball_count
from .errors import ConfigurationError, DomainError, ResourceLimitError

TWO_PI = 2.0 * math.pi

DEFAULT_ENTRY_CAP = 10_000_000


# ---------------------------------------------------------------------------
# manifolds


@dataclass(frozen=True)
class Torus:
    """Flat torus (R/2piZ)^dim; Torus(1) is the circle."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError("torus dimension must be a positive integer")

    @property
    def volume(self) -> float:
        return TWO_PI**self.dim

    @property
    def coord_width(self) -> int:
        return self.dim


@dataclass(frozen=True)
class Sphere2:
    """Unit 2-sphere embedded in R^3, points stored as unit vectors."""

    @property
    def dim(self) -> int:
        return 2

    @property
    def volume(self) -> float:
        return 4.0 * math.pi

    @property
    def coord_width(self) -> int:
        return 3


@dataclass(frozen=True)
class Product:
    """Riemannian product; points are the concatenated factor coordinates."""

    factors: tuple

    def __post_init__(self):
        if len(self.factors) < 2:
            raise ConfigurationError("a product manifold needs at least two factors")

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    @property
    def volume(self) -> float:
        return math.prod(f.volume for f in self.factors)

    @property
    def coord_width(self) -> int:
        return sum(f.coord_width for f in self.factors)


Manifold = Union[Torus, Sphere2, Product]


def circle() -> Torus:
    return Torus(1)


def parse_manifold(spec: str) -> Manifold:
    """Parse a manifold spec string: ``torus:d`` or ``sphere2``."""
    spec = spec.strip().lower()
    if spec == "sphere2":
        return Sphere2()
    if spec.startswith("torus:"):
        try:
            d = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigurationError(f"bad torus dimension in {spec!r}") from None
        return Torus(d)
    raise ConfigurationError(f"unknown manifold spec {spec!r} (expected torus:d or sphere2)")


def manifold_spec_string(manifold: Manifold) -> str:
    if isinstance(manifold, Torus):
        return f"torus:{manifold.dim}"
    if isinstance(manifold, Sphere2):
        return "sphere2"
    return "product(" + ",".join(manifold_spec_string(f) for f in manifold.factors) + ")"


# ---------------------------------------------------------------------------
# eigenfunction labels


@dataclass(frozen=True)
class TorusIndex:
    """Frequency vector plus parity tag; parity 'const' only for k = 0."""

    k: tuple
    parity: str  # 'const' | 'cos' | 'sin'

    @property
    def lam(self) -> float:
        return float(sum(c * c for c in self.k))


@dataclass(frozen=True)
class SphereIndex:
    l: int
    m: int

    @property
    def lam(self) -> float:
        return float(self.l * (self.l + 1))


@dataclass(frozen=True)
class ProductIndex:
    parts: tuple

    @property
    def lam(self) -> float:
        return float(sum(p.lam for p in self.parts))


EigenIndex = Union[TorusIndex, SphereIndex, ProductIndex]

_PARITY_ORDER = {"const": 0, "cos": 1, "sin": 2}


def _sort_key(entry: EigenIndex):
    if isinstance(entry, TorusIndex):
        return (entry.lam, 0, entry.k, _PARITY_ORDER[entry.parity])
    if isinstance(entry, SphereIndex):
        return (entry.lam, 1, entry.l, entry.m)
    return (entry.lam, 2, tuple(_sort_key(p) for p in entry.parts))


@dataclass
class EigenBasis:
    """All eigenfunctions with eigenvalue <= lambda_max, in canonical order."""

    manifold: Manifold
    lambda_max: float
    entries: list
    lams: np.ndarray = field(init=False)

    def __post_init__(self):
        self.lams = np.array([e.lam for e in self.entries], dtype=float)

    def __len__(self) -> int:
        return len(self.entries)

    def eigenvalue_groups(self):
        """Yield (lambda, slice) over runs of equal eigenvalue."""
        start = 0
        for lam, group in itertools.groupby(self.entries, key=lambda e: e.lam):
            n = sum(1 for _ in group)
            yield lam, slice(start, start + n)
            start += n

    def index_of(self) -> dict:
        return {e: i for i, e in enumerate(self.entries)}


# ---------------------------------------------------------------------------
# enumeration


def _torus_lattice(dim: int, lambda_max: float, entry_cap: int) -> np.ndarray:
    """All integer vectors with |k|^2 <= lambda_max (including k = 0)."""
    kmax = math.isqrt(int(lambda_max))
    if (2 * kmax + 1) ** dim > max(8 * entry_cap, 1 << 22):
        raise ResourceLimitError(
            f"lattice scan of size (2*{kmax}+1)^{dim} exceeds the entry cap {entry_cap}"
        )
    axes = [np.arange(-kmax, kmax + 1, dtype=np.int64)] * dim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    return grid[np.einsum("ij,ij->i", grid, grid) <= lambda_max]


def _canonical_mask(ks: np.ndarray) -> np.ndarray:
    """True for k = 0 and for representatives with first nonzero coordinate > 0."""
    nonzero = ks != 0
    has_any = nonzero.any(axis=1)
    first = np.argmax(nonzero, axis=1)
    lead = ks[np.arange(len(ks)), first]
    return ~has_any | (lead > 0)


def _sphere_lmax(lam: float) -> int:
    if lam < 0:
        return -1
    l = int((math.sqrt(4.0 * lam + 1.0) - 1.0) / 2.0)
    while (l + 1) * (l + 2) <= lam:
        l += 1
    while l >= 0 and l * (l + 1) > lam:
        l -= 1
    return l


def enumerate_eigenbasis(
    manifold: Manifold, lambda_max: float, entry_cap: int = DEFAULT_ENTRY_CAP
) -> EigenBasis:
    """Exhaustively enumerate the eigenbasis up to lambda_max, canonically sorted."""
    if lambda_max < 0:
        raise ConfigurationError("lambda_max must be nonnegative")
    count, _ = weyl_count(manifold, lambda_max, entry_cap=entry_cap)
    if count > entry_cap:
        raise ResourceLimitError(
            f"basis would have {count} entries, exceeding the cap {entry_cap}"
        )
    entries = _enumerate_entries(manifold, lambda_max, entry_cap)
    entries.sort(key=_sort_key)
    return EigenBasis(manifold, float(lambda_max), entries)


def _enumerate_entries(manifold: Manifold, lambda_max: float, entry_cap: int) -> list:
    if isinstance(manifold, Torus):
        ks = _torus_lattice(manifold.dim, lambda_max, entry_cap)
        ks = ks[_canonical_mask(ks)]
        entries = []
        for k in map(tuple, ks.tolist()):
            if any(k):
                entries.append(TorusIndex(k, "cos"))
                entries.append(TorusIndex(k, "sin"))
            else:
                entries.append(TorusIndex(k, "const"))
        return entries
    if isinstance(manifold, Sphere2):
        lmax = _sphere_lmax(lambda_max)
        return [SphereIndex(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]
    if isinstance(manifold, Product):
        partials = [[]]
        for f in manifold.factors:
            sub = _enumerate_entries(f, lambda_max, entry_cap)
            sub.sort(key=lambda e: e.lam)
            new = []
            for left in partials:
                used = sum(p.lam for p in left)
                for e in sub:
                    if used + e.lam > lambda_max:
                        break
                    new.append(left + [e])
                    if len(new) > entry_cap:
                        raise ResourceLimitError(
                            f"product basis exceeds the entry cap {entry_cap}"
                        )
            partials = new
        return [ProductIndex(tuple(parts)) for parts in partials]
    raise ConfigurationError(f"unsupported manifold kind {type(manifold).__name__}")


# ---------------------------------------------------------------------------
# evaluation


def _split_columns(manifold: Product, X: np.ndarray):
    offset = 0
    for f in manifold.factors:
        yield f, X[:, offset : offset + f.coord_width]
        offset += f.coord_width


def _legendre_table(lmax: int, ct: np.ndarray, st: np.ndarray) -> dict:
    """Fully normalized associated Legendre values Pbar_{l,m}(cos theta).

    Normalized so that Y_{l,0} = Pbar_{l,0} and Y_{l,+-m} = sqrt(2) *
    Pbar_{l,m} * {cos, sin}(m phi) are orthonormal in L^2(S^2, dvol).
    """
    table = {}
    pmm = np.full_like(ct, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = -math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * st * pmm
        table[(m, m)] = pmm
        if m + 1 <= lmax:
            table[(m + 1, m)] = math.sqrt(2.0 * m + 3.0) * ct * pmm
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            table[(l, m)] = a * (ct * table[(l - 1, m)] - b * table[(l - 2, m)])
    return table


def eval_basis(manifold: Manifold, entries: list, X: np.ndarray) -> np.ndarray:
    """Evaluate eigenfunctions at points X, returning an (n, len(entries)) array."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != manifold.coord_width:
        raise DomainError(
            f"points have width {X.shape[1]}, expected {manifold.coord_width}"
        )
    n = X.shape[0]
    out = np.empty((n, len(entries)))
    if isinstance(manifold, Torus):
        scale = (TWO_PI) ** (-manifold.dim / 2.0)
        angle_cache = {}
        for j, e in enumerate(entries):
            if e.parity == "const":
                out[:, j] = scale
                continue
            if e.k not in angle_cache:
                angle_cache[e.k] = X @ np.asarray(e.k, dtype=float)
            ang = angle_cache[e.k]
            fn = np.cos if e.parity == "cos" else np.sin
            out[:, j] = math.sqrt(2.0) * scale * fn(ang)
        return out
    if isinstance(manifold, Sphere2):
        norms = np.linalg.norm(X, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise DomainError("sphere points must be unit vectors within 1e-9")
        ct = np.clip(X[:, 2], -1.0, 1.0)
        st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
        phi = np.arctan2(X[:, 1], X[:, 0])
        lmax = max((e.l for e in entries), default=0)
        table = _legendre_table(lmax, ct, st)
        for j, e in enumerate(entries):
            p = table[(e.l, abs(e.m))]
            if e.m == 0:
                out[:, j] = p
            elif e.m > 0:
                out[:, j] = math.sqrt(2.0) * p * np.cos(e.m * phi)
            else:
                out[:, j] = math.sqrt(2.0) * p * np.sin(-e.m * phi)
        return out
    if isinstance(manifold, Product):
        factor_cols = []
        for f, Xf in _split_columns(manifold, X):
            uniq = sorted({e.parts[len(factor_cols)] for e in entries}, key=_sort_key)
            idx = {u: i for i, u in enumerate(uniq)}
            factor_cols.append((idx, eval_basis(f, uniq, Xf)))
        out[:] = 1.0
        for pos, (idx, cols) in enumerate(factor_cols):
            for j, e in enumerate(entries):
                out[:, j] *= cols[:, idx[e.parts[pos]]]
        return out
    raise ConfigurationError(f"unsupported manifold kind {type(manifold).__name__}")


def eval_eigenfunction(manifold: Manifold, index: EigenIndex, x) -> float:
    return float(eval_basis(manifold, [index], np.atleast_2d(x))[0, 0])


# ---------------------------------------------------------------------------
# counting and sampling


def _check_manifold(manifold) -> None:
    if not isinstance(manifold, (Torus, Sphere2, Product)):
        raise ConfigurationError(
            f"unsupported manifold kind {type(manifold).__name__}"
        )


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def weyl_prediction(manifold: Manifold, lam: float) -> float:
    """Leading Weyl term (omega_d / (2 pi)^d) vol(M) lam^(d/2)."""
    d = manifold.dim
    return unit_ball_volume(d) / TWO_PI**d * manifold.volume * lam ** (d / 2.0)


def weyl_count(
    manifold: Manifold, lam: float, entry_cap: int = DEFAULT_ENTRY_CAP
) -> tuple:
    """(exact eigenvalue count N(lam), Weyl leading-term prediction)."""
    _check_manifold(manifold)
    if lam < 0:
        raise ConfigurationError("lambda must be nonnegative")
    prediction = weyl_prediction(manifold, lam)
    if prediction > 4 * entry_cap:
        raise ResourceLimitError(
            f"predicted count {prediction:.3g} exceeds the entry cap {entry_cap}"
        )
    if isinstance(manifold, Torus):
        count = lattice_ball_count(np.eye(manifold.dim, dtype=np.int64), lam)
    elif isinstance(manifold, Sphere2):
        count = (_sphere_lmax(lam) + 1) ** 2
    elif isinstance(manifold, Product):
        count = len(_enumerate_entries(manifold, lam, entry_cap))
    else:
        raise ConfigurationError(f"unsupported manifold kind {type(manifold).__name__}")
    return count, prediction


def uniform_sample(manifold: Manifold, seed: int, n: int) -> np.ndarray:
    """n i.i.d. points uniform w.r.t. normalized volume; deterministic in seed."""
    if n < 0:
        raise ConfigurationError("sample size must be nonnegative")
    rng = np.random.default_rng(seed)
    return _sample_with(manifold, rng, n)


def _sample_with(manifold: Manifold, rng: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(manifold, Torus):
        return rng.uniform(0.0, TWO_PI, size=(n, manifold.dim))
    if isinstance(manifold, Sphere2):
        g = rng.normal(size=(n, 3))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    if isinstance(manifold, Product):
        return np.hstack([_sample_with(f, rng, n) for f in manifold.factors])
    raise ConfigurationError(f"unsupported manifold kind {type(manifold).__name__}")


def geodesic_distance(manifold: Manifold, x, y) -> np.ndarray:
    """Pairwise geodesic distance between matching rows of x and y."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if isinstance(manifold, Torus):
        delta = np.abs((X - Y) % TWO_PI)
        delta = np.minimum(delta, TWO_PI - delta)
        return np.sqrt((delta**2).sum(axis=1))
    if isinstance(manifold, Sphere2):
        dots = np.clip((X * Y).sum(axis=1), -1.0, 1.0)
        return np.arccos(dots)
    if isinstance(manifold, Product):
        parts = [
            geodesic_distance(f, Xf, Yf) ** 2
            for (f, Xf), (_, Yf) in zip(
                _split_columns(manifold, X), _split_columns(manifold, Y)
            )
        ]
        return np.sqrt(np.sum(parts, axis=0))
    raise ConfigurationError(f"unsupported manifold kind {type(manifold).__name__}")
