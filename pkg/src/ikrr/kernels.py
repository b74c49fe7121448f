"""Truncated spectral kernels over invariant eigen-sub-bases.

A kernel is K(x, y) = sum_l mu_l phi_l(x) phi_l(y) over the orthonormal
G-invariant eigenfunctions with eigenvalue <= lambda_max, where the
weight profile mu is Sobolev min(1, lambda^-s), bandlimited (first D
invariant entries), or heat exp(-lambda t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

from .actions import (
    GroupAction,
    SphereAction,
    SphereElement,
    TorusAction,
    TorusElement,
    TrivialAction,
    apply_action,
    invariant_columns,
    quotient_invariants,
)
from .errors import ConfigurationError, NumericalError, UnknownQuotientError
from .spectra import (
    TWO_PI,
    EigenBasis,
    Manifold,
    TorusIndex as TorusIndexType,
    enumerate_eigenbasis,
    eval_basis,
    unit_ball_volume,
)

DEFAULT_LAMBDA_CAP = 1.0e4
FEATURE_CHUNK = 1 << 16


# ---------------------------------------------------------------------------
# weight profiles


@dataclass(frozen=True)
class Sobolev:
    s: float


@dataclass(frozen=True)
class Bandlimited:
    D: int


@dataclass(frozen=True)
class Heat:
    t: float


Profile = Union[Sobolev, Bandlimited, Heat]


def parse_kernel(spec: str) -> Profile:
    """Parse a kernel spec string: sobolev:s=2, bandlimited:D=50, heat:t=0.1."""
    spec = spec.strip()
    try:
        kind, arg = spec.split(":", 1)
        key, value = arg.split("=", 1)
    except ValueError:
        raise ConfigurationError(f"bad kernel spec {spec!r}") from None
    kind = kind.lower()
    if kind == "sobolev" and key == "s":
        return Sobolev(float(value))
    if kind == "bandlimited" and key == "D":
        return Bandlimited(int(value))
    if kind == "heat" and key == "t":
        return Heat(float(value))
    raise ConfigurationError(f"bad kernel spec {spec!r}")


def kernel_spec_string(profile: Profile) -> str:
    if isinstance(profile, Sobolev):
        return f"sobolev:s={profile.s:g}"
    if isinstance(profile, Bandlimited):
        return f"bandlimited:D={profile.D}"
    return f"heat:t={profile.t:g}"


# ---------------------------------------------------------------------------
# invariant sub-basis


@dataclass
class InvariantBasis:
    """Orthonormal invariant eigenfunctions, each a fixed linear
    combination within its eigenspace of the full canonical basis."""

    full: EigenBasis
    lams: np.ndarray
    expansion: sp.csc_matrix  # (len(full), size); Phi_inv = Phi_full @ expansion

    @property
    def size(self) -> int:
        return len(self.lams)

    def features(self, manifold: Manifold, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], self.size))
        for start in range(0, X.shape[0], FEATURE_CHUNK):
            chunk = X[start : start + FEATURE_CHUNK]
            out[start : start + len(chunk)] = (
                eval_basis(manifold, self.full.entries, chunk) @ self.expansion
            )
        return out


def invariant_basis(action: GroupAction, basis: EigenBasis) -> InvariantBasis:
    blocks = invariant_columns(action, basis)
    lams = []
    rows, cols, vals = [], [], []
    col0 = 0
    for lam, sl, C in blocks:
        r, c = C.shape
        for i in range(r):
            for j in range(c):
                if C[i, j] != 0.0:
                    rows.append(sl.start + i)
                    cols.append(col0 + j)
                    vals.append(C[i, j])
        lams.extend([lam] * c)
        col0 += c
    expansion = sp.csc_matrix(
        (vals, (rows, cols)), shape=(len(basis.entries), col0)
    )
    return InvariantBasis(basis, np.asarray(lams, dtype=float), expansion)


# ---------------------------------------------------------------------------
# kernels


def profile_weights(profile: Profile, lams: np.ndarray) -> np.ndarray:
    if isinstance(profile, Sobolev):
        with np.errstate(divide="ignore"):
            return np.where(lams > 0.0, np.minimum(1.0, lams ** (-profile.s)), 1.0)
    if isinstance(profile, Bandlimited):
        w = np.zeros(len(lams))
        w[: profile.D] = 1.0
        return w
    return np.exp(-profile.t * lams)


def _quotient_or_ambient(manifold: Manifold, action: GroupAction):
    """(d, vol) of the quotient when known, of the manifold otherwise
    (a sound upper bound for counting and tails)."""
    try:
        q = quotient_invariants(action)
        return q.d_eff, q.quotient_volume
    except UnknownQuotientError:
        return manifold.dim, manifold.volume


def tail_bound(manifold: Manifold, action: GroupAction, profile: Profile,
               lambda_max: float) -> float:
    """Upper bound on sup_x sum_{lam > lambda_max} mu(lam) |phi(x)|^2,
    from the dimension-counting prediction with a 2x safety factor."""
    if isinstance(profile, Bandlimited):
        return 0.0
    d, volq = _quotient_or_ambient(manifold, action)
    c = unit_ball_volume(d) / TWO_PI**d * volq / manifold.volume
    h = d / 2.0
    if isinstance(profile, Sobolev):
        s = profile.s
        if s <= h:
            return math.inf
        tail = 0.0
        if lambda_max < 1.0:
            tail += c * (1.0 - lambda_max**h)  # mu = 1 below lambda = 1
            lo = 1.0
        else:
            lo = lambda_max
        tail += c * h / (s - h) * lo ** (h - s)
        return 2.0 * tail
    # heat: c * h * integral_{lmax}^inf e^(-t lam) lam^(h-1) dlam
    t = profile.t
    upper = gamma_fn(h) * gammaincc(h, t * lambda_max)
    return 2.0 * c * h * t ** (-h) * upper


def choose_lambda_max(manifold: Manifold, action: GroupAction, s: float,
                      rel_tol: float = 1e-3, cap: float = DEFAULT_LAMBDA_CAP,
                      floor: float = 1.0) -> float:
    """Smallest lambda_max whose Sobolev tail bound is below rel_tol
    times a Weyl estimate of K(x, x), clipped to [floor, cap]."""
    d, volq = _quotient_or_ambient(manifold, action)
    h = d / 2.0
    if s <= h:
        raise ConfigurationError(f"Sobolev order s={s} must exceed d_eff/2={h}")
    c = unit_ball_volume(d) / TWO_PI**d * volq / manifold.volume
    diag_estimate = c * (1.0 + h / (s - h))
    # solve 2 c h/(s-h) lam^(h-s) = rel_tol * diag_estimate
    lam = (2.0 * c * h / (s - h) / (rel_tol * diag_estimate)) ** (1.0 / (s - h))
    return float(min(max(lam, floor), cap))


@dataclass
class SpectralKernel:
    manifold: Manifold
    action: GroupAction
    profile: Profile
    lambda_max: float
    basis: InvariantBasis
    weights: np.ndarray
    tail_bound: float

    @property
    def size(self) -> int:
        return self.basis.size

    def features(self, X: np.ndarray) -> np.ndarray:
        return self.basis.features(self.manifold, X)

    def gram(self, X: np.ndarray) -> np.ndarray:
        """Symmetric Gram matrix; each unordered pair is computed once."""
        A = self.features(X) * np.sqrt(self.weights)
        K = A @ A.T
        return np.triu(K) + np.triu(K, 1).T

    def cross(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return (self.features(X) * self.weights) @ self.features(Y).T

    def pair_values(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """K(x_i, y_i) for matching rows."""
        return np.einsum(
            "ij,ij->i", self.features(X) * self.weights, self.features(Y)
        )

    def eval(self, x, y) -> float:
        return float(self.pair_values(np.atleast_2d(x), np.atleast_2d(y))[0])


def build_kernel(
    manifold: Manifold,
    action: GroupAction,
    profile: Profile,
    lambda_max: float,
    entry_cap: int = 10_000_000,
) -> SpectralKernel:
    """Materialize the invariant sub-basis up to lambda_max and attach
    profile weights and the truncation tail bound."""
    d_eff, _ = _quotient_or_ambient(manifold, action)
    if isinstance(profile, Sobolev) and profile.s <= d_eff / 2.0:
        raise ConfigurationError(
            f"Sobolev order s={profile.s} must exceed d_eff/2={d_eff / 2.0} "
            "for the space to be an RKHS"
        )
    full = enumerate_eigenbasis(manifold, lambda_max, entry_cap=entry_cap)
    inv = invariant_basis(action, full)
    if isinstance(profile, Bandlimited):
        if profile.D < 1 or profile.D > inv.size:
            raise ConfigurationError(
                f"bandlimited D={profile.D} exceeds the {inv.size} invariant "
                f"entries with lambda <= {lambda_max}"
            )
    weights = profile_weights(profile, inv.lams)
    return SpectralKernel(
        manifold, action, profile, float(lambda_max), inv, weights,
        tail_bound(manifold, action, profile, lambda_max),
    )


# ---------------------------------------------------------------------------
# Haar averaging (cross-check path against the projected kernel)


def _max_continuous_frequency(base: SpectralKernel, action: GroupAction) -> int:
    entries = base.basis.full.entries
    if isinstance(action, TorusAction) and action.subtorus is not None:
        S = action.subtorus
        freqs = [
            int(np.abs(S.T @ np.asarray(e.k, dtype=np.int64)).max())
            for e in entries
            if any(e.k)
        ]
        return max(freqs, default=1)
    if isinstance(action, SphereAction) and action.axisrot:
        return max((abs(e.m) for e in entries), default=1)
    return 0


def haar_average_kernel(
    base: SpectralKernel,
    action: GroupAction,
    x,
    y,
    quadrature_order: Optional[int] = None,
) -> np.ndarray:
    """(1/|G|) sum_tau K(tau(x), y) for a kernel built over the full
    basis; continuous parts use an exact-for-trig trapezoidal rule."""
    if not isinstance(base.action, TrivialAction) and not (
        base.action.order == 1 and base.action.group_dim == 0
    ):
        raise ConfigurationError("haar_average_kernel needs a base kernel on the full basis")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    squeeze = np.asarray(x).ndim == 1
    maxfreq = _max_continuous_frequency(base, action)
    continuous = maxfreq > 0
    if continuous:
        q = quadrature_order if quadrature_order is not None else 4 * maxfreq
        if q < 4 * maxfreq:
            raise NumericalError(
                f"quadrature order {q} below 4*max frequency {4 * maxfreq}"
            )
    total = np.zeros(X.shape[0])
    count = 0
    finite = action.finite if not isinstance(action, TrivialAction) else [None]
    for e in finite:
        if isinstance(action, TorusAction) and action.subtorus is not None:
            r = action.subtorus.shape[1]
            grids = np.meshgrid(*([np.arange(q) * TWO_PI / q] * r), indexing="ij")
            for t in np.stack([g.ravel() for g in grids], axis=-1):
                elem = TorusElement(e.matrix, e.shift, tuple(t))
                total += base.pair_values(apply_action(action, elem, X), Y)
                count += 1
        elif isinstance(action, SphereAction) and action.axisrot:
            for j in range(q):
                elem = SphereElement(e.antipode, TWO_PI * j / q)
                total += base.pair_values(apply_action(action, elem, X), Y)
                count += 1
        elif isinstance(action, TrivialAction):
            total += base.pair_values(X, Y)
            count += 1
        else:
            total += base.pair_values(apply_action(action, e, X), Y)
            count += 1
    out = total / count
    return float(out[0]) if squeeze else out


# ---------------------------------------------------------------------------
# Dirichlet energy and space complexity


def diag_upper_bound(kernel: SpectralKernel) -> float:
    """Upper bound R^2 on sup_x K(x, x).

    Torus entries satisfy |phi|^2 <= 2/vol (1/vol for the constant);
    sphere entries satisfy |Y_lm|^2 <= (2l+1)/(4 pi) by the addition
    theorem.  Falls back to 2/vol per entry otherwise.
    """
    vol = kernel.manifold.volume
    entries_full = kernel.basis.full.entries
    sup_full = np.empty(len(entries_full))
    for i, e in enumerate(entries_full):
        if isinstance(e, TorusIndexType):
            sup_full[i] = (1.0 if e.parity == "const" else 2.0) / vol
        elif hasattr(e, "l"):
            sup_full[i] = (2 * e.l + 1) / (4.0 * math.pi)
        else:
            sup_full[i] = 2.0 / vol
    # an invariant combination sum c_i phi_i obeys |.|^2 <= (sum |c_i| sqrt(sup_i))^2
    expansion = kernel.basis.expansion
    sup_inv = np.asarray(
        abs(expansion).T @ np.sqrt(sup_full)
    ).ravel() ** 2
    return float(kernel.weights @ sup_inv)


def dirichlet_energy(coefficients: Mapping) -> float:
    """Energy identity: ||grad f||^2 = sum lambda * alpha^2."""
    return float(sum(e.lam * a * a for e, a in coefficients.items()))


def space_complexity(kernel: SpectralKernel) -> float:
    """Max Dirichlet energy over the unit L^2 ball of a bandlimited
    RKHS: the eigenvalue of its last included invariant entry."""
    if not isinstance(kernel.profile, Bandlimited):
        raise ConfigurationError("space_complexity is defined for bandlimited kernels")
    return float(kernel.basis.lams[kernel.profile.D - 1])
