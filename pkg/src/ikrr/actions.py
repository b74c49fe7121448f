"""Isometric group actions on the built-in manifolds.

Torus actions are affine maps x -> A x + b where A is a signed
permutation matrix and b is a rational multiple of 2*pi (stored exactly
as Fractions), optionally extended by a continuous subtorus of
translations given by an integer direction matrix.  Sphere actions are
generated by the antipodal map and the full circle of rotations about
the z-axis.

Invariant-dimension counting uses the character (Burnside) formula: the
trace of tau* on an eigenspace is a phase sum over the tau-fixed
sublattice, so N(lambda; G) is an average of exact lattice sums.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from ._intlat import integer_kernel, lattice_phase_sum, same_span, saturate
from .errors import (
    ConfigurationError,
    NumericalError,
    ResourceLimitError,
    UnknownQuotientError,
)
from .spectra import (
    TWO_PI,
    EigenBasis,
    Manifold,
    Product,
    Sphere2,
    Torus,
    _sphere_lmax,
    unit_ball_volume,
    weyl_count,
    weyl_prediction,
)

DEFAULT_ORDER_CAP = 10_000_000


# ---------------------------------------------------------------------------
# group elements


@dataclass(frozen=True)
class TorusElement:
    """x -> A x + 2*pi*shift + V t (all torus arithmetic mod 2*pi).

    ``matrix`` is a signed permutation matrix stored as nested int
    tuples; ``shift`` holds Fractions of a full turn; ``t`` are the
    continuous subtorus parameters (empty for finite elements).
    """

    matrix: tuple
    shift: tuple
    t: tuple = ()

    def compose(self, other: "TorusElement") -> "TorusElement":
        A1, A2 = np.array(self.matrix, dtype=np.int64), np.array(other.matrix, dtype=np.int64)
        A = A1 @ A2
        c = tuple(
            (sum(Fraction(int(A1[i, j])) * other.shift[j] for j in range(len(self.shift)))
             + self.shift[i]) % 1
            for i in range(len(self.shift))
        )
        return TorusElement(tuple(map(tuple, A.tolist())), c)

    def inverse(self) -> "TorusElement":
        A = np.array(self.matrix, dtype=np.int64)
        Ainv = A.T  # signed permutation matrices are orthogonal
        c = tuple(
            (-sum(Fraction(int(Ainv[i, j])) * self.shift[j] for j in range(len(self.shift)))) % 1
            for i in range(len(self.shift))
        )
        return TorusElement(tuple(map(tuple, Ainv.tolist())), c)


@dataclass(frozen=True)
class SphereElement:
    """x -> (+-1) R_z(angle) x; the two operations commute."""

    antipode: bool = False
    angle: float = 0.0

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return -R if self.antipode else R


GroupElement = Union[TorusElement, SphereElement]


# ---------------------------------------------------------------------------
# action classes


@dataclass
class QuotientInvariants:
    """Closed-form quotient data: effective dimension, quotient volume,
    and the effective-sample multiplier (|G| for finite groups)."""

    d_eff: int
    quotient_volume: float
    effective_sample_factor: float


@dataclass
class InvariantProjector:
    lam: float
    matrix: np.ndarray
    rank: int


class TorusAction:
    """A finite group of signed-permutation affine maps, optionally
    extended by a continuous subtorus of translations."""

    def __init__(self, manifold: Torus, generators, subtorus_columns=None,
                 spec: str = "", order_cap: int = DEFAULT_ORDER_CAP):
        self.manifold = manifold
        self.spec = spec
        d = manifold.dim
        subtorus = None
        if subtorus_columns is not None and len(subtorus_columns):
            V = np.array(subtorus_columns, dtype=np.int64).reshape(-1, d).T
            if np.all(V == 0):
                raise ConfigurationError("subtorus directions must be nonzero")
            subtorus = saturate(V)
        self.finite = _close_finite(generators, d, order_cap)
        if subtorus is not None:
            subtorus = _close_subtorus(subtorus, self.finite)
        self.subtorus = subtorus

    @property
    def identity(self) -> TorusElement:
        d = self.manifold.dim
        return TorusElement(tuple(map(tuple, np.eye(d, dtype=np.int64).tolist())),
                            (Fraction(0),) * d)

    @property
    def is_continuous(self) -> bool:
        return self.subtorus is not None

    @property
    def order(self) -> Optional[int]:
        return None if self.is_continuous else len(self.finite)

    @property
    def group_dim(self) -> int:
        return 0 if self.subtorus is None else self.subtorus.shape[1]

    @property
    def translation_only(self) -> bool:
        d = self.manifold.dim
        eye = np.eye(d, dtype=np.int64)
        return all(np.array_equal(np.array(e.matrix), eye) for e in self.finite)


class SphereAction:
    def __init__(self, antipodal: bool, axisrot: bool, spec: str = ""):
        self.manifold = Sphere2()
        self.antipodal = antipodal
        self.axisrot = axisrot
        self.spec = spec
        self.finite = [SphereElement(False, 0.0)]
        if antipodal:
            self.finite.append(SphereElement(True, 0.0))

    @property
    def identity(self) -> SphereElement:
        return SphereElement(False, 0.0)

    @property
    def is_continuous(self) -> bool:
        return self.axisrot

    @property
    def order(self) -> Optional[int]:
        return None if self.axisrot else len(self.finite)

    @property
    def group_dim(self) -> int:
        return 1 if self.axisrot else 0


class TrivialAction:
    """Trivial action on any manifold (used for product manifolds)."""

    def __init__(self, manifold: Manifold):
        self.manifold = manifold
        self.spec = "trivial"
        self.finite = [None]

    identity = None
    is_continuous = False
    order = 1
    group_dim = 0


GroupAction = Union[TorusAction, SphereAction, TrivialAction]


def _close_finite(generators, d: int, order_cap: int):
    eye = tuple(map(tuple, np.eye(d, dtype=np.int64).tolist()))
    identity = TorusElement(eye, (Fraction(0),) * d)
    gens = list(generators) + [g.inverse() for g in generators]
    seen = {identity}
    frontier = [identity]
    while frontier:
        nxt = []
        for e in frontier:
            for g in gens:
                prod = g.compose(e)
                if prod not in seen:
                    if len(seen) >= order_cap:
                        raise ResourceLimitError(
                            f"group order exceeds the cap {order_cap}"
                        )
                    seen.add(prod)
                    nxt.append(prod)
        frontier = nxt
    return sorted(seen, key=lambda e: (e.matrix, e.shift))


def _close_subtorus(S: np.ndarray, finite) -> np.ndarray:
    """Smallest A-invariant saturated lattice containing S, over all
    finite elements A (conjugation can enlarge the continuous part)."""
    while True:
        cols = [S]
        for e in finite:
            A = np.array(e.matrix, dtype=np.int64)
            cols.append(A @ S)
        merged = saturate(np.hstack(cols))
        if same_span(merged, S):
            return S
        S = merged


# ---------------------------------------------------------------------------
# parsing

_PI_TOKEN = re.compile(r"^(-?)(\d+)?pi(?:/(\d+))?$|^(-?\d+)$")


def _parse_turns(token: str) -> Fraction:
    """Parse a rational multiple of pi ('pi/4', '-3pi/2', '0') into
    fractions of a full turn (2*pi)."""
    token = token.strip().replace(" ", "")
    m = _PI_TOKEN.match(token)
    if not m:
        raise ConfigurationError(
            f"offset {token!r} is not a rational multiple of pi (try pi, pi/4, -3pi/2, 0)"
        )
    if m.group(4) is not None:
        if int(m.group(4)) != 0:
            raise ConfigurationError(
                f"offset {token!r} must be a rational multiple of pi or 0"
            )
        return Fraction(0)
    sign = -1 if m.group(1) == "-" else 1
    num = int(m.group(2)) if m.group(2) else 1
    den = int(m.group(3)) if m.group(3) else 1
    return Fraction(sign * num, 2 * den)


def _perm_matrix(cycles_spec: str, d: int) -> np.ndarray:
    perm = list(range(d))
    body = cycles_spec.strip()
    if not re.fullmatch(r"(\(\s*\d+(\s+\d+)*\s*\))+", body):
        raise ConfigurationError(f"bad permutation spec {cycles_spec!r}; use e.g. (0 1) or (0 1 2)(3 4)")
    for cyc in re.findall(r"\(([^)]*)\)", body):
        idx = [int(t) for t in cyc.split()]
        if any(i < 0 or i >= d for i in idx) or len(set(idx)) != len(idx):
            raise ConfigurationError(f"permutation indices out of range in {cycles_spec!r}")
        for a, b in zip(idx, idx[1:] + idx[:1]):
            perm[a] = b
    # tau(x)_perm[i] = x_i, i.e. coordinate i is sent to slot perm[i]
    A = np.zeros((d, d), dtype=np.int64)
    for i, p in enumerate(perm):
        A[p, i] = 1
    return A


def parse_action(manifold: Manifold, spec: str, order_cap: int = DEFAULT_ORDER_CAP) -> GroupAction:
    """Parse an action spec string; components are joined with '+'.

    Torus grammar: ``trivial``, ``shift:pi,0``, ``perm:(0 1)``,
    ``reflect:0``, ``signflip:0,1``, ``subtorus:[1,0]``.
    Sphere grammar: ``trivial``, ``antipodal``, ``axisrot``.
    """
    spec = spec.strip()
    parts = [p.strip() for p in spec.split("+") if p.strip()]
    if not parts:
        raise ConfigurationError("empty action spec")
    if isinstance(manifold, Sphere2):
        antipodal = axisrot = False
        for p in parts:
            if p == "trivial":
                continue
            elif p == "antipodal":
                antipodal = True
            elif p == "axisrot":
                axisrot = True
            else:
                raise ConfigurationError(f"unknown sphere action component {p!r}")
        return SphereAction(antipodal, axisrot, spec=spec)
    if isinstance(manifold, Torus):
        d = manifold.dim
        eye = np.eye(d, dtype=np.int64)
        generators = []
        subtorus_cols = []

        def affine(A, shift):
            generators.append(
                TorusElement(tuple(map(tuple, np.asarray(A, dtype=np.int64).tolist())),
                             tuple(Fraction(s) % 1 for s in shift))
            )

        for p in parts:
            if p == "trivial":
                continue
            elif p.startswith("shift:"):
                toks = p.split(":", 1)[1].split(",")
                if len(toks) != d:
                    raise ConfigurationError(f"shift needs {d} offsets, got {len(toks)}")
                affine(eye, [_parse_turns(t) for t in toks])
            elif p.startswith("perm:"):
                affine(_perm_matrix(p.split(":", 1)[1], d), [Fraction(0)] * d)
            elif p.startswith("reflect:"):
                idx = _coord_list(p.split(":", 1)[1], d)
                A = eye.copy()
                shift = [Fraction(0)] * d
                for i in idx:
                    A[i, i] = -1
                    shift[i] = Fraction(1, 2)  # theta -> pi - theta
                affine(A, shift)
            elif p.startswith("signflip:"):
                idx = _coord_list(p.split(":", 1)[1], d)
                A = eye.copy()
                for i in idx:
                    A[i, i] = -1
                affine(A, [Fraction(0)] * d)
            elif p.startswith("subtorus:"):
                body = p.split(":", 1)[1].strip()
                if not (body.startswith("[") and body.endswith("]")):
                    raise ConfigurationError(f"subtorus spec {p!r} must look like subtorus:[1,0]")
                col = [int(t) for t in body[1:-1].split(",")]
                if len(col) != d:
                    raise ConfigurationError(f"subtorus direction needs {d} entries")
                subtorus_cols.append(col)
            else:
                raise ConfigurationError(f"unknown torus action component {p!r}")
        return TorusAction(manifold, generators, subtorus_cols or None,
                           spec=spec, order_cap=order_cap)
    if isinstance(manifold, Product):
        if parts == ["trivial"]:
            return TrivialAction(manifold)
        raise ConfigurationError("only the trivial action is supported on product manifolds")
    raise ConfigurationError(f"unsupported manifold kind {type(manifold).__name__}")


def _coord_list(body: str, d: int):
    idx = [int(t) for t in body.split(",")]
    if any(i < 0 or i >= d for i in idx) or len(set(idx)) != len(idx):
        raise ConfigurationError(f"coordinate list {body!r} out of range for dimension {d}")
    return idx


def trivial_action(manifold: Manifold) -> GroupAction:
    return parse_action(manifold, "trivial")


# ---------------------------------------------------------------------------
# applying elements


def apply_action(action: GroupAction, element, x) -> np.ndarray:
    """Apply a group element to one point or a batch of points."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    squeeze = np.asarray(x).ndim == 1
    if isinstance(action, TrivialAction):
        out = X
    elif isinstance(action, TorusAction):
        if not isinstance(element, TorusElement) or len(element.shift) != action.manifold.dim:
            raise ConfigurationError("invalid group element for this action")
        if element.t and action.subtorus is None:
            raise ConfigurationError("element carries continuous parameters but the action has none")
        A = np.array(element.matrix, dtype=float)
        b = TWO_PI * np.array([float(c) for c in element.shift])
        if element.t:
            b = b + action.subtorus @ np.asarray(element.t, dtype=float)
        out = (X @ A.T + b) % TWO_PI
    elif isinstance(action, SphereAction):
        if not isinstance(element, SphereElement):
            raise ConfigurationError("invalid group element for this action")
        out = X @ element.rotation().T
    else:
        raise ConfigurationError(f"unsupported action {type(action).__name__}")
    return out[0] if squeeze else out


def sample_elements(action: GroupAction, rng: np.random.Generator, count: int):
    """Haar-distributed random elements (finite part uniform, continuous
    parameters uniform on their torus)."""
    out = []
    for _ in range(count):
        if isinstance(action, TrivialAction):
            out.append(None)
        elif isinstance(action, TorusAction):
            e = action.finite[rng.integers(len(action.finite))]
            if action.subtorus is not None:
                t = tuple(rng.uniform(0.0, TWO_PI, size=action.subtorus.shape[1]))
                e = TorusElement(e.matrix, e.shift, t)
            out.append(e)
        elif isinstance(action, SphereAction):
            anti = action.antipodal and bool(rng.integers(2))
            angle = float(rng.uniform(0.0, TWO_PI)) if action.axisrot else 0.0
            out.append(SphereElement(anti, angle))
    return out


# ---------------------------------------------------------------------------
# representation matrices and projectors


def _canonical_pair(k: np.ndarray):
    """Canonical representative of the +-k pair and the sin-sign flip."""
    nz = np.nonzero(k)[0]
    if len(nz) == 0:
        return tuple(k.tolist()), 1.0
    if k[nz[0]] > 0:
        return tuple(k.tolist()), 1.0
    return tuple((-k).tolist()), -1.0


_QUARTER_TURNS = {
    Fraction(0): (1.0, 0.0),
    Fraction(1, 4): (0.0, 1.0),
    Fraction(1, 2): (-1.0, 0.0),
    Fraction(3, 4): (0.0, -1.0),
}


def _torus_rep_matrix(entries, A: np.ndarray, shift, extra_offset=None) -> np.ndarray:
    """Matrix of f -> f(A x + 2*pi*shift + extra) on one eigenspace.

    ``shift`` holds exact Fractions of a turn, so rational phases
    (quarter turns in particular) produce exact matrix entries;
    ``extra_offset`` is a float offset used by the quadrature path.
    """
    col = {}
    for j, e in enumerate(entries):
        col[(e.k, e.parity)] = j
    M = np.zeros((len(entries), len(entries)))
    for i, e in enumerate(entries):
        if e.parity == "const":
            M[i, col[(e.k, "const")]] = 1.0
            continue
        k = np.asarray(e.k, dtype=np.int64)
        kprime = A.astype(np.int64).T @ k
        turn = sum(Fraction(int(ki)) * ci for ki, ci in zip(e.k, shift)) % 1
        if extra_offset is not None:
            phase = TWO_PI * float(turn) + float(k @ extra_offset)
            c, s = math.cos(phase), math.sin(phase)
        else:
            c, s = _QUARTER_TURNS.get(
                turn, (math.cos(TWO_PI * turn), math.sin(TWO_PI * turn))
            )
        kc, sflip = _canonical_pair(kprime)
        if e.parity == "cos":
            M[i, col[(kc, "cos")]] += c
            M[i, col[(kc, "sin")]] += -s * sflip
        else:
            M[i, col[(kc, "cos")]] += s
            M[i, col[(kc, "sin")]] += c * sflip
    return M


def _sphere_rep_matrix(entries, element: SphereElement) -> np.ndarray:
    l = entries[0].l
    col = {e.m: j for j, e in enumerate(entries)}
    M = np.zeros((len(entries), len(entries)))
    sign = (-1.0) ** l if element.antipode else 1.0
    for e in entries:
        i = col[e.m]
        m = abs(e.m)
        if m == 0:
            M[i, i] = sign
            continue
        c, s = math.cos(m * element.angle), math.sin(m * element.angle)
        if e.m > 0:  # cos harmonic
            M[i, col[m]] += sign * c
            M[i, col[-m]] += -sign * s
        else:        # sin harmonic
            M[i, col[m]] += sign * s
            M[i, col[-m]] += sign * c
    return M


def _subtorus_selection(action: TorusAction, entries) -> np.ndarray:
    S = action.subtorus
    keep = np.ones(len(entries))
    for j, e in enumerate(entries):
        if any(e.k) and np.any(S.T @ np.asarray(e.k, dtype=np.int64) != 0):
            keep[j] = 0.0
    return keep


def invariant_projector(
    action: GroupAction,
    lam: float,
    basis: EigenBasis,
    method: str = "auto",
    quadrature_order: Optional[int] = None,
) -> InvariantProjector:
    """Orthogonal projector onto the G-invariant subspace of the
    eigenspace V_lambda, in the basis of the eigenspace's entries.

    ``method='auto'`` averages finite groups exactly and applies
    closed-form selection rules to the continuous parts;
    ``method='quadrature'`` replaces the continuous averaging by a
    trapezoidal Haar quadrature (cross-check path).
    """
    entries = [e for e in basis.entries if e.lam == lam]
    if not entries:
        raise ConfigurationError(f"lambda={lam} is not an eigenvalue of the basis")
    m = len(entries)
    if isinstance(action, TrivialAction):
        P = np.eye(m)
    elif isinstance(action, TorusAction):
        mats = [
            _torus_rep_matrix(entries, np.array(e.matrix), e.shift)
            for e in action.finite
        ]
        P = np.mean(mats, axis=0)
        if action.subtorus is not None:
            if method == "quadrature":
                P = P @ _quadrature_average_torus(action, entries, quadrature_order)
            else:
                P = P * _subtorus_selection(action, entries)[None, :]
    elif isinstance(action, SphereAction):
        mats = [_sphere_rep_matrix(entries, e) for e in action.finite]
        P = np.mean(mats, axis=0)
        if action.axisrot:
            if method == "quadrature":
                P = P @ _quadrature_average_sphere(entries, quadrature_order)
            else:
                keep = np.array([1.0 if e.m == 0 else 0.0 for e in entries])
                P = P * keep[None, :]
    else:
        raise ConfigurationError(f"unsupported action {type(action).__name__}")
    P = 0.5 * (P + P.T)
    if np.abs(P @ P - P).max() > 1e-10:
        raise NumericalError(
            f"invariant projector at lambda={lam} is not idempotent "
            "(quadrature order too low?)"
        )
    trace = float(np.trace(P))
    rank = int(round(trace))
    if abs(trace - rank) > 1e-8:
        raise NumericalError(f"projector trace {trace} is not close to an integer")
    return InvariantProjector(float(lam), P, rank)


def _quadrature_average_torus(action: TorusAction, entries, order: Optional[int]) -> np.ndarray:
    S = action.subtorus
    maxfreq = 1
    for e in entries:
        if any(e.k):
            maxfreq = max(maxfreq, int(np.abs(S.T @ np.asarray(e.k, dtype=np.int64)).max()))
    q = order if order is not None else 4 * maxfreq
    if q < 4 * maxfreq:
        raise NumericalError(f"quadrature order {q} below 4*max frequency {4 * maxfreq}")
    d = action.manifold.dim
    eye = np.eye(d, dtype=np.int64)
    zero_shift = (Fraction(0),) * d
    grids = np.meshgrid(*([np.arange(q) * TWO_PI / q] * S.shape[1]), indexing="ij")
    ts = np.stack([g.ravel() for g in grids], axis=-1)
    P = np.zeros((len(entries), len(entries)))
    for t in ts:
        P += _torus_rep_matrix(entries, eye, zero_shift, extra_offset=S @ t)
    return P / len(ts)


def _quadrature_average_sphere(entries, order: Optional[int]) -> np.ndarray:
    maxfreq = max(1, max(abs(e.m) for e in entries))
    q = order if order is not None else 4 * maxfreq
    if q < 4 * maxfreq:
        raise NumericalError(f"quadrature order {q} below 4*max frequency {4 * maxfreq}")
    P = np.zeros((len(entries), len(entries)))
    for j in range(q):
        P += _sphere_rep_matrix(entries, SphereElement(False, TWO_PI * j / q))
    return P / q


def _is_selection_only(action: GroupAction) -> bool:
    """True when the projector is diagonal with 0/1 entries in the
    canonical basis, so invariant functions are basis entries themselves."""
    if isinstance(action, TrivialAction):
        return True
    if isinstance(action, SphereAction):
        return True
    if isinstance(action, TorusAction):
        return action.translation_only
    return False


def _torus_pair_selected(action: TorusAction, k) -> bool:
    kvec = np.asarray(k, dtype=np.int64)
    for e in action.finite:
        phase = sum(Fraction(int(ki)) * ci for ki, ci in zip(k, e.shift))
        if phase % 1 != 0:
            return False
    if action.subtorus is not None and np.any(action.subtorus.T @ kvec != 0):
        return False
    return True


def invariant_columns(action: GroupAction, basis: EigenBasis):
    """Orthonormal invariant combinations for every eigenvalue group.

    Returns a list of (lam, slice, C) where C has one column per
    invariant function, expressed in the basis entries of that group.
    Column order is deterministic: either canonical entry order
    (selection rules) or sorted by leading entry after eigendecomposing
    the projector.
    """
    out = []
    selection = _is_selection_only(action)
    for lam, sl in basis.eigenvalue_groups():
        entries = basis.entries[sl]
        m = len(entries)
        if selection:
            keep = []
            for j, e in enumerate(entries):
                if isinstance(action, TrivialAction):
                    keep.append(j)
                elif isinstance(action, SphereAction):
                    if (not action.antipodal or e.l % 2 == 0) and (
                        not action.axisrot or e.m == 0
                    ):
                        keep.append(j)
                else:
                    if _torus_pair_selected(action, e.k):
                        keep.append(j)
            C = np.zeros((m, len(keep)))
            for col, j in enumerate(keep):
                C[j, col] = 1.0
        else:
            proj = invariant_projector(action, lam, basis)
            if proj.rank == 0:
                C = np.zeros((m, 0))
            else:
                evals, evecs = np.linalg.eigh(proj.matrix)
                cols = [evecs[:, j] for j in range(m) if evals[j] > 0.5]
                if len(cols) != proj.rank:
                    raise NumericalError(
                        f"eigendecomposition rank mismatch at lambda={lam}"
                    )
                fixed = []
                for v in cols:
                    lead = int(np.argmax(np.abs(v) > 1e-9))
                    if v[lead] < 0:
                        v = -v
                    fixed.append((lead, tuple(np.round(v, 12)), v))
                fixed.sort(key=lambda item: (item[0], item[1]))
                C = np.stack([v for _, _, v in fixed], axis=1)
        if C.shape[1]:
            out.append((lam, sl, C))
    return out


# ---------------------------------------------------------------------------
# counting


def count_invariant(
    action: GroupAction, lam: float, entry_cap: int = 10_000_000
) -> tuple:
    """(N(lambda; G), the dimension-counting leading-term prediction).

    The count is exact; the prediction is NaN when no closed-form
    quotient data exists for the action.
    """
    if lam < 0:
        raise ConfigurationError("lambda must be nonnegative")
    if weyl_prediction(action.manifold, lam) > 4 * entry_cap:
        raise ResourceLimitError(
            f"counting at lambda={lam} exceeds the entry cap {entry_cap}"
        )
    if isinstance(action, TrivialAction):
        return weyl_count(action.manifold, lam, entry_cap)
    if isinstance(action, TorusAction):
        d = action.manifold.dim
        total = 0.0
        for e in action.finite:
            A = np.array(e.matrix, dtype=np.int64)
            rows = [A.T - np.eye(d, dtype=np.int64)]
            if action.subtorus is not None:
                rows.append(action.subtorus.T)
            B = integer_kernel(np.vstack(rows))
            w = B.T.astype(float) @ np.array([float(c) for c in e.shift])
            total += lattice_phase_sum(B, w, lam).real
        value = total / len(action.finite)
        count = int(round(value))
        if abs(value - count) > 1e-6 * max(1.0, abs(value)):
            raise NumericalError(f"invariant count {value} did not round cleanly")
    elif isinstance(action, SphereAction):
        lmax = _sphere_lmax(lam)
        count = 0
        for l in range(0, lmax + 1):
            if action.antipodal and l % 2 == 1:
                continue
            count += 1 if action.axisrot else 2 * l + 1
    else:
        raise ConfigurationError(f"unsupported action {type(action).__name__}")
    try:
        q = quotient_invariants(action)
        prediction = (
            unit_ball_volume(q.d_eff)
            / TWO_PI**q.d_eff
            * q.quotient_volume
            * lam ** (q.d_eff / 2.0)
        )
    except UnknownQuotientError:
        prediction = math.nan
    return count, prediction


# ---------------------------------------------------------------------------
# quotient data


def _effective_sample_factor(manifold: Manifold, d_eff: int, quotient_volume: float) -> float:
    D = manifold.dim
    num = unit_ball_volume(D) / TWO_PI**D
    den = unit_ball_volume(d_eff) / TWO_PI**d_eff
    return (num / den) * (manifold.volume / quotient_volume)


def quotient_invariants(action: GroupAction) -> QuotientInvariants:
    """Closed-form (d_eff, vol(M/G), effective-sample factor) for the
    built-in actions; raises UnknownQuotientError otherwise."""
    M = action.manifold
    if isinstance(action, TrivialAction):
        return QuotientInvariants(M.dim, M.volume, 1.0)
    if isinstance(action, SphereAction):
        if action.axisrot:
            vol = math.pi / 2.0 if action.antipodal else math.pi
            return QuotientInvariants(1, vol, _effective_sample_factor(M, 1, vol))
        if action.antipodal:
            return QuotientInvariants(2, 2.0 * math.pi, 2.0)
        return QuotientInvariants(2, M.volume, 1.0)
    if isinstance(action, TorusAction):
        d = M.dim
        if action.subtorus is None:
            n = len(action.finite)
            return QuotientInvariants(d, M.volume / n, float(n))
        if not action.translation_only:
            raise UnknownQuotientError(
                "no closed-form quotient for a subtorus mixed with "
                "non-translation elements; counting still works"
            )
        S = action.subtorus
        r = S.shape[1]
        covol = math.sqrt(float(np.linalg.det((S.T @ S).astype(float)))) if r else 1.0
        n_eff = _finite_cosets_mod_subtorus(action)
        vol = TWO_PI ** (d - r) / covol / n_eff
        d_eff = d - r
        return QuotientInvariants(d_eff, vol, _effective_sample_factor(M, d_eff, vol))
    raise ConfigurationError(f"unsupported action {type(action).__name__}")


def _finite_cosets_mod_subtorus(action: TorusAction) -> int:
    """Number of distinct finite-shift cosets modulo the subtorus subgroup."""
    U = integer_kernel(action.subtorus.T)  # annihilator lattice of the subtorus
    residues = set()
    for e in action.finite:
        res = tuple(
            sum(Fraction(int(U[i, j])) * e.shift[i] for i in range(U.shape[0])) % 1
            for j in range(U.shape[1])
        )
        residues.add(res)
    return len(residues)
