"""Two-level states as Bloch vectors.

A state of kind ``QUBIT`` is a point of the unit ball in R^3, a ``REBIT`` a
point of the unit disk (components <sigma_x>, <sigma_y>), and a ``COIN`` a
point of [-1, 1] holding z = 2p - 1 for a coin with heads probability p.  A
coin is a qubit that is diagonal in a fixed basis, so every formula below
applies to all three kinds unchanged.

All entropies are in nats.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import KindMismatch, UnphysicalArgument

#: Numerical slack on the Bloch-ball boundary.
EPS_PHYS = 1e-12


class StateKind(enum.Enum):
    COIN = "coin"
    REBIT = "rebit"
    QUBIT = "qubit"

    @property
    def dim(self) -> int:
        return {"coin": 1, "rebit": 2, "qubit": 3}[self.value]


@dataclass(frozen=True)
class BlochState:
    kind: StateKind
    r: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in np.ravel(self.r))
        if len(r) != self.kind.dim:
            raise ValueError(f"{self.kind.value} state needs {self.kind.dim} components, got {len(r)}")
        norm = math.sqrt(sum(x * x for x in r))
        if norm > 1 + EPS_PHYS:
            raise UnphysicalArgument(f"|r| = {norm!r} > 1; use UnphysicalPoint")
        if norm > 1:
            r = tuple(x / norm for x in r)
        object.__setattr__(self, "r", r)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.r)

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.r))

    @property
    def eigenvalues(self) -> tuple:
        a = self.radius
        return ((1 + a) / 2, (1 - a) / 2)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "r": list(self.r)}

    @classmethod
    def from_dict(cls, d: dict) -> "BlochState":
        return cls(StateKind(d["kind"]), tuple(d["r"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BlochState":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class UnphysicalPoint:
    """A Bloch vector outside the unit ball (linear-inversion output only)."""

    kind: StateKind
    r: tuple

    def __post_init__(self):
        object.__setattr__(self, "r", tuple(float(x) for x in np.ravel(self.r)))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.r)

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.r))


def make_state(kind: StateKind, r) -> BlochState | UnphysicalPoint:
    """Wrap ``r`` as a BlochState, or as an UnphysicalPoint if it lies outside."""
    if np.linalg.norm(r) > 1 + EPS_PHYS:
        return UnphysicalPoint(kind, tuple(np.ravel(r)))
    return BlochState(kind, tuple(np.ravel(r)))


def clamp_to_ball(r: np.ndarray) -> np.ndarray:
    """Rescale rows with 1 < |r| <= 1 + EPS_PHYS onto the sphere; reject beyond."""
    r = np.array(r, dtype=float)
    norm = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(norm > 1 + EPS_PHYS):
        raise UnphysicalArgument(f"Bloch vector with |r| = {norm.max()!r} > 1")
    return np.where(norm > 1, r / np.where(norm > 0, norm, 1), r)


def neg_entropy(a) -> np.ndarray:
    """Sum of lambda*log(lambda) over the spectrum ((1+a)/2, (1-a)/2)."""
    a = np.asarray(a, dtype=float)
    lp = (1 + a) / 2
    lm = (1 - a) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = np.where(lp > 0, lp * np.log(np.where(lp > 0, lp, 1)), 0.0)
        tm = np.where(lm > 0, lm * np.log(np.where(lm > 0, lm, 1)), 0.0)
    return tp + tm


def log_features(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split Tr[rho log sigma] = c + r.v for estimates ``s`` of shape (..., dim).

    With b = |s|: c = log((1 - b^2)/4)/2 and v = s * atanh(b)/b.  Rows with
    b = 1 (rank-deficient sigma) get c = -inf and v = nan; callers must treat
    them separately.
    """
    s = np.asarray(s, dtype=float)
    d = 1 - np.sum(s * s, axis=-1)
    pure = d <= 0
    d = np.where(pure, 0.75, d)
    bs = np.sqrt(1 - d)
    c = 0.5 * np.log(d / 4)
    # atanh(b) = log(1 + b) - log(1 - b^2)/2, sharing d with c so that the
    # large terms cancel consistently near the sphere
    small = bs < 1e-6
    ratio = np.where(small, 1 + bs * bs / 3, (np.log1p(bs) - 0.5 * np.log(d)) / np.where(small, 1, bs))
    v = s * ratio[..., None]
    c = np.where(pure, -np.inf, c)
    v = np.where(pure[..., None], np.nan, v)
    return c, v


def relative_entropy_array(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Broadcasting D(rho||sigma) for Bloch-vector arrays ``r`` and ``s``.

    Both arguments must already be physical.  Returns +inf where sigma is
    rank deficient and rho is not the same pure state.
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    a = np.linalg.norm(r, axis=-1)
    b = np.linalg.norm(s, axis=-1)
    c, v = log_features(s)
    with np.errstate(invalid="ignore"):
        d = neg_entropy(a) - c - np.sum(r * np.nan_to_num(v), axis=-1)
    pure = b >= 1
    if np.any(pure):
        # sigma = |psi><psi|: D finite only when rho is that same pure state
        same = np.all(np.abs(r - s) <= 1e-15, axis=-1) & pure
        d = np.where(pure, np.where(same, 0.0, np.inf), d)
    return np.maximum(d, 0.0)


def _check_pair(rho, sigma):
    if rho.kind is not sigma.kind:
        raise KindMismatch(f"{rho.kind.value} vs {sigma.kind.value}")
    if isinstance(sigma, UnphysicalPoint) or isinstance(rho, UnphysicalPoint):
        raise UnphysicalArgument("relative entropy needs physical states")


def relative_entropy(rho: BlochState, sigma: BlochState) -> float:
    """Quantum relative entropy D(rho||sigma) in nats (may be +inf)."""
    _check_pair(rho, sigma)
    return float(relative_entropy_array(rho.vector, sigma.vector))


def determinant(rho: BlochState) -> float:
    r = rho.vector
    return float((1 - r @ r) / 4)


def sample_hs_uniform(kind: StateKind, count: int, seed) -> list[BlochState]:
    """Hilbert-Schmidt uniform states: uniform on the unit ball/disk/interval."""
    r = sample_ball(kind.dim, count, np.random.default_rng(seed))
    return [BlochState(kind, tuple(row)) for row in r]


def sample_ball(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be >= 1")
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.random(count) ** (1.0 / dim)
    return g * radius[:, None]


def density_matrix(rho: BlochState) -> np.ndarray:
    """The 2x2 density matrix (coins are taken diagonal in the Z basis)."""
    r = np.zeros(3)
    if rho.kind is StateKind.COIN:
        r[2] = rho.r[0]
    else:
        r[: rho.kind.dim] = rho.r
    paulis = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])
    return (np.eye(2) + np.tensordot(r, paulis, axes=1)) / 2
