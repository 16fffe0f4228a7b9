"""Measurement designs, dataset enumeration and exact likelihoods.

A design is a list of measurement groups.  Group ``g`` records ``shots[g]``
two-outcome measurements whose "+1" outcome has probability

    q_g(r) = (1 + axes[g] . r) / 2.

For Pauli tomography the axes are unit Bloch vectors.  A noisy coin with
per-trial error probability alpha is the one-dimensional case with
axis 1 - 2*alpha.  A dataset is the tuple of "+1" counts, one per group.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import CapExceeded, DesignMismatch, UnphysicalArgument
from .qstate import EPS_PHYS, BlochState, StateKind

DEFAULT_CAP = 2**24

AXIS_X = (1.0, 0.0, 0.0)
AXIS_Y = (0.0, 1.0, 0.0)
AXIS_Z = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class ExperimentDesign:
    kind: StateKind
    axes: tuple
    shots: tuple

    def __post_init__(self):
        axes = tuple(tuple(float(c) for c in a) for a in self.axes)
        shots = tuple(int(m) for m in self.shots)
        if len(axes) != len(shots) or not axes:
            raise ValueError("need one shot count per axis")
        if any(len(a) != self.kind.dim for a in axes):
            raise ValueError(f"axes must have {self.kind.dim} components")
        if any(m < 1 for m in shots):
            raise ValueError("shot counts must be positive")
        norms = [math.sqrt(sum(c * c for c in a)) for a in axes]
        if self.kind is StateKind.COIN:
            if any(not 0 <= n <= 1 + EPS_PHYS for n in norms):
                raise ValueError("coin axes are 1 - 2*alpha and must lie in [-1, 1]")
        elif any(abs(n - 1) > 1e-12 for n in norms):
            raise ValueError("measurement axes must be unit vectors")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "shots", shots)

    @classmethod
    def pauli(cls, kind: StateKind, shots_per_basis: int) -> "ExperimentDesign":
        """The default design: X, Y (rebit) or X, Y, Z (qubit), M shots each."""
        if kind is StateKind.REBIT:
            axes = ((1.0, 0.0), (0.0, 1.0))
        elif kind is StateKind.QUBIT:
            axes = (AXIS_X, AXIS_Y, AXIS_Z)
        else:
            raise ValueError("Pauli designs exist for rebits and qubits only")
        return cls(kind, axes, (shots_per_basis,) * len(axes))

    @classmethod
    def from_total(cls, kind: StateKind, n_total: int) -> "ExperimentDesign":
        nb = 2 if kind is StateKind.REBIT else 3
        if n_total < nb or n_total % nb:
            raise ValueError(f"N = {n_total} is not a positive multiple of {nb}")
        return cls.pauli(kind, n_total // nb)

    @property
    def axes_array(self) -> np.ndarray:
        return np.array(self.axes)

    @property
    def N(self) -> int:
        return sum(self.shots)

    @property
    def M(self) -> int:
        if len(set(self.shots)) != 1:
            raise ValueError("design has unequal shot allocation")
        return self.shots[0]

    @property
    def shape(self) -> tuple:
        return tuple(m + 1 for m in self.shots)

    @property
    def n_datasets(self) -> int:
        return math.prod(self.shape)

    def check_dataset(self, dataset) -> tuple:
        counts = tuple(int(n) for n in dataset)
        if len(counts) != len(self.shots):
            raise DesignMismatch(f"dataset has {len(counts)} counts, design has {len(self.shots)} groups")
        if any(not 0 <= n <= m for n, m in zip(counts, self.shots)):
            raise DesignMismatch(f"counts {counts} out of range for shots {self.shots}")
        return counts

    def index(self, dataset) -> int:
        return int(np.ravel_multi_index(self.check_dataset(dataset), self.shape))

    def dataset_at(self, index: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(index, self.shape))

    def counts_array(self) -> np.ndarray:
        """All datasets in lexicographic order, shape (n_datasets, groups)."""
        grids = np.meshgrid(*[np.arange(s) for s in self.shape], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "axes": [list(a) for a in self.axes]}
        if len(set(self.shots)) == 1:
            d["M"] = self.shots[0]
        else:
            d["shots"] = list(self.shots)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentDesign":
        axes = d["axes"]
        shots = d["shots"] if "shots" in d else [d["M"]] * len(axes)
        return cls(StateKind(d["kind"]), axes, shots)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ExperimentDesign":
        return cls.from_dict(json.loads(text))


def _state_vector(design: ExperimentDesign, rho) -> np.ndarray:
    if isinstance(rho, BlochState):
        if rho.kind is not design.kind:
            raise DesignMismatch(f"{rho.kind.value} state for a {design.kind.value} design")
        return rho.vector
    r = np.asarray(rho, dtype=float)
    if np.linalg.norm(r) > 1 + EPS_PHYS:
        raise UnphysicalArgument("likelihoods need a physical state")
    return r


def outcome_probability(design: ExperimentDesign, basis_axis, rho) -> float:
    """Probability q = (1 + axis . r)/2 of the "+1" outcome."""
    if not isinstance(rho, BlochState):
        raise UnphysicalArgument("outcome_probability needs a physical BlochState")
    r = _state_vector(design, rho)
    return float(np.clip((1 + np.dot(basis_axis, r)) / 2, 0.0, 1.0))


def group_log_pmfs(design: ExperimentDesign, states: np.ndarray) -> list[np.ndarray]:
    """Per-group binomial log-pmfs, each of shape (S, shots[g] + 1)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    u = states @ design.axes_array.T
    out = []
    for g, m in enumerate(design.shots):
        k = np.arange(m + 1)
        logc = gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)
        up = np.clip((1 + u[:, g]) / 2, 0.0, 1.0)[:, None]
        dn = np.clip((1 - u[:, g]) / 2, 0.0, 1.0)[:, None]
        out.append(logc + xlogy(k, up) + xlogy(m - k, dn))
    return out


def group_pmfs(design: ExperimentDesign, states: np.ndarray) -> list[np.ndarray]:
    return [np.exp(lp) for lp in group_log_pmfs(design, states)]


def log_likelihood_matrix(design: ExperimentDesign, states: np.ndarray) -> np.ndarray:
    """log Pr(D | r_s) for every state row and every dataset: (S, n_datasets)."""
    logp = group_log_pmfs(design, states)
    total = logp[0]
    for lp in logp[1:]:
        total = (total[:, :, None] + lp[:, None, :]).reshape(total.shape[0], -1)
    return total


def likelihood(design: ExperimentDesign, dataset, rho) -> float:
    """Pr(D | rho) as a product of independent binomials (coefficients included)."""
    counts = design.check_dataset(dataset)
    r = _state_vector(design, rho)
    logp = group_log_pmfs(design, r[None, :])
    return float(math.exp(sum(lp[0, n] for lp, n in zip(logp, counts))))


def enumerate_datasets(design: ExperimentDesign, cap: int = DEFAULT_CAP):
    """Every dataset exactly once, in lexicographic order."""
    required = design.n_datasets
    if required > cap:
        raise CapExceeded(required, cap)
    return itertools.product(*[range(s) for s in design.shape])


def effective_noise(basis_axis, eigenbasis_axis) -> float:
    """Probability that measuring ``basis_axis`` on the |0> eigenstate gives the minority outcome."""
    return float((1 - np.dot(basis_axis, eigenbasis_axis)) / 2)


def resolution(alpha: float) -> float:
    """Per-shot resolution (1 - 2a)^2 / (a (1 - a)); +inf at a in {0, 1}."""
    if alpha <= 0 or alpha >= 1:
        return math.inf
    return (1 - 2 * alpha) ** 2 / (alpha * (1 - alpha))


def mean_resolution(design: ExperimentDesign, eigenbasis_axis) -> float:
    """Average resolution over all N shots when rho is diagonal along ``eigenbasis_axis``."""
    total = 0.0
    for axis, m in zip(design.axes, design.shots):
        beta = resolution(effective_noise(axis, eigenbasis_axis))
        if math.isinf(beta):
            return math.inf
        total += m * beta
    return total / design.N
