"""Stability certificate of the designed linear error dynamics.

The controller shapes the deviation vector ``dy`` to follow the linear
system ``dy' = A dy + B v`` with ``v = -K dy``. With ``V = |dy|^2 / 2`` the
derivative is ``dy^T (A - BK) dy``; it is negative definite exactly when
``Psi = Phi + Phi^T`` (``Phi = A - BK``) has only negative eigenvalues.
This module builds ``A``, ``B``, ``K``, checks controllability and the
eigenvalues, and monitors ``V`` along simulated trajectories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from exgov.controller import GainBlocks, SurrogateConstants
from exgov.errors import EmptySystemError, ShapeMismatchError
from exgov.numerics import matrix_rank, sym_eigh
from exgov.plant import Kind

BLOCK_SIZE = {Kind.HTG: 4, Kind.CG: 4, Kind.RG: 5}
INPUT_ROWS = {Kind.HTG: (1, 3), Kind.CG: (1, 3), Kind.RG: (1, 3, 4)}


@dataclass(frozen=True)
class SurrogateSystem:
    A: np.ndarray
    B: np.ndarray
    kinds: tuple[Kind, ...]
    state_slices: tuple[slice, ...]
    input_slices: tuple[slice, ...]

    @property
    def order(self) -> int:
        return self.A.shape[0]


@dataclass
class GasCertificate:
    phi: np.ndarray
    psi: np.ndarray
    eigenvalues: np.ndarray
    controllability_rank: int
    order: int

    @property
    def margin(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def certified(self) -> bool:
        return self.controllability_rank == self.order and self.margin < 0.0

    def summary(self) -> dict:
        return {
            "order": self.order,
            "controllability_rank": self.controllability_rank,
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "margin": self.margin,
            "certified": self.certified,
        }

    def to_text(self) -> str:
        return json.dumps(self.summary(), indent=2)


def _blocks(kind: Kind, a: SurrogateConstants):
    m = BLOCK_SIZE[kind]
    A = np.zeros((m, m))
    A[0, 0], A[0, 1] = a.a1, a.a2
    A[2, 2], A[2, 3] = a.a3, a.a4
    rows = INPUT_ROWS[kind]
    B = np.zeros((m, len(rows)))
    for col, row in enumerate(rows):
        B[row, col] = 1.0
    return A, B


def build_surrogate(kinds: Sequence, constants: Sequence[SurrogateConstants] | SurrogateConstants | None = None
                    ) -> SurrogateSystem:
    kinds = tuple(Kind(k) for k in kinds)
    if not kinds:
        raise EmptySystemError("surrogate system needs at least one machine")
    if any(k is Kind.INF for k in kinds):
        raise ValueError("uncontrolled machines have no surrogate block")
    if constants is None:
        constants = SurrogateConstants()
    if isinstance(constants, SurrogateConstants):
        constants = [constants] * len(kinds)
    if len(constants) != len(kinds):
        raise ShapeMismatchError("one set of constants per machine is required")
    ns = sum(BLOCK_SIZE[k] for k in kinds)
    ni = sum(len(INPUT_ROWS[k]) for k in kinds)
    A = np.zeros((ns, ns))
    B = np.zeros((ns, ni))
    ss, isl = [], []
    r = c = 0
    for kind, a in zip(kinds, constants):
        Ab, Bb = _blocks(kind, a)
        m, q = Bb.shape
        A[r:r + m, r:r + m] = Ab
        B[r:r + m, c:c + q] = Bb
        ss.append(slice(r, r + m))
        isl.append(slice(c, c + q))
        r += m
        c += q
    return SurrogateSystem(A, B, kinds, tuple(ss), tuple(isl))


def controllability_matrix(sys: SurrogateSystem) -> np.ndarray:
    cols = [sys.B]
    for _ in range(sys.order - 1):
        cols.append(sys.A @ cols[-1])
    return np.hstack(cols)


def controllability_rank(sys: SurrogateSystem, tol: float = 1e-8) -> int:
    """Rank of ``[B, AB, ..., A^(N-1) B]`` after scaling columns to unit max-norm."""
    C = controllability_matrix(sys)
    scale = np.max(np.abs(C), axis=0)
    scale[scale == 0.0] = 1.0
    return matrix_rank(C / scale, tol)


def gain_matrix(kinds: Sequence, gains: Sequence[GainBlocks] | GainBlocks | None = None) -> np.ndarray:
    kinds = tuple(Kind(k) for k in kinds)
    if gains is None:
        gains = GainBlocks()
    if isinstance(gains, GainBlocks):
        gains = [gains] * len(kinds)
    if len(gains) != len(kinds):
        raise ShapeMismatchError("one gain block per machine is required")
    ns = sum(BLOCK_SIZE[k] for k in kinds)
    ni = sum(len(INPUT_ROWS[k]) for k in kinds)
    K = np.zeros((ni, ns))
    r = c = 0
    for kind, g in zip(kinds, gains):
        K[c, r], K[c, r + 1] = g.k1, g.k2
        K[c + 1, r + 2], K[c + 1, r + 3] = g.k3, g.k4
        if kind is Kind.RG:
            K[c + 2, r + 4] = g.k5
        r += BLOCK_SIZE[kind]
        c += len(INPUT_ROWS[kind])
    return K


def gas_certificate(sys: SurrogateSystem, gains=None, rank_tol: float = 1e-8) -> GasCertificate:
    K = gain_matrix(sys.kinds, gains)
    if K.shape != (sys.B.shape[1], sys.order):
        raise ShapeMismatchError("gain matrix does not fit the surrogate system")
    phi = sys.A - sys.B @ K
    psi = phi + phi.T
    w, _ = sym_eigh(psi)
    return GasCertificate(phi=phi, psi=psi, eigenvalues=w,
                          controllability_rank=controllability_rank(sys, rank_tol),
                          order=sys.order)


def lyapunov_value(feedback) -> float:
    """Half the squared norm of the stacked feedback vectors."""
    if isinstance(feedback, np.ndarray) and feedback.ndim == 1:
        y = feedback
    else:
        parts = [np.ravel(np.asarray(f, dtype=float)) for f in feedback]
        y = np.concatenate(parts) if parts else np.zeros(0)
    return 0.5 * float(y @ y)


@dataclass(frozen=True)
class LyapunovSample:
    t: float
    V: float
    Vdot: float
    saturated: bool
    violation: bool


@dataclass
class LyapunovReport:
    samples: list[LyapunovSample]
    noise_floor: float
    after: float | None

    def window(self):
        if self.after is None:
            return self.samples
        return [s for s in self.samples if s.t > self.after]

    @property
    def violations(self) -> list[LyapunovSample]:
        return [s for s in self.window() if s.violation]

    @property
    def unsaturated_violations(self) -> list[LyapunovSample]:
        return [s for s in self.violations if not s.saturated]

    @property
    def decreasing_fraction(self) -> float:
        """Share of post-event, unsaturated samples with ``Vdot`` under the floor."""
        pool = [s for s in self.window() if not s.saturated]
        if not pool:
            return 1.0
        return sum(1 for s in pool if not s.violation) / len(pool)

    def summary(self) -> dict:
        win = self.window()
        return {
            "samples": len(win),
            "noise_floor": self.noise_floor,
            "violations": len(self.violations),
            "unsaturated_violations": len(self.unsaturated_violations),
            "saturated_samples": sum(1 for s in win if s.saturated),
            "decreasing_fraction": self.decreasing_fraction,
        }


def vdot_series(traj, noise_floor: float = 1e-9, after: float | None = None) -> LyapunovReport:
    """``V`` per sample and its centered-difference rate.

    A sample violates the decrease condition when ``Vdot > noise_floor``.
    ``after`` restricts the summary to samples later than that time (the
    first event, typically). The end points use one-sided differences.
    """
    t = np.asarray(traj.t)
    V = np.asarray(traj.V)
    if t.size < 3:
        raise ValueError("need at least three samples")
    Vdot = np.gradient(V, t)
    sat = np.asarray(traj.saturated, dtype=bool)
    samples = [
        LyapunovSample(float(t[k]), float(V[k]), float(Vdot[k]), bool(sat[k]),
                       bool(Vdot[k] > noise_floor))
        for k in range(t.size)
    ]
    return LyapunovReport(samples, noise_floor, after)


def surrogate_vdot(cert: GasCertificate, y: np.ndarray) -> np.ndarray:
    """``dy^T Phi dy`` per row of ``y``, the rate the surrogate predicts."""
    y = np.atleast_2d(y)
    return np.einsum("ki,ij,kj->k", y, cert.phi, y)


def anomalies(traj, y_tol: float = 1e-6, x_tol: float = 1e-3) -> list[float]:
    """Times where the state is far from its final value but ``dy`` is ~0."""
    x = np.asarray(traj.x)
    dx = np.linalg.norm(x - x[-1], axis=1)
    dy = np.linalg.norm(np.asarray(traj.y), axis=1)
    return [float(traj.t[k]) for k in np.flatnonzero((dx > x_tol) & (dy < y_tol))]
