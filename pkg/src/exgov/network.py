"""Bus/branch network, Kron reduction and machine-side algebra.

Loads are constant impedances folded into bus shunts. Each generator is an
EMF ``E'_q`` at angle ``delta`` behind its transient reactance ``x'_d``
(saliency neglected, ``x_q = x'_d``). After eliminating every physical bus
the network is a reduced admittance ``G + jB`` between internal EMF nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from exgov import kernels
from exgov.errors import ConnectivityError, ReductionError, SingularMatrixError, UndefinedGradientError
from exgov.numerics import solve_linear

DEFAULT_FAULT_ADMITTANCE = 1e6 + 0j

FAULT = "three-phase-fault"
CLEAR = "clear-fault-and-remove-line"
REMOVE = "remove-line"
RESTORE = "restore"
EVENT_KINDS = (FAULT, CLEAR, REMOVE, RESTORE)


@dataclass(frozen=True)
class Bus:
    id: int
    g: float = 0.0  # shunt conductance, p.u.
    b: float = 0.0  # shunt susceptance, p.u.


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: int
    to_bus: int
    r: float = 0.0
    x: float = 0.1
    in_service: bool = True

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)


@dataclass(frozen=True)
class Attachment:
    machine: int
    bus: int
    xd_prime: float


@dataclass(frozen=True)
class NetworkSpec:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    attachments: tuple[Attachment, ...]
    faults: tuple[int, ...] = ()
    fault_admittance: complex = DEFAULT_FAULT_ADMITTANCE

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bus ids")
        known = set(ids)
        bids = [br.id for br in self.branches]
        if len(set(bids)) != len(bids):
            raise ValueError("duplicate branch ids")
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise ValueError(f"branch {br.id} references an unknown bus")
            if br.from_bus == br.to_bus:
                raise ValueError(f"branch {br.id} is a self-loop")
            if br.r == 0.0 and br.x == 0.0:
                raise ValueError(f"branch {br.id} has zero impedance")
        if not self.attachments:
            raise ValueError("network needs at least one generator attachment")
        machines = sorted(a.machine for a in self.attachments)
        if machines != list(range(len(machines))):
            raise ValueError("attachment machine indices must be 0..n-1")
        for a in self.attachments:
            if a.bus not in known:
                raise ValueError(f"machine {a.machine} attached to unknown bus {a.bus}")
            if not a.xd_prime > 0:
                raise ValueError(f"machine {a.machine} needs x'_d > 0")
        for f in self.faults:
            if f not in known:
                raise ValueError(f"fault at unknown bus {f}")

    @property
    def n_machines(self) -> int:
        return len(self.attachments)

    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    def branch(self, branch_id: str) -> Branch:
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise KeyError(f"unknown branch {branch_id!r}")

    def ordered_attachments(self) -> list[Attachment]:
        return sorted(self.attachments, key=lambda a: a.machine)


@dataclass(frozen=True)
class ReducedNetwork:
    G: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        if self.G.shape != self.B.shape or self.G.shape[0] != self.G.shape[1]:
            raise ValueError("G and B must be square with equal shapes")

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def Y(self) -> np.ndarray:
        return self.G + 1j * self.B


class MachineOutputs(NamedTuple):
    Pe: np.ndarray
    Ut: np.ndarray
    Id: np.ndarray
    Iq: np.ndarray


class OutputGradients(NamedTuple):
    dPe_ddelta: np.ndarray
    dPe_deq: np.ndarray
    dUt_ddelta: np.ndarray
    dUt_deq: np.ndarray


@dataclass(frozen=True)
class NetworkEvent:
    kind: str
    target: int | str
    time: float

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown network event kind {self.kind!r}")
        if not self.time >= 0:
            raise ValueError("event time must be >= 0")


def _check_connected(spec: NetworkSpec) -> None:
    index = spec.bus_index()
    parent = list(range(len(spec.buses)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for br in spec.branches:
        if br.in_service:
            parent[find(index[br.from_bus])] = find(index[br.to_bus])
    roots = {find(index[a.bus]) for a in spec.attachments}
    if len(roots) > 1:
        raise ConnectivityError("generator buses are split across separate islands")


def build_admittance(spec: NetworkSpec) -> np.ndarray:
    """Full complex admittance matrix, physical buses first.

    Internal EMF nodes follow the buses in machine order, each tied to its
    terminal bus through ``1/(j x'_d)``.
    """
    _check_connected(spec)
    index = spec.bus_index()
    nb = len(spec.buses)
    ng = spec.n_machines
    Y = np.zeros((nb + ng, nb + ng), dtype=complex)
    for k, bus in enumerate(spec.buses):
        Y[k, k] += complex(bus.g, bus.b)
    for f in spec.faults:
        Y[index[f], index[f]] += spec.fault_admittance
    for br in spec.branches:
        if not br.in_service:
            continue
        i, j = index[br.from_bus], index[br.to_bus]
        y = br.admittance
        Y[i, i] += y
        Y[j, j] += y
        Y[i, j] -= y
        Y[j, i] -= y
    for a in spec.attachments:
        k = nb + a.machine
        t = index[a.bus]
        y = 1.0 / complex(0.0, a.xd_prime)
        Y[k, k] += y
        Y[t, t] += y
        Y[k, t] -= y
        Y[t, k] -= y
    return Y


def kron_reduce(Y: np.ndarray, keep: Sequence[int]) -> ReducedNetwork:
    """Eliminate every node not in ``keep``: ``Ykk - Yke Yee^-1 Yek``."""
    keep = list(keep)
    elim = [k for k in range(Y.shape[0]) if k not in set(keep)]
    Ykk = Y[np.ix_(keep, keep)]
    if elim:
        Yke = Y[np.ix_(keep, elim)]
        Yek = Y[np.ix_(elim, keep)]
        Yee = Y[np.ix_(elim, elim)]
        try:
            X = solve_linear(Yee, Yek)
        except SingularMatrixError as exc:
            raise ReductionError(
                f"eliminated block is singular at pivot {exc.pivot}; "
                "is there a bus with no connection?"
            ) from exc
        Yred = Ykk - Yke @ X
    else:
        Yred = Ykk.copy()
    return ReducedNetwork(G=np.ascontiguousarray(Yred.real), B=np.ascontiguousarray(Yred.imag))


def reduce_network(spec: NetworkSpec) -> ReducedNetwork:
    nb = len(spec.buses)
    return kron_reduce(build_admittance(spec), range(nb, nb + spec.n_machines))


def xd_prime_vector(spec: NetworkSpec) -> np.ndarray:
    return np.array([a.xd_prime for a in spec.ordered_attachments()])


def machine_outputs(net: ReducedNetwork, delta, eq, xd_prime) -> MachineOutputs:
    """Active power, terminal voltage magnitude and d/q currents per machine."""
    Pe, Ut, Id, Iq, *_ = kernels.network_terms(net.G, net.B, delta, eq, xd_prime, False)
    return MachineOutputs(Pe, Ut, Id, Iq)


def output_gradients(net: ReducedNetwork, delta, eq, xd_prime) -> OutputGradients:
    """Analytic partials of ``P_e`` and ``U_t`` w.r.t. every angle and EMF."""
    _, Ut, _, _, *grads = kernels.network_terms(net.G, net.B, delta, eq, xd_prime, True)
    if np.any(Ut <= 1e-12):
        bad = int(np.flatnonzero(Ut <= 1e-12)[0])
        raise UndefinedGradientError(f"terminal voltage of machine {bad} is zero")
    return OutputGradients(*grads)


def apply_event(spec: NetworkSpec, event: NetworkEvent) -> NetworkSpec:
    """Return the network after ``event``; the input spec is untouched."""
    if event.kind == FAULT:
        bus = int(event.target)
        if bus not in spec.bus_index():
            raise KeyError(f"fault target bus {bus} does not exist")
        new = replace(spec, faults=tuple(sorted(set(spec.faults) | {bus})))
    elif event.kind in (CLEAR, REMOVE):
        target = spec.branch(str(event.target))
        branches = tuple(
            replace(br, in_service=False) if br.id == target.id else br for br in spec.branches
        )
        faults = () if event.kind == CLEAR else spec.faults
        new = replace(spec, branches=branches, faults=faults)
    else:
        if isinstance(event.target, str):
            target = spec.branch(event.target)
            branches = tuple(
                replace(br, in_service=True) if br.id == target.id else br for br in spec.branches
            )
            new = replace(spec, branches=branches)
        else:
            bus = int(event.target)
            if bus not in spec.bus_index():
                raise KeyError(f"restore target bus {bus} does not exist")
            new = replace(spec, faults=tuple(f for f in spec.faults if f != bus))
    _check_connected(new)
    return new
