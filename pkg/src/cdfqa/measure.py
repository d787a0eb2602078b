"""Measurement scheduling and finite-shot feedback.

Grouping
--------
Strings are coloured greedily by full commutation, visiting them by lowest
occupied site and then label.  Afterwards any group whose strings can all be
read off as marginals of strings kept in other groups (same letters on the
smaller support, e.g. ``Y_i`` inside ``Y_i Z_{i+1}``) is dropped.  The number
of remaining groups is the count of parallel measurement settings per layer.

Sampling
--------
Shots are drawn per commuting group from the joint eigenbasis of the group.
Random streams come from numpy's PCG64 seeded with
``SeedSequence(seed, spawn_key=(layer, group_index))``, so every (layer,
group) pair has an independent, schedule-invariant stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .engine import StateVector
from .model import OperatorTag, SpinChainSpec, build_ising, build_operator
from .pauli import PauliString, PauliSum, commutator, commutes
from .protocol import LayerRecord, ProtocolSpec, Setup, _run

__all__ = [
    "MeasurementPlan",
    "ShotEstimate",
    "plan_measurements",
    "layer_observables",
    "parallel_count",
    "sample_expectation",
    "estimate_operator",
    "run_protocol_sampled",
    "recoverable_from",
    "format_plan",
]


def recoverable_from(s: PauliString, t: PauliString) -> bool:
    """True if ``s`` is a proper marginal of ``t``: smaller support, same letters there."""
    if s.support == t.support or s.support & ~t.support:
        return False
    m = s.support
    return (s.x & m) == (t.x & m) and (s.z & m) == (t.z & m)


def _visit_key(s: PauliString) -> tuple:
    low = (s.support & -s.support).bit_length()
    return (low, s.label)


@dataclass(frozen=True)
class MeasurementPlan:
    groups: tuple[tuple[PauliString, ...], ...]
    absorbed: dict[PauliString, PauliString] = field(default_factory=dict)

    @property
    def parallel_count(self) -> int:
        return len(self.groups)

    @property
    def strings(self) -> list[PauliString]:
        return [s for g in self.groups for s in g]

    def group_of(self, s: PauliString) -> int:
        s = s.unsigned
        for gi, g in enumerate(self.groups):
            if s in g:
                return gi
        raise KeyError(s)


def plan_measurements(observables: Sequence[PauliSum], absorb: bool = True) -> MeasurementPlan:
    """Group the distinct strings of ``observables`` into commuting sets.

    With ``absorb=False`` every string stays in a group; that plan is the one
    used for sampling, since an absorbed string need not commute with the
    group holding its host.
    """
    if not observables:
        return MeasurementPlan(())
    n = observables[0].n_sites
    if any(o.n_sites != n for o in observables):
        raise ValueError("observables act on different numbers of sites")
    strings = sorted({s for o in observables for s in o.strings() if s.support}, key=_visit_key)
    groups: list[list[PauliString]] = []
    for s in strings:
        for g in groups:
            if all(commutes(s, t) for t in g):
                g.append(s)
                break
        else:
            groups.append([s])
    absorbed: dict[PauliString, PauliString] = {}
    if absorb:
        changed = True
        while changed:
            changed = False
            # try the smallest groups first, earliest on ties
            for gi in sorted(range(len(groups)), key=lambda i: (len(groups[i]), i)):
                others = [t for j, h in enumerate(groups) if j != gi for t in h]
                hosts = {}
                for s in groups[gi]:
                    host = next((t for t in others if recoverable_from(s, t)), None)
                    if host is None:
                        break
                    hosts[s] = host
                else:
                    absorbed.update(hosts)
                    del groups[gi]
                    changed = True
                    break
        # re-point chains (s -> t -> u) at the final host
        for s, t in list(absorbed.items()):
            while t in absorbed:
                t = absorbed[t]
            absorbed[s] = t
    return MeasurementPlan(tuple(tuple(g) for g in groups), absorbed)


def layer_observables(
    h_cd: "OperatorTag | str", chain: SpinChainSpec, h1: "OperatorTag | str" = "X"
) -> list[PauliSum]:
    """The feedback observables ``i[H_P, H_1]`` and (if any) ``i[H_P, H_CD]``."""
    h_p = build_ising(chain)
    obs = [commutator(h_p, build_operator(h1, chain)) * 1j]
    tag = OperatorTag.parse(h_cd)
    if not tag.is_identity:
        obs.append(commutator(h_p, build_operator(tag, chain)) * 1j)
    return obs


def parallel_count(protocol_tag: "OperatorTag | str", chain: SpinChainSpec, h1: str = "X") -> int:
    return plan_measurements(layer_observables(protocol_tag, chain, h1)).parallel_count


def format_plan(plan: MeasurementPlan) -> str:
    lines = []
    for gi, g in enumerate(plan.groups):
        lines.append(f"  group {gi}: " + " ".join(s.label for s in g))
    if plan.absorbed:
        lines.append("  absorbed: " + " ".join(f"{s.label}<{t.label}" for s, t in plan.absorbed.items()))
    return "\n".join(lines)


class GroupBasis:
    """Joint eigenbasis of a set of commuting strings.

    Diagonalises a generic real combination of the strings; its eigenvectors
    are common eigenvectors, and ``signs[i, b]`` is the ±1 eigenvalue of
    string ``i`` on basis vector ``b``.
    """

    def __init__(self, group: Sequence[PauliString]):
        group = list(group)
        if not group:
            raise ValueError("empty measurement group")
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                if not commutes(a, b):
                    raise ValueError(f"group is not commuting: {a.label} vs {b.label}")
        self.group = group
        n = group[0].n_sites
        mats = [s.to_matrix() for s in group]
        for attempt in range(5):
            weights = np.sqrt(np.arange(2, 2 + len(group)) + 0.37 * attempt) % 1.0 + 0.5
            h = sum(w * m for w, m in zip(weights, mats))
            _, vecs = np.linalg.eigh(h)
            signs = np.array([np.einsum("ib,ij,jb->b", vecs.conj(), m, vecs).real for m in mats])
            if np.allclose(np.abs(signs), 1.0, atol=1e-8):
                break
        else:  # pragma: no cover - would need five accidental degeneracies
            raise RuntimeError("could not build a joint eigenbasis")
        self.n_sites = n
        self.vecs_h = vecs.conj().T
        self.signs = np.rint(signs)

    def probabilities(self, psi: np.ndarray) -> np.ndarray:
        p = np.abs(self.vecs_h @ psi) ** 2
        return p / p.sum()

    def sample(self, psi: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
        """Per-shot outcome counts over the basis vectors."""
        return rng.multinomial(shots, self.probabilities(psi))


def _stream(seed: int, layer: int, group: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(layer, group))))


def sample_expectation(
    state: StateVector,
    group: Iterable[PauliString],
    shots_m: int,
    seed: int,
    layer: int = 0,
    group_index: int = 0,
) -> dict[PauliString, float]:
    """Empirical means of every string in a commuting group from ``shots_m`` shots."""
    if shots_m < 1:
        raise ValueError("shots_m must be >= 1")
    basis = GroupBasis([s.unsigned for s in group])
    counts = basis.sample(state.amplitudes, shots_m, _stream(seed, layer, group_index))
    means = basis.signs @ counts / shots_m
    return dict(zip(basis.group, means.tolist()))


@dataclass(frozen=True)
class ShotEstimate:
    operator: PauliSum
    shots_m: int
    estimate: float
    standard_error: float
    seed: int


class _Sampler:
    """Shot-based estimator of Hermitian observables over a fixed plan."""

    def __init__(self, observables: Sequence[PauliSum], shots_m: int, seed: int):
        self.observables = list(observables)
        if any(not s.support for o in self.observables for s in o.strings()):
            raise ValueError("identity terms are not sampled")
        self.plan = plan_measurements(self.observables, absorb=False)
        self.bases = [GroupBasis(g) for g in self.plan.groups]
        self.shots_m = shots_m
        self.seed = seed
        # coefficient of every string of every observable, laid out per group
        self._coef = [
            [np.array([o.coeff(s).real for s in g]) for g in self.plan.groups] for o in self.observables
        ]

    def estimate(self, psi: np.ndarray, layer: int) -> list[tuple[float, float]]:
        """(estimate, standard error) per observable."""
        out = [[0.0, 0.0] for _ in self.observables]
        for gi, basis in enumerate(self.bases):
            counts = basis.sample(psi, self.shots_m, _stream(self.seed, layer, gi))
            for oi in range(len(self.observables)):
                c = self._coef[oi][gi]
                if not np.any(c):
                    continue
                # per-outcome value of this observable's part in the group
                vals = c @ basis.signs
                mean = vals @ counts / self.shots_m
                var = (vals**2) @ counts / self.shots_m - mean**2
                out[oi][0] += mean
                out[oi][1] += max(var, 0.0) / self.shots_m
        return [(m, float(np.sqrt(v))) for m, v in out]


def estimate_operator(state: StateVector, op: PauliSum, shots_m: int, seed: int) -> ShotEstimate:
    """Finite-shot estimate of a Hermitian ``op`` with its standard error."""
    if not op.is_hermitian():
        raise ValueError("estimate_operator needs a Hermitian operator")
    (est, err), = _Sampler([op.real_part()], shots_m, seed).estimate(state.amplitudes, 0)
    return ShotEstimate(op, shots_m, est, err, seed)


def run_protocol_sampled(
    spec: ProtocolSpec, shots_m: int | None, seed: int, n_bins: int | None = None
) -> list[LayerRecord]:
    """Feedback loop with β_k, γ_k from ``shots_m`` shots per measurement setting.

    ``shots_m=None`` uses exact expectations.  Recorded energies are the exact
    ``⟨H_P⟩`` of the sampled trajectory.
    """
    if shots_m is None:
        return _run(spec, n_bins)
    if shots_m < 1:
        raise ValueError("shots_m must be >= 1")

    def estimator(setup: Setup):
        obs = [setup.c1.real_part()]
        if setup.c_cd is not None:
            obs.append(setup.c_cd.real_part())
        sampler = _Sampler(obs, shots_m, seed)

        def fields(psi, k):
            ests = sampler.estimate(psi, k)
            beta = setup.prefactor * ests[0][0]
            gamma = setup.prefactor * ests[1][0] if len(ests) > 1 else 0.0
            return beta, gamma

        return fields

    return _run(spec, n_bins, estimator=estimator)
