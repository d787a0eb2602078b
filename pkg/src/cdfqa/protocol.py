"""Feedback loop of FQA and CD-FQA.

Each layer ``k`` applies ``U_P``, then ``U_1(β_k)``, then ``U_CD(γ_k)`` with

    β_k = (α / N J²) · i⟨ψ_{k-1}| [H_P, H_1]  |ψ_{k-1}⟩
    γ_k = (α / N J²) · i⟨ψ_{k-1}| [H_P, H_CD] |ψ_{k-1}⟩

so that, to first order in Δt, ⟨H_P⟩ never increases.
"""

from __future__ import annotations

import functools
import logging
import math
import threading
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from . import engine
from .engine import EvolutionOp, SparseObservable, Spectrum, StateVector
from .model import (
    OperatorTag,
    SpinChainSpec,
    additional_term,
    build_ising,
    build_operator,
    warn_if_noncommuting_add,
)
from .pauli import PauliSum, commutator

log = logging.getLogger(__name__)

__all__ = [
    "ProtocolSpec",
    "LayerRecord",
    "ProtocolError",
    "Setup",
    "control_fields",
    "run_protocol",
    "run_with_additional_term",
    "trajectory",
    "DESCENT_LIMIT",
]

# alpha * delta_t above which discrete steps stop guaranteeing descent
DESCENT_LIMIT = 0.1


class ProtocolError(RuntimeError):
    """Raised when a run produces non-finite fields or energies."""


@dataclass(frozen=True)
class ProtocolSpec:
    chain: SpinChainSpec
    h1_tag: OperatorTag = field(default_factory=lambda: OperatorTag.parse("X"))
    h_cd_tag: OperatorTag = field(default_factory=lambda: OperatorTag.parse("I"))
    alpha: float = 6.0
    delta_t: float = 0.01
    n_layers: int = 200
    h_add_enabled: bool = False
    evolution_mode: str = "exact"

    def __post_init__(self):
        object.__setattr__(self, "h1_tag", OperatorTag.parse(self.h1_tag))
        object.__setattr__(self, "h_cd_tag", OperatorTag.parse(self.h_cd_tag))
        if self.h1_tag.single not in ("X", "Z"):
            raise ValueError(f"h1_tag must be X or Z, got {self.h1_tag}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.evolution_mode not in ("exact", "trotter1"):
            raise ValueError(f"unknown evolution_mode {self.evolution_mode!r}")

    @property
    def alpha_dt(self) -> float:
        return self.alpha * self.delta_t

    @property
    def plain_fqa(self) -> bool:
        return self.h_cd_tag.is_identity

    def with_(self, **changes) -> "ProtocolSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class LayerRecord:
    layer: int
    beta: float
    gamma: float
    energy: float
    e_p: float
    bin_weights: np.ndarray | None = None


def control_fields(
    state: StateVector,
    h_p: PauliSum,
    h_m: PauliSum,
    alpha: float,
    n_sites: int,
    coupling_j: float = 1.0,
) -> float:
    """``(α / N J²) · i⟨ψ|[H_P, H_m]|ψ⟩`` as a real number."""
    if alpha == 0:
        return 0.0
    val = engine.expectation(state, commutator(h_p, h_m) * 1j)
    if abs(val.imag) > 1e-10:
        raise ProtocolError(f"feedback expectation is not real: {val}")
    return alpha / (n_sites * coupling_j**2) * val.real


# one lock so concurrent curves share decompositions instead of repeating them
_CACHE_LOCK = threading.RLock()


def _locked(fn):
    cached = lru_cache(maxsize=128)(fn)

    @functools.wraps(fn)
    def wrapper(*args):
        with _CACHE_LOCK:
            return cached(*args)

    wrapper.cache_clear = cached.cache_clear
    return wrapper


@_locked
def _spectrum(chain: SpinChainSpec) -> Spectrum:
    return engine.diagonalize(build_ising(chain))


@_locked
def _evolution_op(chain: SpinChainSpec, tag: OperatorTag) -> EvolutionOp:
    return EvolutionOp(build_operator(tag, chain))


@_locked
def _problem_op(chain: SpinChainSpec) -> EvolutionOp:
    h_p = build_ising(chain)
    op = EvolutionOp(h_p)
    # non-commuting H_P reuses the spectrum already needed for e_P
    return op if op.commuting else EvolutionOp(h_p, _spectrum(chain))


class Setup:
    """Operators shared by every flavour of the feedback loop for one spec.

    ``fields_ops`` holds the Hermitian feedback observables ``i[H_P, H_1]`` and
    ``i[H_P, H_CD]`` (the latter ``None`` for plain FQA).
    """

    def __init__(self, spec: ProtocolSpec):
        self.spec = spec
        chain = spec.chain
        self.n_sites = chain.n_sites
        self.h_p = build_ising(chain)
        self.h1 = build_operator(spec.h1_tag, chain)
        self.h_cd = None if spec.plain_fqa else build_operator(spec.h_cd_tag, chain)
        self.c1 = commutator(self.h_p, self.h1) * 1j
        self.c_cd = None if self.h_cd is None else commutator(self.h_p, self.h_cd) * 1j
        self.prefactor = spec.alpha / (chain.n_sites * chain.coupling_j**2)
        self.spectrum = _spectrum(chain)
        self.e0 = self.spectrum.ground_energy
        self._obs_c1 = SparseObservable(self.c1)
        self._obs_cd = None if self.c_cd is None else SparseObservable(self.c_cd)
        self._obs_hp = SparseObservable(self.h_p)
        self._exact = spec.evolution_mode == "exact"
        if self._exact:
            self.u_p = _problem_op(chain)
            self.u_1 = _evolution_op(chain, spec.h1_tag)
            self.u_cd = None if spec.plain_fqa else _evolution_op(chain, spec.h_cd_tag)
        self._add_cache: dict[int, EvolutionOp] = {}
        if spec.h_add_enabled:
            warn_if_noncommuting_add(self.h_p, chain)
        if spec.alpha_dt > DESCENT_LIMIT:
            warnings.warn(
                f"alpha*delta_t = {spec.alpha_dt:g} exceeds {DESCENT_LIMIT}; "
                "energy descent is not guaranteed",
                RuntimeWarning,
                stacklevel=3,
            )

    def energy(self, psi: np.ndarray) -> float:
        return self._obs_hp(psi).real

    def exact_fields(self, psi: np.ndarray) -> tuple[float, float]:
        beta = self._real(self._obs_c1(psi)) * self.prefactor
        gamma = 0.0 if self._obs_cd is None else self._real(self._obs_cd(psi)) * self.prefactor
        return beta, gamma

    @staticmethod
    def _real(v: complex) -> float:
        if abs(v.imag) > 1e-10:
            raise ProtocolError(f"feedback expectation is not real: {v}")
        return v.real

    def problem_generator(self, k: int) -> PauliSum:
        if self.spec.h_add_enabled:
            return self.h_p + additional_term(k, self.spec.chain)
        return self.h_p

    def _problem_exact(self, k: int) -> EvolutionOp:
        if not self.spec.h_add_enabled:
            return self.u_p
        op = self._add_cache.get(k)
        if op is None:
            op = EvolutionOp(self.problem_generator(k))
            self._add_cache = {k: op}
        return op

    def layer(self, psi: np.ndarray, k: int, beta: float, gamma: float) -> np.ndarray:
        """Apply ``U_CD(γ) U_1(β) U_P`` of layer ``k`` to amplitudes ``psi``."""
        dt = self.spec.delta_t
        if self._exact:
            psi = self._problem_exact(k).apply(psi, dt)
            psi = self.u_1.apply(psi, beta * dt)
            if self.u_cd is not None:
                psi = self.u_cd.apply(psi, gamma * dt)
            return psi
        st = StateVector(self.n_sites, psi)
        st = engine.evolve_trotter1(st, self.problem_generator(k), dt)
        st = engine.evolve_trotter1(st, self.h1, beta * dt)
        if self.h_cd is not None:
            st = engine.evolve_trotter1(st, self.h_cd, gamma * dt)
        return st.amplitudes

    def layer_unitary(self, k: int, beta: float, gamma: float) -> np.ndarray:
        """Dense unitary of layer ``k`` (exact exponentials)."""
        dt = self.spec.delta_t
        u = self._problem_exact(k).matrix(dt) if self._exact else EvolutionOp(self.problem_generator(k)).matrix(dt)
        u1 = (self.u_1 if self._exact else EvolutionOp(self.h1)).matrix(beta * dt)
        u = u1 @ u
        if self.h_cd is not None:
            ucd = (self.u_cd if self._exact else EvolutionOp(self.h_cd)).matrix(gamma * dt)
            u = ucd @ u
        return u

    def record(self, k: int, beta: float, gamma: float, energy: float, bins=None) -> LayerRecord:
        vals = (beta, gamma, energy)
        if not all(math.isfinite(v) for v in vals):
            raise ProtocolError(
                f"non-finite value at layer {k}: beta={beta}, gamma={gamma}, energy={energy} "
                f"(alpha={self.spec.alpha}, delta_t={self.spec.delta_t}, h_cd={self.spec.h_cd_tag})"
            )
        e_p = (energy - self.e0) / self.n_sites
        return LayerRecord(k, beta, gamma, energy, e_p, bins)

    def bins(self, psi: np.ndarray, n_bins: int | None) -> np.ndarray | None:
        if not n_bins:
            return None
        width = 2.0 * self.spec.chain.coupling_j
        return engine._bin_weights(psi, self.spectrum, n_bins, width, 1e-9)


FieldEstimator = Callable[[np.ndarray, int], "tuple[float, float]"]


def trajectory(
    spec: ProtocolSpec,
    n_bins: int | None = None,
    estimator: Callable[[Setup], FieldEstimator] | None = None,
    setup: Setup | None = None,
) -> Iterator[tuple[LayerRecord, np.ndarray]]:
    """Yield ``(record, amplitudes)`` for layers ``0..L`` of the feedback loop."""
    setup = setup or Setup(spec)
    fields = estimator(setup) if estimator is not None else (lambda psi, k: setup.exact_fields(psi))
    psi = engine.initial_state(spec.h1_tag, spec.chain.n_sites).amplitudes
    yield setup.record(0, 0.0, 0.0, setup.energy(psi), setup.bins(psi, n_bins)), psi
    for k in range(1, spec.n_layers + 1):
        beta, gamma = fields(psi, k)
        if spec.plain_fqa:
            gamma = 0.0
        psi = setup.layer(psi, k, beta, gamma)
        yield setup.record(k, beta, gamma, setup.energy(psi), setup.bins(psi, n_bins)), psi


def _run(
    spec: ProtocolSpec,
    n_bins: int | None = None,
    estimator: Callable[[Setup], FieldEstimator] | None = None,
    setup: Setup | None = None,
) -> list[LayerRecord]:
    return [rec for rec, _ in trajectory(spec, n_bins, estimator, setup)]


def run_protocol(spec: ProtocolSpec, n_bins: int | None = None) -> list[LayerRecord]:
    """Run the feedback loop; returns ``n_layers + 1`` records starting at ``k = 0``.

    Row ``k = 0`` holds the initial energy with zero fields.  Row ``k`` holds
    the fields used to build layer ``k`` (computed from the state after
    ``k - 1`` layers) and the energy after it.  ``n_bins`` adds the weights
    in energy windows of width ``2J`` above the ground energy.
    """
    return _run(spec, n_bins)


def run_with_additional_term(spec: ProtocolSpec, n_bins: int | None = None) -> list[LayerRecord]:
    """Feedback loop with ``H_P + H_add(k)`` inside the problem unitary of layer ``k``.

    The fields are still computed from commutators with ``H_P`` alone and the
    recorded energies are ``⟨H_P⟩``.
    """
    if not spec.h_add_enabled:
        raise ValueError("run_with_additional_term needs h_add_enabled=True")
    return _run(spec, n_bins)


def trace_array(records: Sequence[LayerRecord], column: str) -> np.ndarray:
    return np.array([getattr(r, column) for r in records], dtype=float)
