"""Density-matrix feedback loop with per-layer depolarizing noise and ZNE.

The noise model is one global depolarizing channel
``ρ -> (1 - p) ρ + p I / 2^N`` after every layer block ``U_CD U_1 U_P``.
Folding replaces a block ``U`` by ``U (U† U)^n`` with the channel applied
after each physical block, so a fold factor ``f = 2n + 1`` sees the channel
``f`` times per layer.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import initial_state
from .measure import GroupBasis, _stream, plan_measurements
from .pauli import PauliSum
from .protocol import LayerRecord, ProtocolSpec, Setup

__all__ = [
    "MAX_NOISY_SITES",
    "DensityMatrix",
    "NoiseSpec",
    "depolarize",
    "run_noisy",
    "run_zne",
    "fold_and_extrapolate",
    "richardson_extrapolate",
    "extrapolation_weights",
    "TORINO_ERROR",
    "SHERBROOKE_ERROR",
]

MAX_NOISY_SITES = 5
# quoted average gate error per layer of two cloud devices
TORINO_ERROR = 0.008
SHERBROOKE_ERROR = 0.017


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    n_sites: int
    matrix: np.ndarray

    def __post_init__(self):
        if self.n_sites > MAX_NOISY_SITES:
            raise ValueError(f"density matrices are capped at {MAX_NOISY_SITES} sites")
        m = np.asarray(self.matrix, dtype=complex)
        dim = 1 << self.n_sites
        if m.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def pure(cls, amplitudes: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(amplitudes, dtype=complex)
        n = int(np.log2(psi.size))
        return cls(n, np.outer(psi, psi.conj()))

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def expectation(self, op: PauliSum) -> complex:
        return complex(np.sum(op.to_sparse().multiply(self.matrix.T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


@dataclass(frozen=True)
class NoiseSpec:
    per_layer_error: float = 0.0
    fold_factors: tuple[int, ...] = (1, 3)

    def __post_init__(self):
        if not 0.0 <= self.per_layer_error <= 1.0:
            raise ValueError("per_layer_error must lie in [0, 1]")
        f = tuple(int(v) for v in self.fold_factors)
        if any(v < 1 or v % 2 == 0 for v in f):
            raise ValueError("fold factors must be odd positive integers")
        if list(f) != sorted(set(f)):
            raise ValueError("fold factors must be strictly ascending")
        object.__setattr__(self, "fold_factors", f)


def depolarize(rho: np.ndarray, p: float) -> np.ndarray:
    dim = rho.shape[0]
    return (1.0 - p) * rho + p * np.trace(rho) / dim * np.eye(dim)


def _expect(rho: np.ndarray, mat) -> float:
    # tr(rho A) for Hermitian A given as a sparse matrix
    return float(np.real(np.sum(mat.multiply(rho.T))))


def _check(spec: ProtocolSpec) -> None:
    if spec.chain.n_sites > MAX_NOISY_SITES:
        raise ValueError(f"noisy simulation is capped at {MAX_NOISY_SITES} sites")
    if spec.evolution_mode != "exact":
        raise ValueError("noisy simulation uses exact layer unitaries")


class _NoisyState:
    """Feedback observables and layer application on a density matrix."""

    def __init__(self, spec: ProtocolSpec):
        _check(spec)
        self.setup = Setup(spec)
        self.c1 = self.setup.c1.to_sparse()
        self.c_cd = None if self.setup.c_cd is None else self.setup.c_cd.to_sparse()
        self.h_p = self.setup.h_p.to_sparse()

    def rho0(self) -> np.ndarray:
        psi = initial_state(self.setup.spec.h1_tag, self.setup.n_sites).amplitudes
        return np.outer(psi, psi.conj())

    def raw_fields(self, rho: np.ndarray) -> tuple[float, float]:
        b = _expect(rho, self.c1)
        g = 0.0 if self.c_cd is None else _expect(rho, self.c_cd)
        return b, g

    def apply_layer(self, rho, k, beta, gamma, p, fold=1):
        u = self.setup.layer_unitary(k, beta, gamma)
        ud = u.conj().T
        rho = depolarize(u @ rho @ ud, p)
        for _ in range((fold - 1) // 2):
            rho = depolarize(ud @ rho @ u, p)
            rho = depolarize(u @ rho @ ud, p)
        return rho


def run_noisy(
    spec: ProtocolSpec,
    noise: NoiseSpec,
    shots_m: int | None = None,
    seed: int = 0,
) -> list[LayerRecord]:
    """Density-matrix feedback loop with one depolarizing channel per layer.

    ``shots_m`` optionally replaces the exact noisy feedback expectations by
    finite-shot estimates (same grouping and streams as the noiseless sampled
    loop).  Energies are always exact ``tr(ρ H_P)``.
    """
    ns = _NoisyState(spec)
    setup = ns.setup
    sampler = _DensitySampler(setup, shots_m, seed) if shots_m else None
    rho = ns.rho0()
    records = [setup.record(0, 0.0, 0.0, _expect(rho, ns.h_p))]
    for k in range(1, spec.n_layers + 1):
        raw = sampler.fields(rho, k) if sampler else ns.raw_fields(rho)
        beta, gamma = raw[0] * setup.prefactor, raw[1] * setup.prefactor
        rho = ns.apply_layer(rho, k, beta, gamma, noise.per_layer_error)
        records.append(setup.record(k, beta, gamma, _expect(rho, ns.h_p)))
    return records


class _DensitySampler:
    def __init__(self, setup: Setup, shots_m: int, seed: int):
        obs = [setup.c1.real_part()] + ([] if setup.c_cd is None else [setup.c_cd.real_part()])
        plan = plan_measurements(obs, absorb=False)
        self.bases = [GroupBasis(g) for g in plan.groups]
        self.coef = [[np.array([o.coeff(s).real for s in g]) for g in plan.groups] for o in obs]
        self.shots_m = shots_m
        self.seed = seed

    def fields(self, rho: np.ndarray, k: int) -> tuple[float, float]:
        out = [0.0, 0.0]
        for gi, basis in enumerate(self.bases):
            probs = np.real(np.einsum("bi,ij,bj->b", basis.vecs_h, rho, basis.vecs_h.conj()))
            probs = np.clip(probs, 0.0, None)
            counts = _stream(self.seed, k, gi).multinomial(self.shots_m, probs / probs.sum())
            for oi, coefs in enumerate(self.coef):
                out[oi] += (coefs[gi] @ basis.signs) @ counts / self.shots_m
        return out[0], out[1]


def extrapolation_weights(fold_factors: Sequence[int]) -> np.ndarray:
    """Weights ``w`` with ``E(0) = Σ w_i E(f_i)`` for the degree ``len - 1`` polynomial fit."""
    f = np.asarray(fold_factors, dtype=float)
    if f.size < 2:
        raise ValueError("need at least two fold factors")
    # Lagrange basis polynomials evaluated at zero
    w = np.ones_like(f)
    for i in range(f.size):
        for j in range(f.size):
            if i != j:
                w[i] *= f[j] / (f[j] - f[i])
    return w


def richardson_extrapolate(fold_factors: Sequence[int], values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape != (len(fold_factors),):
        raise ValueError("one value per fold factor required")
    return float(extrapolation_weights(fold_factors) @ values)


def run_zne(
    spec: ProtocolSpec, noise: NoiseSpec, observable: PauliSum | None = None
) -> tuple[list[LayerRecord], np.ndarray]:
    """Feedback loop with zero-noise-extrapolated expectations.

    One density matrix per fold factor is carried along the same field
    schedule.  At each layer the feedback expectations and the observable
    (default ``H_P``) are extrapolated to zero noise; the fields for the
    next layer come from the extrapolated values.  Returns the records
    (energy = extrapolated ``⟨H_P⟩``) and the extrapolated observable per
    layer.
    """
    if len(noise.fold_factors) < 2:
        raise ValueError("zero-noise extrapolation needs at least two fold factors")
    ns = _NoisyState(spec)
    setup = ns.setup
    obs = ns.h_p if observable is None else observable.to_sparse()
    w = extrapolation_weights(noise.fold_factors)
    rhos = [ns.rho0() for _ in noise.fold_factors]

    def extrapolate(mat):
        return float(w @ np.array([_expect(r, mat) for r in rhos]))

    records = [setup.record(0, 0.0, 0.0, extrapolate(ns.h_p))]
    values = [extrapolate(obs)]
    with ThreadPoolExecutor(max_workers=len(rhos)) as pool:
        for k in range(1, spec.n_layers + 1):
            beta = extrapolate(ns.c1) * setup.prefactor
            gamma = 0.0 if ns.c_cd is None else extrapolate(ns.c_cd) * setup.prefactor
            # fold copies are independent; numpy releases the GIL in the matmuls
            rhos = list(pool.map(
                lambda rf: ns.apply_layer(rf[0], k, beta, gamma, noise.per_layer_error, rf[1]),
                zip(rhos, noise.fold_factors),
            ))
            # extrapolated energies may dip below E0, so e_p is left unclipped
            records.append(setup.record(k, beta, gamma, extrapolate(ns.h_p)))
            values.append(extrapolate(obs))
    return records, np.array(values)


def fold_and_extrapolate(spec: ProtocolSpec, noise: NoiseSpec, observable: PauliSum) -> float:
    """Zero-noise estimate of ``observable`` after the last layer."""
    _, values = run_zne(spec, noise, observable)
    return float(values[-1])
