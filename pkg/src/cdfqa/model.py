"""Ising chains, control operators and the pool shorthand.

Translation sums use the shorthand ``A = Σ_i σ_i^a`` and
``AB = Σ_i σ_i^a σ_{i+1}^b``; weighted combinations are written
``"Y+0.5*YZ"``.  Sites are numbered ``0 .. N-1``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

from .pauli import PauliString, PauliSum, commutator

log = logging.getLogger(__name__)

__all__ = [
    "SpinChainSpec",
    "OperatorTag",
    "KNOWN_PATTERNS",
    "build_ising",
    "build_operator",
    "translation_sum",
    "additional_term",
    "H_ADD_DECAY",
]

KNOWN_PATTERNS = ("I", "X", "Y", "Z", "ZZ", "YZ", "ZY", "YX", "XY", "XX", "YY", "XZ", "ZX")

# layers over which the additional field decays by 1/e
H_ADD_DECAY = 5.0


@dataclass(frozen=True)
class SpinChainSpec:
    n_sites: int
    coupling_j: float = 1.0
    field_hz: float = 0.0
    field_hx: float = 0.0
    boundary: str = "periodic"

    def __post_init__(self):
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"boundary must be 'periodic' or 'open', got {self.boundary!r}")
        if self.n_sites < 2:
            raise ValueError("need at least 2 sites")
        if self.boundary == "periodic" and self.n_sites < 3:
            # the wrap bond would duplicate the only open bond
            raise ValueError("periodic chains need n_sites >= 3")
        if self.coupling_j <= 0:
            raise ValueError("coupling_j must be positive")

    @property
    def bonds(self) -> list[tuple[int, int]]:
        n = self.n_sites
        if self.boundary == "periodic":
            return [(i, (i + 1) % n) for i in range(n)]
        return [(i, i + 1) for i in range(n - 1)]

    @property
    def variant(self) -> str:
        """LFI, TFI, MFI or ZZ (both fields off)."""
        if self.field_hz and self.field_hx:
            return "MFI"
        if self.field_hz:
            return "LFI"
        if self.field_hx:
            return "TFI"
        return "ZZ"


_TERM = re.compile(r"([+-]?)(?:(\d*\.?\d+(?:[eE][+-]?\d+)?)\*)?([IXYZ]{1,2})")


@dataclass(frozen=True)
class OperatorTag:
    """A pool operator or weighted combination, e.g. ``"YX"`` or ``"Y+0.5*YZ"``."""

    components: tuple[tuple[str, float], ...] = field(default=(("I", 1.0),))

    def __post_init__(self):
        if not self.components:
            raise ValueError("empty operator tag")
        for pat, _ in self.components:
            if pat not in KNOWN_PATTERNS:
                raise ValueError(f"unknown operator tag {pat!r}")

    @classmethod
    def parse(cls, text: "str | OperatorTag") -> "OperatorTag":
        if isinstance(text, OperatorTag):
            return text
        src = text.replace(" ", "")
        comps = []
        pos = 0
        while pos < len(src):
            m = _TERM.match(src, pos)
            if not m or (pos > 0 and not m.group(1)):
                raise ValueError(f"cannot parse operator tag {text!r}")
            sign = -1.0 if m.group(1) == "-" else 1.0
            weight = float(m.group(2)) if m.group(2) else 1.0
            comps.append((m.group(3), sign * weight))
            pos = m.end()
        if not comps:
            raise ValueError("empty operator tag")
        return cls(tuple(comps))

    @property
    def is_identity(self) -> bool:
        return all(p == "I" for p, _ in self.components)

    @property
    def single(self) -> str | None:
        """The pattern name when the tag is one unit-weight pattern."""
        if len(self.components) == 1 and self.components[0][1] == 1.0:
            return self.components[0][0]
        return None

    def __str__(self) -> str:
        out = ""
        for pat, w in self.components:
            term = pat if w == 1.0 else (f"-{pat}" if w == -1.0 else f"{w!r}*{pat}")
            if out and not term.startswith("-"):
                out += "+"
            out += term
        return out


def translation_sum(pattern: str, spec: SpinChainSpec) -> PauliSum:
    """``Σ_i`` of a one- or two-letter pattern, honouring the boundary."""
    n = spec.n_sites
    if pattern == "I":
        return PauliSum.from_string(PauliString.identity(n))
    if len(pattern) == 1:
        return PauliSum(n, [(PauliString.from_sites(n, {i: pattern}), 1.0) for i in range(n)])
    if len(pattern) != 2:
        raise ValueError(f"unsupported pattern {pattern!r}")
    a, b = pattern
    return PauliSum(n, [(PauliString.from_sites(n, {i: a, j: b}), 1.0) for i, j in spec.bonds])


def build_ising(spec: SpinChainSpec) -> PauliSum:
    """``H_P = -J ΣZZ - h_z ΣZ - h_x ΣX``."""
    h = translation_sum("ZZ", spec) * (-spec.coupling_j)
    if spec.field_hz:
        h = h + translation_sum("Z", spec) * (-spec.field_hz)
    if spec.field_hx:
        h = h + translation_sum("X", spec) * (-spec.field_hx)
    return h


def build_operator(tag: "OperatorTag | str", spec: SpinChainSpec) -> PauliSum:
    tag = OperatorTag.parse(tag)
    out = PauliSum.zero(spec.n_sites)
    for pat, w in tag.components:
        out = out + translation_sum(pat, spec) * w
    return out


def additional_term(layer_k: int, spec: SpinChainSpec) -> PauliSum:
    """Decaying longitudinal field ``exp(-(k-1)/5) ΣZ`` for layer ``k``."""
    if layer_k < 1:
        raise ValueError("layer_k must be >= 1")
    return translation_sum("Z", spec) * math.exp(-(layer_k - 1) / H_ADD_DECAY)


def warn_if_noncommuting_add(h_p: PauliSum, spec: SpinChainSpec) -> bool:
    """Log a warning when ΣZ does not commute with ``h_p``; returns True if it commutes."""
    c = commutator(h_p, translation_sum("Z", spec))
    if len(c):
        log.warning(
            "additional ΣZ term does not commute with H_P (%s); "
            "feedback fields still use H_P alone",
            spec.variant,
        )
        return False
    return True
