"""Multi-qubit Pauli strings and weighted sums of them.

Conventions
-----------
A string over ``n`` sites is stored as two integer bit masks ``x`` and ``z``
(bit ``j`` is site ``j``) plus a phase exponent ``p`` so that the operator is
``i**p * P_0 ⊗ P_1 ⊗ ...`` with the single-site operator picked from the
bit pair ``(x_j, z_j)``::

    (0, 0) -> I    (1, 0) -> X    (1, 1) -> Y    (0, 1) -> Z

Because ``Y = i X Z``, the dense action on a computational basis state is

    P |b> = i**(p + |x & z|) * (-1)**|b & z| * |b ^ x>

where ``b`` is the basis index with site ``j`` stored in bit ``j`` (site 0 is
the least significant bit) and bit value 0 means spin up (Z = +1).  Every
dense matrix in the package follows this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np
import scipy.sparse as sp

__all__ = [
    "PauliString",
    "PauliSum",
    "multiply",
    "commutator",
    "commutes",
    "nested_commutator_pool",
    "translation_patterns",
    "pattern_names",
    "PRUNE_TOL",
    "MAX_SITES",
]

PRUNE_TOL = 1e-14
MAX_SITES = 64

_LETTERS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_BITS = {v: k for k, v in _LETTERS.items()}
_PHASES = (1, 1j, -1, -1j)


def _popcount(v: int) -> int:
    return bin(v).count("1")


def _check_sites(n: int) -> None:
    if not 1 <= n <= MAX_SITES:
        raise ValueError(f"n_sites must be in [1, {MAX_SITES}], got {n}")


@dataclass(frozen=True, order=True)
class PauliString:
    """A Pauli string ``i**phase * ⊗_j P_j`` in symplectic form."""

    n_sites: int
    x: int
    z: int
    phase: int = 0

    def __post_init__(self):
        _check_sites(self.n_sites)
        full = (1 << self.n_sites) - 1
        if self.x & ~full or self.z & ~full:
            raise ValueError("bit masks exceed n_sites")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def from_label(cls, label: str, phase: int = 0) -> "PauliString":
        """Build from a label such as ``"XIZY"``; character ``j`` is site ``j``."""
        x = z = 0
        for j, ch in enumerate(label.upper()):
            try:
                xb, zb = _BITS[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {ch!r} in {label!r}") from None
            x |= xb << j
            z |= zb << j
        return cls(len(label), x, z, phase)

    @classmethod
    def from_sites(cls, n_sites: int, ops: Mapping[int, str]) -> "PauliString":
        """Build from a sparse ``{site: letter}`` mapping."""
        x = z = 0
        for site, ch in ops.items():
            if not 0 <= site < n_sites:
                raise ValueError(f"site {site} out of range for {n_sites} sites")
            xb, zb = _BITS[ch.upper()]
            x |= xb << site
            z |= zb << site
        return cls(n_sites, x, z)

    @classmethod
    def identity(cls, n_sites: int) -> "PauliString":
        return cls(n_sites, 0, 0)

    def letter(self, site: int) -> str:
        return _LETTERS[((self.x >> site) & 1, (self.z >> site) & 1)]

    @property
    def label(self) -> str:
        return "".join(self.letter(j) for j in range(self.n_sites))

    @property
    def support(self) -> int:
        """Bit mask of sites carrying a non-identity Pauli."""
        return self.x | self.z

    @property
    def weight(self) -> int:
        return _popcount(self.support)

    @property
    def unsigned(self) -> "PauliString":
        """The same string with phase 0."""
        return PauliString(self.n_sites, self.x, self.z)

    @property
    def coefficient(self) -> complex:
        return _PHASES[self.phase]

    def is_hermitian(self) -> bool:
        return self.phase % 2 == 0

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)

    def __repr__(self) -> str:
        prefix = ("", "i*", "-", "-i*")[self.phase]
        return f"PauliString({prefix}{self.label})"

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Return ``P @ psi`` for a state vector (or stack of column vectors)."""
        dim = 1 << self.n_sites
        if psi.shape[0] != dim:
            raise ValueError(f"vector dimension {psi.shape[0]} != {dim}")
        idx = np.arange(dim)
        signs = _z_signs(idx, self.z)
        pref = _PHASES[(self.phase + _popcount(self.x & self.z)) % 4]
        src = idx ^ self.x
        if psi.ndim == 1:
            return pref * signs[src] * psi[src]
        return pref * signs[src, None] * psi[src]

    def to_sparse(self) -> sp.csr_matrix:
        dim = 1 << self.n_sites
        cols = np.arange(dim)
        rows = cols ^ self.x
        pref = _PHASES[(self.phase + _popcount(self.x & self.z)) % 4]
        data = pref * _z_signs(cols, self.z).astype(complex)
        return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))

    def to_matrix(self) -> np.ndarray:
        return self.to_sparse().toarray()


def _z_signs(idx: np.ndarray, zmask: int) -> np.ndarray:
    """(-1)**popcount(idx & zmask) for an index array."""
    par = np.zeros(idx.shape, dtype=np.int64)
    m = zmask
    while m:
        low = m & -m
        par ^= (idx & low) != 0
        m ^= low
    return 1 - 2 * par


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Product ``a · b`` with the i-phase accumulated site by site."""
    if a.n_sites != b.n_sites:
        raise ValueError(f"size mismatch: {a.n_sites} vs {b.n_sites}")
    ax, az, bx, bz = a.x, a.z, b.x, b.z
    a_x, a_y, a_z = ax & ~az, ax & az, az & ~ax
    b_x, b_y, b_z = bx & ~bz, bx & bz, bz & ~bx
    # XY = iZ, YZ = iX, ZX = iY and the reversed orders give -i
    plus = (a_x & b_y) | (a_y & b_z) | (a_z & b_x)
    minus = (a_y & b_x) | (a_z & b_y) | (a_x & b_z)
    phase = a.phase + b.phase + _popcount(plus) - _popcount(minus)
    return PauliString(a.n_sites, ax ^ bx, az ^ bz, phase % 4)


def commutes(a: PauliString, b: PauliString) -> bool:
    """True when the two strings commute (symplectic form vanishes)."""
    if a.n_sites != b.n_sites:
        raise ValueError(f"size mismatch: {a.n_sites} vs {b.n_sites}")
    return _popcount((a.x & b.z) ^ (a.z & b.x)) % 2 == 0


class PauliSum:
    """Complex-weighted sum of Pauli strings.

    Terms are keyed by phase-0 strings; any phase of an input string is folded
    into its coefficient.  Coefficients below ``PRUNE_TOL`` in magnitude are
    dropped.  Instances are treated as immutable.
    """

    __slots__ = ("n_sites", "_terms")

    def __init__(self, n_sites: int, terms: Mapping[PauliString, complex] | Iterable = ()):
        _check_sites(n_sites)
        self.n_sites = n_sites
        acc: dict[PauliString, complex] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for s, c in items:
            if s.n_sites != n_sites:
                raise ValueError(f"size mismatch: {s.n_sites} vs {n_sites}")
            key = s.unsigned
            acc[key] = acc.get(key, 0) + complex(c) * s.coefficient
        self._terms = {s: c for s, c in acc.items() if abs(c) >= PRUNE_TOL}

    @classmethod
    def from_string(cls, s: PauliString, coeff: complex = 1.0) -> "PauliSum":
        return cls(s.n_sites, [(s, coeff)])

    @classmethod
    def from_labels(cls, pairs: Iterable[tuple[str, complex]]) -> "PauliSum":
        pairs = list(pairs)
        if not pairs:
            raise ValueError("need at least one term to infer n_sites")
        strings = [(PauliString.from_label(lab), c) for lab, c in pairs]
        return cls(strings[0][0].n_sites, strings)

    @classmethod
    def zero(cls, n_sites: int) -> "PauliSum":
        return cls(n_sites)

    @property
    def terms(self) -> dict[PauliString, complex]:
        return dict(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[tuple[PauliString, complex]]:
        return iter(sorted(self._terms.items(), key=lambda kv: _sort_key(kv[0])))

    def strings(self) -> list[PauliString]:
        return [s for s, _ in self]

    def coeff(self, s: PauliString | str) -> complex:
        if isinstance(s, str):
            s = PauliString.from_label(s)
        return self._terms.get(s.unsigned, 0j) * s.coefficient.conjugate()

    def _check(self, other: "PauliSum") -> None:
        if self.n_sites != other.n_sites:
            raise ValueError(f"size mismatch: {self.n_sites} vs {other.n_sites}")

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        return PauliSum(self.n_sites, list(self._terms.items()) + list(other._terms.items()))

    def __neg__(self) -> "PauliSum":
        return self * -1

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            self._check(other)
            acc: list[tuple[PauliString, complex]] = []
            for sa, ca in self._terms.items():
                for sb, cb in other._terms.items():
                    acc.append((multiply(sa, sb), ca * cb))
            return PauliSum(self.n_sites, acc)
        return PauliSum(self.n_sites, [(s, c * other) for s, c in self._terms.items()])

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.n_sites == other.n_sites and self._terms == other._terms

    def isclose(self, other: "PauliSum", atol: float = 1e-12) -> bool:
        self._check(other)
        diff = self - other
        return all(abs(c) <= atol for c in diff._terms.values())

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= atol for c in self._terms.values())

    def is_anti_hermitian(self, atol: float = 1e-12) -> bool:
        return all(abs(c.real) <= atol for c in self._terms.values())

    def real_part(self) -> "PauliSum":
        return PauliSum(self.n_sites, [(s, c.real) for s, c in self._terms.items()])

    def dagger(self) -> "PauliSum":
        return PauliSum(self.n_sites, [(s, c.conjugate()) for s, c in self._terms.items()])

    def norm1(self) -> float:
        return float(sum(abs(c) for c in self._terms.values()))

    def to_sparse(self) -> sp.csr_matrix:
        dim = 1 << self.n_sites
        if not self._terms:
            return sp.csr_matrix((dim, dim), dtype=complex)
        cols = np.arange(dim)
        rows, data = [], []
        for s, c in self._terms.items():
            pref = c * _PHASES[_popcount(s.x & s.z) % 4]
            rows.append(cols ^ s.x)
            data.append(pref * _z_signs(cols, s.z))
        return sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.tile(cols, len(rows)))),
            shape=(dim, dim),
        )

    def to_matrix(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi, dtype=complex)
        for s, c in self._terms.items():
            out += c * s.apply(psi)
        return out

    def __repr__(self) -> str:
        return f"PauliSum({self.render()})"

    def render(self, precision: int = 6) -> str:
        """Render in translation-sum shorthand, e.g. ``-1.0*ZZ - 0.4*Z - 0.4*X``.

        Strings are grouped into translation patterns (see
        :func:`translation_patterns`); a pattern is written with its common
        coefficient when every translate carries the same weight, otherwise the
        individual labels are listed.
        """
        if not self._terms:
            return "0"
        parts: list[str] = []
        for pattern, members in translation_patterns(self).items():
            coeffs = [c for _, c in members]
            if all(abs(c - coeffs[0]) < 1e-12 for c in coeffs):
                parts.append(_fmt_term(coeffs[0], pattern, precision))
            else:
                parts.extend(_fmt_term(c, s.label, precision) for s, c in members)
        out = parts[0]
        for p in parts[1:]:
            out += " - " + p[1:] if p.startswith("-") else " + " + p
        return out


def _fmt_term(c: complex, name: str, precision: int) -> str:
    if abs(c.imag) < 1e-15:
        num = f"{round(c.real, precision)!r}"
    elif abs(c.real) < 1e-15:
        num = f"{round(c.imag, precision)!r}j"
    else:
        num = f"({round(c.real, precision)!r}{round(c.imag, precision):+}j)"
    return f"{num}*{name}"


def _sort_key(s: PauliString) -> tuple:
    # lowest occupied site first, then the label itself
    low = (s.support & -s.support).bit_length() if s.support else 0
    return (low, s.label)


def _local_pattern(s: PauliString) -> tuple[str, int]:
    """Compact pattern of a string on a ring and the site where it starts.

    The pattern is the shortest cyclic window that covers the support, read
    in increasing site order; ties are broken by the lexicographically
    smallest word so that translates of one string share a pattern.
    """
    n = s.n_sites
    if s.support == 0:
        return "I", 0
    sites = [j for j in range(n) if (s.support >> j) & 1]
    best: tuple[int, str, int] | None = None
    for start in sites:
        span = max((j - start) % n for j in sites) + 1
        word = "".join(s.letter((start + k) % n) for k in range(span))
        cand = (span, word, start)
        if best is None or cand[:2] < best[:2]:
            best = cand
    return best[1], best[2]


def translation_patterns(h: PauliSum) -> dict[str, list[tuple[PauliString, complex]]]:
    """Group the terms of ``h`` by translation pattern (``"YZ"``, ``"ZXZ"``...).

    Patterns are ordered by body count, then by first appearance.
    """
    out: dict[str, list[tuple[PauliString, complex]]] = {}
    for s, c in h:
        pat, _ = _local_pattern(s)
        out.setdefault(pat, []).append((s, c))
    keys = sorted(out, key=lambda p: (len(p) - p.count("I"), list(out).index(p)))
    return {k: out[k] for k in keys}


def commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    """``[a, b] = ab - ba``.

    Only anticommuting string pairs contribute, each with ``2 * ca * cb * (sa sb)``.
    """
    a._check(b)
    acc: list[tuple[PauliString, complex]] = []
    for sa, ca in a._terms.items():
        for sb, cb in b._terms.items():
            if not commutes(sa, sb):
                acc.append((multiply(sa, sb), 2 * ca * cb))
    return PauliSum(a.n_sites, acc)


def nested_commutator_pool(
    h: PauliSum, h1: PauliSum, order: int, max_body: int | None = 2
) -> list[PauliSum]:
    """Odd nested commutators ``[h, [h, ... [h, h1]]]`` (``2k - 1`` applications).

    Returns one sum per ``k = 1 .. order``, each multiplied by ``i`` so the
    entries are Hermitian with real coefficients.  Pool members at order
    ``k`` are read off with :func:`translation_patterns`; the ``max_body``
    filter keeps only strings supported on at most that many sites (the
    default keeps local and two-body terms), ``None`` keeps everything.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if not (h.is_hermitian() and h1.is_hermitian()):
        raise ValueError("nested_commutator_pool needs Hermitian inputs")
    out: list[PauliSum] = []
    cur = h1
    for k in range(1, order + 1):
        for _ in range(2 if k > 1 else 1):
            cur = commutator(h, cur)
        term = cur * 1j
        if max_body is not None:
            term = PauliSum(
                term.n_sites,
                [(s, c) for s, c in term._terms.items() if len(_local_pattern(s)[0]) <= max_body],
            )
        out.append(term)
    return out


def pattern_names(pool: Iterable[PauliSum]) -> list[str]:
    """Distinct translation patterns across a pool, merged over orders."""
    seen: list[str] = []
    for term in pool:
        for pat in translation_patterns(term):
            if pat not in seen:
                seen.append(pat)
    return seen
