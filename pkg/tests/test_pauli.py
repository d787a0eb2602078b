import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdfqa.model import SpinChainSpec, build_ising, build_operator
from cdfqa.pauli import (
    PauliString,
    PauliSum,
    commutator,
    commutes,
    multiply,
    nested_commutator_pool,
    pattern_names,
    translation_patterns,
)

from oracle import label_matrix

LABELS2 = ["".join(p) for p in itertools.product("IXYZ", repeat=2)]


def labels(n):
    return st.text(alphabet="IXYZ", min_size=n, max_size=n)


def dense(s: PauliString):
    return (1j ** s.phase) * label_matrix(s.label)


class TestPauliString:
    def test_label_roundtrip(self):
        s = PauliString.from_label("XIZY")
        assert s.label == "XIZY"
        assert s.letter(3) == "Y"
        assert s.weight == 3

    def test_matrix_matches_kron(self):
        for lab in ["X", "YZ", "ZXY", "IYIX"]:
            np.testing.assert_allclose(PauliString.from_label(lab).to_matrix(), label_matrix(lab))

    def test_rejects_bad_letter(self):
        with pytest.raises(ValueError):
            PauliString.from_label("XQ")

    @pytest.mark.parametrize("phase,hermitian", [(0, True), (1, False), (2, True), (3, False)])
    def test_hermiticity_follows_phase(self, phase, hermitian):
        s = PauliString.from_label("XY", phase)
        m = s.to_matrix()
        assert s.is_hermitian() == hermitian
        np.testing.assert_allclose(m @ m.conj().T, np.eye(4), atol=1e-14)
        target = m if hermitian else -m
        np.testing.assert_allclose(m.conj().T, target, atol=1e-14)

    def test_apply_matches_matrix(self):
        rng = np.random.default_rng(0)
        psi = rng.normal(size=8) + 1j * rng.normal(size=8)
        for lab in ["XYZ", "YIY", "ZZI"]:
            s = PauliString.from_label(lab, 1)
            np.testing.assert_allclose(s.apply(psi), s.to_matrix() @ psi, atol=1e-14)


class TestMultiply:
    def test_involution(self):
        x = PauliString.from_label("X")
        assert multiply(x, x) == PauliString.identity(1)

    def test_zx_is_iy(self):
        out = multiply(PauliString.from_label("Z"), PauliString.from_label("X"))
        assert out.label == "Y" and out.phase == 1

    def test_two_site_product_vs_dense(self):
        a, b = PauliString.from_label("YZ"), PauliString.from_label("ZY")
        np.testing.assert_allclose(dense(a * b), label_matrix("YZ") @ label_matrix("ZY"), atol=1e-14)

    @pytest.mark.parametrize("a", LABELS2)
    def test_exhaustive_two_site_products(self, a):
        for b in LABELS2:
            p = multiply(PauliString.from_label(a), PauliString.from_label(b))
            np.testing.assert_allclose(dense(p), label_matrix(a) @ label_matrix(b), atol=1e-14)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            multiply(PauliString.from_label("X"), PauliString.from_label("XX"))

    @settings(max_examples=60, deadline=None)
    @given(labels(4), labels(4), labels(4), st.integers(0, 3))
    def test_associativity(self, a, b, c, ph):
        a = PauliString.from_label(a, ph)
        b, c = PauliString.from_label(b), PauliString.from_label(c)
        assert (a * b) * c == a * (b * c)
        np.testing.assert_allclose(dense((a * b) * c), dense(a) @ dense(b) @ dense(c), atol=1e-13)


class TestCommutes:
    def test_examples(self):
        yz = PauliString.from_label("YZII")
        assert commutes(yz, PauliString.from_label("IIZY"))
        assert commutes(yz, PauliString.from_label("ZYII"))
        assert not commutes(yz, PauliString.from_label("IYZI"))

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_exhaustive_two_site_strings_vs_dense(self, n):
        # every string supported on at most two sites, all pairs
        strings = set()
        for i, j in itertools.combinations(range(n), 2):
            for la, lb in itertools.product("IXYZ", repeat=2):
                strings.add(PauliString.from_sites(n, {i: la, j: lb}))
        strings = sorted(strings, key=lambda s: s.label)
        mats = {s: s.to_matrix() for s in strings}
        for a in strings:
            for b in strings:
                comm = mats[a] @ mats[b] - mats[b] @ mats[a]
                assert commutes(a, b) == (np.abs(comm).max() < 1e-12), (a.label, b.label)


class TestPauliSum:
    def test_pruning(self):
        s = PauliSum.from_labels([("XX", 1.0), ("ZZ", 1e-15)])
        assert len(s) == 1
        assert len(s - s) == 0

    def test_phase_folded_into_coefficient(self):
        s = PauliSum.from_string(PauliString.from_label("Y", 1), 2.0)
        assert s.coeff("Y") == 2j
        assert s.is_anti_hermitian() and not s.is_hermitian()

    def test_arithmetic_matches_dense(self):
        a = PauliSum.from_labels([("XZ", 0.5), ("YY", -1.0)])
        b = PauliSum.from_labels([("ZI", 2.0), ("XZ", 1.5)])
        np.testing.assert_allclose((a + b).to_matrix(), a.to_matrix() + b.to_matrix())
        np.testing.assert_allclose((a * b).to_matrix(), a.to_matrix() @ b.to_matrix(), atol=1e-14)
        np.testing.assert_allclose((a * 3j).to_matrix(), 3j * a.to_matrix())
        np.testing.assert_allclose(a.dagger().to_matrix(), a.to_matrix().conj().T)

    def test_render(self):
        h = build_ising(SpinChainSpec(4, field_hz=0.4))
        assert h.render() == "-0.4*Z - 1.0*ZZ"


class TestCommutator:
    def test_self_commutator_vanishes(self):
        x = build_operator("X", SpinChainSpec(4))
        assert len(commutator(x, x)) == 0

    def test_matches_dense(self):
        chain = SpinChainSpec(4, field_hz=0.4, field_hx=0.4)
        h = build_ising(chain)
        for tag in ["X", "Y", "YZ", "YX"]:
            m = build_operator(tag, chain)
            c = commutator(h, m)
            hd, md = h.to_matrix(), m.to_matrix()
            np.testing.assert_allclose(c.to_matrix(), hd @ md - md @ hd, atol=1e-13)

    def test_lfi_with_x_patterns(self):
        chain = SpinChainSpec(6, field_hz=0.4)
        c = commutator(build_ising(chain), build_operator("X", chain))
        assert set(translation_patterns(c)) == {"Y", "YZ", "ZY"}

    def test_lfi_with_yx_patterns(self):
        # checked against the dense commutator above; no XY family appears
        chain = SpinChainSpec(6, field_hz=0.4)
        c = commutator(build_ising(chain), build_operator("YX", chain))
        assert set(translation_patterns(c)) == {"XX", "YY", "ZXX", "YYZ"}

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.tuples(labels(3), st.floats(-2, 2)), min_size=1, max_size=4),
        st.lists(st.tuples(labels(3), st.floats(-2, 2)), min_size=1, max_size=4),
    )
    def test_antisymmetric_and_hermitian(self, ta, tb):
        a, b = PauliSum.from_labels(ta), PauliSum.from_labels(tb)
        assert commutator(a, b).isclose(-commutator(b, a))
        assert (commutator(a, b) * 1j).is_hermitian()
        ad, bd = a.to_matrix(), b.to_matrix()
        np.testing.assert_allclose(commutator(a, b).to_matrix(), ad @ bd - bd @ ad, atol=1e-12)


class TestPool:
    def test_single_site(self):
        z = PauliSum.from_labels([("Z", 1.0)])
        x = PauliSum.from_labels([("X", 1.0)])
        (first,) = nested_commutator_pool(z, x, 1)
        assert [s.label for s in first.strings()] == ["Y"]

    def test_ising_orders(self):
        chain = SpinChainSpec(6, field_hz=0.4, field_hx=0.4)
        pool = nested_commutator_pool(build_ising(chain), build_operator("X", chain), 2)
        names = [set(translation_patterns(p)) for p in pool]
        assert {"Y", "YZ", "ZY"} <= names[0]
        assert {"YX", "XY"} <= names[1]
        assert all(len(p) <= 2 for n in names for p in n)
        assert set(pattern_names(pool)) >= {"Y", "YZ", "ZY", "YX", "XY"}

    def test_unfiltered_keeps_three_body(self):
        chain = SpinChainSpec(6, field_hz=0.4)
        pool = nested_commutator_pool(build_ising(chain), build_operator("X", chain), 2, max_body=None)
        assert any(len(p) == 3 for p in translation_patterns(pool[1]))

    def test_rejects_non_hermitian(self):
        x = PauliSum.from_labels([("X", 1.0)])
        with pytest.raises(ValueError):
            nested_commutator_pool(x * 1j, x, 1)
