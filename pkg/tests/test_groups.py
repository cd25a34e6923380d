"""Abelian label algebra."""

from fractions import Fraction

import pytest

from tnkit import AngleGroup, ProductGroup, TRIVIAL, U1, Z2, ZGroup


def test_zn_arithmetic():
    z3 = ZGroup(3)
    assert z3.identity() == 0
    assert z3.fuse(2, 2) == 1
    assert z3.invert(1) == 2
    assert z3.normalize(2) == 2
    assert z3.fuse_many([1, 1, 1]) == 0
    with pytest.raises(ValueError):
        z3.normalize(-1)  # labels live in 0..n-1


def test_z2_self_inverse():
    assert Z2.invert(0) == 0
    assert Z2.invert(1) == 1
    assert Z2.fuse(1, 1) == 0


def test_u1_arithmetic():
    assert U1.identity() == 0
    assert U1.fuse(2, -5) == -3
    assert U1.invert(7) == -7
    assert U1.normalize(3) == 3
    assert U1.fuse_many([]) == 0


def test_angle_group_fractions():
    g = AngleGroup()
    assert g.fuse(Fraction(1, 3), Fraction(2, 3)) == 0
    assert g.invert(Fraction(1, 3)) == Fraction(2, 3)
    assert g.normalize(Fraction(7, 3)) == Fraction(1, 3)
    assert g.normalize(Fraction(-1, 4)) == Fraction(3, 4)
    assert g.identity() == 0


def test_product_group():
    g = ProductGroup((Z2, U1))
    assert g.identity() == (0, 0)
    assert g.fuse((1, 2), (1, -3)) == (0, -1)
    assert g.invert((1, 5)) == (1, -5)
    assert g.normalize((1, 4)) == (1, 4)
    with pytest.raises(ValueError):
        g.normalize((3, 4))


def test_trivial_group():
    assert TRIVIAL.identity() == 0
    assert TRIVIAL.fuse(0, 0) == 0
    assert TRIVIAL.normalize(0) == 0
    with pytest.raises(ValueError):
        TRIVIAL.normalize(12)


def test_groups_hashable_and_comparable():
    assert ZGroup(2) == Z2
    assert ZGroup(2) != ZGroup(3)
    assert hash(ZGroup(2)) == hash(Z2)
    assert ProductGroup((Z2, U1)) == ProductGroup((Z2, U1))
    d = {Z2: "a", U1: "b"}
    assert d[ZGroup(2)] == "a"
