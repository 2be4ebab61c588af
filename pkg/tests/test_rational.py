import numpy as np
import pytest

from surgebench.plant import CANONICAL_OPERATING_POINT, linearize
from surgebench.rational import Rational, RationalMatrix, transfer_matrix


def s_over(num, den):
    return Rational(np.array(num, dtype=float), np.array(den, dtype=float))


class TestRational:
    def test_evaluation(self):
        r = s_over([1.0], [0.0, 1.0])  # 1/s
        assert r(2.0) == pytest.approx(0.5)
        assert r(1j * 4.0) == pytest.approx(-0.25j)

    def test_arithmetic(self):
        one_over_s = s_over([1.0], [0.0, 1.0])
        const = Rational.constant(3.0)
        total = one_over_s + const
        assert total(2.0) == pytest.approx(3.5)
        prod = one_over_s * const
        assert prod(2.0) == pytest.approx(1.5)
        diff = const - one_over_s
        assert diff(2.0) == pytest.approx(2.5)
        quot = const / one_over_s
        assert quot(2.0) == pytest.approx(6.0)

    def test_zero_denominator_rejected(self):
        with pytest.raises(ZeroDivisionError):
            s_over([1.0], [0.0])

    def test_simplification_cancels_common_roots(self):
        # (s + 75)^2 / (s (s + 75)) -> (s + 75) / s
        num = np.polynomial.polynomial.polyfromroots([-75.0, -75.0])
        den = np.polynomial.polynomial.polyfromroots([0.0, -75.0])
        r = Rational(num, den).simplified()
        assert np.allclose(r.num, [75.0, 1.0])
        assert np.allclose(r.den, [0.0, 1.0])

    def test_simplified_denominator_is_monic(self):
        r = s_over([-0.04], [-0.05]).simplified()
        assert np.allclose(r.num, [0.8])
        assert np.allclose(r.den, [1.0])

    def test_poles(self):
        r = s_over([1.0], [0.0, 75.0, 1.0])  # 1/(s(s+75))
        assert sorted(np.real(r.poles())) == pytest.approx([-75.0, 0.0])


class TestRationalMatrix:
    def test_transfer_matrix_matches_resolvent(self):
        model = linearize(CANONICAL_OPERATING_POINT)
        g = transfer_matrix(model.a, model.b, model.c)
        rng = np.random.default_rng(9)
        for _ in range(5):
            s = complex(rng.normal(), rng.normal() * 10)
            direct = model.c @ np.linalg.inv(s * np.eye(2) - model.a) @ model.b
            assert np.allclose(g.evaluate(s), direct, atol=1e-9)

    def test_plant_entries_simplify_to_printed_forms(self):
        model = linearize(CANONICAL_OPERATING_POINT)
        g = transfer_matrix(model.a, model.b, model.c)
        assert np.allclose(g[0, 0].num, [1.0]) and np.allclose(g[0, 0].den, [0.0, 1.0])
        assert np.allclose(g[1, 0].num, [0.01]) and np.allclose(g[1, 0].den, [75.0, 1.0])
        assert np.allclose(g[1, 1].num, [-0.04]) and np.allclose(g[1, 1].den, [75.0, 1.0])

    def test_two_by_two_inverse(self):
        model = linearize(CANONICAL_OPERATING_POINT)
        g = transfer_matrix(model.a, model.b, model.c)
        inv = g.inverse()
        for omega in [0.7, 13.0, 400.0]:
            product = inv.at_omega(omega) @ g.at_omega(omega)
            assert np.allclose(product, np.eye(2), atol=1e-8)

    def test_structurally_singular_inverse_rejected(self):
        one_over_s = s_over([1.0], [0.0, 1.0])
        singular = RationalMatrix([[one_over_s, one_over_s],
                                   [one_over_s, one_over_s]])
        with pytest.raises(ZeroDivisionError):
            singular.inverse()

    def test_matmul(self):
        model = linearize(CANONICAL_OPERATING_POINT)
        g = transfer_matrix(model.a, model.b, model.c)
        product = g.inverse() @ g
        assert np.allclose(product.at_omega(3.0), np.eye(2), atol=1e-9)

    def test_scale(self):
        g = RationalMatrix([[Rational.constant(1.0), Rational.constant(2.0)],
                            [Rational.constant(3.0), Rational.constant(4.0)]])
        scaled = g.scale([10.0, 100.0], [1.0, 0.5])
        assert np.allclose(scaled.evaluate(0.0), [[10.0, 10.0], [300.0, 200.0]])

    def test_pole_set(self):
        model = linearize(CANONICAL_OPERATING_POINT)
        g = transfer_matrix(model.a, model.b, model.c)
        poles = sorted(np.real(g.pole_set()))
        assert poles == pytest.approx([-75.0, 0.0])
