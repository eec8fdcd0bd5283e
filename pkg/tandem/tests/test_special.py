import numpy as np
from django.test import SimpleTestCase

from tandem import special


class BesselTableTests(SimpleTestCase):
    # Abramowitz & Stegun, Table 9.1
    def test_order_zero_and_one_at_unit_argument(self):
        self.assertAlmostEqual(special.j0(1.0), 0.7651976865579666, places=12)
        self.assertAlmostEqual(special.j1(1.0), 0.4400505857449335, places=12)
        self.assertAlmostEqual(special.y0(1.0), 0.08825696421567696, places=12)
        self.assertAlmostEqual(special.y1(1.0), -0.7812128213002887, places=12)

    def test_first_zero_of_j0(self):
        self.assertAlmostEqual(special.j0(2.404825557695773), 0.0, places=12)

    def test_hankel_second_kind_is_j_minus_jy(self):
        x = np.array([0.3, 1.0, 7.5, 40.0])
        np.testing.assert_allclose(special.h0_2(x), special.j0(x) - 1j * special.y0(x), rtol=1e-13)
        np.testing.assert_allclose(special.h1_2(x), special.j1(x) - 1j * special.y1(x), rtol=1e-13)

    def test_derivative_recurrence(self):
        x = 2.7
        for n in range(1, 6):
            expected = 0.5 * (special.jn(n - 1, x) - special.jn(n + 1, x))
            self.assertAlmostEqual(special.jn_prime(n, x), expected, places=12)
            expected_h = 0.5 * (special.hn_2(n - 1, x) - special.hn_2(n + 1, x))
            self.assertAlmostEqual(abs(special.hn_2_prime(n, x) - expected_h), 0.0, places=12)

    def test_green_function_far_field_decay(self):
        k0 = 2 * np.pi
        near = abs(special.green_2d(k0, 10.0))
        far = abs(special.green_2d(k0, 40.0))
        self.assertAlmostEqual(near / far, 2.0, places=2)
