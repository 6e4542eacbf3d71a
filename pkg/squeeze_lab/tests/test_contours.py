import unittest

import numpy as np

from squeeze_lab.exceptions import DomainError
from squeeze_lab.utils.contours import extract_contours


class TestExtractContours(unittest.TestCase):
    """Tests for marching-squares contour extraction"""

    def test_circle_is_closed(self):
        x = np.linspace(-2.0, 2.0, 41)
        y = np.linspace(-2.0, 2.0, 41)
        X, Y = np.meshgrid(x, y)
        contours = extract_contours(X**2 + Y**2, x, y, 1.0)
        self.assertEqual(len(contours.polylines), 1)
        line = contours.polylines[0]
        np.testing.assert_allclose(line[0], line[-1])
        radii = np.hypot(line[:, 0], line[:, 1])
        np.testing.assert_allclose(radii, 1.0, atol=0.02)

    def test_plane_gives_straight_line(self):
        x = np.arange(5.0)
        y = np.arange(5.0)
        values = np.tile(x, (5, 1))
        contours = extract_contours(values, x, y, 1.5)
        self.assertEqual(len(contours.polylines), 1)
        line = contours.polylines[0]
        self.assertEqual(contours.vertex_count, 5)
        np.testing.assert_allclose(line[:, 0], 1.5)
        self.assertEqual(sorted(line[:, 1].tolist()), [0.0, 1.0, 2.0, 3.0, 4.0])

    def test_level_outside_range_is_empty(self):
        x = np.arange(3.0)
        contours = extract_contours(np.tile(x, (3, 1)), x, x, 10.0)
        self.assertTrue(contours.is_empty)
        self.assertEqual(contours.to_dict(), {"level": 10.0, "polylines": []})

    def test_nan_cells_split_lines(self):
        x = np.arange(5.0)
        values = np.tile(x, (5, 1))
        values[2, 1] = np.nan
        contours = extract_contours(values, x, x, 1.5)
        self.assertEqual(len(contours.polylines), 2)

    def test_saddle_square(self):
        values = np.array([[1.0, 0.0], [0.0, 1.0]])
        contours = extract_contours(values, [0.0, 1.0], [0.0, 1.0], 0.5)
        self.assertEqual(len(contours.polylines), 2)
        for line in contours.polylines:
            self.assertEqual(len(line), 2)

    def test_shape_checks(self):
        with self.assertRaises(DomainError):
            extract_contours(np.zeros((3, 4)), np.arange(3.0), np.arange(3.0), 0.0)
        with self.assertRaises(DomainError):
            extract_contours(np.zeros((1, 4)), np.arange(4.0), np.arange(1.0), 0.0)


if __name__ == "__main__":
    unittest.main()
