import unittest

import toypkg.does_not_exist


class TestMissing(unittest.TestCase):
    def test_a(self):
        self.assertTrue(toypkg.does_not_exist)

    def test_b(self):
        self.assertTrue(True)


if __name__ == "__main__":
    unittest.main()
