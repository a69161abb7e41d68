import unittest

from toypkg.counter import Counter


class TestSpin(unittest.TestCase):
    def test_quick(self):
        self.assertEqual(Counter().value, 0)

    def test_spin(self):
        c = Counter()
        while True:
            c.increment()


if __name__ == "__main__":
    unittest.main()
