import unittest

from toypkg.counter import Counter


class TestCounter(unittest.TestCase):
    def test_start(self):
        self.assertEqual(Counter(3).value, 3)

    def test_increment(self):
        self.assertEqual(Counter().increment(), 1)


if __name__ == "__main__":
    unittest.main()
