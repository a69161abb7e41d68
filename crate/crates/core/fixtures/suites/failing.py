import unittest

from toypkg.stack import Stack


class TestStack(unittest.TestCase):
    def test_push_pop(self):
        s = Stack()
        s.push(1)
        self.assertEqual(s.pop(), 1)

    def test_wrong_length(self):
        s = Stack()
        s.push(1)
        self.assertEqual(len(s), 2)

    def test_peek_empty(self):
        self.assertIsNone(Stack().peek())


if __name__ == "__main__":
    unittest.main()
