import math


class Rectangle:
    def __init__(self, width, height):
        if width < 0 or height < 0:
            raise ValueError("dimensions must be non-negative")
        self.width = width
        self.height = height

    def area(self):
        return self.width * self.height

    def diagonal(self):
        return math.hypot(self.width, self.height)

    def scale(self, factor):
        return Rectangle(self.width * factor, self.height * factor)
