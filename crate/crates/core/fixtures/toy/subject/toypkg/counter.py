class Counter:
    def __init__(self, start=0):
        self.value = start

    def increment(self, step=1):
        if step <= 0:
            raise ValueError("step must be positive")
        self.value += step
        return self.value

    def reset(self):
        self.value = 0
