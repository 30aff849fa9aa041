from typing import Iterable


class KahanSum:
    """Running compensated sum; terms are added in the order given."""

    def __init__(self):
        self.total = 0.0
        self.carry = 0.0

    def add(self, value: float):
        value -= self.carry
        total = self.total + value
        self.carry = (total - self.total) - value
        self.total = total

    def extend(self, values: Iterable[float]):
        for value in values:
            self.add(float(value))
        return self


def kahan_sum(values: Iterable[float]) -> float:
    return KahanSum().extend(values).total
