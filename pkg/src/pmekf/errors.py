"""Package-level exceptions."""


class NumericalFailure(RuntimeError):
    """Integration or linear algebra produced non-finite or diverging values."""
