class DataError(ValueError):
    """Malformed input data; ``row`` and ``column`` locate the fault when known."""

    def __init__(self, message: str, row: int | None = None, column: str | int | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(ValueError):
    pass


class EvaluationFault(ArithmeticError):
    """A model produced a non-finite value at ``theta``."""

    def __init__(self, message: str, theta=None):
        if theta is not None:
            message = f"{message} at theta={list(map(float, theta))}"
        super().__init__(message)
        self.theta = theta


class DegenerateWeightsError(ArithmeticError):
    pass


class RunFault(RuntimeError):
    """Aborted run, carrying where it failed and the seeds needed to replay it."""

    def __init__(self, message: str, step: int, expert: int | None, seeds: dict):
        super().__init__(f"{message} [step={step}, expert={expert}, seeds={seeds}]")
        self.step = step
        self.expert = expert
        self.seeds = seeds
