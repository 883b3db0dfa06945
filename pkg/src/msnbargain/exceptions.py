"""Exception types raised by the package."""


class ScenarioError(ValueError):
    """A scenario, allocation or plan violates one of its invariants.

    ``problems`` lists every violation found, not just the first one.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UndefinedDisseminationError(ValueError):
    """An item has no links, so its transmitted amount is undefined."""


class BudgetExhaustedError(ValueError):
    """Energy consumption reached or exceeded the user's budget."""


class InfeasibleUtilityError(ValueError):
    """A negative utility was passed where the Nash product needs u >= 0."""


class NoAgreementError(RuntimeError):
    """Every candidate head gave an infeasible sub-problem (disagreement point)."""


class DimensionError(ValueError):
    """Brute-force search was asked to enumerate too many variables."""


class ScenarioFileError(ValueError):
    """A scenario file failed to parse or validate.

    ``problems`` holds one ``"<location>: <message>"`` string per issue.
    """

    def __init__(self, path, problems):
        self.path = str(path)
        self.problems = list(problems)
        lines = "\n  ".join(self.problems)
        super().__init__(f"{self.path}:\n  {lines}")
