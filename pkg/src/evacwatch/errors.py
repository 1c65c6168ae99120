"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class EvacwatchError(Exception):
    exit_code = 1


class UsageError(EvacwatchError):
    exit_code = 1


class InputError(EvacwatchError):
    """Unreadable, malformed or inconsistent input data."""

    exit_code = 2


class SchemaError(InputError):
    """Most of an input did not match the declared column layout."""


class StatisticalError(EvacwatchError):
    exit_code = 3


class RankDeficiencyError(StatisticalError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "design matrix is rank deficient; dependent columns: " + ", ".join(self.columns)
        )
