"""Exception hierarchy shared by all htssim modules.

Every error carries a process exit code so the CLI can map failures to
distinct statuses without string matching.
"""


class HtsError(Exception):
    exit_code = 10
    module = "htssim"


class ParseError(HtsError):
    exit_code = 3
    module = "scenario"

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)


class ValidationError(HtsError):
    exit_code = 4
    module = "scenario"

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DanglingReference(ValidationError):
    exit_code = 5


class DomainError(HtsError, ValueError):
    exit_code = 6


class DimensionMismatch(HtsError, ValueError):
    exit_code = 7


# precoder-specific name used when K > M
DimensionError = DimensionMismatch


class GeometryError(HtsError):
    exit_code = 8
    module = "channel"


class NyquistViolation(DomainError):
    exit_code = 9
    module = "impairments"


class SingularCovariance(HtsError, ArithmeticError):
    exit_code = 11
    module = "array"


class RankDeficient(HtsError, ArithmeticError):
    exit_code = 12
    module = "array"


class OutOfGrid(HtsError, ValueError):
    exit_code = 13
    module = "array"


class BalanceUnachievable(HtsError):
    exit_code = 14
    module = "coverage"


class DegenerateInput(HtsError, ValueError):
    exit_code = 15
    module = "coverage"


class DegenerateGeometry(HtsError, ValueError):
    exit_code = 16
    module = "coverage"


class NoFittingBeam(HtsError):
    exit_code = 17
    module = "coverage"
