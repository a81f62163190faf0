"""Exception hierarchy.

Every error carries a machine-readable ``category`` (the class name) and the
process exit code the CLI maps it to: 1 for estimation failures, 2 for bad
inputs, 3 for bad configuration.
"""

from __future__ import annotations


class PanelShockError(Exception):
    exit_code = 1

    @property
    def category(self) -> str:
        return type(self).__name__


class EstimationError(PanelShockError):
    exit_code = 1


class InputError(PanelShockError):
    exit_code = 2


class ConfigError(PanelShockError):
    exit_code = 3


# decomposition
class RankDeficient(EstimationError):
    pass


class DegenerateAngle(EstimationError):
    pass


class InvalidWeight(ConfigError):
    pass


class ZeroVariance(EstimationError):
    pass


class NoSolution(EstimationError):
    pass


class OutOfRange(InputError):
    pass


# panel BVAR
class InsufficientSample(EstimationError):
    pass


class SingularDesign(EstimationError):
    pass


class NonPsdPosteriorScale(EstimationError):
    pass


class CholeskyFailure(EstimationError):
    pass


# local projections
class EmptySample(EstimationError):
    pass


class CollinearShocks(EstimationError):
    pass


class TooFewClustersWarning(UserWarning):
    pass


# synthetic lab
class ExplosiveDgp(ConfigError):
    pass


# data pipeline
class ParseError(InputError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class MissingCoverage(InputError):
    def __init__(self, country: str, variable: str, gaps: list[str]):
        shown = ", ".join(gaps[:12]) + (" ..." if len(gaps) > 12 else "")
        super().__init__(
            f"no candidate series covers the window for country={country} "
            f"variable={variable}; missing months: {shown}"
        )
        self.country = country
        self.variable = variable
        self.gaps = gaps


class RangeMismatch(InputError):
    pass
