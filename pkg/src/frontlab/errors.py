"""Exception hierarchy shared by all frontlab modules."""


class FrontlabError(Exception):
    """Base class for every error raised by the package."""


# nonlinearity
class NotDoubleWell(FrontlabError):
    pass


class ShootingFailed(FrontlabError):
    pass


class IntegrationFailed(FrontlabError):
    pass


# chart
class SingularMetric(FrontlabError):
    pass


class LeftDomain(FrontlabError):
    pass


class OutsideWedge(FrontlabError, ValueError):
    pass


class GaugeODEFailed(FrontlabError):
    pass


class DegenerateTangent(FrontlabError):
    pass


class CausticDetected(FrontlabError):
    def __init__(self, message, yn=None):
        super().__init__(message)
        self.yn = yn


class RootFindFailed(FrontlabError):
    pass


class SignatureViolation(FrontlabError):
    pass


class OutsideChart(FrontlabError):
    pass


class NotPositiveDefinite(FrontlabError):
    pass


# wave solver
class DomainTooSmall(FrontlabError):
    pass


class ChartCoverage(FrontlabError):
    pass


class CFLViolation(FrontlabError):
    pass


class NaNDetected(FrontlabError):
    pass


class ConfigError(FrontlabError, ValueError):
    pass


# diagnostics
class TruncationWarning(UserWarning):
    pass


class WindowCollapsed(FrontlabError):
    pass


class MultipleCrossings(FrontlabError):
    pass


class NoCrossing(FrontlabError):
    pass


class FitDiverged(FrontlabError):
    pass


class InsufficientLevels(FrontlabError):
    pass
