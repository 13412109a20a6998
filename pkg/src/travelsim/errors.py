"""Exception hierarchy shared across travelsim."""


class TravelsimError(Exception):
    """Base class for all travelsim errors."""


class PlanParseError(TravelsimError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class PlanReferenceError(TravelsimError):
    pass


class ModeError(TravelsimError):
    """Transit mode is forbidden for the traveler or has no rate."""


class ContractError(TravelsimError):
    """A caller broke a precondition (illegal action, bad argument)."""


class ProviderError(TravelsimError):
    """An information provider (map, dining, sightseeing, chat) failed."""


class ReplayMiss(ProviderError):
    """Replay mode was asked for a response that was never recorded."""


class ProtocolError(ProviderError):
    """A remote service answered with a payload we could not interpret."""


class DecisionParseError(TravelsimError):
    pass


class SimulationAborted(TravelsimError):
    def __init__(self, reason, trace):
        self.reason = reason
        self.trace = trace
        super().__init__(reason)


class PipelineError(TravelsimError):
    def __init__(self, message, transcript=None):
        self.transcript = transcript
        super().__init__(message)


class BundleError(TravelsimError):
    pass
