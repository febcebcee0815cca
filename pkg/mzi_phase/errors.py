EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RESOURCE = 3


class MziPhaseError(Exception):
    exit_code = EXIT_INVALID


class DomainError(MziPhaseError, ValueError):
    """Physically meaningless input: bad photon number, prior width, dimensions."""


class ConfigurationError(MziPhaseError, ValueError):
    def __init__(self, message, line=None, key=None):
        super().__init__(message)
        self.line = line
        self.key = key

    def __str__(self):
        msg = super().__str__()
        return f"line {self.line}: {msg}" if self.line is not None else msg


class ResourceError(MziPhaseError, RuntimeError):
    exit_code = EXIT_RESOURCE
