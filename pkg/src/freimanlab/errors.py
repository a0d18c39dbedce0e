"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI should use when it
escapes to the top level.
"""


class FreimanError(Exception):
    exit_code = 1


class ConfigError(FreimanError):
    """Bad user input: grammar errors, invalid parameters."""

    exit_code = 2

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class BudgetExceeded(FreimanError):
    exit_code = 3


class VerificationFailure(FreimanError):
    exit_code = 4


class WindowOverflow(FreimanError):
    """Lamplighter support left the configured window [-W, W]."""

    exit_code = 3


class MixedGroupError(ConfigError):
    pass


class UndefinedProjection(ConfigError):
    pass
