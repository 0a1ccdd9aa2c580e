class UwbNetError(Exception):
    """Base class for all pipeline errors."""


class MalformedRecord(UwbNetError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        self.reason = reason
        msg = f"malformed record at line {line_no}"
        super().__init__(f"{msg}: {reason}" if reason else msg)


class NoSamplesForTag(UwbNetError):
    pass


class AllMissing(UwbNetError):
    pass


class EmptyResult(UwbNetError):
    pass


class NoOverlap(UwbNetError):
    pass


class EmptyGraph(UwbNetError):
    pass


class DomainMismatch(UwbNetError):
    pass


class OutOfRange(UwbNetError):
    pass


class UnknownTag(UwbNetError):
    pass


class InvalidScenario(UwbNetError):
    pass


class WindowMismatch(UwbNetError):
    pass


class ConfigError(UwbNetError):
    pass
