"""Exception types shared across embedders, codecs and the CLI."""


class StegoError(Exception):
    pass


class CapacityExceeded(StegoError):
    def __init__(self, needed: int, available: int):
        self.needed = needed
        self.available = available
        super().__init__(f"payload needs {needed} bits but carrier holds {available}")


class MalformedHeader(StegoError):
    pass


class UnsupportedFormat(StegoError):
    pass


class ExtentError(StegoError, ValueError):
    pass
