"""Exception hierarchy for tivreg."""


class TivregError(Exception):
    """Base class. Raised for failures the CLI maps to exit code 1."""


class TooFewPoints(TivregError):
    pass


class EmptySelection(TivregError):
    pass


class EmptyInput(TivregError):
    pass


class DegenerateBounds(TivregError):
    pass


class NormalizationDegenerate(TivregError):
    pass


class NoCorrespondences(TivregError):
    pass


class CloudIOError(TivregError):
    """I/O level failure; the CLI maps these to exit code 2."""


class ParseError(CloudIOError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class UnsupportedFormat(CloudIOError):
    pass
