"""Exception hierarchy shared by the toolkit."""


class TamperQAError(Exception):
    """Base class for every contract error raised by this package."""


class EmptyMask(TamperQAError):
    pass


class DimensionMismatch(TamperQAError):
    pass


class OutOfBounds(TamperQAError):
    pass


class CoincidentPoints(TamperQAError):
    pass


class IneligibleInstance(TamperQAError):
    pass


class UnknownBlurKind(TamperQAError):
    pass


class InvalidRecord(TamperQAError):
    pass


class TemplateGap(TamperQAError):
    pass


class MissingSlot(TamperQAError):
    pass


class EmptyInput(TamperQAError):
    pass


class MissingQid(TamperQAError):
    pass


class MissingFile(TamperQAError):
    pass


class BadDimensions(TamperQAError):
    pass


class NonBinaryMask(TamperQAError):
    pass


class IoFailure(TamperQAError):
    pass


class ChecksumMismatch(TamperQAError):
    pass


class ParseError(TamperQAError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateTripleId(TamperQAError):
    pass


class UnknownTripleId(TamperQAError):
    pass


class MissingPrediction(TamperQAError):
    pass


class EmptyGold(TamperQAError):
    pass


class UnknownQid(TamperQAError):
    pass


class BasisMismatch(TamperQAError):
    pass


class MissingTriple(TamperQAError):
    pass
