class TransducerError(Exception):
    """Base class for errors raised by this package."""


class CyclicGraph(TransducerError):
    pass


class NoPath(TransducerError):
    pass


class TooManyPaths(TransducerError):
    pass


class InvalidTarget(TransducerError, ValueError):
    pass


class ShapeMismatch(TransducerError, ValueError):
    pass


class DegenerateVocabulary(TransducerError, ValueError):
    pass


class EmptyReference(TransducerError, ValueError):
    pass


class NonFiniteLoss(TransducerError, FloatingPointError):
    def __init__(self, utterance_id: str, value: float):
        super().__init__(f"non-finite loss {value!r} for utterance {utterance_id!r}")
        self.utterance_id = utterance_id
        self.value = value
