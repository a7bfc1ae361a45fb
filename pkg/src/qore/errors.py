"""Exception hierarchy shared by every qore module.

Each error carries a stable ``code`` string. The CLI prints it, the SBA
harness maps it onto wire status codes, and tests assert on it.
"""

from __future__ import annotations


class QoreError(Exception):
    code = "error"

    def __init__(self, message: str | None = None):
        super().__init__(message or self.code)


# crypto-suite

class EntropyUnavailable(QoreError):
    code = "entropy-unavailable"


class MalformedKey(QoreError):
    code = "malformed-key"


class MalformedEncapsulationKey(MalformedKey):
    code = "malformed-encapsulation-key"


class MalformedDecapsulationKey(MalformedKey):
    code = "malformed-decapsulation-key"


class LengthMismatch(QoreError):
    code = "length-mismatch"


class ContextTooLong(QoreError):
    code = "context-too-long"


class SmallOrderPoint(QoreError):
    code = "small-order-point"


class OutputTooLong(QoreError):
    code = "output-too-long"


class AuthFailure(QoreError):
    """AEAD tag did not verify."""

    code = "auth-failure"


class UnknownAlgorithm(QoreError):
    code = "unknown-algorithm"
