"""Exception hierarchy shared by every layer of the protocol."""


class MP3Error(Exception):
    """Base class for protocol errors."""


class InvalidEncoding(MP3Error, ValueError):
    """A byte string is not the canonical encoding of a group element or record."""


class DivisionByZero(MP3Error, ZeroDivisionError):
    """Inverse of zero requested in Z_p."""


class SelfRevoked(MP3Error):
    """The holder of a decryption key appears in a revocation list."""


class AuthFailure(MP3Error):
    """AEAD tag mismatch: wrong key, tampered data, or a revoked reader."""


class BeforeGenesis(MP3Error):
    pass


class MessageTooLong(MP3Error, ValueError):
    pass


class DuplicateKey(MP3Error, ValueError):
    pass


class BadPrivacyLevel(MP3Error, ValueError):
    pass


class BadQuery(MP3Error, ValueError):
    pass


class NotEnoughServers(MP3Error):
    pass


class InconsistentResponses(MP3Error):
    """PIR responses do not lie on a single degree-t polynomial.

    ``servers`` lists the evaluation indices whose responses disagreed with
    the polynomial interpolated from the first ``t + 1`` responses.
    """

    def __init__(self, detail: str, servers: tuple[int, ...] = ()):
        super().__init__(detail)
        self.servers = servers


class BadSignature(MP3Error):
    pass


class WrongEpochWindow(MP3Error):
    pass


class MalformedRecord(MP3Error, ValueError):
    pass


class UnknownEpoch(MP3Error, KeyError):
    pass


class FriendLimitReached(MP3Error):
    pass


class NeedRekey(MP3Error):
    """Missed long-term epochs are no longer retained; re-share out of band."""


class MetaDisagreement(MP3Error):
    """No strict majority among the metadata returned by lookup servers."""


class TransportError(MP3Error, OSError):
    pass


class RemoteError(MP3Error):
    """A server answered with an ERROR frame."""

    def __init__(self, code: int, message: str):
        super().__init__(f"remote error {code}: {message}")
        self.code = code
        self.message = message
