from typing import Optional


class QkdRandError(Exception):
    """Base class for every error raised by this package."""


# Bit sequences and bit files

class BitstreamError(QkdRandError):
    pass


class InvalidCharacter(BitstreamError):
    def __init__(self, position: int, char: Optional[str] = None):
        self.position = position
        self.char = char
        super().__init__(f"Invalid character {char!r} at position {position}")


class OutOfRange(BitstreamError):
    pass


class TruncatedFile(BitstreamError):
    pass


class BitstreamIOError(BitstreamError, OSError):
    pass


# QKD simulation

class SimulationError(QkdRandError):
    pass


class LengthMismatch(SimulationError):
    pass


class KeyTooShort(SimulationError):
    pass


class NonPositiveOutputLength(SimulationError):
    pass


# Numerical kernels

class StatsError(QkdRandError):
    pass


class DomainError(StatsError, ValueError):
    pass


# Randomness battery

class BatteryError(QkdRandError):
    pass


class TooFewBits(BatteryError):
    def __init__(self, test_id: str, needed: int, got: int):
        self.test_id = test_id
        self.needed = needed
        self.got = got
        super().__init__(f"{test_id} needs at least {needed} bits, got {got}")


class PreconditionFailed(BatteryError):
    pass


class PeriodicTemplate(BatteryError):
    pass


class InvalidM(BatteryError):
    pass


class UnknownTest(BatteryError):
    pass


# Remote bit source

class RemoteSourceError(QkdRandError):
    pass


class NetworkError(RemoteSourceError):
    pass


class MalformedResponse(RemoteSourceError):
    pass


class RemoteTimeout(NetworkError):
    pass
