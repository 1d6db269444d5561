"""
Packed binary sequences.

A BitSequence stores its bits MSB-first, eight to a byte, with the pad bits of
the final byte always zero. It is immutable; the unpacked 0/1 view returned by
``bits`` is read-only and cached.
"""
import logging
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Union

import numpy as np

from errors import BitstreamIOError, InvalidCharacter, OutOfRange, TruncatedFile

logger = logging.getLogger(__name__)

ASCII01 = "ascii01"
RAW_PACKED = "raw_packed"
FORMATS = (ASCII01, RAW_PACKED)

_HEADER = struct.Struct("<Q")
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)
_WHITESPACE = np.array([ord(c) for c in " \t\n\r\v\f"], dtype=np.uint32)


def _pad_mask(length: int) -> int:
    tail = length % 8
    return 0xFF if tail == 0 else (0xFF << (8 - tail)) & 0xFF


@dataclass(frozen=True)
class BitSequence:
    length: int
    storage: bytes = b""

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if len(self.storage) != (self.length + 7) // 8:
            raise ValueError(
                f"storage holds {len(self.storage)} bytes, expected {(self.length + 7) // 8}"
            )
        if self.storage and self.storage[-1] & ~_pad_mask(self.length) & 0xFF:
            raise ValueError("pad bits of the final byte must be zero")

    @classmethod
    def from_bits(cls, bits: Union[Iterable[int], np.ndarray]) -> "BitSequence":
        arr = np.asarray(bits, dtype=np.uint8).ravel()
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        return cls(int(arr.size), np.packbits(arr).tobytes())

    @classmethod
    def from_bytes(cls, data: bytes, length: int = None) -> "BitSequence":
        """Take the first ``length`` bits of ``data`` (all of it by default)."""
        if length is None:
            length = 8 * len(data)
        if length > 8 * len(data):
            raise OutOfRange(f"{length} bits requested from {len(data)} bytes")
        buf = bytearray(data[: (length + 7) // 8])
        if buf:
            buf[-1] &= _pad_mask(length)
        return cls(length, bytes(buf))

    @classmethod
    def empty(cls) -> "BitSequence":
        return cls(0, b"")

    @cached_property
    def bits(self) -> np.ndarray:
        arr = np.unpackbits(np.frombuffer(self.storage, dtype=np.uint8), count=self.length)
        arr.flags.writeable = False
        return arr

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, index: int) -> int:
        if index < 0:
            index += self.length
        if not 0 <= index < self.length:
            raise OutOfRange(f"bit index {index} outside [0, {self.length})")
        return (self.storage[index >> 3] >> (7 - (index & 7))) & 1

    def __iter__(self) -> Iterator[int]:
        return iter(self.bits.tolist())

    def __add__(self, other: "BitSequence") -> "BitSequence":
        return BitSequence.from_bits(np.concatenate([self.bits, other.bits]))

    def slice(self, start: int, length: int) -> "BitSequence":
        """Bits ``[start, start + length)``."""
        if start < 0 or length < 0 or start + length > self.length:
            raise OutOfRange(
                f"slice [{start}, {start + length}) outside sequence of {self.length} bits"
            )
        if start % 8 == 0:
            return BitSequence.from_bytes(self.storage[start // 8:], length)
        return BitSequence.from_bits(self.bits[start:start + length])

    def to_ascii(self) -> str:
        return (self.bits + ord("0")).tobytes().decode("ascii")

    def __repr__(self) -> str:
        preview = self.slice(0, min(self.length, 32)).to_ascii()
        more = "..." if self.length > 32 else ""
        return f"BitSequence(length={self.length}, bits={preview}{more})"


def from_ascii(text: str) -> BitSequence:
    """Parse '0'/'1' characters, ignoring whitespace.

    Raises InvalidCharacter with the index of the first offending character
    in ``text``.
    """
    codes = np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)
    blank = np.isin(codes, _WHITESPACE)
    bad = ~blank & (codes != ord("0")) & (codes != ord("1"))
    if bad.any():
        position = int(np.argmax(bad))
        raise InvalidCharacter(position, text[position])
    return BitSequence.from_bits((codes[~blank] - ord("0")).astype(np.uint8))


def ones_count(seq: BitSequence) -> int:
    return int(_POPCOUNT[np.frombuffer(seq.storage, dtype=np.uint8)].sum())


def zeros_count(seq: BitSequence) -> int:
    return seq.length - ones_count(seq)


def slice_bits(seq: BitSequence, start: int, length: int) -> BitSequence:
    return seq.slice(start, length)


def save_bits(seq: BitSequence, path: Union[str, Path], fmt: str = ASCII01) -> None:
    """Write ``seq`` in ascii01 (text) or raw_packed (8-byte LE length + bytes)."""
    if fmt not in FORMATS:
        raise ValueError(f"Unknown bit file format: {fmt}")
    try:
        if fmt == ASCII01:
            Path(path).write_text(seq.to_ascii() + "\n", encoding="ascii")
        else:
            Path(path).write_bytes(_HEADER.pack(seq.length) + seq.storage)
    except OSError as e:
        raise BitstreamIOError(f"Failed to write {path}: {str(e)}") from e
    logger.debug(f"Wrote {seq.length} bits to {path} ({fmt})")


def load_bits(path: Union[str, Path], fmt: str = ASCII01) -> BitSequence:
    if fmt not in FORMATS:
        raise ValueError(f"Unknown bit file format: {fmt}")
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise BitstreamIOError(f"Failed to read {path}: {str(e)}") from e

    if fmt == ASCII01:
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as e:
            raise InvalidCharacter(e.start) from e
        seq = from_ascii(text)
    else:
        if len(data) < _HEADER.size:
            raise TruncatedFile(f"{path}: {len(data)} bytes is shorter than the length header")
        (length,) = _HEADER.unpack_from(data)
        needed = (length + 7) // 8
        body = data[_HEADER.size:]
        if len(body) < needed:
            raise TruncatedFile(
                f"{path}: header announces {length} bits ({needed} bytes), found {len(body)} bytes"
            )
        seq = BitSequence.from_bytes(body[:needed], length)

    logger.debug(f"Loaded {seq.length} bits from {path} ({fmt})")
    return seq
