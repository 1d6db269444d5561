"""
Bits from a remote quantum random number service.

The service answers ``GET <endpoint>?length=<bytes>&type=uint8`` with a JSON
object whose ``data`` field is a list of integers in [0, 255]. Bytes are
unpacked MSB-first and the result is cut to exactly the requested bit count.

Retries live in the session adapter: ``config.MAX_RETRIES`` attempts per
chunk in total, with exponential backoff between them.
"""
import logging
import math
from typing import List, Optional

import numpy as np
import requests
from requests.adapters import HTTPAdapter
from urllib3.exceptions import ConnectTimeoutError, ReadTimeoutError
from urllib3.util.retry import Retry

import config
from bitstream import BitSequence
from errors import MalformedResponse, NetworkError, RemoteTimeout

logger = logging.getLogger(__name__)

RETRY_STATUSES = (429, 500, 502, 503, 504)


def _create_session(max_attempts: Optional[int] = None, backoff_factor: Optional[float] = None) -> requests.Session:
    """Create a session whose adapter retries failed GETs with backoff."""
    attempts = config.MAX_RETRIES if max_attempts is None else max_attempts
    session = requests.Session()
    retry_strategy = Retry(
        total=max(0, attempts - 1),
        backoff_factor=config.BACKOFF_FACTOR if backoff_factor is None else backoff_factor,
        status_forcelist=RETRY_STATUSES,
        allowed_methods=["GET"],
    )
    adapter = HTTPAdapter(max_retries=retry_strategy)
    session.mount("http://", adapter)
    session.mount("https://", adapter)
    session.headers.update({"Accept": "application/json", "User-Agent": f"{config.TOOL_NAME}/{config.__version__}"})
    return session


def _timed_out(error: requests.ConnectionError) -> bool:
    # retried timeouts surface as ConnectionError(MaxRetryError(reason=...))
    reason = getattr(error.args[0], "reason", None) if error.args else None
    return isinstance(reason, (ReadTimeoutError, ConnectTimeoutError))


def parse_payload(payload, expected: int) -> List[int]:
    """Validate a decoded JSON body and return its byte values."""
    if not isinstance(payload, dict):
        raise MalformedResponse(f"Expected a JSON object, got {type(payload).__name__}")
    if payload.get("success") is False:
        raise MalformedResponse("Remote source reported success=false")
    data = payload.get("data")
    if not isinstance(data, list):
        raise MalformedResponse("Response has no 'data' array")
    if len(data) < expected:
        raise MalformedResponse(f"Requested {expected} bytes, received {len(data)}")
    for value in data[:expected]:
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= 255:
            raise MalformedResponse(f"Byte value out of range: {value!r}")
    return data[:expected]


class RemoteQrng:
    def __init__(self, endpoint: Optional[str] = None, timeout: Optional[float] = None,
                 session: Optional[requests.Session] = None):
        self.endpoint = endpoint or config.ENDPOINT
        self.timeout = config.REQUEST_TIMEOUT if timeout is None else timeout
        self.chunk_bytes = config.MAX_BYTES_PER_REQUEST
        self.session = session if session is not None else _create_session()

    def _request_chunk(self, length: int) -> List[int]:
        params = {"length": length, "type": "uint8"}
        try:
            response = self.session.get(self.endpoint, params=params, timeout=self.timeout)
            response.raise_for_status()
        except requests.Timeout as e:
            logger.error(f"Request to {self.endpoint} timed out after {self.timeout}s")
            raise RemoteTimeout(f"Timed out after {self.timeout}s: {str(e)}") from e
        except requests.ConnectionError as e:
            if _timed_out(e):
                logger.error(f"Request to {self.endpoint} timed out after {self.timeout}s")
                raise RemoteTimeout(f"Timed out after {self.timeout}s: {str(e)}") from e
            logger.error(f"Giving up on {self.endpoint}: {str(e)}")
            raise NetworkError(f"Failed to fetch random bytes: {str(e)}") from e
        except requests.RequestException as e:
            logger.error(f"Giving up on {self.endpoint}: {str(e)}")
            raise NetworkError(f"Failed to fetch random bytes: {str(e)}") from e

        try:
            payload = response.json()
        except ValueError as e:
            raise MalformedResponse(f"Response is not JSON: {str(e)}") from e
        return parse_payload(payload, length)

    def fetch_bytes(self, count: int) -> bytes:
        out = bytearray()
        while len(out) < count:
            length = min(self.chunk_bytes, count - len(out))
            out.extend(self._request_chunk(length))
            logger.debug(f"Fetched {len(out)}/{count} bytes")
        return bytes(out)

    def fetch_bits(self, n: int) -> BitSequence:
        if n < 0:
            raise ValueError("n must be non-negative")
        if n == 0:
            return BitSequence.empty()
        data = self.fetch_bytes(math.ceil(n / 8))
        logger.info(f"Fetched {n} bits from {self.endpoint}")
        return BitSequence.from_bits(np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=n))


def fetch_remote_bits(endpoint: Optional[str], n: int, timeout: Optional[float] = None,
                      session: Optional[requests.Session] = None) -> BitSequence:
    """Fetch exactly ``n`` bits; never pads or invents missing bits."""
    return RemoteQrng(endpoint, timeout, session=session).fetch_bits(n)
