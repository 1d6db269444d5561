"""
Numerical kernels for the randomness battery.

erfc follows the Cephes rational approximations; the regularized upper
incomplete gamma function uses the power series below x = a + 1 and a
Lentz continued fraction above it.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from bitstream import BitSequence
from errors import DomainError

logger = logging.getLogger(__name__)

MACHEP = 1.11022302462515654042e-16  # 2**-53
MAXLOG = 7.09782712893383996843e2  # log(2**1024)
FPMIN = 1e-300
IGAM_EPS = 1e-15
IGAM_MAX_ITER = 100000


def polevl(x: float, coef: Sequence[float]) -> float:
    """Evaluate C_N x^N + ... + C_0 with coef[0] = C_N."""
    result = 0.0
    for c in coef:
        result = result * x + c
    return result


# erfc for 1 <= |x| < 8
ZP = [
    2.46196981473530512524e-10,
    5.64189564831068821977e-1,
    7.46321056442269912687e0,
    4.86371970985681366614e1,
    1.96520832956077098242e2,
    5.26445194995477358631e2,
    9.34528527171957607540e2,
    1.02755188689515710272e3,
    5.57535335369399327526e2,
]
ZQ = [
    1.0,
    1.32281951154744992508e1,
    8.67072140885989742329e1,
    3.54937778887819891062e2,
    9.75708501743205489753e2,
    1.82390916687909736289e3,
    2.24633760818710981792e3,
    1.65666309194161350182e3,
    5.57535340817727675546e2,
]
# erfc for |x| >= 8
ZR = [
    5.64189583547755073984e-1,
    1.27536670759978104416e0,
    5.01905042251180477414e0,
    6.16021097993053585195e0,
    7.40974269950448939160e0,
    2.97886665372100240670e0,
]
ZS = [
    1.00000000000000000000e0,
    2.26052863220117276590e0,
    9.39603524938001434673e0,
    1.20489539808096656605e1,
    1.70814450747565897222e1,
    9.60896809063285878198e0,
    3.36907645100081516050e0,
]
# erf for |x| < 1
ZT = [
    9.60497373987051638749e0,
    9.00260197203842689217e1,
    2.23200534594684319226e3,
    7.00332514112805075473e3,
    5.55923013010394962768e4,
]
ZU = [
    1.00000000000000000000e0,
    3.35617141647503099647e1,
    5.21357949780152679795e2,
    4.59432382970980127987e3,
    2.26290000613890934246e4,
    4.92673942608635921086e4,
]


def _check_not_nan(x: float, name: str = "x") -> float:
    # infinities pass: the functions have exact limits there
    x = float(x)
    if math.isnan(x):
        raise DomainError(f"{name} must not be NaN")
    return x


def erf(x: float) -> float:
    x = _check_not_nan(x)
    if abs(x) > 1.0:
        return 1.0 - erfc(x)
    z = x * x
    return x * polevl(z, ZT) / polevl(z, ZU)


def erfc(x: float) -> float:
    """Complementary error function, result clamped to [0, 2]."""
    x = _check_not_nan(x)
    ax = abs(x)
    if ax < 1.0:
        return 1.0 - erf(x)

    z = -x * x
    if z < -MAXLOG:
        return 2.0 if x < 0 else 0.0
    z = math.exp(z)

    if ax < 8.0:
        y = z * polevl(ax, ZP) / polevl(ax, ZQ)
    else:
        y = z * polevl(ax, ZR) / polevl(ax, ZS)

    if x < 0:
        y = 2.0 - y
    return min(2.0, max(0.0, y))


def normal_cdf(x: float) -> float:
    """Standard normal CDF, Phi(x) = erfc(-x / sqrt(2)) / 2."""
    return 0.5 * erfc(-_check_not_nan(x) / math.sqrt(2.0))


def _igam_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series."""
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(IGAM_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * IGAM_EPS:
            break
    else:
        logger.warning(f"igam series did not converge for a={a}, x={x}")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _igamc_continued_fraction(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by modified Lentz."""
    b = x + 1.0 - a
    c = 1.0 / FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, IGAM_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < FPMIN:
            d = FPMIN
        c = b + an / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < IGAM_EPS:
            break
    else:
        logger.warning(f"igamc continued fraction did not converge for a={a}, x={x}")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def igamc_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x).

    Args:
        a: shape, strictly positive
        x: lower integration bound, non-negative

    Returns:
        Q(a, x) in [0, 1]
    """
    a = _check_not_nan(a, "a")
    x = _check_not_nan(x)
    if not 0.0 < a < math.inf:
        raise DomainError(f"igamc_q requires finite a > 0, got {a}")
    if x < 0.0:
        raise DomainError(f"igamc_q requires x >= 0, got {x}")
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        q = 1.0 - _igam_series(a, x)
    else:
        q = _igamc_continued_fraction(a, x)
    return min(1.0, max(0.0, q))


@dataclass(frozen=True)
class Gf2Matrix:
    """Binary matrix, one Python int per row; column j is bit (cols - 1 - j)."""

    rows: int
    cols: int
    row_bits: Tuple[int, ...]

    def __post_init__(self):
        if len(self.row_bits) != self.rows:
            raise ValueError(f"expected {self.rows} rows, got {len(self.row_bits)}")
        limit = 1 << self.cols
        if any(r < 0 or r >= limit for r in self.row_bits):
            raise ValueError(f"row value exceeds {self.cols} columns")

    @classmethod
    def from_array(cls, matrix) -> "Gf2Matrix":
        arr = np.asarray(matrix, dtype=np.uint8) % 2
        if arr.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        n_rows, n_cols = arr.shape
        weights = [1 << (n_cols - 1 - j) for j in range(n_cols)]
        row_bits = tuple(sum(w for w, b in zip(weights, row) if b) for row in arr.tolist())
        return cls(n_rows, n_cols, row_bits)

    @classmethod
    def from_bits(cls, bits: Union[BitSequence, np.ndarray], rows: int, cols: int) -> "Gf2Matrix":
        """Fill a rows x cols matrix row by row from the first rows*cols bits."""
        arr = bits.bits if isinstance(bits, BitSequence) else np.asarray(bits, dtype=np.uint8)
        return cls.from_array(arr[: rows * cols].reshape(rows, cols))

    @classmethod
    def identity(cls, n: int) -> "Gf2Matrix":
        return cls(n, n, tuple(1 << (n - 1 - i) for i in range(n)))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Gf2Matrix":
        return cls(rows, cols, (0,) * rows)

    def to_array(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=np.uint8)
        for i, r in enumerate(self.row_bits):
            for j in range(self.cols):
                out[i, j] = (r >> (self.cols - 1 - j)) & 1
        return out

    def transpose(self) -> "Gf2Matrix":
        return Gf2Matrix.from_array(self.to_array().T)


def rank_of_rows(row_bits: Sequence[int]) -> int:
    """GF(2) rank of rows given as ints, by forward elimination on leading bits."""
    pivots = {}
    rank = 0
    for row in row_bits:
        r = int(row)
        while r:
            lead = r.bit_length() - 1
            pivot = pivots.get(lead)
            if pivot is None:
                pivots[lead] = r
                rank += 1
                break
            r ^= pivot
    return rank


def gf2_rank(m: Gf2Matrix) -> int:
    return rank_of_rows(m.row_bits)


def _as_bit_array(seq: Union[BitSequence, np.ndarray, Sequence[int]]) -> np.ndarray:
    if isinstance(seq, BitSequence):
        return seq.bits
    return np.asarray(seq, dtype=np.uint8)


def berlekamp_massey(seq: Union[BitSequence, np.ndarray, Sequence[int]]) -> int:
    """Linear complexity: length of the shortest LFSR generating ``seq``.

    Works on the sequence packed into one integer (s_i at bit i) and keeps
    the products s*B and s*C updated incrementally, so every step is a
    handful of big-integer shifts and XORs instead of a discrepancy loop.
    """
    bits = _as_bit_array(seq)
    length = int(bits.size)
    if length == 0:
        return 0
    s = int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")
    sb, sc = s, s
    deg_c = 0
    m = 0
    for n in range(length):
        disc = sc & (1 << m)
        m += 1
        if disc:
            sc >>= m
            m = 0
            if 2 * deg_c <= n:
                sb, sc = sc, sb
                deg_c = n + 1 - deg_c
            sc ^= sb
    return deg_c
