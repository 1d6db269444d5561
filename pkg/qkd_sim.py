"""
Deterministic BB84 simulation.

Every phase takes an explicit seed and draws from its own numpy PCG64
generator, so a pipeline run is a pure function of its configuration and
master seed. Photon data is kept as parallel arrays; PhotonBatch hands out
PhotonRecord views on demand.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field

import config
from bitstream import BitSequence
from errors import KeyTooShort, LengthMismatch, NonPositiveOutputLength, SimulationError

logger = logging.getLogger(__name__)

MIN_ESTIMATION_BITS = 10
DENSE_PA_LIMIT = 1024
SEED_MASK = (1 << 64) - 1

PHASES = ("pumped", "received", "sifted", "after_estimation", "after_reconciliation", "after_pa")


class Basis(IntEnum):
    RECTILINEAR = 0
    DIAGONAL = 1


@dataclass(frozen=True)
class PhotonRecord:
    bit: int
    prep_basis: Basis
    lost: bool = False
    eve_measured_basis: Optional[Basis] = None


class InterceptResend(BaseModel):
    fraction: float = Field(default=1.0, ge=0.0, le=1.0, description="Share of photons Eve intercepts")


class ChannelConfig(BaseModel):
    flip_prob: float = Field(default=0.03, ge=0.0, le=1.0, description="Bit flip probability on matched bases")
    loss_prob: float = Field(default=0.0, ge=0.0, le=1.0, description="Photon loss probability")
    eve: Optional[InterceptResend] = Field(default=None, description="Eavesdropper model, None for no attack")


class ReconConfig(BaseModel):
    K: int = Field(default=16, ge=2, description="Initial block size in bits")
    N: int = Field(default=3, ge=1, description="Number of parity rounds")
    permute_between_rounds: bool = True
    schedule: Literal["halving", "doubling"] = "halving"
    cascade: bool = Field(default=False, description="Re-open earlier blocks after every correction")

    def block_size(self, round_index: int) -> int:
        if self.schedule == "halving":
            return max(2, self.K >> round_index)
        return self.K << round_index


@dataclass
class QberEstimate:
    E: float
    E_max: float
    sampled_bits: int
    abort: bool


@dataclass
class ReconResult:
    key: BitSequence
    corrected_errors: int
    leaked_bits: int


@dataclass(frozen=True)
class PaParams:
    L: int
    M: int
    s: int

    @property
    def output_length(self) -> int:
        return self.L - self.M - self.s


@dataclass
class PhotonBatch:
    """Sender-side photons as parallel arrays."""

    bits: np.ndarray
    prep_bases: np.ndarray

    def __len__(self) -> int:
        return int(self.bits.size)

    def __getitem__(self, i: int) -> PhotonRecord:
        return PhotonRecord(int(self.bits[i]), Basis(int(self.prep_bases[i])))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass
class Measurement:
    receiver_bits: BitSequence
    receiver_bases: np.ndarray
    received_mask: np.ndarray
    # -1 where Eve did not intercept
    eve_bases: np.ndarray

    def records(self, photons: PhotonBatch) -> List[PhotonRecord]:
        """Sender photons annotated with the channel events they went through."""
        out = []
        for i in range(len(photons)):
            eve = int(self.eve_bases[i])
            out.append(
                PhotonRecord(
                    bit=int(photons.bits[i]),
                    prep_basis=Basis(int(photons.prep_bases[i])),
                    lost=not bool(self.received_mask[i]),
                    eve_measured_basis=None if eve < 0 else Basis(eve),
                )
            )
        return out


@dataclass
class RoundRecord:
    round_index: int
    counts: Dict[str, int]
    qber: Optional[QberEstimate]
    corrected_errors: int
    leaked_bits: int
    residual_errors: int
    aborted: bool
    abort_reason: Optional[str]
    keys_match: bool
    alice_key: BitSequence
    bob_key: BitSequence
    seeds: Dict[str, int]


@dataclass
class PipelineReport:
    rounds: List[RoundRecord] = field(default_factory=list)
    master_seed: int = 0

    def attrition_rows(self) -> List[Tuple[int, str, int]]:
        return [(r.round_index, phase, r.counts[phase]) for r in self.rounds for phase in PHASES]


def derive_seed(master_seed: int, *path: int) -> int:
    """64-bit child seed for ``path`` under ``master_seed``."""
    words = [int(master_seed) & SEED_MASK, *[int(p) & SEED_MASK for p in path]]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


def _bit_array(key) -> np.ndarray:
    if isinstance(key, BitSequence):
        return key.bits
    return np.asarray(key, dtype=np.uint8)


def generate_photons(n: int, seed: int) -> PhotonBatch:
    """Sender bits and preparation bases, i.i.d. uniform."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    return PhotonBatch(bits, bases)


def transmit_and_measure(
    photons: PhotonBatch,
    channel: ChannelConfig,
    receiver_seed: int,
    receiver_bases: Optional[Sequence[int]] = None,
) -> Measurement:
    """Send photons through the channel and measure them at the receiver.

    Loss is applied first, then the intercept-resend attack on surviving
    photons, then the receiver's measurement. A matched-basis measurement
    returns the arriving bit XOR a flip_prob Bernoulli; a mismatched one a
    uniform bit. ``receiver_bases`` overrides the receiver's random choice.
    """
    n = len(photons)
    rng = np.random.default_rng(receiver_seed)

    # Every draw happens unconditionally so the stream layout is config independent
    lost = rng.random(n) < channel.loss_prob
    fraction = channel.eve.fraction if channel.eve is not None else 0.0
    intercepted = (rng.random(n) < fraction) & ~lost
    eve_bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    eve_guess = rng.integers(0, 2, size=n, dtype=np.uint8)
    drawn_bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    bob_guess = rng.integers(0, 2, size=n, dtype=np.uint8)
    flips = (rng.random(n) < channel.flip_prob).astype(np.uint8)

    if receiver_bases is not None:
        bob_bases = np.asarray(receiver_bases, dtype=np.uint8)
        if bob_bases.size != n:
            raise LengthMismatch(f"{bob_bases.size} receiver bases for {n} photons")
    else:
        bob_bases = drawn_bases

    eve_bits = np.where(eve_bases == photons.prep_bases, photons.bits, eve_guess)
    arriving_bits = np.where(intercepted, eve_bits, photons.bits)
    arriving_bases = np.where(intercepted, eve_bases, photons.prep_bases)

    measured = np.where(bob_bases == arriving_bases, arriving_bits ^ flips, bob_guess).astype(np.uint8)
    measured[lost] = 0

    return Measurement(
        receiver_bits=BitSequence.from_bits(measured),
        receiver_bases=bob_bases,
        received_mask=~lost,
        eve_bases=np.where(intercepted, eve_bases.astype(np.int8), np.int8(-1)),
    )


def sift(prep_bases, receiver_bases, sender_bits, receiver_bits, received_mask) -> Tuple[BitSequence, BitSequence]:
    """Keep the positions that were received and measured in the preparation basis."""
    prep = np.asarray(prep_bases, dtype=np.uint8)
    recv = np.asarray(receiver_bases, dtype=np.uint8)
    alice = _bit_array(sender_bits)
    bob = _bit_array(receiver_bits)
    mask = np.asarray(received_mask, dtype=bool)
    sizes = {prep.size, recv.size, alice.size, bob.size, mask.size}
    if len(sizes) != 1:
        raise LengthMismatch(
            f"sift inputs differ in length: bases {prep.size}/{recv.size}, "
            f"bits {alice.size}/{bob.size}, mask {mask.size}"
        )
    keep = mask & (prep == recv)
    return BitSequence.from_bits(alice[keep]), BitSequence.from_bits(bob[keep])


def estimate_qber(
    alice_raw: BitSequence,
    bob_raw: BitSequence,
    sample_fraction: float,
    E_max: float,
    seed: int,
) -> Tuple[QberEstimate, BitSequence, BitSequence]:
    """Sacrifice a random sample of positions to estimate the error rate."""
    if len(alice_raw) != len(bob_raw):
        raise LengthMismatch(f"raw keys differ in length: {len(alice_raw)} vs {len(bob_raw)}")
    if not 0.0 < sample_fraction < 1.0:
        raise ValueError("sample_fraction must lie in (0, 1)")
    length = len(alice_raw)
    if length < MIN_ESTIMATION_BITS:
        raise KeyTooShort(f"error estimation needs {MIN_ESTIMATION_BITS} bits, got {length}")

    size = int(math.floor(sample_fraction * length + 0.5))
    rng = np.random.default_rng(seed)
    positions = rng.choice(length, size=size, replace=False)

    alice = alice_raw.bits
    bob = bob_raw.bits
    mismatches = int(np.count_nonzero(alice[positions] != bob[positions]))
    error_rate = mismatches / size if size else 0.0

    keep = np.ones(length, dtype=bool)
    keep[positions] = False
    estimate = QberEstimate(E=error_rate, E_max=E_max, sampled_bits=size, abort=error_rate > E_max)
    logger.debug(f"QBER {error_rate:.4f} on {size} sampled bits (E_max {E_max})")
    return estimate, BitSequence.from_bits(alice[keep]), BitSequence.from_bits(bob[keep])


class _ParityExchange:
    """Bookkeeping for one reconciliation run; Bob's key is corrected in place."""

    def __init__(self, alice: np.ndarray, bob: np.ndarray):
        self.alice = alice
        self.bob = bob
        self.length = alice.size
        self.leaked = 0
        self.corrected = 0
        # per round: (permutation, inverse permutation, block size)
        self.rounds: List[Tuple[np.ndarray, np.ndarray, int]] = []

    def block_range(self, round_index: int, block: int) -> np.ndarray:
        perm, _, size = self.rounds[round_index]
        return perm[block * size:(block + 1) * size]

    def mismatch(self, idx: np.ndarray) -> bool:
        return bool((int(self.alice[idx].sum()) ^ int(self.bob[idx].sum())) & 1)

    def bisect(self, idx: np.ndarray) -> int:
        """Binary search for one error in a block of odd parity difference."""
        lo, hi = 0, idx.size
        while hi - lo > 1:
            mid = (lo + hi) // 2
            self.leaked += 1
            if self.mismatch(idx[lo:mid]):
                hi = mid
            else:
                lo = mid
        position = int(idx[lo])
        self.bob[position] ^= 1
        self.corrected += 1
        return position

    def cascade(self, position: int, current_round: int, current_block: int) -> None:
        """Re-open blocks containing ``position`` whose parities are already known."""
        stack = [(position, current_round)]
        while stack:
            pos, fixed_in = stack.pop()
            for r in range(current_round + 1):
                if r == fixed_in:
                    continue
                _, inverse, size = self.rounds[r]
                block = int(inverse[pos]) // size
                if r == current_round and block > current_block:
                    continue
                idx = self.block_range(r, block)
                if self.mismatch(idx):
                    stack.append((self.bisect(idx), r))


def reconcile(
    alice_rem: BitSequence,
    bob_rem: BitSequence,
    cfg: ReconConfig,
    seed: int,
) -> Tuple[ReconResult, ReconResult]:
    """Parity-block reconciliation over ``cfg.N`` rounds.

    Each round optionally applies the same seeded permutation to both keys,
    splits them into blocks, and discloses Alice's block parities. Blocks
    whose parities differ are bisected and the located bit is flipped on
    Bob's side. Every disclosed parity counts one leaked bit.
    """
    if len(alice_rem) != len(bob_rem):
        raise LengthMismatch(f"keys differ in length: {len(alice_rem)} vs {len(bob_rem)}")
    length = len(alice_rem)
    if length == 0:
        empty = BitSequence.empty()
        return ReconResult(empty, 0, 0), ReconResult(empty, 0, 0)

    rng = np.random.default_rng(seed)
    exchange = _ParityExchange(alice_rem.bits.copy(), bob_rem.bits.copy())

    for r in range(cfg.N):
        if r > 0 and cfg.permute_between_rounds:
            perm = rng.permutation(length)
        else:
            perm = np.arange(length)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(length)
        size = cfg.block_size(r)
        exchange.rounds.append((perm, inverse, size))

        for block in range(-(-length // size)):
            idx = exchange.block_range(r, block)
            exchange.leaked += 1
            if exchange.mismatch(idx):
                position = exchange.bisect(idx)
                if cfg.cascade:
                    exchange.cascade(position, r, block)

        logger.debug(
            f"Reconciliation round {r + 1}/{cfg.N}: block size {size}, "
            f"{exchange.corrected} corrected, {exchange.leaked} parities leaked"
        )

    alice_key = BitSequence.from_bits(exchange.alice)
    bob_key = BitSequence.from_bits(exchange.bob)
    return (
        ReconResult(alice_key, exchange.corrected, exchange.leaked),
        ReconResult(bob_key, exchange.corrected, exchange.leaked),
    )


def toeplitz_seed_bits(rows: int, cols: int, seed: int) -> np.ndarray:
    """The rows + cols - 1 bits defining T[i, j] = t[i - j + cols - 1]."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=rows + cols - 1, dtype=np.uint8)


def _toeplitz_dense(t: np.ndarray, x: np.ndarray, rows: int) -> np.ndarray:
    cols = x.size
    matrix = scipy.linalg.toeplitz(t[cols - 1:], t[cols - 1::-1]).astype(np.int64)
    return (matrix @ x.astype(np.int64) % 2).astype(np.uint8)


def _toeplitz_fft(t: np.ndarray, x: np.ndarray, rows: int) -> np.ndarray:
    # y_i = sum_j t[i - j + cols - 1] x_j is entry i + cols - 1 of the full convolution
    cols = x.size
    n_fft = 1 << int(math.ceil(math.log2(t.size + cols - 1)))
    conv = np.fft.irfft(np.fft.rfft(t.astype(np.float64), n_fft) * np.fft.rfft(x.astype(np.float64), n_fft), n_fft)
    window = conv[cols - 1:cols - 1 + rows]
    return (np.rint(window).astype(np.int64) % 2).astype(np.uint8)


def privacy_amplify(key: BitSequence, params: PaParams, seed: int) -> BitSequence:
    """Compress ``key`` to L - M - s bits with a seeded random Toeplitz hash."""
    if params.L != len(key):
        raise ValueError(f"params.L={params.L} does not match key length {len(key)}")
    rows = params.output_length
    if rows < 1:
        raise NonPositiveOutputLength(
            f"L - M - s = {params.L} - {params.M} - {params.s} = {rows} leaves no key"
        )
    t = toeplitz_seed_bits(rows, params.L, seed)
    x = key.bits
    if params.L <= DENSE_PA_LIMIT:
        out = _toeplitz_dense(t, x, rows)
    else:
        out = _toeplitz_fft(t, x, rows)
    return BitSequence.from_bits(out)


def _empty_round(round_index: int, counts: Dict[str, int], seeds: Dict[str, int], reason: str,
                 qber: Optional[QberEstimate] = None, corrected: int = 0, leaked: int = 0,
                 residual: int = 0) -> RoundRecord:
    for phase in PHASES:
        counts.setdefault(phase, 0)
    return RoundRecord(
        round_index=round_index,
        counts=counts,
        qber=qber,
        corrected_errors=corrected,
        leaked_bits=leaked,
        residual_errors=residual,
        aborted=True,
        abort_reason=reason,
        keys_match=False,
        alice_key=BitSequence.empty(),
        bob_key=BitSequence.empty(),
        seeds=seeds,
    )


def run_round(
    round_index: int,
    photons_per_round: int,
    channel: ChannelConfig,
    recon_cfg: ReconConfig,
    E_max: float,
    sample_fraction: float,
    s: int,
    master_seed: int,
) -> RoundRecord:
    seeds = {
        phase: derive_seed(master_seed, round_index, tag)
        for tag, phase in enumerate(("photons", "channel", "estimation", "reconciliation", "privacy"))
    }
    photons = generate_photons(photons_per_round, seeds["photons"])
    measurement = transmit_and_measure(photons, channel, seeds["channel"])
    alice_raw, bob_raw = sift(
        photons.prep_bases, measurement.receiver_bases, photons.bits,
        measurement.receiver_bits, measurement.received_mask,
    )
    counts = {
        "pumped": photons_per_round,
        "received": int(measurement.received_mask.sum()),
        "sifted": len(alice_raw),
    }

    if len(alice_raw) < MIN_ESTIMATION_BITS:
        return _empty_round(round_index, counts, seeds, "key too short for error estimation")

    qber, alice_rem, bob_rem = estimate_qber(alice_raw, bob_raw, sample_fraction, E_max, seeds["estimation"])
    counts["after_estimation"] = len(alice_rem)
    if qber.abort:
        logger.warning(f"Round {round_index}: QBER {qber.E:.4f} exceeds E_max {E_max}, aborting")
        return _empty_round(round_index, counts, seeds, "QBER above threshold", qber=qber)

    alice_rec, bob_rec = reconcile(alice_rem, bob_rem, recon_cfg, seeds["reconciliation"])
    counts["after_reconciliation"] = len(alice_rec.key)
    residual = int(np.count_nonzero(alice_rec.key.bits != bob_rec.key.bits))

    params = PaParams(L=len(alice_rec.key), M=alice_rec.leaked_bits, s=s)
    if params.output_length < 1:
        logger.warning(f"Round {round_index}: privacy amplification leaves {params.output_length} bits")
        return _empty_round(
            round_index, counts, seeds, "privacy amplification leaves no key", qber=qber,
            corrected=alice_rec.corrected_errors, leaked=alice_rec.leaked_bits, residual=residual,
        )

    alice_key = privacy_amplify(alice_rec.key, params, seeds["privacy"])
    bob_key = privacy_amplify(bob_rec.key, params, seeds["privacy"])
    counts["after_pa"] = len(alice_key)

    return RoundRecord(
        round_index=round_index,
        counts=counts,
        qber=qber,
        corrected_errors=alice_rec.corrected_errors,
        leaked_bits=alice_rec.leaked_bits,
        residual_errors=residual,
        aborted=False,
        abort_reason=None,
        keys_match=alice_key == bob_key,
        alice_key=alice_key,
        bob_key=bob_key,
        seeds=seeds,
    )


def run_pipeline(
    rounds: int,
    photons_per_round: int,
    channel: ChannelConfig,
    recon_cfg: ReconConfig,
    E_max: float = config.DEFAULT_E_MAX,
    sample_fraction: float = config.DEFAULT_SAMPLE_FRACTION,
    s: int = config.DEFAULT_SECURITY_BITS,
    master_seed: int = 0,
) -> PipelineReport:
    """Run every BB84 phase for ``rounds`` rounds.

    M in L - M - s is the number of parities disclosed by reconciliation; the
    estimation sample is already removed from the key and is not subtracted
    again.
    """
    if rounds < 1:
        raise SimulationError("rounds must be at least 1")
    if photons_per_round < 0:
        raise SimulationError("photons_per_round must be non-negative")

    report = PipelineReport(master_seed=master_seed)
    for round_index in range(1, rounds + 1):
        record = run_round(
            round_index, photons_per_round, channel, recon_cfg, E_max, sample_fraction, s, master_seed
        )
        logger.info(
            f"Round {round_index}: "
            + ", ".join(f"{phase}={record.counts[phase]}" for phase in PHASES)
            + (f" (aborted: {record.abort_reason})" if record.aborted else "")
        )
        report.rounds.append(record)
    return report


def run_sweep(
    photon_counts: Sequence[int],
    rounds: int,
    channel: ChannelConfig,
    recon_cfg: ReconConfig,
    E_max: float = config.DEFAULT_E_MAX,
    sample_fraction: float = config.DEFAULT_SAMPLE_FRACTION,
    s: int = config.DEFAULT_SECURITY_BITS,
    master_seed: int = 0,
) -> List[PipelineReport]:
    """One pipeline run per pumped photon count, seeds derived from (master_seed, count)."""
    reports = []
    for count in photon_counts:
        seed = derive_seed(master_seed, count)
        logger.info(f"Sweep: {count} photons per round (seed {seed})")
        reports.append(run_pipeline(rounds, count, channel, recon_cfg, E_max, sample_fraction, s, seed))
    return reports
