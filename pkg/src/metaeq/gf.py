"""GF(2^8) arithmetic and a shortened Reed-Solomon [17, 15] codec.

The field uses the primitive polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11D)
with generator alpha = 0x02. The code is the (255, 253) narrow-sense RS code
with generator roots {alpha, alpha^2}, shortened to 17 bytes by treating the
leading 238 message bytes as zero. It corrects any single byte error.

Bits are packed most-significant-bit first within each byte.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

PRIM_POLY = 0x11D
FIELD_SIZE = 256
RS_N = 17
RS_K = 15
RS_PARITY = RS_N - RS_K
MESSAGE_BITS = 8 * RS_K
CODEWORD_BITS = 8 * RS_N


def _build_tables():
    exp = [0] * 512
    log = [0] * FIELD_SIZE
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIM_POLY
    for i in range(255, 512):
        exp[i] = exp[i - 255]
    return exp, log


GF_EXP, GF_LOG = _build_tables()


def gf_add(a: int, b: int) -> int:
    return a ^ b


def gf_mul(a: int, b: int) -> int:
    """Multiply two field elements."""
    if a == 0 or b == 0:
        return 0
    return GF_EXP[GF_LOG[a] + GF_LOG[b]]


def gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(2^8)")
    if a == 0:
        return 0
    return GF_EXP[(GF_LOG[a] - GF_LOG[b]) % 255]


def gf_pow(a: int, n: int) -> int:
    if a == 0:
        return 0 if n > 0 else 1
    return GF_EXP[(GF_LOG[a] * n) % 255]


def gf_mul_slow(a: int, b: int) -> int:
    """Carry-less multiply with explicit reduction; independent of the tables."""
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a & 0x100:
            a ^= PRIM_POLY
    return out


def poly_eval(coeffs: Sequence[int], x: int) -> int:
    """Horner evaluation, coefficients highest degree first."""
    y = 0
    for c in coeffs:
        y = gf_mul(y, x) ^ c
    return y


# g(x) = (x - a)(x - a^2) = x^2 + (a + a^2) x + a^3
_ALPHA = 2
_G1 = gf_pow(_ALPHA, 1) ^ gf_pow(_ALPHA, 2)
_G0 = gf_pow(_ALPHA, 3)
GENERATOR = (1, _G1, _G0)


@dataclass(frozen=True)
class DecodeOutcome:
    success: bool
    message: Optional[bytes] = None
    corrected_symbols: int = 0

    def __post_init__(self):
        if not self.success and self.message is not None:
            raise ValueError("failed decode cannot carry a message")


def _as_symbols(data, length: int, what: str) -> list:
    symbols = [int(v) for v in data]
    if len(symbols) != length:
        raise ValueError(f"{what} must have {length} symbols, got {len(symbols)}")
    if any(v < 0 or v > 255 for v in symbols):
        raise ValueError(f"{what} symbols must lie in [0, 255]")
    return symbols


def rs_encode(message) -> bytes:
    """Systematic encoding: 15 data bytes followed by 2 parity bytes."""
    msg = _as_symbols(message, RS_K, "message")
    # remainder of m(x) * x^2 divided by g(x)
    r1 = r0 = 0
    for m in msg:
        fb = m ^ r1
        r1 = r0 ^ gf_mul(fb, _G1)
        r0 = gf_mul(fb, _G0)
    return bytes(msg + [r1, r0])


def syndromes(received) -> tuple:
    """Return (S1, S2) = (r(alpha), r(alpha^2)); both zero for a codeword."""
    r = _as_symbols(received, RS_N, "received word")
    return poly_eval(r, gf_pow(_ALPHA, 1)), poly_eval(r, gf_pow(_ALPHA, 2))


def rs_decode(received) -> DecodeOutcome:
    """Correct up to one byte error; report failure otherwise.

    Byte k of the word is the coefficient of x^(16 - k), so an error there has
    locator alpha^(16 - k). Locators outside the shortened support, or
    syndromes where exactly one of S1, S2 vanishes, mean more than one error.
    """
    r = _as_symbols(received, RS_N, "received word")
    s1, s2 = syndromes(r)
    if s1 == 0 and s2 == 0:
        return DecodeOutcome(True, bytes(r[:RS_K]), 0)
    if s1 == 0 or s2 == 0:
        return DecodeOutcome(False)
    locator = gf_div(s2, s1)
    power = GF_LOG[locator]
    if power >= RS_N:
        return DecodeOutcome(False)
    magnitude = gf_div(gf_mul(s1, s1), s2)
    r[RS_N - 1 - power] ^= magnitude
    return DecodeOutcome(True, bytes(r[:RS_K]), 1)


def pack_bits(bits) -> bytes:
    """Pack a 0/1 sequence into bytes, MSB first."""
    arr = np.asarray(bits, dtype=np.int64).ravel()
    if arr.size % 8:
        raise ValueError(f"bit length {arr.size} is not a multiple of 8")
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError("bits must be 0 or 1")
    return np.packbits(arr.astype(np.uint8), bitorder="big").tobytes()


def unpack_bits(data) -> np.ndarray:
    """Inverse of :func:`pack_bits`."""
    raw = np.frombuffer(bytes(data), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="big").astype(np.int8)
