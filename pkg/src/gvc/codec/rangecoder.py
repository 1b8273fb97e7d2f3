"""Multi-symbol range coder with carry propagation.

32-bit range, byte-wise renormalization below 2**24 and a one-byte cache
with a pending-0xFF counter to resolve carries (the scheme used by the 7-Zip
PPMd/LZMA coders). Model totals are limited to 2**16 so ``range // total``
never drops below 256.

The encoder emits exactly one byte per renormalization plus five flush
bytes, and the decoder consumes the same count, so a truncated stream is
always detected as a read past the end.
"""

from __future__ import annotations

import math
from itertools import accumulate
from typing import Iterable, Sequence

from ..errors import ParseError

TOP = 1 << 24
MAX_TOTAL = 1 << 16
_MASK32 = 0xFFFFFFFF


class FrequencyModel:
    """Static integer frequency table over symbols ``0..len(freqs)-1``."""

    def __init__(self, freqs: Sequence[int]):
        freqs = [int(f) for f in freqs]
        if not freqs:
            raise ValueError("empty alphabet")
        if min(freqs) < 0:
            raise ValueError("negative frequency")
        total = sum(freqs)
        if total <= 0 or total > MAX_TOTAL:
            raise ValueError(f"model total {total} outside (0, {MAX_TOTAL}]")
        self.freqs = freqs
        self.cum = [0, *accumulate(freqs)]
        self.total = total

    @classmethod
    def from_probabilities(cls, probs: Sequence[float], total: int = MAX_TOTAL) -> "FrequencyModel":
        """Fixed-point quantization keeping every symbol codable (frequency >= 1)."""
        raw = [max(1, int(round(p * total))) for p in probs]
        # shave the largest bins until the table fits
        while sum(raw) > total:
            raw[raw.index(max(raw))] -= 1
        return cls(raw)

    def __len__(self) -> int:
        return len(self.freqs)

    def interval(self, symbol: int) -> tuple[int, int]:
        if not 0 <= symbol < len(self.freqs) or self.freqs[symbol] == 0:
            raise ValueError(f"symbol {symbol} not codable under this model")
        return self.cum[symbol], self.freqs[symbol]

    def lookup(self, target: int) -> int:
        # bisect over the cumulative table
        lo, hi = 0, len(self.freqs)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.cum[mid] <= target:
                lo = mid
            else:
                hi = mid
        return lo

    def update(self, symbol: int) -> None:
        pass

    def cost_bits(self, symbol: int) -> float:
        _, f = self.interval(symbol)
        return -math.log2(f / self.total)


class AdaptiveModel(FrequencyModel):
    """Frequency table that learns from the symbols it codes.

    Every symbol starts at count 1; each coded symbol adds ``increment``
    and the table is halved (rounding up) when the total would exceed
    ``limit``. Encoder and decoder apply identical updates.
    """

    def __init__(self, alphabet_size: int, increment: int = 24, limit: int = MAX_TOTAL):
        if limit > MAX_TOTAL:
            raise ValueError("limit above coder precision")
        super().__init__([1] * alphabet_size)
        self.increment = increment
        self.limit = limit

    def update(self, symbol: int) -> None:
        self.freqs[symbol] += self.increment
        self.total += self.increment
        if self.total > self.limit:
            self.freqs = [(f + 1) // 2 for f in self.freqs]
            self.total = sum(self.freqs)
        self.cum = [0, *accumulate(self.freqs)]


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()
        self._done = False

    def _shift_low(self) -> None:
        if (self.low & _MASK32) < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            temp = self._cache
            while True:
                self._out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if self._cache_size == 0:
                    break
            self._cache = (self.low >> 24) & 0xFF
        self._cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def encode_interval(self, start: int, size: int, total: int) -> None:
        r = self.range // total
        self.low += r * start
        self.range = r * size
        while self.range < TOP:
            self.range <<= 8
            self._shift_low()

    def encode(self, model: FrequencyModel, symbol: int) -> None:
        start, size = model.interval(symbol)
        self.encode_interval(start, size, model.total)
        model.update(symbol)

    def encode_bits(self, value: int, nbits: int) -> None:
        """Write ``nbits`` equiprobable bits, at most 16 per interval."""
        if value < 0 or value >> nbits:
            raise ValueError(f"{value} does not fit in {nbits} bits")
        while nbits > 0:
            take = min(nbits, 16)
            nbits -= take
            self.encode_interval((value >> nbits) & ((1 << take) - 1), 1, 1 << take)

    def finish(self) -> bytes:
        if not self._done:
            for _ in range(5):
                self._shift_low()
            self._done = True
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes, offset: int = 0):
        self._data = data
        self._pos = offset
        self.range = _MASK32
        self.code = 0
        for _ in range(5):
            self.code = ((self.code << 8) | self._next_byte()) & _MASK32

    def _next_byte(self) -> int:
        if self._pos >= len(self._data):
            raise ParseError("range-coded stream truncated", self._pos)
        b = self._data[self._pos]
        self._pos += 1
        return b

    @property
    def position(self) -> int:
        return self._pos

    def _target(self, total: int) -> int:
        self.range //= total
        v = self.code // self.range
        if v >= total:
            raise ParseError("corrupt range-coded stream", self._pos)
        return v

    def _consume(self, start: int, size: int) -> None:
        self.code -= start * self.range
        self.range *= size
        while self.range < TOP:
            self.code = ((self.code << 8) | self._next_byte()) & _MASK32
            self.range <<= 8

    def decode(self, model: FrequencyModel) -> int:
        v = self._target(model.total)
        s = model.lookup(v)
        start, size = model.cum[s], model.freqs[s]
        self._consume(start, size)
        model.update(s)
        return s

    def decode_bits(self, nbits: int) -> int:
        value = 0
        while nbits > 0:
            take = min(nbits, 16)
            nbits -= take
            v = self._target(1 << take)
            self._consume(v, 1)
            value = (value << take) | v
        return value


def range_encode(symbols: Iterable[int], model: FrequencyModel) -> bytes:
    enc = RangeEncoder()
    for s in symbols:
        enc.encode(model, s)
    return enc.finish()


def range_decode(data: bytes, model: FrequencyModel, n: int) -> list[int]:
    dec = RangeDecoder(data)
    out = [dec.decode(model) for _ in range(n)]
    if dec.position != len(data):
        raise ParseError(f"{len(data) - dec.position} unread bytes after {n} symbols", dec.position)
    return out


def ideal_code_length_bits(symbols: Iterable[int], model: FrequencyModel) -> float:
    """Shannon code length of ``symbols`` under a static ``model``."""
    return sum(model.cost_bits(s) for s in symbols)
