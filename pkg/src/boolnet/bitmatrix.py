"""Bit-packed binary matrices.

A BitMatrix stores a (samples x signals) 0/1 matrix packed into 64-bit
words, sample-major: row s holds all signals of sample s, signal i living
in bit (i % 64) of word (i // 64). Padding bits past the last signal are
always zero, so word-level population counts are safe.
"""

from __future__ import annotations

import numpy as np

from .errors import StructuralError

WORD_BITS = 64


def _words_needed(n_bits: int) -> int:
    return (n_bits + WORD_BITS - 1) // WORD_BITS


def _pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a 2-D uint8 0/1 array along axis 1 into uint64 words."""
    n, m = bits.shape
    padded = m + (-m) % WORD_BITS
    if padded != m:
        tmp = np.zeros((n, padded), dtype=np.uint8)
        tmp[:, :m] = bits
        bits = tmp
    packed = np.packbits(bits, axis=1, bitorder="little")
    # packbits preserves the input's memory order; the uint64 view needs a
    # contiguous last axis.
    return np.ascontiguousarray(packed).view(np.uint64)


def _unpack_rows(words: np.ndarray, n_bits: int) -> np.ndarray:
    raw = np.unpackbits(words.view(np.uint8), axis=1, bitorder="little")
    return raw[:, :n_bits]


class BitMatrix:
    """Immutable bit-packed (samples x signals) binary matrix."""

    __slots__ = ("words", "n_signals")

    def __init__(self, words: np.ndarray, n_signals: int):
        if words.ndim != 2 or words.dtype != np.uint64:
            raise StructuralError("BitMatrix needs a 2-D uint64 word array")
        if words.shape[1] != _words_needed(n_signals):
            raise StructuralError(
                f"word array has {words.shape[1]} columns, "
                f"{_words_needed(n_signals)} needed for {n_signals} signals"
            )
        self.words = words
        self.n_signals = n_signals
        self.words.flags.writeable = False

    @property
    def n_samples(self) -> int:
        return self.words.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_samples, self.n_signals)

    @classmethod
    def from_array(cls, arr) -> "BitMatrix":
        """Build from any 2-D array of 0/1 (or boolean) values."""
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise StructuralError("expected a 2-D array of bits")
        bits = (arr != 0).astype(np.uint8)
        return cls(_pack_rows(bits), arr.shape[1])

    @classmethod
    def zeros(cls, n_samples: int, n_signals: int) -> "BitMatrix":
        words = np.zeros((n_samples, _words_needed(n_signals)), dtype=np.uint64)
        return cls(words, n_signals)

    def to_array(self) -> np.ndarray:
        """Unpack to a (samples x signals) uint8 array."""
        return _unpack_rows(self.words, self.n_signals)

    def take_rows(self, index) -> "BitMatrix":
        return BitMatrix(self.words[np.asarray(index)].copy(), self.n_signals)

    def row_range(self, lo: int, hi: int) -> "BitMatrix":
        return BitMatrix(self.words[lo:hi].copy(), self.n_signals)

    def to_signal_words(self) -> np.ndarray:
        """Transpose-pack: (signals x words-over-samples) uint64.

        Row i holds the bits of signal i across all samples, which is the
        layout word-parallel circuit evaluation wants.
        """
        bits = self.to_array()
        return _pack_rows(np.ascontiguousarray(bits.T))

    @classmethod
    def from_signal_words(
        cls, sig_words: np.ndarray, n_samples: int
    ) -> "BitMatrix":
        """Inverse of :meth:`to_signal_words`."""
        bits = _unpack_rows(sig_words, n_samples)
        return cls.from_array(bits.T)

    @staticmethod
    def vstack(parts: list["BitMatrix"]) -> "BitMatrix":
        if not parts:
            raise StructuralError("vstack of zero BitMatrix parts")
        widths = {p.n_signals for p in parts}
        if len(widths) != 1:
            raise StructuralError(f"signal widths differ: {sorted(widths)}")
        return BitMatrix(
            np.concatenate([p.words for p in parts], axis=0),
            parts[0].n_signals,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.n_signals == other.n_signals and np.array_equal(
            self.words, other.words
        )

    def __hash__(self):
        return hash((self.n_signals, self.words.tobytes()))

    def __repr__(self) -> str:
        return f"BitMatrix({self.n_samples}x{self.n_signals})"
