"""Words over d noncommuting generators, ordered by (length, lexicographic)."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

DEFAULT_WORD_CAP = 10_000


@dataclass(frozen=True, order=True)
class Word:
    """A finite word over generators 1..d; the empty word is the neutral element."""

    letters: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if any(i < 1 for i in self.letters):
            raise ValueError(f"generator indices must be >= 1, got {self.letters}")

    def __len__(self) -> int:
        return len(self.letters)

    def __add__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters)

    def append(self, letter: int) -> "Word":
        return Word(self.letters + (letter,))

    def reverse(self) -> "Word":
        return Word(self.letters[::-1])

    @staticmethod
    def power(m: int) -> "Word":
        """The length-m word of the single generator (d = 1 shorthand)."""
        return Word((1,) * m)

    def __str__(self) -> str:
        return "".join(map(str, self.letters)) if self.letters else "e"


EMPTY_WORD = Word()


def word_count(d: int, max_len: int) -> int:
    """Number of words of length <= max_len over d generators."""
    if d == 1:
        return max_len + 1
    return (d ** (max_len + 1) - 1) // (d - 1)


def enumerate_words(d: int, max_len: int, cap: int = DEFAULT_WORD_CAP) -> list[Word]:
    """All words of length <= max_len, ordered by (length, lexicographic).

    The first element is the empty word.  Raises if the total count exceeds
    `cap` (word counts grow like d**max_len).
    """
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    if max_len < 0:
        raise ValueError(f"need max_len >= 0, got {max_len}")
    total = word_count(d, max_len)
    if total > cap:
        raise ValueError(
            f"word count {total} for d={d}, max_len={max_len} exceeds cap {cap}"
        )
    out = [EMPTY_WORD]
    for length in range(1, max_len + 1):
        out.extend(Word(ls) for ls in product(range(1, d + 1), repeat=length))
    return out
