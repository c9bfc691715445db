"""Fixed-grid token codec for monophonic 4/4 measures.

Each beat is cut into 6 uneven ticks at offsets {0, 1/4, 1/3, 1/2, 2/3, 3/4}
of a beat -- the union of the sixteenth grid and the eighth-triplet grid --
so a 4/4 measure is a row of 24 ticks.  A tick holds the pitch token of the
note starting there ("rest" counts as a note); every other tick holds the
continuation token "__", meaning the previous note is still sounding.  Notes
may extend across barlines: the following measure then simply begins with
continuation tokens.

Tick durations are the successive offset differences, the last tick running
to the next beat: (1/4, 1/12, 1/6, 1/6, 1/12, 1/4).  The exact offset set is
the unique six-point union of the two sub-grids; decode relies on it to
reconstruct durations.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator

CONTINUATION = "__"
REST = "rest"

Score = list[list["NoteEvent"]]


class CodecError(ValueError):
    pass


class OffGridOnset(CodecError):
    """An onset or note end does not land on any tick of the grid."""


class OverlappingEvents(CodecError):
    pass


class CoverageGap(CodecError):
    """A span of the measure is covered by neither a note, a rest, nor a held note."""


class UnknownToken(CodecError):
    pass


class WrongMeasureLength(CodecError):
    pass


def beat_offsets() -> list[Fraction]:
    """The six tick offsets within one beat, strictly increasing from 0."""
    sixteenths = {Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)}
    triplets = {Fraction(0), Fraction(1, 3), Fraction(2, 3)}
    return sorted(sixteenths | triplets)


@dataclass(frozen=True)
class TickGrid:
    """Uneven per-beat tick grid for 4/4 measures."""

    ticks_per_beat: int = 6
    beats_per_measure: int = 4
    offsets: tuple[Fraction, ...] = tuple(beat_offsets())

    def __post_init__(self):
        if self.ticks_per_beat * self.beats_per_measure != 24:
            raise CodecError("grid must have 24 ticks per measure")

    @property
    def ticks_per_measure(self) -> int:
        return self.ticks_per_beat * self.beats_per_measure

    def tick_positions(self) -> list[Fraction]:
        """Onset position (in beats) of every tick in a measure."""
        return [beat + off for beat in range(self.beats_per_measure) for off in self.offsets]

    def tick_durations(self) -> list[Fraction]:
        """Duration (in beats) of every tick in a measure."""
        durs = []
        for i, off in enumerate(self.offsets):
            nxt = self.offsets[i + 1] if i + 1 < len(self.offsets) else Fraction(1)
            durs.append(nxt - off)
        return durs * self.beats_per_measure

    def tick_index(self, position: Fraction) -> int:
        """Tick index for a position in beats within the measure, or raise."""
        beat, off = divmod(Fraction(position), 1)
        if off not in self.offsets or not 0 <= beat < self.beats_per_measure:
            raise OffGridOnset(f"position {position} is not on the tick grid")
        return int(beat) * self.ticks_per_beat + self.offsets.index(off)

    def is_on_grid(self, position: Fraction) -> bool:
        return Fraction(position) % 1 in self.offsets


DEFAULT_GRID = TickGrid()


@dataclass(frozen=True)
class NoteEvent:
    """One note or rest: spelled pitch ("F#4", "Bb3", ...) or "rest".

    ``onset`` is the position in beats within the owning measure; ``duration``
    is in beats and may extend into following measures.
    """

    pitch: str
    onset: Fraction
    duration: Fraction

    def __post_init__(self):
        if self.duration <= 0:
            raise CodecError(f"duration must be positive, got {self.duration}")

    @property
    def is_rest(self) -> bool:
        return self.pitch == REST


class Vocabulary:
    """Bijection between token strings and dense indices.

    Reserved tokens come first: continuation at 0, rest at 1; observed tokens
    follow in sorted order, so construction is deterministic.
    """

    RESERVED = (CONTINUATION, REST)

    def __init__(self, tokens: Iterable[str] = ()):
        ordered = list(self.RESERVED)
        seen = set(ordered)
        for tok in sorted(set(tokens) - seen):
            ordered.append(tok)
        self._tokens = ordered
        self._index = {tok: i for i, tok in enumerate(ordered)}

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise UnknownToken(f"token {token!r} is not in the vocabulary") from None

    def token(self, index: int) -> str:
        if not 0 <= index < len(self._tokens):
            raise UnknownToken(f"index {index} outside vocabulary of size {len(self._tokens)}")
        return self._tokens[index]

    def tokens(self) -> list[str]:
        return list(self._tokens)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index(t) for t in tokens]

    def decode(self, indices: Iterable[int]) -> list[str]:
        return [self.token(i) for i in indices]

    continuation_index = 0
    rest_index = 1

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        vocab = cls()
        vocab._tokens = [ln for ln in lines if ln]
        vocab._index = {tok: i for i, tok in enumerate(vocab._tokens)}
        if vocab._tokens[:2] != list(cls.RESERVED):
            raise UnknownToken("vocabulary file does not start with the reserved tokens")
        return vocab

    @classmethod
    def from_state(cls, tokens: list[str]) -> "Vocabulary":
        vocab = cls()
        vocab._tokens = list(tokens)
        vocab._index = {tok: i for i, tok in enumerate(vocab._tokens)}
        return vocab


def build_vocabulary(corpus: Iterable[str]) -> Vocabulary:
    """Vocabulary of all observed token strings plus the reserved tokens."""
    return Vocabulary(corpus)


@dataclass
class TokenSequence:
    """A run of whole measures as token strings, 24 per measure."""

    tokens: list[str]
    vocabulary: Vocabulary | None = None

    def __post_init__(self):
        if len(self.tokens) % DEFAULT_GRID.ticks_per_measure != 0:
            raise WrongMeasureLength(
                f"token count {len(self.tokens)} is not a multiple of 24"
            )

    @property
    def measures(self) -> int:
        return len(self.tokens) // DEFAULT_GRID.ticks_per_measure

    def measure(self, i: int) -> list[str]:
        t = DEFAULT_GRID.ticks_per_measure
        return self.tokens[i * t: (i + 1) * t]

    def indices(self, vocab: Vocabulary | None = None) -> list[int]:
        v = vocab or self.vocabulary
        if v is None:
            raise UnknownToken("no vocabulary attached to this sequence")
        return v.encode(self.tokens)

    def window(self, start: int, measures: int) -> "TokenSequence":
        t = DEFAULT_GRID.ticks_per_measure
        return TokenSequence(self.tokens[start * t: (start + measures) * t], self.vocabulary)


def encode_measure(events: list[NoteEvent], grid: TickGrid = DEFAULT_GRID,
                   carry_in: Fraction = Fraction(0)) -> list[str]:
    """Tokenize one measure.

    ``carry_in`` is the number of beats at the start of the measure still
    covered by a note held over from the previous measure; those ticks (and
    any tick inside a note/rest) become the continuation token.
    """
    beats = Fraction(grid.beats_per_measure)
    tokens = [CONTINUATION] * grid.ticks_per_measure
    cursor = Fraction(carry_in)
    for ev in sorted(events, key=lambda e: e.onset):
        idx = grid.tick_index(ev.onset)
        if ev.onset < cursor:
            raise OverlappingEvents(
                f"event at {ev.onset} starts before the previous one ends ({cursor})"
            )
        if ev.onset > cursor:
            raise CoverageGap(f"uncovered span from {cursor} to {ev.onset}")
        end = ev.onset + ev.duration
        if not grid.is_on_grid(end):
            raise OffGridOnset(f"note end {end} is not on the tick grid")
        tokens[idx] = ev.pitch
        cursor = end
    if cursor < beats:
        raise CoverageGap(f"measure not covered past {cursor}")
    return tokens


def decode_measure(tokens: list[str], grid: TickGrid = DEFAULT_GRID,
                   vocab: Vocabulary | None = None) -> list[NoteEvent]:
    """Inverse of encode_measure for a measure in isolation.

    Every non-continuation token opens an event whose duration runs to the
    next onset or to the measure end.  Leading continuation ticks belong to a
    note from the previous measure and yield no event here; decode_score
    extends that note instead.
    """
    if len(tokens) != grid.ticks_per_measure:
        raise WrongMeasureLength(f"expected {grid.ticks_per_measure} tokens, got {len(tokens)}")
    if vocab is not None:
        for t in tokens:
            if t not in vocab:
                raise UnknownToken(f"token {t!r} is not in the vocabulary")
    positions = grid.tick_positions()
    beats = Fraction(grid.beats_per_measure)
    onsets = [i for i, t in enumerate(tokens) if t != CONTINUATION]
    events = []
    for k, i in enumerate(onsets):
        end = positions[onsets[k + 1]] if k + 1 < len(onsets) else beats
        events.append(NoteEvent(tokens[i], positions[i], end - positions[i]))
    return events


def encode_score(score: Score, grid: TickGrid = DEFAULT_GRID,
                 vocab: Vocabulary | None = None) -> TokenSequence:
    """Tokenize a score given as one NoteEvent list per measure."""
    beats = Fraction(grid.beats_per_measure)
    tokens: list[str] = []
    carry = Fraction(0)
    for m, events in enumerate(score):
        try:
            tokens.extend(encode_measure(events, grid, carry_in=min(carry, beats)))
        except CodecError as exc:
            raise type(exc)(f"measure {m}: {exc}") from None
        last_end = carry if not events else max(e.onset + e.duration for e in events)
        carry = max(last_end - beats, Fraction(0))
    if carry > 0:
        raise CodecError("final note extends past the end of the score")
    return TokenSequence(tokens, vocab)


def decode_score(seq: TokenSequence, grid: TickGrid = DEFAULT_GRID) -> Score:
    """Inverse of encode_score, stitching notes held across barlines."""
    beats = Fraction(grid.beats_per_measure)
    positions = grid.tick_positions()
    score: Score = []
    open_event: tuple[int, int] | None = None  # (measure, index into its event list)
    for m in range(seq.measures):
        tokens = seq.measure(m)
        events = decode_measure(tokens, grid)
        first_onset = next((i for i, t in enumerate(tokens) if t != CONTINUATION), None)
        lead = beats if first_onset is None else positions[first_onset]
        if lead > 0:
            if open_event is None:
                raise CodecError(f"measure {m} begins with a continuation but nothing is held")
            om, oi = open_event
            held = score[om][oi]
            score[om][oi] = NoteEvent(held.pitch, held.onset, held.duration + lead)
        if events:
            last = events[-1]
            if last.onset + last.duration >= beats:
                open_event = (m, len(events) - 1)
        elif open_event is None:
            raise CodecError(f"measure {m} is empty and nothing is held")
        score.append(events)
    return score


def sixteenth_grid_length_ratio() -> Fraction:
    """Tokens per measure here relative to a plain sixteenth grid (24 / 16)."""
    return Fraction(DEFAULT_GRID.ticks_per_measure, 16)


# token text files ----------------------------------------------------
#
# One measure per line, 24 whitespace-separated token strings; lines starting
# with "#" are comments.  UTF-8.


def dump_token_lines(seq: TokenSequence) -> str:
    lines = [" ".join(seq.measure(m)) for m in range(seq.measures)]
    return "\n".join(lines) + ("\n" if lines else "")


def save_token_text(seq: TokenSequence, path: str | Path, header: str | None = None) -> None:
    text = dump_token_lines(seq)
    if header:
        text = "".join(f"# {line}\n" for line in header.splitlines()) + text
    Path(path).write_text(text, encoding="utf-8")


def parse_token_text(text: str, vocab: Vocabulary | None = None) -> TokenSequence:
    tokens: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        row = line.split()
        if len(row) != DEFAULT_GRID.ticks_per_measure:
            raise WrongMeasureLength(f"line {lineno}: expected 24 tokens, got {len(row)}")
        tokens.extend(row)
    seq = TokenSequence(tokens, vocab)
    if vocab is not None:
        for t in tokens:
            if t not in vocab:
                raise UnknownToken(f"token {t!r} is not in the vocabulary")
    return seq


def load_token_text(path: str | Path, vocab: Vocabulary | None = None) -> TokenSequence:
    return parse_token_text(Path(path).read_text(encoding="utf-8"), vocab)


def iter_token_windows(seq: TokenSequence, measures: int, stride: int) -> Iterator[TokenSequence]:
    """Sliding measure windows; sequences shorter than the window yield nothing."""
    if measures < 1 or stride < 1:
        raise CodecError("window size and stride must be >= 1")
    start = 0
    while start + measures <= seq.measures:
        yield seq.window(start, measures)
        start += stride
