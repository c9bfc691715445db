"""Restricted ABC-notation ingestion.

Parses a deliberately small subset of ABC into per-measure note events:
headers X/T/M/L/K are honoured (others ignored), bodies may contain notes
A-G/a-g with octave marks (, and '), accidentals ^ ^^ _ __ =, duration
multipliers and divisors (A2, A3/2, A/2, A//), rests z, barlines, the
triplet prefix (3, simple same-pitch ties, and |: :| repeats (unrolled
once).  Anything else rejects the whole tune with a structured reason --
the corpus filter is meant to reject rather than approximate.

Octave convention: bare uppercase letters sit in octave 4, lowercase in
octave 5.  Key signatures (major, minor, and the seven church modes) and
measure-scoped accidentals are resolved at parse time, so events carry
fully spelled pitches ("F#4", "Bb3").
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .codec import (
    DEFAULT_GRID,
    REST,
    CodecError,
    NoteEvent,
    Score,
    TokenSequence,
    encode_score,
    iter_token_windows,
)

# reason codes for structured rejection
REASON_SYNTAX = "syntax"
REASON_UNSUPPORTED = "unsupported_construct"
REASON_METER = "meter"
REASON_DURATION = "duration"
REASON_EMPTY = "empty"
REASON_MEASURE_LENGTH = "measure_length"


@dataclass(frozen=True)
class TuneRejection:
    """Why a tune was not ingested; `where` is (line, column) when known."""

    reason: str
    detail: str
    where: tuple[int, int] | None = None


@dataclass
class AbcTune:
    title: str
    meter: Fraction
    unit_length: Fraction
    key: str
    body: Score


# key signatures -------------------------------------------------------

_LETTERS = "CDEFGAB"
_SHARP_ORDER = "FCGDAEB"
_FLAT_ORDER = "BEADGCF"
_TONIC_FIFTHS = {
    "C": 0, "G": 1, "D": 2, "A": 3, "E": 4, "B": 5, "F#": 6, "C#": 7,
    "F": -1, "Bb": -2, "Eb": -3, "Ab": -4, "Db": -5, "Gb": -6, "Cb": -7,
}
_MODE_FIFTHS = {
    "": 0, "maj": 0, "major": 0, "ion": 0, "ionian": 0,
    "mix": -1, "mixolydian": -1,
    "dor": -2, "dorian": -2,
    "m": -3, "min": -3, "minor": -3, "aeo": -3, "aeolian": -3,
    "phr": -4, "phrygian": -4,
    "loc": -5, "locrian": -5,
    "lyd": 1, "lydian": 1,
}


def key_signature(key: str) -> dict[str, str] | None:
    """Map a K: field to {letter: accidental}; None if unrecognised."""
    text = key.strip().replace(" ", "")
    m = re.fullmatch(r"([A-Ga-g])([#b]?)([A-Za-z]*)", text)
    if not m:
        return None
    tonic = m.group(1).upper() + m.group(2)
    mode = m.group(3).lower()
    if tonic not in _TONIC_FIFTHS or mode not in _MODE_FIFTHS:
        return None
    fifths = _TONIC_FIFTHS[tonic] + _MODE_FIFTHS[mode]
    if not -7 <= fifths <= 7:
        return None
    if fifths >= 0:
        return {letter: "#" for letter in _SHARP_ORDER[:fifths]}
    return {letter: "b" for letter in _FLAT_ORDER[:-fifths]}


# body scanner ---------------------------------------------------------


@dataclass
class _RawNote:
    pitch: str | None  # spelled pitch, or None for a rest
    duration: Fraction  # in beats
    tie: bool = False


class _Reject(Exception):
    def __init__(self, reason: str, detail: str, line: int, col: int):
        super().__init__(detail)
        self.rejection = TuneRejection(reason, detail, (line, col))


class _BodyScanner:
    """Turns ABC body text into measures of _RawNote, expanding repeats."""

    def __init__(self, lines: list[tuple[int, str]], unit: Fraction,
                 keysig: dict[str, str]):
        self.lines = lines
        self.unit = unit
        self.beat = Fraction(1, 4)  # durations are kept in quarter-note beats
        self.keysig = keysig

    def scan(self) -> list[list[_RawNote]]:
        measures: list[list[_RawNote]] = []
        current: list[_RawNote] = []
        accidentals: dict[tuple[str, int], str] = {}
        repeat_start = 0
        triplet_left = 0

        def close_measure():
            nonlocal current
            if current:
                measures.append(current)
                current = []
            accidentals.clear()

        for lineno, line in self.lines:
            i = 0
            n = len(line)
            while i < n:
                ch = line[i]
                if ch in " \t":
                    i += 1
                    continue
                if ch == "%":
                    break
                if ch == "|" or ch == ":":
                    j = i
                    while j < n and line[j] in "|:]":
                        j += 1
                    bar = line[i:j]
                    i = j
                    if ":" in bar:
                        if bar.startswith(":"):  # :| end repeat -> unroll once
                            close_measure()
                            measures.extend([list(m) for m in measures[repeat_start:]])
                            repeat_start = len(measures)
                        if bar.endswith(":"):  # |: start repeat
                            close_measure()
                            repeat_start = len(measures)
                        continue
                    close_measure()
                    continue
                if ch == "[":
                    if i + 1 < n and line[i + 1] == "|":  # [| thick barline
                        close_measure()
                        i += 2
                        continue
                    raise _Reject(REASON_UNSUPPORTED, "chords/inline fields are not supported",
                                  lineno, i + 1)
                if ch == "(":
                    if i + 1 < n and line[i + 1] == "3":
                        triplet_left = 3
                        i += 2
                        continue
                    if i + 1 < n and line[i + 1].isdigit():
                        raise _Reject(REASON_UNSUPPORTED, "only (3 tuplets are supported",
                                      lineno, i + 1)
                    raise _Reject(REASON_UNSUPPORTED, "slurs are not supported", lineno, i + 1)
                if ch in "zZxX":
                    if ch in "ZX":
                        raise _Reject(REASON_UNSUPPORTED, "multi-measure rests are not supported",
                                      lineno, i + 1)
                    i += 1
                    mult, i = self._duration(line, i)
                    dur = self.unit * mult / self.beat
                    if triplet_left:
                        dur *= Fraction(2, 3)
                        triplet_left -= 1
                    current.append(_RawNote(None, dur))
                    continue
                if ch in "^_=" or ch.upper() in _LETTERS:
                    note, i = self._note(line, lineno, i, accidentals)
                    if triplet_left:
                        note.duration *= Fraction(2, 3)
                        triplet_left -= 1
                    current.append(note)
                    continue
                raise _Reject(REASON_UNSUPPORTED, f"unsupported character {ch!r}",
                              lineno, i + 1)
        close_measure()
        return measures

    def _duration(self, line: str, i: int) -> tuple[Fraction, int]:
        n = len(line)
        num = 0
        while i < n and line[i].isdigit():
            num = num * 10 + int(line[i])
            i += 1
        mult = Fraction(num) if num else Fraction(1)
        while i < n and line[i] == "/":
            i += 1
            den = 0
            while i < n and line[i].isdigit():
                den = den * 10 + int(line[i])
                i += 1
            mult /= den if den else 2
        return mult, i

    def _note(self, line: str, lineno: int, i: int,
              accidentals: dict[tuple[str, int], str]) -> tuple[_RawNote, int]:
        n = len(line)
        acc_mark = ""
        while i < n and line[i] in "^_=":
            acc_mark += line[i]
            i += 1
        if acc_mark not in ("", "^", "^^", "_", "__", "="):
            raise _Reject(REASON_SYNTAX, f"bad accidental {acc_mark!r}", lineno, i)
        if i >= n or line[i].upper() not in _LETTERS:
            raise _Reject(REASON_SYNTAX, "accidental without a note", lineno, i + 1)
        letter = line[i]
        octave = 5 if letter.islower() else 4
        i += 1
        while i < n and line[i] in "',":
            octave += 1 if line[i] == "'" else -1
            i += 1
        mult, i = self._duration(line, i)
        tie = False
        if i < n and line[i] == "-":
            tie = True
            i += 1

        name = letter.upper()
        if acc_mark:
            spelled_acc = {"^": "#", "^^": "##", "_": "b", "__": "bb", "=": ""}[acc_mark]
            accidentals[(name, octave)] = spelled_acc
        else:
            spelled_acc = accidentals.get((name, octave), self.keysig.get(name, ""))
        pitch = f"{name}{spelled_acc}{octave}"
        dur = self.unit * mult / self.beat
        return _RawNote(pitch, dur, tie), i


# tune assembly --------------------------------------------------------


def split_tunes(text: str) -> list[str]:
    """Split a file into per-tune chunks on X: header lines."""
    chunks: list[list[str]] = []
    current: list[str] = []
    for line in text.splitlines():
        if re.match(r"^X\s*:", line):
            if current:
                chunks.append(current)
            current = [line]
        else:
            current.append(line)
    if current and any(ln.strip() for ln in current):
        chunks.append(current)
    return ["\n".join(c) for c in chunks]


def parse_abc(text: str) -> AbcTune | TuneRejection:
    """Parse one tune; returns a TuneRejection value instead of raising."""
    try:
        return _parse_abc(text)
    except _Reject as exc:
        return exc.rejection
    except Exception as exc:  # totality: arbitrary bytes must not crash
        return TuneRejection(REASON_SYNTAX, f"unparseable input: {exc}")


def _parse_abc(text: str) -> AbcTune | TuneRejection:
    title = ""
    meter = Fraction(4, 4)
    unit = Fraction(1, 8)
    key: str | None = None
    body_lines: list[tuple[int, str]] = []

    lines = text.splitlines()
    in_body = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("%", 1)[0].rstrip()
        if not line.strip():
            continue
        header = re.match(r"^([A-Za-z])\s*:(.*)$", line)
        if header and in_body and header.group(1).upper() == "X":
            break  # a following tune begins; parse only the first
        if header and not in_body:
            tag, value = header.group(1).upper(), header.group(2).strip()
            if tag == "T" and not title:
                title = value
            elif tag == "M":
                meter = _parse_meter(value)
                if meter is None:
                    return TuneRejection(REASON_SYNTAX, f"bad meter {value!r}", (lineno, 1))
            elif tag == "L":
                try:
                    unit = Fraction(value)
                except (ValueError, ZeroDivisionError):
                    return TuneRejection(REASON_SYNTAX, f"bad unit length {value!r}", (lineno, 1))
            elif tag == "K":
                keysig = key_signature(value)
                if keysig is None:
                    return TuneRejection(REASON_SYNTAX, f"unrecognised key {value!r}", (lineno, 1))
                key = value
                in_body = True
            continue
        if not in_body:
            return TuneRejection(REASON_SYNTAX, "tune body before K: header", (lineno, 1))
        if header:  # field line inside the body (w: lyrics etc.): ignore
            continue
        body_lines.append((lineno, line))

    if key is None:
        return TuneRejection(REASON_SYNTAX, "missing K: header")

    raw_measures = _BodyScanner(body_lines, unit, key_signature(key)).scan()
    if not raw_measures:
        return TuneRejection(REASON_EMPTY, "tune has no notes")

    beats = meter / Fraction(1, 4)
    body = _assemble_measures(raw_measures, beats)
    return AbcTune(title=title, meter=meter, unit_length=unit, key=key, body=body)


def _parse_meter(value: str) -> Fraction | None:
    v = value.strip()
    if v == "C":
        return Fraction(4, 4)
    if v == "C|":
        return Fraction(2, 2)
    m = re.fullmatch(r"(\d+)\s*/\s*(\d+)", v)
    if not m or int(m.group(2)) == 0:
        return None
    return Fraction(int(m.group(1)), int(m.group(2)))


def _assemble_measures(raw: list[list[_RawNote]], beats: Fraction) -> Score:
    """Resolve ties and pad pickup/final measures, producing NoteEvents.

    A short first measure is treated as a pickup and padded with a leading
    rest; a short final measure is padded with a trailing rest.  Any other
    measure whose durations do not sum to the meter rejects the tune.
    """
    lengths = [sum((n.duration for n in m), Fraction(0)) for m in raw]
    for idx, total in enumerate(lengths):
        if total == beats:
            continue
        if total > beats:
            raise _Reject(REASON_MEASURE_LENGTH, f"measure {idx + 1} overfull ({total} beats)",
                          0, 0)
        if idx == 0:
            raw[0].insert(0, _RawNote(None, beats - total))
        elif idx == len(raw) - 1:
            raw[-1].append(_RawNote(None, beats - total))
        else:
            raise _Reject(REASON_MEASURE_LENGTH,
                          f"measure {idx + 1} underfull ({total} of {beats} beats)", 0, 0)

    score: Score = []
    open_tie: tuple[int, int] | None = None  # (measure, event index) of the tied-from note
    for m_idx, measure in enumerate(raw):
        events: list[NoteEvent] = []
        score.append(events)
        position = Fraction(0)
        for note in measure:
            if note.tie and note.pitch is None:
                raise _Reject(REASON_UNSUPPORTED, "tie on a rest", 0, 0)
            pitch = REST if note.pitch is None else note.pitch
            if open_tie is not None:
                tm, ti = open_tie
                prev = score[tm][ti]
                if note.pitch is None or pitch != prev.pitch:
                    raise _Reject(REASON_UNSUPPORTED,
                                  "tie must join two adjacent notes of the same pitch", 0, 0)
                score[tm][ti] = NoteEvent(pitch, prev.onset, prev.duration + note.duration)
                open_tie = (tm, ti) if note.tie else None
                position += note.duration
                continue
            if note.tie:
                open_tie = (m_idx, len(events))
            events.append(NoteEvent(pitch, position, note.duration))
            position += note.duration
    if open_tie is not None:
        raise _Reject(REASON_UNSUPPORTED, "dangling tie at end of tune", 0, 0)
    return score


# corpus filtering and splitting ----------------------------------------


@dataclass(frozen=True)
class FilterResult:
    accepted: bool
    reason: str | None = None
    detail: str = ""


def filter_melody(tune: AbcTune) -> FilterResult:
    """Accept only 4/4 tunes whose notes all sit on the tick grid."""
    if tune.meter != Fraction(4, 4):
        return FilterResult(False, REASON_METER, f"meter {tune.meter} is not 4/4")
    try:
        encode_score(tune.body)
    except CodecError as exc:
        return FilterResult(False, REASON_DURATION, str(exc))
    return FilterResult(True)


def tokenize_tune(tune: AbcTune) -> TokenSequence:
    return encode_score(tune.body)


def window_corpus(tunes: list[AbcTune], measures: int = 16,
                  stride: int = 16) -> list[TokenSequence]:
    """Sliding fixed-length windows over every tune; short tunes contribute none."""
    windows: list[TokenSequence] = []
    for tune in tunes:
        windows.extend(iter_token_windows(tokenize_tune(tune), measures, stride))
    return windows


@dataclass
class CorpusSplit:
    train: list[TokenSequence] = field(default_factory=list)
    valid: list[TokenSequence] = field(default_factory=list)
    test: list[TokenSequence] = field(default_factory=list)
    seed: int = 0
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    train_tunes: list[int] = field(default_factory=list)
    valid_tunes: list[int] = field(default_factory=list)
    test_tunes: list[int] = field(default_factory=list)


def split_corpus(tunes: list[AbcTune], ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                 seed: int = 0, measures: int = 16, stride: int = 16) -> CorpusSplit:
    """Deterministic tune-level split, then windowing within each split."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    order = np.arange(len(tunes))
    np.random.Generator(np.random.PCG64(seed)).shuffle(order)
    n_train = int(len(tunes) * ratios[0])
    n_valid = int(len(tunes) * ratios[1])
    split = CorpusSplit(seed=seed, ratios=ratios)
    split.train_tunes = sorted(int(i) for i in order[:n_train])
    split.valid_tunes = sorted(int(i) for i in order[n_train: n_train + n_valid])
    split.test_tunes = sorted(int(i) for i in order[n_train + n_valid:])
    split.train = window_corpus([tunes[i] for i in split.train_tunes], measures, stride)
    split.valid = window_corpus([tunes[i] for i in split.valid_tunes], measures, stride)
    split.test = window_corpus([tunes[i] for i in split.test_tunes], measures, stride)
    return split


# directory ingestion ---------------------------------------------------


def ingest_directory(path: str | Path, measures: int = 16, stride: int = 16,
                     ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
                     seed: int = 0):
    """Parse, filter, split, and window every .abc file under `path`.

    Returns (split, manifest) where the manifest records one entry per tune
    with its accept/reject outcome.
    """
    accepted: list[AbcTune] = []
    manifest: list[dict] = []
    for file in sorted(Path(path).glob("**/*.abc")):
        text = file.read_text(encoding="utf-8", errors="replace")
        for k, chunk in enumerate(split_tunes(text)):
            tune_id = f"{file.name}#{k}"
            result = parse_abc(chunk)
            if isinstance(result, TuneRejection):
                manifest.append({"id": tune_id, "accepted": False,
                                 "reason": result.reason, "detail": result.detail})
                continue
            verdict = filter_melody(result)
            if not verdict.accepted:
                manifest.append({"id": tune_id, "accepted": False,
                                 "reason": verdict.reason, "detail": verdict.detail})
                continue
            n_windows = len(list(iter_token_windows(tokenize_tune(result), measures, stride)))
            manifest.append({"id": tune_id, "accepted": True, "reason": None,
                             "title": result.title, "windows": n_windows})
            accepted.append(result)
    split = split_corpus(accepted, ratios=ratios, seed=seed, measures=measures, stride=stride)
    return split, manifest


def write_manifest(manifest: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


# corpus directory layout ------------------------------------------------
#
# vocab.txt (one token per line), corpus.json (window geometry + split
# metadata), and one token text file per split with windows separated by
# comment lines.


def save_corpus_dir(split: CorpusSplit, vocab: "Vocabulary", out_dir: str | Path,
                    measures_per_window: int, manifest: list[dict] | None = None) -> None:
    from .codec import Vocabulary, dump_token_lines

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.txt")
    counts = {}
    for name in ("train", "valid", "test"):
        windows: list[TokenSequence] = getattr(split, name)
        counts[name] = len(windows)
        with open(out / f"{name}.tokens", "w", encoding="utf-8") as fh:
            for i, win in enumerate(windows):
                fh.write(f"# window {i}\n")
                fh.write(dump_token_lines(win))
    meta = {"measures_per_window": measures_per_window, "counts": counts,
            "seed": split.seed, "ratios": list(split.ratios)}
    (out / "corpus.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    if manifest is not None:
        write_manifest(manifest, out / "manifest.json")


def load_corpus_dir(path: str | Path):
    """Returns (windows-by-split dict of (W, N, 24) index arrays, vocab, meta)."""
    from .codec import Vocabulary, load_token_text

    root = Path(path)
    vocab = Vocabulary.load(root / "vocab.txt")
    meta = json.loads((root / "corpus.json").read_text(encoding="utf-8"))
    n = meta["measures_per_window"]
    out = {}
    for name in ("train", "valid", "test"):
        seq = load_token_text(root / f"{name}.tokens", vocab)
        if seq.measures % n:
            raise ValueError(f"{name}.tokens does not divide into {n}-measure windows")
        idx = np.array(vocab.encode(seq.tokens), dtype=np.int64)
        out[name] = idx.reshape(-1, n, 24)
    return out, vocab, meta
