from fractions import Fraction

import numpy as np
import pytest

from melodyfill.abc_ingest import (
    REASON_DURATION,
    REASON_METER,
    REASON_UNSUPPORTED,
    AbcTune,
    TuneRejection,
    filter_melody,
    ingest_directory,
    key_signature,
    parse_abc,
    split_corpus,
    split_tunes,
    tokenize_tune,
    window_corpus,
)
from melodyfill.codec import REST, NoteEvent, encode_score

F = Fraction


def tune(body: str, meter="4/4", unit="1/4", key="C") -> str:
    return f"X:1\nT:Test\nM:{meter}\nL:{unit}\nK:{key}\n{body}\n"


class TestParsing:
    def test_four_quarters(self):
        result = parse_abc(tune("C D E F |"))
        assert isinstance(result, AbcTune)
        assert result.body == [[
            NoteEvent("C4", F(0), F(1)),
            NoteEvent("D4", F(1), F(1)),
            NoteEvent("E4", F(2), F(1)),
            NoteEvent("F4", F(3), F(1)),
        ]]

    def test_triplet_eighths(self):
        result = parse_abc(tune("(3ABA F2 G2 A2 |", unit="1/8"))
        assert isinstance(result, AbcTune)
        first = result.body[0][:3]
        assert [e.pitch for e in first] == ["A4", "B4", "A4"]
        assert all(e.duration == F(1, 3) for e in first)
        assert first[2].onset == F(2, 3)

    def test_chord_rejected(self):
        result = parse_abc(tune("[CE] G E G |"))
        assert isinstance(result, TuneRejection)
        assert result.reason == REASON_UNSUPPORTED

    def test_grace_notes_rejected(self):
        result = parse_abc(tune("{g}A B c d |"))
        assert isinstance(result, TuneRejection)
        assert result.reason == REASON_UNSUPPORTED

    def test_other_tuplets_rejected(self):
        result = parse_abc(tune("(5ABcde A |", unit="1/8"))
        assert isinstance(result, TuneRejection)

    def test_octaves_and_accidentals(self):
        result = parse_abc(tune("C, c ^F _B |"))
        assert isinstance(result, AbcTune)
        assert [e.pitch for e in result.body[0]] == ["C3", "C5", "F#4", "Bb4"]

    def test_key_signature_applied_and_overridden(self):
        result = parse_abc(tune("F G =F F |", key="D"))
        assert isinstance(result, AbcTune)
        # K:D sharpens F; the natural sign holds for the rest of the measure
        assert [e.pitch for e in result.body[0]] == ["F#4", "G4", "F4", "F4"]

    def test_accidental_resets_at_barline(self):
        result = parse_abc(tune("^C D E F | C D E F |"))
        assert isinstance(result, AbcTune)
        assert result.body[0][0].pitch == "C#4"
        assert result.body[1][0].pitch == "C4"

    def test_rest_and_durations(self):
        result = parse_abc(tune("z2 A/2 A/2 A |"))
        assert isinstance(result, AbcTune)
        events = result.body[0]
        assert events[0] == NoteEvent(REST, F(0), F(2))
        assert events[1].duration == F(1, 2)

    def test_tie_across_barline(self):
        result = parse_abc(tune("C D E F- | F3 G |"))
        assert isinstance(result, AbcTune)
        assert result.body[0][-1] == NoteEvent("F4", F(3), F(4))
        assert result.body[1] == [NoteEvent("G4", F(3), F(1))]
        seq = encode_score(result.body)
        assert seq.measures == 2

    def test_tie_pitch_mismatch_rejected(self):
        result = parse_abc(tune("C D E F- | G4 |"))
        assert isinstance(result, TuneRejection)
        assert result.reason == REASON_UNSUPPORTED

    def test_repeat_unrolled_once(self):
        result = parse_abc(tune("|: C4 | D4 :|"))
        assert isinstance(result, AbcTune)
        assert len(result.body) == 4
        assert [m[0].pitch for m in result.body] == ["C4", "D4", "C4", "D4"]

    def test_pickup_padded_with_leading_rest(self):
        result = parse_abc(tune("G | C D E F | G A B c |"))
        assert isinstance(result, AbcTune)
        first = result.body[0]
        assert first[0].pitch == REST and first[0].duration == F(3)
        assert first[1] == NoteEvent("G4", F(3), F(1))

    def test_arbitrary_bytes_do_not_crash(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            junk = bytes(rng.integers(0, 256, size=rng.integers(1, 120))).decode(
                "utf-8", errors="replace")
            result = parse_abc(junk)
            assert isinstance(result, (AbcTune, TuneRejection))

    def test_missing_key_rejected(self):
        assert isinstance(parse_abc("X:1\nM:4/4\nC D E F |"), TuneRejection)

    def test_split_tunes(self):
        text = tune("C4 | D4 |") + "\n" + tune("E4 | F4 |")
        assert len(split_tunes(text)) == 2


class TestKeySignature:
    def test_major_keys(self):
        assert key_signature("C") == {}
        assert key_signature("D") == {"F": "#", "C": "#"}
        assert key_signature("F") == {"B": "b"}

    def test_minor_and_modes(self):
        assert key_signature("Am") == {}
        assert key_signature("Edor") == {"F": "#", "C": "#"}
        assert key_signature("Amix") == {"F": "#", "C": "#"}
        assert key_signature("Bm") == {"F": "#", "C": "#"}

    def test_unknown(self):
        assert key_signature("H") is None


class TestFilter:
    def test_non_44_rejected(self):
        result = parse_abc(tune("A B A | B A B |", meter="6/8", unit="1/8"))
        assert isinstance(result, AbcTune)
        verdict = filter_melody(result)
        assert not verdict.accepted and verdict.reason == REASON_METER

    def test_thirty_second_rejected(self):
        result = parse_abc(tune("C// C// C// C// C/ C/ C B A G A B |", unit="1/8"))
        assert isinstance(result, AbcTune)
        verdict = filter_melody(result)
        assert not verdict.accepted and verdict.reason == REASON_DURATION

    def test_quarters_accepted(self):
        result = parse_abc(tune("C D E F |"))
        verdict = filter_melody(result)
        assert verdict.accepted

    def test_accepted_tunes_tokenize(self):
        bodies = ["C D E F |", "(3CDE F2 |", "C2 D/2D/2 E |"]
        for body in bodies:
            result = parse_abc(tune(body, unit="1/4"))
            assert isinstance(result, AbcTune)
            if filter_melody(result).accepted:
                seq = tokenize_tune(result)
                assert len(seq.tokens) % 24 == 0


def _make_tunes(n, measures=16):
    tunes = []
    for i in range(n):
        body = " | ".join(["C D E F"] * measures) + " |"
        t = parse_abc(tune(body))
        assert isinstance(t, AbcTune)
        tunes.append(t)
    return tunes


class TestWindowing:
    def test_exact(self):
        assert len(window_corpus(_make_tunes(1, 16), 16, 16)) == 1

    def test_strided(self):
        assert len(window_corpus(_make_tunes(1, 32), 16, 8)) == 3

    def test_short_dropped(self):
        assert len(window_corpus(_make_tunes(1, 8), 16, 16)) == 0


class TestSplit:
    def test_ratio_counts(self):
        split = split_corpus(_make_tunes(10), (0.8, 0.1, 0.1), seed=0)
        assert (len(split.train_tunes), len(split.valid_tunes), len(split.test_tunes)) == (8, 1, 1)

    def test_deterministic(self):
        a = split_corpus(_make_tunes(10), seed=3)
        b = split_corpus(_make_tunes(10), seed=3)
        assert a.train_tunes == b.train_tunes and a.test_tunes == b.test_tunes

    def test_disjoint_over_seeds(self):
        tunes = _make_tunes(9)
        for seed in range(100):
            split = split_corpus(tunes, seed=seed)
            groups = [set(split.train_tunes), set(split.valid_tunes), set(split.test_tunes)]
            assert not (groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2])
            assert groups[0] | groups[1] | groups[2] == set(range(9))

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            split_corpus(_make_tunes(4), (0.5, 0.1, 0.1))


class TestIngestDirectory:
    def test_manifest_and_split(self, tmp_path):
        good = tune(" | ".join(["C D E F"] * 16) + " |")
        bad = tune("A B A | B A B |", meter="6/8", unit="1/8")
        (tmp_path / "good.abc").write_text(good)
        (tmp_path / "bad.abc").write_text(bad)
        split, manifest = ingest_directory(tmp_path, seed=0)
        by_id = {m["id"]: m for m in manifest}
        assert by_id["good.abc#0"]["accepted"]
        assert not by_id["bad.abc#0"]["accepted"]
        total = len(split.train) + len(split.valid) + len(split.test)
        assert total == 1
