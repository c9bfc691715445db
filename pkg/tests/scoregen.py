"""Random on-grid score generators shared by codec and model tests."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from melodyfill.codec import DEFAULT_GRID, REST, NoteEvent, Score

PITCH_GAMUT = [
    "C4", "D4", "E4", "F4", "G4", "A4", "B4", "C5", "D5", "E5",
    "F#4", "Bb4", "C#5", "Eb4",
]


def random_score(rng: np.random.Generator, measures: int | None = None,
                 gamut: list[str] | None = None, rest_prob: float = 0.15,
                 cross_barline_prob: float = 0.2) -> Score:
    """A random score whose onsets and note ends all lie on the tick grid.

    Durations are built by walking the global tick sequence and grabbing a
    random run of consecutive ticks, so sixteenths, triplet eighths, and notes
    held across barlines all occur.
    """
    if measures is None:
        measures = int(rng.integers(1, 5))
    gamut = gamut or PITCH_GAMUT
    tpm = DEFAULT_GRID.ticks_per_measure
    tick_durs = DEFAULT_GRID.tick_durations()
    positions = DEFAULT_GRID.tick_positions()
    total_ticks = measures * tpm

    score: Score = [[] for _ in range(measures)]
    tick = 0
    while tick < total_ticks:
        measure, local = divmod(tick, tpm)
        max_run = total_ticks - tick
        if rng.random() >= cross_barline_prob:
            max_run = min(max_run, tpm - local)
        run = int(rng.integers(1, min(max_run, 12) + 1))
        duration = Fraction(0)
        for k in range(run):
            duration += tick_durs[(tick + k) % tpm]
        pitch = REST if rng.random() < rest_prob else gamut[int(rng.integers(0, len(gamut)))]
        score[measure].append(NoteEvent(pitch, positions[local], duration))
        tick += run
    return score


def quarter_note_measure(rng: np.random.Generator, gamut: list[str]) -> list[NoteEvent]:
    """Four random quarter notes; the building block of the synthetic corpora."""
    return [
        NoteEvent(gamut[int(rng.integers(0, len(gamut)))], Fraction(beat), Fraction(1))
        for beat in range(4)
    ]
