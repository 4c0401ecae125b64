"""Chord accompaniment tracks.

Arousal decides how many notes a chord gets, valence decides where its
center of gravity sits (A2 at valence -1 up to A4 at +1), and the playing
mode decides how the voicing is laid out over each measure.  A chord track
is a bundle of monophonic ``NoteSeq`` voices sharing the same grid.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .notation import HOLD, REST, NoteSeq
from .schema import ChordSymbol, Section, TimeSignature

MAX_VOICING = 6
MIN_VOICING = 2
LOW_CENTER = 45   # A2
HIGH_CENTER = 69  # A4
OCTAVE_SHIFTS = (-2, -1, 0, 1, 2)
BASE_OCTAVE = 48  # C3; candidate octaves are searched around this
MAX_OMISSION = 0.4


class ChordMode(enum.Enum):
    CONTINUOUS = "continuous"
    REPEATED = "repeated"
    ARPEGGIO = "arpeggio"


@dataclass(frozen=True)
class Voicing:
    pitches: tuple[int, ...]

    def __post_init__(self) -> None:
        p = tuple(int(x) for x in self.pitches)
        object.__setattr__(self, "pitches", p)
        if not p:
            raise ValueError("a voicing needs at least one pitch")
        if any(not 0 <= x <= 127 for x in p):
            raise ValueError(f"voicing pitches out of MIDI range: {p}")
        if any(b <= a for a, b in zip(p, p[1:])):
            raise ValueError(f"voicing pitches must be strictly ascending: {p}")

    @property
    def center_of_gravity(self) -> float:
        return sum(self.pitches) / len(self.pitches)

    def __len__(self) -> int:
        return len(self.pitches)


def size_voicing(chord: ChordSymbol, arousal: float) -> list[int]:
    """Semitone offsets above the chord root after arousal-based resizing.

    Rules run once each, in order: drop the fifth when arousal < 0.3 or the
    chord has more than four notes; add the root an octave up when arousal
    > 0.7 and fewer than five notes remain; add the fifth an octave higher
    when arousal > 0.9 and fewer than six notes remain.

    >>> size_voicing(ChordSymbol(0, "maj"), 0.1)
    [0, 4]
    >>> size_voicing(ChordSymbol(0, "maj"), 0.95)
    [0, 4, 7, 12, 19]
    """
    if not 0.0 <= arousal <= 1.0:
        raise ValueError(f"arousal must lie in [0, 1], got {arousal}")
    intervals = list(chord.intervals)
    fifth = intervals[2]
    notes = list(intervals)
    if arousal < 0.3 or len(notes) > 4:
        notes.remove(fifth)
    if arousal > 0.7 and len(notes) < 5:
        notes.append(12)
    if arousal > 0.9 and len(notes) < 6:
        notes.append(12 + fifth)
    return notes


def target_center(valence: float) -> float:
    """Linear map of valence from [-1, 1] onto [A2, A4]."""
    return LOW_CENTER + (valence + 1.0) / 2.0 * (HIGH_CENTER - LOW_CENTER)


@lru_cache(maxsize=None)
def _shift_grid(n: int) -> np.ndarray:
    grids = np.meshgrid(*([np.array(OCTAVE_SHIFTS)] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


@lru_cache(maxsize=4096)
def _place(offsets: tuple[int, ...], root: int, valence: float) -> tuple[int, ...]:
    base = np.array([BASE_OCTAVE + root + o for o in offsets])
    cand = base[None, :] + 12 * _shift_grid(len(offsets))
    cand = np.sort(cand, axis=1)
    ok = np.all(np.diff(cand, axis=1) > 0, axis=1) & np.all((cand >= 0) & (cand <= 127), axis=1)
    cand = cand[ok]
    err = np.abs(cand.mean(axis=1) - target_center(valence))
    span = cand[:, -1] - cand[:, 0]
    # lexsort: last key is primary -> error, then span, then pitches low to high
    keys = [cand[:, j] for j in range(cand.shape[1] - 1, -1, -1)] + [span, np.round(err, 9)]
    best = np.lexsort(keys)[0]
    return tuple(int(x) for x in cand[best])


def place_voicing(offsets: Sequence[int], valence: float, root: int = 0) -> Voicing:
    """Assign octaves to ``offsets`` (semitones above ``root``).

    Every note may move up to two octaves either way.  Among placements with
    no duplicate pitches the one whose mean pitch is closest to the valence
    target wins; ties go to the narrower, then the lower, voicing.
    """
    if not -1.0 <= valence <= 1.0:
        raise ValueError(f"valence must lie in [-1, 1], got {valence}")
    if not offsets:
        raise ValueError("nothing to place")
    return Voicing(_place(tuple(int(o) for o in offsets), int(root) % 12, float(valence)))


def chord_voicing(chord: ChordSymbol, valence: float, arousal: float) -> Voicing:
    return place_voicing(size_voicing(chord, arousal), valence, chord.root)


# --------------------------------------------------------------------------- #
# playing modes
# --------------------------------------------------------------------------- #

def repeat_period(arousal: float) -> int:
    """Steps between chord strikes in repeated mode."""
    if arousal > 0.75:
        return 2
    if arousal > 0.4:
        return 4
    return 8


def strike_length(period: int, arousal: float) -> int:
    """Sounding steps of each strike; higher arousal plays shorter."""
    return max(1, round(period * (1.0 - 0.5 * arousal)))


def arpeggio_step(arousal: float) -> int:
    """Arpeggio note length: sixteenth, eighth, quarter or half note."""
    if arousal > 0.75:
        return 1
    if arousal > 0.5:
        return 2
    if arousal > 0.25:
        return 4
    return 8


def up_down(pitches: Sequence[int]) -> list[int]:
    """One up-then-down cycle without repeating the turning points."""
    p = list(pitches)
    return p + p[-2:0:-1]


def _write(codes: list[int], start: int, length: int, pitch: int) -> None:
    codes[start] = pitch
    for i in range(start + 1, start + length):
        codes[i] = HOLD


def realize_mode(
    voicings: Sequence[Voicing],
    mode: ChordMode | str,
    arousal: float,
    ts: TimeSignature,
    rng: random.Random | None = None,
    omission_rate: float | None = None,
) -> list[NoteSeq]:
    """Lay one voicing per measure out on the step grid.

    Returns the parallel voices (voice ``j`` carries the ``j``-th lowest
    note).  In repeated mode the first strike of a measure is always played
    and each later strike is dropped with ``omission_rate``; when that is
    ``None`` a rate is drawn uniformly from ``[0, 0.4]``.
    """
    mode = ChordMode(mode)
    rng = rng or random.Random()
    spm = ts.steps_per_measure
    n_meas = len(voicings)
    if n_meas == 0:
        raise ValueError("need at least one voicing")
    total = spm * n_meas

    if mode is ChordMode.ARPEGGIO:
        codes = [REST] * total
        d = arpeggio_step(arousal)
        for m, v in enumerate(voicings):
            cycle = up_down(v.pitches)
            for k, pos in enumerate(range(0, spm, d)):
                _write(codes, m * spm + pos, min(d, spm - pos), cycle[k % len(cycle)])
        return [NoteSeq(tuple(codes), spm, n_meas)]

    n_voices = max(len(v) for v in voicings)
    voices = [[REST] * total for _ in range(n_voices)]
    if mode is ChordMode.CONTINUOUS:
        strikes = [(0, spm)]
        omit = 0.0
    else:
        period = repeat_period(arousal)
        length = strike_length(period, arousal)
        strikes = [(pos, min(length, spm - pos)) for pos in range(0, spm, period)]
        omit = rng.uniform(0.0, MAX_OMISSION) if omission_rate is None else omission_rate
        if not 0.0 <= omit <= 1.0:
            raise ValueError("omission rate must lie in [0, 1]")
    for m, v in enumerate(voicings):
        for k, (pos, length) in enumerate(strikes):
            if k > 0 and omit > 0.0 and rng.random() < omit:
                continue
            for j, pitch in enumerate(v.pitches):
                _write(voices[j], m * spm + pos, length, pitch)
    return [NoteSeq(tuple(c), spm, n_meas) for c in voices]


def generate_chord_track(
    section: Section,
    valence: float,
    arousal: float,
    mode: ChordMode | str,
    rng: random.Random,
    omission_rate: float | None = None,
) -> list[NoteSeq]:
    """Chord voices for every measure of ``section``."""
    voicings = [chord_voicing(ch, valence, arousal) for ch in section.chords_per_measure()]
    return realize_mode(voicings, mode, arousal, section.time_signature, rng, omission_rate)
