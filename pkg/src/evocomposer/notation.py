"""Sixteenth-grid note encoding and melodic feature extraction.

A melodic track is a vector of integer codes, one per sixteenth step:
``0..127`` starts a note at that MIDI pitch, ``-1`` is a rest and ``-2``
prolongs whatever sounds (or rests) in the previous step.  Every measure has
the same number of cells, so tracks of one section line up index by index.

:func:`extract_features` measures the 21 melodic qualities the fitness
function scores.  Each value is normalized to ``[0, 1]``; the formulas are
listed next to :data:`FEATURES`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

from .schema import ChordSymbol, Scale, Section

REST = -1
HOLD = -2

DISSONANT_INTERVALS = frozenset({1, 2, 6, 10, 11})

# Feature ids are 1-based: FEATURES[i - 1] is feature id i.
FEATURES = (
    "unique_notes_per_measure",     # unique pitches / notes, mean over measures with notes
    "unique_intervals_per_measure",  # unique signed intervals / intervals, per measure of the later note
    "dissonant_interval_ratio",     # |interval| mod 12 in {1, 2, 6, 10, 11}
    "over_octave_interval_ratio",   # |interval| > 12
    "in_scale_ratio",
    "in_chord_ratio",               # pitch class in the chord sounding at the onset
    "pitch_range",                  # (max - min) / 48, capped
    "rest_ratio",                   # silent steps / steps
    "unique_lengths_per_measure",   # unique durations / notes, mean over measures with notes
    "avg_pitch",                    # mean pitch / 127
    "pitch_deviation",              # population std of pitch / half the range
    "strong_beat_length",           # mean duration of notes on beat 1 (and 3 in 4-beat bars) / measure
    "melodic_contour",              # ascending / (ascending + descending)
    "offbeat_ratio",                # onsets off the eighth-note grid
    "avg_interval_size",            # mean |interval| / 12, capped
    "log_avg_note_length",          # ln(mean duration) / ln(steps per measure)
    "log_length_deviation",         # std of ln(duration) / ln(steps per measure), capped
    "stepwise_interval_runs",       # intervals of 1-3 semitones / intervals
    "short_note_runs",              # adjacent note pairs both an eighth or shorter / pairs
    "repeated_fragment_length",     # longest non-overlapping repeated code run / length
    "root_note_measure_starts",     # measures opening with the chord root / measures
)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURES)}
N_FEATURES = len(FEATURES)


class InvalidSequence(ValueError):
    pass


def validate_codes(codes: Sequence[int]) -> None:
    for i, c in enumerate(codes):
        if not (HOLD <= c <= 127) or isinstance(c, bool):
            raise InvalidSequence(f"code {c!r} at index {i} outside {{-2, -1, 0..127}}")
    if codes and codes[0] == HOLD:
        raise InvalidSequence("a sequence cannot open with an extension (-2)")


@dataclass(frozen=True)
class NoteSeq:
    codes: tuple[int, ...]
    steps_per_measure: int
    measures: int

    def __post_init__(self) -> None:
        if not isinstance(self.codes, tuple):
            object.__setattr__(self, "codes", tuple(int(c) for c in self.codes))
        if self.steps_per_measure < 1 or self.measures < 1:
            raise InvalidSequence("steps_per_measure and measures must be positive")
        if len(self.codes) != self.steps_per_measure * self.measures:
            raise InvalidSequence(
                f"length {len(self.codes)} != {self.steps_per_measure} x {self.measures}"
            )
        validate_codes(self.codes)

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self) -> Iterator[int]:
        return iter(self.codes)

    @classmethod
    def rests(cls, steps_per_measure: int, measures: int) -> "NoteSeq":
        return cls((REST,) * (steps_per_measure * measures), steps_per_measure, measures)

    def with_codes(self, codes: Sequence[int]) -> "NoteSeq":
        return NoteSeq(tuple(codes), self.steps_per_measure, self.measures)


def sounded_notes(seq: NoteSeq | Sequence[int]) -> list[tuple[int, int, int]]:
    """``(pitch, onset_step, duration_steps)`` for every note, rests dropped.

    >>> sounded_notes([60, -1, 62, -2])
    [(60, 0, 1), (62, 2, 2)]
    """
    codes = seq.codes if isinstance(seq, NoteSeq) else seq
    notes: list[tuple[int, int, int]] = []
    pitch = onset = -1
    for i, c in enumerate(codes):
        if c == HOLD:
            continue
        if pitch >= 0:
            notes.append((pitch, onset, i - onset))
        pitch, onset = c, i
    if pitch >= 0:
        notes.append((pitch, onset, len(codes) - onset))
    return notes


def resolve_pitches(codes: Sequence[int]) -> list[int]:
    """Per-step sounding pitch, ``-1`` where silent (extensions follow their note)."""
    out = []
    current = REST
    for c in codes:
        if c != HOLD:
            current = c
        out.append(current)
    return out


@dataclass(frozen=True)
class HarmonicContext:
    scale: Scale
    chord_per_step: tuple[ChordSymbol, ...]
    beats_per_measure: int = 4

    @classmethod
    def for_section(
        cls,
        section: Section,
        measures: int | None = None,
        start_measure: int = 0,
        steps: int | None = None,
    ) -> "HarmonicContext":
        """Context for ``measures`` measures starting at ``start_measure``.

        ``steps`` truncates the grid (used for sub-measure units such as a
        half-measure motif).
        """
        spm = section.steps_per_measure
        n = section.n_measures if measures is None else measures
        chords = []
        for m in range(start_measure, start_measure + n):
            chords.extend([section.chord_at_measure(m)] * spm)
        if steps is not None:
            chords = chords[:steps]
        return cls(section.scale, tuple(chords), section.time_signature.numerator)

    def __len__(self) -> int:
        return len(self.chord_per_step)

    @cached_property
    def scale_mask(self) -> tuple[bool, ...]:
        return tuple(self.scale.contains(pc) for pc in range(12))

    @cached_property
    def chord_pc_sets(self) -> tuple[frozenset[int], ...]:
        cache: dict[ChordSymbol, frozenset[int]] = {}
        out = []
        for ch in self.chord_per_step:
            if ch not in cache:
                cache[ch] = frozenset(ch.resolved_pitch_classes)
            out.append(cache[ch])
        return tuple(out)

    @cached_property
    def chord_roots(self) -> tuple[int, ...]:
        return tuple(ch.root for ch in self.chord_per_step)


class FeatureVector:
    """The 21 normalized feature values, addressable by name or 1-based id."""

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float]):
        if len(values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} values, got {len(values)}")
        self.values = tuple(float(v) for v in values)

    def __getitem__(self, key: str | int) -> float:
        if isinstance(key, str):
            return self.values[FEATURE_INDEX[key]]
        return self.values[key - 1]

    def __getattr__(self, name: str) -> float:
        try:
            return self.values[FEATURE_INDEX[name]]
        except KeyError:
            raise AttributeError(name) from None

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FeatureVector) and self.values == other.values

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}={v:.3f}" for n, v in zip(FEATURES, self.values))
        return f"FeatureVector({inner})"

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURES, self.values))


def longest_repeated_fragment(codes: Sequence[int]) -> int:
    """Length of the longest code run that occurs twice without overlapping."""
    data = bytes(c + 2 for c in codes)
    n = len(data)

    def repeats(length: int) -> bool:
        first: dict[bytes, int] = {}
        for i in range(n - length + 1):
            chunk = data[i:i + length]
            j = first.setdefault(chunk, i)
            if i - j >= length:
                return True
        return False

    # a repeat of length L implies one of length L - 1: gallop, then bisect
    lo, hi = 0, n // 2
    probe = 1
    while probe <= hi and repeats(probe):
        lo, probe = probe, probe * 2
    hi = min(hi, probe - 1)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if repeats(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def _per_measure_unique_ratio(values: list[int], measures: list[int]) -> float:
    # measures is non-decreasing (notes are in onset order)
    total = 0.0
    groups = 0
    start = 0
    n = len(values)
    while start < n:
        m = measures[start]
        end = start + 1
        while end < n and measures[end] == m:
            end += 1
        total += len(set(values[start:end])) / (end - start)
        groups += 1
        start = end
    return total / groups if groups else 0.0


def _pstdev(xs: list[float]) -> float:
    n = len(xs)
    if n < 2:
        return 0.0
    mean = sum(xs) / n
    return math.sqrt(sum((x - mean) ** 2 for x in xs) / n)


def feature_values(codes: Sequence[int], spm: int, ctx: HarmonicContext) -> list[float]:
    """Raw-list form of :func:`extract_features` used by the GA hot loop."""
    length = len(codes)
    notes = sounded_notes(codes)
    n = len(notes)
    out = [0.0] * N_FEATURES

    pitches = [p for p, _, _ in notes]
    onsets = [o for _, o, _ in notes]
    durs = [d for _, _, d in notes]
    note_measures = [o // spm for o in onsets]
    intervals = [b - a for a, b in zip(pitches, pitches[1:])]
    n_int = len(intervals)
    log_span = math.log(spm) if spm > 1 else 0.0

    out[7] = (length - sum(durs)) / length if length else 0.0
    if length:
        out[19] = longest_repeated_fragment(codes) / length
        n_measures = length // spm if spm else 0
        chord_roots = ctx.chord_roots
        starts = 0
        for m in range(n_measures):
            c = codes[m * spm]
            if c >= 0 and c % 12 == chord_roots[m * spm]:
                starts += 1
        out[20] = starts / n_measures if n_measures else 0.0

    if n == 0:
        return out

    out[0] = _per_measure_unique_ratio(pitches, note_measures)
    scale_mask = ctx.scale_mask
    chord_sets = ctx.chord_pc_sets
    out[4] = sum(1 for p in pitches if scale_mask[p % 12]) / n
    out[5] = sum(1 for p, o in zip(pitches, onsets) if p % 12 in chord_sets[o]) / n
    out[6] = min(1.0, (max(pitches) - min(pitches)) / 48.0)
    out[8] = _per_measure_unique_ratio(durs, note_measures)
    out[9] = sum(pitches) / n / 127.0
    span = max(pitches) - min(pitches)
    # the spread can be at most half the range, so this stays within [0, 1]
    out[10] = _pstdev(pitches) / (span / 2.0) if span else 0.0

    strong = {0}
    if ctx.beats_per_measure == 4 and spm % 2 == 0:
        strong.add(spm // 2)
    strong_durs = [d for o, d in zip(onsets, durs) if o % spm in strong]
    if strong_durs:
        out[11] = min(1.0, sum(strong_durs) / len(strong_durs) / spm)

    out[13] = sum(1 for o in onsets if (o % spm) % 2 == 1) / n
    if log_span > 0:
        out[15] = min(1.0, max(0.0, math.log(sum(durs) / n) / log_span))
        out[16] = min(1.0, _pstdev([math.log(d) for d in durs]) / log_span)
    if n >= 2:
        out[18] = sum(1 for a, b in zip(durs, durs[1:]) if a <= 2 and b <= 2) / (n - 1)

    if n_int:
        abs_int = [abs(i) for i in intervals]
        out[1] = _per_measure_unique_ratio(intervals, note_measures[1:])
        out[2] = sum(1 for a in abs_int if a % 12 in DISSONANT_INTERVALS) / n_int
        out[3] = sum(1 for a in abs_int if a > 12) / n_int
        up = sum(1 for i in intervals if i > 0)
        down = sum(1 for i in intervals if i < 0)
        out[12] = up / (up + down) if up + down else 0.0
        out[14] = min(1.0, sum(abs_int) / n_int / 12.0)
        out[17] = sum(1 for a in abs_int if 1 <= a <= 3) / n_int
    return out


def extract_features(seq: NoteSeq, ctx: HarmonicContext) -> FeatureVector:
    """Measure all 21 features of ``seq`` under the harmonic context ``ctx``.

    Features that need intervals (or any note at all) are 0 when the
    sequence has too few sounded notes.
    """
    if len(ctx) != len(seq):
        raise ValueError(f"context covers {len(ctx)} steps, sequence has {len(seq)}")
    return FeatureVector(feature_values(seq.codes, seq.steps_per_measure, ctx))
