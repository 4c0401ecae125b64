"""Objective metrics over generated MIDI and the three benchmark scenarios.

Pitch metrics ignore the percussion channel; groove consistency uses every
onset, drums included.  Songs are read back from the encoded bytes with
``mido`` so the metrics see exactly what a listener's sequencer would.
"""

from __future__ import annotations

import io
import math
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import mido
import numpy as np
from scipy import stats

from .pipeline import Settings, derive_seed, render_composition
from .schema import (
    CHORD_INTERVALS,
    NOTE_NAMES,
    SCALE_INTERVALS,
    ArrangementEntry,
    ChordSymbol,
    Composition,
    Scale,
    Section,
    TimeSignature,
    TrackSpec,
    parse_composition,
    ROLE_MODES,
)

SCENARIOS = ("prompt_driven", "focused", "randomized")
METRICS = ("pitch_class_entropy", "scale_consistency", "groove_consistency")
DRUM_CHANNEL = 9
# onset grid used for groove consistency, in positions per quarter note
GROOVE_RESOLUTION = 12
_MAJOR = frozenset(SCALE_INTERVALS["major"])
_MINOR = frozenset(SCALE_INTERVALS["natural_minor"])


class ConfigurationError(RuntimeError):
    pass


def pitch_class_entropy(notes: Iterable[int]) -> float:
    """Shannon entropy (bits) of the 12-bin pitch-class histogram."""
    counts = Counter(int(n) % 12 for n in notes)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("pitch class entropy needs at least one note")
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h + 0.0


def scale_consistency(notes: Iterable[int]) -> float:
    """Best share of notes (percent) inside one major or minor scale."""
    hist = np.zeros(12)
    for n in notes:
        hist[int(n) % 12] += 1
    total = hist.sum()
    if total == 0:
        raise ValueError("scale consistency needs at least one note")
    best = 0.0
    for root in range(12):
        for pcs in (_MAJOR, _MINOR):
            share = sum(hist[(root + i) % 12] for i in pcs) / total
            best = max(best, share)
    return 100.0 * float(best)


def groove_consistency(
    onsets: Iterable[int],
    ts: TimeSignature,
    steps_per_quarter: int = 4,
    n_measures: int | None = None,
) -> float:
    """Mean similarity (percent) of consecutive measures' onset patterns.

    ``onsets`` are positions on a grid with ``steps_per_quarter`` cells per
    quarter note.  Similarity is one minus the Hamming distance of the two
    binary onset vectors divided by the measure length.
    """
    q = ts.numerator * steps_per_quarter * 4
    if q % ts.denominator:
        raise ValueError(f"{steps_per_quarter} cells per quarter cannot express {ts}")
    length = q // ts.denominator
    onsets = [int(o) for o in onsets]
    if n_measures is None:
        n_measures = max(onsets) // length + 1 if onsets else 0
    if n_measures < 2:
        raise ValueError("groove consistency needs at least two measures")
    grid = np.zeros((n_measures, length), dtype=bool)
    for o in onsets:
        if 0 <= o < n_measures * length:
            grid[o // length, o % length] = True
    dist = np.count_nonzero(grid[1:] != grid[:-1], axis=1) / length
    return 100.0 * float(1.0 - dist.mean())


# --------------------------------------------------------------------------- #
# reading songs back
# --------------------------------------------------------------------------- #

@dataclass
class SongNotes:
    ticks_per_quarter: int
    pitched: list[tuple[int, int]] = field(default_factory=list)   # (pitch, onset tick)
    drums: list[tuple[int, int]] = field(default_factory=list)
    meters: list[tuple[int, int, int]] = field(default_factory=list)  # (tick, num, den)
    end_tick: int = 0


def read_song(midi: bytes) -> SongNotes:
    mf = mido.MidiFile(file=io.BytesIO(midi))
    song = SongNotes(mf.ticks_per_beat)
    for track in mf.tracks:
        now = 0
        for msg in track:
            now += msg.time
            if msg.type == "time_signature":
                song.meters.append((now, msg.numerator, msg.denominator))
            elif msg.type == "note_on" and msg.velocity > 0:
                target = song.drums if msg.channel == DRUM_CHANNEL else song.pitched
                target.append((msg.note, now))
        song.end_tick = max(song.end_tick, now)
    song.meters.sort()
    if not song.meters:
        song.meters.append((0, 4, 4))
    return song


def song_groove(song: SongNotes, resolution: int = GROOVE_RESOLUTION) -> float:
    """Groove consistency over all onsets, comparing measures of equal meter."""
    tpq = song.ticks_per_quarter
    # measure boundaries from the meter changes
    bounds: list[tuple[int, int]] = []  # (start tick, length ticks)
    changes = [m for i, m in enumerate(song.meters) if i == 0 or m[1:] != song.meters[i - 1][1:]]
    for i, (tick, num, den) in enumerate(changes):
        stop = changes[i + 1][0] if i + 1 < len(changes) else song.end_tick
        mlen = tpq * 4 * num // den
        t = tick
        while t < stop:
            bounds.append((t, mlen))
            t += mlen
    if len(bounds) < 2:
        raise ValueError("groove consistency needs at least two measures")
    starts = [b[0] for b in bounds]
    cells = [b[1] * resolution // tpq for b in bounds]
    patterns = [np.zeros(c, dtype=bool) for c in cells]
    for _, tick in song.pitched + song.drums:
        m = int(np.searchsorted(starts, tick, side="right")) - 1
        if 0 <= m < len(bounds):
            pos = (tick - starts[m]) * resolution // tpq
            if pos < cells[m]:
                patterns[m][pos] = True
    sims = [
        1.0 - np.count_nonzero(a != b) / len(a)
        for a, b in zip(patterns, patterns[1:])
        if len(a) == len(b)
    ]
    if not sims:
        raise ValueError("no two consecutive measures share a meter")
    return 100.0 * float(np.mean(sims))


def song_metrics(midi: bytes, groove_resolution: int = GROOVE_RESOLUTION) -> dict[str, float]:
    song = read_song(midi)
    pitches = [p for p, _ in song.pitched]
    return {
        "pitch_class_entropy": pitch_class_entropy(pitches),
        "scale_consistency": scale_consistency(pitches),
        "groove_consistency": song_groove(song, groove_resolution),
    }


# --------------------------------------------------------------------------- #
# scenarios
# --------------------------------------------------------------------------- #

FOCUSED_TRACKS = (
    TrackSpec("chords", 0, "continuous"),
    TrackSpec("bass", 33, "bassline"),
    TrackSpec("melody", 73, "melody"),
    TrackSpec("drums", "standard", "standard"),
)


def focused_composition() -> Composition:
    section = Section(
        bpm=120.0,
        time_signature=TimeSignature(4, 4),
        scale=Scale(0, "major"),
        chord_progression=(ChordSymbol(0, "maj"), ChordSymbol(5, "maj"),
                           ChordSymbol(9, "min"), ChordSymbol(5, "maj")),
        tracks=FOCUSED_TRACKS,
    )
    return Composition("focused", {"A": section}, (ArrangementEntry("A", 0.0, 0.5),))


def scale_chords(scale: Scale) -> list[ChordSymbol]:
    """Every catalog chord whose pitch classes all lie in ``scale``."""
    pcs = set(scale.pitch_classes)
    out = []
    for root in range(12):
        for quality in CHORD_INTERVALS:
            ch = ChordSymbol(root, quality)
            if set(ch.resolved_pitch_classes) <= pcs:
                out.append(ch)
    return out


def random_composition(rng: random.Random, n_chords: int = 4) -> Composition:
    """Random meter, tempo, key, emotion and modes; chords drawn from the key."""
    den = rng.choice((4, 8))
    num = rng.randint(2, 9) if den == 4 else rng.randint(3, 12)
    scale = Scale(rng.randrange(12), rng.choice(("major", "natural_minor")))
    pool = scale_chords(scale)
    chords = tuple(rng.choice(pool) for _ in range(n_chords))
    tracks = tuple(
        TrackSpec(role, "standard" if role == "drums" else rng.randrange(128), rng.choice(ROLE_MODES[role]))
        for role in ("chords", "bass", "melody", "drums")
    )
    section = Section(
        bpm=float(rng.randint(60, 180)),
        time_signature=TimeSignature(num, den),
        scale=scale,
        chord_progression=chords,
        tracks=tracks,
    )
    entry = ArrangementEntry("A", round(rng.uniform(-1, 1), 3), round(rng.uniform(0, 1), 3))
    return Composition(f"random-{NOTE_NAMES[scale.root]}", {"A": section}, (entry,))


DEFAULT_PROMPTS = (
    "a calm piano ballad about a quiet winter morning",
    "an upbeat pop song with a catchy chorus",
    "a dark and tense soundtrack for a chase scene",
    "a relaxed bossa nova for a summer evening",
    "an energetic rock anthem in 7/8",
    "a melancholic waltz for strings",
    "a playful tune for a children's cartoon",
    "an epic orchestral piece building to a climax",
)


def _render_metrics(job: tuple[Composition, int, Settings, int]) -> dict[str, float]:
    comp, seed, settings, resolution = job
    return song_metrics(render_composition(comp, seed, settings).midi, resolution)


@dataclass
class ScenarioReport:
    kind: str
    n: int
    seed: int
    songs: list[dict[str, float]]
    summary: dict[str, dict[str, float | None]]

    def as_dict(self) -> dict[str, Any]:
        return {"scenario": self.kind, "n": self.n, "seed": self.seed,
                "summary": self.summary, "songs": self.songs}


def summarize(values: Sequence[float], confidence: float = 0.95) -> dict[str, float | None]:
    """Mean and the half-width of its Student-t confidence interval."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("nothing to summarize")
    mean = float(x.mean())
    if n < 2:
        return {"mean": mean, "ci95": None, "n": n}
    sem = float(x.std(ddof=1)) / math.sqrt(n)
    half = float(stats.t.ppf(0.5 + confidence / 2, n - 1)) * sem
    return {"mean": mean, "ci95": half, "n": n}


def run_scenario(
    kind: str,
    n_songs: int,
    seed: int,
    settings: Settings = Settings(),
    request: Callable[[str], str] | None = None,
    prompts: Sequence[str] = DEFAULT_PROMPTS,
    workers: int = 1,
    groove_resolution: int = GROOVE_RESOLUTION,
) -> ScenarioReport:
    """Generate ``n_songs`` songs for a scenario and aggregate their metrics.

    ``request`` turns a text prompt into composition JSON; only the
    prompt-driven scenario needs it.
    """
    if kind not in SCENARIOS:
        raise ValueError(f"unknown scenario {kind!r}; expected one of {list(SCENARIOS)}")
    if n_songs < 1:
        raise ValueError("n_songs must be >= 1")
    comps: list[Composition] = []
    if kind == "focused":
        comps = [focused_composition()] * n_songs
    elif kind == "randomized":
        comps = [random_composition(random.Random(derive_seed(seed, kind, k))) for k in range(n_songs)]
    else:
        if request is None:
            raise ConfigurationError("the prompt-driven scenario needs a language model client")
        comps = [parse_composition(request(prompts[k % len(prompts)])) for k in range(n_songs)]
    jobs = [(c, derive_seed(seed, kind, "song", k), settings, groove_resolution) for k, c in enumerate(comps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            songs = list(pool.map(_render_metrics, jobs))
    else:
        songs = [_render_metrics(j) for j in jobs]
    summary = {m: summarize([s[m] for s in songs]) for m in METRICS}
    return ScenarioReport(kind, n_songs, seed, songs, summary)
