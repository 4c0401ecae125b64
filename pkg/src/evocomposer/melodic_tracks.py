"""Melody, bass and motif tracks.

Each of the eleven playing modes belongs to a track family (melody, solo,
bass, motif).  The family picks a column of the target table
(``data/target_table.csv``), valence and arousal nudge those targets, and the
GA evolves either the whole section or a short unit that is then tiled
according to the mode.
"""

from __future__ import annotations

import csv
import enum
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

from .evolution import FitnessSpec, GaConfig, MutationKind, mutate_codes, run_evolution
from .notation import FEATURES, HOLD, REST, HarmonicContext, NoteSeq
from .schema import Section


class MelodicMode(enum.Enum):
    MELODY = "melody"
    SOLO = "solo"
    SHORT_RIFF = "short_riff"
    LONG_RIFF = "long_riff"
    BASSLINE = "bassline"
    REPETITIVE_BASSLINE = "repetitive_bassline"
    LONG_MOTIF = "long_motif"
    OPENING_MOTIF = "opening_motif"
    CLOSING_MOTIF = "closing_motif"
    REPEATED_MOTIF = "repeated_motif"
    SHORT_REPEATED_MOTIF = "short_repeated_motif"

    @property
    def family(self) -> str:
        return _FAMILY[self]


_FAMILY = {
    MelodicMode.MELODY: "melody",
    MelodicMode.SOLO: "solo",
    MelodicMode.SHORT_RIFF: "bass",
    MelodicMode.LONG_RIFF: "bass",
    MelodicMode.BASSLINE: "bass",
    MelodicMode.REPETITIVE_BASSLINE: "bass",
    MelodicMode.LONG_MOTIF: "motif",
    MelodicMode.OPENING_MOTIF: "motif",
    MelodicMode.CLOSING_MOTIF: "motif",
    MelodicMode.REPEATED_MOTIF: "motif",
    MelodicMode.SHORT_REPEATED_MOTIF: "motif",
}
FAMILIES = ("melody", "solo", "bass", "motif")
DIRECTIONS = {"up": 1, "down": -1, "-": 0}


@dataclass(frozen=True)
class TargetRow:
    feature: str
    levels: dict[str, str]  # family -> Zero/Low/Med/High/-
    ei: str
    valence: int
    arousal: int


def load_target_table(path=None) -> tuple[TargetRow, ...]:
    """Read the target table; rows must cover every feature in order."""
    if path is None:
        text = resources.files("evocomposer.data").joinpath("target_table.csv").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows = []
    for rec in csv.DictReader(text.splitlines()):
        rows.append(TargetRow(
            feature=rec["feature"],
            levels={fam: rec[fam] for fam in FAMILIES},
            ei=rec["ei"],
            valence=DIRECTIONS[rec["valence"]],
            arousal=DIRECTIONS[rec["arousal"]],
        ))
    if tuple(r.feature for r in rows) != FEATURES:
        raise ValueError("target table rows must list every feature in canonical order")
    return tuple(rows)


TARGET_TABLE = load_target_table()


@dataclass(frozen=True)
class TargetParams:
    """Numeric meaning of the ordinal table cells plus register bands."""

    level_base: dict[str, float] = field(
        default_factory=lambda: {"Zero": 0.0, "Low": 0.05, "Med": 0.5, "High": 0.95}
    )
    ei_magnitude: dict[str, float] = field(
        default_factory=lambda: {"None": 0.0, "Low": 0.1, "Med": 0.2, "High": 0.3}
    )
    sigma: float = 0.15
    weight: float = 1.0
    harmony_weight: float = 2.0
    bands: dict[str, tuple[int, int]] = field(
        default_factory=lambda: {
            "bass": (24, 59),     # octaves 1-3
            "melody": (48, 95),   # octaves 3-6
            "solo": (48, 107),    # octaves 3-7
            "motif": (72, 107),   # octaves 5-7
        }
    )


DEFAULT_PARAMS = TargetParams()


def build_fitness_spec(
    mode: MelodicMode,
    valence: float,
    arousal: float,
    params: TargetParams = DEFAULT_PARAMS,
    table: Sequence[TargetRow] = TARGET_TABLE,
) -> FitnessSpec:
    """Gaussian targets for ``mode`` at the given emotion point.

    ``mu = base(level) + ei * (dv * valence + da * (2 * arousal - 1))`` clamped
    to [0, 1]; unused cells get weight 0.  The average-pitch target is read
    inside the family's register band rather than over the full MIDI range.
    """
    family = mode.family
    lo, hi = params.bands[family]
    a = 2.0 * arousal - 1.0
    mu, sigma, weight = [], [], []
    for row in table:
        level = row.levels[family]
        if level == "-":
            mu.append(0.5)
            weight.append(0.0)
        else:
            m = params.level_base[level] + params.ei_magnitude[row.ei] * (
                row.valence * valence + row.arousal * a
            )
            m = min(1.0, max(0.0, m))
            if row.feature == "avg_pitch":
                m = (lo + m * (hi - lo)) / 127.0
            mu.append(m)
            weight.append(params.weight)
        sigma.append(params.sigma)
    return FitnessSpec(tuple(mu), tuple(sigma), tuple(weight), params.harmony_weight)


# --------------------------------------------------------------------------- #
# tiling helpers
# --------------------------------------------------------------------------- #

def _wrap_shift(semitones: int) -> int:
    """Smallest transposition with the same pitch class, in [-6, 5]."""
    return (semitones + 6) % 12 - 6


def _lowest_pitch(codes: Sequence[int]) -> int | None:
    pitches = [c for c in codes if c >= 0]
    return min(pitches) if pitches else None


def _fit_copy(codes: list[int], band: tuple[int, int]) -> list[int]:
    """Move a whole copy by octaves into the band when that is possible."""
    pitches = [c for c in codes if c >= 0]
    if not pitches:
        return codes
    lo, hi = band
    shift = 0
    while max(pitches) + shift > hi and min(pitches) + shift - 12 >= lo:
        shift -= 12
    while min(pitches) + shift < lo and max(pitches) + shift + 12 <= hi:
        shift += 12
    return [c + shift if c >= 0 else c for c in codes]


def clamp_to_band(codes: Sequence[int], band: tuple[int, int]) -> list[int]:
    """Fold every sounded pitch into ``band`` by whole octaves."""
    lo, hi = band
    out = []
    for c in codes:
        if c >= 0:
            while c > hi and c - 12 >= lo:
                c -= 12
            while c < lo and c + 12 <= hi:
                c += 12
            c = min(hi, max(lo, c))
        out.append(c)
    return out


def _transpose(codes: Sequence[int], shift: int) -> list[int]:
    return [max(0, min(127, c + shift)) if c >= 0 else c for c in codes]


def _place(grid: list[int], pos: int, unit: Sequence[int], limit: int) -> None:
    for k, c in enumerate(unit):
        if pos + k >= limit:
            break
        grid[pos + k] = c
    if grid[pos] == HOLD:
        grid[pos] = REST


def align_unit(unit: Sequence[int], root_pc: int) -> list[int]:
    """Transpose ``unit`` so its lowest note has pitch class ``root_pc``."""
    low = _lowest_pitch(unit)
    if low is None:
        return list(unit)
    return _transpose(unit, _wrap_shift(root_pc - low))


def tile_unit(
    unit: Sequence[int],
    section: Section,
    positions: Sequence[int],
    band: tuple[int, int],
    align: bool = True,
) -> list[int]:
    """Paste transposed copies of ``unit`` at ``positions`` over a rest grid.

    Copy ``k`` moves by the root motion from the first copy's chord to the
    chord sounding at ``positions[k]``, so all full copies are transpositions
    of the unit (root-aligned unless ``align`` is false).  Copies are truncated at measure ends.
    """
    spm = section.steps_per_measure
    n = section.n_steps
    grid = [REST] * n
    if not positions:
        return grid
    first_root = section.chord_at_measure(positions[0] // spm).root
    base = align_unit(unit, first_root) if align else list(unit)
    for pos in positions:
        root = section.chord_at_measure(pos // spm).root
        copy = _fit_copy(_transpose(base, _wrap_shift(root - first_root)), band)
        measure_end = (pos // spm + 1) * spm
        _place(grid, pos, copy, min(n, measure_end) if len(unit) <= spm else n)
    return grid


# --------------------------------------------------------------------------- #
# bass lines built from chord roots
# --------------------------------------------------------------------------- #

BASS_OCTAVE_BASE = 36  # C2
BASS_MUTATIONS = (
    MutationKind.EXTEND,
    MutationKind.LONG_NOTE,
    MutationKind.LENGTH_NORMALIZE,
    MutationKind.REST,
)


def _scale_neighbour(section: Section, pitch: int, direction: int) -> int:
    p = pitch + direction
    while not section.scale.contains(p):
        p += direction
    return p


def _bass_measure(section: Section, root_pc: int, next_root_pc: int | None, arousal: float, rng: random.Random) -> list[int]:
    spm = section.steps_per_measure
    pulse = 8 if arousal < 0.33 else 4 if arousal < 0.66 else 2
    root = BASS_OCTAVE_BASE + root_pc
    codes = [HOLD] * spm
    for pos in range(0, spm, pulse):
        codes[pos] = root
    if next_root_pc is not None and spm >= 4 and rng.random() < 0.2 + 0.6 * arousal:
        target = BASS_OCTAVE_BASE + next_root_pc
        direction = -1 if target > root else 1
        span = min(4, spm // 2)
        step1 = _scale_neighbour(section, target, direction)
        if arousal > 0.5 and span >= 2:
            step2 = _scale_neighbour(section, step1, direction)
            half = span // 2
            codes[spm - span] = step2
            codes[spm - span + 1:spm - half] = [HOLD] * (span - half - 1)
            codes[spm - half] = step1
            codes[spm - half + 1:] = [HOLD] * (half - 1)
        else:
            codes[spm - span] = step1
            codes[spm - span + 1:] = [HOLD] * (span - 1)
    return codes


def _mutate_n(codes: list[int], n: int, rng: random.Random, spm: int, band: tuple[int, int]) -> list[int]:
    for _ in range(n):
        codes = mutate_codes(rng.choice(BASS_MUTATIONS), codes, rng, spm, band)
    return codes


def bassline(section: Section, arousal: float, rng: random.Random, band: tuple[int, int], repetitive: bool = False) -> list[int]:
    """Root-driven bass with stepwise approach notes and a few rhythmic mutations."""
    spm = section.steps_per_measure
    n_mut = round(1 + 3 * arousal)
    chords = section.chords_per_measure()
    if repetitive:
        unit = _bass_measure(section, chords[0].root, None, arousal, rng)
        unit = _mutate_n(unit, n_mut, rng, spm, band)
        positions = [m * spm for m in range(section.n_measures)]
        return tile_unit(unit, section, positions, band, align=False)
    codes: list[int] = []
    for m, chord in enumerate(chords):
        nxt = chords[m + 1].root if m + 1 < len(chords) else chords[0].root
        codes.extend(_bass_measure(section, chord.root, nxt, arousal, rng))
    return _mutate_n(codes, n_mut * section.n_measures, rng, spm, band)


# --------------------------------------------------------------------------- #
# track generation
# --------------------------------------------------------------------------- #

def _sub_refs(refs: Sequence[NoteSeq], steps: int, spm: int, measures: int) -> list[NoteSeq]:
    out = []
    for r in refs:
        codes = list(r.codes[:steps])
        if codes[0] == HOLD:
            codes[0] = REST
        out.append(NoteSeq(tuple(codes), spm, measures))
    return out


def _evolve_unit(
    steps: int,
    unit_spm: int,
    spec: FitnessSpec,
    ctx: HarmonicContext,
    refs: Sequence[NoteSeq],
    cfg: GaConfig,
    band: tuple[int, int],
    history: list[float] | None,
) -> list[int]:
    measures = steps // unit_spm
    sub_ctx = HarmonicContext(ctx.scale, ctx.chord_per_step[:steps], ctx.beats_per_measure)
    result = run_evolution(spec, cfg, sub_ctx, _sub_refs(refs, steps, unit_spm, measures), measures, band)
    if history is not None:
        history.extend(result.history)
    return list(result.best.codes)


def generate_track(
    mode: MelodicMode,
    section: Section,
    valence: float,
    arousal: float,
    ctx: HarmonicContext,
    refs: Sequence[NoteSeq],
    cfg: GaConfig,
    params: TargetParams = DEFAULT_PARAMS,
    history: list[float] | None = None,
) -> NoteSeq:
    """Generate one melodic track covering the whole section.

    ``refs`` are already generated tracks the harmony score compares
    against.  When ``history`` is a list it receives the GA fitness curve.
    """
    spm = section.steps_per_measure
    n_meas = section.n_measures
    n = section.n_steps
    if len(ctx) != n:
        raise ValueError("harmonic context must cover the whole section")
    family = mode.family
    band = params.bands[family]
    rng = random.Random(cfg.rng_seed)
    spec = build_fitness_spec(mode, valence, arousal, params)
    half = spm // 2

    if mode in (MelodicMode.MELODY, MelodicMode.SOLO):
        codes = _evolve_unit(n, spm, spec, ctx, refs, cfg, band, history)
    elif mode in (MelodicMode.SHORT_RIFF, MelodicMode.LONG_RIFF, MelodicMode.LONG_MOTIF):
        unit_meas = min(n_meas, 2 if mode is MelodicMode.LONG_RIFF else 1)
        unit = _evolve_unit(unit_meas * spm, spm, spec, ctx, refs, cfg, band, history)
        codes = tile_unit(unit, section, list(range(0, n, unit_meas * spm)), band)
    elif mode is MelodicMode.BASSLINE:
        codes = bassline(section, arousal, rng, band)
    elif mode is MelodicMode.REPETITIVE_BASSLINE:
        codes = bassline(section, arousal, rng, band, repetitive=True)
    elif mode is MelodicMode.OPENING_MOTIF:
        unit = _evolve_unit(half, half, spec, ctx, refs, cfg, band, history)
        codes = tile_unit(unit, section, [m * spm for m in range(n_meas)], band)
    elif mode is MelodicMode.CLOSING_MOTIF:
        unit = _evolve_unit(half, half, spec, ctx, refs, cfg, band, history)
        codes = tile_unit(unit, section, [m * spm + spm - half for m in range(n_meas)], band)
    elif mode is MelodicMode.REPEATED_MOTIF:
        unit = _evolve_unit(half, half, spec, ctx, refs, cfg, band, history)
        positions = [m * spm + k for m in range(n_meas) for k in range(0, spm, half)]
        codes = tile_unit(unit, section, positions, band)
    elif mode is MelodicMode.SHORT_REPEATED_MOTIF:
        size = min(4, spm)
        unit = _evolve_unit(size, size, spec, ctx, refs, cfg, band, history)
        positions = [m * spm + k for m in range(n_meas) for k in range(0, spm, size)]
        codes = tile_unit(unit, section, positions, band)
    else:  # pragma: no cover
        raise ValueError(f"unhandled mode {mode}")

    codes = clamp_to_band(codes, band)
    if codes[0] == HOLD:
        codes[0] = REST
    return NoteSeq(tuple(codes), spm, n_meas)


def unit_length(mode: MelodicMode, steps_per_measure: int) -> int | None:
    """Steps in the tiled unit of ``mode`` (None for non-tiled modes)."""
    spm = steps_per_measure
    return {
        MelodicMode.SHORT_RIFF: spm,
        MelodicMode.LONG_RIFF: 2 * spm,
        MelodicMode.LONG_MOTIF: spm,
        MelodicMode.OPENING_MOTIF: spm // 2,
        MelodicMode.CLOSING_MOTIF: spm // 2,
        MelodicMode.REPEATED_MOTIF: spm // 2,
        MelodicMode.SHORT_REPEATED_MOTIF: min(4, spm),
    }.get(mode)

