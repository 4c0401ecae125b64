"""Drum tracks for any time signature.

A drum state is a 12-bit integer, one per sixteenth step.  Component ``k``
(1-based) lives in bit ``k - 1``::

     1 closed hi-hat   2 open hi-hat   3 bass drum   4 snare
     5-9 toms (low -> high)   10 crash   11 ride   12 bell

Kick and snare come from per-beat probability tables for 2-9 beats in
quarter or eighth units; longer meters are split recursively.  Hi-hats,
cymbals, Markov-chain tom fills and a realism pass are layered on top.
"""

from __future__ import annotations

import bisect
import json
import random
from dataclasses import dataclass, field
from importlib import resources
from itertools import accumulate
from typing import Sequence

from .schema import DRUM_KITS, Section, TimeSignature

CLOSED_HH = 1 << 0
OPEN_HH = 1 << 1
KICK = 1 << 2
SNARE = 1 << 3
TOM_SHIFT = 4
TOMS = 0b11111 << TOM_SHIFT
CRASH = 1 << 9
RIDE = 1 << 10
BELL = 1 << 11
ALL_BITS = (1 << 12) - 1
# components played with the hands: 1, 2 and 5-12
HAND_MASK = CLOSED_HH | OPEN_HH | TOMS | CRASH | RIDE | BELL
# components 5-12
UPPER_MASK = TOMS | CRASH | RIDE | BELL

DRUM_MODES = ("only_beat", "drum_solo", "standard")


def component_bit(component: int) -> int:
    """Bit mask of 1-based drum component ``component``."""
    if not 1 <= component <= 12:
        raise ValueError(f"drum component must be 1-12, got {component}")
    return 1 << (component - 1)


def state_to_string(state: int) -> str:
    """Render a state component 1 first, e.g. closed hi-hat + kick -> ``101000000000``."""
    return "".join("1" if state >> i & 1 else "0" for i in range(12))


def state_from_string(text: str) -> int:
    if len(text) != 12 or set(text) - {"0", "1"}:
        raise ValueError(f"expected 12 binary digits, got {text!r}")
    return sum(1 << i for i, ch in enumerate(text) if ch == "1")


@dataclass(frozen=True)
class DrumGrid:
    states: tuple[int, ...]
    steps_per_measure: int
    measures: int

    def __post_init__(self) -> None:
        if len(self.states) != self.steps_per_measure * self.measures:
            raise ValueError("drum grid length must equal steps_per_measure x measures")
        if any(not 0 <= s <= ALL_BITS for s in self.states):
            raise ValueError("drum states must lie in 0..4095")

    def __len__(self) -> int:
        return len(self.states)

    def measure(self, m: int) -> tuple[int, ...]:
        spm = self.steps_per_measure
        return self.states[m * spm:(m + 1) * spm]

    @classmethod
    def concat(cls, grids: Sequence["DrumGrid"]) -> "DrumGrid":
        if not grids:
            raise ValueError("nothing to concatenate")
        spm = grids[0].steps_per_measure
        if any(g.steps_per_measure != spm for g in grids):
            raise ValueError("grids differ in measure length")
        states: list[int] = []
        for g in grids:
            states.extend(g.states)
        return cls(tuple(states), spm, sum(g.measures for g in grids))


# --------------------------------------------------------------------------- #
# data files
# --------------------------------------------------------------------------- #

def _load_json(name: str, path=None) -> dict:
    if path is None:
        return json.loads(resources.files("evocomposer.data").joinpath(name).read_text())
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class BeatTable:
    """``(beats, unit) -> (kick probabilities, snare probabilities)`` per beat."""

    rows: dict[tuple[int, int], tuple[tuple[float, ...], tuple[float, ...]]]

    def __post_init__(self) -> None:
        for key, (kick, snare) in self.rows.items():
            beats, _ = key
            if len(kick) != beats or len(snare) != beats:
                raise ValueError(f"pattern {key} must list one probability per beat")
            if any(not 0 <= p <= 1 for p in (*kick, *snare)):
                raise ValueError(f"pattern {key} has probabilities outside [0, 1]")
        missing = [(b, u) for b in range(2, 10) for u in (4, 8) if (b, u) not in self.rows]
        if missing:
            raise ValueError(f"beat table lacks patterns {missing}")

    @classmethod
    def load(cls, path=None) -> "BeatTable":
        doc = _load_json("beat_table.json", path)
        rows = {}
        for key, val in doc["patterns"].items():
            beats, unit = (int(x) for x in key.split("/"))
            rows[(beats, unit)] = (tuple(val["kick"]), tuple(val["snare"]))
        return cls(rows)

    def pattern(self, beats: int, unit: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
        return self.rows[(beats, unit)]


@dataclass(frozen=True)
class FillChain:
    """First-order Markov chain over 5-bit tom states (bit 0 = lowest tom)."""

    matrix: tuple[tuple[float, ...], ...]
    start_state: int = 0b10000

    def __post_init__(self) -> None:
        if len(self.matrix) != 32 or any(len(r) != 32 for r in self.matrix):
            raise ValueError("fill chain matrix must be 32 x 32")
        for i, row in enumerate(self.matrix):
            if any(p < 0 for p in row) or abs(sum(row) - 1.0) > 1e-9:
                raise ValueError(f"fill chain row {i} is not a probability distribution")
        if not 0 <= self.start_state < 32:
            raise ValueError("start state must be a 5-bit value")
        cum = tuple(tuple(accumulate(r)) for r in self.matrix)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def load(cls, path=None) -> "FillChain":
        doc = _load_json("fill_chain.json", path)
        return cls(tuple(tuple(r) for r in doc["matrix"]), doc.get("start_state", 0b10000))

    def next_state(self, state: int, rng: random.Random) -> int:
        cum = self._cum[state]  # type: ignore[attr-defined]
        i = bisect.bisect_right(cum, rng.random() * cum[-1])
        return min(i, 31)


@dataclass(frozen=True)
class DrumKit:
    name: str
    program: int
    notes: tuple[int, ...]  # GM note for components 1..12


def load_kits(path=None) -> dict[str, DrumKit]:
    doc = _load_json("kits.json", path)
    kits = {}
    for name, val in doc["kits"].items():
        if len(val["notes"]) != 12:
            raise ValueError(f"kit {name!r} must map all 12 components")
        kits[name] = DrumKit(name, int(val["program"]), tuple(val["notes"]))
    return kits


DEFAULT_BEAT_TABLE = BeatTable.load()
DEFAULT_FILL_CHAIN = FillChain.load()
KITS = load_kits()


@dataclass(frozen=True)
class DrumParams:
    hihat_quarter_below: float = 0.33
    hihat_eighth_below: float = 0.75
    open_hihat_scale: float = 0.5
    ride_base: float = 0.1
    ride_arousal: float = 0.3
    bell_base: float = 0.0
    bell_arousal: float = 0.15
    crash_start: float = 0.6
    crash_elsewhere: float = 0.02
    fill_base: float = 0.1
    fill_arousal: float = 0.4
    echo: float = 0.08
    sparsity: float = 0.05
    beat_table: BeatTable = field(default=DEFAULT_BEAT_TABLE, repr=False)
    fill_chain: FillChain = field(default=DEFAULT_FILL_CHAIN, repr=False)


DEFAULT_DRUM_PARAMS = DrumParams()


# --------------------------------------------------------------------------- #
# meter handling
# --------------------------------------------------------------------------- #

def pad_interval(unit: int) -> int:
    """Silent states after each beat of a ``unit``-note beat: ``16 / unit - 1``."""
    if unit not in (1, 2, 4, 8, 16):
        raise ValueError(f"beat unit must be 1, 2, 4, 8 or 16, got {unit}")
    return 16 // unit - 1


def _split(n: int) -> list[int]:
    if n <= 9:
        return [n]
    first = (n + 1) // 2
    return _split(first) + _split(n - first)


def decompose_signature(ts: TimeSignature) -> list[TimeSignature]:
    """Break a meter into table-sized parts.

    13/8 -> [7/8, 6/8]; 25/4 -> [7/4, 6/4, 6/4, 6/4].  Sixteenth meters use the
    eighth-note patterns (11/16 -> 11/8 -> [6/8, 5/8]) and half or whole
    meters the quarter-note ones.
    """
    if ts.numerator < 2:
        raise ValueError(f"cannot decompose a meter with numerator {ts.numerator}")
    unit = 8 if ts.denominator >= 8 else 4
    return [TimeSignature(n, unit) for n in _split(ts.numerator)]


def hihat_spacing(arousal: float, params: DrumParams = DEFAULT_DRUM_PARAMS) -> int:
    """Steps between hi-hat strokes: quarter, eighth or sixteenth."""
    if arousal < params.hihat_quarter_below:
        return 4
    if arousal < params.hihat_eighth_below:
        return 2
    return 1


# --------------------------------------------------------------------------- #
# generation
# --------------------------------------------------------------------------- #

def fill_state_to_drums(state: int) -> int:
    """Map a 5-bit fill state onto tom bits; the snare doubles the lowest tom."""
    drums = (state & 0b11111) << TOM_SHIFT
    if state & 1:
        drums |= SNARE
    return drums


def generate_fill(
    length_steps: int,
    chain: FillChain = DEFAULT_FILL_CHAIN,
    rng: random.Random | None = None,
    start_state: int | None = None,
) -> list[int]:
    """Walk the chain for ``length_steps`` steps starting at ``start_state``."""
    if length_steps < 1:
        raise ValueError("fill length must be >= 1")
    rng = rng or random.Random()
    state = chain.start_state if start_state is None else start_state
    out = [fill_state_to_drums(state)]
    for _ in range(length_steps - 1):
        state = chain.next_state(state, rng)
        out.append(fill_state_to_drums(state))
    return out


def _kick_snare(ts: TimeSignature, rng: random.Random, table: BeatTable) -> list[int]:
    pad = pad_interval(ts.denominator)
    if ts.numerator == 1:
        kick, snare = table.pattern(2, 8 if ts.denominator >= 8 else 4)
        parts = [(kick[:1], snare[:1])]
    else:
        parts = [table.pattern(p.numerator, p.denominator) for p in decompose_signature(ts)]
    states: list[int] = []
    for kick, snare in parts:
        for pk, ps in zip(kick, snare):
            s = 0
            if rng.random() < pk:
                s |= KICK
            if rng.random() < ps:
                s |= SNARE
            states.append(s)
            states.extend([0] * pad)
    return states


def generate_measure(
    ts: TimeSignature,
    valence: float,
    arousal: float,
    mode: str,
    rng: random.Random,
    params: DrumParams = DEFAULT_DRUM_PARAMS,
    final: bool = False,
    ride: bool | None = None,
    bell: bool | None = None,
) -> DrumGrid:
    """One measure of raw (not yet post-processed) drum states.

    ``final`` marks the last measure of a section, where fills are twice as
    likely.  ``ride``/``bell`` force the off-beat cymbal layers; ``None``
    draws them from the arousal-dependent probabilities.
    """
    if mode not in DRUM_MODES:
        raise ValueError(f"unknown drum mode {mode!r}")
    spm = ts.steps_per_measure
    states = _kick_snare(ts, rng, params.beat_table)
    assert len(states) == spm

    spacing = hihat_spacing(arousal, params)
    hh_steps = list(range(0, spm, spacing))
    for i in hh_steps:
        states[i] |= CLOSED_HH
    if hh_steps and rng.random() < params.open_hihat_scale * arousal:
        last = hh_steps[-1]
        states[last] = (states[last] & ~CLOSED_HH) | OPEN_HH

    if ride is None:
        ride = rng.random() < params.ride_base + params.ride_arousal * arousal
    if bell is None:
        bell = rng.random() < params.bell_base + params.bell_arousal * arousal
    for i in range(2, spm, 4):
        if ride:
            states[i] |= RIDE
        if bell:
            states[i] |= BELL

    if rng.random() < params.crash_start:
        states[0] |= CRASH
    beat = ts.steps_per_beat
    for i in range(beat, spm, beat):
        if rng.random() < params.crash_elsewhere:
            states[i] |= CRASH

    if mode == "drum_solo":
        fill = generate_fill(spm, params.fill_chain, rng)
        states = [(s & (KICK | CRASH)) | f for s, f in zip(states, fill)]
    elif mode == "standard":
        p = (params.fill_base + params.fill_arousal * arousal) * (2.0 if final else 1.0)
        if rng.random() < min(1.0, p):
            length = min(spm, 8 if rng.random() < arousal else 4)
            fill = generate_fill(length, params.fill_chain, rng)
            keep = KICK | CRASH
            for k, f in enumerate(fill):
                i = spm - length + k
                states[i] = (states[i] & keep) | f
    return DrumGrid(tuple(states), spm, 1)


def post_process(grid: DrumGrid, rng: random.Random, params: DrumParams = DEFAULT_DRUM_PARAMS) -> DrumGrid:
    """Realism pass.

    1. kick/snare hits echo into the next step with probability ``params.echo``;
    2. while more than two hand-played bits are set in a state, clear one at
       random;
    3. every bit of components 5-12 is cleared with probability
       ``params.sparsity``.
    """
    src = grid.states
    states = list(src)
    n = len(states)
    for i in range(n - 1):
        for bit in (KICK, SNARE):
            if src[i] & bit and rng.random() < params.echo:
                states[i + 1] |= bit
    for i, s in enumerate(states):
        hands = [b for b in range(12) if (HAND_MASK >> b) & 1 and (s >> b) & 1]
        while len(hands) > 2:
            b = hands.pop(rng.randrange(len(hands)))
            s &= ~(1 << b)
        for b in range(4, 12):
            if (s >> b) & 1 and rng.random() < params.sparsity:
                s &= ~(1 << b)
        states[i] = s
    return DrumGrid(tuple(states), grid.steps_per_measure, grid.measures)


def generate_drum_track(
    section: Section,
    valence: float,
    arousal: float,
    mode: str,
    rng: random.Random,
    params: DrumParams = DEFAULT_DRUM_PARAMS,
) -> DrumGrid:
    """Post-processed drum grid for every measure of ``section``."""
    ride = rng.random() < params.ride_base + params.ride_arousal * arousal
    bell = rng.random() < params.bell_base + params.bell_arousal * arousal
    measures = []
    n = section.n_measures
    for m in range(n):
        raw = generate_measure(
            section.time_signature, valence, arousal, mode, rng, params,
            final=(m == n - 1), ride=ride, bell=bell,
        )
        measures.append(post_process(raw, rng, params))
    return DrumGrid.concat(measures)


def map_to_kit(grid: DrumGrid | Sequence[int], kit: str) -> list[tuple[int, int]]:
    """``(gm_note, onset_step)`` for every set bit, ordered by step then note."""
    if kit not in KITS:
        raise ValueError(f"unknown drum kit {kit!r}; expected one of {list(DRUM_KITS)}")
    notes = KITS[kit].notes
    states = grid.states if isinstance(grid, DrumGrid) else grid
    events = []
    for step, s in enumerate(states):
        hits = sorted(notes[b] for b in range(12) if (s >> b) & 1)
        events.extend((note, step) for note in hits)
    return events
