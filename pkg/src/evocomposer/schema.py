"""Composition document model.

A composition is the JSON structure a language model (or a person) writes to
describe a song: named sections with tempo, meter, scale, chords and tracks,
plus an arrangement that orders the sections and attaches a valence/arousal
point to each appearance.  :func:`parse_composition` validates the document
and resolves every derived value (scale members, chord pitch classes, grid
length of a measure) so downstream generators never re-parse text.

Example::

    comp = parse_composition(open("song.json").read())
    section = comp.sections["verse"]
    section.time_signature.steps_per_measure   # 16 for 4/4
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

SCHEMA_VERSION = 1

NOTE_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
_LETTER_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

SCALE_INTERVALS: dict[str, tuple[int, ...]] = {
    "major": (0, 2, 4, 5, 7, 9, 11),
    "natural_minor": (0, 2, 3, 5, 7, 8, 10),
    "harmonic_minor": (0, 2, 3, 5, 7, 8, 11),
    "melodic_minor": (0, 2, 3, 5, 7, 9, 11),
    "dorian": (0, 2, 3, 5, 7, 9, 10),
    "phrygian": (0, 1, 3, 5, 7, 8, 10),
    "lydian": (0, 2, 4, 6, 7, 9, 11),
    "mixolydian": (0, 2, 4, 5, 7, 9, 10),
    "locrian": (0, 1, 3, 5, 6, 8, 10),
    "major_pentatonic": (0, 2, 4, 7, 9),
    "minor_pentatonic": (0, 3, 5, 7, 10),
    "blues": (0, 3, 5, 6, 7, 10),
}
# exact synonyms only; anything else is rejected
SCALE_ALIASES = {
    "ionian": "major",
    "minor": "natural_minor",
    "aeolian": "natural_minor",
}

CHORD_INTERVALS: dict[str, tuple[int, ...]] = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
    "dom7": (0, 4, 7, 10),
    "sus2": (0, 2, 7),
    "sus4": (0, 5, 7),
    "maj9": (0, 4, 7, 11, 14),
    "min9": (0, 3, 7, 10, 14),
}
# suffix token -> quality; matching is case sensitive ("M7" vs "m7")
CHORD_TOKENS = {
    "": "maj", "maj": "maj", "M": "maj",
    "m": "min", "min": "min", "-": "min",
    "dim": "dim", "°": "dim", "o": "dim",
    "aug": "aug", "+": "aug",
    "maj7": "maj7", "M7": "maj7", "Δ7": "maj7",
    "m7": "min7", "min7": "min7", "-7": "min7",
    "7": "dom7", "dom7": "dom7",
    "sus2": "sus2",
    "sus4": "sus4", "sus": "sus4",
    "maj9": "maj9", "M9": "maj9",
    "m9": "min9", "min9": "min9",
}
QUALITY_SUFFIX = {
    "maj": "", "min": "m", "dim": "dim", "aug": "aug", "maj7": "maj7",
    "min7": "m7", "dom7": "7", "sus2": "sus2", "sus4": "sus4",
    "maj9": "maj9", "min9": "m9",
}

GM_PROGRAMS = (
    "Acoustic Grand Piano", "Bright Acoustic Piano", "Electric Grand Piano",
    "Honky-tonk Piano", "Electric Piano 1", "Electric Piano 2", "Harpsichord",
    "Clavinet", "Celesta", "Glockenspiel", "Music Box", "Vibraphone",
    "Marimba", "Xylophone", "Tubular Bells", "Dulcimer", "Drawbar Organ",
    "Percussive Organ", "Rock Organ", "Church Organ", "Reed Organ",
    "Accordion", "Harmonica", "Tango Accordion", "Acoustic Guitar (nylon)",
    "Acoustic Guitar (steel)", "Electric Guitar (jazz)",
    "Electric Guitar (clean)", "Electric Guitar (muted)", "Overdriven Guitar",
    "Distortion Guitar", "Guitar Harmonics", "Acoustic Bass",
    "Electric Bass (finger)", "Electric Bass (pick)", "Fretless Bass",
    "Slap Bass 1", "Slap Bass 2", "Synth Bass 1", "Synth Bass 2", "Violin",
    "Viola", "Cello", "Contrabass", "Tremolo Strings", "Pizzicato Strings",
    "Orchestral Harp", "Timpani", "String Ensemble 1", "String Ensemble 2",
    "Synth Strings 1", "Synth Strings 2", "Choir Aahs", "Voice Oohs",
    "Synth Voice", "Orchestra Hit", "Trumpet", "Trombone", "Tuba",
    "Muted Trumpet", "French Horn", "Brass Section", "Synth Brass 1",
    "Synth Brass 2", "Soprano Sax", "Alto Sax", "Tenor Sax", "Baritone Sax",
    "Oboe", "English Horn", "Bassoon", "Clarinet", "Piccolo", "Flute",
    "Recorder", "Pan Flute", "Blown Bottle", "Shakuhachi", "Whistle",
    "Ocarina", "Lead 1 (square)", "Lead 2 (sawtooth)", "Lead 3 (calliope)",
    "Lead 4 (chiff)", "Lead 5 (charang)", "Lead 6 (voice)", "Lead 7 (fifths)",
    "Lead 8 (bass + lead)", "Pad 1 (new age)", "Pad 2 (warm)",
    "Pad 3 (polysynth)", "Pad 4 (choir)", "Pad 5 (bowed)", "Pad 6 (metallic)",
    "Pad 7 (halo)", "Pad 8 (sweep)", "FX 1 (rain)", "FX 2 (soundtrack)",
    "FX 3 (crystal)", "FX 4 (atmosphere)", "FX 5 (brightness)",
    "FX 6 (goblins)", "FX 7 (echoes)", "FX 8 (sci-fi)", "Sitar", "Banjo",
    "Shamisen", "Koto", "Kalimba", "Bagpipe", "Fiddle", "Shanai",
    "Tinkle Bell", "Agogo", "Steel Drums", "Woodblock", "Taiko Drum",
    "Melodic Tom", "Synth Drum", "Reverse Cymbal", "Guitar Fret Noise",
    "Breath Noise", "Seashore", "Bird Tweet", "Telephone Ring", "Helicopter",
    "Applause", "Gunshot",
)
_GM_LOOKUP = {name.lower(): i for i, name in enumerate(GM_PROGRAMS)}

DRUM_KITS = ("standard", "ethnic", "orchestral")

ROLE_MODES: dict[str, tuple[str, ...]] = {
    "melody": ("melody", "solo"),
    "bass": ("short_riff", "long_riff", "bassline", "repetitive_bassline"),
    "motif": ("long_motif", "opening_motif", "closing_motif",
              "repeated_motif", "short_repeated_motif"),
    "chords": ("continuous", "repeated", "arpeggio"),
    "drums": ("only_beat", "drum_solo", "standard"),
}
DEFAULT_MODE = {
    "melody": "melody",
    "bass": "bassline",
    "motif": "long_motif",
    "chords": "continuous",
    "drums": "standard",
}
MAX_MELODIC_TRACKS = 9  # MIDI channels 0-8; channel 9 is percussion


class SchemaError(ValueError):
    """Invalid composition document.

    ``errors`` holds ``(json_path, message)`` pairs, e.g.
    ``(".arrangement[0].valence", "must be within [-1, 1], got 1.5")``.
    """

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        lines = [f"{path or '.'}: {msg}" for path, msg in self.errors]
        super().__init__("invalid composition:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class TimeSignature:
    numerator: int
    denominator: int

    @property
    def steps_per_measure(self) -> int:
        """Sixteenth-note grid cells in one measure."""
        return self.numerator * (16 // self.denominator)

    @property
    def steps_per_beat(self) -> int:
        return 16 // self.denominator

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"


@dataclass(frozen=True)
class Scale:
    root: int
    kind: str

    @property
    def pitch_classes(self) -> tuple[int, ...]:
        return tuple((self.root + i) % 12 for i in SCALE_INTERVALS[self.kind])

    def contains(self, pitch: int) -> bool:
        return (pitch - self.root) % 12 in SCALE_INTERVALS[self.kind]


@dataclass(frozen=True)
class ChordSymbol:
    root: int
    quality: str

    @property
    def intervals(self) -> tuple[int, ...]:
        return CHORD_INTERVALS[self.quality]

    @property
    def resolved_pitch_classes(self) -> tuple[int, ...]:
        return tuple((self.root + i) % 12 for i in self.intervals)

    @property
    def name(self) -> str:
        return NOTE_NAMES[self.root] + QUALITY_SUFFIX[self.quality]

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class TrackSpec:
    role: str
    instrument: int | str
    mode: str

    @property
    def is_drums(self) -> bool:
        return self.role == "drums"


@dataclass(frozen=True)
class Section:
    bpm: float
    time_signature: TimeSignature
    scale: Scale
    chord_progression: tuple[ChordSymbol, ...]
    tracks: tuple[TrackSpec, ...]
    repeats: int = 1
    measures: int | None = None

    @property
    def n_measures(self) -> int:
        return self.measures if self.measures is not None else len(self.chord_progression)

    @property
    def steps_per_measure(self) -> int:
        return self.time_signature.steps_per_measure

    @property
    def n_steps(self) -> int:
        return self.n_measures * self.steps_per_measure

    def chord_at_measure(self, measure: int) -> ChordSymbol:
        # one chord per measure, cycled when the section is longer than the progression
        return self.chord_progression[measure % len(self.chord_progression)]

    def chords_per_measure(self) -> list[ChordSymbol]:
        return [self.chord_at_measure(m) for m in range(self.n_measures)]


@dataclass(frozen=True)
class ArrangementEntry:
    section_id: str
    valence: float
    arousal: float


@dataclass(frozen=True)
class Composition:
    name: str
    sections: Mapping[str, Section]
    arrangement: tuple[ArrangementEntry, ...]
    composer_note: str = ""

    def section_for(self, entry: ArrangementEntry) -> Section:
        return self.sections[entry.section_id]


# --------------------------------------------------------------------------- #
# parsing helpers
# --------------------------------------------------------------------------- #

_CHORD_RE = re.compile(r"^\s*([A-Ga-g])([#♯b♭]?)(.*?)\s*$")


def parse_pitch_class(value: Any) -> int:
    """Accept 0-11 or a note name such as ``"F#"`` / ``"Bb"``."""
    if isinstance(value, bool):
        raise ValueError(f"not a pitch class: {value!r}")
    if isinstance(value, int):
        if 0 <= value <= 11:
            return value
        raise ValueError(f"pitch class must be 0-11, got {value}")
    if isinstance(value, str):
        m = re.fullmatch(r"\s*([A-Ga-g])([#♯b♭]?)\s*", value)
        if m:
            pc = _LETTER_PC[m.group(1).upper()]
            if m.group(2) in ("#", "♯"):
                pc += 1
            elif m.group(2) in ("b", "♭"):
                pc -= 1
            return pc % 12
    raise ValueError(f"not a pitch class: {value!r}")


def resolve_chord(symbol: str) -> ChordSymbol:
    """Parse ``<root><accidental?><quality?>`` into a :class:`ChordSymbol`.

    >>> resolve_chord("Am").resolved_pitch_classes
    (9, 0, 4)
    >>> resolve_chord("G7").resolved_pitch_classes
    (7, 11, 2, 5)
    """
    m = _CHORD_RE.match(symbol) if isinstance(symbol, str) else None
    if not m:
        raise ValueError(f"unparseable chord symbol {symbol!r}")
    root = parse_pitch_class(m.group(1).upper() + m.group(2))
    token = m.group(3)
    if token not in CHORD_TOKENS:
        raise ValueError(f"unknown chord quality {token!r} in {symbol!r}")
    return ChordSymbol(root=root, quality=CHORD_TOKENS[token])


def parse_time_signature(value: Any) -> TimeSignature:
    if isinstance(value, str):
        m = re.fullmatch(r"\s*(\d+)\s*/\s*(\d+)\s*", value)
        if not m:
            raise ValueError(f"time signature must look like '7/8', got {value!r}")
        num, den = int(m.group(1)), int(m.group(2))
    elif isinstance(value, Mapping):
        num, den = value.get("numerator"), value.get("denominator")
        if not isinstance(num, int) or not isinstance(den, int):
            raise ValueError("numerator and denominator must be integers")
    else:
        raise ValueError(f"time signature must be a string or object, got {value!r}")
    if not 1 <= num <= 32:
        raise ValueError(f"numerator must be within 1-32, got {num}")
    if den not in (1, 2, 4, 8, 16):
        raise ValueError(f"denominator must be one of 1, 2, 4, 8, 16, got {den}")
    return TimeSignature(num, den)


def parse_scale(value: Any) -> Scale:
    if isinstance(value, str):
        parts = value.split(None, 1)
        if len(parts) != 2:
            raise ValueError(f"scale string must look like 'C major', got {value!r}")
        value = {"root": parts[0], "kind": parts[1]}
    if not isinstance(value, Mapping):
        raise ValueError(f"scale must be an object, got {value!r}")
    root = parse_pitch_class(value.get("root"))
    kind = str(value.get("kind", "")).strip().lower().replace(" ", "_").replace("-", "_")
    kind = SCALE_ALIASES.get(kind, kind)
    if kind not in SCALE_INTERVALS:
        raise ValueError(f"unknown scale kind {value.get('kind')!r}")
    return Scale(root=root, kind=kind)


def parse_instrument(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError(f"not a General MIDI program: {value!r}")
    if isinstance(value, int):
        if 0 <= value <= 127:
            return value
        raise ValueError(f"General MIDI program must be 0-127, got {value}")
    if isinstance(value, str) and value.strip().lower() in _GM_LOOKUP:
        return _GM_LOOKUP[value.strip().lower()]
    raise ValueError(f"unknown General MIDI instrument {value!r}")


class _Collector:
    def __init__(self) -> None:
        self.errors: list[tuple[str, str]] = []

    def add(self, path: str, msg: str) -> None:
        self.errors.append((path, msg))

    def run(self, path: str, fn, *args):
        try:
            return fn(*args)
        except ValueError as exc:
            self.add(path, str(exc))
            return None


def _number(c: _Collector, path: str, value: Any, lo: float, hi: float) -> float | None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        c.add(path, f"must be a number, got {value!r}")
        return None
    if not lo <= value <= hi:
        c.add(path, f"must be within [{lo:g}, {hi:g}], got {value!r}")
        return None
    return float(value)


def _positive_int(c: _Collector, path: str, value: Any) -> int | None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        c.add(path, f"must be a positive integer, got {value!r}")
        return None
    return value


def _parse_track(c: _Collector, path: str, raw: Any) -> TrackSpec | None:
    if not isinstance(raw, Mapping):
        c.add(path, "track must be an object")
        return None
    role = raw.get("role")
    if role not in ROLE_MODES:
        c.add(path + ".role", f"unknown role {role!r}; expected one of {sorted(ROLE_MODES)}")
        return None
    mode = raw.get("mode", DEFAULT_MODE[role])
    if mode not in ROLE_MODES[role]:
        c.add(path + ".mode", f"mode {mode!r} is not legal for role {role!r}")
        mode = None
    if role == "drums":
        kit = raw.get("instrument", "standard")
        instrument: int | str | None = kit
        if kit not in DRUM_KITS:
            c.add(path + ".instrument", f"unknown drum kit {kit!r}; expected one of {list(DRUM_KITS)}")
            instrument = None
    else:
        instrument = c.run(path + ".instrument", parse_instrument, raw.get("instrument", 0))
    if mode is None or instrument is None:
        return None
    return TrackSpec(role=role, instrument=instrument, mode=mode)


def _parse_section(c: _Collector, path: str, raw: Any) -> Section | None:
    if not isinstance(raw, Mapping):
        c.add(path, "section must be an object")
        return None
    n_before = len(c.errors)
    bpm = _number(c, path + ".bpm", raw.get("bpm"), 20, 300)
    ts = c.run(path + ".time_signature", parse_time_signature, raw.get("time_signature"))
    scale = c.run(path + ".scale", parse_scale, raw.get("scale"))

    chords_raw = raw.get("chord_progression")
    chords: list[ChordSymbol] = []
    if not isinstance(chords_raw, list) or not chords_raw:
        c.add(path + ".chord_progression", "must be a non-empty list of chord symbols")
    else:
        for i, sym in enumerate(chords_raw):
            chord = c.run(f"{path}.chord_progression[{i}]", resolve_chord, sym)
            if chord is not None:
                chords.append(chord)

    tracks_raw = raw.get("tracks")
    tracks: list[TrackSpec] = []
    if not isinstance(tracks_raw, list) or not tracks_raw:
        c.add(path + ".tracks", "must be a non-empty list of tracks")
    else:
        for i, t in enumerate(tracks_raw):
            track = _parse_track(c, f"{path}.tracks[{i}]", t)
            if track is not None:
                tracks.append(track)
        melodic = sum(1 for t in tracks if not t.is_drums)
        if melodic > MAX_MELODIC_TRACKS:
            c.add(path + ".tracks", f"at most {MAX_MELODIC_TRACKS} melodic tracks per section, got {melodic}")

    repeats = _positive_int(c, path + ".repeats", raw.get("repeats", 1))
    measures = raw.get("measures")
    if measures is not None:
        measures = _positive_int(c, path + ".measures", measures)

    if len(c.errors) > n_before:
        return None
    return Section(
        bpm=bpm,
        time_signature=ts,
        scale=scale,
        chord_progression=tuple(chords),
        tracks=tuple(tracks),
        repeats=repeats,
        measures=measures,
    )


def composition_from_dict(doc: Any) -> Composition:
    """Validate an already-decoded JSON document."""
    c = _Collector()
    if not isinstance(doc, Mapping):
        raise SchemaError([("", "top level must be a JSON object")])
    if doc.get("schema_version") != SCHEMA_VERSION:
        c.add(".schema_version", f"must be {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    name = doc.get("name")
    if not isinstance(name, str) or not name.strip():
        c.add(".name", "must be a non-empty string")
    note = doc.get("composer_note", "")
    if not isinstance(note, str):
        c.add(".composer_note", "must be a string")
        note = ""

    sections: dict[str, Section] = {}
    raw_sections = doc.get("sections")
    if not isinstance(raw_sections, Mapping) or not raw_sections:
        c.add(".sections", "must be a non-empty object keyed by section id")
        raw_sections = {}
    for sid, raw in raw_sections.items():
        section = _parse_section(c, f".sections.{sid}", raw)
        if section is not None:
            sections[sid] = section

    arrangement: list[ArrangementEntry] = []
    raw_arr = doc.get("arrangement")
    if not isinstance(raw_arr, list) or not raw_arr:
        c.add(".arrangement", "must be a non-empty list")
        raw_arr = []
    for i, raw in enumerate(raw_arr):
        path = f".arrangement[{i}]"
        if not isinstance(raw, Mapping):
            c.add(path, "entry must be an object")
            continue
        sid = raw.get("section")
        if sid not in raw_sections:
            c.add(path + ".section", f"references unknown section {sid!r}")
        valence = _number(c, path + ".valence", raw.get("valence"), -1.0, 1.0)
        arousal = _number(c, path + ".arousal", raw.get("arousal"), 0.0, 1.0)
        if sid in raw_sections and valence is not None and arousal is not None:
            arrangement.append(ArrangementEntry(sid, valence, arousal))

    if c.errors:
        raise SchemaError(c.errors)
    return Composition(
        name=name.strip(),
        sections=sections,
        arrangement=tuple(arrangement),
        composer_note=note,
    )


def parse_composition(json_text: str | bytes) -> Composition:
    """Parse and validate composition JSON text.

    Raises :class:`SchemaError` for malformed JSON as well as for schema
    violations; every error carries the JSON path it refers to.
    """
    if isinstance(json_text, bytes):
        try:
            json_text = json_text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaError([("", f"input is not UTF-8: {exc}")]) from exc
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaError([("", f"malformed JSON: {exc}")]) from exc
    return composition_from_dict(doc)


def section_to_dict(section: Section) -> dict[str, Any]:
    out: dict[str, Any] = {
        "bpm": section.bpm,
        "time_signature": str(section.time_signature),
        "scale": {"root": NOTE_NAMES[section.scale.root], "kind": section.scale.kind},
        "chord_progression": [ch.name for ch in section.chord_progression],
        "tracks": [
            {"role": t.role, "instrument": t.instrument, "mode": t.mode}
            for t in section.tracks
        ],
        "repeats": section.repeats,
    }
    if section.measures is not None:
        out["measures"] = section.measures
    return out


def composition_to_dict(comp: Composition) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": comp.name,
        "sections": {sid: section_to_dict(s) for sid, s in comp.sections.items()},
        "arrangement": [
            {"section": e.section_id, "valence": e.valence, "arousal": e.arousal}
            for e in comp.arrangement
        ],
        "composer_note": comp.composer_note,
    }


def serialize_composition(comp: Composition, indent: int | None = 2) -> str:
    return json.dumps(composition_to_dict(comp), indent=indent, ensure_ascii=False)
