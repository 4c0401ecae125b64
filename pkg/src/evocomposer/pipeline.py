"""From a validated composition to MIDI bytes.

Every track draws from its own random stream, derived from the master seed,
the section id, the occurrence of that section in the arrangement and the
track's position.  Changing one section (or a tempo anywhere) therefore
leaves every other track's notes untouched.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .assembler import (
    DRUM_CHANNEL,
    MELODIC_VELOCITY,
    MidiEvent,
    Part,
    TrackSet,
    assemble,
    drum_events,
    merge_voices,
    section_ticks,
)
from .evolution import GaConfig
from .harmony_tracks import generate_chord_track
from .melodic_tracks import DEFAULT_PARAMS, MelodicMode, TargetParams, generate_track
from .notation import HarmonicContext, NoteSeq
from .percussion import DEFAULT_DRUM_PARAMS, KITS, DrumParams, generate_drum_track, map_to_kit
from .schema import ArrangementEntry, Composition, Section, section_to_dict

# tracks are generated in this role order so later ones can listen to earlier ones
ROLE_ORDER = ("chords", "bass", "melody", "motif", "drums")
HARMONY_REFS = {
    "chords": (),
    "bass": ("chords",),
    "melody": ("chords", "bass"),
    "motif": ("chords",),
}


@dataclass(frozen=True)
class Settings:
    ga: GaConfig = field(default_factory=GaConfig)
    targets: TargetParams = DEFAULT_PARAMS
    drums: DrumParams = DEFAULT_DRUM_PARAMS
    chord_omission: float | None = None
    vary_repeats: bool = False

    def summary(self) -> dict[str, Any]:
        ga = self.ga
        return {
            "population_size": ga.population_size,
            "generations": ga.generations,
            "tournament_size": ga.tournament_size,
            "mutation_rate": ga.mutation_rate,
            "crossover_rate": ga.crossover_rate,
            "elitism_count": ga.elitism_count,
            "sigma": self.targets.sigma,
            "weight": self.targets.weight,
            "harmony_weight": self.targets.harmony_weight,
            "chord_omission": self.chord_omission,
            "vary_repeats": self.vary_repeats,
        }


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from any printable parts."""
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big") >> 1


@dataclass
class TrackReport:
    section_id: str
    occurrence: int
    repeat: int
    track_index: int
    role: str
    mode: str
    seed: int
    fitness_history: list[float] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        return {
            "section": self.section_id,
            "occurrence": self.occurrence,
            "repeat": self.repeat,
            "track": self.track_index,
            "role": self.role,
            "mode": self.mode,
            "seed": self.seed,
            "best_fitness": self.fitness_history[-1] if self.fitness_history else None,
            "fitness_history": list(self.fitness_history),
        }


@dataclass
class SectionRender:
    trackset: TrackSet
    voices: dict[int, list[NoteSeq]]
    reports: list[TrackReport]


def channel_map(section: Section) -> dict[int, int]:
    """Track index -> MIDI channel: melodic tracks take 0, 1, ... in listed order."""
    out = {}
    nxt = 0
    for i, t in enumerate(section.tracks):
        if t.is_drums:
            out[i] = DRUM_CHANNEL
        else:
            out[i] = nxt
            nxt += 1
    return out


def render_section(
    section_id: str,
    section: Section,
    entry: ArrangementEntry,
    seed: int,
    occurrence: int = 0,
    repeat: int = 0,
    settings: Settings = Settings(),
) -> SectionRender:
    """Generate every track of one section occurrence."""
    ctx = HarmonicContext.for_section(section)
    v, a = entry.valence, entry.arousal
    voices: dict[int, list[NoteSeq]] = {}
    roles_done: dict[str, list[NoteSeq]] = {r: [] for r in ROLE_ORDER}
    reports = []
    order = sorted(range(len(section.tracks)), key=lambda i: (ROLE_ORDER.index(section.tracks[i].role), i))
    drum_hits: dict[int, set[tuple[int, int]]] = {}

    for i in order:
        track = section.tracks[i]
        s = derive_seed(seed, section_id, occurrence, repeat, i, track.role)
        rep = TrackReport(section_id, occurrence, repeat, i, track.role, track.mode, s)
        rng = random.Random(s)
        if track.role == "chords":
            out = generate_chord_track(section, v, a, track.mode, rng, settings.chord_omission)
        elif track.role == "drums":
            grid = generate_drum_track(section, v, a, track.mode, rng, settings.drums)
            drum_hits[i] = set(map_to_kit(grid, str(track.instrument)))
            reports.append(rep)
            continue
        else:
            refs = [seq for r in HARMONY_REFS[track.role] for seq in roles_done[r]]
            out = [generate_track(
                MelodicMode(track.mode), section, v, a, ctx, refs,
                settings.ga.with_seed(s), settings.targets, rep.fitness_history,
            )]
        voices[i] = out
        roles_done[track.role].extend(out)
        reports.append(rep)

    cmap = channel_map(section)
    parts = []
    for i, track in enumerate(section.tracks):
        if track.is_drums:
            continue
        parts.append(Part(track.role, cmap[i], int(track.instrument),
                          tuple(merge_voices(voices[i], cmap[i], velocity=MELODIC_VELOCITY))))
    if drum_hits:
        first = min(drum_hits)
        kit = KITS[str(section.tracks[first].instrument)]
        hits: set[tuple[int, int]] = set().union(*drum_hits.values())
        accents = (kit.notes[2], kit.notes[9])
        parts.append(Part("drums", DRUM_CHANNEL, kit.program,
                          tuple(drum_events(sorted(hits, key=lambda h: (h[1], h[0])), accents))))
    parts.sort(key=lambda p: p.channel)
    ts = TrackSet(section_id, section_ticks(section), tuple(parts))
    reports.sort(key=lambda r: r.track_index)
    return SectionRender(ts, voices, reports)


def entry_fingerprint(
    comp: Composition,
    index: int,
    seed: int,
    settings: Settings,
) -> str:
    """Hash of everything that influences an entry's notes (tempo excluded)."""
    entry = comp.arrangement[index]
    sec = section_to_dict(comp.section_for(entry))
    sec.pop("bpm", None)
    occurrence = sum(1 for e in comp.arrangement[:index] if e.section_id == entry.section_id)
    doc = {
        "section_id": entry.section_id,
        "section": sec,
        "valence": entry.valence,
        "arousal": entry.arousal,
        "occurrence": occurrence,
        "seed": seed,
        "settings": repr(replace(settings, ga=replace(settings.ga, workers=1, rng_seed=0))),
        "beat_table": repr(sorted(settings.drums.beat_table.rows.items())),
        "fill_chain": repr(settings.drums.fill_chain),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def trackset_to_dict(ts: TrackSet) -> dict[str, Any]:
    return {
        "section_id": ts.section_id,
        "duration_ticks": ts.duration_ticks,
        "parts": [
            {
                "role": p.role,
                "channel": p.channel,
                "program": p.program,
                "events": [[e.tick, int(e.is_on), e.pitch, e.velocity] for e in p.events],
            }
            for p in ts.parts
        ],
    }


def trackset_from_dict(doc: Mapping[str, Any]) -> TrackSet:
    parts = []
    for p in doc["parts"]:
        ch = int(p["channel"])
        events = tuple(MidiEvent(int(t), bool(on), int(n), int(vel), ch) for t, on, n, vel in p["events"])
        parts.append(Part(p["role"], ch, int(p["program"]), events))
    return TrackSet(doc["section_id"], int(doc["duration_ticks"]), tuple(parts))


@dataclass
class RenderResult:
    midi: bytes
    tracksets: list[TrackSet]
    reports: list[TrackReport]
    fingerprints: list[str]
    regenerated: list[int]

    def report(self, seed: int, settings: Settings) -> dict[str, Any]:
        return {
            "seed": seed,
            "settings": settings.summary(),
            "regenerated_entries": self.regenerated,
            "tracks": [r.as_dict() for r in self.reports],
        }


def render_composition(
    comp: Composition,
    seed: int,
    settings: Settings = Settings(),
    cache: dict[str, Any] | None = None,
) -> RenderResult:
    """Generate and encode the whole arrangement.

    ``cache`` maps entry fingerprints to serialized track sets (see
    ``trackset_to_dict``).  Entries whose fingerprint is cached are reused
    instead of regenerated, and the cache is updated in place.
    """
    tracksets: list[TrackSet] = []
    reports: list[TrackReport] = []
    prints: list[str] = []
    regenerated: list[int] = []
    seen: dict[str, int] = {}
    for idx, entry in enumerate(comp.arrangement):
        section = comp.section_for(entry)
        occurrence = seen.get(entry.section_id, 0)
        seen[entry.section_id] = occurrence + 1
        fp = entry_fingerprint(comp, idx, seed, settings)
        prints.append(fp)
        n_takes = section.repeats if settings.vary_repeats else 1
        if cache is not None and fp in cache:
            takes = [trackset_from_dict(d) for d in cache[fp]]
        else:
            takes = []
            for r in range(n_takes):
                res = render_section(entry.section_id, section, entry, seed, occurrence, r, settings)
                takes.append(res.trackset)
                reports.extend(res.reports)
            regenerated.append(idx)
            if cache is not None:
                cache[fp] = [trackset_to_dict(t) for t in takes]
        if settings.vary_repeats:
            tracksets.extend(takes)
        else:
            tracksets.extend([takes[0]] * section.repeats)
    midi = assemble(comp, tracksets)
    return RenderResult(midi, tracksets, reports, prints, regenerated)


def with_ga(settings: Settings, **changes: Any) -> Settings:
    return replace(settings, ga=replace(settings.ga, **changes))
