"""Standard MIDI File output.

Tracks of every arrangement entry are laid end to end on a 480 ticks per
quarter timeline (one sixteenth step = 120 ticks).  The file is format 1:
track 0 carries tempo and meter changes, then one track per used channel.
Melodic parts use channels 0-8 in the order the section lists them, drums
use channel 9.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

from .notation import NoteSeq, sounded_notes
from .schema import Composition, Section, TimeSignature

TICKS_PER_QUARTER = 480
TICKS_PER_STEP = TICKS_PER_QUARTER // 4
DRUM_CHANNEL = 9
MELODIC_VELOCITY = 96
ACCENT_VELOCITY = 110
DRUM_VELOCITY = 80


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class MidiEvent:
    """A note-on or note-off at an absolute tick.

    Field order doubles as the sort key: tick, then offs before ons, then
    pitch.
    """

    tick: int
    is_on: bool
    pitch: int
    velocity: int = 0
    channel: int = 0

    def __repr__(self) -> str:
        kind = "on" if self.is_on else "off"
        return f"{kind}({self.pitch})@{self.tick}"


def merge_voices(
    voices: Sequence[NoteSeq],
    channel: int = 0,
    program: int = 0,
    velocity: int = MELODIC_VELOCITY,
) -> list[MidiEvent]:
    """Note events of parallel voices on one channel, relative to tick 0.

    >>> merge_voices([NoteSeq((60, -2, -2, -2), 4, 1)])
    [on(60)@0, off(60)@480]
    """
    if voices and len({len(v) for v in voices}) != 1:
        raise AssemblyError("voices must share one grid length")
    events = []
    for v in voices:
        for pitch, onset, dur in sounded_notes(v):
            events.append(MidiEvent(onset * TICKS_PER_STEP, True, pitch, velocity, channel))
            events.append(MidiEvent((onset + dur) * TICKS_PER_STEP, False, pitch, 0, channel))
    return sorted(events)


def drum_events(hits: Sequence[tuple[int, int]], accents: Sequence[int] = ()) -> list[MidiEvent]:
    """Events for ``(note, step)`` hits; each hit lasts one step."""
    events = []
    for note, step in hits:
        vel = ACCENT_VELOCITY if note in accents else DRUM_VELOCITY
        t = step * TICKS_PER_STEP
        events.append(MidiEvent(t, True, note, vel, DRUM_CHANNEL))
        events.append(MidiEvent(t + TICKS_PER_STEP, False, note, 0, DRUM_CHANNEL))
    return sorted(events)


@dataclass(frozen=True)
class Part:
    role: str
    channel: int
    program: int
    events: tuple[MidiEvent, ...]


@dataclass(frozen=True)
class TrackSet:
    """Everything one section occurrence contributes to the file."""

    section_id: str
    duration_ticks: int
    parts: tuple[Part, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        seen = set()
        for p in self.parts:
            if p.role == "drums" and p.channel != DRUM_CHANNEL:
                raise AssemblyError("drum parts must use the percussion channel")
            if p.role != "drums" and not 0 <= p.channel <= 8:
                raise AssemblyError(f"melodic part on channel {p.channel}")
            if p.channel in seen:
                raise AssemblyError(f"channel {p.channel} used twice in section {self.section_id!r}")
            seen.add(p.channel)
            for e in p.events:
                if e.tick < 0 or e.tick > self.duration_ticks:
                    raise AssemblyError(
                        f"{e!r} lies outside section {self.section_id!r} "
                        f"({self.duration_ticks} ticks)"
                    )


def section_ticks(section: Section) -> int:
    return section.n_steps * TICKS_PER_STEP


# --------------------------------------------------------------------------- #
# SMF encoding
# --------------------------------------------------------------------------- #

def _vlq(value: int) -> bytes:
    if value < 0:
        raise AssemblyError("negative delta time")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _chunk(kind: bytes, body: bytes) -> bytes:
    return kind + struct.pack(">I", len(body)) + body


def _track(timed: list[tuple[int, bytes]]) -> bytes:
    """Encode ``(abs_tick, message)`` pairs (already ordered) plus end-of-track."""
    body = bytearray()
    now = 0
    for tick, msg in timed:
        body += _vlq(tick - now) + msg
        now = tick
    body += b"\x00\xff\x2f\x00"
    return _chunk(b"MTrk", bytes(body))


def _meta(kind: int, data: bytes) -> bytes:
    return bytes([0xFF, kind]) + _vlq(len(data)) + data


def tempo_meta(bpm: float) -> bytes:
    us = round(60_000_000 / bpm)
    return _meta(0x51, us.to_bytes(3, "big"))


def time_signature_meta(ts: TimeSignature) -> bytes:
    exp = ts.denominator.bit_length() - 1
    return _meta(0x58, bytes([ts.numerator, exp, 24, 8]))


def _expand(composition: Composition, tracksets: Sequence[TrackSet]) -> list[tuple[Section, TrackSet]]:
    entries = composition.arrangement
    sections = [composition.section_for(e) for e in entries]
    expanded_len = sum(s.repeats for s in sections)
    out = []
    if len(tracksets) == len(entries) and expanded_len != len(entries):
        # one TrackSet per entry: repeats are exact copies
        for sec, ts in zip(sections, tracksets):
            out.extend([(sec, ts)] * sec.repeats)
    elif len(tracksets) == expanded_len:
        it = iter(tracksets)
        for sec in sections:
            out.extend((sec, next(it)) for _ in range(sec.repeats))
    else:
        raise AssemblyError(
            f"expected {len(entries)} or {expanded_len} track sets, got {len(tracksets)}"
        )
    for (sec, ts), entry in zip(out, (e for e, s in zip(entries, sections) for _ in range(s.repeats))):
        if ts.section_id != entry.section_id:
            raise AssemblyError(f"track set for {ts.section_id!r} where {entry.section_id!r} was expected")
        if ts.duration_ticks != section_ticks(sec):
            raise AssemblyError(f"track set for {ts.section_id!r} has the wrong duration")
    return out


def assemble(composition: Composition, tracksets: Sequence[TrackSet]) -> bytes:
    """Encode the whole arrangement as SMF format 1 bytes.

    ``tracksets`` holds either one entry per arrangement entry (repeats are
    then copied) or one per repeat, in playback order.
    """
    timeline = _expand(composition, tracksets)
    conductor: list[tuple[int, bytes]] = []
    if composition.name:
        conductor.append((0, _meta(0x03, composition.name.encode("utf-8"))))
    per_channel: dict[int, list[tuple[int, int, bytes]]] = {}
    offset = 0
    for sec, ts in timeline:
        conductor.append((offset, tempo_meta(sec.bpm)))
        conductor.append((offset, time_signature_meta(sec.time_signature)))
        for part in ts.parts:
            msgs = per_channel.setdefault(part.channel, [])
            # at one tick: note-offs (rank 0), program change (1), note-ons (2)
            msgs.append((offset, 1, bytes([0xC0 | part.channel, part.program & 0x7F])))
            for e in part.events:
                if e.is_on:
                    msg = bytes([0x90 | part.channel, e.pitch, e.velocity])
                else:
                    msg = bytes([0x80 | part.channel, e.pitch, 0])
                msgs.append((offset + e.tick, 2 if e.is_on else 0, msg))
        offset += ts.duration_ticks

    chunks = [_track(conductor)]
    for ch in sorted(per_channel):
        msgs = sorted(per_channel[ch], key=lambda m: (m[0], m[1], m[2][1]))
        chunks.append(_track([(t, m) for t, _, m in msgs]))
    header = _chunk(b"MThd", struct.pack(">HHH", 1, len(chunks), TICKS_PER_QUARTER))
    return header + b"".join(chunks)
