import math
import random

import pytest
from hypothesis import given, strategies as st

from evocomposer.assembler import Part, TrackSet, assemble, drum_events, merge_voices, section_ticks
from evocomposer.evaluation import (
    ConfigurationError,
    focused_composition,
    groove_consistency,
    pitch_class_entropy,
    random_composition,
    read_song,
    run_scenario,
    scale_chords,
    scale_consistency,
    song_groove,
    song_metrics,
    summarize,
)
from evocomposer.notation import NoteSeq
from evocomposer.pipeline import Settings, with_ga
from evocomposer.schema import (
    ArrangementEntry, ChordSymbol, Composition, Scale, Section, TimeSignature, TrackSpec, serialize_composition,
)

FAST = with_ga(Settings(), population_size=12, generations=2)


def test_entropy_values():
    assert pitch_class_entropy(range(12)) == pytest.approx(math.log2(12))
    assert pitch_class_entropy([60, 72, 84]) == 0.0
    assert pitch_class_entropy([60, 62]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pitch_class_entropy([])


@given(st.lists(st.integers(0, 127), min_size=1, max_size=80))
def test_entropy_bounds(notes):
    assert 0.0 <= pitch_class_entropy(notes) <= math.log2(12) + 1e-12


def test_scale_consistency_values():
    c_major = [60, 62, 64, 65, 67, 69, 71]
    assert scale_consistency(c_major) == 100.0
    assert scale_consistency(c_major + [61]) == pytest.approx(700 / 8)
    # every pitch class once: best scale covers 7 of 12
    assert scale_consistency(range(12)) == pytest.approx(700 / 12)


def test_groove_consistency_values():
    ts = TimeSignature(4, 4)
    assert groove_consistency([0, 4, 8, 12, 16, 20, 24, 28], ts) == 100.0
    # second measure adds one onset: 1 differing cell out of 16
    assert groove_consistency([0, 16, 18], ts) == pytest.approx(100 * (1 - 1 / 16))
    # 3/4: {0, 8} vs {4} differ in 3 cells, {4} vs {0} in 2
    assert groove_consistency([0, 8, 16, 24], TimeSignature(3, 4), n_measures=3) == pytest.approx(
        100 * (1 - (3 / 12 + 2 / 12) / 2))
    with pytest.raises(ValueError):
        groove_consistency([0], ts)


def song_bytes(measures_onsets, ts=(4, 4)):
    sig = TimeSignature(*ts)
    spm = sig.steps_per_measure
    n = len(measures_onsets)
    codes = [-1] * (spm * n)
    for m, onsets in enumerate(measures_onsets):
        for o in onsets:
            codes[m * spm + o] = 60 + o
    sec = Section(120.0, sig, Scale(0, "major"), (ChordSymbol(0, "maj"),) * n, (TrackSpec("melody", 0, "melody"),))
    comp = Composition("g", {"a": sec}, (ArrangementEntry("a", 0, 0.5),))
    parts = (Part("melody", 0, 0, tuple(merge_voices([NoteSeq(codes, spm, n)], 0))),
             Part("drums", 9, 0, tuple(drum_events([(36, 0)]))))
    return assemble(comp, [TrackSet("a", section_ticks(sec), parts)])


def test_song_groove_reads_midi():
    song = read_song(song_bytes([[0, 4], [0, 4], [0, 6]]))
    assert [p for p, _ in song.drums] == [36]
    assert song.meters == [(0, 4, 4)]
    # 48 cells per 4/4 measure; measure 1 adds the kick at 0 (already a melody onset there)
    # measure 3 moves one onset: 2 differing cells
    assert song_groove(song) == pytest.approx(100 * (1 - (0 + 2 / 48) / 2))
    assert song_groove(song, resolution=4) == pytest.approx(100 * (1 - (0 + 2 / 16) / 2))


def test_song_metrics_ignore_drums():
    m = song_metrics(song_bytes([[0], [2]]))
    assert m["pitch_class_entropy"] == pytest.approx(1.0)  # 60 and 62 only


def test_summarize_matches_t_interval():
    xs = [1.0, 2.0, 3.0, 4.0]
    s = summarize(xs)
    sd = math.sqrt(sum((x - 2.5) ** 2 for x in xs) / 3)
    assert s["mean"] == 2.5
    assert s["ci95"] == pytest.approx(3.182446305 * sd / 2, rel=1e-8)
    assert summarize([5.0])["ci95"] is None


def test_focused_scenario_layout():
    comp = focused_composition()
    sec = comp.sections["A"]
    assert (sec.bpm, str(sec.time_signature)) == (120.0, "4/4")
    assert [c.name for c in sec.chord_progression] == ["C", "F", "Am", "F"]
    assert [(t.role, t.mode) for t in sec.tracks] == [
        ("chords", "continuous"), ("bass", "bassline"), ("melody", "melody"), ("drums", "standard")]
    assert comp.arrangement[0].valence == 0.0 and comp.arrangement[0].arousal == 0.5


def test_random_compositions_stay_in_key():
    rng = random.Random(0)
    for _ in range(200):
        comp = random_composition(rng)
        sec = comp.sections["A"]
        pcs = set(sec.scale.pitch_classes)
        for ch in sec.chord_progression:
            assert set(ch.resolved_pitch_classes) <= pcs
        serialize_composition(comp)  # must be expressible as a document


def test_scale_chords_of_c_major():
    names = {c.name for c in scale_chords(Scale(0, "major"))}
    assert {"C", "Dm", "Em", "F", "G", "Am", "Bdim", "G7", "Cmaj7"} <= names
    assert "E" not in names


def test_scenarios_run_small():
    rep = run_scenario("focused", 2, 0, FAST)
    assert rep.n == 2 and len(rep.songs) == 2
    assert set(rep.summary) == {"pitch_class_entropy", "scale_consistency", "groove_consistency"}
    rep = run_scenario("randomized", 2, 0, FAST)
    assert all(0 <= s["scale_consistency"] <= 100 for s in rep.songs)


def test_prompt_driven_needs_a_client():
    with pytest.raises(ConfigurationError):
        run_scenario("prompt_driven", 1, 0, FAST)
    doc = serialize_composition(focused_composition())
    prompts = []
    rep = run_scenario("prompt_driven", 2, 0, FAST, request=lambda p: prompts.append(p) or doc)
    assert rep.n == 2 and len(prompts) == 2 and prompts[0] != prompts[1]


def test_unknown_scenario():
    with pytest.raises(ValueError):
        run_scenario("nope", 1, 0)
