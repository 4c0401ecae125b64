import copy
import json

import pytest
from hypothesis import given, strategies as st

from evocomposer.schema import (
    CHORD_INTERVALS,
    NOTE_NAMES,
    QUALITY_SUFFIX,
    ChordSymbol,
    SchemaError,
    TimeSignature,
    composition_from_dict,
    parse_composition,
    parse_instrument,
    parse_pitch_class,
    parse_scale,
    parse_time_signature,
    resolve_chord,
    serialize_composition,
)


def test_ballad_fixture_parses(ballad):
    assert list(ballad.sections) == ["verse", "chorus"]
    verse = ballad.sections["verse"]
    assert verse.bpm == 72
    assert verse.repeats == 2
    assert verse.time_signature.steps_per_measure == 16
    assert [c.name for c in verse.chord_progression] == ["C", "Am", "F", "G"]
    assert verse.tracks[0].instrument == 0  # Acoustic Grand Piano
    assert verse.tracks[2].instrument == 73  # Flute
    assert [e.section_id for e in ballad.arrangement] == ["verse", "chorus", "verse"]


@pytest.mark.parametrize("text,steps", [("4/4", 16), ("3/4", 12), ("7/8", 14), ("13/8", 26),
                                        ("11/16", 11), ("2/2", 16), ("25/4", 100)])
def test_steps_per_measure(text, steps):
    assert parse_time_signature(text).steps_per_measure == steps


@pytest.mark.parametrize("bad", ["4/3", "0/4", "33/4", "4", {"numerator": "4", "denominator": 4}, 7])
def test_bad_time_signatures(bad):
    with pytest.raises(ValueError):
        parse_time_signature(bad)


@pytest.mark.parametrize("text,pc", [("C", 0), ("c#", 1), ("Db", 1), ("B#", 0), ("Cb", 11),
                                     ("F♯", 6), ("E♭", 3), (9, 9)])
def test_pitch_classes(text, pc):
    assert parse_pitch_class(text) == pc


@pytest.mark.parametrize("bad", [12, -1, True, "H", "C##", None])
def test_bad_pitch_classes(bad):
    with pytest.raises(ValueError):
        parse_pitch_class(bad)


@pytest.mark.parametrize("symbol,pcs", [
    ("C", (0, 4, 7)),
    ("Am", (9, 0, 4)),
    ("G7", (7, 11, 2, 5)),
    ("Bbmaj7", (10, 2, 5, 9)),
    ("F#dim", (6, 9, 0)),
    ("Dsus4", (2, 7, 9)),
    ("Em9", (4, 7, 11, 2, 6)),
    ("Caug", (0, 4, 8)),
])
def test_chord_resolution(symbol, pcs):
    assert resolve_chord(symbol).resolved_pitch_classes == pcs


def test_chord_tokens_are_case_sensitive():
    assert resolve_chord("CM7").quality == "maj7"
    assert resolve_chord("Cm7").quality == "min7"


@pytest.mark.parametrize("bad", ["X", "Cmaj13", "", "Am add9"])
def test_unknown_chords_rejected(bad):
    with pytest.raises(ValueError):
        resolve_chord(bad)


@given(st.integers(0, 11), st.sampled_from(sorted(CHORD_INTERVALS)))
def test_chord_name_round_trip(root, quality):
    ch = ChordSymbol(root, quality)
    assert resolve_chord(ch.name) == ch
    assert ch.name == NOTE_NAMES[root] + QUALITY_SUFFIX[quality]


def test_scale_parsing():
    assert parse_scale("A minor").pitch_classes == (9, 11, 0, 2, 4, 5, 7)
    assert parse_scale({"root": "D", "kind": "Dorian"}).kind == "dorian"
    with pytest.raises(ValueError):
        parse_scale("C bebop")


def test_instrument_names():
    assert parse_instrument("electric bass (finger)") == 33
    assert parse_instrument(127) == 127
    for bad in (128, "kazoo", True):
        with pytest.raises(ValueError):
            parse_instrument(bad)


def test_serialize_round_trip(ballad):
    again = parse_composition(serialize_composition(ballad))
    assert again == ballad


def _errors(doc):
    with pytest.raises(SchemaError) as info:
        composition_from_dict(doc)
    return dict(info.value.errors)


def test_errors_carry_json_paths(ballad_doc):
    doc = copy.deepcopy(ballad_doc)
    doc["arrangement"][1]["valence"] = 1.5
    doc["sections"]["verse"]["tracks"][1]["mode"] = "arpeggio"
    doc["sections"]["chorus"]["chord_progression"][2] = "Hm"
    errs = _errors(doc)
    assert ".arrangement[1].valence" in errs
    assert ".sections.verse.tracks[1].mode" in errs
    assert ".sections.chorus.chord_progression[2]" in errs


def test_unknown_section_and_version(ballad_doc):
    doc = copy.deepcopy(ballad_doc)
    doc["schema_version"] = 2
    doc["arrangement"].append({"section": "bridge", "valence": 0, "arousal": 0.5})
    errs = _errors(doc)
    assert ".schema_version" in errs
    assert ".arrangement[3].section" in errs


def test_too_many_melodic_tracks(ballad_doc):
    doc = copy.deepcopy(ballad_doc)
    doc["sections"]["verse"]["tracks"] = [{"role": "melody", "instrument": 0}] * 10
    assert ".sections.verse.tracks" in _errors(doc)


def test_malformed_json():
    with pytest.raises(SchemaError):
        parse_composition("{not json")
    with pytest.raises(SchemaError):
        parse_composition(b"\xff\xfe")


def test_drum_kit_validation(ballad_doc):
    doc = copy.deepcopy(ballad_doc)
    doc["sections"]["verse"]["tracks"][3]["instrument"] = "cowbells"
    assert ".sections.verse.tracks[3].instrument" in _errors(doc)


def test_measures_field_overrides_progression_length(ballad_doc):
    doc = copy.deepcopy(ballad_doc)
    doc["sections"]["verse"]["measures"] = 6
    sec = composition_from_dict(doc).sections["verse"]
    assert sec.n_measures == 6
    assert [c.name for c in sec.chords_per_measure()] == ["C", "Am", "F", "G", "C", "Am"]
    assert json.loads(serialize_composition(composition_from_dict(doc)))["sections"]["verse"]["measures"] == 6


def test_time_signature_str():
    assert str(TimeSignature(7, 8)) == "7/8"
