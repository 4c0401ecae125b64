import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evocomposer.notation import (
    FEATURES,
    HOLD,
    N_FEATURES,
    REST,
    FeatureVector,
    HarmonicContext,
    InvalidSequence,
    NoteSeq,
    extract_features,
    longest_repeated_fragment,
    resolve_pitches,
    sounded_notes,
)
from evocomposer.schema import ChordSymbol, Scale, Section, TimeSignature, TrackSpec

C_MAJOR = Scale(0, "major")
PROGRESSION = (ChordSymbol(0, "maj"), ChordSymbol(5, "maj"), ChordSymbol(9, "min"), ChordSymbol(7, "dom7"))


def section(num=4, den=4, chords=PROGRESSION):
    return Section(120.0, TimeSignature(num, den), C_MAJOR, chords, (TrackSpec("melody", 0, "melody"),))


# ---- independent oracle -------------------------------------------------- #

def oracle_notes(codes):
    """Group codes into (pitch, onset, duration) by scanning runs of holds."""
    events = []
    i = 0
    while i < len(codes):
        j = i + 1
        while j < len(codes) and codes[j] == HOLD:
            j += 1
        events.append((codes[i], i, j - i))
        i = j
    return [e for e in events if e[0] >= 0]


def unique_ratio_by_measure(pairs):
    groups = {}
    for m, v in pairs:
        groups.setdefault(m, []).append(v)
    if not groups:
        return 0.0
    return float(np.mean([len(set(v)) / len(v) for v in groups.values()]))


def oracle_repeat(codes):
    n = len(codes)
    best = 0
    for L in range(1, n // 2 + 1):
        found = any(
            codes[i:i + L] == codes[j:j + L]
            for i in range(n - L + 1) for j in range(i + L, n - L + 1)
        )
        if found:
            best = L
    return best


def oracle_features(codes, spm, sec):
    n_steps = len(codes)
    notes = oracle_notes(codes)
    chords = [sec.chord_at_measure(i // spm) for i in range(n_steps)]
    f = dict.fromkeys(FEATURES, 0.0)
    sounding = sum(d for _, _, d in notes)
    f["rest_ratio"] = 1 - sounding / n_steps
    f["repeated_fragment_length"] = oracle_repeat(list(codes)) / n_steps
    n_meas = n_steps // spm
    f["root_note_measure_starts"] = sum(
        1 for m in range(n_meas)
        if codes[m * spm] >= 0 and codes[m * spm] % 12 == chords[m * spm].root
    ) / n_meas
    if not notes:
        return [f[k] for k in FEATURES]
    p = np.array([x[0] for x in notes], dtype=float)
    on = [x[1] for x in notes]
    du = np.array([x[2] for x in notes], dtype=float)
    f["unique_notes_per_measure"] = unique_ratio_by_measure([(o // spm, int(q)) for q, o, _ in notes])
    f["in_scale_ratio"] = np.mean([C_MAJOR.contains(int(q)) for q in p])
    f["in_chord_ratio"] = np.mean([int(q) % 12 in chords[o].resolved_pitch_classes for q, o, _ in notes])
    rng_ = p.max() - p.min()
    f["pitch_range"] = min(1.0, rng_ / 48)
    f["unique_lengths_per_measure"] = unique_ratio_by_measure([(o // spm, d) for _, o, d in notes])
    f["avg_pitch"] = p.mean() / 127
    f["pitch_deviation"] = p.std() / (rng_ / 2) if rng_ else 0.0
    strong = [0] + ([spm // 2] if sec.time_signature.numerator == 4 else [])
    sd = [d for _, o, d in notes if o % spm in strong]
    f["strong_beat_length"] = min(1.0, np.mean(sd) / spm) if sd else 0.0
    f["offbeat_ratio"] = np.mean([(o % spm) % 2 == 1 for o in on])
    f["log_avg_note_length"] = min(1.0, max(0.0, math.log(du.mean()) / math.log(spm)))
    f["log_length_deviation"] = min(1.0, np.log(du).std() / math.log(spm))
    if len(notes) > 1:
        f["short_note_runs"] = np.mean([a <= 2 and b <= 2 for a, b in zip(du, du[1:])])
        iv = np.diff(p)
        a = np.abs(iv)
        f["unique_intervals_per_measure"] = unique_ratio_by_measure(
            [(on[k + 1] // spm, int(iv[k])) for k in range(len(iv))])
        f["dissonant_interval_ratio"] = np.mean([x % 12 in (1, 2, 6, 10, 11) for x in a])
        f["over_octave_interval_ratio"] = np.mean(a > 12)
        up, down = int((iv > 0).sum()), int((iv < 0).sum())
        f["melodic_contour"] = up / (up + down) if up + down else 0.0
        f["avg_interval_size"] = min(1.0, a.mean() / 12)
        f["stepwise_interval_runs"] = np.mean((a >= 1) & (a <= 3))
    return [float(f[k]) for k in FEATURES]


def random_sequence(rng, n):
    codes = []
    for i in range(n):
        r = rng.random()
        if r < 0.55:
            codes.append(rng.randint(40, 90))
        elif r < 0.7 or i == 0:
            codes.append(REST)
        else:
            codes.append(HOLD)
    return codes


@pytest.mark.parametrize("num,den", [(4, 4), (3, 4), (7, 8), (2, 4)])
def test_features_match_oracle(num, den):
    sec = section(num, den)
    spm = sec.steps_per_measure
    rng = random.Random(num * 100 + den)
    for _ in range(100):
        measures = rng.randint(1, 4)
        codes = random_sequence(rng, spm * measures)
        ctx = HarmonicContext.for_section(sec, measures)
        got = extract_features(NoteSeq(codes, spm, measures), ctx).values
        want = oracle_features(codes, spm, sec)
        assert got == pytest.approx(want, abs=1e-12), codes


codes_strategy = st.lists(
    st.one_of(st.integers(0, 127), st.just(REST), st.just(HOLD)), min_size=16, max_size=16 * 4
).map(lambda c: [REST if c[0] == HOLD else c[0]] + c[1:]).filter(lambda c: len(c) % 16 == 0)


@given(codes_strategy)
@settings(max_examples=200, deadline=None)
def test_features_are_normalized(codes):
    ctx = HarmonicContext.for_section(section(), len(codes) // 16)
    fv = extract_features(NoteSeq(codes, 16, len(codes) // 16), ctx)
    assert all(0.0 <= v <= 1.0 for v in fv.values)


@given(codes_strategy)
@settings(max_examples=200, deadline=None)
def test_notes_cover_sounding_steps(codes):
    notes = sounded_notes(codes)
    resolved = resolve_pitches(codes)
    covered = [REST] * len(codes)
    for p, o, d in notes:
        covered[o:o + d] = [p] * d
    assert covered == resolved


def test_sounded_notes_example():
    assert sounded_notes([60, -1, 62, -2]) == [(60, 0, 1), (62, 2, 2)]
    assert sounded_notes([-1, -2, -2, 64]) == [(64, 3, 1)]


def test_invalid_sequences():
    with pytest.raises(InvalidSequence):
        NoteSeq((HOLD, 60), 2, 1)
    with pytest.raises(InvalidSequence):
        NoteSeq((60, 128), 2, 1)
    with pytest.raises(InvalidSequence):
        NoteSeq((60, 61, 62), 2, 1)


def test_longest_repeated_fragment_matches_brute_force():
    rng = random.Random(3)
    for _ in range(300):
        n = rng.randint(1, 40)
        codes = [rng.choice((60, 62, REST, HOLD)) for _ in range(n)]
        assert longest_repeated_fragment(codes) == oracle_repeat(codes)


def test_dissonance_ratio_on_worked_sequence():
    # 81 58 46 58 46 -2 -2 61: intervals -23, -12, +12, -12, +15
    codes = [81, 58, 46, 58, 46, -2, -2, 61]
    ctx = HarmonicContext.for_section(section(2, 4), 1)
    fv = extract_features(NoteSeq(codes, 8, 1), ctx)
    # |-23| mod 12 = 11 is dissonant; 12, 12, 12 and 15 (mod 12 = 3) are not
    assert fv.dissonant_interval_ratio == pytest.approx(1 / 5)
    assert fv.over_octave_interval_ratio == pytest.approx(2 / 5)
    assert fv.melodic_contour == pytest.approx(2 / 5)


def test_feature_vector_access():
    fv = FeatureVector([i / 100 for i in range(N_FEATURES)])
    assert fv["in_scale_ratio"] == fv[5] == fv.in_scale_ratio == 0.04
    assert len(fv.as_dict()) == N_FEATURES
    with pytest.raises(AttributeError):
        fv.not_a_feature


def test_context_length_must_match():
    ctx = HarmonicContext.for_section(section(), 1)
    with pytest.raises(ValueError):
        extract_features(NoteSeq.rests(16, 2), ctx)


def test_context_cycles_progression():
    ctx = HarmonicContext.for_section(section(chords=PROGRESSION[:2]), 3)
    assert ctx.chord_roots[::16] == (0, 5, 0)
