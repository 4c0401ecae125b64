"""Genetic algorithm for melodic sequences.

Individuals are code vectors (see :mod:`evocomposer.notation`).  Each
generation is evaluated with a Gaussian-target fitness, parents are drawn by
tournament, recombined with one-point crossover and, with probability
``mutation_rate``, changed by one of ten musically motivated mutations.  The
best ``elitism_count`` individuals survive unchanged, so the best fitness never
drops between generations.
"""

from __future__ import annotations

import enum
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from .notation import (
    FEATURE_INDEX,
    HOLD,
    N_FEATURES,
    REST,
    FeatureVector,
    HarmonicContext,
    NoteSeq,
    feature_values,
    resolve_pitches,
    sounded_notes,
)
from .schema import Scale

# interval mod 12 -> score; rests handled separately
HARMONY_TABLE = (8, -20, -20, 8, 8, 15, -30, 15, 8, 8, -20, -20)
HARMONY_REST_ONE = 10
HARMONY_REST_BOTH = 0


@dataclass(frozen=True)
class FitnessSpec:
    """Per-feature Gaussian targets: ``mu`` (target), ``sigma`` (width), ``weight``."""

    mu: tuple[float, ...]
    sigma: tuple[float, ...]
    weight: tuple[float, ...]
    harmony_weight: float = 0.0

    def __post_init__(self) -> None:
        for name in ("mu", "sigma", "weight"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != N_FEATURES:
                raise ValueError(f"{name} needs {N_FEATURES} entries, got {len(vals)}")
            object.__setattr__(self, name, vals)
        if any(not 0.0 <= m <= 1.0 for m in self.mu):
            raise ValueError("targets must lie in [0, 1]")
        if any(s < 0.01 for s in self.sigma):
            raise ValueError("sigma must be >= 0.01")
        if any(w < 0 for w in self.weight) or not any(w > 0 for w in self.weight):
            raise ValueError("weights must be >= 0 with at least one positive")
        if self.harmony_weight < 0:
            raise ValueError("harmony_weight must be >= 0")

    @classmethod
    def from_targets(
        cls,
        targets: Mapping[str, float | tuple[float, ...]],
        sigma: float = 0.15,
        weight: float = 1.0,
        harmony_weight: float = 0.0,
    ) -> "FitnessSpec":
        """Build a spec from ``{feature: mu}`` or ``{feature: (mu, sigma, weight)}``.

        Features not named get weight 0.
        """
        mu = [0.5] * N_FEATURES
        sg = [sigma] * N_FEATURES
        wt = [0.0] * N_FEATURES
        for name, val in targets.items():
            i = FEATURE_INDEX[name]
            if isinstance(val, tuple):
                mu[i], sg[i], wt[i] = val
            else:
                mu[i], wt[i] = val, weight
        return cls(tuple(mu), tuple(sg), tuple(wt), harmony_weight)

    @property
    def max_fitness(self) -> float:
        return sum(self.weight) + self.harmony_weight


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 256
    generations: int = 100
    tournament_size: int = 4
    mutation_rate: float = 0.3
    crossover_rate: float = 0.9
    rng_seed: int = 0
    elitism_count: int = 2
    workers: int = 1
    # "child": one random mutation kind per child with probability mutation_rate;
    # "kind": every mutation kind fires independently with probability mutation_rate
    mutation_scheme: str = "child"

    def __post_init__(self) -> None:
        if self.population_size < 1 or self.generations < 0:
            raise ValueError("population_size must be >= 1 and generations >= 0")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must be within [1, population_size]")
        if not (0 <= self.mutation_rate <= 1 and 0 <= self.crossover_rate <= 1):
            raise ValueError("rates must lie in [0, 1]")
        if not 0 <= self.elitism_count <= self.population_size:
            raise ValueError("elitism_count must be within [0, population_size]")
        if self.mutation_scheme not in ("child", "kind"):
            raise ValueError("mutation_scheme must be 'child' or 'kind'")

    def with_seed(self, seed: int) -> "GaConfig":
        return replace(self, rng_seed=seed)


class MutationKind(enum.Enum):
    INTERVAL = "interval"
    TRANSPOSE = "transpose"
    EXTEND = "extend"
    REST = "rest"
    LONG_NOTE = "long_note"
    EXTENSION_TO_NOTE = "extension_to_note"
    LENGTH_NORMALIZE = "length_normalize"
    SORT = "sort"
    REPEAT_PASTE = "repeat_paste"
    REPEAT_ADJACENT = "repeat_adjacent"


MUTATION_KINDS = tuple(MutationKind)


# --------------------------------------------------------------------------- #
# scoring
# --------------------------------------------------------------------------- #

def _codes(x: NoteSeq | Sequence[int]) -> Sequence[int]:
    return x.codes if isinstance(x, NoteSeq) else x


def _harmony_mean(pa: Sequence[int], pb: Sequence[int]) -> float:
    total = 0
    for x, y in zip(pa, pb):
        if x < 0:
            if y >= 0:
                total += HARMONY_REST_ONE
        elif y < 0:
            total += HARMONY_REST_ONE
        else:
            total += HARMONY_TABLE[abs(x - y) % 12]
    return total / len(pa) if pa else 0.0


def harmony_score(a: NoteSeq | Sequence[int], b: NoteSeq | Sequence[int]) -> float:
    """Consonance of two aligned tracks in ``[-1, 1]``.

    Every step's interval (mod 12) is scored from the interval table, rests
    score 10 when only one track is silent and 0 when both are; the mean is
    squashed with ``tanh(mean / 10)``.
    """
    ca, cb = _codes(a), _codes(b)
    if len(ca) != len(cb):
        raise ValueError(f"length mismatch: {len(ca)} vs {len(cb)}")
    return math.tanh(_harmony_mean(resolve_pitches(ca), resolve_pitches(cb)) / 10.0)


def gaussian_terms(values: Sequence[float], spec: FitnessSpec) -> list[float]:
    return [
        w * math.exp(-((r - m) ** 2) / (2.0 * s * s)) if w else 0.0
        for r, m, s, w in zip(values, spec.mu, spec.sigma, spec.weight)
    ]


def fitness(
    seq: NoteSeq,
    spec: FitnessSpec,
    ctx: HarmonicContext,
    refs: Sequence[NoteSeq] = (),
) -> float:
    """Weighted Gaussian fitness plus the cross-track harmony bonus.

    The harmony score (mean over ``refs``) is mapped from ``[-1, 1]`` to
    ``[0, 1]`` before weighting so the total stays within
    ``[0, sum(weight) + harmony_weight]``.
    """
    return _Scorer(spec, ctx, refs, seq.steps_per_measure)(seq.codes)


class _Scorer:
    def __init__(self, spec: FitnessSpec, ctx: HarmonicContext, refs: Sequence[NoteSeq], spm: int):
        self.spec = spec
        self.ctx = ctx
        self.spm = spm
        self.active = [i for i, w in enumerate(spec.weight) if w > 0]
        self.ref_pitches = [resolve_pitches(_codes(r)) for r in refs] if spec.harmony_weight else []
        n = len(ctx)
        for r in self.ref_pitches:
            if len(r) != n:
                raise ValueError("reference track length differs from the context")

    def __call__(self, codes: Sequence[int]) -> float:
        spec = self.spec
        values = feature_values(codes, self.spm, self.ctx)
        total = 0.0
        for i in self.active:
            d = values[i] - spec.mu[i]
            total += spec.weight[i] * math.exp(-(d * d) / (2.0 * spec.sigma[i] ** 2))
        if self.ref_pitches:
            pitches = resolve_pitches(codes)
            h = sum(math.tanh(_harmony_mean(pitches, r) / 10.0) for r in self.ref_pitches)
            total += spec.harmony_weight * (1.0 + h / len(self.ref_pitches)) / 2.0
        return total


# --------------------------------------------------------------------------- #
# genetic operators
# --------------------------------------------------------------------------- #

def _repair(codes: list[int]) -> list[int]:
    if codes and codes[0] == HOLD:
        codes[0] = REST
    return codes


def _fold(pitch: int, lo: int, hi: int) -> int:
    while pitch > hi and pitch - 12 >= lo:
        pitch -= 12
    while pitch < lo and pitch + 12 <= hi:
        pitch += 12
    return max(lo, min(hi, pitch))


def _nearby_pitch(codes: Sequence[int], i: int, rng: random.Random, pitch_range: tuple[int, int]) -> int:
    """Random pitch within an octave of the closest sounded neighbour."""
    lo, hi = pitch_range
    ref = None
    for j in range(i - 1, -1, -1):
        if codes[j] >= 0:
            ref = codes[j]
            break
    if ref is None:
        for j in range(i + 1, len(codes)):
            if codes[j] >= 0:
                ref = codes[j]
                break
    if ref is None:
        return rng.randint(lo, hi)
    return _fold(ref + rng.randint(-12, 12), lo, hi)


def _segment(rng: random.Random, n: int, max_len: int) -> tuple[int, int]:
    length = rng.randint(1, max(1, min(max_len, n)))
    start = rng.randint(0, n - length)
    return start, length


def _mut_interval(codes, rng, spm, pitch_range, index=None, interval=None, **_):
    if index is None:
        cands = [i for i, c in enumerate(codes) if c >= 0]
        cands = cands[1:]
        if not cands:
            return codes
        index = rng.choice(cands)
    prev = next((codes[j] for j in range(index - 1, -1, -1) if codes[j] >= 0), None)
    if prev is None:
        return codes
    if interval is None:
        interval = rng.randint(-12, 12)
    codes[index] = _fold(prev + interval, *pitch_range)
    return codes


def _mut_transpose(codes, rng, spm, pitch_range, start=None, end=None, shift=None, **_):
    n = len(codes)
    if start is None:
        start = rng.randrange(n)
        end = rng.randint(start, n - 1)
    if shift is None:
        shift = rng.randint(-12, 12)
    for i in range(start, end + 1):
        if codes[i] >= 0:
            codes[i] = max(0, min(127, codes[i] + shift))
    return codes


def _mut_extend(codes, rng, spm, pitch_range, index=None, **_):
    if index is None:
        cands = [i for i, c in enumerate(codes) if c >= 0 and i >= 1]
        if not cands:
            return codes
        index = rng.choice(cands)
    codes[index - 1] = codes[index]
    codes[index] = HOLD
    return codes


def _mut_rest(codes, rng, spm, pitch_range, index=None, pitch=None, **_):
    if index is None:
        cands = [i for i, c in enumerate(codes) if c != HOLD]
        if not cands:
            return codes
        index = rng.choice(cands)
    if codes[index] >= 0:
        codes[index] = REST
    else:
        codes[index] = pitch if pitch is not None else _nearby_pitch(codes, index, rng, pitch_range)
    return codes


def _mut_long_note(codes, rng, spm, pitch_range, start=None, end=None, **_):
    n = len(codes)
    if n < 2:
        return codes
    if start is None:
        start = rng.randint(1, n - 1)
        end = min(n - 1, start + rng.randint(0, max(0, spm // 4 - 1)))
    for i in range(max(1, start), end + 1):
        codes[i] = HOLD
    return codes


def _mut_extension_to_note(codes, rng, spm, pitch_range, index=None, pitch=None, **_):
    if index is None:
        cands = [i for i, c in enumerate(codes) if c == HOLD and i >= 1]
        if not cands:
            return codes
        index = rng.choice(cands)
    if index == 0:
        return codes
    codes[index] = pitch if pitch is not None else _nearby_pitch(codes, index, rng, pitch_range)
    return codes


def _mut_length_normalize(codes, rng, spm, pitch_range, index=None, split=None, normal_length=4, **_):
    n = len(codes)
    notes = sounded_notes(codes)
    if index is None:
        cands = [
            (p, o, d) for p, o, d in notes
            if d > normal_length or (d < normal_length and o + d < n)
        ]
        if not cands:
            return codes
        pitch, onset, dur = rng.choice(cands)
    else:
        pitch, onset, dur = next(x for x in notes if x[1] == index)
    if dur > normal_length:
        if split is None:
            split = rng.randint(1, dur - 1)
        codes[onset + split] = pitch
    elif dur < normal_length:
        for i in range(onset + dur, min(n, onset + normal_length)):
            codes[i] = HOLD
    return codes


def _mut_sort(codes, rng, spm, pitch_range, start=None, end=None, descending=None, **_):
    n = len(codes)
    if n < 2:
        return codes
    if start is None:
        start = rng.randint(0, n - 2)
        end = rng.randint(start + 1, n - 1)
    if descending is None:
        descending = rng.random() < 0.5
    positions = [i for i in range(start, end + 1) if codes[i] >= 0]
    pitches = sorted((codes[i] for i in positions), reverse=descending)
    for i, p in zip(positions, pitches):
        codes[i] = p
    return codes


def _mut_repeat_paste(codes, rng, spm, pitch_range, start=None, length=None, target_measure=None, **_):
    n = len(codes)
    measures = n // spm if spm else 1
    if measures < 2:
        return codes
    if start is None:
        start, length = _segment(rng, n, spm)
    src_measure = start // spm
    if target_measure is None:
        target_measure = rng.choice([m for m in range(measures) if m != src_measure])
    target = start + (target_measure - src_measure) * spm
    segment = codes[start:start + length]
    for k, c in enumerate(segment):
        if 0 <= target + k < n:
            codes[target + k] = c
    return codes


def _mut_repeat_adjacent(codes, rng, spm, pitch_range, start=None, length=None, **_):
    n = len(codes)
    if n < 2:
        return codes
    if start is None:
        length = rng.randint(1, max(1, min(spm, n // 2)))
        start = rng.randint(0, n - length - 1) if n - length - 1 > 0 else 0
    segment = codes[start:start + length]
    for k, c in enumerate(segment):
        if start + length + k < n:
            codes[start + length + k] = c
    return codes


_MUTATORS: dict[MutationKind, Callable] = {
    MutationKind.INTERVAL: _mut_interval,
    MutationKind.TRANSPOSE: _mut_transpose,
    MutationKind.EXTEND: _mut_extend,
    MutationKind.REST: _mut_rest,
    MutationKind.LONG_NOTE: _mut_long_note,
    MutationKind.EXTENSION_TO_NOTE: _mut_extension_to_note,
    MutationKind.LENGTH_NORMALIZE: _mut_length_normalize,
    MutationKind.SORT: _mut_sort,
    MutationKind.REPEAT_PASTE: _mut_repeat_paste,
    MutationKind.REPEAT_ADJACENT: _mut_repeat_adjacent,
}


def mutate_codes(
    kind: MutationKind,
    codes: Sequence[int],
    rng: random.Random,
    spm: int,
    pitch_range: tuple[int, int] = (0, 127),
    **sites,
) -> list[int]:
    out = _MUTATORS[kind](list(codes), rng, spm, pitch_range, **sites)
    return _repair(out)


def apply_mutation(
    kind: MutationKind,
    seq: NoteSeq,
    rng: random.Random,
    pitch_range: tuple[int, int] = (0, 127),
    **sites,
) -> NoteSeq:
    """Return a mutated copy of ``seq``.

    Random sites can be pinned through keyword arguments, e.g.
    ``apply_mutation(MutationKind.TRANSPOSE, seq, rng, start=3, end=7, shift=3)``.
    Kinds with no applicable site return the input unchanged.  New pitches
    are drawn inside ``pitch_range``; transposition only clamps to 0-127.
    """
    codes = mutate_codes(kind, seq.codes, rng, seq.steps_per_measure, pitch_range, **sites)
    return seq.with_codes(codes)


def crossover_codes(a: Sequence[int], b: Sequence[int], cut: int) -> tuple[list[int], list[int]]:
    c1 = _repair(list(a[:cut]) + list(b[cut:]))
    c2 = _repair(list(b[:cut]) + list(a[cut:]))
    return c1, c2


def crossover(a: NoteSeq, b: NoteSeq, rng: random.Random, cut: int | None = None) -> tuple[NoteSeq, NoteSeq]:
    """One-point crossover: the children swap suffixes after ``cut``."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if cut is None:
        cut = rng.randint(1, n - 1) if n > 1 else 0
    c1, c2 = crossover_codes(a.codes, b.codes, cut)
    return a.with_codes(c1), b.with_codes(c2)


def random_codes(
    rng: random.Random,
    length: int,
    scale: Scale,
    pitch_range: tuple[int, int],
    note_p: float = 0.8,
    rest_p: float = 0.1,
) -> list[int]:
    lo, hi = pitch_range
    pool = [p for p in range(lo, hi + 1) if scale.contains(p)] or list(range(lo, hi + 1))
    codes = []
    for _ in range(length):
        r = rng.random()
        if r < note_p:
            codes.append(rng.choice(pool))
        elif r < note_p + rest_p:
            codes.append(REST)
        else:
            codes.append(HOLD)
    return _repair(codes)


# --------------------------------------------------------------------------- #
# the generation loop
# --------------------------------------------------------------------------- #

@dataclass
class GaResult:
    best: NoteSeq
    best_fitness: float
    history: list[float] = field(default_factory=list)


_WORKER_SCORER: _Scorer | None = None


def _init_worker(scorer: _Scorer) -> None:
    global _WORKER_SCORER
    _WORKER_SCORER = scorer


def _worker_score(codes: tuple[int, ...]) -> float:
    assert _WORKER_SCORER is not None
    return _WORKER_SCORER(codes)


def run_evolution(
    spec: FitnessSpec,
    cfg: GaConfig,
    ctx: HarmonicContext,
    reference_tracks: Sequence[NoteSeq],
    length: int,
    pitch_range: tuple[int, int] = (48, 84),
    initial: Sequence[Sequence[int]] = (),
) -> GaResult:
    """Evolve a ``length``-measure sequence; returns the best and its fitness curve.

    ``history[g]`` is the best fitness after generation ``g`` (``history[0]``
    is the random initial population).  ``initial`` seeds the first
    individuals of the population.
    """
    n_steps = len(ctx)
    if length < 1 or n_steps % length:
        raise ValueError(f"context of {n_steps} steps does not split into {length} measures")
    spm = n_steps // length
    rng = random.Random(cfg.rng_seed)
    scorer = _Scorer(spec, ctx, reference_tracks, spm)
    memo: dict[tuple[int, ...], float] = {}
    pool = ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(scorer,)) if cfg.workers > 1 else None

    def evaluate(population: list[tuple[int, ...]]) -> list[float]:
        missing = list(dict.fromkeys(p for p in population if p not in memo))
        if pool is not None and len(missing) > 1:
            chunk = max(1, len(missing) // (cfg.workers * 4))
            scores = list(pool.map(_worker_score, missing, chunksize=chunk))
        else:
            scores = [scorer(p) for p in missing]
        memo.update(zip(missing, scores))
        return [memo[p] for p in population]

    try:
        population = [tuple(_repair(list(c))) for c in initial][: cfg.population_size]
        while len(population) < cfg.population_size:
            population.append(tuple(random_codes(rng, n_steps, ctx.scale, pitch_range)))
        fit = evaluate(population)

        best_i = max(range(len(population)), key=fit.__getitem__)
        best, best_fit = population[best_i], fit[best_i]
        history = [best_fit]
        size = cfg.population_size

        def tournament() -> tuple[int, ...]:
            idx = rng.sample(range(size), cfg.tournament_size)
            return population[max(idx, key=fit.__getitem__)]

        for _ in range(cfg.generations):
            ranked = sorted(range(size), key=lambda i: -fit[i])
            nxt = [population[i] for i in ranked[: cfg.elitism_count]]
            while len(nxt) < size:
                p1, p2 = tournament(), tournament()
                if size > 1 and rng.random() < cfg.crossover_rate:
                    cut = rng.randint(1, n_steps - 1) if n_steps > 1 else 0
                    children = crossover_codes(p1, p2, cut)
                else:
                    children = (list(p1), list(p2))
                for child in children:
                    if cfg.mutation_scheme == "kind":
                        for kind in MUTATION_KINDS:
                            if rng.random() < cfg.mutation_rate:
                                child = mutate_codes(kind, child, rng, spm, pitch_range)
                    elif rng.random() < cfg.mutation_rate:
                        kind = rng.choice(MUTATION_KINDS)
                        child = mutate_codes(kind, child, rng, spm, pitch_range)
                    if len(nxt) < size:
                        nxt.append(tuple(child))
            population = nxt
            fit = evaluate(population)
            gen_best = max(range(size), key=fit.__getitem__)
            if fit[gen_best] > best_fit:
                best, best_fit = population[gen_best], fit[gen_best]
            history.append(max(fit))
    finally:
        if pool is not None:
            pool.shutdown()

    return GaResult(NoteSeq(best, spm, length), best_fit, history)


def evolve(
    spec: FitnessSpec,
    cfg: GaConfig,
    ctx: HarmonicContext,
    reference_tracks: Sequence[NoteSeq],
    length: int,
    pitch_range: tuple[int, int] = (48, 84),
) -> NoteSeq:
    """Best individual after ``cfg.generations`` generations."""
    return run_evolution(spec, cfg, ctx, reference_tracks, length, pitch_range).best


def feature_vector_fitness(fv: FeatureVector, spec: FitnessSpec) -> float:
    """Gaussian part of the fitness computed from an already measured vector."""
    return sum(gaussian_terms(fv.values, spec))
