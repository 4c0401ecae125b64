"""Independent reference implementations used by the unit and acceptance tests.

They are written from the musical rules directly and share no code with the
package, so agreement between the two is meaningful.
"""

import itertools
import math

# interval class -> consonance score
CONSONANCE = {0: 8, 3: 8, 4: 8, 8: 8, 9: 8, 5: 15, 7: 15, 1: -20, 2: -20, 10: -20, 11: -20, 6: -30}


def sounding(codes):
    out, cur = [], -1
    for c in codes:
        cur = cur if c == -2 else c
        out.append(cur)
    return out


def harmony_oracle(a, b):
    scores = []
    for x, y in zip(sounding(a), sounding(b)):
        if x < 0 and y < 0:
            scores.append(0)
        elif x < 0 or y < 0:
            scores.append(10)
        else:
            scores.append(CONSONANCE[abs(x - y) % 12])
    return math.tanh(sum(scores) / len(scores) / 10)


def gaussian_fitness(values, mu, sigma, weight):
    return sum(w * math.exp(-((r - m) ** 2) / (2 * s ** 2)) for r, m, s, w in zip(values, mu, sigma, weight))


def voicing_size_oracle(n_notes, arousal):
    """Number of notes left after the arousal rules, from the chord size alone."""
    size = n_notes
    if arousal < 0.3 or size > 4:
        size -= 1
    if arousal > 0.7 and size < 5:
        size += 1
    if arousal > 0.9 and size < 6:
        size += 1
    return size


def placement_oracle(offsets, root, valence):
    """Try every octave assignment (two octaves either way around C3 + root).

    Objective: distance of the mean pitch to the valence target, then the
    span, then the lowest pitches.
    """
    target = 45 + (valence + 1) / 2 * 24
    base = [48 + root + o for o in offsets]
    best_key, best = None, None
    for shifts in itertools.product(range(-2, 3), repeat=len(base)):
        pitches = sorted(b + 12 * s for b, s in zip(base, shifts))
        if len(set(pitches)) < len(pitches) or pitches[0] < 0 or pitches[-1] > 127:
            continue
        key = (round(abs(sum(pitches) / len(pitches) - target), 9), pitches[-1] - pitches[0], pitches)
        if best_key is None or key < best_key:
            best_key, best = key, tuple(pitches)
    return best
