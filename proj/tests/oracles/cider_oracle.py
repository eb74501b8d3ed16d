"""CIDEr-D formula oracle, written independently of the C++ code.

Prints scores for a fixed 5-sentence corpus so the C++ tests can pin them.
Run: python3 tests/oracles/cider_oracle.py
"""
import math
from collections import Counter

SIGMA = 6.0


def ngrams(words, n):
    return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


def doc_freq(ref_sets):
    df = Counter()
    for refs in ref_sets:
        seen = set()
        for r in refs:
            for n in range(1, 5):
                seen.update(ngrams(r, n).keys())
        df.update(seen)
    return df


def vec(words, n, df, corpus):
    out = {}
    for g, tf in ngrams(words, n).items():
        out[g] = tf * (math.log(corpus) - math.log(max(1.0, df.get(g, 0))))
    return out


def cider(cand, refs, df, corpus):
    if not cand:
        return 0.0
    total = 0.0
    for ref in refs:
        delta = len(cand) - len(ref)
        pen = math.exp(-delta * delta / (2 * SIGMA * SIGMA))
        acc, orders = 0.0, 0
        for n in range(1, 5):
            if len(cand) < n and len(ref) < n:
                continue
            orders += 1
            h, r = vec(cand, n, df, corpus), vec(ref, n, df, corpus)
            num = sum(min(w, r[g]) * r[g] for g, w in h.items() if g in r)
            nh = math.sqrt(sum(w * w for w in h.values()))
            nr = math.sqrt(sum(w * w for w in r.values()))
            if nh > 0 and nr > 0:
                num /= nh * nr
            acc += num * pen
        total += acc / orders if orders else 0.0
    return 10.0 * total / len(refs)


CORPUS = [
    ["red ball left", "small red ball"],
    ["blue box"],
    ["large green cup top right"],
    ["yellow book bottom"],
    ["purple person middle", "person middle"],
]
CASES = [
    ("red ball", 0),
    ("small red ball left", 0),
    ("blue box", 1),
    ("green cup right", 2),
    ("large green cup top right", 2),
    ("yellow book", 3),
    ("person", 4),
    ("red cup", 1),
]

if __name__ == "__main__":
    sets = [[s.split() for s in refs] for refs in CORPUS]
    df = doc_freq(sets)
    for text, idx in CASES:
        print(f'{{"{text}", {idx}, {cider(text.split(), sets[idx], df, len(sets)):.15f}}},')
