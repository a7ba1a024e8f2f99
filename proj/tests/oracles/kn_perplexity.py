#!/usr/bin/env python3
# Stand-alone interpolated modified Kneser-Ney perplexity.
#
# usage: kn_perplexity.py TRAIN HELDOUT [--order N] [--min-count C]
#
# One sentence per line, whitespace tokens. Each sentence is wrapped as
# <s> ... </s>; </s> is predicted, <s> is not. The predictive vocabulary is
# </s>, <unk> and every training word seen at least min_count times. Lower
# orders use the number of distinct left neighbours, except for n-grams that
# begin with <s>, which keep their raw counts.
import argparse
import math
from collections import defaultdict

BOS, EOS, UNK = "<s>", "</s>", "<unk>"


def read(path):
    with open(path, encoding="utf-8") as f:
        return [[t for t in line.split() if t not in (BOS, EOS)] for line in f if line.split()]


def discounts(counts):
    n = [0, 0, 0, 0]
    for c in counts.values():
        if 1 <= c <= 4:
            n[c - 1] += 1
    if min(n) == 0:
        return (0.75, 0.75, 0.75)
    y = n[0] / (n[0] + 2 * n[1])
    d = (1 - 2 * y * n[1] / n[0], 2 - 3 * y * n[2] / n[1], 3 - 4 * y * n[3] / n[2])
    if not all(0 < d[i] < i + 1 for i in range(3)):
        return (0.75, 0.75, 0.75)
    return d


class KneserNey:
    def __init__(self, sentences, order, min_count):
        freq = defaultdict(int)
        for s in sentences:
            for t in s:
                freq[t] += 1
        self.vocab = {EOS, UNK} | {w for w, c in freq.items() if c >= min_count}
        self.order = order
        raw = [defaultdict(int) for _ in range(order + 1)]
        for s in sentences:
            seq = [BOS] + [self.map(t) for t in s] + [EOS]
            for i in range(1, len(seq)):
                for n in range(1, min(order, i + 1) + 1):
                    raw[n][tuple(seq[i + 1 - n:i + 1])] += 1
        # adjusted counts
        self.count = [None] + [dict() for _ in range(order)]
        for n in range(1, order + 1):
            if n == order:
                self.count[n] = dict(raw[n])
                continue
            left = defaultdict(set)
            for g in raw[n + 1]:
                left[g[1:]].add(g[0])
            for g, c in raw[n].items():
                self.count[n][g] = c if g[0] == BOS else len(left[g])
        self.d = [None] + [discounts({g: c for g, c in self.count[n].items() if c > 0}) for n in range(1, order + 1)]
        # per-history totals and counts of successors by count class
        self.hist = [None] + [defaultdict(lambda: [0, 0, 0, 0]) for _ in range(order)]
        for n in range(1, order + 1):
            for g, c in self.count[n].items():
                if c == 0:
                    continue
                h = self.hist[n][g[:-1]]
                h[0] += c
                h[min(c, 3)] += 1

    def map(self, t):
        return t if t in self.vocab else UNK

    def prob(self, history, w):
        p = 1.0 / len(self.vocab)
        for n in range(1, min(len(history) + 1, self.order) + 1):
            h = tuple(history[len(history) - (n - 1):]) if n > 1 else ()
            if h not in self.hist[n]:
                continue
            total, n1, n2, n3 = self.hist[n][h]
            d = self.d[n]
            gamma = (d[0] * n1 + d[1] * n2 + d[2] * n3) / total
            c = self.count[n].get(h + (w,), 0)
            direct = max(c - min(d[min(c, 3) - 1], c), 0.0) / total if c > 0 else 0.0
            p = direct + gamma * p
        return p

    def perplexity(self, sentences):
        bits, n = 0.0, 0
        for s in sentences:
            hist = [BOS]
            for w in [self.map(t) for t in s] + [EOS]:
                bits -= math.log2(self.prob(hist[-(self.order - 1):] if self.order > 1 else [], w))
                n += 1
                hist.append(w)
        return 2.0 ** (bits / n), n


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("train")
    ap.add_argument("heldout")
    ap.add_argument("--order", type=int, default=5)
    ap.add_argument("--min-count", type=int, default=1)
    args = ap.parse_args()
    model = KneserNey(read(args.train), args.order, args.min_count)
    ppl, n = model.perplexity(read(args.heldout))
    print(f"order={args.order} min_count={args.min_count} tokens={n} vocab={len(model.vocab)} perplexity={ppl:.10f}")


if __name__ == "__main__":
    main()
