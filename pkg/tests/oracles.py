"""Brute-force reference computations shared by the tests (no code from the package's samplers)."""

import itertools


def first_return_masses(model, word, k_max, base=0):
    """mu([word] ∩ {r_[base] = k}) for k = len(word)..k_max, by propagating path mass from the word's end.

    r_[base] counts steps until the orbit is next at ``base`` after position
    len(word) - 1, so the word itself must avoid ``base`` past its first
    symbol for the count to be a first return.
    """
    w = tuple(word)
    mass = model.measure.pi(w[0])
    for a, b in zip(w, w[1:]):
        mass *= model.kernel(a, b)
    out = {}
    front = {w[-1]: mass}
    for k in range(len(w), k_max + 1):
        nxt = {}
        hit = 0.0
        for a, m in front.items():
            for b, p in model.kernel.row(a):
                if p <= 0:
                    continue
                if b == base:
                    hit += m * p
                else:
                    nxt[b] = nxt.get(b, 0.0) + m * p
        out[k] = hit
        front = nxt
    return out


def exact_first_return_prob(model, word, k, symbols=None):
    """mu_[word](r_[word] = k) by enumerating every admissible path w + middle + tail (small alphabets only).

    The path has length len(word) + k, starts and ends with ``word`` and
    contains no occurrence of it at shifts 1..k-1.
    """
    w = tuple(word)
    n = len(w)
    syms = list(model.ts.alphabet) if symbols is None else list(symbols)

    def weight(path):
        m = model.measure.pi(path[0])
        for a, b in zip(path, path[1:]):
            m *= model.kernel(a, b)
        return m

    acc = 0.0
    free = max(k - n, 0)
    for mid in itertools.product(syms, repeat=free):
        path = list(w + mid) + [None] * (n + k - n - free)
        ok = True
        for j in range(n):
            slot = k + j
            if path[slot] is None:
                path[slot] = w[j]
            elif path[slot] != w[j]:
                ok = False
                break
        if not ok:
            continue
        path = tuple(path)
        if any(path[j: j + n] == w for j in range(1, k)):
            continue
        acc += weight(path)
    return acc / weight(w)
