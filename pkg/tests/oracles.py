"""Slow, direct reference implementations used only by the tests.

Each one is written from the textbook definition and shares no code with
the package, so agreement is meaningful.
"""
import itertools
import math
from functools import lru_cache


# ---------------------------------------------------------------- sequences

def lev(a, b):
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def lcs(a, b):
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def f(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + f(i + 1, j + 1)
        return max(f(i + 1, j), f(i, j + 1))

    return f(0, 0)


def all_shifts(seq):
    """Every distinct sequence reachable by moving one contiguous block."""
    seq = list(seq)
    n = len(seq)
    out = set()
    for i in range(n):
        for j in range(i + 1, n + 1):
            block, rest = seq[i:j], seq[:i] + seq[j:]
            for k in range(len(rest) + 1):
                moved = tuple(rest[:k] + block + rest[k:])
                if moved != tuple(seq):
                    out.add(moved)
    return out


def ter_exhaustive(hyp, ref, depth=2):
    """min over shift sequences of length <= depth of (shifts + edit distance)."""
    best = lev(hyp, ref)
    frontier = {tuple(hyp)}
    for d in range(1, depth + 1):
        nxt = set()
        for h in frontier:
            nxt |= all_shifts(h)
        for h in nxt:
            best = min(best, d + lev(h, ref))
        frontier = nxt
    return best / len(ref)


# ---------------------------------------------------------------- n-gram metrics

def grams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def clipped(ref_grams, cand_grams):
    used = [False] * len(ref_grams)
    hits = 0
    for g in cand_grams:
        for k, r in enumerate(ref_grams):
            if not used[k] and r == g:
                used[k] = True
                hits += 1
                break
    return hits


def bleu_corpus(refs, cands, max_n=4):
    logs = []
    for n in range(1, max_n + 1):
        m = t = 0
        for r, c in zip(refs, cands):
            m += clipped(grams(r, n), grams(c, n))
            t += len(grams(c, n))
        if t == 0:
            continue
        if m == 0:
            return 0.0
        logs.append(math.log(m / t))
    if not logs:
        return 0.0
    rl = sum(len(r) for r in refs)
    cl = sum(len(c) for c in cands)
    if cl == 0:
        return 0.0
    bp = 1.0 if cl >= rl else math.exp(1 - rl / cl)
    return bp * math.exp(sum(logs) / len(logs))


def bleu_sentence(ref, cand, max_n=4):
    logs = []
    for n in range(1, max_n + 1):
        m = clipped(grams(ref, n), grams(cand, n))
        t = len(grams(cand, n))
        p = (m / t if t else 0.0) if n == 1 else (m + 1) / (t + 1)
        if p == 0:
            return 0.0
        logs.append(math.log(p))
    if not cand:
        return 0.0
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * math.exp(sum(logs) / max_n)


def rouge_l(ref, cand):
    if not ref or not cand:
        return 0.0
    k = lcs(ref, cand)
    if k == 0:
        return 0.0
    p, r = k / len(cand), k / len(ref)
    return 2 * p * r / (p + r)


def meteor(ref, cand, exact_identity=True):
    """Enumerate every one-to-one exact matching; keep most matches, then fewest chunks."""
    pairs = [(i, j) for i in range(len(cand)) for j in range(len(ref)) if cand[i] == ref[j]]
    best = (0, 0)
    for size in range(len(pairs), 0, -1):
        found = False
        for combo in itertools.combinations(pairs, size):
            if len({i for i, _ in combo}) < size or len({j for _, j in combo}) < size:
                continue
            found = True
            combo = sorted(combo)
            chunks = 1 + sum(1 for (i0, j0), (i1, j1) in zip(combo, combo[1:]) if not (i1 == i0 + 1 and j1 == j0 + 1))
            if best[0] < size or chunks < best[1]:
                best = (size, chunks)
        if found:
            break
    m, ch = best
    if m == 0:
        return 0.0
    p, r = m / len(cand), m / len(ref)
    fmean = 10 * p * r / (r + 9 * p)
    pen = 0.5 * (ch / m) ** 3
    if exact_identity and list(ref) == list(cand):
        pen = 0.0
    return fmean * (1 - pen)


def multiset_overlap(a, b):
    b = list(b)
    hits = 0
    for x in a:
        if x in b:
            b.remove(x)
            hits += 1
    return hits


def chrf(ref, cand, char_n=6, word_n=2, beta=2.0, tokenize=None):
    rs, cs = "".join(ref.split()), "".join(cand.split())
    rw, cw = tokenize(ref), tokenize(cand)
    orders = [([rs[i:i + n] for i in range(len(rs) - n + 1)], [cs[i:i + n] for i in range(len(cs) - n + 1)])
              for n in range(1, char_n + 1)]
    orders += [(grams(rw, n), grams(cw, n)) for n in range(1, word_n + 1)]
    ps, rcs = [], []
    for rg, cg in orders:
        if not rg and not cg:
            continue
        m = multiset_overlap(cg, rg)
        ps.append(m / len(cg) if cg else 0.0)
        rcs.append(m / len(rg) if rg else 0.0)
    if not ps:
        return 1.0
    p, r = sum(ps) / len(ps), sum(rcs) / len(rcs)
    if p == 0 and r == 0:
        return 0.0
    return (1 + beta ** 2) * p * r / (beta ** 2 * p + r)


# ---------------------------------------------------------------- correlation

def pearson(x, y):
    x, y = [float(v) for v in x], [float(v) for v in y]
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = math.fsum((a - mx) ** 2 for a in x)
    vy = math.fsum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


def kendall_b(x, y):
    x, y = [float(v) for v in x], [float(v) for v in y]
    c = d = tx = ty = 0
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            sx = (x[i] > x[j]) - (x[i] < x[j])
            sy = (y[i] > y[j]) - (y[i] < y[j])
            if sx == 0 and sy == 0:
                continue
            if sx == 0:
                tx += 1
            elif sy == 0:
                ty += 1
            elif sx == sy:
                c += 1
            else:
                d += 1
    return (c - d) / math.sqrt((c + d + tx) * (c + d + ty))


# ---------------------------------------------------------------- decoding

def exhaustive_decode(step, alphabet, eos, bos, max_len, penalty):
    """Best finished sequence over the whole space: any body over ``alphabet``
    ending in EOS with fewer than max_len - 1 body tokens, or a full-length
    body without EOS.  Ties: lexicographically smaller, then shorter."""
    seqs = []
    for k in range(max_len - 1):
        seqs += [body + (eos,) for body in itertools.product(alphabet, repeat=k)]
    seqs += list(itertools.product(alphabet, repeat=max_len - 1))
    scored = []
    for s in seqs:
        lp, prefix = 0.0, (bos,)
        for t in s:
            lp += float(step([prefix])[0][t])
            prefix += (t,)
        norm = lp / len(s) ** penalty if penalty else lp
        scored.append((-norm, s, len(s)))
    scored.sort()
    return scored[0][1]
