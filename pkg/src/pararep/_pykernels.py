"""Pure-Python versions of the sequence kernels in ``_kernels.pyx``.

Inputs are sequences of ints.  Both backends must agree exactly.
"""


def edit_distance(a, b):
    """Levenshtein distance with unit insert/delete/substitute costs."""
    n, m = len(a), len(b)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        ai = a[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            cur[j] = min(sub, dele, ins)
        prev = cur
    return prev[m]


def lcs_length(a, b):
    n, m = len(a), len(b)
    prev = [0] * (m + 1)
    for i in range(1, n + 1):
        cur = [0] * (m + 1)
        ai = a[i - 1]
        for j in range(1, m + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = prev[j] if prev[j] >= cur[j - 1] else cur[j - 1]
        prev = cur
    return prev[m]


def apply_shift(seq, start, length, dest):
    """Move ``seq[start:start+length]`` so it begins at ``dest`` of the remainder."""
    block = seq[start:start + length]
    rest = seq[:start] + seq[start + length:]
    return rest[:dest] + block + rest[dest:]


def best_shift(hyp, ref, max_block):
    """Shift with the largest edit-distance reduction, or None.

    Ties prefer the longest block, then the earliest start, then the
    earliest destination.
    """
    hyp = list(hyp)
    ref = list(ref)
    base = edit_distance(hyp, ref)
    n = len(hyp)
    best = None
    best_gain = 0
    for length in range(min(max_block, n), 0, -1):
        for start in range(0, n - length + 1):
            for dest in range(0, n - length + 1):
                if dest == start:
                    continue
                gain = base - edit_distance(apply_shift(hyp, start, length, dest), ref)
                if gain > best_gain:
                    best_gain = gain
                    best = (start, length, dest)
    return best


def ter_greedy(hyp, ref, max_block=10, max_iters=50):
    """Greedy shift loop; returns ``(shifts, final_edit_distance)``."""
    hyp = list(hyp)
    shifts = 0
    for _ in range(max_iters):
        move = best_shift(hyp, ref, max_block)
        if move is None:
            break
        hyp = apply_shift(hyp, *move)
        shifts += 1
    return shifts, edit_distance(hyp, ref)
