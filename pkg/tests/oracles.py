"""Exhaustive reference computations shared by the tests."""
import numpy as np


def strict_rank(utils):
    """rank[i, j]: position of j in row i, best first, lower column wins ties."""
    utils = np.asarray(utils, dtype=float)
    rank = np.empty(utils.shape, dtype=int)
    for i, row in enumerate(utils):
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))
        for pos, j in enumerate(order):
            rank[i, j] = pos
    return rank


def partial_matchings(acceptable):
    """Every partial injective map rows -> columns restricted to acceptable pairs."""
    P, A = acceptable.shape
    out = []
    cur = [-1] * P
    used = [False] * A

    def visit(i):
        if i == P:
            out.append(tuple(cur))
            return
        cur[i] = -1
        visit(i + 1)
        for a in range(A):
            if acceptable[i, a] and not used[a]:
                used[a] = True
                cur[i] = a
                visit(i + 1)
                used[a] = False
        cur[i] = -1

    visit(0)
    return out


def is_stable(match, pu, au):
    """No proposer/acceptor pair that would both rather be together."""
    P, A = pu.shape
    ok = np.isfinite(pu) & np.isfinite(au.T)
    rp, ra = strict_rank(pu), strict_rank(au)
    holder = [-1] * A
    for p, a in enumerate(match):
        if a >= 0:
            holder[a] = p
    for p in range(P):
        for a in range(A):
            if not ok[p, a] or match[p] == a:
                continue
            p_wants = match[p] < 0 or rp[p, a] < rp[p, match[p]]
            a_wants = holder[a] < 0 or ra[a, p] < ra[a, holder[a]]
            if p_wants and a_wants:
                return False
    return True


def stable_matchings(pu, au):
    pu, au = np.asarray(pu, float), np.asarray(au, float)
    ok = np.isfinite(pu) & np.isfinite(au.T)
    return [m for m in partial_matchings(ok) if is_stable(m, pu, au)]


def proposer_optimal(pu, au):
    """The stable matching every proposer weakly prefers to all others (None if absent)."""
    pu = np.asarray(pu, float)
    rp = strict_rank(pu)
    stable = stable_matchings(pu, au)

    def score(m, p):
        return rp[p, m[p]] if m[p] >= 0 else pu.shape[1] + 1

    for m in stable:
        if all(score(m, p) <= score(o, p) for o in stable for p in range(pu.shape[0])):
            return m
    return None
