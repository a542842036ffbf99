"""Exact weighted set partitioning: pick one ride per traveller maximising
the summed ride values.

Depth-first branch-and-bound on the gain of pooled rides over the
all-private cover. Bounds come from the Lagrangian relaxation of the
one-ride-per-traveller constraints, started from the best per-member share
``M(r)/|r|`` and tightened by subgradient steps. Pooled rides worth strictly
less than their members' private rides can never be optimal and are dropped
up front; the remaining instance is split into independent components.
Bounds certify optimality to ``BOUND_SLACK``.

Among optimal covers (values within ``tol``) the winner is the one whose
smallest differing ride id is selected, i.e. the lexicographically smallest
ride-id set under that comparison.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleAssignmentError
from .pricing import PricedRide


BOUND_SLACK = 1e-6      # improvements below this are not searched for


@dataclass
class Assignment:
    ride_ids: tuple[int, ...]
    objective: float
    nodes: int = 0
    seconds: float = 0.0
    stats: dict = field(default_factory=dict)


def _prefer(a: frozenset, b: frozenset) -> bool:
    """True when ``a`` wins the tie-break over ``b``."""
    diff = a ^ b
    return bool(diff) and min(diff) in a


def solve_assignment(priced: Sequence[PricedRide], travellers: Iterable[int],
                     tol: float = 1e-9) -> Assignment:
    start = time.perf_counter()
    travellers = sorted(set(travellers))
    tset = set(travellers)
    private: dict[int, PricedRide] = {}
    pooled: list[PricedRide] = []
    for pr in priced:
        members = pr.ride.traveller_ids
        if not set(members) <= tset:
            continue
        if pr.ride.is_private:
            tid = members[0]
            if tid not in private or pr.ride_id < private[tid].ride_id:
                private[tid] = pr
        else:
            pooled.append(pr)
    for tid in travellers:
        if tid not in private:
            raise InfeasibleAssignmentError(tid)

    kept = []
    for pr in pooled:
        base = sum(private[t].max_value for t in pr.ride.traveller_ids)
        if pr.max_value >= base - tol:
            kept.append(pr)

    # components over travellers linked by kept pooled rides
    parent = {t: t for t in travellers}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for pr in kept:
        root = find(pr.ride.traveller_ids[0])
        for t in pr.ride.traveller_ids[1:]:
            parent[find(t)] = root
    groups: dict[int, list[int]] = {}
    for t in travellers:
        groups.setdefault(find(t), []).append(t)
    rides_by_group: dict[int, list[PricedRide]] = {g: [] for g in groups}
    for pr in kept:
        rides_by_group[find(pr.ride.traveller_ids[0])].append(pr)

    selected: list[int] = []
    total = 0.0
    nodes = 0
    for g, members in groups.items():
        privs = [private[t] for t in members]
        if len(members) == 1:
            selected.append(privs[0].ride_id)
            total += privs[0].max_value
            continue
        ids, val, n = _branch_and_bound(members, privs, rides_by_group[g], tol)
        selected.extend(ids)
        total += val
        nodes += n
    return Assignment(tuple(sorted(selected)), float(total), nodes, time.perf_counter() - start,
                      {"pooled_candidates": len(pooled), "pooled_kept": len(kept), "components": len(groups)})


def _lagrange(A: np.ndarray, gains: np.ndarray, u0: np.ndarray, target: float, iters: int,
              on_iterate=None, patience: int = 5) -> tuple[float, np.ndarray]:
    """Subgradient descent on the packing bound
    ``L(u) = sum(u) + sum(max(0, g - A u))``, valid for every ``u >= 0``.

    Polyak steps towards ``target`` (the incumbent), halving the step after
    ``patience`` non-improving iterations; stops once the bound drops below
    the target. Returns the best bound and its multipliers.
    """
    u = u0.copy()
    best_b, best_u = np.inf, u.copy()
    mu, stall = 1.0, 0
    for _ in range(iters):
        rc = gains - A @ u
        pos = rc > 0
        b = float(u.sum() + rc[pos].sum())
        if on_iterate is not None:
            on_iterate(rc)
        if b < best_b - 1e-12:
            best_b, best_u, stall = b, u.copy(), 0
        else:
            stall += 1
            if stall >= patience:
                mu, stall = mu * 0.5, 0
        if best_b < target or mu < 1e-4:
            break
        grad = 1.0 - A[pos].sum(axis=0)
        grad[(u <= 0) & (grad > 0)] = 0.0
        norm = float(grad @ grad)
        if norm == 0:
            break
        u = np.maximum(u - mu * (b - target) / norm * grad, 0.0)
    return best_b, best_u


def _share_multipliers(A: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """u_i = best gain share of any ride containing i: the plain share bound."""
    share = np.maximum(gains, 0.0) / np.maximum(A.sum(axis=1), 1.0)
    return np.where(A > 0, share[:, None], 0.0).max(axis=0, initial=0.0)


def _greedy(order, gains, ride_members, n) -> list[int]:
    owner = [-1] * n
    chosen = []
    for r in order:
        if gains[r] > 0 and all(owner[i] < 0 for i in ride_members[r]):
            for i in ride_members[r]:
                owner[i] = r
            chosen.append(r)
    return chosen


def _local_search(chosen: list[int], order, gains, ride_members, member_rides, n, max_rounds: int = 50) -> list[int]:
    """Insert-evict-refill moves until no move improves the packing."""
    owner = [-1] * n
    for r in chosen:
        for i in ride_members[r]:
            owner[i] = r
    for _ in range(max_rounds):
        improved = False
        for r in order:
            if owner[ride_members[r][0]] == r or gains[r] <= 0:
                continue
            evict = {owner[i] for i in ride_members[r] if owner[i] >= 0}
            freed = {i for e in evict for i in ride_members[e]} - set(ride_members[r])
            delta = gains[r] - sum(gains[e] for e in evict)
            trial = {i: -1 for i in freed}
            refill = []
            for i in sorted(freed):
                if trial[i] >= 0:
                    continue
                for q in member_rides[i]:
                    mem = ride_members[q]
                    if gains[q] > 0 and all(j in trial and trial[j] < 0 for j in mem):
                        for j in mem:
                            trial[j] = q
                        refill.append(q)
                        delta += gains[q]
                        break
            if delta > 1e-12:
                for e in evict:
                    for i in ride_members[e]:
                        owner[i] = -1
                for q in [r] + refill:
                    for i in ride_members[q]:
                        owner[i] = q
                improved = True
        if not improved:
            break
    return sorted({o for o in owner if o >= 0})


def _branch_and_bound(members: list[int], privs: list[PricedRide], pooled: list[PricedRide], tol: float):
    """Set packing over pooled rides scored by their gain over the members'
    private rides; members left uncovered ride alone.

    Bounds are Lagrangian, ``sum_{i free} u_i + sum_{r free} max(0, g_r -
    sum_{i in r} u_i)``, valid for any ``u >= 0``; ``u_i`` equal to the best
    per-member gain share is the plain share bound. The root multipliers give
    a cheap incremental bound at every node; nodes it cannot prune get a short
    warm-started subgradient search of their own. Rides whose forced
    inclusion drops the root bound below the incumbent are removed first.

    The optimum value is searched for first, ignoring ties. Ties are then
    settled item by item in ride-id order: an item is kept iff some cover
    within ``tol`` of the optimum agrees with every earlier decision. Refused
    offers make ride gains additive over members, which produces huge
    families of tied packings; this order avoids enumerating them.
    """
    pos = {t: i for i, t in enumerate(members)}
    n = len(members)
    priv_val = np.array([pr.max_value for pr in privs])
    priv_id = [pr.ride_id for pr in privs]
    base = float(priv_val.sum())
    ids_all = [pr.ride_id for pr in pooled]
    A_all = np.zeros((len(pooled), n))
    for r, pr in enumerate(pooled):
        A_all[r, [pos[t] for t in pr.ride.traveller_ids]] = 1.0
    gains_all = np.array([pr.max_value for pr in pooled]) - A_all @ priv_val

    def structure(A, gains, ids):
        rm = [np.flatnonzero(A[r]).tolist() for r in range(len(ids))]
        mr = [np.flatnonzero(A[:, i]) for i in range(n)]
        share = np.maximum(gains, 0.0) / np.maximum(A.sum(axis=1), 1.0)
        return rm, mr, share

    rm, mr, share = structure(A_all, gains_all, ids_all)
    by_share = sorted(range(len(ids_all)), key=lambda r: (-share[r], ids_all[r]))
    chosen = _local_search(_greedy(by_share, gains_all, rm, n), by_share, gains_all, rm, mr, n)
    inc = [float(gains_all[chosen].sum()), chosen]
    calls = [0]

    def heuristic(rc):
        # pack by reduced cost, then repair by local search
        calls[0] += 1
        if calls[0] % (10 if calls[0] <= 100 else 100):
            return
        order = sorted(range(len(ids_all)), key=lambda r: (-rc[r], ids_all[r]))
        cand = _local_search(_greedy(order, gains_all, rm, n), by_share, gains_all, rm, mr, n, max_rounds=5)
        val = float(gains_all[cand].sum())
        if val > inc[0] + tol:
            inc[0], inc[1] = val, cand

    root, u = _lagrange(A_all, gains_all, _share_multipliers(A_all, gains_all), inc[0], 3000, heuristic, patience=20)
    best_val, chosen = inc
    best_ids = {ids_all[r] for r in chosen}
    raw = gains_all - A_all @ u
    root = float(u.sum() + np.maximum(raw, 0.0).sum())
    keep = root + np.minimum(raw, 0.0) >= best_val - tol
    keep |= np.isin(ids_all, list(best_ids))
    A, gains = A_all[keep], gains_all[keep]
    ids = [ids_all[r] for r in np.flatnonzero(keep)]
    R = len(ids)
    ride_members, member_rides, share = structure(A, gains, ids)
    _, u = _lagrange(A, gains, u, best_val, 3000, patience=20)
    rc = np.maximum(gains - A @ u, 0.0)
    index = {rid: r for r, rid in enumerate(ids)}

    blocked = np.zeros(R, dtype=np.int32)
    covered = np.zeros(n, dtype=bool)
    no_private = np.zeros(n, dtype=bool)
    acc = [float(u.sum()) + float(rc.sum())]

    def cover(i: int):
        rs = member_rides[i]
        acc[0] -= u[i] + float(rc[rs[blocked[rs] == 0]].sum())
        blocked[rs] += 1
        covered[i] = True

    def uncover(i: int):
        rs = member_rides[i]
        blocked[rs] -= 1
        acc[0] += u[i] + float(rc[rs[blocked[rs] == 0]].sum())
        covered[i] = False

    # branch on members with the fewest rides first; rides by gain share
    order = sorted(range(n), key=lambda i: (len(member_rides[i]), i))
    options = [sorted(member_rides[i].tolist(), key=lambda r: (-share[r], ids[r])) for i in range(n)]
    node_count = [0]
    picked: list[int] = []
    found: list = [None]

    def dfs(k: int, value: float, u_node: np.ndarray, target: list, first: bool, slack: float = 0.0) -> bool:
        """Completions of the current partial cover worth at least target[0].
        With ``first`` the search stops at the first one; otherwise target is
        raised past every completion found. Nodes are pruned once their bound
        falls below ``target[0] + slack``. Returns True to stop."""
        node_count[0] += 1
        while k < n and covered[order[k]]:
            k += 1
        free = blocked == 0
        if k == n or not free.any():
            if (no_private & ~covered).any() or value < target[0]:
                return False
            found[0] = (value, list(picked))
            if not first:
                target[0] = value + tol
            return first
        if value + acc[0] < target[0] + slack:
            return False
        b, u_node = _lagrange(A[free], gains[free], np.where(covered, 0.0, u_node), target[0] + slack - value, 15)
        if value + b < target[0] + slack:
            return False
        i = order[k]
        for r in options[i]:
            if blocked[r]:
                continue
            mem = ride_members[r]
            for j in mem:
                cover(j)
            picked.append(r)
            stop = dfs(k + 1, value + gains[r], u_node, target, first, slack)
            picked.pop()
            for j in reversed(mem):
                uncover(j)
            if stop:
                return True
        if not no_private[i]:
            cover(i)
            stop = dfs(k + 1, value, u_node, target, first, slack)
            uncover(i)
            if stop:
                return True
        return False

    # optimal value, ties ignored; a subgradient bound cannot close exact
    # ties, so improvements below BOUND_SLACK are not searched for
    found[0] = (best_val, [index[rid] for rid in best_ids])
    dfs(0, 0.0, u, [best_val + tol], False, BOUND_SLACK - tol)
    best_val, witness = found[0]
    witness = set(witness)

    # tie-break: settle rides in id order (private rides included), keeping an
    # item whenever some cover within tol of the optimum agrees with all
    # earlier decisions; ``witness`` is always such a cover
    target = best_val - tol
    fixed: list[int] = []
    value = 0.0
    items = sorted([(priv_id[i], -1, i) for i in range(n)] + [(ids[r], r, -1) for r in range(R)])
    for _, r, i in items:
        if r >= 0:
            if blocked[r]:
                continue
            for j in ride_members[r]:
                cover(j)
            if r not in witness and not dfs(0, value + gains[r], u, [target], True):
                for j in reversed(ride_members[r]):
                    uncover(j)
                blocked[r] += 1
                acc[0] -= rc[r]
                continue
            if r not in witness:
                witness = set(fixed) | {r} | set(found[0][1])
            fixed.append(r)
            value += gains[r]
        else:
            if covered[i]:
                continue
            cover(i)
            if any(i in ride_members[q] for q in witness) and not dfs(0, value, u, [target], True):
                uncover(i)
                no_private[i] = True
                continue
            if any(i in ride_members[q] for q in witness):
                witness = set(fixed) | set(found[0][1])
    used = {j for r in fixed for j in ride_members[r]}
    chosen = [ids[r] for r in fixed] + [priv_id[i] for i in range(n) if i not in used]
    return sorted(chosen), base + value, node_count[0]
