"""JIT kernels for the stirring dynamics.

Bonds are indexed by their left site offset by L, so bond ``b`` joins array
positions ``b`` and ``b + 1``.  Every bond except ``slow`` rings at rate 1; a
ring swaps the two occupations (a no-op when they agree).
"""

import numpy as np
from numba import njit

_ONE = np.uint64(1)


@njit(cache=True, inline="always")
def _pick_bond(rng, n_unit, slow, total_rate):
    r = rng.random() * total_rate
    if r >= n_unit:
        return slow
    b = int(r)
    if b >= slow:
        b += 1
    return b


@njit(cache=True)
def run_scalar(eta, slow, slow_rate, now, target, rng, mon_of_bond, counters, tag,
               log_time, log_bond, log_len, logging):
    """Exact Gillespie run of one configuration up to ``target`` (micro time).

    Returns ``(now, log_len, finished)``; ``finished`` is False only when the
    event log buffer filled up, in which case the caller grows it and resumes.
    """
    n_unit = eta.size - 2
    total_rate = n_unit + slow_rate
    if total_rate <= 0.0:
        return target, log_len, True
    cap = log_time.size
    while True:
        now_next = now + rng.standard_exponential() / total_rate
        if now_next > target:
            return target, log_len, True
        now = now_next
        b = _pick_bond(rng, n_unit, slow, total_rate)
        a = eta[b]
        c = eta[b + 1]
        if a == c:
            continue
        eta[b] = c
        eta[b + 1] = a
        m = mon_of_bond[b]
        if m >= 0:
            counters[m] += np.int64(a) - np.int64(c)
        if tag[0] == b:
            tag[0] = b + 1
        elif tag[0] == b + 1:
            tag[0] = b
        if logging:
            log_time[log_len] = now
            log_bond[log_len] = b
            log_len += 1
            if log_len == cap:
                return now, log_len, False


@njit(cache=True, inline="always")
def _swap_packed(words, tags, mon_of_bond, counters, b, track_tags):
    a = words[b]
    c = words[b + 1]
    words[b] = c
    words[b + 1] = a
    m = mon_of_bond[b]
    if m >= 0:
        lr = a & ~c
        rl = c & ~a
        if (lr | rl) != 0:
            for k in range(64):
                uk = np.uint64(k)
                counters[m, k] += np.int64((lr >> uk) & _ONE) - np.int64((rl >> uk) & _ONE)
    if track_tags:
        ta = tags[b]
        tc = tags[b + 1]
        if (ta | tc) != 0:
            d = a ^ c
            tags[b] = (ta & ~d) | (tc & d)
            tags[b + 1] = (tc & ~d) | (ta & d)


@njit(cache=True)
def run_packed_count(words, tags, mon_of_bond, counters, slow, slow_rate, n_events, rng,
                     track_tags):
    """Apply ``n_events`` bond rings to 64 lanes sharing the clocks."""
    n_unit = words.size - 2
    total_rate = n_unit + slow_rate
    for _ in range(n_events):
        b = _pick_bond(rng, n_unit, slow, total_rate)
        _swap_packed(words, tags, mon_of_bond, counters, b, track_tags)


@njit(cache=True, inline="always")
def _accumulate_site(words, y, lo, occ, last, now):
    i = y - lo
    dt = now - last[i]
    w = words[y]
    if w != 0 and dt > 0.0:
        for k in range(64):
            if (w >> np.uint64(k)) & _ONE:
                occ[i, k] += dt
    last[i] = now


@njit(cache=True)
def run_packed_timed(words, tags, mon_of_bond, counters, slow, slow_rate, now, target, rng,
                     track_tags, win_lo, occ, last):
    """Timed run that integrates per-lane occupation of sites ``win_lo..win_lo+len(last)-1``.

    ``occ`` is in micro time units.  All window sites are flushed to ``target``
    before returning.
    """
    n_unit = words.size - 2
    total_rate = n_unit + slow_rate
    win_hi = win_lo + last.size - 1
    if total_rate > 0.0:
        while True:
            now_next = now + rng.standard_exponential() / total_rate
            if now_next > target:
                break
            now = now_next
            b = _pick_bond(rng, n_unit, slow, total_rate)
            if words[b] != words[b + 1] and b + 1 >= win_lo and b <= win_hi:
                if b >= win_lo:
                    _accumulate_site(words, b, win_lo, occ, last, now)
                if b + 1 <= win_hi:
                    _accumulate_site(words, b + 1, win_lo, occ, last, now)
            _swap_packed(words, tags, mon_of_bond, counters, b, track_tags)
    for y in range(win_lo, win_hi + 1):
        _accumulate_site(words, y, win_lo, occ, last, target)
    return target


@njit(cache=True, inline="always")
def _flush_bits(w, row, acc, last, now):
    dt = now - last[row]
    if w != 0 and dt > 0.0:
        for k in range(64):
            if (w >> np.uint64(k)) & _ONE:
                acc[row, k] += dt
    last[row] = now


@njit(cache=True)
def run_packed_integrals(words, slow, slow_rate, now, target, rng, site_time, site_last,
                         disc_time, disc_last):
    """Timed run integrating, per lane, every site's occupation and every bond's discordance.

    ``site_time`` is (2L, 64) and ``disc_time`` is (2L-1, 64), both in micro
    time; the ``*_last`` arrays must hold the current time on entry.
    """
    n_unit = words.size - 2
    total_rate = n_unit + slow_rate
    nb = words.size - 1
    if total_rate > 0.0:
        while True:
            now_next = now + rng.standard_exponential() / total_rate
            if now_next > target:
                break
            now = now_next
            b = _pick_bond(rng, n_unit, slow, total_rate)
            a = words[b]
            c = words[b + 1]
            if a == c:
                continue
            _flush_bits(a, b, site_time, site_last, now)
            _flush_bits(c, b + 1, site_time, site_last, now)
            if b >= 1:
                _flush_bits(words[b - 1] ^ a, b - 1, disc_time, disc_last, now)
            if b + 1 < nb:
                _flush_bits(c ^ words[b + 2], b + 1, disc_time, disc_last, now)
            words[b] = c
            words[b + 1] = a
    for y in range(words.size):
        _flush_bits(words[y], y, site_time, site_last, target)
    for y in range(nb):
        _flush_bits(words[y] ^ words[y + 1], y, disc_time, disc_last, target)
    return target


@njit(cache=True)
def replay_log(eta0, log_time, log_bond, sample_times, site_weight, bond_weight,
               field_weight):
    """Integrate linear and bond-quadratic functionals along a logged trajectory.

    Returns per sample time: the field ``sum field_weight * eta``, the time
    integral of ``sum site_weight * eta`` and the time integral of
    ``sum bond_weight[b] * (eta[b] - eta[b+1])**2``.  Times are micro units.
    """
    eta = eta0.copy()
    n_s = sample_times.size
    field = np.empty(n_s)
    lin_int = np.empty(n_s)
    quad_int = np.empty(n_s)
    lin = 0.0
    for x in range(eta.size):
        lin += site_weight[x] * eta[x]
    fval = 0.0
    for x in range(eta.size):
        fval += field_weight[x] * eta[x]
    quad = 0.0
    for b in range(eta.size - 1):
        if eta[b] != eta[b + 1]:
            quad += bond_weight[b]
    acc_lin = 0.0
    acc_quad = 0.0
    now = 0.0
    j = 0
    n_ev = log_time.size
    for s in range(n_s):
        ts = sample_times[s]
        while j < n_ev and log_time[j] <= ts:
            tau = log_time[j]
            acc_lin += lin * (tau - now)
            acc_quad += quad * (tau - now)
            now = tau
            b = log_bond[j]
            a = eta[b]
            c = eta[b + 1]
            # a != c for logged events: one particle hops across bond b
            sign = np.float64(a) - np.float64(c)
            lin += sign * (site_weight[b + 1] - site_weight[b])
            fval += sign * (field_weight[b + 1] - field_weight[b])
            if b >= 1:
                if eta[b - 1] != eta[b]:
                    quad -= bond_weight[b - 1]
                else:
                    quad += bond_weight[b - 1]
            if b + 2 < eta.size:
                if eta[b + 1] != eta[b + 2]:
                    quad -= bond_weight[b + 1]
                else:
                    quad += bond_weight[b + 1]
            eta[b] = c
            eta[b + 1] = a
            j += 1
        acc_lin += lin * (ts - now)
        acc_quad += quad * (ts - now)
        now = ts
        field[s] = fval
        lin_int[s] = acc_lin
        quad_int[s] = acc_quad
    return field, lin_int, quad_int
