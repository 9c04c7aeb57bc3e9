"""Numba inner loops for the Metropolis chains.

Kernels draw from numba's generator, which the caller reseeds from its own
numpy stream before every call; a run is therefore a pure function of the
``(seed, stream)`` pair.

Move probabilities are passed as ``(p_end, p_toggle, p_rev)``; the remaining
mass goes to 2-changes ``pi o (x y)`` over the pair list.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def reseed(s):
    np.random.seed(s)


@njit(cache=True)
def _nn_ok(x, y, nbr_ptr, nbr_idx):
    if x == y:
        return True
    for k in range(nbr_ptr[x], nbr_ptr[x + 1]):
        if nbr_idx[k] == y:
            return True
    return False


@njit(cache=True)
def _reverse_cycle(image, pre, u, buf):
    m = 0
    v = u
    while True:
        buf[m] = v
        m += 1
        v = image[v]
        if v == u:
            break
    for i in range(m):
        v = buf[i]
        t = image[v]
        image[v] = pre[v]
        pre[v] = t


@njit(cache=True)
def _on_walk(image, u, sink):
    if sink < 0:
        return False
    v = u
    while True:
        if v == sink:
            return True
        v = image[v]
        if v == u:
            return False


@njit(cache=True)
def _avail(v, image, in_dom, sink):
    return in_dom[v] and image[v] == v and v != sink


@njit(cache=True)
def growth_prob(cyc, m, start, image, in_dom, sink, nbr_ptr, nbr_idx, stamp, tag):
    """Probability that the growth walk from ``cyc[start]`` traces the directed cycle.

    At each step the walk picks uniformly among the available unvisited
    neighbours plus, once it has left the start, the option to close.
    """
    x = cyc[start]
    stamp[x] = tag
    p = 1.0
    for j in range(m):
        v = cyc[(start + j) % m]
        opts = 0
        for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
            w = nbr_idx[k]
            if stamp[w] != tag and _avail(w, image, in_dom, sink):
                opts += 1
        if j >= 1:
            for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
                if nbr_idx[k] == x:
                    opts += 1
                    break
        if opts == 0:
            return 0.0
        p /= opts
        if j + 1 < m:
            stamp[cyc[(start + j + 1) % m]] = tag
    return p


@njit(cache=True)
def _toggle(image, pre, u, alpha, in_dom, sink, nbr_ptr, nbr_idx, buf, stamp, tag):
    """Delete the cycle through ``u`` or grow one from the fixed vertex ``u``.

    Returns ``(accepted, tag)``; ``tag`` is the running stamp counter.
    """
    if not in_dom[u] or u == sink:
        return False, tag
    if image[u] != u:
        m = 0
        v = u
        while True:
            if v == sink:
                return False, tag
            buf[m] = v
            m += 1
            v = image[v]
            if v == u:
                break
        for i in range(m):
            image[buf[i]] = buf[i]
        s = 0.0
        for i in range(m):
            tag += 1
            s += growth_prob(buf, m, i, image, in_dom, sink, nbr_ptr, nbr_idx, stamp, tag)
        ratio = math.exp(alpha * m) * s / m
        if ratio < 1.0 and np.random.random() >= ratio:
            for i in range(m):
                image[buf[i]] = buf[(i + 1) % m]
            return False, tag
        for i in range(m):
            pre[buf[i]] = buf[i]
        return True, tag
    tag += 1
    stamp[u] = tag
    buf[0] = u
    m = 1
    v = u
    while True:
        opts = 0
        for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
            w = nbr_idx[k]
            if stamp[w] != tag and _avail(w, image, in_dom, sink):
                opts += 1
        close = 0
        if m >= 2:
            for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
                if nbr_idx[k] == u:
                    close = 1
                    break
        tot = opts + close
        if tot == 0:
            return False, tag
        c = int(np.random.random() * tot)
        if c == opts:
            break
        cnt = 0
        nxt = -1
        for k in range(nbr_ptr[v], nbr_ptr[v + 1]):
            w = nbr_idx[k]
            if stamp[w] != tag and _avail(w, image, in_dom, sink):
                if cnt == c:
                    nxt = w
                    break
                cnt += 1
        stamp[nxt] = tag
        buf[m] = nxt
        m += 1
        v = nxt
    s = 0.0
    for i in range(m):
        tag += 1
        s += growth_prob(buf, m, i, image, in_dom, sink, nbr_ptr, nbr_idx, stamp, tag)
    ratio = math.exp(-alpha * m) * m / s
    if ratio < 1.0 and np.random.random() >= ratio:
        return False, tag
    for i in range(m):
        image[buf[i]] = buf[(i + 1) % m]
        pre[buf[(i + 1) % m]] = buf[i]
    return True, tag


@njit(cache=True)
def _end_move(image, pre, state, is_sink, in_dom, alpha, nbr_ptr, nbr_idx):
    a = state[0]
    z = state[1]
    deg = nbr_ptr[z + 1] - nbr_ptr[z]
    if deg == 0:
        return False
    w = nbr_idx[nbr_ptr[z] + int(np.random.random() * deg)]
    if not in_dom[w] or not is_sink[w] or w == a:
        return False
    degw = nbr_ptr[w + 1] - nbr_ptr[w]
    if image[w] == w:
        ratio = math.exp(-alpha) * deg / degw
        if ratio < 1.0 and np.random.random() >= ratio:
            return False
        image[z] = w
        pre[w] = z
        state[1] = w
        return True
    if image[w] == z:
        ratio = math.exp(alpha) * deg / degw
        if ratio < 1.0 and np.random.random() >= ratio:
            return False
        image[w] = w
        image[z] = z
        pre[z] = z
        state[1] = w
        return True
    return False


@njit(cache=True)
def run_steps(image, pre, state, pairs, nbr_ptr, nbr_idx, in_dom, is_sink, alpha,
              p_end, p_toggle, p_rev, nsteps, buf, stamp, tag):
    """``nsteps`` proposals in place. ``state = [source, sink]``; ``sink < 0`` for the closed model.

    Returns ``(accepted, tag)``.
    """
    n = image.shape[0]
    npairs = pairs.shape[0]
    acc = 0
    for _ in range(nsteps):
        z = state[1]
        t = np.random.random()
        if t < p_end:
            if _end_move(image, pre, state, is_sink, in_dom, alpha, nbr_ptr, nbr_idx):
                acc += 1
            continue
        t -= p_end
        if t < p_toggle:
            u = int(np.random.random() * n)
            ok, tag = _toggle(image, pre, u, alpha, in_dom, z, nbr_ptr, nbr_idx, buf, stamp, tag)
            if ok:
                acc += 1
            continue
        t -= p_toggle
        if t < p_rev:
            u = int(np.random.random() * n)
            if not in_dom[u] or image[u] == u or image[image[u]] == u:
                continue
            if _on_walk(image, u, z):
                continue
            _reverse_cycle(image, pre, u, buf)
            acc += 1
            continue
        if npairs == 0:
            continue
        k = int(np.random.random() * npairs)
        x = pairs[k, 0]
        y = pairs[k, 1]
        if x == z or y == z:
            continue
        px = image[x]
        py = image[y]
        if not _nn_ok(x, py, nbr_ptr, nbr_idx) or not _nn_ok(y, px, nbr_ptr, nbr_idx):
            continue
        dh = (py != x) + (px != y) - (px != x) - (py != y)
        if dh > 0 and np.random.random() >= math.exp(-alpha * dh):
            continue
        image[x] = py
        image[y] = px
        pre[py] = x
        pre[px] = y
        acc += 1
    return acc, tag


@njit(cache=True)
def state_code(image):
    n = image.shape[0]
    c = 0
    for x in range(n - 1, -1, -1):
        c = c * n + image[x]
    return c


@njit(cache=True)
def cycle_edges(image, z):
    k = 1
    y = image[z]
    while y != z:
        k += 1
        y = image[y]
    return 0 if k == 1 else k


@njit(cache=True)
def energy_of(image):
    h = 0
    for x in range(image.shape[0]):
        if image[x] != x:
            h += 1
    return h


@njit(cache=True)
def run_record(image, pre, state, pairs, nbr_ptr, nbr_idx, in_dom, is_sink, alpha,
               p_end, p_toggle, p_rev, steps_per_sample, buf, stamp, tag, zrec,
               want_code, want_images, out_code, out_energy, out_sink, out_zlen, out_images):
    """Record ``len(out_energy)`` samples, ``steps_per_sample`` proposals apart."""
    acc = 0
    for i in range(out_energy.shape[0]):
        a, tag = run_steps(image, pre, state, pairs, nbr_ptr, nbr_idx, in_dom, is_sink, alpha,
                           p_end, p_toggle, p_rev, steps_per_sample, buf, stamp, tag)
        acc += a
        out_energy[i] = energy_of(image)
        out_sink[i] = state[1]
        if want_code:
            out_code[i] = state_code(image)
        if zrec >= 0:
            out_zlen[i] = cycle_edges(image, zrec)
        if want_images:
            out_images[i, :] = image
    return acc, tag


def csr(adj):
    """Neighbour lists as CSR arrays ``(ptr, idx)``."""
    ptr = np.zeros(len(adj) + 1, dtype=np.int64)
    for i, nb in enumerate(adj):
        ptr[i + 1] = ptr[i] + len(nb)
    idx = np.fromiter((y for nb in adj for y in nb), dtype=np.int64, count=int(ptr[-1]))
    return ptr, idx
