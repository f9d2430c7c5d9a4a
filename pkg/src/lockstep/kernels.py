"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the env flag
LOCKSTEP_NO_NUMBA is unset; otherwise the numpy fallback is selected at
import time.  `ACTIVE` names the selected path.

Both paths produce identical bits.  PRNG fills and Smith-Waterman
scoring are integer arithmetic; the stencil sweep and the matmul
row-block keep the same floating-point reduction order in both
implementations, so a run digested on one path matches the other bit
for bit.

The `*_py` variants stay importable for benchmarking against the
selected path.
"""

import os

import numpy as np

from .encoding import FNV64_OFFSET, FNV64_PRIME, fnv1a64
from .prng import XORSHIFT_MULT

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("LOCKSTEP_NO_NUMBA", "") not in (
    "1",
    "true",
    "yes",
)
ACTIVE = "numba" if USE_NUMBA else "numpy"

_MASK = 0xFFFFFFFFFFFFFFFF

# Smith-Waterman scoring is fixed by the interface contract
SW_MATCH = 1
SW_MISMATCH = -1
SW_GAP = -2


# ---------------------------------------------------------------------------
# PRNG batch fills


def fill_uniform_py(state, out):
    """Fill a flat f64 array with uniform [0,1); returns the new state."""
    x = state & _MASK
    inv = 1.0 / 9007199254740992.0
    for i in range(out.size):
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        out[i] = ((x * XORSHIFT_MULT & _MASK) >> 11) * inv
    return x


def fill_letters_py(state, out, k):
    """Fill a flat i64 array with values in [0, k); returns the new state."""
    x = state & _MASK
    for i in range(out.size):
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        out[i] = ((x * XORSHIFT_MULT & _MASK) >> 11) % k
    return x


def _fill_uniform_nb(state, out):
    x = np.uint64(state)
    mult = np.uint64(XORSHIFT_MULT)
    inv = 1.0 / 9007199254740992.0
    for i in range(out.size):
        x ^= x >> np.uint64(12)
        x ^= x << np.uint64(25)
        x ^= x >> np.uint64(27)
        out[i] = np.float64((x * mult) >> np.uint64(11)) * inv
    return x


def _fill_letters_nb(state, out, k):
    x = np.uint64(state)
    mult = np.uint64(XORSHIFT_MULT)
    kk = np.uint64(k)
    for i in range(out.size):
        x ^= x >> np.uint64(12)
        x ^= x << np.uint64(25)
        x ^= x >> np.uint64(27)
        out[i] = np.int64(((x * mult) >> np.uint64(11)) % kk)
    return x


# ---------------------------------------------------------------------------
# Matmul row-block: c[r, j0:j1] = a[r, :] @ b[:, j0:j1]


def matmul_row_block_py(a, b, r, j0, j1, c):
    # accumulate over k in sequence: `@` delegates to BLAS, whose pairwise
    # summation differs from the compiled loop in the last bit
    if j1 > j0:
        acc = np.zeros(j1 - j0)
        for k in range(a.shape[1]):
            acc += a[r, k] * b[k, j0:j1]
        c[r, j0:j1] = acc


def _matmul_row_block_nb(a, b, r, j0, j1, c):
    n = a.shape[1]
    for j in range(j0, j1):
        s = 0.0
        for k in range(n):
            s += a[r, k] * b[k, j]
        c[r, j] = s


# ---------------------------------------------------------------------------
# Stencil sweep row: out[i, 1:-1] = 0.25*(up + down + left + right)
# Returns the row's max abs change.  Both paths add in the same order.


def jacobi_sweep_row_py(g, out, i):
    row = 0.25 * (g[i - 1, 1:-1] + g[i + 1, 1:-1] + g[i, :-2] + g[i, 2:])
    out[i, 1:-1] = row
    d = np.abs(row - g[i, 1:-1])
    return float(np.max(d)) if d.size else 0.0


def _jacobi_sweep_row_nb(g, out, i):
    m = g.shape[1]
    resid = 0.0
    for j in range(1, m - 1):
        v = 0.25 * (g[i - 1, j] + g[i + 1, j] + g[i, j - 1] + g[i, j + 1])
        out[i, j] = v
        d = abs(v - g[i, j])
        if d > resid:
            resid = d
    return resid


# ---------------------------------------------------------------------------
# Smith-Waterman block (linear gap).  Integer scores, so both paths are
# bit-identical; the numpy path keeps the same loops (wavefront dependency
# does not vectorize cleanly).
#
# Layout: t_seg indexes block rows (target), q_band block cols (query band).
#   top[0]    = H[r0-1][c0-1]          top[1+j] = H[r0-1][c0+j]
#   left[i]   = H[r0+i][c0-1]
#   bottom/right get the same layout for the next block / right neighbor.
# Returns (best, bi, bj) with global indices; earliest (i, j) wins ties.


def sw_block_py(t_seg, q_band, top, left, bottom, right, r0, c0):
    nr = t_seg.shape[0]
    nc = q_band.shape[0]
    h = np.empty((nr + 1, nc + 1), dtype=np.int64)
    h[0, :] = top
    for i in range(nr):
        h[i + 1, 0] = left[i]
    best = np.int64(0)
    bi = np.int64(-1)
    bj = np.int64(-1)
    for i in range(1, nr + 1):
        ti = t_seg[i - 1]
        for j in range(1, nc + 1):
            sub = SW_MATCH if ti == q_band[j - 1] else SW_MISMATCH
            v = h[i - 1, j - 1] + sub
            up = h[i - 1, j] + SW_GAP
            lf = h[i, j - 1] + SW_GAP
            if up > v:
                v = up
            if lf > v:
                v = lf
            if v < 0:
                v = 0
            h[i, j] = v
            if v > best:
                best = v
                bi = r0 + i - 1
                bj = c0 + j - 1
    right[0] = top[nc]
    for i in range(nr):
        right[i + 1] = h[i + 1, nc]
    bottom[0] = left[nr - 1] if nr else top[0]
    for j in range(nc):
        bottom[j + 1] = h[nr, j + 1]
    return best, bi, bj


_sw_block_nb_src = sw_block_py


# ---------------------------------------------------------------------------
# Digest acceleration: same FNV-1a as encoding.fnv1a64, over a u8 view.


def _fnv1a64_nb(arr, h):
    prime = np.uint64(FNV64_PRIME)
    x = np.uint64(h)
    for i in range(arr.size):
        x = (x ^ np.uint64(arr[i])) * prime
    return x


if USE_NUMBA:
    _fnv1a64_u8 = njit(cache=True)(_fnv1a64_nb)

    def fast_digest(data: bytes, h: int = FNV64_OFFSET) -> int:
        return int(_fnv1a64_u8(np.frombuffer(data, dtype=np.uint8), np.uint64(h)))

else:

    def fast_digest(data: bytes, h: int = FNV64_OFFSET) -> int:
        return fnv1a64(data, h)


if USE_NUMBA:
    fill_uniform = njit(cache=True)(_fill_uniform_nb)
    fill_letters = njit(cache=True)(_fill_letters_nb)
    matmul_row_block = njit(cache=True)(_matmul_row_block_nb)
    jacobi_sweep_row = njit(cache=True)(_jacobi_sweep_row_nb)
    sw_block = njit(cache=True)(_sw_block_nb_src)
else:
    fill_uniform = fill_uniform_py
    fill_letters = fill_letters_py
    matmul_row_block = matmul_row_block_py
    jacobi_sweep_row = jacobi_sweep_row_py
    sw_block = sw_block_py


def fill_uniform_state(state: int, out: np.ndarray) -> int:
    """Fill any-shape f64 array in C order; returns the new PRNG state."""
    flat = out.reshape(-1)
    return int(fill_uniform(np.uint64(state) if USE_NUMBA else state, flat))


def fill_letters_state(state: int, out: np.ndarray, k: int) -> int:
    flat = out.reshape(-1)
    return int(fill_letters(np.uint64(state) if USE_NUMBA else state, flat, k))
