"""Hot numeric loops: unit hashing, n-gram hashing, MinHash signatures.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version.  Both return bit-identical results.  Which one the public names
bind to is decided once, at import time:

* ``CORPUSKIT_DISABLE_NUMBA=1`` forces the numpy path;
* a failed ``import numba`` falls back to numpy silently.

All hashing is done in uint64 with wrap-around arithmetic.
"""
import os

import numpy as np

MASK64 = (1 << 64) - 1
SENTINEL = np.uint64(MASK64)

# byte polynomial / unit polynomial multipliers (odd, so invertible mod 2**64)
BYTE_MULT = 0x100000001B3
UNIT_MULT = 0x9E3779B97F4A7C15
_BYTE_MULT_INV = pow(BYTE_MULT, -1, 1 << 64)

_FMIX_C1 = 0xFF51AFD7ED558CCD
_FMIX_C2 = 0xC4CEB9FE1A85EC53


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    if _env_flag("CORPUSKIT_DISABLE_NUMBA"):
        raise ImportError("numba disabled by CORPUSKIT_DISABLE_NUMBA")
    import numba
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations

def _fmix64_np(x):
    x = x ^ (x >> np.uint64(33))
    x = x * np.uint64(_FMIX_C1)
    x = x ^ (x >> np.uint64(33))
    x = x * np.uint64(_FMIX_C2)
    x = x ^ (x >> np.uint64(33))
    return x


def _unit_hashes_np(buf, starts, ends):
    n = len(starts)
    if n == 0:
        return np.zeros(0, dtype=np.uint64)
    vals = buf.astype(np.uint64) + np.uint64(1)
    size = len(buf)
    with np.errstate(over="ignore"):
        inv_pow = np.empty(size + 1, dtype=np.uint64)
        inv_pow[0] = 1
        if size:
            inv_pow[1:] = np.cumprod(np.full(size, _BYTE_MULT_INV, dtype=np.uint64))
        fwd_pow = np.empty(size + 1, dtype=np.uint64)
        fwd_pow[0] = 1
        if size:
            fwd_pow[1:] = np.cumprod(np.full(size, BYTE_MULT, dtype=np.uint64))
        prefix = np.zeros(size + 1, dtype=np.uint64)
        if size:
            prefix[1:] = np.cumsum(vals * inv_pow[:size])
        # sum_{k=s}^{e-1} v_k * M^(e-1-k) == M^(e-1) * (P[e] - P[s])
        raw = fwd_pow[ends - 1] * (prefix[ends] - prefix[starts])
    return _fmix64_np(raw)


def _ngram_hashes_np(units, offsets, n):
    ndocs = len(offsets) - 1
    counts = np.diff(offsets)
    out_counts = np.where(counts == 0, 0, np.maximum(counts - n + 1, 1))
    out_offsets = np.zeros(ndocs + 1, dtype=np.int64)
    np.cumsum(out_counts, out=out_offsets[1:])
    out = np.zeros(out_offsets[-1], dtype=np.uint64)
    mult = np.uint64(UNIT_MULT)
    with np.errstate(over="ignore"):
        full = counts >= n
        # docs with a full window: gather each window by offset arithmetic
        if full.any():
            full_counts = out_counts[full]
            doc_idx = np.repeat(np.flatnonzero(full), full_counts)
            starts = np.cumsum(full_counts) - full_counts
            local = np.arange(len(doc_idx)) - np.repeat(starts, full_counts)
            first = offsets[:-1][doc_idx] + local
            acc = np.zeros(len(doc_idx), dtype=np.uint64)
            for j in range(n):
                acc = acc * mult + units[first + j]
            out[out_offsets[:-1][doc_idx] + local] = _fmix64_np(acc ^ np.uint64(n))
        # short docs collapse to a single whole-text gram
        for d in np.flatnonzero((counts > 0) & (counts < n)):
            acc = np.uint64(0)
            for k in range(offsets[d], offsets[d + 1]):
                acc = acc * mult + units[k]
            out[out_offsets[d]] = _fmix64_np(acc ^ np.uint64(counts[d]))
    return out, out_offsets


def _minhash_np(hashes, offsets, a, b, chunk=1 << 13):
    ndocs = len(offsets) - 1
    num_perm = len(a)
    sig = np.full((ndocs, num_perm), SENTINEL, dtype=np.uint64)
    a = a[None, :]
    b = b[None, :]
    d = 0
    with np.errstate(over="ignore"):
        while d < ndocs:
            # batch whole documents until the chunk row budget is reached
            e = d + 1
            while e < ndocs and offsets[e + 1] - offsets[d] <= chunk:
                e += 1
            lo, hi = offsets[d], offsets[e]
            if hi - lo <= chunk or e - d > 1:
                seg = offsets[d:e] - lo
                nonempty = np.flatnonzero(np.diff(offsets[d:e + 1]) > 0)
                if len(nonempty):
                    vals = _fmix64_np(hashes[lo:hi, None] * a + b)
                    sig[d + nonempty] = np.minimum.reduceat(vals, seg[nonempty], axis=0)
            else:
                row = sig[d]
                for s in range(lo, hi, chunk):
                    vals = _fmix64_np(hashes[s:min(hi, s + chunk), None] * a + b)
                    np.minimum(row, vals.min(axis=0), out=row)
            d = e
    return sig


def _dup_fraction_np(values, n):
    total = len(values) - n + 1
    if total <= 0:
        return 0.0
    offsets = np.array([0, len(values)], dtype=np.int64)
    grams, _ = _ngram_hashes_np(_fmix64_np(values.astype(np.uint64)), offsets, n)
    return (total - len(np.unique(grams))) / total


def _uniform_np(seed, ids, stream):
    with np.errstate(over="ignore"):
        key = _fmix64_np(np.uint64(stream & MASK64) + np.uint64(UNIT_MULT))
        key = _fmix64_np(np.uint64(seed & MASK64) ^ key)
        h = _fmix64_np(np.asarray(ids).astype(np.uint64) * np.uint64(UNIT_MULT) ^ key)
        h = _fmix64_np(h + key)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


# ---------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _fmix64_nb(x):
        x ^= x >> np.uint64(33)
        x *= np.uint64(_FMIX_C1)
        x ^= x >> np.uint64(33)
        x *= np.uint64(_FMIX_C2)
        x ^= x >> np.uint64(33)
        return x

    @njit(cache=True)
    def _unit_hashes_nb(buf, starts, ends):
        n = len(starts)
        out = np.empty(n, dtype=np.uint64)
        mult = np.uint64(BYTE_MULT)
        for i in range(n):
            h = np.uint64(0)
            for k in range(starts[i], ends[i]):
                h = h * mult + np.uint64(buf[k]) + np.uint64(1)
            out[i] = _fmix64_nb(h)
        return out

    @njit(cache=True)
    def _ngram_hashes_nb(units, offsets, n):
        ndocs = len(offsets) - 1
        out_offsets = np.zeros(ndocs + 1, dtype=np.int64)
        for d in range(ndocs):
            c = offsets[d + 1] - offsets[d]
            if c == 0:
                k = 0
            elif c < n:
                k = 1
            else:
                k = c - n + 1
            out_offsets[d + 1] = out_offsets[d] + k
        out = np.empty(out_offsets[ndocs], dtype=np.uint64)
        mult = np.uint64(UNIT_MULT)
        for d in range(ndocs):
            lo = offsets[d]
            c = offsets[d + 1] - lo
            if c == 0:
                continue
            w = n if c >= n else c
            ww = np.uint64(w)
            pos = out_offsets[d]
            for i in range(out_offsets[d + 1] - pos):
                acc = np.uint64(0)
                for j in range(w):
                    acc = acc * mult + units[lo + i + j]
                out[pos + i] = _fmix64_nb(acc ^ ww)
        return out, out_offsets

    @njit(cache=True)
    def _minhash_nb(hashes, offsets, a, b):
        ndocs = len(offsets) - 1
        num_perm = len(a)
        sig = np.empty((ndocs, num_perm), dtype=np.uint64)
        for d in range(ndocs):
            for p in range(num_perm):
                sig[d, p] = SENTINEL
            for k in range(offsets[d], offsets[d + 1]):
                x = hashes[k]
                for p in range(num_perm):
                    v = _fmix64_nb(x * a[p] + b[p])
                    if v < sig[d, p]:
                        sig[d, p] = v
        return sig

    @njit(cache=True)
    def _dup_fraction_nb(values, n):
        total = len(values) - n + 1
        if total <= 0:
            return 0.0
        units = np.empty(len(values), dtype=np.uint64)
        for i in range(len(values)):
            units[i] = _fmix64_nb(np.uint64(values[i]))
        offsets = np.zeros(2, dtype=np.int64)
        offsets[1] = len(values)
        grams, _ = _ngram_hashes_nb(units, offsets, n)
        grams.sort()
        dup = 0
        for i in range(1, len(grams)):
            if grams[i] == grams[i - 1]:
                dup += 1
        return dup / total


# ---------------------------------------------------------------------------
# public bindings

def _pick(nb_name, np_impl):
    return globals()[nb_name] if HAVE_NUMBA else np_impl


fmix64 = _fmix64_np
unit_hashes = _pick("_unit_hashes_nb", _unit_hashes_np)
ngram_hashes = _pick("_ngram_hashes_nb", _ngram_hashes_np)
minhash_signatures = _pick("_minhash_nb", _minhash_np)
dup_fraction = _pick("_dup_fraction_nb", _dup_fraction_np)
uniform = _uniform_np

IMPLEMENTATIONS = {
    "numpy": {
        "unit_hashes": _unit_hashes_np,
        "ngram_hashes": _ngram_hashes_np,
        "minhash_signatures": _minhash_np,
        "dup_fraction": _dup_fraction_np,
    },
}
if HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "unit_hashes": _unit_hashes_nb,
        "ngram_hashes": _ngram_hashes_nb,
        "minhash_signatures": _minhash_nb,
        "dup_fraction": _dup_fraction_nb,
    }


def units_to_buffer(units):
    """Pack string units into one UTF-8 buffer plus [start, end) byte bounds.

    Units must not contain an ASCII space.
    """
    if not units:
        empty = np.zeros(0, dtype=np.int64)
        return np.zeros(0, dtype=np.uint8), empty, empty
    raw = " ".join(units).encode("utf-8")
    buf = np.frombuffer(raw, dtype=np.uint8)
    spaces = np.flatnonzero(buf == 32)
    starts = np.empty(len(units), dtype=np.int64)
    ends = np.empty(len(units), dtype=np.int64)
    starts[0] = 0
    starts[1:] = spaces + 1
    ends[:-1] = spaces
    ends[-1] = len(buf)
    return buf, starts, ends


def codepoints(text):
    return np.frombuffer(text.encode("utf-32-le", "surrogatepass"), dtype=np.uint32)
