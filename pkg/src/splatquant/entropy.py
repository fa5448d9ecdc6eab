"""Lossless entropy codec for integer latent tables.

Each latent column gets its own static frequency table (quantized so the
total fits the coder's 16-bit probability resolution) and is compressed with
a byte-oriented range coder. A raw int16 fallback guarantees the stream never
exceeds the uncompressed 16-bit size by more than the fixed header. The whole
block is guarded by a trailing CRC32.

Block layout, all integers little-endian:

    u32  count N
    u16  latent dim l
    u8   mode                 0 = range coded, 1 = raw int16
    mode 0, repeated l times (one record per latent column):
        i32  vmin             alphabet is the contiguous range vmin..vmin+nsym-1
        u32  nsym
        u16  freq[nsym]       quantized counts, sum <= 65536
        u32  payload length in bytes
        u8   payload[...]     range-coded column, N symbols
    mode 1:
        i16  values[N*l]      row-major
    u32  crc32 of all preceding bytes
"""

from __future__ import annotations

import struct
import zlib
from bisect import bisect_right

import numpy as np

from .errors import ChecksumError, InvalidInputError, TruncatedFileError

_PRECISION = 32
_TOP = 1 << (_PRECISION - 8)
_BOTTOM = 1 << (_PRECISION - 16)
_MASK = (1 << _PRECISION) - 1
_FREQ_CAP = 1 << 16

MODE_CODED = 0
MODE_RAW = 1


def _quantize_counts(counts: np.ndarray) -> np.ndarray:
    """Scale raw symbol counts so they sum to at most the coder cap.

    Every present symbol keeps a frequency of at least 1.
    """
    counts = counts.astype(np.int64)
    total = int(counts.sum())
    if total <= _FREQ_CAP:
        return counts
    present = counts > 0
    scaled = np.floor(counts * (_FREQ_CAP / total)).astype(np.int64)
    scaled[present] = np.maximum(scaled[present], 1)
    excess = int(scaled.sum()) - _FREQ_CAP
    while excess > 0:
        # shave the largest bins; each pass removes at least one unit per bin
        order = np.argsort(scaled)[::-1]
        for i in order:
            if excess == 0:
                break
            take = min(excess, int(scaled[i]) - 1)
            scaled[i] -= take
            excess -= take
    return scaled


def _encode_column(values: np.ndarray, cum: list[int], total: int, out: bytearray) -> None:
    low = 0
    rng = _MASK
    append = out.append
    for v in values:
        c = cum[v]
        f = cum[v + 1] - c
        rng //= total
        low += c * rng
        rng *= f
        while (low ^ (low + rng)) < _TOP or rng < _BOTTOM:
            if (low ^ (low + rng)) >= _TOP:
                rng = (_MASK + 1 - low) & (_BOTTOM - 1)
            append((low >> (_PRECISION - 8)) & 0xFF)
            low = (low << 8) & _MASK
            rng = (rng << 8) & _MASK
    for _ in range(_PRECISION // 8):
        append((low >> (_PRECISION - 8)) & 0xFF)
        low = (low << 8) & _MASK


def _decode_column(payload: bytes, n: int, cum: list[int], total: int) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    low = 0
    rng = _MASK
    state = 0
    pos = 0
    plen = len(payload)
    for i in range(_PRECISION // 8):
        if pos >= plen:
            raise TruncatedFileError("entropy payload ended inside coder state")
        state = ((state << 8) | payload[pos]) & _MASK
        pos += 1
    for i in range(n):
        r = rng // total
        v = min((state - low) // r, total - 1)
        s = bisect_right(cum, v) - 1
        out[i] = s
        c = cum[s]
        low += c * r
        rng = r * (cum[s + 1] - c)
        while (low ^ (low + rng)) < _TOP or rng < _BOTTOM:
            if (low ^ (low + rng)) >= _TOP:
                rng = (_MASK + 1 - low) & (_BOTTOM - 1)
            if pos >= plen:
                raise TruncatedFileError("entropy payload ended mid-symbol")
            state = ((state << 8) | payload[pos]) & _MASK
            pos += 1
            low = (low << 8) & _MASK
            rng = (rng << 8) & _MASK
    return out


def _encode_coded(latents: np.ndarray) -> bytes:
    n, l = latents.shape
    body = bytearray()
    for d in range(l):
        col = latents[:, d]
        vmin = int(col.min()) if n else 0
        vmax = int(col.max()) if n else 0
        nsym = vmax - vmin + 1
        shifted = (col - vmin).astype(np.int64)
        counts = np.bincount(shifted, minlength=nsym)
        freqs = _quantize_counts(counts)
        total = int(freqs.sum())
        cum = [0] * (nsym + 1)
        acc = 0
        for s in range(nsym):
            acc += int(freqs[s])
            cum[s + 1] = acc
        payload = bytearray()
        _encode_column(shifted, cum, total, payload)
        body += struct.pack("<iI", vmin, nsym)
        body += freqs.astype("<u2").tobytes()
        body += struct.pack("<I", len(payload))
        body += payload
    return bytes(body)


def entropy_encode(latents: np.ndarray) -> bytes:
    """Compress an (N, l) integer table losslessly. Values must fit int16."""
    latents = np.asarray(latents)
    if latents.ndim != 2:
        raise InvalidInputError(f"expected a 2D latent table, got shape {latents.shape}")
    if not np.issubdtype(latents.dtype, np.integer):
        if not np.all(latents == np.round(latents)):
            raise InvalidInputError("latent table contains non-integer values")
        latents = latents.astype(np.int64)
    if latents.size and (latents.min() < -(2 ** 15) or latents.max() > 2 ** 15 - 1):
        raise InvalidInputError("latent values outside the signed 16-bit range")
    n, l = latents.shape
    latents = latents.astype(np.int64)

    coded = _encode_coded(latents) if n else b""
    raw = latents.astype("<i2").tobytes()
    if n and len(coded) < len(raw):
        mode, body = MODE_CODED, coded
    else:
        mode, body = MODE_RAW, raw
    head = struct.pack("<IHB", n, l, mode)
    block = head + body
    return block + struct.pack("<I", zlib.crc32(block))


def entropy_decode(stream: bytes, count: int, latent_dim: int) -> np.ndarray:
    """Invert :func:`entropy_encode`; returns an (N, l) int32 array."""
    if len(stream) < 11:
        raise TruncatedFileError("entropy block shorter than its fixed header")
    body, (crc,) = stream[:-4], struct.unpack("<I", stream[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("latent stream")
    n, l, mode = struct.unpack("<IHB", body[:7])
    if n != count or l != latent_dim:
        raise InvalidInputError(
            f"stream declares shape ({n}, {l}), caller expected ({count}, {latent_dim})"
        )
    pos = 7
    if mode == MODE_RAW:
        need = 2 * n * l
        if len(body) - pos != need:
            raise TruncatedFileError("raw latent payload has the wrong length")
        return np.frombuffer(body, dtype="<i2", count=n * l, offset=pos).reshape(n, l).astype(np.int32)
    if mode != MODE_CODED:
        raise InvalidInputError(f"unknown latent stream mode {mode}")
    out = np.empty((n, l), dtype=np.int32)
    for d in range(l):
        if len(body) < pos + 8:
            raise TruncatedFileError("entropy block ended inside a column header")
        vmin, nsym = struct.unpack_from("<iI", body, pos)
        pos += 8
        if len(body) < pos + 2 * nsym + 4:
            raise TruncatedFileError("entropy block ended inside a frequency table")
        freqs = np.frombuffer(body, dtype="<u2", count=nsym, offset=pos).astype(np.int64)
        pos += 2 * nsym
        (plen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        if len(body) < pos + plen:
            raise TruncatedFileError("entropy block ended inside a payload")
        payload = body[pos:pos + plen]
        pos += plen
        total = int(freqs.sum())
        cum = [0] * (nsym + 1)
        acc = 0
        for s in range(nsym):
            acc += int(freqs[s])
            cum[s + 1] = acc
        out[:, d] = _decode_column(payload, n, cum, total) + vmin
    return out


def empirical_entropy_bits(latents: np.ndarray) -> float:
    """Empirical entropy of the table in bits per symbol (columns pooled per dim)."""
    latents = np.asarray(latents)
    if latents.size == 0:
        return 0.0
    total_bits = 0.0
    for d in range(latents.shape[1]):
        col = latents[:, d]
        _, counts = np.unique(col, return_counts=True)
        p = counts / counts.sum()
        total_bits += -(p * np.log2(p)).sum() * col.size
    return total_bits / latents.size
