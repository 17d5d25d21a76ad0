"""Minimal RIFF/WAVE reader and writer.

Handles PCM 16-bit and IEEE float 32-bit, any channel count.  Unknown
chunks are skipped (with the odd-size pad byte); decode problems raise
WavError carrying the byte offset where parsing failed.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import WavError


def read_wav(path) -> tuple[np.ndarray, int]:
    """Returns (samples, sample_rate); samples are float64 in [-1, 1],
    shape (n,) for mono and (n, channels) otherwise."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise WavError("file too short for a RIFF header", 0)
    if data[0:4] != b"RIFF":
        raise WavError("missing RIFF tag", 0)
    if data[8:12] != b"WAVE":
        raise WavError("missing WAVE tag", 8)

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = pos + 8
        if body + size > len(data):
            raise WavError(f"chunk {cid!r} overruns the file", pos)
        if cid == b"fmt ":
            if size < 16:
                raise WavError("fmt chunk shorter than 16 bytes", pos)
            code, n_ch, sr, _, _, bits = struct.unpack_from("<HHIIHH", data, body)
            if n_ch == 0:
                raise WavError("fmt chunk declares zero channels", body)
            fmt = (code, n_ch, sr, bits, body)
        elif cid == b"data":
            payload = (body, size)
        pos = body + size + (size & 1)

    if fmt is None:
        raise WavError("no fmt chunk found", len(data))
    if payload is None:
        raise WavError("no data chunk found", len(data))
    code, n_ch, sr, bits, fmt_off = fmt
    if code == 1 and bits == 16:
        kind = np.dtype("<i2")
    elif code == 3 and bits == 32:
        kind = np.dtype("<f4")
    else:
        raise WavError(f"unsupported format code {code} with {bits}-bit samples", fmt_off)

    body, size = payload
    frame = n_ch * (bits // 8)
    if size % frame:
        raise WavError(f"data chunk size {size} is not a whole number of frames", body)
    raw = np.frombuffer(data, kind, count=size // (bits // 8), offset=body)
    samples = raw.astype(np.float64)
    if code == 1:
        samples /= 32768.0
    if n_ch > 1:
        samples = samples.reshape(-1, n_ch)
    return samples, sr


def write_wav(path, samples: np.ndarray, sample_rate: int, fmt: str = "pcm16"):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        interleaved = samples
        n_ch = 1
    elif samples.ndim == 2:
        n_ch = samples.shape[1]
        interleaved = samples.reshape(-1)
    else:
        raise ValueError(f"samples must be 1-D or 2-D, got shape {samples.shape}")

    if fmt == "pcm16":
        code, bits = 1, 16
        ints = np.clip(np.round(interleaved * 32768.0), -32768, 32767)
        body = ints.astype("<i2").tobytes()
    elif fmt == "float32":
        code, bits = 3, 32
        body = interleaved.astype("<f4").tobytes()
    else:
        raise ValueError(f"fmt must be pcm16 or float32, not {fmt!r}")

    block = n_ch * bits // 8
    header = struct.pack("<4sI4s", b"RIFF", 36 + len(body), b"WAVE")
    header += struct.pack("<4sIHHIIHH", b"fmt ", 16, code, n_ch, sample_rate,
                          sample_rate * block, block, bits)
    header += struct.pack("<4sI", b"data", len(body))
    Path(path).write_bytes(header + body)
