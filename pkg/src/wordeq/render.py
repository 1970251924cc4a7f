"""Apply a 40-band EQ curve to audio with a linear-phase FIR filter.

WAV handling covers RIFF/WAVE little-endian files holding 16-bit PCM or 32-bit
IEEE float samples in one or two channels; unknown chunks are skipped.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .dataset import EqCurve
from .errors import CorruptionError, FormatError
from .io_utils import atomic_write_bytes

logger = logging.getLogger(__name__)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

DEFAULT_TAPS = 2047
MIN_SAMPLE_RATE = 8000

# anchor correction: Tikhonov weight relative to the mean Gram diagonal, and passes
CORRECTION_RIDGE = 1e-2
CORRECTION_PASSES = 4


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray  # (channels, frames)
    sample_rate: int

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[0] not in (1, 2):
            raise ValueError("audio must have one or two channels")
        if self.sample_rate < MIN_SAMPLE_RATE:
            raise ValueError(f"sample rate {self.sample_rate} below {MIN_SAMPLE_RATE} Hz")
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def frames(self) -> int:
        return self.samples.shape[1]


def read_wav(path) -> AudioBuffer:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        size = struct.unpack_from("<I", blob, pos + 4)[0]
        body = blob[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise CorruptionError(f"{path}: chunk {cid!r} truncated ({len(body)} of {size} bytes)")
        if cid == b"fmt ":
            if size < 16:
                raise CorruptionError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
            tag = fmt[0]
            if tag == WAVE_FORMAT_EXTENSIBLE:
                if size < 40:
                    raise CorruptionError(f"{path}: extensible fmt chunk too short")
                tag = struct.unpack_from("<H", body, 24)[0]
                fmt = (tag,) + fmt[1:]
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise CorruptionError(f"{path}: missing {'fmt' if fmt is None else 'data'} chunk")

    tag, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise FormatError(f"{path}: {channels} channels not supported")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = "<i2", 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise FormatError(f"{path}: unsupported encoding (format tag {tag:#06x}, {bits} bits)")
    frame_bytes = channels * np.dtype(dtype).itemsize
    if len(data) % frame_bytes:
        raise CorruptionError(f"{path}: data chunk is not a whole number of frames")
    frames = np.frombuffer(data, dtype=dtype).reshape(-1, channels).T
    return AudioBuffer(frames.astype(np.float64) * scale, rate)


def _pcm16(samples: np.ndarray) -> np.ndarray:
    scaled = np.clip(samples, -1.0, 1.0) * 32768.0
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, -32768, 32767).astype("<i2")


def wav_bytes(buffer: AudioBuffer, fmt: str = "float32") -> bytes:
    if fmt == "pcm16":
        payload = _pcm16(buffer.samples.T).tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    elif fmt == "float32":
        payload = buffer.samples.T.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    block = buffer.channels * bits // 8
    fmt_chunk = struct.pack("<HHIIHH", tag, buffer.channels, buffer.sample_rate,
                            buffer.sample_rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def write_wav(buffer: AudioBuffer, path, fmt: str = "float32") -> None:
    """Write ``buffer`` as ``pcm16`` (clamped, rounded half away from zero) or ``float32``."""
    atomic_write_bytes(path, wav_bytes(buffer, fmt))


def target_response_db(curve: EqCurve, freqs_hz: np.ndarray, sample_rate: float | None = None) -> np.ndarray:
    """Piecewise-linear interpolation of the curve over log frequency.

    0 dB outside the anchor range. Anchors at or above Nyquist are ignored.
    """
    centers = curve.band_centers_hz
    gains = curve.gains_db
    if sample_rate is not None:
        keep = centers < sample_rate / 2
        centers, gains = centers[keep], gains[keep]
    freqs = np.asarray(freqs_hz, dtype=np.float64)
    out = np.zeros_like(freqs)
    if centers.size == 0:
        return out
    inside = (freqs >= centers[0]) & (freqs <= centers[-1])
    out[inside] = np.interp(np.log10(freqs[inside]), np.log10(centers), gains)
    return out


def design_fir(curve: EqCurve, sample_rate: int, num_taps: int = DEFAULT_TAPS,
               correct_anchors: bool = True) -> np.ndarray:
    """Linear-phase FIR whose magnitude follows ``curve``.

    Frequency sampling on a dense grid followed by a Hann taper. The anchor
    correction then adds a small ridge-regularised combination of tapered
    cosines so that the realised gain at each in-band center matches the curve
    as closely as the filter length allows.
    """
    if num_taps % 2 == 0 or num_taps < 3:
        raise ValueError("num_taps must be an odd integer >= 3")
    centers = curve.band_centers_hz
    in_band = centers < sample_rate / 2
    if not np.all(in_band):
        logger.warning("dropping %d band center(s) at or above Nyquist (%g Hz)",
                       int(np.sum(~in_band)), sample_rate / 2)

    mid = (num_taps - 1) // 2
    nfft = 1 << int(np.ceil(np.log2(max(8 * num_taps, 1 << 16))))
    freqs = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    amp = 10.0 ** (target_response_db(curve, freqs, sample_rate) / 20.0)
    h = np.roll(np.fft.irfft(amp, nfft), mid)[:num_taps]
    window = np.hanning(num_taps + 2)[1:-1]
    h = h * window

    if correct_anchors and np.any(in_band):
        f_anchor = centers[in_band]
        want = 10.0 ** (curve.gains_db[in_band] / 20.0)
        n = np.arange(num_taps) - mid
        basis = np.cos(2.0 * np.pi * np.outer(f_anchor, n) / sample_rate)
        gram = (basis * window) @ basis.T
        ridge = CORRECTION_RIDGE * np.trace(gram) / len(f_anchor)
        system = gram + ridge * np.eye(len(f_anchor))
        for _ in range(CORRECTION_PASSES):
            residual = want - basis @ h
            h = h + window * (basis.T @ np.linalg.solve(system, residual))

    return 0.5 * (h + h[::-1])


def magnitude_response_db(taps: np.ndarray, freqs_hz, sample_rate: float) -> np.ndarray:
    """|H(f)| in dB evaluated directly from the taps."""
    n = np.arange(len(taps))
    phase = np.exp(-2j * np.pi * np.outer(np.asarray(freqs_hz, float), n) / sample_rate)
    return 20.0 * np.log10(np.abs(phase @ taps))


def apply_eq(buffer: AudioBuffer, curve: EqCurve, num_taps: int = DEFAULT_TAPS) -> AudioBuffer:
    """Filter every channel; the group delay is trimmed so lengths match."""
    taps = design_fir(curve, buffer.sample_rate, num_taps)
    mid = (num_taps - 1) // 2
    out = np.empty_like(buffer.samples)
    for ch in range(buffer.channels):
        full = fftconvolve(buffer.samples[ch], taps, mode="full")
        out[ch] = full[mid:mid + buffer.frames]
    peak = float(np.max(np.abs(out))) if out.size else 0.0
    if peak > 1.0:
        logger.warning("EQ output peaks at %.3f (%.2f dBFS); pcm16 export will clip",
                       peak, 20 * np.log10(peak))
    return AudioBuffer(out, buffer.sample_rate)


def clip_report(buffer: AudioBuffer) -> dict:
    peak = float(np.max(np.abs(buffer.samples))) if buffer.samples.size else 0.0
    return {
        "peak": peak,
        "peak_dbfs": float(20 * np.log10(peak)) if peak > 0 else float("-inf"),
        "clipped_samples": int(np.sum(np.abs(buffer.samples) > 1.0)),
    }
