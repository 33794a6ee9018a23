"""
Signal transforms: raw ADC frame -> RD map -> grayscale / heatmap representations.
"""

from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from radnas.exceptions import RDFormatError
from radnas.rdmap_io.records import RawADCCube, RDMap, RepresentationPair

DB_EPS = 1e-12

# Jet-style pseudo colour map, piecewise linear between these anchors.
HEATMAP_ANCHORS = np.array([0.0, 0.125, 0.375, 0.625, 0.875, 1.0])
HEATMAP_COLORS = np.array(
    [
        [0.0, 0.0, 0.5],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.5, 0.0, 0.0],
    ]
)


def adc_to_rd(cube: RawADCCube) -> RDMap:
    """Range FFT over fast time, Doppler FFT over slow time, Doppler centre-shifted, amplitude in dB.

    The result is laid out [range_bins, doppler_bins].
    """
    if not isinstance(cube, RawADCCube):
        cube = RawADCCube(np.asarray(cube))
    range_fft = np.fft.fft(cube.samples, axis=1)
    rd = np.fft.fftshift(np.fft.fft(range_fft, axis=0), axes=0)
    intensity = 20.0 * np.log10(np.abs(rd) + DB_EPS)
    return RDMap(intensity.T)


def rd_field_to_adc(field: np.ndarray) -> RawADCCube:
    """Inverse of the complex part of `adc_to_rd`: a complex [range, doppler] field back to ADC samples."""
    spectrum = np.fft.ifftshift(np.asarray(field, dtype=np.complex128).T, axes=0)
    return RawADCCube(np.fft.ifft(np.fft.ifft(spectrum, axis=0), axis=1))


def _normalize(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise RDFormatError("cannot normalize a map with non-finite values")
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def to_grayscale(rd: RDMap) -> np.ndarray:
    """Min-max normalized intensity, [1, H, W] float32; a constant map gives all zeros."""
    return _normalize(rd.intensity)[None].astype(np.float32)


def colorize(normalized: np.ndarray) -> np.ndarray:
    """Map normalized values in [0, 1] through the heatmap LUT, returning [3, ...]."""
    normalized = np.clip(np.asarray(normalized, dtype=np.float64), 0.0, 1.0)
    return np.stack([np.interp(normalized, HEATMAP_ANCHORS, HEATMAP_COLORS[:, c]) for c in range(3)])


def to_heatmap(rd: RDMap) -> np.ndarray:
    """Pseudo-colour encoding of the normalized map, [3, H, W] float32."""
    return colorize(_normalize(rd.intensity)).astype(np.float32)


def resize_rd(rd: RDMap, size: Tuple[int, int]) -> RDMap:
    if tuple(size) == rd.intensity.shape:
        return rd
    grid = torch.from_numpy(rd.intensity.astype(np.float64))[None, None]
    resized = F.interpolate(grid, size=tuple(size), mode="bilinear", align_corners=False)
    return RDMap(resized[0, 0].numpy())


def encode_pair(rd: RDMap, size: Optional[Tuple[int, int]] = None) -> RepresentationPair:
    """Both representations from one map; `size` resizes the map first and is kept in metadata."""
    metadata = {"source_shape": tuple(rd.intensity.shape)}
    if size is not None:
        rd = resize_rd(rd, size)
        metadata["resized_to"] = tuple(size)
    return RepresentationPair(heatmap=to_heatmap(rd), grayscale=to_grayscale(rd), metadata=metadata)
