"""Grayscale pixel substrate: image container, PGM/PNG I/O, bilinear sampling,
normalized cross-correlation and centered FFT magnitude spectra.

All numeric work (correlation, FFT) runs on the real-valued view of an image,
intensity / 255, so 8-bit storage never quantizes downstream math.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "GrayImage",
    "CorrelationMap",
    "Spectrum",
    "ImageFormatError",
    "load_image",
    "save_pgm",
    "save_png",
    "sample_bilinear",
    "ncc",
    "fft_magnitude",
]

# BT.601 luminance weights for RGB -> gray conversion.
_LUMA = (0.299, 0.587, 0.114)

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(ValueError):
    """Raised for files that are not 8-bit grayscale PGM (P5) or 8-bit PNG."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable 8-bit grayscale image, row-major, intensities in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"image data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be at least 1x1")
        if arr.dtype != np.uint8:
            raise ValueError(f"image data must be uint8, got {arr.dtype}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def real_view(self) -> np.ndarray:
        """Float64 copy of the pixels rescaled to [0, 1]."""
        return self.data.astype(np.float64) / 255.0

    @staticmethod
    def from_float(values: np.ndarray) -> "GrayImage":
        """Quantize real-valued intensities in [0, 255] to 8 bits.

        Values are clamped to [0, 255] and rounded half-up.
        """
        arr = np.asarray(values, dtype=np.float64)
        out = np.clip(np.floor(arr + 0.5), 0.0, 255.0).astype(np.uint8)
        return GrayImage(out)


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    """Normalized cross-correlation values, one per valid template placement."""

    values: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Centered 2-D FFT magnitude; the DC bin sits at (height//2, width//2)."""

    magnitude: np.ndarray

    @property
    def width(self) -> int:
        return self.magnitude.shape[1]

    @property
    def height(self) -> int:
        return self.magnitude.shape[0]

    @property
    def center(self) -> tuple[int, int]:
        return (self.magnitude.shape[0] // 2, self.magnitude.shape[1] // 2)


def _read_pgm(raw: bytes) -> GrayImage:
    # Binary PGM: "P5" <ws> width <ws> height <ws> maxval <single ws> raster.
    # '#' comments are allowed anywhere in the header.
    buf = io.BytesIO(raw)
    magic = buf.read(2)
    if magic != b"P5":
        raise ImageFormatError("not a binary PGM (missing P5 magic)")

    def next_token() -> bytes:
        tok = b""
        while True:
            ch = buf.read(1)
            if ch == b"":
                raise ImageFormatError("truncated PGM header")
            if ch == b"#":
                while ch not in (b"\n", b"", b"\r"):
                    ch = buf.read(1)
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header") from exc
    if width < 1 or height < 1:
        raise ImageFormatError(f"zero or negative PGM dimension {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 PGM supported, got {maxval}")
    raster = buf.read(width * height)
    if len(raster) != width * height:
        raise ImageFormatError("PGM raster shorter than header promises")
    data = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(data.copy())


def _read_png(path: Path) -> GrayImage:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode == "L":
            data = np.asarray(im, dtype=np.uint8)
        elif im.mode == "RGB":
            rgb = np.asarray(im, dtype=np.float64)
            luma = _LUMA[0] * rgb[..., 0] + _LUMA[1] * rgb[..., 1] + _LUMA[2] * rgb[..., 2]
            data = np.floor(luma + 0.5).astype(np.uint8)
        else:
            raise ImageFormatError(f"unsupported PNG mode {im.mode!r} (need L or RGB)")
    if data.shape[0] < 1 or data.shape[1] < 1:
        raise ImageFormatError("zero PNG dimension")
    return GrayImage(data)


def load_image(path: str | Path) -> GrayImage:
    """Load an 8-bit grayscale PGM (P5) or PNG image.

    Color PNG is converted by luminance (0.299 R + 0.587 G + 0.114 B),
    rounded half-up. The format is detected from magic bytes, not the suffix.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image file not found: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"P5":
        return _read_pgm(raw)
    if raw[:8] == _PNG_MAGIC:
        return _read_png(path)
    raise ImageFormatError(f"unrecognized image format in {path}")


def save_pgm(img: GrayImage, path: str | Path) -> None:
    """Write a binary PGM (P5, maxval 255); bit-exact interchange format."""
    path = Path(path)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    path.write_bytes(header + img.data.tobytes())


def save_png(img: GrayImage, path: str | Path) -> None:
    from PIL import Image

    Image.fromarray(img.data, mode="L").save(Path(path), format="PNG")


def bilinear_on_array(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized bilinear interpolation on a 2-D array, coords already in range."""
    h, w = arr.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.clip(x0, 0, w - 1)
    y0 = np.clip(y0, 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    a = arr.astype(np.float64, copy=False)
    v00 = a[y0, x0]
    v01 = a[y0, x1]
    v10 = a[y1, x0]
    v11 = a[y1, x1]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy


def sample_bilinear(img: GrayImage, x: float, y: float) -> float:
    """Bilinear interpolation of the four neighbors; exact at integer coords.

    Coordinates must satisfy 0 <= x <= width-1 and 0 <= y <= height-1.
    """
    if not (0.0 <= x <= img.width - 1) or not (0.0 <= y <= img.height - 1):
        raise ValueError(
            f"sample point ({x}, {y}) outside image {img.width}x{img.height}"
        )
    out = bilinear_on_array(img.data, np.asarray([x]), np.asarray([y]))
    return float(out[0])


def _window_sums(arr: np.ndarray, th: int, tw: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding-window sums of arr and arr**2 for windows of shape (th, tw)."""
    pad = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(arr, axis=0), axis=1, out=pad[1:, 1:])
    s = pad[th:, tw:] - pad[:-th, tw:] - pad[th:, :-tw] + pad[:-th, :-tw]
    pad2 = np.zeros_like(pad)
    np.cumsum(np.cumsum(arr * arr, axis=0), axis=1, out=pad2[1:, 1:])
    s2 = pad2[th:, tw:] - pad2[:-th, tw:] - pad2[th:, :-tw] + pad2[:-th, :-tw]
    return s, s2


def ncc(img: GrayImage, template: GrayImage) -> CorrelationMap:
    """Normalized cross-correlation (zero-mean, unit-variance per window).

    Output size is (H-h+1) x (W-w+1). Image windows with zero variance
    correlate to 0 rather than NaN, so flat regions cannot poison peak search.
    """
    if template.height > img.height or template.width > img.width:
        raise ValueError(
            f"template {template.width}x{template.height} larger than image "
            f"{img.width}x{img.height}"
        )
    f = img.real_view
    t = template.real_view
    tz = t - t.mean()
    t_norm_sq = float((tz * tz).sum())
    if t_norm_sq <= 1e-12:
        raise ValueError("template has zero intensity variance")

    # sum over each window of f * (t - mean(t)); the window mean drops out
    # because tz sums to zero.
    num = fftconvolve(f, tz[::-1, ::-1], mode="valid")
    win_sum, win_sq = _window_sums(f, template.height, template.width)
    n = template.height * template.width
    win_var = win_sq - win_sum * win_sum / n
    den = np.sqrt(np.maximum(win_var, 0.0) * t_norm_sq)
    flat = win_var < 1e-9
    den[flat] = 1.0
    out = num / den
    out[flat] = 0.0
    np.clip(out, -1.0, 1.0, out=out)
    return CorrelationMap(out)


def fft_magnitude(img: GrayImage) -> Spectrum:
    """Centered magnitude spectrum of a square power-of-two image.

    The DC bin (after the quadrant shift) equals the sum of the real-valued
    view of all pixels.
    """
    h, w = img.height, img.width
    if h != w:
        raise ValueError(f"image must be square, got {w}x{h}")
    if h < 2 or (h & (h - 1)) != 0:
        raise ValueError(f"image side must be a power of two >= 2, got {h}")
    spec = np.fft.fft2(img.real_view)
    mag = np.abs(np.fft.fftshift(spec))
    return Spectrum(mag)
