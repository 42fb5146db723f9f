"""UV texture containers and the per-pixel operations shared by every stage.

Textures are float64 arrays of shape (height, width, channels) in linear
intensity. All functions here are pure: inputs are never mutated and the
returned arrays are freshly allocated.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

_RANGE_TOL = 1e-9


def _as_texture_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ParameterError(f"texture data must be HxW or HxWxC, got shape {arr.shape}")
    if arr.shape[2] not in (1, 3):
        raise ParameterError(f"texture must have 1 or 3 channels, got {arr.shape[2]}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError("texture must have at least one pixel")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("texture contains non-finite values")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TextureMap:
    """Immutable UV-space image, (height, width, channels) float64."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_texture_array(self.data))

    @classmethod
    def unit(cls, data) -> "TextureMap":
        """Construct a map whose values must lie in [0, 1] (albedo, shading, alpha)."""
        tex = cls(data)
        lo = float(tex.data.min())
        hi = float(tex.data.max())
        if lo < -_RANGE_TOL or hi > 1.0 + _RANGE_TOL:
            raise ParameterError(f"values outside [0, 1]: min={lo}, max={hi}")
        return tex

    @classmethod
    def signed_unit(cls, data) -> "TextureMap":
        """Construct a map whose values must lie in [-1, 1] (normal maps)."""
        tex = cls(data)
        lo = float(tex.data.min())
        hi = float(tex.data.max())
        if lo < -1.0 - _RANGE_TOL or hi > 1.0 + _RANGE_TOL:
            raise ParameterError(f"values outside [-1, 1]: min={lo}, max={hi}")
        return tex

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape


@dataclass(frozen=True)
class UvMask:
    """Per-pixel validity weights in [0, 1]; 1 marks an observed pixel."""

    weights: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.weights, dtype=np.float64)
        if arr.ndim != 2:
            raise ParameterError(f"mask weights must be HxW, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("mask contains non-finite values")
        if arr.min() < -_RANGE_TOL or arr.max() > 1.0 + _RANGE_TOL:
            raise ParameterError("mask weights must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "weights", arr)

    @classmethod
    def full(cls, height: int, width: int) -> "UvMask":
        return cls(np.ones((height, width)))

    @property
    def valid(self) -> np.ndarray:
        """Boolean validity; weights >= 0.5 count as observed."""
        return self.weights >= 0.5

    def matches(self, tex: TextureMap) -> bool:
        return self.weights.shape == (tex.height, tex.width)


@dataclass(frozen=True)
class FaceRegions:
    """Named, pairwise disjoint UV region masks."""

    brows: UvMask
    eyes: UvMask
    lips: UvMask
    skin: UvMask

    def __post_init__(self):
        named = self.as_dict()
        shapes = {m.weights.shape for m in named.values()}
        if len(shapes) != 1:
            raise ParameterError("region masks must share one resolution")
        for name, mask in named.items():
            if not np.any(mask.weights > 0):
                raise ParameterError(f"region '{name}' is empty")
        names = list(named)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                overlap = named[a].weights * named[b].weights
                if np.any(overlap > 0):
                    raise ParameterError(f"regions '{a}' and '{b}' overlap")

    def as_dict(self) -> dict:
        return {"brows": self.brows, "eyes": self.eyes, "lips": self.lips, "skin": self.skin}


def gaussian_kernel(kernel_size: int) -> np.ndarray:
    """Normalized 1-D Gaussian taps with sigma = 0.3*((k-1)/2 - 1) + 0.8."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and >= 1, got {kernel_size}")
    if kernel_size == 1:
        return np.ones(1)
    sigma = 0.3 * ((kernel_size - 1) / 2.0 - 1.0) + 0.8
    radius = kernel_size // 2
    taps = np.exp(-np.arange(-radius, radius + 1, dtype=np.float64) ** 2 / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _blur_axis(arr: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    radius = len(taps) // 2
    if radius == 0:
        return arr.copy()
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="edge")
    out = np.zeros_like(arr)
    for t, weight in enumerate(taps):
        index = [slice(None)] * arr.ndim
        index[axis] = slice(t, t + arr.shape[axis])
        out += weight * padded[tuple(index)]
    return out


def _blur_axis_adjoint(grad: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of the edge-clamped correlation performed by _blur_axis."""
    radius = len(taps) // 2
    if radius == 0:
        return grad.copy()
    n = grad.shape[axis]
    padded_shape = list(grad.shape)
    padded_shape[axis] = n + 2 * radius
    padded = np.zeros(padded_shape, dtype=np.float64)
    for t, weight in enumerate(taps):
        index = [slice(None)] * grad.ndim
        index[axis] = slice(t, t + n)
        padded[tuple(index)] += weight * grad
    # fold replicated border mass back onto the edge samples
    out = np.take(padded, np.arange(radius, radius + n), axis=axis).copy()
    first = [slice(None)] * grad.ndim
    first[axis] = slice(0, radius)
    last = [slice(None)] * grad.ndim
    last[axis] = slice(n + radius, n + 2 * radius)
    head = [slice(None)] * grad.ndim
    head[axis] = slice(0, 1)
    tail = [slice(None)] * grad.ndim
    tail[axis] = slice(n - 1, n)
    out[tuple(head)] += padded[tuple(first)].sum(axis=axis, keepdims=True)
    out[tuple(tail)] += padded[tuple(last)].sum(axis=axis, keepdims=True)
    return out


def _blur_array(arr: np.ndarray, kernel_size: int) -> np.ndarray:
    taps = gaussian_kernel(kernel_size)
    return _blur_axis(_blur_axis(arr, taps, 0), taps, 1)


def _blur_array_adjoint(grad: np.ndarray, kernel_size: int) -> np.ndarray:
    taps = gaussian_kernel(kernel_size)
    return _blur_axis_adjoint(_blur_axis_adjoint(grad, taps, 1), taps, 0)


def gaussian_blur(tex: TextureMap, kernel_size: int) -> TextureMap:
    """Separable Gaussian blur with edge-clamped borders."""
    return TextureMap(_blur_array(tex.data, kernel_size))


def diffuse_fill(tex: TextureMap, mask: UvMask, iters: int = 2000, tol: float = 1e-5) -> TextureMap:
    """Fill invalid pixels by Jacobi iteration of the 4-neighbor Laplace average.

    Valid pixels (mask weight >= 0.5) are kept verbatim; invalid pixels converge
    to the discrete harmonic interpolant anchored at the valid set. Border pixels
    average over their in-bounds neighbors only. Iteration stops once the largest
    update falls below `tol` or after `iters` sweeps.
    """
    if not mask.matches(tex):
        raise ParameterError("mask resolution does not match texture")
    valid = mask.valid
    if not valid.any():
        raise ParameterError("nothing to anchor fill: mask has no valid pixel")
    if valid.all():
        return TextureMap(tex.data)

    src = tex.data
    hole = ~valid
    counts = np.zeros(valid.shape, dtype=np.float64)
    counts[1:, :] += 1.0
    counts[:-1, :] += 1.0
    counts[:, 1:] += 1.0
    counts[:, :-1] += 1.0

    work = src.copy()
    seed = src[valid].mean(axis=0)
    work[hole] = seed

    for _ in range(iters):
        acc = np.zeros_like(work)
        acc[1:, :] += work[:-1, :]
        acc[:-1, :] += work[1:, :]
        acc[:, 1:] += work[:, :-1]
        acc[:, :-1] += work[:, 1:]
        updated = acc / counts[:, :, None]
        delta = np.abs(updated[hole] - work[hole]).max()
        work[hole] = updated[hole]
        if delta < tol:
            break
    return TextureMap(work)


def l1_sign(x: np.ndarray, dead_zone: float = 1e-12) -> np.ndarray:
    """Subgradient of |x| with a machine-noise dead zone.

    Residuals at the kink often carry float rounding noise of ~1e-16; treating
    anything below `dead_zone` as the kink itself keeps the subgradient at 0
    there instead of amplifying the noise sign.
    """
    return np.where(np.abs(x) <= dead_zone, 0.0, np.sign(x))


def total_variation(tex: TextureMap) -> float:
    """Anisotropic L1 total variation, summed over channels, averaged over pixels."""
    value, _ = _total_variation_grad(tex.data)
    return value


def _total_variation_grad(arr: np.ndarray) -> tuple:
    n = arr.shape[0] * arr.shape[1]
    dx = arr[:, 1:, :] - arr[:, :-1, :]
    dy = arr[1:, :, :] - arr[:-1, :, :]
    value = (np.abs(dx).sum() + np.abs(dy).sum()) / n
    grad = np.zeros_like(arr)
    sx = l1_sign(dx) / n
    sy = l1_sign(dy) / n
    grad[:, 1:, :] += sx
    grad[:, :-1, :] -= sx
    grad[1:, :, :] += sy
    grad[:-1, :, :] -= sy
    return float(value), grad


def resize_bilinear(tex: TextureMap, height: int, width: int) -> TextureMap:
    """Bilinear resample with half-pixel-center alignment and edge clamping."""
    if height < 1 or width < 1:
        raise ParameterError("target resolution must be positive")
    if (height, width) == (tex.height, tex.width):
        return TextureMap(tex.data)
    return TextureMap(_resize_array(tex.data, height, width))


def _resize_array(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    src_h, src_w = arr.shape[:2]
    ys = (np.arange(height) + 0.5) * src_h / height - 0.5
    xs = (np.arange(width) + 0.5) * src_w / width - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, src_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bottom = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def _downsample2(arr: np.ndarray) -> np.ndarray:
    """2x2 average pooling; odd trailing rows/columns are cropped."""
    h = arr.shape[0] // 2
    w = arr.shape[1] // 2
    trimmed = arr[: 2 * h, : 2 * w]
    return 0.25 * (
        trimmed[0::2, 0::2] + trimmed[0::2, 1::2] + trimmed[1::2, 0::2] + trimmed[1::2, 1::2]
    )


def _downsample2_adjoint(grad: np.ndarray, shape: tuple) -> np.ndarray:
    out = np.zeros(shape, dtype=np.float64)
    h = shape[0] // 2
    w = shape[1] // 2
    spread = 0.25 * grad
    out[0 : 2 * h : 2, 0 : 2 * w : 2] = spread
    out[0 : 2 * h : 2, 1 : 2 * w : 2] = spread
    out[1 : 2 * h : 2, 0 : 2 * w : 2] = spread
    out[1 : 2 * h : 2, 1 : 2 * w : 2] = spread
    return out
