"""File formats: PNG (sRGB 8-bit), PFM (linear float32), masks, landmark
tables and the binary array container used for model files.

PNG pixel values are sRGB-encoded on disk and converted to linear intensity
on read; PFM stores raw linear float32 and round-trips exactly. Masks and
alpha mattes are stored as plain 8-bit grayscale without a transfer function.
"""

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParameterError
from .texture import TextureMap, UvMask


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    linear = np.asarray(linear, dtype=np.float64)
    low = linear * 12.92
    high = 1.055 * np.power(np.maximum(linear, 0.0), 1.0 / 2.4) - 0.055
    return np.where(linear <= 0.0031308, low, high)


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    encoded = np.asarray(encoded, dtype=np.float64)
    low = encoded / 12.92
    high = np.power((encoded + 0.055) / 1.055, 2.4)
    return np.where(encoded <= 0.04045, low, high)


def write_texture(tex: TextureMap, path) -> None:
    """Write a texture; format chosen by extension (.png or .pfm)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        _write_pfm(tex.data, path)
    elif suffix == ".png":
        clipped = np.clip(tex.data, 0.0, 1.0)
        codes = np.rint(srgb_encode(clipped) * 255.0).astype(np.uint8)
        if tex.channels == 1:
            image = Image.fromarray(codes[:, :, 0], mode="L")
        else:
            image = Image.fromarray(codes, mode="RGB")
        image.save(path)
    else:
        raise ParameterError(f"unsupported texture format: {path.name}")


def read_texture(path) -> TextureMap:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        return TextureMap(_read_pfm(path))
    if suffix == ".png":
        with Image.open(path) as image:
            if image.mode not in ("L", "RGB"):
                raise ParameterError(
                    f"unsupported channel layout '{image.mode}' in {path.name}"
                )
            arr = np.asarray(image, dtype=np.float64) / 255.0
        return TextureMap(srgb_decode(arr))
    raise ParameterError(f"unsupported texture format: {path.name}")


def write_mask(mask: UvMask, path) -> None:
    """Write validity weights as 8-bit grayscale PNG, 255 = valid."""
    codes = np.rint(np.clip(mask.weights, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(codes, mode="L").save(Path(path))


def read_mask(path) -> UvMask:
    with Image.open(Path(path)) as image:
        if image.mode != "L":
            image = image.convert("L")
        arr = np.asarray(image, dtype=np.float64) / 255.0
    return UvMask(arr)


def write_weight_map(tex: TextureMap, path) -> None:
    """Write a single-channel [0, 1] map (e.g. an alpha matte) as raw 8-bit PNG."""
    if tex.channels != 1:
        raise ParameterError("weight maps must be single-channel")
    write_mask(UvMask(np.clip(tex.data[:, :, 0], 0.0, 1.0)), path)


def read_weight_map(path) -> TextureMap:
    return TextureMap.unit(read_mask(path).weights)


def _write_pfm(arr: np.ndarray, path: Path) -> None:
    channels = arr.shape[2]
    header = b"PF" if channels == 3 else b"Pf"
    height, width = arr.shape[:2]
    data = arr.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(data[::-1].tobytes())  # PFM scanlines run bottom to top


def _read_pfm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ParameterError(f"not a PFM file: {path.name}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise ParameterError(f"malformed PFM header in {path.name}")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        raw = np.frombuffer(fh.read(count * 4), dtype=dtype)
        if raw.size != count:
            raise ParameterError(f"truncated PFM payload in {path.name}")
    arr = raw.reshape(height, width, channels)[::-1].astype(np.float64)
    return arr


# ---------------------------------------------------------------------------
# Binary array container (model files)

_MAGIC_LEN = 4
_DTYPE_CODES = {0: "<f8", 1: "<f4", 2: "<i4", 3: "<i8"}
_DTYPE_FOR = {np.dtype(np.float64): 0, np.dtype(np.float32): 1,
              np.dtype(np.int32): 2, np.dtype(np.int64): 3}


def write_container(path, magic: str, arrays: dict) -> None:
    """Write named arrays to a little-endian chunked binary file.

    A sidecar JSON manifest (path + '.json') duplicates the dimensions so
    other tooling can inspect the file without parsing it.
    """
    if len(magic) != _MAGIC_LEN:
        raise ParameterError("container magic must be 4 bytes")
    path = Path(path)
    manifest = {"magic": magic, "arrays": {}}
    with open(path, "wb") as fh:
        fh.write(magic.encode("ascii"))
        fh.write(struct.pack("<II", 1, len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _DTYPE_FOR:
                arr = arr.astype(np.float64)
            code = _DTYPE_FOR[arr.dtype]
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", code, arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype(_DTYPE_CODES[code]).tobytes())
            manifest["arrays"][name] = {"dtype": _DTYPE_CODES[code], "shape": list(arr.shape)}
    with open(str(path) + ".json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def read_container(path, magic: str) -> dict:
    path = Path(path)
    arrays = {}
    with open(path, "rb") as fh:
        found = fh.read(_MAGIC_LEN).decode("ascii", errors="replace")
        if found != magic:
            raise ParameterError(f"bad container magic in {path.name}: {found!r}")
        version, count = struct.unpack("<II", fh.read(8))
        if version != 1:
            raise ParameterError(f"unsupported container version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            code, ndim = struct.unpack("<BB", fh.read(2))
            shape = struct.unpack("<" + "I" * ndim, fh.read(4 * ndim))
            dtype = np.dtype(_DTYPE_CODES[code])
            count_items = int(np.prod(shape)) if ndim else 1
            raw = fh.read(count_items * dtype.itemsize)
            arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return arrays


# ---------------------------------------------------------------------------
# Landmark tables

def write_landmarks_csv(points: np.ndarray, path) -> None:
    """Write detected landmarks as CSV rows 'index,x,y'."""
    points = np.asarray(points, dtype=np.float64)
    with open(Path(path), "w") as fh:
        fh.write("index,x,y\n")
        for i, (x, y) in enumerate(points):
            fh.write(f"{i},{float(x)!r},{float(y)!r}\n")


def read_landmarks_csv(path) -> np.ndarray:
    rows = []
    with open(Path(path)) as fh:
        header = fh.readline()
        if not header.lower().startswith("index"):
            raise ParameterError("landmark CSV must start with an 'index,x,y' header")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            idx, x, y = line.split(",")
            rows.append((int(idx), float(x), float(y)))
    rows.sort(key=lambda r: r[0])
    return np.array([(x, y) for _, x, y in rows], dtype=np.float64)


def write_landmarks_json(points: np.ndarray, path) -> None:
    points = np.asarray(points, dtype=np.float64)
    with open(Path(path), "w") as fh:
        json.dump([[float(x), float(y)] for x, y in points], fh)


def write_trace_csv(rows, header: str, path) -> None:
    with open(Path(path), "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")
