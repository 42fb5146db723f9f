"""Forward illumination models.

Second-order spherical-harmonics Lambertian diffuse shading, Blinn-Phong
specular shading under a fixed 20-light icosahedral stage, and the
albedo-times-shading-plus-specular composition the whole pipeline renders
through. Coefficients are "ready to dot" with the SH basis: no separate
irradiance constants are applied.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .texture import TextureMap

# Real SH basis constants, band 0..2.
SH_C0 = 0.5 * math.sqrt(1.0 / math.pi)           # 0.282095
SH_C1 = math.sqrt(3.0 / (4.0 * math.pi))         # 0.488603
SH_C2 = 0.5 * math.sqrt(15.0 / math.pi)          # 1.092548
SH_C3 = 0.25 * math.sqrt(5.0 / math.pi)          # 0.315392
SH_C4 = 0.25 * math.sqrt(15.0 / math.pi)         # 0.546274

NUM_SH = 9
NUM_STAGE_LIGHTS = 20


@dataclass(frozen=True)
class ShCoefficients:
    """27 lighting coefficients: 9 SH basis weights for each color channel.

    Stored as a (9, 3) array; the flat layout is row-major (basis index major).
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size != NUM_SH * 3:
            raise ParameterError(f"SH coefficients must have 27 values, got {arr.size}")
        arr = arr.reshape(NUM_SH, 3).copy()
        if not np.all(np.isfinite(arr)):
            raise ParameterError("SH coefficients contain non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def zeros(cls) -> "ShCoefficients":
        return cls(np.zeros((NUM_SH, 3)))

    @classmethod
    def gray_ambient(cls, level: float) -> "ShCoefficients":
        """Band-0-only environment producing constant shading `level`."""
        arr = np.zeros((NUM_SH, 3))
        arr[0, :] = level / SH_C0
        return cls(arr)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class VirtualLightStage:
    """20 directional lights on icosahedral face normals plus a viewer.

    intensities >= 0, per-light Blinn-Phong shininess > 0, unit directions.
    `validate=False` skips the invariant checks so optimizers and gradient
    probes can hold transient off-manifold values.
    """

    intensities: np.ndarray
    directions: np.ndarray
    shininess: np.ndarray
    view_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    validate: bool = True

    def __post_init__(self):
        inten = np.asarray(self.intensities, dtype=np.float64).reshape(-1).copy()
        dirs = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3).copy()
        shin = np.asarray(self.shininess, dtype=np.float64).reshape(-1).copy()
        view = np.asarray(self.view_direction, dtype=np.float64).reshape(3).copy()
        if inten.size != NUM_STAGE_LIGHTS or dirs.shape[0] != NUM_STAGE_LIGHTS \
                or shin.size != NUM_STAGE_LIGHTS:
            raise ParameterError("light stage needs exactly 20 lights")
        if not (np.all(np.isfinite(inten)) and np.all(np.isfinite(dirs))
                and np.all(np.isfinite(shin)) and np.all(np.isfinite(view))):
            raise ParameterError("light stage contains non-finite values")
        if self.validate:
            norms = np.linalg.norm(dirs, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ParameterError("light directions must be unit length")
            if np.abs(np.linalg.norm(view) - 1.0) > 1e-6:
                raise ParameterError("view direction must be unit length")
            if np.any(inten < 0):
                raise ParameterError("light intensities must be non-negative")
            if np.any(shin <= 0):
                raise ParameterError("shininess exponents must be positive")
        for arr in (inten, dirs, shin, view):
            arr.flags.writeable = False
        object.__setattr__(self, "intensities", inten)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "shininess", shin)
        object.__setattr__(self, "view_direction", view)

    @classmethod
    def default(cls, intensity: float = 0.05, shininess: float = 200.0) -> "VirtualLightStage":
        return cls(
            intensities=np.full(NUM_STAGE_LIGHTS, intensity),
            directions=icosahedral_directions(),
            shininess=np.full(NUM_STAGE_LIGHTS, shininess),
        )


def icosahedral_directions() -> np.ndarray:
    """The 20 face-center normals of a regular icosahedron, unit length.

    These are the normalized vertices of the dual dodecahedron, ordered by
    descending z then by atan2(y, x).
    """
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    inv = 1.0 / phi
    points = []
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                points.append((sx, sy, sz))
    for sa in (1, -1):
        for sb in (1, -1):
            points.append((0.0, sa * inv, sb * phi))
            points.append((sa * inv, sb * phi, 0.0))
            points.append((sa * phi, 0.0, sb * inv))
    arr = np.array(points, dtype=np.float64)
    arr /= np.linalg.norm(arr, axis=1, keepdims=True)
    order = np.lexsort((np.arctan2(arr[:, 1], arr[:, 0]), -arr[:, 2]))
    return arr[order]


def sh_basis_array(normals: np.ndarray) -> np.ndarray:
    """Evaluate the 9 real SH polynomials at each row of `normals` (..., 3)."""
    n = np.asarray(normals, dtype=np.float64)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    basis = np.empty(n.shape[:-1] + (NUM_SH,), dtype=np.float64)
    basis[..., 0] = SH_C0
    basis[..., 1] = SH_C1 * y
    basis[..., 2] = SH_C1 * z
    basis[..., 3] = SH_C1 * x
    basis[..., 4] = SH_C2 * x * y
    basis[..., 5] = SH_C2 * y * z
    basis[..., 6] = SH_C3 * (3.0 * z * z - 1.0)
    basis[..., 7] = SH_C2 * x * z
    basis[..., 8] = SH_C4 * (x * x - y * y)
    return basis


def sh_basis_jacobian(normals: np.ndarray) -> np.ndarray:
    """d(basis)/d(normal) for each row: shape (..., 9, 3)."""
    n = np.asarray(normals, dtype=np.float64)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    zero = np.zeros_like(x)
    jac = np.empty(n.shape[:-1] + (NUM_SH, 3), dtype=np.float64)
    jac[..., 0, :] = 0.0
    jac[..., 1, 0], jac[..., 1, 1], jac[..., 1, 2] = zero, SH_C1 + zero, zero
    jac[..., 2, 0], jac[..., 2, 1], jac[..., 2, 2] = zero, zero, SH_C1 + zero
    jac[..., 3, 0], jac[..., 3, 1], jac[..., 3, 2] = SH_C1 + zero, zero, zero
    jac[..., 4, 0], jac[..., 4, 1], jac[..., 4, 2] = SH_C2 * y, SH_C2 * x, zero
    jac[..., 5, 0], jac[..., 5, 1], jac[..., 5, 2] = zero, SH_C2 * z, SH_C2 * y
    jac[..., 6, 0], jac[..., 6, 1], jac[..., 6, 2] = zero, zero, SH_C3 * 6.0 * z
    jac[..., 7, 0], jac[..., 7, 1], jac[..., 7, 2] = SH_C2 * z, zero, SH_C2 * x
    jac[..., 8, 0], jac[..., 8, 1], jac[..., 8, 2] = SH_C4 * 2.0 * x, -SH_C4 * 2.0 * y, zero
    return jac


def sh_basis(normal, normalize: bool = True) -> np.ndarray:
    """The 9 SH basis values at one direction.

    With `normalize` the input is silently normalized; otherwise a non-unit
    direction raises.
    """
    n = np.asarray(normal, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(n))
    if normalize:
        if norm < 1e-12:
            raise ParameterError("cannot normalize a zero direction")
        n = n / norm
    elif abs(norm - 1.0) > 1e-6:
        raise ParameterError(f"normal must be unit length, |n| = {norm}")
    return sh_basis_array(n)


def diffuse_shading(normals: TextureMap, sh: ShCoefficients,
                    normalize: bool = True) -> TextureMap:
    """Lambertian shading: per channel max(0, basis(n) . coefficients)."""
    if normals.channels != 3:
        raise ParameterError("normal map must have 3 channels")
    n = normals.data
    if normalize:
        norms = np.linalg.norm(n, axis=2, keepdims=True)
        n = np.where(norms > 1e-12, n / np.maximum(norms, 1e-12), np.array([0.0, 0.0, 1.0]))
    basis = sh_basis_array(n)
    pre = np.einsum("hwk,kc->hwc", basis, sh.values)
    return TextureMap(np.maximum(pre, 0.0))


def specular_shading_array(normals: np.ndarray, stage: VirtualLightStage) -> np.ndarray:
    """Blinn-Phong stage response per pixel, shape normals.shape[:-1]."""
    n = np.asarray(normals, dtype=np.float64)
    flat = n.reshape(-1, 3)
    halfway, half_norm = _stage_half_vectors(stage)
    dots = flat @ halfway.T
    clamped = np.maximum(dots, 0.0)
    powed = _safe_power(clamped, stage.shininess[None, :])
    powed = np.where(half_norm[None, :] > 1e-12, powed, 0.0)
    response = powed @ stage.intensities
    return response.reshape(n.shape[:-1])


def _stage_half_vectors(stage: VirtualLightStage) -> tuple:
    raw = stage.directions + stage.view_direction[None, :]
    norms = np.linalg.norm(raw, axis=1)
    safe = np.maximum(norms, 1e-12)
    return raw / safe[:, None], norms


def _safe_power(base: np.ndarray, exponent: np.ndarray) -> np.ndarray:
    """base ** exponent with base >= 0 and 0 ** p defined as 0."""
    positive = base > 0.0
    out = np.zeros(np.broadcast_shapes(base.shape, exponent.shape), dtype=np.float64)
    with np.errstate(under="ignore"):
        np.power(base, exponent, out=out, where=positive)
    return out


def specular_shading(normals: TextureMap, stage: VirtualLightStage,
                     channels: int = 1) -> TextureMap:
    """Stage highlight response as a 1-channel (default) or replicated 3-channel map."""
    if normals.channels != 3:
        raise ParameterError("normal map must have 3 channels")
    if channels not in (1, 3):
        raise ParameterError("channels must be 1 or 3")
    response = specular_shading_array(normals.data, stage)[:, :, None]
    if channels == 3:
        response = np.repeat(response, 3, axis=2)
    return TextureMap(response)


def compose_reconstruction(diffuse_albedo: TextureMap, shading: TextureMap,
                           specular: TextureMap) -> TextureMap:
    """albedo * shading + specular, clamped below at zero.

    The specular term may be single-channel (broadcast over color channels).
    Values above 1 are kept; clamping to displayable range happens at export.
    """
    if diffuse_albedo.shape != shading.shape:
        raise ParameterError("albedo and shading dimensions differ")
    if (specular.height, specular.width) != (diffuse_albedo.height, diffuse_albedo.width):
        raise ParameterError("specular resolution differs from albedo")
    if specular.channels not in (1, diffuse_albedo.channels):
        raise ParameterError("specular must be 1-channel or match the albedo channels")
    combined = diffuse_albedo.data * shading.data + specular.data
    return TextureMap(np.maximum(combined, 0.0))
