"""Linear morphable face model: evaluation, normals, UV rasterization,
landmark projection, a deterministic synthetic model generator, and the
model container file.

Geometry and reflectance are affine in their coefficient vectors:

    positions = mean + B_id a + B_ex b
    diffuse   = (mean + B_d g) * gain + bias      (gain/bias per channel)
    specular  = mean + B_s d

Basis matrices are dense with fixed column counts (200 identity,
100 expression, 100 diffuse, 100 specular). Dense products go through
np.einsum so results do not depend on BLAS threading.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .fileio import read_container, write_container
from .shading import ShCoefficients, VirtualLightStage, icosahedral_directions
from .texture import TextureMap, UvMask

NUM_IDENTITY = 200
NUM_EXPRESSION = 100
NUM_ALBEDO = 100
NUM_SPECULAR = 100

MODEL_MAGIC = "FLM1"


@dataclass(frozen=True)
class LinearFaceModel:
    """Mean plus orthogonal PCA bases for geometry and reflectance."""

    mean_geometry: np.ndarray          # (V, 3)
    mean_diffuse: TextureMap           # (H, W, 3)
    mean_specular: TextureMap          # (H, W, 3)
    basis_identity: np.ndarray         # (3V, 200)
    basis_expression: np.ndarray       # (3V, 100)
    basis_diffuse: np.ndarray          # (H*W*3, 100)
    basis_specular: np.ndarray         # (H*W*3, 100)
    topology: np.ndarray               # (F, 3) vertex indices
    uv_coords: np.ndarray              # (V, 2) in [0, 1]
    landmark_indices: np.ndarray       # (L,) vertex ids

    def __post_init__(self):
        geo = np.asarray(self.mean_geometry, dtype=np.float64)
        if geo.ndim != 2 or geo.shape[1] != 3:
            raise ParameterError("mean geometry must be (V, 3)")
        v = geo.shape[0]
        tex_dim = self.mean_diffuse.data.size
        checks = [
            ("basis_identity", self.basis_identity, (3 * v, NUM_IDENTITY)),
            ("basis_expression", self.basis_expression, (3 * v, NUM_EXPRESSION)),
            ("basis_diffuse", self.basis_diffuse, (tex_dim, NUM_ALBEDO)),
            ("basis_specular", self.basis_specular, (tex_dim, NUM_SPECULAR)),
        ]
        frozen = {"mean_geometry": geo}
        for name, arr, shape in checks:
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != shape:
                raise ParameterError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"{name} contains non-finite values")
            frozen[name] = arr
        topo = np.asarray(self.topology, dtype=np.int64)
        if topo.ndim != 2 or topo.shape[1] != 3:
            raise ParameterError("topology must be (F, 3)")
        if topo.min() < 0 or topo.max() >= v:
            raise ParameterError("topology indexes a missing vertex")
        uv = np.asarray(self.uv_coords, dtype=np.float64)
        if uv.shape != (v, 2):
            raise ParameterError("uv coordinates must be (V, 2)")
        if uv.min() < 0.0 or uv.max() > 1.0:
            raise ParameterError("uv coordinates must lie in [0, 1]")
        lm = np.asarray(self.landmark_indices, dtype=np.int64).reshape(-1)
        if lm.size and (lm.min() < 0 or lm.max() >= v):
            raise ParameterError("landmark index out of range")
        if self.mean_specular.shape != self.mean_diffuse.shape:
            raise ParameterError("mean specular resolution differs from mean diffuse")
        frozen["topology"] = topo
        frozen["uv_coords"] = uv
        frozen["landmark_indices"] = lm
        for name, arr in frozen.items():
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def vertex_count(self) -> int:
        return self.mean_geometry.shape[0]

    @property
    def resolution(self) -> tuple:
        return self.mean_diffuse.height, self.mean_diffuse.width


@dataclass(frozen=True)
class CoarseParams:
    """Full coarse parameter vector: coefficients, pose, color and lighting."""

    identity: np.ndarray      # (200,)
    expression: np.ndarray    # (100,)
    albedo: np.ndarray        # (100,)
    specular: np.ndarray      # (100,)
    color_gain: np.ndarray    # (3,)
    color_bias: np.ndarray    # (3,)
    rotation: np.ndarray      # (3,) Euler angles, radians, x-y-z order
    translation: np.ndarray   # (3,) model units
    sh: ShCoefficients
    stage: VirtualLightStage

    def __post_init__(self):
        sizes = {
            "identity": NUM_IDENTITY,
            "expression": NUM_EXPRESSION,
            "albedo": NUM_ALBEDO,
            "specular": NUM_SPECULAR,
            "color_gain": 3,
            "color_bias": 3,
            "rotation": 3,
            "translation": 3,
        }
        for name, size in sizes.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1).copy()
            if arr.size != size:
                raise ParameterError(f"{name} must have {size} entries, got {arr.size}")
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"{name} contains non-finite values")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {
            "identity": self.identity.tolist(),
            "expression": self.expression.tolist(),
            "albedo": self.albedo.tolist(),
            "specular": self.specular.tolist(),
            "color_gain": self.color_gain.tolist(),
            "color_bias": self.color_bias.tolist(),
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "sh": self.sh.flat.tolist(),
            "light_intensities": self.stage.intensities.tolist(),
            "light_directions": self.stage.directions.reshape(-1).tolist(),
            "shininess": self.stage.shininess.tolist(),
            "view_direction": self.stage.view_direction.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CoarseParams":
        stage = VirtualLightStage(
            intensities=np.array(payload["light_intensities"]),
            directions=np.array(payload["light_directions"]).reshape(-1, 3),
            shininess=np.array(payload["shininess"]),
            view_direction=np.array(payload["view_direction"]),
        )
        return cls(
            identity=np.array(payload["identity"]),
            expression=np.array(payload["expression"]),
            albedo=np.array(payload["albedo"]),
            specular=np.array(payload["specular"]),
            color_gain=np.array(payload["color_gain"]),
            color_bias=np.array(payload["color_bias"]),
            rotation=np.array(payload["rotation"]),
            translation=np.array(payload["translation"]),
            sh=ShCoefficients(np.array(payload["sh"])),
            stage=stage,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "CoarseParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Model evaluation

def eval_geometry(model: LinearFaceModel, identity: np.ndarray,
                  expression: np.ndarray) -> np.ndarray:
    identity = _coeffs(identity, NUM_IDENTITY, "identity")
    expression = _coeffs(expression, NUM_EXPRESSION, "expression")
    offset = np.einsum("dk,k->d", model.basis_identity, identity)
    offset += np.einsum("dk,k->d", model.basis_expression, expression)
    return model.mean_geometry + offset.reshape(-1, 3)


def eval_diffuse_albedo(model: LinearFaceModel, albedo: np.ndarray,
                        color_gain: np.ndarray, color_bias: np.ndarray) -> TextureMap:
    """Diffuse albedo with the skin-tone adjustment applied to the whole map.

    Gain and bias act per channel on mean + basis offset together, so the
    adjustment can retint the model away from its prior mean color. Values may
    leave [0, 1]; clamping happens only at image export.
    """
    albedo = _coeffs(albedo, NUM_ALBEDO, "albedo")
    gain = _coeffs(color_gain, 3, "color_gain")
    bias = _coeffs(color_bias, 3, "color_bias")
    core = model.mean_diffuse.data + np.einsum(
        "dk,k->d", model.basis_diffuse, albedo).reshape(model.mean_diffuse.shape)
    return TextureMap(core * gain[None, None, :] + bias[None, None, :])


def eval_specular_albedo(model: LinearFaceModel, specular: np.ndarray) -> TextureMap:
    specular = _coeffs(specular, NUM_SPECULAR, "specular")
    offset = np.einsum("dk,k->d", model.basis_specular, specular)
    return TextureMap(model.mean_specular.data + offset.reshape(model.mean_specular.shape))


def _coeffs(values, size: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size != size:
        raise ParameterError(f"{name} must have {size} entries, got {arr.size}")
    return arr


# ---------------------------------------------------------------------------
# Normals

def vertex_normals(positions: np.ndarray, topology: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals; vertices with no support get (0, 0, 1)."""
    positions = np.asarray(positions, dtype=np.float64)
    topology = np.asarray(topology, dtype=np.int64)
    if topology.min(initial=0) < 0 or topology.max(initial=-1) >= positions.shape[0]:
        raise ParameterError("topology indexes a missing vertex")
    i0, i1, i2 = topology[:, 0], topology[:, 1], topology[:, 2]
    cross = np.cross(positions[i1] - positions[i0], positions[i2] - positions[i0])
    acc = np.zeros_like(positions)
    np.add.at(acc, i0, cross)
    np.add.at(acc, i1, cross)
    np.add.at(acc, i2, cross)
    norms = np.linalg.norm(acc, axis=1)
    out = np.tile(np.array([0.0, 0.0, 1.0]), (positions.shape[0], 1))
    supported = norms > 1e-12
    out[supported] = acc[supported] / norms[supported, None]
    return out


@dataclass(frozen=True)
class RasterTable:
    """Fixed pixel-to-triangle assignment for one UV layout and resolution."""

    face_index: np.ndarray   # (H, W) int64, -1 where uncovered
    barycentric: np.ndarray  # (H, W, 3)

    @property
    def covered(self) -> np.ndarray:
        return self.face_index >= 0

    def mask(self) -> UvMask:
        return UvMask(self.covered.astype(np.float64))


def uv_raster_table(topology: np.ndarray, uv_coords: np.ndarray,
                    resolution: int) -> RasterTable:
    """Rasterize UV triangles over pixel centers (x + 0.5)/W, (y + 0.5)/H.

    Later triangles overwrite earlier ones on shared edges, so the result is
    deterministic for a fixed topology order. Zero-area UV triangles are
    skipped.
    """
    topology = np.asarray(topology, dtype=np.int64)
    uv = np.asarray(uv_coords, dtype=np.float64)
    h = w = int(resolution)
    face_index = np.full((h, w), -1, dtype=np.int64)
    bary = np.zeros((h, w, 3), dtype=np.float64)
    px = (np.arange(w) + 0.5) / w
    py = (np.arange(h) + 0.5) / h
    for f, (a, b, c) in enumerate(topology):
        ua, ub, uc = uv[a], uv[b], uv[c]
        det = (ub[0] - ua[0]) * (uc[1] - ua[1]) - (uc[0] - ua[0]) * (ub[1] - ua[1])
        if abs(det) < 1e-14:
            continue
        lo_x = np.searchsorted(px, min(ua[0], ub[0], uc[0]), side="left")
        hi_x = np.searchsorted(px, max(ua[0], ub[0], uc[0]), side="right")
        lo_y = np.searchsorted(py, min(ua[1], ub[1], uc[1]), side="left")
        hi_y = np.searchsorted(py, max(ua[1], ub[1], uc[1]), side="right")
        if lo_x >= hi_x or lo_y >= hi_y:
            continue
        gx, gy = np.meshgrid(px[lo_x:hi_x], py[lo_y:hi_y])
        dx = gx - ua[0]
        dy = gy - ua[1]
        wb = ((uc[1] - ua[1]) * dx - (uc[0] - ua[0]) * dy) / det
        wc = (-(ub[1] - ua[1]) * dx + (ub[0] - ua[0]) * dy) / det
        wa = 1.0 - wb - wc
        inside = (wa >= -1e-12) & (wb >= -1e-12) & (wc >= -1e-12)
        if not inside.any():
            continue
        ys, xs = np.nonzero(inside)
        face_index[lo_y + ys, lo_x + xs] = f
        bary[lo_y + ys, lo_x + xs, 0] = wa[ys, xs]
        bary[lo_y + ys, lo_x + xs, 1] = wb[ys, xs]
        bary[lo_y + ys, lo_x + xs, 2] = wc[ys, xs]
    return RasterTable(face_index=face_index, barycentric=bary)


def blend_vertex_normals(table: RasterTable, topology: np.ndarray,
                         normals: np.ndarray) -> np.ndarray:
    """Barycentric-interpolate vertex normals through a raster table and
    renormalize per pixel; uncovered pixels get (0, 0, 1)."""
    h, w = table.face_index.shape
    out = np.tile(np.array([0.0, 0.0, 1.0]), (h, w, 1))
    covered = table.covered
    faces = table.face_index[covered]
    weights = table.barycentric[covered]
    verts = topology[faces]
    blended = np.einsum("pk,pkd->pd", weights, normals[verts])
    norms = np.linalg.norm(blended, axis=1)
    safe = norms > 1e-12
    blended[safe] /= norms[safe, None]
    blended[~safe] = (0.0, 0.0, 1.0)
    out[covered] = blended
    return out


def rasterize_normals_to_uv(positions: np.ndarray, topology: np.ndarray,
                            uv_coords: np.ndarray, resolution: int) -> tuple:
    """UV-space normal map plus its coverage mask."""
    table = uv_raster_table(topology, uv_coords, resolution)
    normals = vertex_normals(positions, topology)
    blended = blend_vertex_normals(table, np.asarray(topology, dtype=np.int64), normals)
    return TextureMap.signed_unit(blended), table.mask()


# ---------------------------------------------------------------------------
# Pose

def rotation_matrix(angles: np.ndarray) -> np.ndarray:
    """Rz @ Ry @ Rx for Euler angles (rx, ry, rz) in radians."""
    rx, ry, rz = np.asarray(angles, dtype=np.float64).reshape(3)
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def rotation_matrix_derivs(angles: np.ndarray) -> list:
    """Derivatives of rotation_matrix with respect to each Euler angle."""
    rx, ry, rz = np.asarray(angles, dtype=np.float64).reshape(3)
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    dmx = np.array([[0, 0, 0], [0, -sx, -cx], [0, cx, -sx]])
    dmy = np.array([[-sy, 0, cy], [0, 0, 0], [-cy, 0, -sy]])
    dmz = np.array([[-sz, -cz, 0], [cz, -sz, 0], [0, 0, 0]])
    return [mz @ my @ dmx, mz @ dmy @ mx, dmz @ my @ mx]


def project_landmarks(positions: np.ndarray, landmark_indices: np.ndarray,
                      rotation: np.ndarray, translation: np.ndarray) -> np.ndarray:
    """Orthographic landmark projection: ((R p) + t).xy at unit scale."""
    positions = np.asarray(positions, dtype=np.float64)
    idx = np.asarray(landmark_indices, dtype=np.int64).reshape(-1)
    t = np.asarray(translation, dtype=np.float64).reshape(3)
    rot = rotation_matrix(rotation)
    transformed = positions[idx] @ rot.T + t[None, :]
    return transformed[:, :2]


# ---------------------------------------------------------------------------
# Synthetic model

def icosphere(subdivisions: int) -> tuple:
    """Subdivided unit icosahedron with outward-oriented faces."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        midpoint_cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint_cache:
                a = np.array(verts[i])
                b = np.array(verts[j])
                m = (a + b) / 2.0
                m /= np.linalg.norm(m)
                midpoint_cache[key] = len(verts)
                verts.append(tuple(m))
            return midpoint_cache[key]

        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def _smooth_vertex_fields(rng: np.random.Generator, points: np.ndarray,
                          columns: int, bumps: int = 10) -> np.ndarray:
    """Random smooth scalar fields over 3-D points, one column each."""
    fields = np.zeros((points.shape[0], columns))
    for k in range(columns):
        centers = rng.normal(size=(bumps, 3))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        widths = rng.uniform(0.5, 1.2, size=bumps)
        amps = rng.normal(size=bumps)
        sq = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        fields[:, k] = (amps[None, :] * np.exp(-sq / (2.0 * widths[None, :] ** 2))).sum(axis=1)
    return fields


def _smooth_uv_fields(rng: np.random.Generator, resolution: int,
                      columns: int, bumps: int = 8) -> np.ndarray:
    """Random smooth (res, res, 3) fields flattened to columns."""
    ys, xs = np.meshgrid(
        (np.arange(resolution) + 0.5) / resolution,
        (np.arange(resolution) + 0.5) / resolution,
        indexing="ij",
    )
    fields = np.zeros((resolution * resolution * 3, columns))
    for k in range(columns):
        per_channel = []
        for _ in range(3):
            centers = rng.uniform(0.0, 1.0, size=(bumps, 2))
            widths = rng.uniform(0.15, 0.4, size=bumps)
            amps = rng.normal(size=bumps)
            sq = (ys[:, :, None] - centers[None, None, :, 1]) ** 2 \
                + (xs[:, :, None] - centers[None, None, :, 0]) ** 2
            per_channel.append((amps * np.exp(-sq / (2.0 * widths ** 2))).sum(axis=2))
        fields[:, k] = np.stack(per_channel, axis=2).reshape(-1)
    return fields


def _orthogonalize(columns: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt; rank-deficient tail columns become zero."""
    out = np.zeros_like(columns)
    q = []
    for j in range(columns.shape[1]):
        v = columns[:, j].copy()
        for u in q:
            v -= u * np.einsum("d,d->", u, v)
        norm = np.linalg.norm(v)
        if norm > 1e-10:
            u = v / norm
            q.append(u)
            out[:, j] = u * scales[j]
    return out


def synthetic_model(seed: int, vertices: int = 320, resolution: int = 64) -> LinearFaceModel:
    """Deterministic stand-in face model over an icosphere cap.

    `vertices` is a lower bound on the sphere resolution before the cap cut
    (faces whose vertices all satisfy z > 0.05 are kept, which keeps the
    planar UV unwrap injective). Basis columns are smooth random fields,
    orthogonalized with a geometrically decaying scale spectrum.
    """
    if vertices < 12:
        raise ParameterError("need at least 12 vertices")
    subdivisions = 0
    while 10 * 4 ** subdivisions + 2 < vertices:
        subdivisions += 1
    verts, faces = icosphere(subdivisions)
    keep_face = np.all(verts[faces][:, :, 2] > 0.05, axis=1)
    faces = faces[keep_face]
    used = np.unique(faces)
    remap = np.full(verts.shape[0], -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    verts = verts[used]
    faces = remap[faces]

    uv = 0.5 + 0.45 * verts[:, :2]
    rng = np.random.default_rng(seed)

    # three smooth scalar fields per column form a smooth displacement field
    id_fields = _smooth_vertex_fields(rng, verts, NUM_IDENTITY * 3)
    id_cols = id_fields.reshape(verts.shape[0], NUM_IDENTITY, 3).transpose(0, 2, 1)
    id_cols = id_cols.reshape(verts.shape[0] * 3, NUM_IDENTITY)
    ex_fields = _smooth_vertex_fields(rng, verts, NUM_EXPRESSION * 3)
    ex_cols = ex_fields.reshape(verts.shape[0], NUM_EXPRESSION, 3).transpose(0, 2, 1)
    ex_cols = ex_cols.reshape(verts.shape[0] * 3, NUM_EXPRESSION)

    geo_scales = 0.08 * 0.98 ** np.arange(NUM_IDENTITY)
    ex_scales = 0.05 * 0.98 ** np.arange(NUM_EXPRESSION)
    basis_identity = _orthogonalize(id_cols, geo_scales)
    basis_expression = _orthogonalize(ex_cols, ex_scales)

    diff_cols = _smooth_uv_fields(rng, resolution, NUM_ALBEDO)
    spec_cols = _smooth_uv_fields(rng, resolution, NUM_SPECULAR)
    tex_scales = 0.6 * 0.98 ** np.arange(NUM_ALBEDO)
    basis_diffuse = _orthogonalize(diff_cols, tex_scales)
    basis_specular = _orthogonalize(spec_cols, 0.5 * tex_scales)

    base_tone = np.array([0.8, 0.6, 0.5])
    variation = _smooth_uv_fields(rng, resolution, 1)[:, 0].reshape(resolution, resolution, 3)
    variation = 0.08 * variation / max(np.abs(variation).max(), 1e-9)
    mean_diffuse = np.clip(base_tone[None, None, :] + variation, 0.05, 0.95)
    spec_var = _smooth_uv_fields(rng, resolution, 1)[:, 0].reshape(resolution, resolution, 3)
    spec_var = 0.05 * spec_var / max(np.abs(spec_var).max(), 1e-9)
    mean_specular = np.clip(0.2 + spec_var, 0.0, 1.0)

    order = np.lexsort((np.arctan2(verts[:, 1], verts[:, 0]), -verts[:, 2]))
    stride = max(1, verts.shape[0] // 8)
    landmark_indices = order[::stride][:8]

    return LinearFaceModel(
        mean_geometry=verts,
        mean_diffuse=TextureMap(mean_diffuse),
        mean_specular=TextureMap(mean_specular),
        basis_identity=basis_identity,
        basis_expression=basis_expression,
        basis_diffuse=basis_diffuse,
        basis_specular=basis_specular,
        topology=faces,
        uv_coords=np.clip(uv, 0.0, 1.0),
        landmark_indices=landmark_indices,
    )


# ---------------------------------------------------------------------------
# Container I/O

def save_model(model: LinearFaceModel, path) -> None:
    write_container(path, MODEL_MAGIC, {
        "mean_geometry": model.mean_geometry,
        "mean_diffuse": model.mean_diffuse.data,
        "mean_specular": model.mean_specular.data,
        "basis_identity": model.basis_identity,
        "basis_expression": model.basis_expression,
        "basis_diffuse": model.basis_diffuse,
        "basis_specular": model.basis_specular,
        "topology": model.topology,
        "uv_coords": model.uv_coords,
        "landmark_indices": model.landmark_indices,
    })


def load_model(path) -> LinearFaceModel:
    arrays = read_container(path, MODEL_MAGIC)
    return LinearFaceModel(
        mean_geometry=arrays["mean_geometry"],
        mean_diffuse=TextureMap(arrays["mean_diffuse"]),
        mean_specular=TextureMap(arrays["mean_specular"]),
        basis_identity=arrays["basis_identity"],
        basis_expression=arrays["basis_expression"],
        basis_diffuse=arrays["basis_diffuse"],
        basis_specular=arrays["basis_specular"],
        topology=arrays["topology"],
        uv_coords=arrays["uv_coords"],
        landmark_indices=arrays["landmark_indices"],
    )


def default_stage() -> VirtualLightStage:
    return VirtualLightStage.default()


__all__ = [
    "LinearFaceModel", "CoarseParams", "RasterTable",
    "eval_geometry", "eval_diffuse_albedo", "eval_specular_albedo",
    "vertex_normals", "uv_raster_table", "blend_vertex_normals",
    "rasterize_normals_to_uv", "rotation_matrix", "rotation_matrix_derivs",
    "project_landmarks", "icosphere", "synthetic_model",
    "save_model", "load_model", "default_stage",
    "icosahedral_directions",
]
