"""Deterministic synthetic scenes for tests, demos and the bundled pipeline.

A scene bundles a synthetic face model, ground-truth coarse parameters, the
UV target rendered from them, visibility masks (full coverage and a version
with an occlusion hole), projected landmarks, face regions, ground-truth
refined materials, and a makeup composite built with a known lip-paint layer.
Everything is a pure function of the seed, resolution and vertex budget.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coarsefit import render_coarse
from .facemodel import (CoarseParams, LinearFaceModel, eval_diffuse_albedo,
                        eval_geometry, eval_specular_albedo, project_landmarks,
                        rasterize_normals_to_uv, save_model, synthetic_model,
                        uv_raster_table)
from .fileio import write_landmarks_csv, write_mask, write_texture
from .makeup import MakeupLayers, alpha_blend
from .refine import RefinedMaterials, gray, render_materials
from .shading import (SH_C0, ShCoefficients, VirtualLightStage,
                      icosahedral_directions, specular_shading)
from .texture import FaceRegions, TextureMap, UvMask


@dataclass(frozen=True)
class SyntheticScene:
    model: LinearFaceModel
    params_true: CoarseParams
    target: TextureMap
    mask: UvMask
    mask_occluded: UvMask
    landmarks: np.ndarray
    regions: FaceRegions
    materials_true: RefinedMaterials
    refined_target: TextureMap
    makeup_layers: MakeupLayers
    makeup_diffuse: TextureMap


def true_coarse_params(seed: int, boldness: float = 1.0) -> CoarseParams:
    """Moderate, recoverable ground-truth parameters."""
    rng = np.random.default_rng(seed)
    sh = np.zeros((9, 3))
    sh[0, :] = (0.8 / SH_C0) * (1.0 + 0.08 * boldness * rng.standard_normal(3))
    sh[1:, :] = 0.22 * boldness * rng.standard_normal((8, 3))
    intensities = np.zeros(20)
    lit = rng.choice(20, size=3, replace=False)
    intensities[lit] = rng.uniform(0.15, 0.35, size=3)
    stage = VirtualLightStage(
        intensities=intensities,
        directions=icosahedral_directions(),
        shininess=np.full(20, 200.0),
    )
    return CoarseParams(
        identity=0.35 * boldness * rng.standard_normal(200),
        expression=0.25 * boldness * rng.standard_normal(100),
        albedo=0.5 * boldness * rng.standard_normal(100),
        specular=0.3 * boldness * rng.standard_normal(100),
        color_gain=1.0 + 0.1 * boldness * rng.standard_normal(3),
        color_bias=0.03 * boldness * rng.standard_normal(3),
        rotation=0.05 * boldness * rng.standard_normal(3),
        translation=np.array([*(0.15 * boldness * rng.standard_normal(2)), 0.0]),
        sh=ShCoefficients(sh),
        stage=stage,
    )


def _region_box(resolution: int, rows: tuple, cols: tuple) -> UvMask:
    weights = np.zeros((resolution, resolution))
    r0, r1 = (int(round(f * resolution)) for f in rows)
    c0, c1 = (int(round(f * resolution)) for f in cols)
    weights[r0:r1, c0:c1] = 1.0
    return UvMask(weights)


def make_face_regions(resolution: int, coverage: UvMask) -> FaceRegions:
    brows = _region_box(resolution, (0.26, 0.32), (0.32, 0.68))
    eyes = _region_box(resolution, (0.36, 0.44), (0.30, 0.70))
    lips = _region_box(resolution, (0.62, 0.72), (0.36, 0.64))
    skin = coverage.weights * (1.0 - brows.weights) * (1.0 - eyes.weights) \
        * (1.0 - lips.weights)
    return FaceRegions(brows=brows, eyes=eyes, lips=lips, skin=UvMask(skin))


def make_scene(seed: int = 0, resolution: int = 64, vertices: int = 320,
               boldness: float = 1.0) -> SyntheticScene:
    model = synthetic_model(seed, vertices, resolution)
    raster = uv_raster_table(model.topology, model.uv_coords, resolution)
    coverage = raster.mask()
    params = true_coarse_params(seed + 1, boldness)

    target = render_coarse(params, model, raster)
    positions = eval_geometry(model, params.identity, params.expression)
    landmarks = project_landmarks(positions, model.landmark_indices,
                                  params.rotation, params.translation)

    rng = np.random.default_rng(seed + 2)
    ys, xs = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
    cy, cx = rng.uniform(0.35, 0.65, size=2) * resolution
    radius = 0.12 * resolution
    hole = ((ys - cy) ** 2 + (xs - cx) ** 2) <= radius ** 2
    occluded = coverage.weights * (~hole)
    mask_occluded = UvMask(occluded)

    regions = make_face_regions(resolution, coverage)

    normals, _ = rasterize_normals_to_uv(positions, model.topology,
                                         model.uv_coords, resolution)
    diffuse_true = TextureMap.unit(np.clip(
        eval_diffuse_albedo(model, params.albedo, params.color_gain,
                            params.color_bias).data, 0.0, 1.0))
    spec_albedo = eval_specular_albedo(model, params.specular)
    response = specular_shading(normals, params.stage, channels=1)
    spec_recon = gray(TextureMap(np.clip(spec_albedo.data, 0.0, None)
                                 * response.data))
    materials_true = RefinedMaterials(
        diffuse_albedo=diffuse_true,
        normals=normals,
        specular=TextureMap(np.maximum(spec_recon.data, 0.0)),
        sh=params.sh,
    )
    refined_target = render_materials(materials_true)

    lip_alpha = 1.0 - regions.lips.weights[:, :, None]
    makeup_layers = MakeupLayers(
        bare_skin=diffuse_true,
        makeup_color=TextureMap.unit(np.tile(np.array([0.55, 0.06, 0.12]),
                                             (resolution, resolution, 1))),
        alpha=TextureMap.unit(lip_alpha),
    )
    makeup_diffuse = alpha_blend(makeup_layers)

    return SyntheticScene(
        model=model,
        params_true=params,
        target=target,
        mask=coverage,
        mask_occluded=mask_occluded,
        landmarks=landmarks,
        regions=regions,
        materials_true=materials_true,
        refined_target=refined_target,
        makeup_layers=makeup_layers,
        makeup_diffuse=makeup_diffuse,
    )


def write_scene(scene: SyntheticScene, out_dir) -> None:
    """Materialize a scene as the file set the CLI commands consume."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(scene.model, out / "model.flm")
    scene.params_true.save(out / "params_true.json")
    write_texture(scene.target, out / "target.pfm")
    write_texture(scene.refined_target, out / "refined_target.pfm")
    write_mask(scene.mask, out / "mask.png")
    write_mask(scene.mask_occluded, out / "mask_occluded.png")
    write_landmarks_csv(scene.landmarks, out / "landmarks.csv")
    write_texture(scene.makeup_diffuse, out / "makeup_diffuse.pfm")
    regions_dir = out / "regions"
    regions_dir.mkdir(exist_ok=True)
    for name, mask in scene.regions.as_dict().items():
        write_mask(mask, regions_dir / f"{name}.png")
