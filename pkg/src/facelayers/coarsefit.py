"""Coarse material fitting: first-order optimization of the full parameter
vector (coefficients, pose, skin tone, SH lighting and the specular light
stage) against an unwrapped UV target texture and optional 2-D landmarks.

The loss is

    photo * masked mean L1(render, target)
  + landmark * mean squared landmark distance
  + skin * L1 between the masked target mean color and the albedo mean color
  + reg * (quadratic coefficient and light-stage penalties)

with the render composed in UV space from the model albedos, SH diffuse
shading of the rasterized normals, and the Blinn-Phong stage response.
Gradients are written out analytically for every block, including the chain
through vertex normals, barycentric interpolation and both per-pixel and
per-vertex renormalizations; the test suite checks them against central
finite differences.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, ParameterError
from .facemodel import (CoarseParams, LinearFaceModel, RasterTable,
                        rotation_matrix, rotation_matrix_derivs, uv_raster_table)
from .optim import AdamState, adam_step
from .shading import (ShCoefficients, VirtualLightStage, _safe_power,
                      sh_basis_array, sh_basis_jacobian)
from .texture import TextureMap, UvMask, l1_sign

MIN_SHININESS = 1e-2


@dataclass(frozen=True)
class CoarseLossWeights:
    """Balance weights; the regularizer sub-weights scale quadratic penalties
    on the coefficient blocks and the light stage."""

    photo: float = 19.2
    landmark: float = 5.0
    skin: float = 3.0
    reg: float = 3e-4
    identity: float = 1.0
    expression: float = 0.8
    albedo: float = 1.7e-2
    specular: float = 1.0
    lights: float = 1.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ParameterError(f"weight '{name}' must be finite and non-negative")


@dataclass
class CoarseFitConfig:
    iterations: int = 1000
    learning_rate: float = 1e-2
    seed: int = 0
    skin_tone: bool = True
    weights: CoarseLossWeights = field(default_factory=CoarseLossWeights)


def with_skin_tone(config: CoarseFitConfig, enabled: bool) -> CoarseFitConfig:
    """Toggle skin-tone adjustment. Disabled fits freeze gain at 1 and bias at
    0 and treat the skin weight as zero; the parameter layout is unchanged."""
    return replace(config, skin_tone=enabled)


@dataclass
class CoarseLossResult:
    total: float
    photo: float
    landmark: float
    skin: float
    reg: float
    grads: dict


def initial_coarse_params(model: LinearFaceModel) -> CoarseParams:
    """All coefficients zero, neutral skin tone, a gray ambient environment
    giving initial shading of 0.8, and a dim stage with shininess 200."""
    return CoarseParams(
        identity=np.zeros(model.basis_identity.shape[1]),
        expression=np.zeros(model.basis_expression.shape[1]),
        albedo=np.zeros(model.basis_diffuse.shape[1]),
        specular=np.zeros(model.basis_specular.shape[1]),
        color_gain=np.ones(3),
        color_bias=np.zeros(3),
        rotation=np.zeros(3),
        translation=np.zeros(3),
        sh=ShCoefficients.gray_ambient(0.8),
        stage=VirtualLightStage.default(intensity=0.05, shininess=200.0),
    )


def params_to_dict(params: CoarseParams) -> dict:
    return {
        "identity": params.identity.copy(),
        "expression": params.expression.copy(),
        "albedo": params.albedo.copy(),
        "specular": params.specular.copy(),
        "color_gain": params.color_gain.copy(),
        "color_bias": params.color_bias.copy(),
        "rotation": params.rotation.copy(),
        "translation": params.translation.copy(),
        "sh": params.sh.values.copy(),
        "intensities": params.stage.intensities.copy(),
        "directions": params.stage.directions.copy(),
        "shininess": params.stage.shininess.copy(),
    }


def dict_to_params(pd: dict, view_direction, validate_stage: bool = True) -> CoarseParams:
    return CoarseParams(
        identity=pd["identity"],
        expression=pd["expression"],
        albedo=pd["albedo"],
        specular=pd["specular"],
        color_gain=pd["color_gain"],
        color_bias=pd["color_bias"],
        rotation=pd["rotation"],
        translation=pd["translation"],
        sh=ShCoefficients(pd["sh"]),
        stage=VirtualLightStage(
            intensities=pd["intensities"],
            directions=pd["directions"],
            shininess=pd["shininess"],
            view_direction=view_direction,
            validate=validate_stage,
        ),
    )


def render_coarse(params: CoarseParams, model: LinearFaceModel,
                  raster: RasterTable | None = None) -> TextureMap:
    """UV-space render of the coarse parameters (albedo * SH shading + specular)."""
    pd = params_to_dict(params)
    fwd = _forward(pd, model, params.stage.view_direction, raster)
    return TextureMap(fwd["render"])


def coarse_loss(params: CoarseParams, model: LinearFaceModel, target: TextureMap,
                mask: UvMask, landmarks: np.ndarray | None = None,
                weights: CoarseLossWeights | None = None,
                raster: RasterTable | None = None) -> CoarseLossResult:
    """Loss and analytic gradient for every parameter block."""
    weights = weights or CoarseLossWeights()
    pd = params_to_dict(params)
    return _loss_and_grads(pd, model, target, mask, landmarks, weights,
                           params.stage.view_direction, raster)


def _forward(pd: dict, model: LinearFaceModel, view: np.ndarray,
             raster: RasterTable | None) -> dict:
    if raster is None:
        raster = uv_raster_table(model.topology, model.uv_coords,
                                 model.mean_diffuse.height)
    topo = model.topology
    i0, i1, i2 = topo[:, 0], topo[:, 1], topo[:, 2]

    offsets = np.einsum("dk,k->d", model.basis_identity, pd["identity"])
    offsets += np.einsum("dk,k->d", model.basis_expression, pd["expression"])
    positions = model.mean_geometry + offsets.reshape(-1, 3)

    e1 = positions[i1] - positions[i0]
    e2 = positions[i2] - positions[i0]
    face_cross = np.cross(e1, e2)
    acc = np.zeros_like(positions)
    np.add.at(acc, i0, face_cross)
    np.add.at(acc, i1, face_cross)
    np.add.at(acc, i2, face_cross)
    acc_norm = np.linalg.norm(acc, axis=1)
    supported = acc_norm > 1e-12
    nv = np.tile(np.array([0.0, 0.0, 1.0]), (positions.shape[0], 1))
    nv[supported] = acc[supported] / acc_norm[supported, None]

    covered = raster.covered
    faces_pix = raster.face_index[covered]
    bary_pix = raster.barycentric[covered]
    tri_pix = topo[faces_pix]
    blended = np.einsum("pk,pkd->pd", bary_pix, nv[tri_pix])
    blended_norm = np.linalg.norm(blended, axis=1)
    pix_safe = blended_norm > 1e-12
    n_cov = np.tile(np.array([0.0, 0.0, 1.0]), (blended.shape[0], 1))
    n_cov[pix_safe] = blended[pix_safe] / blended_norm[pix_safe, None]
    h_img, w_img = covered.shape
    normal_map = np.tile(np.array([0.0, 0.0, 1.0]), (h_img, w_img, 1))
    normal_map[covered] = n_cov

    basis = sh_basis_array(normal_map)
    pre = np.einsum("hwk,kc->hwc", basis, pd["sh"])
    shading = np.maximum(pre, 0.0)

    raw_half = pd["directions"] + view[None, :]
    half_norm = np.linalg.norm(raw_half, axis=1)
    alive = half_norm > 1e-12
    half = raw_half / np.maximum(half_norm, 1e-12)[:, None]
    dots = np.einsum("hwd,jd->hwj", normal_map, half)
    clamped = np.maximum(dots, 0.0)
    powed = _safe_power(clamped, pd["shininess"][None, None, :])
    powed = np.where(alive[None, None, :], powed, 0.0)
    stage_response = np.einsum("hwj,j->hw", powed, pd["intensities"])

    core = model.mean_diffuse.data + np.einsum(
        "dk,k->d", model.basis_diffuse, pd["albedo"]).reshape(model.mean_diffuse.shape)
    diffuse = core * pd["color_gain"][None, None, :] + pd["color_bias"][None, None, :]
    spec_albedo = model.mean_specular.data + np.einsum(
        "dk,k->d", model.basis_specular, pd["specular"]).reshape(model.mean_specular.shape)

    render_pre = diffuse * shading + spec_albedo * stage_response[:, :, None]
    render = np.maximum(render_pre, 0.0)

    return {
        "raster": raster, "positions": positions, "e1": e1, "e2": e2,
        "face_cross": face_cross, "acc_norm": acc_norm, "supported": supported,
        "nv": nv, "covered": covered, "tri_pix": tri_pix, "bary_pix": bary_pix,
        "blended_norm": blended_norm, "pix_safe": pix_safe, "n_cov": n_cov,
        "normal_map": normal_map, "basis": basis, "pre": pre, "shading": shading,
        "half": half, "half_norm": half_norm, "alive": alive, "dots": dots,
        "clamped": clamped, "powed": powed, "stage_response": stage_response,
        "core": core, "diffuse": diffuse, "spec_albedo": spec_albedo,
        "render_pre": render_pre, "render": render,
    }


def _loss_and_grads(pd: dict, model: LinearFaceModel, target: TextureMap,
                    mask: UvMask, landmarks: np.ndarray | None,
                    weights: CoarseLossWeights, view: np.ndarray,
                    raster: RasterTable | None) -> CoarseLossResult:
    if target.shape != model.mean_diffuse.shape:
        raise ParameterError("target resolution does not match the model textures")
    if not mask.matches(target):
        raise ParameterError("mask resolution does not match the target")
    w = mask.weights
    wsum = w.sum()
    if wsum <= 0:
        raise ParameterError("mask has no weight: photo loss undefined")

    fwd = _forward(pd, model, view, raster)
    render = fwd["render"]
    diffuse = fwd["diffuse"]
    t_arr = target.data
    n_pixels = t_arr.shape[0] * t_arr.shape[1]

    residual = render - t_arr
    photo = float((w[:, :, None] * np.abs(residual)).sum() / (3.0 * wsum))

    target_mean = (w[:, :, None] * t_arr).sum(axis=(0, 1)) / wsum
    albedo_mean = diffuse.mean(axis=(0, 1))
    skin = float(np.abs(albedo_mean - target_mean).sum() / 3.0)

    if landmarks is not None:
        landmarks = np.asarray(landmarks, dtype=np.float64).reshape(-1, 2)
        if landmarks.shape[0] != model.landmark_indices.size:
            raise ParameterError("landmark count does not match the model")
        rot = rotation_matrix(pd["rotation"])
        lm_pos = fwd["positions"][model.landmark_indices]
        projected = lm_pos @ rot.T + pd["translation"][None, :]
        diff = projected[:, :2] - landmarks
        lan = float((diff ** 2).sum() / landmarks.shape[0])
    else:
        lan = 0.0

    reg = (weights.identity * (pd["identity"] ** 2).sum()
           + weights.expression * (pd["expression"] ** 2).sum()
           + weights.albedo * (pd["albedo"] ** 2).sum()
           + weights.specular * (pd["specular"] ** 2).sum()
           + weights.lights * ((pd["intensities"] ** 2).sum()
                               + (pd["directions"] ** 2).sum()))
    reg = float(reg)

    total = (weights.photo * photo + weights.landmark * lan
             + weights.skin * skin + weights.reg * reg)

    # ----- backward -----
    g_render = (weights.photo * w[:, :, None] * l1_sign(residual) / (3.0 * wsum))
    g_render = g_render * (fwd["render_pre"] > 0.0)

    g_diffuse = g_render * fwd["shading"]
    g_shading = g_render * diffuse
    g_spec_albedo = g_render * fwd["stage_response"][:, :, None]
    g_stage_response = (g_render * fwd["spec_albedo"]).sum(axis=2)

    g_diffuse += (weights.skin * l1_sign(albedo_mean - target_mean)[None, None, :]
                  / (3.0 * n_pixels))

    g_pre = g_shading * (fwd["pre"] > 0.0)
    g_sh = np.einsum("hwk,hwc->kc", fwd["basis"], g_pre)
    tmp = np.einsum("hwc,kc->hwk", g_pre, pd["sh"])
    g_normal = np.einsum("hwk,hwkd->hwd", tmp, sh_basis_jacobian(fwd["normal_map"]))

    powed = fwd["powed"]
    clamped = fwd["clamped"]
    g_intensities = np.einsum("hwj,hw->j", powed, g_stage_response)
    pow_minus = _safe_power(clamped, (pd["shininess"] - 1.0)[None, None, :])
    pow_minus = np.where(fwd["alive"][None, None, :], pow_minus, 0.0)
    g_dot = (g_stage_response[:, :, None]
             * (pd["intensities"] * pd["shininess"])[None, None, :] * pow_minus)
    g_dot = np.where(clamped > 0.0, g_dot, 0.0)
    g_normal += np.einsum("hwj,jd->hwd", g_dot, fwd["half"])
    g_half = np.einsum("hwj,hwd->jd", g_dot, fwd["normal_map"])
    log_term = np.zeros_like(clamped)
    positive = clamped > 0.0
    np.log(clamped, out=log_term, where=positive)
    g_shininess = np.einsum("hwj,hw->j", powed * log_term,
                            g_stage_response) * pd["intensities"]
    half = fwd["half"]
    g_dirs = (g_half - half * np.einsum("jd,jd->j", half, g_half)[:, None])
    g_dirs /= np.maximum(fwd["half_norm"], 1e-12)[:, None]
    g_dirs = np.where(fwd["alive"][:, None], g_dirs, 0.0)

    # normals chain back to vertex positions
    covered = fwd["covered"]
    g_n_cov = g_normal[covered]
    n_cov = fwd["n_cov"]
    g_blended = g_n_cov - n_cov * np.einsum("pd,pd->p", n_cov, g_n_cov)[:, None]
    g_blended /= np.maximum(fwd["blended_norm"], 1e-12)[:, None]
    g_blended = np.where(fwd["pix_safe"][:, None], g_blended, 0.0)

    g_nv = np.zeros_like(fwd["nv"])
    np.add.at(g_nv, fwd["tri_pix"], fwd["bary_pix"][:, :, None] * g_blended[:, None, :])

    nv = fwd["nv"]
    g_acc = g_nv - nv * np.einsum("vd,vd->v", nv, g_nv)[:, None]
    g_acc /= np.maximum(fwd["acc_norm"], 1e-12)[:, None]
    g_acc = np.where(fwd["supported"][:, None], g_acc, 0.0)

    topo = model.topology
    i0, i1, i2 = topo[:, 0], topo[:, 1], topo[:, 2]
    g_cross = g_acc[i0] + g_acc[i1] + g_acc[i2]
    g_e1 = np.cross(fwd["e2"], g_cross)
    g_e2 = np.cross(g_cross, fwd["e1"])
    g_positions = np.zeros_like(fwd["positions"])
    np.add.at(g_positions, i1, g_e1)
    np.add.at(g_positions, i2, g_e2)
    np.add.at(g_positions, i0, -g_e1 - g_e2)

    if landmarks is not None:
        g_proj = weights.landmark * 2.0 * diff / landmarks.shape[0]
        g_translation = np.array([g_proj[:, 0].sum(), g_proj[:, 1].sum(), 0.0])
        g_rotation = np.zeros(3)
        for i, d_rot in enumerate(rotation_matrix_derivs(pd["rotation"])):
            g_rotation[i] = np.einsum("lk,lk->", g_proj, (lm_pos @ d_rot.T)[:, :2])
        np.add.at(g_positions, model.landmark_indices, g_proj @ rot[:2, :])
    else:
        g_translation = np.zeros(3)
        g_rotation = np.zeros(3)

    flat_pos = g_positions.reshape(-1)
    g_identity = np.einsum("dk,d->k", model.basis_identity, flat_pos)
    g_expression = np.einsum("dk,d->k", model.basis_expression, flat_pos)

    g_core = g_diffuse * pd["color_gain"][None, None, :]
    g_albedo = np.einsum("dk,d->k", model.basis_diffuse, g_core.reshape(-1))
    g_gain = (g_diffuse * fwd["core"]).sum(axis=(0, 1))
    g_bias = g_diffuse.sum(axis=(0, 1))
    g_specular = np.einsum("dk,d->k", model.basis_specular, g_spec_albedo.reshape(-1))

    g_identity += weights.reg * weights.identity * 2.0 * pd["identity"]
    g_expression += weights.reg * weights.expression * 2.0 * pd["expression"]
    g_albedo += weights.reg * weights.albedo * 2.0 * pd["albedo"]
    g_specular += weights.reg * weights.specular * 2.0 * pd["specular"]
    g_intensities += weights.reg * weights.lights * 2.0 * pd["intensities"]
    g_dirs += weights.reg * weights.lights * 2.0 * pd["directions"]

    grads = {
        "identity": g_identity,
        "expression": g_expression,
        "albedo": g_albedo,
        "specular": g_specular,
        "color_gain": g_gain,
        "color_bias": g_bias,
        "rotation": g_rotation,
        "translation": g_translation,
        "sh": g_sh,
        "intensities": g_intensities,
        "directions": g_dirs,
        "shininess": g_shininess,
    }
    return CoarseLossResult(
        total=float(total),
        photo=float(weights.photo * photo),
        landmark=float(weights.landmark * lan),
        skin=float(weights.skin * skin),
        reg=float(weights.reg * reg),
        grads=grads,
    )


def _project(pd: dict) -> dict:
    dirs = pd["directions"]
    norms = np.linalg.norm(dirs, axis=1)
    safe = norms > 1e-12
    dirs = np.where(safe[:, None], dirs / np.maximum(norms, 1e-12)[:, None], dirs)
    pd["directions"] = dirs
    pd["intensities"] = np.maximum(pd["intensities"], 0.0)
    pd["shininess"] = np.maximum(pd["shininess"], MIN_SHININESS)
    return pd


def fit_coarse(model: LinearFaceModel, target: TextureMap, mask: UvMask,
               landmarks: np.ndarray | None = None,
               config: CoarseFitConfig | None = None) -> tuple:
    """Fit coarse parameters from the standard initialization.

    Returns (CoarseParams, trace) where trace rows are
    (iteration, total, photo, landmark, skin, reg) and row 0 is the loss at
    initialization. Without landmarks the pose is unidentifiable from the
    UV-space photo loss, so rotation and translation stay frozen at zero.
    If the loss turns non-finite the fit restarts once from the initialization
    at half the learning rate, then aborts with a diagnostic.
    """
    config = config or CoarseFitConfig()
    weights = config.weights
    if not config.skin_tone:
        weights = replace(weights, skin=0.0)
    raster = uv_raster_table(model.topology, model.uv_coords, model.mean_diffuse.height)
    init = initial_coarse_params(model)
    view = init.stage.view_direction

    frozen = []
    if not config.skin_tone:
        frozen += ["color_gain", "color_bias"]
    if landmarks is None:
        frozen += ["rotation", "translation"]

    learning_rate = config.learning_rate
    for attempt in range(2):
        pd = params_to_dict(init)
        state = AdamState.for_params(pd, learning_rate)
        trace = []
        diverged_at = None
        result = _loss_and_grads(pd, model, target, mask, landmarks, weights, view, raster)
        if not np.isfinite(result.total):
            diverged_at = 0
        else:
            trace.append((0, result.total, result.photo, result.landmark,
                          result.skin, result.reg))
            for step in range(1, config.iterations + 1):
                pd = adam_step(state, pd, result.grads, frozen=tuple(frozen))
                pd = _project(pd)
                result = _loss_and_grads(pd, model, target, mask, landmarks,
                                         weights, view, raster)
                if not np.isfinite(result.total):
                    diverged_at = step
                    break
                trace.append((step, result.total, result.photo, result.landmark,
                              result.skin, result.reg))
        if diverged_at is None:
            return dict_to_params(pd, view), trace
        learning_rate *= 0.5
    raise DivergenceError(
        f"coarse fit diverged (non-finite loss at iteration {diverged_at}, "
        f"after halving the learning rate once)")


def fit_albedo_prior(model: LinearFaceModel, texture: TextureMap,
                     iterations: int = 300, learning_rate: float = 1e-2,
                     coeff_penalty: float = 1e-3) -> TextureMap:
    """Project a diffuse texture onto the model's albedo subspace.

    Fits the albedo coefficients plus skin-tone gain and bias under mean L1
    with a small quadratic coefficient penalty. The result serves as the
    makeup-free bare-skin prior for layer extraction.
    """
    if texture.shape != model.mean_diffuse.shape:
        raise ParameterError("texture resolution does not match the model")
    pd = {
        "albedo": np.zeros(model.basis_diffuse.shape[1]),
        "color_gain": np.ones(3),
        "color_bias": np.zeros(3),
    }
    state = AdamState.for_params(pd, learning_rate, decay_factor=0.1,
                                 decay_at=(2 * iterations) // 3)
    t_arr = texture.data
    size = t_arr.size
    for _ in range(iterations):
        core = model.mean_diffuse.data + np.einsum(
            "dk,k->d", model.basis_diffuse, pd["albedo"]).reshape(t_arr.shape)
        estimate = core * pd["color_gain"][None, None, :] + pd["color_bias"][None, None, :]
        g_est = l1_sign(estimate - t_arr) / size
        grads = {
            "albedo": np.einsum(
                "dk,d->k", model.basis_diffuse,
                (g_est * pd["color_gain"][None, None, :]).reshape(-1))
            + 2.0 * coeff_penalty * pd["albedo"],
            "color_gain": (g_est * core).sum(axis=(0, 1)),
            "color_bias": g_est.sum(axis=(0, 1)),
        }
        pd = adam_step(state, pd, grads)
    core = model.mean_diffuse.data + np.einsum(
        "dk,k->d", model.basis_diffuse, pd["albedo"]).reshape(t_arr.shape)
    estimate = core * pd["color_gain"][None, None, :] + pd["color_bias"][None, None, :]
    return TextureMap.unit(np.clip(estimate, 0.0, 1.0))
