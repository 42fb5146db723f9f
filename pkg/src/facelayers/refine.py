"""Per-pixel material refinement against a completed UV texture.

Starting from coarse priors, the refined diffuse albedo, normal map,
single-channel specular map and SH lighting are optimized so that

    render = diffuse * sh_shading(normals) + specular

matches the completed texture, with a multi-scale gradient loss standing in
for a perceptual term, total-variation smoothing, and blurred-refined-versus-
coarse prior anchors. Each optimizer step is followed by projection: the
diffuse map is clamped to [0, 1], the specular map to >= 0, and normals are
renormalized per pixel.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ParameterError
from .optim import AdamState, adam_step
from .shading import ShCoefficients, sh_basis_array, sh_basis_jacobian
from .texture import (TextureMap, _blur_array, _blur_array_adjoint,
                      _downsample2, _downsample2_adjoint, _total_variation_grad,
                      l1_sign, resize_bilinear)

PERCEPTUAL_SCALES = 3


@dataclass(frozen=True)
class RefineLossWeights:
    reconstruction: float = 40.0
    perceptual: float = 5.0
    total_variation: float = 10.0
    prior: float = 1.0
    prior_diffuse: float = 4.0
    prior_normal: float = 1.0
    prior_specular: float = 1.0
    prior_sh: float = 1.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ParameterError(f"weight '{name}' must be finite and non-negative")


@dataclass
class RefineConfig:
    iterations: int = 500
    learning_rate: float = 1e-2
    decay_factor: float = 0.1
    decay_at: int | None = None   # default: midpoint of the run
    blur_kernel: int = 11
    weights: RefineLossWeights = field(default_factory=RefineLossWeights)


@dataclass(frozen=True)
class RefinedMaterials:
    """Refined per-pixel materials; normals unit length, specular 1-channel."""

    diffuse_albedo: TextureMap
    normals: TextureMap
    specular: TextureMap
    sh: ShCoefficients

    def __post_init__(self):
        if self.diffuse_albedo.channels != 3 or self.normals.channels != 3:
            raise ParameterError("diffuse albedo and normals must have 3 channels")
        if self.specular.channels != 1:
            raise ParameterError("specular reconstruction must be single-channel")
        res = (self.diffuse_albedo.height, self.diffuse_albedo.width)
        for tex in (self.normals, self.specular):
            if (tex.height, tex.width) != res:
                raise ParameterError("material resolutions differ")
        if self.specular.data.min() < -1e-9:
            raise ParameterError("specular reconstruction must be non-negative")

    @property
    def resolution(self) -> tuple:
        return self.diffuse_albedo.height, self.diffuse_albedo.width


@dataclass(frozen=True)
class RefinePriors:
    """Coarse anchors, already resized to the refined resolution."""

    diffuse: TextureMap    # 3 channels
    normals: TextureMap    # 3 channels
    specular: TextureMap   # 1 channel (luminance of the coarse reconstruction)
    sh: ShCoefficients


def gray(tex: TextureMap) -> TextureMap:
    """Rec. 709 luminance of a 3-channel map."""
    if tex.channels != 3:
        raise ParameterError("gray expects a 3-channel texture")
    lum = tex.data @ np.array([0.2126, 0.7152, 0.0722])
    return TextureMap(lum[:, :, None])


def renormalize_normals(arr: np.ndarray) -> np.ndarray:
    """Per-pixel unit normalization; zero rows become (0, 0, 1). Idempotent."""
    norms = np.linalg.norm(arr, axis=2, keepdims=True)
    out = np.where(norms > 1e-12, arr / np.maximum(norms, 1e-12),
                   np.array([0.0, 0.0, 1.0]))
    return out


def perceptual_substitute(a: TextureMap, b: TextureMap) -> float:
    """Multi-scale forward-difference gradient distance.

    Mean L1 between the gradient maps of the two images, summed over three
    dyadic scales. Blind to constant offsets per scale by construction.
    """
    if a.shape != b.shape:
        raise ParameterError("perceptual inputs must share a shape")
    value, _ = _perceptual_with_grad(a.data, b.data)
    return value


def _gradient_l1(a: np.ndarray, b: np.ndarray) -> tuple:
    n = a.shape[0] * a.shape[1] * a.shape[2]
    dxa = a[:, 1:, :] - a[:, :-1, :]
    dxb = b[:, 1:, :] - b[:, :-1, :]
    dya = a[1:, :, :] - a[:-1, :, :]
    dyb = b[1:, :, :] - b[:-1, :, :]
    value = (np.abs(dxa - dxb).sum() + np.abs(dya - dyb).sum()) / n
    grad = np.zeros_like(a)
    sx = l1_sign(dxa - dxb) / n
    sy = l1_sign(dya - dyb) / n
    grad[:, 1:, :] += sx
    grad[:, :-1, :] -= sx
    grad[1:, :, :] += sy
    grad[:-1, :, :] -= sy
    return float(value), grad


def _perceptual_with_grad(a: np.ndarray, b: np.ndarray) -> tuple:
    total = 0.0
    grad_full = np.zeros_like(a)
    shapes = []
    ca, cb = a, b
    for scale in range(PERCEPTUAL_SCALES):
        value, grad = _gradient_l1(ca, cb)
        total += value
        for shape in reversed(shapes):
            grad = _downsample2_adjoint(grad, shape)
        grad_full += grad
        if ca.shape[0] < 4 or ca.shape[1] < 4:
            break
        shapes.append(ca.shape)
        ca = _downsample2(ca)
        cb = _downsample2(cb)
    return float(total), grad_full


def resize_priors(diffuse: TextureMap, normals: TextureMap, specular: TextureMap,
                  sh: ShCoefficients, height: int, width: int) -> RefinePriors:
    """Resample coarse maps to the refined resolution.

    A 3-channel specular reconstruction is converted to luminance first.
    """
    if specular.channels == 3:
        specular = gray(specular)
    return RefinePriors(
        diffuse=resize_bilinear(diffuse, height, width),
        normals=resize_bilinear(normals, height, width),
        specular=resize_bilinear(specular, height, width),
        sh=sh,
    )


def materials_from_priors(priors: RefinePriors) -> RefinedMaterials:
    """Initial refined materials: the priors themselves, made valid."""
    return RefinedMaterials(
        diffuse_albedo=TextureMap.unit(np.clip(priors.diffuse.data, 0.0, 1.0)),
        normals=TextureMap.signed_unit(renormalize_normals(priors.normals.data)),
        specular=TextureMap(np.maximum(priors.specular.data, 0.0)),
        sh=priors.sh,
    )


def priors_from_coarse(model, params, height: int, width: int) -> RefinePriors:
    """Evaluate the coarse maps for a fitted parameter set and resize them to
    the refined resolution."""
    from .facemodel import (eval_diffuse_albedo, eval_geometry,
                            eval_specular_albedo, rasterize_normals_to_uv)
    from .shading import specular_shading

    diffuse = eval_diffuse_albedo(model, params.albedo, params.color_gain,
                                  params.color_bias)
    positions = eval_geometry(model, params.identity, params.expression)
    normals, _ = rasterize_normals_to_uv(positions, model.topology,
                                         model.uv_coords, model.mean_diffuse.height)
    spec_albedo = eval_specular_albedo(model, params.specular)
    response = specular_shading(normals, params.stage, channels=1)
    spec_recon = TextureMap(np.maximum(spec_albedo.data * response.data, 0.0))
    return resize_priors(diffuse, normals, spec_recon, params.sh, height, width)


@dataclass
class RefineLossResult:
    total: float
    reconstruction: float
    perceptual: float
    total_variation: float
    prior: float
    grads: dict


def compose_materials(diffuse: np.ndarray, normals: np.ndarray,
                      specular: np.ndarray, sh: np.ndarray) -> tuple:
    """Render from raw material arrays; returns (render, pre-activation caches)."""
    basis = sh_basis_array(normals)
    pre = np.einsum("hwk,kc->hwc", basis, sh)
    shading = np.maximum(pre, 0.0)
    render_pre = diffuse * shading + specular
    return np.maximum(render_pre, 0.0), basis, pre, shading, render_pre


def render_materials(materials: RefinedMaterials) -> TextureMap:
    render, *_ = compose_materials(materials.diffuse_albedo.data,
                                   materials.normals.data,
                                   materials.specular.data,
                                   materials.sh.values)
    return TextureMap(render)


def diffuse_shading_map(materials: RefinedMaterials) -> TextureMap:
    """The SH shading factor of a material set, as stored (no renormalization)."""
    basis = sh_basis_array(materials.normals.data)
    pre = np.einsum("hwk,kc->hwc", basis, materials.sh.values)
    return TextureMap(np.maximum(pre, 0.0))


def refine_loss(materials: RefinedMaterials, target: TextureMap,
                priors: RefinePriors, weights: RefineLossWeights | None = None,
                blur_kernel: int = 11) -> RefineLossResult:
    """Loss and analytic gradients for (diffuse, normals, specular, sh).

    The prior terms compare Gaussian-blurred copies of the refined maps with
    the (unblurred) priors; the refined maps themselves are not modified.
    Normals are consumed as stored, so the caller is responsible for keeping
    them unit length between steps.
    """
    weights = weights or RefineLossWeights()
    return _refine_loss_arrays(
        materials.diffuse_albedo.data, materials.normals.data,
        materials.specular.data, materials.sh.values,
        target, priors, weights, blur_kernel)


def _refine_loss_arrays(diffuse, normals, specular, sh, target: TextureMap,
                        priors: RefinePriors, weights: RefineLossWeights,
                        blur_kernel: int) -> RefineLossResult:
    res = (diffuse.shape[0], diffuse.shape[1])
    if (target.height, target.width) != res:
        raise ParameterError("target resolution differs from the materials")
    for name, tex in (("diffuse", priors.diffuse), ("normal", priors.normals),
                      ("specular", priors.specular)):
        if (tex.height, tex.width) != res:
            raise ParameterError(f"{name} prior was not resized to the refined resolution")

    t_arr = target.data
    render, basis, pre, shading, render_pre = compose_materials(
        diffuse, normals, specular, sh)
    size = t_arr.size

    residual = render - t_arr
    recons = float(np.abs(residual).mean())
    perceptual, g_perc = _perceptual_with_grad(render, t_arr)

    tv_d, g_tv_d = _total_variation_grad(diffuse)
    tv_n, g_tv_n = _total_variation_grad(normals)
    tv_s, g_tv_s = _total_variation_grad(specular)
    tv = tv_d + tv_n + tv_s

    blur_d = _blur_array(diffuse, blur_kernel)
    blur_n = _blur_array(normals, blur_kernel)
    blur_s = _blur_array(specular, blur_kernel)
    resid_d = blur_d - priors.diffuse.data
    resid_n = blur_n - priors.normals.data
    resid_s = blur_s - priors.specular.data
    resid_sh = sh - priors.sh.values
    prior_d = float(np.abs(resid_d).mean())
    prior_n = float(np.abs(resid_n).mean())
    prior_s = float(np.abs(resid_s).mean())
    prior_sh = float((resid_sh ** 2).sum())
    prior = (weights.prior_diffuse * prior_d + weights.prior_normal * prior_n
             + weights.prior_specular * prior_s + weights.prior_sh * prior_sh)

    total = (weights.reconstruction * recons + weights.perceptual * perceptual
             + weights.total_variation * tv + weights.prior * prior)

    # ----- backward -----
    g_render = weights.reconstruction * l1_sign(residual) / size
    g_render += weights.perceptual * g_perc
    g_render = g_render * (render_pre > 0.0)

    g_diffuse = g_render * shading
    g_pre = g_render * diffuse * (pre > 0.0)
    g_sh = np.einsum("hwk,hwc->kc", basis, g_pre)
    tmp = np.einsum("hwc,kc->hwk", g_pre, sh)
    g_normals = np.einsum("hwk,hwkd->hwd", tmp, sh_basis_jacobian(normals))
    g_specular = g_render.sum(axis=2, keepdims=True)

    g_diffuse += weights.total_variation * g_tv_d
    g_normals += weights.total_variation * g_tv_n
    g_specular += weights.total_variation * g_tv_s

    wp = weights.prior
    g_diffuse += _blur_array_adjoint(
        wp * weights.prior_diffuse * l1_sign(resid_d) / resid_d.size, blur_kernel)
    g_normals += _blur_array_adjoint(
        wp * weights.prior_normal * l1_sign(resid_n) / resid_n.size, blur_kernel)
    g_specular += _blur_array_adjoint(
        wp * weights.prior_specular * l1_sign(resid_s) / resid_s.size, blur_kernel)
    g_sh += wp * weights.prior_sh * 2.0 * resid_sh

    return RefineLossResult(
        total=float(total),
        reconstruction=float(weights.reconstruction * recons),
        perceptual=float(weights.perceptual * perceptual),
        total_variation=float(weights.total_variation * tv),
        prior=float(weights.prior * prior),
        grads={"diffuse": g_diffuse, "normals": g_normals,
               "specular": g_specular, "sh": g_sh},
    )


def refine(materials_init: RefinedMaterials, target: TextureMap,
           priors: RefinePriors, config: RefineConfig | None = None) -> tuple:
    """Optimize materials for `config.iterations` Adam steps.

    The learning rate drops once by `decay_factor` at `decay_at` (midpoint by
    default). Returns (RefinedMaterials, trace) with trace rows
    (iteration, total, recons, perc, tv, prior); row 0 is the initial loss.
    """
    config = config or RefineConfig()
    weights = config.weights
    decay_at = config.decay_at if config.decay_at is not None else config.iterations // 2
    blocks = {
        "diffuse": materials_init.diffuse_albedo.data.copy(),
        "normals": materials_init.normals.data.copy(),
        "specular": materials_init.specular.data.copy(),
        "sh": materials_init.sh.values.copy(),
    }
    state = AdamState.for_params(blocks, config.learning_rate,
                                 decay_factor=config.decay_factor, decay_at=decay_at)
    result = _refine_loss_arrays(blocks["diffuse"], blocks["normals"],
                                 blocks["specular"], blocks["sh"],
                                 target, priors, weights, config.blur_kernel)
    if not np.isfinite(result.total):
        raise DivergenceError("refinement loss non-finite at iteration 0")
    trace = [(0, result.total, result.reconstruction, result.perceptual,
              result.total_variation, result.prior)]
    for step in range(1, config.iterations + 1):
        blocks = adam_step(state, blocks, result.grads)
        blocks["diffuse"] = np.clip(blocks["diffuse"], 0.0, 1.0)
        blocks["specular"] = np.maximum(blocks["specular"], 0.0)
        blocks["normals"] = renormalize_normals(blocks["normals"])
        result = _refine_loss_arrays(blocks["diffuse"], blocks["normals"],
                                     blocks["specular"], blocks["sh"],
                                     target, priors, weights, config.blur_kernel)
        if not np.isfinite(result.total):
            raise DivergenceError(f"refinement loss non-finite at iteration {step}")
        trace.append((step, result.total, result.reconstruction,
                      result.perceptual, result.total_variation, result.prior))
    final = RefinedMaterials(
        diffuse_albedo=TextureMap.unit(blocks["diffuse"]),
        normals=TextureMap.signed_unit(blocks["normals"]),
        specular=TextureMap(blocks["specular"]),
        sh=ShCoefficients(blocks["sh"]),
    )
    return final, trace
