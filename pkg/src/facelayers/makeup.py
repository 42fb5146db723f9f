"""Alpha-matte makeup model: blending, transfer, interpolation and removal,
optimization-based layer extraction, and the histogram-matching makeup metric.

A diffuse albedo is modeled as a per-pixel convex combination

    albedo = alpha * bare_skin + (1 - alpha) * makeup_color

so alpha = 1 means bare skin shows through. Extraction inverts the blend with
explicit priors: reconstruction fidelity, closeness of the bare layer to a
makeup-free skin estimate, total-variation smoothing on the matte and the
makeup color, and a sparsity pull toward the no-makeup explanation.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ParameterError
from .optim import AdamState, adam_step
from .shading import compose_reconstruction
from .texture import (FaceRegions, TextureMap, _total_variation_grad,
                      l1_sign, resize_bilinear)

HISTOGRAM_BINS = 256


@dataclass(frozen=True)
class MakeupLayers:
    """Bare skin, makeup color and the scalar alpha matte, all in [0, 1]."""

    bare_skin: TextureMap
    makeup_color: TextureMap
    alpha: TextureMap

    def __post_init__(self):
        if self.bare_skin.channels != 3 or self.makeup_color.channels != 3:
            raise ParameterError("bare skin and makeup color must have 3 channels")
        if self.alpha.channels != 1:
            raise ParameterError("alpha matte must be single-channel")
        res = (self.bare_skin.height, self.bare_skin.width)
        for tex in (self.makeup_color, self.alpha):
            if (tex.height, tex.width) != res:
                raise ParameterError("layer resolutions differ")
        for name in ("bare_skin", "makeup_color", "alpha"):
            arr = getattr(self, name).data
            if arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9:
                raise ParameterError(f"{name} must lie in [0, 1]")

    @property
    def resolution(self) -> tuple:
        return self.bare_skin.height, self.bare_skin.width

    def premultiplied_makeup(self) -> TextureMap:
        """(1 - alpha) * makeup_color, the form collected for the PCA model."""
        return TextureMap((1.0 - self.alpha.data) * self.makeup_color.data)


@dataclass(frozen=True)
class ExtractionWeights:
    fit: float = 20.0
    skin_prior: float = 4.0
    tv_alpha: float = 8.0
    tv_makeup: float = 8.0
    alpha_sparse: float = 1.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ParameterError(f"weight '{name}' must be finite and non-negative")


@dataclass
class ExtractConfig:
    iterations: int = 800
    learning_rate: float = 1e-2
    decay_factor: float = 0.1
    decay_at: int = 500
    seed: int = 0
    weights: ExtractionWeights = field(default_factory=ExtractionWeights)


def alpha_blend(layers: MakeupLayers) -> TextureMap:
    """alpha * bare + (1 - alpha) * makeup, exact per pixel."""
    a = layers.alpha.data
    blended = a * layers.bare_skin.data + (1.0 - a) * layers.makeup_color.data
    return TextureMap.unit(np.clip(blended, 0.0, 1.0))


def transfer(target_bare: TextureMap, layers: MakeupLayers) -> TextureMap:
    """Blend the source makeup over a different identity's bare skin.

    Source layers are bilinearly resampled if their resolution differs.
    """
    if target_bare.channels != 3:
        raise ParameterError("target bare skin must have 3 channels")
    h, w = target_bare.height, target_bare.width
    alpha = resize_bilinear(layers.alpha, h, w).data
    makeup = resize_bilinear(layers.makeup_color, h, w).data
    blended = alpha * target_bare.data + (1.0 - alpha) * makeup
    return TextureMap.unit(np.clip(blended, 0.0, 1.0))


def interpolate_alpha(alpha: TextureMap, sigma: float) -> TextureMap:
    """Shift the matte by sigma and clamp to [0, 1]; sigma = 1 removes makeup."""
    if not 0.0 <= sigma <= 1.0:
        raise ParameterError(f"sigma must lie in [0, 1], got {sigma}")
    if alpha.channels != 1:
        raise ParameterError("alpha matte must be single-channel")
    if sigma == 0.0:
        return TextureMap.unit(alpha.data)
    return TextureMap.unit(np.clip(alpha.data + sigma, 0.0, 1.0))


def apply_makeup_render(bare: TextureMap, layers: MakeupLayers,
                        shading: TextureMap, specular: TextureMap) -> TextureMap:
    """Illumination-aware makeup rendering: blend, shade, add highlights."""
    return compose_reconstruction(transfer(bare, layers), shading, specular)


@dataclass
class ExtractLossResult:
    total: float
    fit: float
    prior: float
    tv_alpha: float
    tv_makeup: float
    sparse: float
    grads: dict


def _extract_loss(bare, makeup, alpha, diffuse, prior, weights) -> ExtractLossResult:
    blended = alpha * bare + (1.0 - alpha) * makeup
    residual = blended - diffuse
    fit = float(np.abs(residual).mean())
    prior_resid = bare - prior
    prior_term = float(np.abs(prior_resid).mean())
    tv_a, g_tv_a = _total_variation_grad(alpha)
    tv_m, g_tv_m = _total_variation_grad(makeup)
    sparse = float((1.0 - alpha).mean())
    total = (weights.fit * fit + weights.skin_prior * prior_term
             + weights.tv_alpha * tv_a + weights.tv_makeup * tv_m
             + weights.alpha_sparse * sparse)

    g_blend = weights.fit * l1_sign(residual) / residual.size
    g_bare = g_blend * alpha + weights.skin_prior * l1_sign(prior_resid) / prior_resid.size
    g_makeup = g_blend * (1.0 - alpha) + weights.tv_makeup * g_tv_m
    g_alpha = (g_blend * (bare - makeup)).sum(axis=2, keepdims=True)
    g_alpha += weights.tv_alpha * g_tv_a
    g_alpha += -weights.alpha_sparse / (alpha.shape[0] * alpha.shape[1])
    return ExtractLossResult(
        total=float(total), fit=float(weights.fit * fit),
        prior=float(weights.skin_prior * prior_term),
        tv_alpha=float(weights.tv_alpha * tv_a),
        tv_makeup=float(weights.tv_makeup * tv_m),
        sparse=float(weights.alpha_sparse * sparse),
        grads={"bare": g_bare, "makeup": g_makeup, "alpha": g_alpha},
    )


def extract_makeup(diffuse: TextureMap, skin_prior: TextureMap,
                   weights: ExtractionWeights | None = None,
                   config: ExtractConfig | None = None) -> tuple:
    """Decompose a diffuse albedo into bare skin, makeup color and alpha matte.

    Initialization selects the intended basin of the bilinear problem: bare
    skin starts at the prior, makeup color at the observed albedo, and the
    matte at 1 minus four times the mean channel disagreement between albedo
    and prior (so pixels deviating by 0.25 or more start as full makeup).
    Each step projects all three maps back into [0, 1]. Returns
    (MakeupLayers, trace) with trace rows
    (iteration, total, fit, prior, tv_alpha, tv_makeup, sparse).
    """
    if diffuse.channels != 3 or skin_prior.channels != 3:
        raise ParameterError("diffuse and prior must have 3 channels")
    if diffuse.shape != skin_prior.shape:
        raise ParameterError("prior resolution differs from the diffuse input")
    config = config or ExtractConfig()
    weights = weights or config.weights

    d_arr = np.clip(diffuse.data, 0.0, 1.0)
    p_arr = np.clip(skin_prior.data, 0.0, 1.0)
    disagreement = np.abs(d_arr - p_arr).mean(axis=2, keepdims=True)
    blocks = {
        "bare": p_arr.copy(),
        "makeup": d_arr.copy(),
        "alpha": np.clip(1.0 - 4.0 * disagreement, 0.0, 1.0),
    }
    state = AdamState.for_params(blocks, config.learning_rate,
                                 decay_factor=config.decay_factor,
                                 decay_at=config.decay_at)
    result = _extract_loss(blocks["bare"], blocks["makeup"], blocks["alpha"],
                           d_arr, p_arr, weights)
    trace = [(0, result.total, result.fit, result.prior,
              result.tv_alpha, result.tv_makeup, result.sparse)]
    for step in range(1, config.iterations + 1):
        blocks = adam_step(state, blocks, result.grads)
        for key in blocks:
            blocks[key] = np.clip(blocks[key], 0.0, 1.0)
        result = _extract_loss(blocks["bare"], blocks["makeup"], blocks["alpha"],
                               d_arr, p_arr, weights)
        if not np.isfinite(result.total):
            raise DivergenceError(f"extraction loss non-finite at iteration {step}")
        trace.append((step, result.total, result.fit, result.prior,
                      result.tv_alpha, result.tv_makeup, result.sparse))
    layers = MakeupLayers(
        bare_skin=TextureMap.unit(blocks["bare"]),
        makeup_color=TextureMap.unit(blocks["makeup"]),
        alpha=TextureMap.unit(blocks["alpha"]),
    )
    return layers, trace


def save_layers(layers: MakeupLayers, out_dir) -> None:
    """Write a layer set as bare.pfm, makeup.pfm, alpha.png plus preview.png."""
    from pathlib import Path

    from .fileio import write_texture, write_weight_map

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_texture(layers.bare_skin, out / "bare.pfm")
    write_texture(layers.makeup_color, out / "makeup.pfm")
    write_weight_map(layers.alpha, out / "alpha.png")
    write_texture(alpha_blend(layers), out / "preview.png")


def load_layers(in_dir) -> MakeupLayers:
    from pathlib import Path

    from .fileio import read_texture, read_weight_map

    src = Path(in_dir)
    return MakeupLayers(
        bare_skin=TextureMap.unit(np.clip(read_texture(src / "bare.pfm").data, 0.0, 1.0)),
        makeup_color=TextureMap.unit(np.clip(read_texture(src / "makeup.pfm").data, 0.0, 1.0)),
        alpha=read_weight_map(src / "alpha.png"),
    )


# ---------------------------------------------------------------------------
# Histogram-matching makeup metric

def _cdf_edges(values: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    cdf = np.zeros(HISTOGRAM_BINS + 1)
    cdf[1:] = np.cumsum(counts) / values.size
    return cdf


def match_histogram(source: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Remap `source` values so their distribution matches `reference`.

    Piecewise-linear CDF transport over 256 uniform bins on [0, 1]; matching a
    distribution to itself is the identity for values interior to their bin.
    """
    source = np.clip(np.asarray(source, dtype=np.float64), 0.0, 1.0)
    reference = np.clip(np.asarray(reference, dtype=np.float64), 0.0, 1.0)
    cdf_src = _cdf_edges(source)
    cdf_ref = _cdf_edges(reference)
    width = 1.0 / HISTOGRAM_BINS
    bins = np.clip((source * HISTOGRAM_BINS).astype(int), 0, HISTOGRAM_BINS - 1)
    mass = cdf_src[bins + 1] - cdf_src[bins]
    u = cdf_src[bins] + (source - bins * width) * mass / width
    k = np.searchsorted(cdf_ref, u, side="left")
    k = np.clip(k, 1, HISTOGRAM_BINS)
    # queries landing exactly on a plateau boundary select an empty segment;
    # forward them to the next segment that carries mass
    ref_mass = np.diff(cdf_ref)
    next_massy = np.full(HISTOGRAM_BINS, HISTOGRAM_BINS - 1, dtype=int)
    nxt = HISTOGRAM_BINS - 1
    for s in range(HISTOGRAM_BINS - 1, -1, -1):
        if ref_mass[s] > 0:
            nxt = s
        next_massy[s] = nxt
    segment = next_massy[k - 1]
    k = segment + 1
    seg_mass = cdf_ref[k] - cdf_ref[k - 1]
    frac = np.where(seg_mass > 0,
                    (u - cdf_ref[k - 1]) / np.maximum(seg_mass, 1e-300), 0.0)
    frac = np.clip(frac, 0.0, 1.0)
    return np.clip((k - 1 + frac) * width, 0.0, 1.0)


def makeup_histogram_loss(x: TextureMap, y: TextureMap,
                          regions: FaceRegions) -> float:
    """Color-distribution distance over the brows, eyes and lips regions.

    Per region and channel, x's pixels are histogram-matched to y's
    distribution and the mean squared change is accumulated. The skin region
    carries no makeup signal and is excluded.
    """
    if x.channels != 3 or y.channels != 3:
        raise ParameterError("makeup loss expects 3-channel textures")
    named = regions.as_dict()
    expected = named["brows"].weights.shape
    if (x.height, x.width) != expected or (y.height, y.width) != expected:
        raise ParameterError("textures do not match the region resolution")
    total = 0.0
    for name in ("brows", "eyes", "lips"):
        select = named[name].valid
        if not select.any():
            raise ParameterError(f"region '{name}' selects no pixels")
        x_pix = x.data[select]
        y_pix = y.data[select]
        sq = 0.0
        for c in range(3):
            matched = match_histogram(x_pix[:, c], y_pix[:, c])
            sq += ((x_pix[:, c] - matched) ** 2).sum()
        total += sq / x_pix.size
    return float(total)
