"""facelayers: UV-space facial texture decomposition.

Decomposes UV face textures into spherical-harmonics diffuse shading, a
specular reconstruction, bare-skin albedo, a makeup color layer and an alpha
matte, and builds a PCA makeup model supporting illumination-aware transfer,
interpolation and removal.
"""

from .errors import ConfigError, DivergenceError, ParameterError
from .texture import (FaceRegions, TextureMap, UvMask, diffuse_fill,
                      gaussian_blur, resize_bilinear, total_variation)
from .fileio import (read_landmarks_csv, read_mask, read_texture, srgb_decode,
                     srgb_encode, write_landmarks_csv, write_mask, write_texture)
from .shading import (ShCoefficients, VirtualLightStage, compose_reconstruction,
                      diffuse_shading, icosahedral_directions, sh_basis,
                      specular_shading)
from .facemodel import (CoarseParams, LinearFaceModel, eval_diffuse_albedo,
                        eval_geometry, eval_specular_albedo, load_model,
                        project_landmarks, rasterize_normals_to_uv, save_model,
                        synthetic_model, vertex_normals)
from .optim import AdamState, adam_step
from .coarsefit import (CoarseFitConfig, CoarseLossWeights, coarse_loss,
                        fit_albedo_prior, fit_coarse, initial_coarse_params,
                        render_coarse, with_skin_tone)
from .refine import (RefineConfig, RefineLossWeights, RefinedMaterials,
                     RefinePriors, diffuse_shading_map, gray,
                     materials_from_priors, perceptual_substitute,
                     priors_from_coarse, refine, refine_loss, render_materials)
from .makeup import (ExtractConfig, ExtractionWeights, MakeupLayers,
                     alpha_blend, apply_makeup_render, extract_makeup,
                     interpolate_alpha, load_layers, makeup_histogram_loss,
                     save_layers, transfer)
from .makeup_pca import (MakeupPcaModel, build_pca, extended_albedo, fit_coeffs,
                         load_pca, sample_makeup, save_pca)
from .config import PipelineConfig, thread_cap
from .scene import SyntheticScene, make_scene, write_scene

__version__ = "0.1.0"
