"""Command-line surface for the decomposition pipeline.

Every command is deterministic given its config and inputs. Exit codes:
0 success, 1 file I/O problems, 2 invalid configuration or parameters,
3 optimization divergence.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import PipelineConfig, thread_cap
from .coarsefit import fit_albedo_prior, fit_coarse
from .errors import ConfigError, DivergenceError, ParameterError
from .facemodel import CoarseParams, load_model
from .fileio import (read_landmarks_csv, read_mask, read_texture,
                     write_texture, write_trace_csv)
from .makeup import (MakeupLayers, alpha_blend, apply_makeup_render,
                     extract_makeup, interpolate_alpha, load_layers,
                     save_layers, transfer)
from .makeup_pca import build_pca, load_pca, sample_makeup, save_pca
from .refine import (diffuse_shading_map, materials_from_priors,
                     priors_from_coarse, refine)
from .scene import make_scene, write_scene
from .texture import TextureMap, diffuse_fill


def _load_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return PipelineConfig.load(args.config)
    return PipelineConfig()


def _maybe_dump(args, config: PipelineConfig) -> bool:
    if getattr(args, "dump_config", False):
        print(config.to_json())
        return True
    return False


def _cmd_make_scene(args) -> int:
    scene = make_scene(seed=args.seed, resolution=args.resolution,
                       vertices=args.vertices)
    write_scene(scene, args.out_dir)
    return 0


def _cmd_fit_coarse(args) -> int:
    config = _load_config(args)
    if _maybe_dump(args, config):
        return 0
    model = load_model(args.model)
    target = read_texture(args.target)
    mask = read_mask(args.mask)
    landmarks = read_landmarks_csv(args.landmarks) if args.landmarks else None
    params, trace = fit_coarse(model, target, mask, landmarks, config.coarse)
    params.save(args.out)
    if args.trace:
        write_trace_csv(trace, "iter,total,photo,lan,skin,reg", args.trace)
    if args.projected:
        from .facemodel import eval_geometry, project_landmarks
        from .fileio import write_landmarks_json

        positions = eval_geometry(model, params.identity, params.expression)
        projected = project_landmarks(positions, model.landmark_indices,
                                      params.rotation, params.translation)
        write_landmarks_json(projected, args.projected)
    return 0


def _cmd_complete(args) -> int:
    config = _load_config(args)
    if _maybe_dump(args, config):
        return 0
    tex = read_texture(args.texture)
    mask = read_mask(args.mask)
    filled = diffuse_fill(tex, mask, iters=config.fill.iterations,
                          tol=config.fill.tolerance)
    write_texture(filled, args.out)
    return 0


def _cmd_refine(args) -> int:
    config = _load_config(args)
    if _maybe_dump(args, config):
        return 0
    model = load_model(args.model)
    params = CoarseParams.load(args.params)
    target = read_texture(args.target)
    priors = priors_from_coarse(model, params, target.height, target.width)
    materials, trace = refine(materials_from_priors(priors), target, priors,
                              config.refine)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_texture(materials.diffuse_albedo, out / "diffuse.pfm")
    write_texture(materials.normals, out / "normals.pfm")
    write_texture(materials.specular, out / "specular.pfm")
    write_texture(diffuse_shading_map(materials), out / "shading.pfm")
    with open(out / "sh.json", "w") as fh:
        json.dump(materials.sh.flat.tolist(), fh)
    write_trace_csv(trace, "iter,total,recons,perc,tv,prior", out / "trace.csv")
    return 0


def _cmd_extract(args) -> int:
    config = _load_config(args)
    if _maybe_dump(args, config):
        return 0
    diffuse = read_texture(args.diffuse)
    if args.prior:
        prior = read_texture(args.prior)
        prior = TextureMap.unit(np.clip(prior.data, 0.0, 1.0))
    elif args.model:
        model = load_model(args.model)
        prior = fit_albedo_prior(model, diffuse)
    else:
        raise ParameterError("extract needs either --prior or --model")
    diffuse = TextureMap.unit(np.clip(diffuse.data, 0.0, 1.0))
    layers, trace = extract_makeup(diffuse, prior, config=config.extract)
    save_layers(layers, args.out_dir)
    write_trace_csv(trace, "iter,total,fit,prior,tv_alpha,tv_makeup,sparse",
                    Path(args.out_dir) / "trace.csv")
    return 0


def _cmd_transfer(args) -> int:
    layers = load_layers(args.layers)
    bare = read_texture(args.bare)
    bare = TextureMap.unit(np.clip(bare.data, 0.0, 1.0))
    write_texture(transfer(bare, layers), args.out)
    return 0


def _cmd_interpolate(args) -> int:
    layers = load_layers(args.layers)
    shifted = interpolate_alpha(layers.alpha, args.sigma)
    adjusted = MakeupLayers(bare_skin=layers.bare_skin,
                            makeup_color=layers.makeup_color, alpha=shifted)
    write_texture(alpha_blend(adjusted), args.out)
    if args.out_alpha:
        from .fileio import write_weight_map

        write_weight_map(shifted, args.out_alpha)
    return 0


def _cmd_build_pca(args) -> int:
    config = _load_config(args)
    if _maybe_dump(args, config):
        return 0
    paths = [Path(p) for p in args.samples]
    if len(paths) < 2:
        raise ParameterError("need at least two sample textures")
    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        samples = list(pool.map(read_texture, paths))
    components = args.components or config.pca.components
    model = build_pca(samples, components)
    save_pca(model, args.out)
    return 0


def _cmd_sample_pca(args) -> int:
    model = load_pca(args.model)
    sample = sample_makeup(model, seed=args.seed, scale=args.scale)
    write_texture(sample, args.out)
    return 0


def _cmd_render(args) -> int:
    layers = load_layers(args.layers)
    bare = read_texture(args.bare)
    bare = TextureMap.unit(np.clip(bare.data, 0.0, 1.0))
    shading = read_texture(args.shading)
    specular = read_texture(args.specular)
    unit_shading = TextureMap(np.ones_like(shading.data))
    zero_spec = TextureMap(np.zeros((bare.height, bare.width, 1)))
    panels = {
        "bare.png": apply_makeup_render(
            bare, _no_makeup(layers), unit_shading, zero_spec),
        "with_makeup.png": apply_makeup_render(bare, layers, unit_shading, zero_spec),
        "diffuse_lit.png": apply_makeup_render(bare, layers, shading, zero_spec),
        "full.png": apply_makeup_render(bare, layers, shading, specular),
    }
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        list(pool.map(lambda item: write_texture(item[1], out / item[0]),
                      sorted(panels.items())))
    return 0


def _no_makeup(layers: MakeupLayers) -> MakeupLayers:
    ones = np.ones((layers.alpha.height, layers.alpha.width, 1))
    return MakeupLayers(bare_skin=layers.bare_skin,
                        makeup_color=layers.makeup_color,
                        alpha=TextureMap.unit(ones))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facelayers",
        description="UV-space facial texture decomposition and makeup tooling")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--dump-config", action="store_true",
                       help="print the effective config and exit")

    p = sub.add_parser("make-scene", help="generate the bundled synthetic scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--vertices", type=int, default=320)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_cmd_make_scene)

    p = sub.add_parser("fit-coarse", help="fit coarse parameters to a UV target")
    p.add_argument("--model", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--landmarks")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.add_argument("--projected", help="write the fitted landmark projection as JSON")
    add_config_flags(p)
    p.set_defaults(handler=_cmd_fit_coarse)

    p = sub.add_parser("complete", help="fill missing texture pixels")
    p.add_argument("--texture", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    add_config_flags(p)
    p.set_defaults(handler=_cmd_complete)

    p = sub.add_parser("refine", help="refine materials against a completed texture")
    p.add_argument("--model", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out-dir", required=True)
    add_config_flags(p)
    p.set_defaults(handler=_cmd_refine)

    p = sub.add_parser("extract", help="split a diffuse albedo into makeup layers")
    p.add_argument("--diffuse", required=True)
    p.add_argument("--model", help="face model used to compute the bare-skin prior")
    p.add_argument("--prior", help="explicit bare-skin prior texture")
    p.add_argument("--out-dir", required=True)
    add_config_flags(p)
    p.set_defaults(handler=_cmd_extract)

    p = sub.add_parser("transfer", help="apply extracted makeup to another identity")
    p.add_argument("--bare", required=True)
    p.add_argument("--layers", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_transfer)

    p = sub.add_parser("interpolate", help="shift the alpha matte and re-blend")
    p.add_argument("--layers", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-alpha")
    p.set_defaults(handler=_cmd_interpolate)

    p = sub.add_parser("build-pca", help="build a PCA makeup model from textures")
    p.add_argument("--samples", nargs="+", required=True)
    p.add_argument("--components", type=int)
    p.add_argument("--out", required=True)
    add_config_flags(p)
    p.set_defaults(handler=_cmd_build_pca)

    p = sub.add_parser("sample-pca", help="sample a makeup texture from a PCA model")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_sample_pca)

    p = sub.add_parser("render", help="emit the overlay panel set as PNGs")
    p.add_argument("--bare", required=True)
    p.add_argument("--layers", required=True)
    p.add_argument("--shading", required=True)
    p.add_argument("--specular", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.handler(args) or 0)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ParameterError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
