"""PCA statistical model over collected premultiplied makeup textures.

Built from samples of (1 - alpha) * makeup_color at a shared resolution.
Since the texture dimension dwarfs the sample count, the eigendecomposition
runs on the N x N Gram matrix of the centered samples; eigenvalues use the
1/N covariance convention, so the mean squared reconstruction residual over
the training set equals the eigenvalue tail sum exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .fileio import read_container, write_container
from .texture import TextureMap

PCA_MAGIC = "MKP1"


@dataclass(frozen=True)
class MakeupPcaModel:
    mean: TextureMap              # (H, W, 3)
    basis: np.ndarray             # (H*W*3, K) orthonormal columns
    eigenvalues: np.ndarray       # (K,) descending, >= 0

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.float64)
        eig = np.asarray(self.eigenvalues, dtype=np.float64).reshape(-1)
        if basis.ndim != 2 or basis.shape[0] != self.mean.data.size:
            raise ParameterError("basis rows must match the mean texture size")
        if basis.shape[1] != eig.size:
            raise ParameterError("one eigenvalue per basis column required")
        if np.any(eig < -1e-12):
            raise ParameterError("eigenvalues must be non-negative")
        if np.any(np.diff(eig) > 1e-12):
            raise ParameterError("eigenvalues must be sorted descending")
        gram = np.einsum("dj,dk->jk", basis, basis)
        if not np.allclose(gram, np.eye(basis.shape[1]), atol=1e-5):
            raise ParameterError("basis columns must be orthonormal")
        basis = basis.copy()
        eig = np.maximum(eig, 0.0)
        basis.flags.writeable = False
        eig.flags.writeable = False
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def components(self) -> int:
        return self.basis.shape[1]

    @property
    def resolution(self) -> tuple:
        return self.mean.height, self.mean.width


def build_pca(samples: list, components: int) -> MakeupPcaModel:
    """Mean-centered PCA of makeup textures via the sample-space Gram matrix."""
    if len(samples) < 2:
        raise ParameterError("need at least two samples")
    shapes = {s.shape for s in samples}
    if len(shapes) != 1:
        raise ParameterError("samples must share one resolution")
    n = len(samples)
    dim = samples[0].data.size
    if components < 1 or components > min(n - 1, dim):
        raise ParameterError(
            f"components must lie in [1, {min(n - 1, dim)}], got {components}")
    data = np.stack([s.data.reshape(-1) for s in samples])     # (N, dim)
    mean = data.mean(axis=0)
    centered = data - mean[None, :]
    gram = np.einsum("nd,md->nm", centered, centered)          # (N, N)
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1][:components]
    top_vals = np.maximum(eigvals[order], 0.0)
    basis = np.zeros((dim, components))
    for j, (value, column) in enumerate(zip(top_vals, eigvecs[:, order].T)):
        if value > 1e-12:
            direction = np.einsum("nd,n->d", centered, column)
            basis[:, j] = direction / np.sqrt(value)
        else:
            basis[:, j] = _fallback_direction(basis[:, :j], dim, j)
    eigenvalues = top_vals / n
    return MakeupPcaModel(
        mean=TextureMap(mean.reshape(samples[0].shape)),
        basis=basis,
        eigenvalues=eigenvalues,
    )


def _fallback_direction(existing: np.ndarray, dim: int, index: int) -> np.ndarray:
    """Deterministic unit vector orthogonal to the columns found so far,
    used for zero-variance directions so the basis stays orthonormal."""
    for probe in range(dim):
        v = np.zeros(dim)
        v[(index + probe) % dim] = 1.0
        v -= existing @ (existing.T @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            return v / norm
    raise ParameterError("could not complete an orthonormal basis")


def fit_coeffs(model: MakeupPcaModel, texture: TextureMap) -> np.ndarray:
    """Least-squares coefficients: basis' (texture - mean)."""
    if texture.shape != model.mean.shape:
        raise ParameterError("texture resolution differs from the model")
    delta = (texture.data - model.mean.data).reshape(-1)
    return np.einsum("dk,d->k", model.basis, delta)


def reconstruct(model: MakeupPcaModel, coeffs: np.ndarray) -> TextureMap:
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    if coeffs.size != model.components:
        raise ParameterError("coefficient count differs from the model")
    flat = model.mean.data.reshape(-1) + np.einsum("dk,k->d", model.basis, coeffs)
    return TextureMap(flat.reshape(model.mean.shape))


def sample_makeup(model: MakeupPcaModel, seed: int, scale: float = 1.0) -> TextureMap:
    """Draw a makeup texture along the principal components.

    Coefficients are standard normal draws scaled by sqrt(eigenvalue) * scale
    from a seeded generator. Values may leave [0, 1]; clamp at export.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(model.components)
    coeffs = z * np.sqrt(model.eigenvalues) * scale
    return reconstruct(model, coeffs)


def extended_albedo(diffuse: TextureMap, makeup_tex: TextureMap) -> TextureMap:
    """Additively extend a diffuse albedo with a makeup texture.

    The sum can leave [0, 1]; clamping is deferred to export so fitting stays
    linear.
    """
    if diffuse.shape != makeup_tex.shape:
        raise ParameterError("makeup resolution differs from the albedo")
    return TextureMap(diffuse.data + makeup_tex.data)


def save_pca(model: MakeupPcaModel, path) -> None:
    write_container(path, PCA_MAGIC, {
        "mean": model.mean.data,
        "basis": model.basis,
        "eigenvalues": model.eigenvalues,
    })


def load_pca(path) -> MakeupPcaModel:
    arrays = read_container(path, PCA_MAGIC)
    return MakeupPcaModel(
        mean=TextureMap(arrays["mean"]),
        basis=arrays["basis"],
        eigenvalues=arrays["eigenvalues"],
    )
