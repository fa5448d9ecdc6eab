"""Quantized latent attributes: integer latents behind shared affine decoders.

Each compressible attribute (color rest bands, rotation, opacity) is stored
per Gaussian as a small continuous "shadow" vector. The forward path rounds
the shadow to integers and decodes with a shared affine map; gradients flow
to the shadow unchanged (straight-through estimator). After training the
rounded integers are what gets entropy coded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidInputError

logger = logging.getLogger(__name__)

# attribute id -> (attribute dim k, latent dim l, decoder init std, base attribute lr)
LATENT_SPECS = {
    "color_rest": (45, 16, 0.0005, 2.5e-3 / 20.0),
    "rotation": (4, 8, 0.01, 1e-3),
    "opacity": (1, 1, 0.5, 5e-2),
}

# Shadows are clamped to this range at rounding time so frozen latents always
# fit a signed 16-bit integer before entropy coding.
LATENT_MIN = -(2 ** 15)
LATENT_MAX = 2 ** 15 - 1


@dataclass
class LinearDecoder:
    """Shared affine map from integer latents to one attribute block."""

    weight: np.ndarray  # (k, l)
    bias: np.ndarray    # (k,)
    attribute_id: str

    def __post_init__(self):
        if self.attribute_id not in LATENT_SPECS:
            raise ConfigError(f"unknown latent attribute '{self.attribute_id}'")
        k, l, _, _ = LATENT_SPECS[self.attribute_id]
        self.weight = np.asarray(self.weight, dtype=np.float64).reshape(k, l)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(k)
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise InvalidInputError(f"decoder '{self.attribute_id}' has non-finite entries")

    @property
    def latent_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def attribute_dim(self) -> int:
        return self.weight.shape[0]

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.weight))

    def copy(self) -> "LinearDecoder":
        return LinearDecoder(self.weight.copy(), self.bias.copy(), self.attribute_id)


def ste_round(shadow: np.ndarray) -> np.ndarray:
    """Round half away from zero, clamped to the signed 16-bit latent range.

    Forward value only; the gradient contract is identity (callers propagate
    upstream gradients straight to the shadow).
    """
    shadow = np.asarray(shadow, dtype=np.float64)
    rounded = np.sign(shadow) * np.floor(np.abs(shadow) + 0.5)
    return np.clip(rounded, LATENT_MIN, LATENT_MAX)


def decode(decoder: LinearDecoder, latents: np.ndarray) -> np.ndarray:
    """Affine decode: latents (N, l) -> attributes (N, k)."""
    latents = np.asarray(latents, dtype=np.float64)
    if latents.shape[-1] != decoder.latent_dim:
        raise InvalidInputError(
            f"latent width {latents.shape[-1]} does not match decoder "
            f"'{decoder.attribute_id}' (expects {decoder.latent_dim})"
        )
    return latents @ decoder.weight.T + decoder.bias


def decode_backward(decoder: LinearDecoder, latents: np.ndarray, grad_attr: np.ndarray):
    """Gradients of a decode: returns (d_shadow, d_weight, d_bias).

    ``latents`` must be the rounded values used in the forward pass; under
    the straight-through contract d_shadow is exactly grad_attr @ W.
    """
    grad_attr = np.asarray(grad_attr, dtype=np.float64)
    d_shadow = grad_attr @ decoder.weight
    d_weight = grad_attr.T @ np.asarray(latents, dtype=np.float64)
    d_bias = grad_attr.sum(axis=0)
    return d_shadow, d_weight, d_bias


def init_decoder(attribute_id: str, rng: np.random.Generator | int) -> LinearDecoder:
    """Decoder with N(0, std) weights (std per attribute) and zero bias."""
    if attribute_id not in LATENT_SPECS:
        raise ConfigError(f"unknown latent attribute '{attribute_id}'")
    k, l, std, _ = LATENT_SPECS[attribute_id]
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    weight = rng.normal(0.0, std, size=(k, l))
    return LinearDecoder(weight=weight, bias=np.zeros(k), attribute_id=attribute_id)


def init_latents_least_squares(decoder: LinearDecoder, attributes: np.ndarray) -> np.ndarray:
    """Shadow latents solving min ||W q + b - a||_2 per row.

    Falls back to a ridge-regularized solve (lambda = 1e-10) when the decoder
    weight is rank deficient.
    """
    attributes = np.asarray(attributes, dtype=np.float64)
    if attributes.ndim != 2 or attributes.shape[1] != decoder.attribute_dim:
        raise InvalidInputError(
            f"attribute block shape {attributes.shape} does not match decoder "
            f"'{decoder.attribute_id}' (expects (N, {decoder.attribute_dim}))"
        )
    W = decoder.weight
    resid = attributes - decoder.bias
    gram = W.T @ W
    rhs = resid @ W  # (N, l)
    if np.linalg.matrix_rank(W) < decoder.latent_dim:
        logger.warning(
            "decoder '%s' weight is rank deficient; using regularized solve",
            decoder.attribute_id,
        )
        gram = gram + 1e-10 * np.eye(decoder.latent_dim)
    return np.linalg.solve(gram, rhs.T).T


def latent_learning_rate(base_lr: float, lr_scale: float, decoder: LinearDecoder) -> float:
    """Attribute learning rate scaled and divided by the decoder Frobenius norm."""
    norm = decoder.frobenius_norm()
    if norm <= 0.0:
        raise ConfigError(f"decoder '{decoder.attribute_id}' has zero norm")
    return base_lr * lr_scale / norm
