"""Concrete denoisers.

``GmmDenoiser`` is exact: for a Gaussian-mixture data distribution the
posterior mean E[z0 | z_t] has a closed form, so its noise prediction is the
ideal one. Text prompts restrict the mixture to a subset of components.

``ToyAttentionDenoiser`` is a fixed, randomly initialised two-layer network
whose only purpose is to run masked self-attention inside a real sampling loop.
"""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _backend
from .diffusion import NULL_PROMPT
from .errors import InvalidConfigError, InvalidPromptError, InvalidShapeError, InvalidStepError


@dataclass(frozen=True)
class GmmModel:
    means: np.ndarray   # (K, C, h, w)
    sigma: float
    weights: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if means.ndim == 3:
            means = means[:, None]
        if means.ndim != 4 or means.shape[0] < 1:
            raise InvalidShapeError(f"means must be (K, C, h, w), got {means.shape}")
        if weights.shape != (means.shape[0],):
            raise InvalidShapeError(f"need one weight per component, got {weights.shape} for K={means.shape[0]}")
        if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidConfigError(f"weights must be nonnegative and sum to 1, got {weights.tolist()}")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise InvalidConfigError(f"sigma must be a nonnegative number, got {self.sigma}")
        means.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def latent_shape(self):
        return self.means.shape[1:]

    def sample(self, rng, n=None, component=None):
        """Draw clean latents; fix ``component`` to sample one mode."""
        size = 1 if n is None else n
        ks = np.full(size, component) if component is not None else rng.choice(self.K, size=size, p=self.weights)
        out = self.means[ks] + self.sigma * rng.standard_normal((size,) + self.latent_shape)
        return out[0] if n is None else out

    def to_dict(self):
        return {"means": self.means.tolist(), "sigma": self.sigma, "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, doc):
        extra = set(doc) - {"means", "sigma", "weights", "name", "description"}
        if extra:
            raise InvalidConfigError(f"unknown GMM keys: {sorted(extra)}")
        try:
            return cls(np.asarray(doc["means"], dtype=np.float64), doc["sigma"], doc["weights"])
        except KeyError as exc:
            raise InvalidConfigError(f"GMM document missing {exc.args[0]!r}") from None

    def save(self, path, **meta):
        Path(path).write_text(json.dumps({**meta, **self.to_dict()}))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _restricted(model, prompt):
    """Component indices and normalised log-weights the prompt allows."""
    if prompt.is_null:
        idx = np.arange(model.K)
        w = model.weights.copy()
    else:
        idx = np.asarray(prompt.selector, dtype=int)
        if (idx < 0).any() or (idx >= model.K).any():
            raise InvalidPromptError(f"selector {prompt.selector} out of range for K={model.K}")
        w = model.weights[idx].copy()
        if prompt.reweight:
            w *= np.asarray(prompt.reweight)
    total = w.sum()
    if total <= 0:
        raise InvalidPromptError("prompt leaves no probability mass")
    keep = w > 0
    with np.errstate(divide="ignore"):
        return idx[keep], np.log(w[keep] / total)


def _posterior(z_t, t, model, prompt, sched):
    z = np.asarray(z_t, dtype=np.float64)
    if z.shape != model.latent_shape:
        raise InvalidShapeError(f"z_t shape {z.shape} != model latent shape {model.latent_shape}")
    if int(t) != t or not 0 <= t <= sched.T:
        raise InvalidStepError(f"step must lie in [0, {sched.T}], got {t}")
    ab = sched.alpha_bar[int(t)]
    var_t = ab * model.sigma ** 2 + 1.0 - ab
    if var_t <= 0:
        raise InvalidStepError("posterior undefined for sigma = 0 at step 0")
    idx, log_w = _restricted(model, prompt)
    means = np.ascontiguousarray(model.means[idx].reshape(len(idx), -1))
    sqrt_ab = float(np.sqrt(ab))
    coef = sqrt_ab * model.sigma ** 2 / var_t
    mean, resp = _backend.kernels.gmm_posterior(
        np.ascontiguousarray(z.reshape(-1)), means, np.ascontiguousarray(log_w), sqrt_ab, var_t, coef)
    return mean.reshape(z.shape), idx, resp


def gmm_posterior_mean(z_t, t, model, prompt, sched):
    """E[z0 | z_t] under the prompt-restricted mixture."""
    return _posterior(z_t, t, model, prompt, sched)[0]


def gmm_responsibilities(z_t, t, model, prompt, sched):
    """Posterior component probabilities as a length-K vector (zeros outside the selector)."""
    _, idx, resp = _posterior(z_t, t, model, prompt, sched)
    full = np.zeros(model.K)
    full[idx] = resp
    return full


def gmm_predict_noise(z_t, t, model, prompt, sched):
    if int(t) != t or not 1 <= t <= sched.T:
        raise InvalidStepError(f"noise prediction needs a step in [1, {sched.T}], got {t}")
    x0 = gmm_posterior_mean(z_t, t, model, prompt, sched)
    ab = sched.alpha_bar[int(t)]
    return (np.asarray(z_t) - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)


class GmmDenoiser:
    def __init__(self, model, sched):
        self.model = model
        self.sched = sched

    def predict_noise(self, z_t, t, prompt=NULL_PROMPT, attn_mask=None):
        # attention masks have no meaning for the closed-form model
        return gmm_predict_noise(z_t, t, self.model, prompt, self.sched)


# -- masked self-attention -------------------------------------------------

@dataclass(frozen=True)
class AttentionLayer:
    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray

    def __post_init__(self):
        shapes = {self.W_q.shape, self.W_k.shape, self.W_v.shape}
        if len(shapes) != 1 or self.W_q.ndim != 2:
            raise InvalidShapeError(f"projection matrices disagree: {sorted(shapes)}")
        if not all(np.isfinite(m).all() for m in (self.W_q, self.W_k, self.W_v)):
            raise InvalidConfigError("attention weights must be finite")


def attention_parts(F, m, layer):
    """Queries, keys, values and pre-softmax logits of masked self-attention.

    Masked rows of F (m == 0) are zeroed before the key projection only.
    """
    F = np.asarray(F, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64).reshape(-1)
    if F.ndim != 2 or m.shape != (F.shape[0],) or F.shape[1] != layer.W_q.shape[0]:
        raise InvalidShapeError(
            f"tokens {F.shape}, mask {m.shape} and projections {layer.W_q.shape} are inconsistent")
    Q = F @ layer.W_q
    K = (F * m[:, None]) @ layer.W_k
    V = F @ layer.W_v
    logits = (Q @ K.T) / np.sqrt(F.shape[1])
    return Q, K, V, logits


def _softmax_rows(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def masked_self_attention(F, m, layer):
    _, _, V, logits = attention_parts(F, m, layer)
    return _softmax_rows(logits) @ V


@dataclass(frozen=True)
class AttentionWeights:
    embed: np.ndarray         # (C, d)
    layers: tuple             # AttentionLayer per resolution
    scales: tuple             # pooling factor per layer
    project: np.ndarray       # (d, C)
    prompt_table: np.ndarray  # (P, d)

    @classmethod
    def seeded(cls, channels, width=8, scales=(1, 2), n_prompts=8, seed=0):
        rng = np.random.default_rng(seed)

        def mat(a, b):
            return rng.standard_normal((a, b)) / np.sqrt(a)

        layers = tuple(AttentionLayer(mat(width, width), mat(width, width), mat(width, width)) for _ in scales)
        return cls(mat(channels, width), layers, tuple(int(s) for s in scales),
                   mat(width, channels), 0.1 * rng.standard_normal((n_prompts, width)))


def _pool(x, s):
    d, h, w = x.shape
    return x.reshape(d, h // s, s, w // s, s).mean(axis=(2, 4))


class ToyAttentionDenoiser:
    """Linear embed -> masked self-attention per resolution -> linear project."""

    def __init__(self, weights, sched):
        self.weights = weights
        self.sched = sched

    def _prompt_vector(self, prompt):
        table = self.weights.prompt_table
        if prompt.is_null:
            return np.zeros(table.shape[1])
        scale = prompt.reweight or (1.0,) * len(prompt.selector)
        return sum(r * table[i % len(table)] for i, r in zip(prompt.selector, scale))

    def predict_noise(self, z_t, t, prompt=NULL_PROMPT, attn_mask=None):
        z = np.asarray(z_t, dtype=np.float64)
        if z.ndim != 3 or z.shape[0] != self.weights.embed.shape[0]:
            raise InvalidShapeError(f"expected ({self.weights.embed.shape[0]}, h, w) latent, got {z.shape}")
        if int(t) != t or not 1 <= t <= self.sched.T:
            raise InvalidStepError(f"noise prediction needs a step in [1, {self.sched.T}], got {t}")
        C, h, w = z.shape
        tokens = z.reshape(C, h * w).T @ self.weights.embed + self._prompt_vector(prompt)
        tokens = tokens * (1.0 + t / self.sched.T)
        for layer, s in zip(self.weights.layers, self.weights.scales):
            if h % s or w % s:
                s = 1
            grid = tokens.T.reshape(-1, h, w)
            pooled = _pool(grid, s) if s > 1 else grid
            hl, wl = pooled.shape[1:]
            m = np.ones(hl * wl) if attn_mask is None else attn_mask.at(hl, wl).reshape(-1)
            out = masked_self_attention(pooled.reshape(-1, hl * wl).T, m, layer)
            if s > 1:
                out = np.repeat(np.repeat(out.T.reshape(-1, hl, wl), s, axis=1), s, axis=2).reshape(-1, h * w).T
            tokens = tokens + out
        return (tokens @ self.weights.project).T.reshape(C, h, w)
