"""Noise schedules, forward noising, reverse steps and DDIM inversion.

Step indices follow the clean-at-zero convention: ``alpha_bar[0] == 1`` and
step ``t`` in ``1..T`` carries ``betas[t]``.
"""
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import InvalidConfigError, InvalidPromptError, InvalidShapeError, InvalidStepError


@dataclass(frozen=True)
class PromptSpec:
    """Which part of the data distribution the denoiser is steered toward.

    ``kind="null"`` is the unconditional prompt. ``kind="text"`` carries a
    non-empty ``selector`` of mixture component indices and optional per-index
    ``reweight`` factors; this stands in for text conditioning in the sandbox.
    """

    kind: str = "null"
    selector: tuple = ()
    reweight: tuple = ()

    def __post_init__(self):
        if self.kind == "null":
            if self.selector or self.reweight:
                raise InvalidPromptError("null-text prompt carries no selector")
        elif self.kind == "text":
            if not self.selector:
                raise InvalidPromptError("conditioned prompt needs a non-empty selector")
            if self.reweight and len(self.reweight) != len(self.selector):
                raise InvalidPromptError("reweight must match selector length")
            if any(r < 0 for r in self.reweight):
                raise InvalidPromptError("reweight factors must be nonnegative")
        else:
            raise InvalidPromptError(f"prompt kind must be 'null' or 'text', got {self.kind!r}")
        object.__setattr__(self, "selector", tuple(int(i) for i in self.selector))
        object.__setattr__(self, "reweight", tuple(float(r) for r in self.reweight))

    @classmethod
    def null(cls):
        return cls("null")

    @classmethod
    def text(cls, selector, reweight=()):
        return cls("text", tuple(selector), tuple(reweight))

    @property
    def is_null(self):
        return self.kind == "null"


NULL_PROMPT = PromptSpec.null()


class Denoiser(Protocol):
    def predict_noise(self, z_t, t, prompt, attn_mask=None): ...


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    betas: np.ndarray       # length T+1, betas[0] = 0 placeholder
    alpha_bar: np.ndarray   # length T+1, alpha_bar[0] = 1

    def beta(self, t):
        if not 1 <= t <= self.T:
            raise InvalidStepError(f"beta defined for steps 1..{self.T}, got {t}")
        return float(self.betas[t])

    def __post_init__(self):
        for arr in (self.betas, self.alpha_bar):
            arr.setflags(write=False)


def make_schedule(T=100, beta_start=1e-4, beta_end=2e-2, kind="linear"):
    if kind != "linear":
        raise InvalidConfigError(f"unsupported schedule kind {kind!r}")
    if int(T) != T or T < 1:
        raise InvalidConfigError(f"T must be a positive integer, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise InvalidConfigError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    T = int(T)
    betas = np.zeros(T + 1)
    betas[1:] = np.linspace(beta_start, beta_end, T) if T > 1 else [beta_start]
    betas[1], betas[T] = beta_start, beta_end
    alpha_bar = np.ones(T + 1)
    alpha_bar[1:] = np.cumprod(1.0 - betas[1:])
    return NoiseSchedule(T, betas, alpha_bar)


def _check_step(t, sched, lo=0):
    if int(t) != t or not lo <= t <= sched.T:
        raise InvalidStepError(f"step must lie in [{lo}, {sched.T}], got {t}")
    return int(t)


def _congruent(a, b, what):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")
    return a, b


def diffuse_at(z0, eps, alpha_bar):
    """sqrt(ab)*z0 + sqrt(1-ab)*eps for an explicit cumulative alpha."""
    z0, eps = _congruent(z0, eps, "forward_diffuse")
    return np.sqrt(alpha_bar) * z0 + np.sqrt(1.0 - alpha_bar) * eps


def forward_diffuse(z0, t, eps, sched):
    t = _check_step(t, sched)
    return diffuse_at(z0, eps, sched.alpha_bar[t])


def predict_x0(z_t, t, eps_hat, sched):
    ab = sched.alpha_bar[t]
    return (z_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def ddim_step(z_t, t, eps_hat, sched):
    """Deterministic (eta = 0) update from step t to t-1."""
    t = _check_step(t, sched, lo=1)
    z_t, eps_hat = _congruent(z_t, eps_hat, "ddim_step")
    x0 = predict_x0(z_t, t, eps_hat, sched)
    ab_prev = sched.alpha_bar[t - 1]
    return np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps_hat


def ddpm_posterior(z_t, t, eps_hat, sched):
    """Mean and std of the ancestral-sampling posterior at step t."""
    t = _check_step(t, sched, lo=1)
    z_t, eps_hat = _congruent(z_t, eps_hat, "ddpm_step")
    ab, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
    beta = sched.betas[t]
    x0 = predict_x0(z_t, t, eps_hat, sched)
    mean = (np.sqrt(ab_prev) * beta / (1.0 - ab)) * x0 + (np.sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab)) * z_t
    sigma = 0.0 if t == 1 else float(np.sqrt(beta * (1.0 - ab_prev) / (1.0 - ab)))
    return mean, sigma


def ddpm_step(z_t, t, eps_hat, sched, noise):
    mean, sigma = ddpm_posterior(z_t, t, eps_hat, sched)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != mean.shape:
        raise InvalidShapeError(f"ddpm_step: noise shape {noise.shape} != {mean.shape}")
    return mean + sigma * noise if sigma else mean


def ddim_invert(z0, sched, denoiser, prompt=NULL_PROMPT):
    """Run the DDIM update backwards from the clean latent to step T.

    Returns a list of T+1 latents, entry ``t`` at noise level ``t``. The
    noise estimate for leaving step ``t`` is the denoiser's prediction at
    ``(z_t, t)``; at ``t = 0`` the latent is clean, so the estimate is zero
    and the first move is a pure rescale.
    """
    z = np.array(z0, dtype=np.float64)
    traj = [z]
    for t in range(sched.T):
        eps = np.zeros_like(z) if t == 0 else np.asarray(denoiser.predict_noise(z, t, prompt))
        x0 = predict_x0(z, t, eps, sched)
        ab_next = sched.alpha_bar[t + 1]
        z = np.sqrt(ab_next) * x0 + np.sqrt(1.0 - ab_next) * eps
        traj.append(z)
    return traj


def sample(z_T, sched, denoiser, prompt=NULL_PROMPT, sampler="ddim", rng=None, start=None, stop=0):
    """Plain reverse process from ``start`` (default T) down to ``stop``.

    Returns the list of visited latents, first entry at ``start``.
    """
    start = sched.T if start is None else start
    z = np.array(z_T, dtype=np.float64)
    traj = [z]
    for t in range(start, stop, -1):
        eps = denoiser.predict_noise(z, t, prompt)
        if sampler == "ddim":
            z = ddim_step(z, t, eps, sched)
        elif sampler == "ddpm":
            z = ddpm_step(z, t, eps, sched, rng.standard_normal(z.shape))
        else:
            raise InvalidConfigError(f"unknown sampler {sampler!r}")
        traj.append(z)
    return traj
