"""Null-text / text / null-text inpainting sampler and the blended baseline.

Early stage (steps T..split+1) runs three branches per step:

1. ``un``: unmasked cells replaced by the ground-truth trajectory, then denoised
   (masked self-attention on when the denoiser supports it);
2. ``text``: low DCT band taken from ``un``, then denoised;
3. ``in``: mid DCT band taken from ``text``, then denoised.

Late stage (steps split..1) continues ``in`` alone with region blending and
the text prompt. ``split`` is round(lambda * T), ties going to the early stage.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .diffusion import NULL_PROMPT, ddim_invert, ddim_step, ddpm_step, forward_diffuse
from .errors import InvalidConfigError, InvalidShapeError, InvalidStepError
from .spectral import (
    BandThresholdParams,
    adaptive_low_threshold,
    adaptive_mid_thresholds,
    low_pass_mask,
    mid_pass_mask,
    substitute_band,
)

BRANCHES = ("un", "text", "in")
_CHOICES = {
    "gt_source": ("ddim-inversion", "forward-noise"),
    "sampler": ("ddim", "ddpm"),
    "fill": ("zero", "mean"),
    "low_donor": ("pre-denoise", "post-denoise"),
    "mid_donor": ("pre-denoise", "post-denoise"),
    "inversion_prompt": ("null", "text"),
}


@dataclass(frozen=True)
class PipelineConfig:
    T: int = 100
    lam: float = 0.6
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    band_params: BandThresholdParams = None   # None: defaults for the latent grid
    low_adaptive: bool = True
    mid_adaptive: bool = True
    fixed_th_lp: float = None                 # None: lam_f_lp
    fixed_th_mp: tuple = None                 # None: (lam_f_mp1, lam_f_mp2)
    branch_prompts: tuple = ("null", "text", "null")
    masked_attention: bool = True             # off for Case A
    early_branches: bool = True               # branches un/text, off for Case B
    mid_substitution: bool = True             # off for Case C
    gt_source: str = "ddim-inversion"
    sampler: str = "ddim"
    seed: int = 0
    fill: str = "zero"
    low_donor: str = "pre-denoise"
    mid_donor: str = "post-denoise"
    inversion_prompt: str = "null"

    def __post_init__(self):
        object.__setattr__(self, "branch_prompts", tuple(self.branch_prompts))
        if self.fixed_th_mp is not None:
            object.__setattr__(self, "fixed_th_mp", tuple(float(v) for v in self.fixed_th_mp))

    @property
    def split(self):
        return math.ceil(self.lam * self.T - 0.5)

    def validate(self, sched=None):
        if int(self.T) != self.T or self.T < 2:
            raise InvalidConfigError(f"T must be an integer >= 2, got {self.T}")
        if sched is not None and sched.T != self.T:
            raise InvalidConfigError(f"config T={self.T} but schedule has T={sched.T}")
        if not 0 < self.lam < 1:
            raise InvalidConfigError(f"lambda must lie in (0, 1), got {self.lam}")
        if not 1 <= self.split <= self.T - 1:
            raise InvalidConfigError(f"lambda*T rounds to {self.split}, outside [1, {self.T - 1}]")
        if len(self.branch_prompts) != 3 or any(p not in ("null", "text") for p in self.branch_prompts):
            raise InvalidConfigError(f"branch_prompts must be three of 'null'/'text', got {self.branch_prompts}")
        for name, allowed in _CHOICES.items():
            if getattr(self, name) not in allowed:
                raise InvalidConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.fixed_th_mp is not None and (len(self.fixed_th_mp) != 2 or not self.fixed_th_mp[1] > self.fixed_th_mp[0]):
            raise InvalidConfigError(f"fixed_th_mp must be (th_mp1, th_mp2) with th_mp2 > th_mp1, got {self.fixed_th_mp}")
        return self

    def params_for(self, h, w):
        params = self.band_params or BandThresholdParams.defaults(h, w)
        return params.check(h, w)


VARIANTS = {
    "caseA": {"masked_attention": False},
    "caseB": {"early_branches": False},
    "caseC": {"mid_substitution": False},
    "TTN": {"branch_prompts": ("text", "text", "null")},
    "NTT": {"branch_prompts": ("null", "text", "text")},
    "TTT": {"branch_prompts": ("text", "text", "text")},
    "caseI": {"low_adaptive": False, "mid_adaptive": False},
    "caseII": {"low_adaptive": True, "mid_adaptive": False},
    "caseIII": {"low_adaptive": False, "mid_adaptive": True},
    "baseline-bld": {},
}


def apply_variant(cfg, variant):
    if variant not in VARIANTS:
        raise InvalidConfigError(f"unknown variant {variant!r}; valid: {', '.join(VARIANTS)}")
    return replace(cfg, **VARIANTS[variant])


@dataclass(frozen=True)
class TraceEvent:
    phase: str     # "early" | "late" | "final"
    t: int
    branch: str
    op: str        # "blend" | "denoise" | "substitute"
    detail: str = ""


@dataclass
class PipelineLog:
    """What a run did, step by step.

    ``states`` holds ``(t, branch, latent)`` with ``t`` the noise level of the
    latent; ``blends`` holds ``(t, branch, blended_latent)`` right after each
    region blend, compared against ``gt[t]``.
    """

    gt: list = field(default_factory=list)
    states: list = field(default_factory=list)
    blends: list = field(default_factory=list)
    events: list = field(default_factory=list)
    thresholds: dict = field(default_factory=dict)

    def emit(self, phase, t, branch, op, detail=""):
        self.events.append(TraceEvent(phase, t, branch, op, detail))

    def count(self, **match):
        return sum(all(getattr(e, k) == v for k, v in match.items()) for e in self.events)

    def branch_states(self, branch):
        return {t: z for t, b, z in self.states if b == branch}


@dataclass(frozen=True)
class EarlyState:
    z_un: np.ndarray
    z_text: np.ndarray
    z_in: np.ndarray
    gt: tuple


@dataclass(frozen=True)
class BandPlan:
    low: object
    mid: object


def blend_unmasked(z_branch, z_gt_t, m_z):
    """Unmasked cells (m_z == 1) from the ground truth, the rest from the branch."""
    z_branch = np.asarray(z_branch, dtype=np.float64)
    z_gt_t = np.asarray(z_gt_t, dtype=np.float64)
    m = np.asarray(m_z)
    if z_branch.shape != z_gt_t.shape or m.shape != z_branch.shape[-2:]:
        raise InvalidShapeError(f"cannot blend {z_branch.shape} with {z_gt_t.shape} under mask {m.shape}")
    return np.where(m.astype(bool), z_gt_t, z_branch)


def fill_masked(latent, mask, rule="zero"):
    z = np.array(latent, dtype=np.float64)
    keep = mask.m_z.astype(bool)
    if rule == "zero":
        z[..., ~keep] = 0.0
    elif rule == "mean":
        for c in range(z.shape[0]):
            z[c][~keep] = z[c][keep].mean() if keep.any() else 0.0
    else:
        raise InvalidConfigError(f"unknown fill rule {rule!r}")
    return z


def plan_bands(mask, cfg, h, w):
    params = cfg.params_for(h, w)
    th_lp = adaptive_low_threshold(mask, params) if cfg.low_adaptive else (
        params.lam_f_lp if cfg.fixed_th_lp is None else cfg.fixed_th_lp)
    if cfg.mid_adaptive:
        th_mp = adaptive_mid_thresholds(mask, params)
    else:
        th_mp = (params.lam_f_mp1, params.lam_f_mp2) if cfg.fixed_th_mp is None else cfg.fixed_th_mp
    return BandPlan(low_pass_mask(h, w, th_lp), mid_pass_mask(h, w, *th_mp))


def _streams(seed):
    init, un, text, in_, gt = np.random.SeedSequence(seed).spawn(5)
    return {
        "init": np.random.default_rng(init),
        "un": np.random.default_rng(un),
        "text": np.random.default_rng(text),
        "in": np.random.default_rng(in_),
        "gt": np.random.default_rng(gt),
    }


def _reverse(z, t, eps, sched, cfg, rng):
    if cfg.sampler == "ddim":
        return ddim_step(z, t, eps, sched)
    return ddpm_step(z, t, eps, sched, rng.standard_normal(z.shape))


def gt_trajectory(z0, cfg, denoiser, sched, prompt=NULL_PROMPT, rng=None):
    """Ground-truth latents for steps 0..T by DDIM inversion or one-shot forward noise."""
    if cfg.gt_source == "ddim-inversion":
        inv_prompt = NULL_PROMPT if cfg.inversion_prompt == "null" else prompt
        return ddim_invert(z0, sched, denoiser, inv_prompt)
    rng = rng if rng is not None else _streams(cfg.seed)["gt"]
    eps = rng.standard_normal(np.shape(z0))
    return [forward_diffuse(z0, t, eps, sched) for t in range(sched.T + 1)]


def early_stage_step(state, t, mask, cfg, denoiser, sched, prompt=NULL_PROMPT,
                     bands=None, rngs=None, log=None):
    if not cfg.split < t <= cfg.T:
        raise InvalidStepError(f"early stage covers steps {cfg.T}..{cfg.split + 1}, got {t}")
    h, w = state.z_in.shape[-2:]
    bands = bands or plan_bands(mask, cfg, h, w)
    rngs = rngs or _streams(cfg.seed)
    log = log if log is not None else PipelineLog()
    p_un, p_text, p_in = (NULL_PROMPT if p == "null" else prompt for p in cfg.branch_prompts)

    z_un, z_text, donor_mid = state.z_un, state.z_text, None
    if cfg.early_branches:
        un_hat = blend_unmasked(state.z_un, state.gt[t], mask.m_z)
        log.emit("early", t, "un", "blend")
        log.blends.append((t, "un", un_hat))
        attn = mask if cfg.masked_attention else None
        log.emit("early", t, "un", "denoise", f"{p_un.kind}{'+attn' if attn is not None else ''}")
        z_un = _reverse(un_hat, t, denoiser.predict_noise(un_hat, t, p_un, attn_mask=attn), sched, cfg, rngs["un"])

        donor_low = un_hat if cfg.low_donor == "pre-denoise" else z_un
        text_tilde = substitute_band(donor_low, state.z_text, bands.low)
        log.emit("early", t, "text", "substitute", "low")
        log.emit("early", t, "text", "denoise", p_text.kind)
        z_text = _reverse(text_tilde, t, denoiser.predict_noise(text_tilde, t, p_text), sched, cfg, rngs["text"])
        donor_mid = text_tilde if cfg.mid_donor == "pre-denoise" else z_text

    in_tilde = state.z_in
    if cfg.mid_substitution and donor_mid is not None:
        in_tilde = substitute_band(donor_mid, state.z_in, bands.mid)
        log.emit("early", t, "in", "substitute", "mid")
    log.emit("early", t, "in", "denoise", p_in.kind)
    z_in = _reverse(in_tilde, t, denoiser.predict_noise(in_tilde, t, p_in), sched, cfg, rngs["in"])
    return EarlyState(z_un, z_text, z_in, state.gt)


def late_stage_step(z_in, t, mask, gt, cfg, denoiser, sched, prompt=NULL_PROMPT, rng=None, log=None, phase="late"):
    if not 1 <= t <= cfg.split and phase == "late":
        raise InvalidStepError(f"late stage covers steps {cfg.split}..1, got {t}")
    hat = blend_unmasked(z_in, gt[t], mask.m_z)
    if log is not None:
        log.emit(phase, t, "in", "blend")
        log.blends.append((t, "in", hat))
        log.emit(phase, t, "in", "denoise", prompt.kind)
    rng = rng if rng is not None else _streams(cfg.seed)["in"]
    return _reverse(hat, t, denoiser.predict_noise(hat, t, prompt), sched, cfg, rng)


def _final_blend(z, mask, gt, log):
    out = blend_unmasked(z, gt[0], mask.m_z)
    log.emit("final", 0, "in", "blend")
    log.blends.append((0, "in", out))
    log.states.append((0, "out", out))
    return out


def _setup(masked_latent, mask, prompt, cfg, denoiser, sched):
    cfg.validate(sched)
    z = np.asarray(masked_latent, dtype=np.float64)
    if z.ndim != 3 or z.shape[-2:] != mask.latent_shape:
        raise InvalidShapeError(f"latent {z.shape} does not match mask latent shape {mask.latent_shape}")
    bands = plan_bands(mask, cfg, *z.shape[-2:])
    rngs = _streams(cfg.seed)
    z0 = fill_masked(z, mask, cfg.fill)
    log = PipelineLog(thresholds={"low": bands.low.thresholds, "mid": bands.mid.thresholds})
    log.gt = gt_trajectory(z0, cfg, denoiser, sched, prompt, rngs["gt"])
    init = [rngs["init"].standard_normal(z.shape) for _ in BRANCHES]
    return bands, rngs, log, init


def run_ntn(masked_latent, mask, prompt, cfg, denoiser, sched):
    """Inpaint ``masked_latent`` where ``mask.m_z == 0``; returns ``(latent, PipelineLog)``."""
    bands, rngs, log, init = _setup(masked_latent, mask, prompt, cfg, denoiser, sched)
    state = EarlyState(*init, tuple(log.gt))
    for b, z in zip(BRANCHES, init):
        log.states.append((cfg.T, b, z))
    for t in range(cfg.T, cfg.split, -1):
        state = early_stage_step(state, t, mask, cfg, denoiser, sched, prompt, bands, rngs, log)
        log.states.extend([(t - 1, "un", state.z_un), (t - 1, "text", state.z_text), (t - 1, "in", state.z_in)])
    z = state.z_in
    for t in range(cfg.split, 0, -1):
        z = late_stage_step(z, t, mask, log.gt, cfg, denoiser, sched, prompt, rngs["in"], log)
        log.states.append((t - 1, "in", z))
    return _final_blend(z, mask, log.gt, log), log


def run_baseline_bld(masked_latent, mask, prompt, cfg, denoiser, sched):
    """Single text-guided branch with region blending at every step."""
    _, rngs, log, init = _setup(masked_latent, mask, prompt, cfg, denoiser, sched)
    z = init[2]
    log.states.append((cfg.T, "in", z))
    for t in range(cfg.T, 0, -1):
        z = late_stage_step(z, t, mask, log.gt, cfg, denoiser, sched, prompt, rngs["in"], log, phase="bld")
        log.states.append((t - 1, "in", z))
    return _final_blend(z, mask, log.gt, log), log
