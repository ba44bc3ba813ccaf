"""Pure-numpy implementations of the numeric kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature.
Inputs are assumed already validated and C-contiguous float64.
"""
import numpy as np

NAME = "python"


def dct_apply(grid, left, right):
    # left @ g @ right.T for every channel
    return np.matmul(np.matmul(left, grid), right.T)


def band_substitute(donor, recipient, bits, basis_h, basis_w):
    spec_d = np.matmul(np.matmul(basis_h, donor), basis_w.T)
    spec_r = np.matmul(np.matmul(basis_h, recipient), basis_w.T)
    mixed = np.where(bits.astype(bool), spec_d, spec_r)
    return np.matmul(np.matmul(basis_h.T, mixed), basis_w)


def gmm_posterior(z, means, log_w, sqrt_ab, var_t, coef):
    """Posterior mean and responsibilities for an isotropic shared-variance mixture.

    ``means`` is (K, N) flattened, ``z`` is (N,).
    """
    diff = z[None, :] - sqrt_ab * means
    d2 = np.einsum("kn,kn->k", diff, diff)
    logits = log_w - d2 / (2.0 * var_t)
    top = logits.max()
    shifted = np.exp(logits - top)
    resp = shifted / shifted.sum()
    mean = coef * z + (1.0 - coef * sqrt_ab) * (resp @ means)
    return mean, resp


_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def lbp_codes(img):
    h, w = img.shape
    center = img[1:-1, 1:-1]
    codes = np.zeros((h - 2, w - 2), dtype=np.int64)
    for bit, (dy, dx) in enumerate(_OFFSETS):
        neigh = img[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        codes |= (neigh >= center).astype(np.int64) << bit
    return codes
