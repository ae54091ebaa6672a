"""Knowledge-driven sparse recovery: Bernoulli-Gaussian MMSE shrinkage,
SMV-AMP, damped GMMV-AMP and SOMP.

Shapes follow the measurement model ``y[k] = A[k] h[k] + n[k]``:
``A`` is (K, G, V), ``Y`` is (..., G, K) and sparse estimates are (..., V, K).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE_FLOOR = 1e-12
EXP_CLAMP = 700.0


@dataclass(frozen=True)
class BernoulliGaussianPrior:
    gamma: float
    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "epsilon": self.epsilon}


@dataclass
class AmpState:
    estimate: np.ndarray  # (..., V, K)
    residual: np.ndarray  # (..., G, K)
    noise: np.ndarray  # (..., K)
    iteration: int


def _phi(h_tilde, gamma, epsilon, sigma2):
    """Posterior activity probability of each row; h_tilde (..., K), sigma2 broadcastable."""
    if gamma <= 0.0:
        return np.zeros(h_tilde.shape[:-1])
    if gamma >= 1.0:
        return np.ones(h_tilde.shape[:-1])
    sigma2 = np.maximum(sigma2, NOISE_FLOOR)
    p = epsilon / (sigma2 * (sigma2 + epsilon))
    with np.errstate(over="ignore"):  # an infinite quadratic form just saturates phi to 1
        quad = np.sum(p * np.abs(h_tilde) ** 2, axis=-1)
    log_det = np.sum(np.broadcast_to(np.log1p(epsilon / sigma2), h_tilde.shape), axis=-1)
    r = np.log1p(-gamma) - np.log(gamma) + log_det - quad
    return 1.0 / (1.0 + np.exp(np.clip(r, -EXP_CLAMP, EXP_CLAMP)))


def shrinkage_mmse(h_tilde, prior: BernoulliGaussianPrior, sigma2):
    """Row-wise MMSE denoiser under the common-support Bernoulli-Gaussian prior.

    Args:
        h_tilde: noisy rows, shape (..., K).
        prior: activity probability and active variance.
        sigma2: per-subcarrier noise powers, broadcastable to (..., K).

    Returns:
        (estimate, phi) where phi has shape (...,).
    """
    h_tilde = np.asarray(h_tilde)
    sigma2 = np.maximum(np.asarray(sigma2, dtype=float), NOISE_FLOOR)
    phi = _phi(h_tilde, prior.gamma, prior.epsilon, sigma2)
    wiener = prior.epsilon / (prior.epsilon + sigma2)
    return phi[..., None] * wiener * h_tilde, phi


def shrinkage_derivative(h_tilde, prior: BernoulliGaussianPrior, sigma2, phi=None):
    """d eta_k / d h_tilde_k with phi held constant: eps * phi / (eps + sigma2[k])."""
    h_tilde = np.asarray(h_tilde)
    sigma2 = np.maximum(np.asarray(sigma2, dtype=float), NOISE_FLOOR)
    if phi is None:
        phi = _phi(h_tilde, prior.gamma, prior.epsilon, sigma2)
    return phi[..., None] * np.broadcast_to(prior.epsilon / (prior.epsilon + sigma2), h_tilde.shape)


def smv_amp(y, A, prior: BernoulliGaussianPrior, iterations: int = 30, return_trace: bool = False):
    """Single-measurement-vector AMP with the scalar Bernoulli-Gaussian denoiser."""
    y = np.asarray(y)
    A = np.asarray(A)
    if A.ndim != 2 or y.shape != (A.shape[0],):
        raise ValueError(f"y {y.shape} incompatible with A {A.shape}")
    if iterations < 1:
        raise ValueError("need at least one iteration")
    G, V = A.shape
    h = np.zeros(V, dtype=complex)
    v = y.astype(complex)
    trace = []
    for t in range(1, iterations + 1):
        h_tilde = h + A.conj().T @ v
        sigma2 = np.array([np.vdot(v, v).real / G])
        h, phi = shrinkage_mmse(h_tilde[:, None], prior, sigma2)
        h = h[:, 0]
        b = shrinkage_derivative(h_tilde[:, None], prior, sigma2, phi).sum() / G
        v = y - A @ h + b * v
        if return_trace:
            trace.append(AmpState(h.copy(), v.copy(), sigma2, t))
    return (h, trace) if return_trace else h


def _check_gmmv(Y, A):
    if A.ndim != 3:
        raise ValueError("A must be shaped (K, G, V)")
    K, G, _ = A.shape
    if Y.shape[-2:] != (G, K):
        raise ValueError(f"Y trailing shape {Y.shape[-2:]} does not match (G, K) = {(G, K)}")


DEFAULT_DAMPING = 0.1


def gmmv_amp(Y, A, prior: BernoulliGaussianPrior, iterations: int = 80, damping: float = DEFAULT_DAMPING, return_trace: bool = False):
    """Generalized-MMV AMP with row-wise (common-support) shrinkage.

    ``damping`` alpha blends the residual, ``V_t <- alpha V_t + (1 - alpha) V_{t-1}``;
    alpha = 1 is the undamped recursion. The default keeps 90% of the previous
    residual; with structured pilot-times-dictionary matrices the lightly
    damped recursion (alpha = 0.9) diverges. Leading batch axes of ``Y`` are
    processed independently.
    """
    Y = np.asarray(Y)
    A = np.asarray(A)
    _check_gmmv(Y, A)
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    if iterations < 1:
        raise ValueError("need at least one iteration")
    G = A.shape[1]
    Ah = np.conj(A)
    H = np.zeros(Y.shape[:-2] + (A.shape[2], A.shape[0]), dtype=complex)
    Vres = Y.astype(complex)
    trace = []
    for t in range(1, iterations + 1):
        H_tilde = H + np.einsum("kgv,...gk->...vk", Ah, Vres)
        sigma2 = np.maximum(np.sum(np.abs(Vres) ** 2, axis=-2) / G, NOISE_FLOOR)
        H, phi = shrinkage_mmse(H_tilde, prior, sigma2[..., None, :])
        b = np.sum(phi, axis=-1)[..., None] * prior.epsilon / (prior.epsilon + sigma2) / G
        V_new = Y - np.einsum("kgv,...vk->...gk", A, H) + b[..., None, :] * Vres
        Vres = V_new if damping == 1.0 else damping * V_new + (1.0 - damping) * Vres
        if return_trace:
            trace.append(AmpState(H.copy(), Vres.copy(), sigma2, t))
    return (H, trace) if return_trace else H


class RankDeficiencyError(np.linalg.LinAlgError):
    def __init__(self, iteration: int, subcarrier: int):
        super().__init__(f"selected columns are rank deficient at SOMP iteration {iteration} (subcarrier {subcarrier})")
        self.iteration = iteration
        self.subcarrier = subcarrier


def somp(Y, A, sparsity: int) -> np.ndarray:
    """Simultaneous OMP over per-subcarrier dictionaries.

    Each iteration adds the unused column maximising sum_k |A[k]^H r[k]|
    (lowest index on ties), then re-fits every subcarrier by least squares on
    the shared support.
    """
    Y = np.asarray(Y)
    A = np.asarray(A)
    _check_gmmv(Y, A)
    if Y.ndim != 2:
        raise ValueError("somp takes a single (G, K) observation")
    K, G, V = A.shape
    if not 1 <= sparsity <= min(G, V):
        raise ValueError(f"sparsity must lie in 1..{min(G, V)}")
    support: list[int] = []
    R = Y.astype(complex)
    coef = np.zeros((0, K), dtype=complex)
    for it in range(1, sparsity + 1):
        corr = np.sum(np.abs(np.einsum("kgv,gk->vk", A.conj(), R)), axis=1)
        corr[support] = -np.inf
        support.append(int(np.argmax(corr)))
        coef = np.empty((len(support), K), dtype=complex)
        for k in range(K):
            sub = A[k][:, support]
            sol, _, rank, _ = np.linalg.lstsq(sub, Y[:, k], rcond=None)
            if rank < len(support):
                raise RankDeficiencyError(it, k + 1)
            coef[:, k] = sol
        R = Y - np.einsum("kgs,sk->gk", A[:, :, support], coef)
    H = np.zeros((V, K), dtype=complex)
    H[support] = coef
    return H


# --- problem conditioning -------------------------------------------------


def normalize_measurements(Y, A):
    """Rescale ``Y`` and ``A`` by the RMS column norm of ``A``.

    AMP expects roughly unit-norm columns; dividing both sides by the same
    constant leaves the sparse code and hence the channel estimate unchanged.
    Returns (Y_scaled, A_scaled, scale).
    """
    A = np.asarray(A)
    scale = measurement_scale(A)
    return np.asarray(Y) / scale, A / scale, scale


def measurement_scale(A) -> float:
    """RMS column norm of the stacked A[k], shape (K, G, V)."""
    return float(np.sqrt(np.mean(np.sum(np.abs(np.asarray(A)) ** 2, axis=1))))


def moment_prior(Y, A, gamma: float) -> BernoulliGaussianPrior:
    """Bernoulli-Gaussian prior whose active variance matches the received energy.

    With unit-norm columns E||y[k]||^2 ~ gamma * V * epsilon, which fixes
    epsilon once the activity rate is chosen.
    """
    Y = np.asarray(Y)
    A = np.asarray(A)
    V = A.shape[2]
    col_energy = float(np.mean(np.sum(np.abs(A) ** 2, axis=1)))
    per_k = float(np.mean(np.sum(np.abs(Y) ** 2, axis=-2)))
    epsilon = max(per_k / (gamma * V * col_energy), 1e-12)
    return BernoulliGaussianPrior(gamma=gamma, epsilon=epsilon)


def sparse_to_channel(H_sparse, dictionary) -> np.ndarray:
    """Spatial-frequency channel [D[k] h[k]]_k, shape (..., N_AP, K)."""
    return np.einsum("knv,...vk->...nk", np.asarray(dictionary), np.asarray(H_sparse))


def nmse(estimate, truth, axis=(-2, -1)) -> np.ndarray:
    """||X_hat - X||_F^2 / ||X||_F^2 per sample (linear scale)."""
    truth = np.asarray(truth)
    den = np.sum(np.abs(truth) ** 2, axis=axis)
    if np.any(den == 0):
        raise ValueError("NMSE undefined for an all-zero reference")
    return np.sum(np.abs(np.asarray(estimate) - truth) ** 2, axis=axis) / den


def to_db(x) -> np.ndarray:
    return 10 * np.log10(x)
