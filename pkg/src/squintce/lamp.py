"""Unrolled GMMV-LAMP: trainable per-layer matrices, a shared Bernoulli-Gaussian
prior, learned Onsager and momentum maps, and optional learnable grids.

The network runs in torch (complex128) so gradients come from autograd.
With initial parameters it reproduces undamped :func:`gmmv_amp` exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .estimators import EXP_CLAMP, NOISE_FLOOR
from .geometry import ArrayGeometry

log = logging.getLogger(__name__)

DTYPE = torch.complex128


# --- parameters ------------------------------------------------------------


@dataclass
class LampParams:
    b_mats: np.ndarray  # (T, K, G, V)
    gamma: float
    epsilon: float
    g_maps: np.ndarray  # (T, K, K); b_t = G_t @ b_bar_t
    f_maps: np.ndarray  # (T, K, K); momentum V_{t-1} @ F_t
    grid: tuple[np.ndarray, np.ndarray] | None = None  # (distances, angles) of a learnable WRD

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        T, K = self.b_mats.shape[:2]
        if self.g_maps.shape != (T, K, K) or self.f_maps.shape != (T, K, K):
            raise ValueError("g_maps / f_maps must be shaped (T, K, K)")

    @property
    def layers(self) -> int:
        return self.b_mats.shape[0]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        """(T, G, V, K)."""
        T, K, G, V = self.b_mats.shape
        return T, G, V, K

    def copy(self) -> "LampParams":
        grid = None if self.grid is None else (self.grid[0].copy(), self.grid[1].copy())
        return LampParams(self.b_mats.copy(), self.gamma, self.epsilon, self.g_maps.copy(), self.f_maps.copy(), grid)


def init_params(a: np.ndarray, layers: int, gamma0: float = 1e-3, epsilon0: float = 1.0, grid=None) -> LampParams:
    """B_t[k] = A[k], G_t = I, F_t = 0 for every layer.

    ``gamma0`` defaults to a small positive floor because gamma = 0 makes the
    activity posterior identically zero and the network untrainable.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 3:
        raise ValueError("A must be shaped (K, G, V)")
    if layers < 0:
        raise ValueError("layers must be >= 0")
    K = a.shape[0]
    eye = np.broadcast_to(np.eye(K, dtype=complex), (layers, K, K)).copy()
    if grid is not None:
        grid = (np.array(grid[0], dtype=float), np.array(grid[1], dtype=float))
    return LampParams(
        b_mats=np.broadcast_to(a, (layers,) + a.shape).copy(),
        gamma=gamma0,
        epsilon=epsilon0,
        g_maps=eye,
        f_maps=np.zeros((layers, K, K), dtype=complex),
        grid=grid,
    )


# --- measurement operators ---------------------------------------------------


@dataclass(frozen=True)
class GridOperator:
    """A[k] = S[k] D[k](grid) / scale for a near-field grid that may be trained."""

    geometry: ArrayGeometry
    composed: np.ndarray  # S[k] stacked (K, G, N_AP)
    scale: float = 1.0

    def matrices(self, distances: torch.Tensor, angles: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        y_ant = torch.as_tensor(self.geometry.antenna_y, dtype=torch.float64)
        lam_k = torch.as_tensor(self.geometry.subcarrier_wavelengths(), dtype=torch.float64)
        x = distances * torch.cos(angles)
        y = -distances * torch.sin(angles)
        dist = torch.sqrt(x[None, :] ** 2 + (y_ant[:, None] - y[None, :]) ** 2)
        rel = dist - dist[0]
        D = torch.exp(-2j * math.pi * rel[None, :, :] / lam_k[:, None, None])
        S = torch.as_tensor(self.composed, dtype=DTYPE)
        return S @ D / self.scale, D


class _Tensors:
    """Trainable leaves in their unconstrained parameterisation."""

    def __init__(self, params: LampParams):
        self.b = torch.tensor(params.b_mats, dtype=DTYPE)
        self.gamma_logit = torch.tensor(math.log(params.gamma) - math.log1p(-params.gamma), dtype=torch.float64)
        self.log_eps = torch.tensor(math.log(params.epsilon), dtype=torch.float64)
        self.g = torch.tensor(params.g_maps, dtype=DTYPE)
        self.f = torch.tensor(params.f_maps, dtype=DTYPE)
        self.dist = self.ang = None
        if params.grid is not None:
            self.dist = torch.tensor(params.grid[0], dtype=torch.float64)
            self.ang = torch.tensor(params.grid[1], dtype=torch.float64)

    def named(self) -> dict[str, torch.Tensor]:
        out = {"B": self.b, "gamma": self.gamma_logit, "epsilon": self.log_eps, "G": self.g, "F": self.f}
        if self.dist is not None:
            out["c_d"] = self.dist
            out["c_phi"] = self.ang
        return out

    def to_params(self) -> LampParams:
        grid = None
        if self.dist is not None:
            grid = (self.dist.detach().numpy().copy(), self.ang.detach().numpy().copy())
        return LampParams(
            b_mats=self.b.detach().numpy().copy(),
            gamma=float(torch.sigmoid(self.gamma_logit)),
            epsilon=float(torch.exp(self.log_eps)),
            g_maps=self.g.detach().numpy().copy(),
            f_maps=self.f.detach().numpy().copy(),
            grid=grid,
        )


def _operator_matrices(operator, tensors: _Tensors, dictionary=None):
    """(A, D) as tensors; D may be None when the caller has no dictionary."""
    if isinstance(operator, GridOperator):
        if tensors.dist is None:
            raise ValueError("a grid operator needs params with a grid")
        return operator.matrices(tensors.dist, tensors.ang)
    if tensors.dist is not None:
        raise ValueError("params carry a learnable grid but the operator is a fixed A")
    A = torch.as_tensor(np.asarray(operator), dtype=DTYPE)
    D = None if dictionary is None else torch.as_tensor(np.asarray(dictionary), dtype=DTYPE)
    return A, D


def _unrolled(Y, A, t: _Tensors, layers: int):
    """Run ``layers`` layers on a batch Y (S, G, K); returns the per-layer estimates."""
    G = A.shape[1]
    gamma_term = -t.gamma_logit  # log((1 - gamma) / gamma)
    eps = torch.exp(t.log_eps)
    H = torch.zeros(Y.shape[0], A.shape[2], A.shape[0], dtype=DTYPE)
    V = Y
    out = []
    for i in range(layers):
        H_tilde = H + torch.einsum("kgv,sgk->svk", t.b[i].conj(), V)
        sigma2 = torch.clamp(torch.sum(V.real**2 + V.imag**2, dim=1) / G, min=NOISE_FLOOR)  # (S, K)
        p = eps / (sigma2 * (sigma2 + eps))
        quad = torch.sum(p[:, None, :] * (H_tilde.real**2 + H_tilde.imag**2), dim=-1)
        log_det = torch.sum(torch.log1p(eps / sigma2), dim=-1)
        r = torch.clamp(gamma_term + log_det[:, None] - quad, -EXP_CLAMP, EXP_CLAMP)
        phi = 1.0 / (1.0 + torch.exp(r))  # (S, V)
        wiener = eps / (eps + sigma2)  # (S, K)
        H = phi[:, :, None] * wiener[:, None, :] * H_tilde
        b_bar = torch.sum(phi, dim=1)[:, None] * wiener / G
        b = b_bar.to(DTYPE) @ t.g[i].transpose(0, 1)
        V_bar = Y - torch.einsum("kgv,svk->sgk", A, H) + b[:, None, :] * V
        V = V_bar + V @ t.f[i]
        out.append(H)
    return out


def _check_inputs(Y: np.ndarray, params: LampParams):
    T, G, V, K = params.shape
    if Y.shape[-2:] != (G, K):
        raise ValueError(f"Y trailing shape {Y.shape[-2:]} does not match params (G, K) = {(G, K)}")


@dataclass
class LampOutput:
    estimate: np.ndarray  # (..., V, K) after the last layer
    iterates: list[np.ndarray]  # one (..., V, K) estimate per layer


def lamp_forward(Y, operator, params: LampParams, layers: int | None = None) -> LampOutput:
    """Run the network; ``operator`` is A (K, G, V) or a :class:`GridOperator`."""
    Y = np.asarray(Y)
    _check_inputs(Y, params)
    layers = params.layers if layers is None else layers
    if not 0 <= layers <= params.layers:
        raise ValueError(f"layers must lie in 0..{params.layers}")
    batch = Y.shape[:-2]
    Yt = torch.as_tensor(Y.reshape((-1,) + Y.shape[-2:]), dtype=DTYPE)
    tensors = _Tensors(params)
    with torch.no_grad():
        A, _ = _operator_matrices(operator, tensors)
        if A.shape[1:] != (params.shape[1], params.shape[2]) or A.shape[0] != params.shape[3]:
            raise ValueError(f"A shape {tuple(A.shape)} does not match params")
        iterates = [h.numpy().reshape(batch + h.shape[1:]) for h in _unrolled(Yt, A, tensors, layers)]
    V, K = params.shape[2], params.shape[3]
    zero = np.zeros(batch + (V, K), dtype=complex)
    return LampOutput(estimate=iterates[-1] if iterates else zero, iterates=iterates)


def lamp_dictionary(operator, params: LampParams, dictionary=None) -> np.ndarray:
    """D[k] in effect for these params, shape (K, N_AP, V)."""
    if isinstance(operator, GridOperator):
        with torch.no_grad():
            return operator.matrices(torch.tensor(params.grid[0]), torch.tensor(params.grid[1]))[1].numpy()
    if dictionary is None:
        raise ValueError("a fixed operator needs the dictionary passed explicitly")
    return np.asarray(dictionary)


# --- loss ---------------------------------------------------------------------


def loss_nmse(H_hat, H_true) -> float:
    """Batch-mean of ||H_hat - H||_F^2 / ||H||_F^2 over trailing (N_AP, K) axes."""
    H_hat = np.asarray(H_hat)
    H_true = np.asarray(H_true)
    if H_hat.shape != H_true.shape:
        raise ValueError(f"shape mismatch {H_hat.shape} vs {H_true.shape}")
    den = np.sum(np.abs(H_true) ** 2, axis=(-2, -1))
    if np.any(den == 0):
        raise ValueError("NMSE undefined for an all-zero reference")
    return float(np.mean(np.sum(np.abs(H_hat - H_true) ** 2, axis=(-2, -1)) / den))


def _torch_loss(H_sparse, D, H_true):
    H_dl = torch.einsum("knv,svk->snk", D, H_sparse)
    err = H_dl - H_true
    num = torch.sum(err.real**2 + err.imag**2, dim=(1, 2))
    den = torch.sum(H_true.real**2 + H_true.imag**2, dim=(1, 2))
    return torch.mean(num / den)


def layer_nmse_trace(Y, H_true, operator, params: LampParams, dictionary=None) -> np.ndarray:
    """Mean NMSE (linear) after each layer; entry 0 is the zero estimate (1.0)."""
    out = lamp_forward(Y, operator, params)
    D = lamp_dictionary(operator, params, dictionary)
    trace = [1.0]
    for H in out.iterates:
        trace.append(loss_nmse(np.einsum("knv,...vk->...nk", D, H), H_true))
    return np.array(trace)


# --- gradient verification ------------------------------------------------------


class GradientCheckError(RuntimeError):
    pass


def _loss_fn(Y, H_true, operator, dictionary, layers):
    Yt = torch.as_tensor(Y, dtype=DTYPE)
    Ht = torch.as_tensor(H_true, dtype=DTYPE)

    def f(tensors: _Tensors):
        A, D = _operator_matrices(operator, tensors, dictionary)
        return _torch_loss(_unrolled(Yt, A, tensors, layers)[-1], D, Ht)

    return f


def gradient_check(Y, H_true, operator, params: LampParams, dictionary=None, layers=None, step=1e-5, max_coords=64) -> dict[str, float]:
    """Autograd vs central differences, per parameter class.

    For each class the first ``max_coords`` real coordinates are perturbed;
    for complex classes that is the real and imaginary part of the first
    ``max_coords // 2`` entries (all of B_1[1] on the probe). The error of a
    coordinate is |analytic - numeric| / max(|numeric|, 1e-3 * max|numeric|);
    the report holds the worst error per class.
    """
    layers = params.layers if layers is None else layers
    f = _loss_fn(np.asarray(Y), np.asarray(H_true), operator, dictionary, layers)
    tensors = _Tensors(params)
    leaves = tensors.named()
    for x in leaves.values():
        x.requires_grad_(True)
    loss = f(tensors)
    grads = torch.autograd.grad(loss, list(leaves.values()))
    report = {}
    with torch.no_grad():
        for (name, x), g in zip(leaves.items(), grads):
            views = [x.real, x.imag] if x.is_complex() else [x]
            gviews = [g.real, g.imag] if x.is_complex() else [g]
            n_entries = min(x.numel(), max_coords // len(views))
            analytic, numeric = [], []
            for view, gv in zip(views, gviews):
                flat = view.reshape(-1)
                for i in range(n_entries):
                    orig = flat[i].item()
                    flat[i] = orig + step
                    up = f(tensors).item()
                    flat[i] = orig - step
                    down = f(tensors).item()
                    flat[i] = orig
                    numeric.append((up - down) / (2 * step))
                    analytic.append(gv.reshape(-1)[i].item())
            analytic, numeric = np.array(analytic), np.array(numeric)
            floor = max(1e-3 * np.max(np.abs(numeric)), 1e-300)
            report[name] = float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)))
    return report


def probe_problem(seed: int = 0, with_grid: bool = False):
    """Tiny (G=4, V=8, K=2, T=2, 2 samples) instance for the gradient contract.

    Returns (Y, H_true, operator, params, dictionary), the argument order of
    :func:`gradient_check`.
    """
    rng = np.random.default_rng(seed)
    G, V, K, N, T, S = 4, 8, 2, 6, 2, 2
    cn = lambda *s: (rng.normal(size=s) + 1j * rng.normal(size=s)) / np.sqrt(2)
    if with_grid:
        geo = ArrayGeometry(N, n_subcarriers=K)
        op = GridOperator(geo, cn(K, G, N) / np.sqrt(N), 1.0)
        grid = (np.exp(rng.uniform(np.log(0.02), np.log(0.2), V)), rng.uniform(-1.2, 1.2, V))
        with torch.no_grad():
            A, D = op.matrices(torch.tensor(grid[0]), torch.tensor(grid[1]))
        A, D = A.numpy(), D.numpy()
    else:
        D = cn(K, N, V)
        A = np.einsum("kgn,knv->kgv", cn(K, G, N), D) / np.sqrt(G * N)
        op, grid = A, None
    H_sparse = np.zeros((S, V, K), dtype=complex)
    for s in range(S):
        rows = rng.choice(V, 2, replace=False)
        H_sparse[s, rows] = cn(2, K)
    Y = np.einsum("kgv,svk->sgk", A, H_sparse) + 0.05 * cn(S, G, K)
    H_true = np.einsum("knv,svk->snk", D, H_sparse)
    params = init_params(A, T, gamma0=0.3, epsilon0=1.0, grid=grid)
    # move off the initial point so G_t and F_t gradients are generic
    params.g_maps = params.g_maps + 0.1 * cn(T, K, K)
    params.f_maps = 0.1 * cn(T, K, K)
    return Y, H_true, op, params, (None if with_grid else D)


# --- training ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrainSchedule:
    steps_per_stage: int = 100
    learning_rate: float = 3e-2
    optimizer: str = "adam"  # "adam" or "gd" (plain gradient descent)
    dict_active_layers: tuple[int, ...] = (1, 2)
    check_gradients: bool = True
    grad_tolerance: float = 1e-4

    def __post_init__(self):
        if self.steps_per_stage < 0:
            raise ValueError("steps_per_stage must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, stage: int, step: int):
        super().__init__(f"non-finite training loss at stage {stage}, step {step}")
        self.stage = stage
        self.step = step


@dataclass
class TrainResult:
    params: LampParams
    history: list[dict] = field(default_factory=list)  # one entry per (stage, step)
    stage_losses: list[tuple[float, float]] = field(default_factory=list)  # (start, end) per stage
    gradient_report: dict[str, float] | None = None
    val_initial: float | None = None
    val_final: float | None = None
    stage_params: list[LampParams] = field(default_factory=list)  # snapshot after each stage
    stage_val: list[float] = field(default_factory=list)  # validation NMSE of the t-layer network after stage t


def _active(tensors: _Tensors, stage: int, schedule: TrainSchedule) -> list[torch.Tensor]:
    """Leaves trained during stage ``stage`` (1-based): layers 1..stage plus globals."""
    return [tensors.b, tensors.g, tensors.f, tensors.gamma_logit, tensors.log_eps] + (
        [tensors.dist, tensors.ang] if tensors.dist is not None and stage in schedule.dict_active_layers else []
    )


def _layer_mask(x: torch.Tensor, stage: int) -> torch.Tensor:
    m = torch.zeros(x.shape[0], dtype=torch.float64)
    m[:stage] = 1.0
    return m.reshape((-1,) + (1,) * (x.ndim - 1))


def train_lamp(
    Y,
    H_true,
    operator,
    layers: int,
    schedule: TrainSchedule = TrainSchedule(),
    seed: int = 0,
    dictionary=None,
    init: LampParams | None = None,
    Y_val=None,
    H_val=None,
    gamma0: float = 1e-3,
    epsilon0: float = 1.0,
) -> TrainResult:
    """Layer-by-layer ("all-layer") training of the unrolled network.

    Stage t optimises the t-layer NMSE over layers 1..t plus (gamma, epsilon)
    and, for the stages in ``schedule.dict_active_layers``, the grid. Each
    stage keeps its best iterate, so the stage objective never ends above
    where it started. If validation data are given and the trained network is
    worse on them than the initial one, the initial parameters are returned.
    """
    Y = np.asarray(Y)
    H_true = np.asarray(H_true)
    if Y.ndim != 3 or H_true.ndim != 3 or Y.shape[0] != H_true.shape[0]:
        raise ValueError("expected Y (S, G, K) and H_true (S, N_AP, K) with matching S")
    if init is None:
        if isinstance(operator, GridOperator):
            raise ValueError("a grid operator needs explicit init params carrying the grid")
        init = init_params(operator, layers, gamma0, epsilon0)
    if init.layers != layers:
        raise ValueError("init params have a different layer count")
    _check_inputs(Y, init)
    torch.manual_seed(seed)

    report = None
    if schedule.check_gradients:
        report = gradient_check(*probe_problem(seed, with_grid=isinstance(operator, GridOperator)))
        bad = {k: v for k, v in report.items() if not v <= schedule.grad_tolerance}
        if bad:
            raise GradientCheckError(f"autograd disagrees with finite differences: {bad}")

    result = TrainResult(params=init.copy(), gradient_report=report)
    tensors = _Tensors(init)
    f = _loss_fn(Y, H_true, operator, dictionary, layers)

    def val_loss(p):
        return layer_nmse_trace(Y_val, H_val, operator, p, dictionary)[-1]

    if Y_val is not None:
        result.val_initial = val_loss(init)

    for stage in range(1, layers + 1):
        f_stage = _loss_fn(Y, H_true, operator, dictionary, stage)
        leaves = _active(tensors, stage, schedule)
        masks = {id(tensors.b): _layer_mask(tensors.b, stage), id(tensors.g): _layer_mask(tensors.g, stage), id(tensors.f): _layer_mask(tensors.f, stage)}
        for x in leaves:
            x.requires_grad_(True)
        opt = (torch.optim.Adam if schedule.optimizer == "adam" else torch.optim.SGD)(leaves, lr=schedule.learning_rate)
        best_loss, best_state = math.inf, None
        start_loss = None
        for step in range(schedule.steps_per_stage + 1):
            opt.zero_grad()
            loss = f_stage(tensors)
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteLossError(stage, step)
            if start_loss is None:
                start_loss = value
            if value < best_loss:
                best_loss = value
                best_state = [x.detach().clone() for x in leaves]
            result.history.append({"stage": stage, "step": step, "loss": value})
            if step == schedule.steps_per_stage:
                break
            loss.backward()
            for x in leaves:
                m = masks.get(id(x))
                if m is not None and x.grad is not None:
                    x.grad.mul_(m)
            opt.step()
            if tensors.dist is not None:
                with torch.no_grad():
                    tensors.dist.clamp_(min=1e-3)
        with torch.no_grad():
            for x, best in zip(leaves, best_state):
                x.copy_(best)
                x.requires_grad_(False)
        result.stage_losses.append((start_loss, best_loss))
        snap = tensors.to_params()
        result.stage_params.append(snap)
        if Y_val is not None:
            result.stage_val.append(float(layer_nmse_trace(Y_val, H_val, operator, snap, dictionary)[stage]))
        log.info("stage %d: loss %.4g -> %.4g", stage, start_loss, best_loss)

    result.params = tensors.to_params()
    if Y_val is not None:
        result.val_final = val_loss(result.params)
        if result.val_final > result.val_initial:
            log.warning("trained network is worse on validation data; keeping the initial parameters")
            result.params, result.val_final = init.copy(), result.val_initial
    return result


# --- checkpoints ---------------------------------------------------------------------

CKPT_MAGIC = b"SQLP"
_CKPT_HEADER = struct.Struct("<4s6I")  # magic, version, T, G, V, K, has_grid


def save_checkpoint(
    path, params: LampParams, schedule: TrainSchedule | None = None, seed: int | None = None, dataset_hash: str | None = None, extra: dict | None = None
) -> None:
    """Binary parameter planes plus a JSON manifest next to it (``<path>.json``).

    Layout: magic "SQLP", uint32 version, T, G, V, K, has_grid; then float32
    planes in order B.real, B.imag (T, K, G, V), G.real, G.imag (T, K, K),
    F.real, F.imag (T, K, K), [gamma, epsilon], and if has_grid the V
    distances followed by the V angles.
    """
    T, G, V, K = params.shape
    planes = [params.b_mats.real, params.b_mats.imag, params.g_maps.real, params.g_maps.imag, params.f_maps.real, params.f_maps.imag, np.array([params.gamma, params.epsilon])]
    if params.grid is not None:
        planes += [params.grid[0], params.grid[1]]
    body = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in planes)
    path = Path(path)
    path.write_bytes(_CKPT_HEADER.pack(CKPT_MAGIC, 1, T, G, V, K, int(params.grid is not None)) + body)
    manifest = {
        "version": 1,
        "layers": T,
        "gamma": params.gamma,
        "epsilon": params.epsilon,
        "schedule": None if schedule is None else asdict(schedule),
        "seed": seed,
        "dataset_hash": dataset_hash,
        "checkpoint_sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
        **(extra or {}),
    }
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(path) -> LampParams:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise ValueError("checkpoint shorter than its header")
    magic, version, T, G, V, K, has_grid = _CKPT_HEADER.unpack_from(raw)
    if magic != CKPT_MAGIC or version != 1:
        raise ValueError("not a version-1 LAMP checkpoint")
    sizes = [T * K * G * V] * 2 + [T * K * K] * 4 + [2] + ([V, V] if has_grid else [])
    data = np.frombuffer(raw, dtype="<f4", offset=_CKPT_HEADER.size).astype(float)
    if data.size != sum(sizes):
        raise ValueError(f"checkpoint payload holds {data.size} floats, expected {sum(sizes)}")
    parts = np.split(data, np.cumsum(sizes)[:-1])
    b = (parts[0] + 1j * parts[1]).reshape(T, K, G, V)
    g = (parts[2] + 1j * parts[3]).reshape(T, K, K)
    f = (parts[4] + 1j * parts[5]).reshape(T, K, K)
    grid = (parts[7], parts[8]) if has_grid else None
    return LampParams(b, float(parts[6][0]), float(parts[6][1]), g, f, grid)
