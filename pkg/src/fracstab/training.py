"""Stabilization losses and parameter fitting.

The loss has three parts, all averaged over frames pooled across videos:

* squared Euclidean error between stabilized output and ground truth;
* a time-delay term: the squared coefficient of the residual ``x - p``
  projected onto the ground-truth motion ``p(t) - p(t-1)``, i.e. how far the
  output trails back along the path just travelled;
* a smoothness term: distance from ``x(t)`` to the chord through
  ``x(t-1)`` and ``x(t+1)``, with the chord parameter ``q`` pulled towards
  the midpoint by ``lambda3``.

``total = euclidean + lambda2 * time_delay + lambda1 * smooth``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientDataError, ShapeError
from .optim import nelder_mead
from .stabilizer import COV_FLOOR, StabilizerParams, build_eigenbasis, stabilize_many
from .trajectory import TrajectorySequence

log = logging.getLogger(__name__)

MOTION_EPS = 1e-12
DENOM_EPS = 1e-12


@dataclass
class TrainConfig:
    lambda1: float = 1.0
    lambda2: float = 10.0
    lambda3: float = 1.0
    max_iters: int = 600
    xtol: float = 1e-4
    ftol: float = 1e-7
    seed: int = 0
    tie_groups: int | None = 4
    step: float = 0.5
    min_motion: float = 0.5
    restart_every: int | None = 150

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (self.xtol > 0 and self.ftol > 0):
            raise ValueError("simplex tolerances must be positive")
        if self.min_motion < 0:
            raise ValueError("min_motion must be non-negative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass
class LossBreakdown:
    reg_euclidean: float
    reg_time_delay: float
    tm_smooth: float
    total: float
    per_video: list = field(default_factory=list)

    def row(self):
        return (self.reg_euclidean, self.reg_time_delay, self.tm_smooth, self.total)


def _flat(seq):
    if isinstance(seq, TrajectorySequence):
        return seq.flat()
    arr = np.asarray(seq, dtype=np.float64)
    return arr.reshape(arr.shape[0], -1)


def _reg_sums(x, p, min_motion=1e-6):
    if x.shape != p.shape:
        raise ShapeError(f"output and ground truth differ in shape: {x.shape} vs {p.shape}")
    euclid = float(np.sum((x - p) ** 2))
    v = np.diff(p, axis=0)
    r = (x - p)[1:]
    vv = np.sum(v * v, axis=1)
    moving = vv >= max(min_motion**2, MOTION_EPS)
    coef = np.sum(v[moving] * r[moving], axis=1) / vv[moving]
    return euclid, x.shape[0], float(np.sum(coef**2)), int(moving.sum())


def loss_reg(x_seqs, p_seqs, min_motion=1e-6):
    """Return ``(euclidean, time_delay)``, both unweighted.

    Frames whose ground-truth motion is shorter than ``min_motion`` pixels
    have an undefined (or noise-dominated) delay coefficient; they
    contribute nothing and are left out of the delay average.
    """
    if len(x_seqs) != len(p_seqs):
        raise ShapeError(f"{len(x_seqs)} output sequences but {len(p_seqs)} ground-truth sequences")
    e_sum = e_n = d_sum = d_n = 0
    for x, p in zip(x_seqs, p_seqs):
        e, n, d, m = _reg_sums(_flat(x), _flat(p), min_motion)
        e_sum, e_n, d_sum, d_n = e_sum + e, e_n + n, d_sum + d, d_n + m
    euclid = e_sum / e_n if e_n else 0.0
    delay = d_sum / d_n if d_n else 0.0
    return euclid, delay


def closed_form_q(x_prev, x_cur, x_next, lambda3: float) -> float:
    """Minimiser over ``q`` of ``|x_cur - q x_prev - (1-q) x_next|^2 + lambda3 (q - 0.5)^2``."""
    x_prev, x_cur, x_next = (np.asarray(a, dtype=np.float64).ravel() for a in (x_prev, x_cur, x_next))
    if not (x_prev.shape == x_cur.shape == x_next.shape):
        raise ShapeError("closed_form_q needs three vectors of equal length")
    d = x_prev - x_next
    b = x_cur - x_next
    den = d @ d + lambda3
    if den < DENOM_EPS:
        return 0.5
    return float((d @ b + 0.5 * lambda3) / den)


def _tm_terms(x, lambda3):
    """Per-interior-frame smoothness terms for one ``(T, D)`` sequence."""
    if x.shape[0] < 3:
        return np.zeros(0)
    prev, cur, nxt = x[:-2], x[1:-1], x[2:]
    d = prev - nxt
    b = cur - nxt
    den = np.sum(d * d, axis=1) + lambda3
    ok = den >= DENOM_EPS
    q = np.full(den.shape, 0.5)
    q[ok] = (np.sum(d[ok] * b[ok], axis=1) + 0.5 * lambda3) / den[ok]
    resid = b - q[:, None] * d
    return np.sum(resid * resid, axis=1) + lambda3 * (q - 0.5) ** 2


def loss_tm(x_seqs, lambda3: float) -> float:
    """Mean over interior frames of the smoothness bracket at the optimal ``q``."""
    terms = [_tm_terms(_flat(x), lambda3) for x in x_seqs]
    n = sum(t.size for t in terms)
    return float(sum(t.sum() for t in terms) / n) if n else 0.0


def loss_from_outputs(x_seqs, p_seqs, config: TrainConfig) -> LossBreakdown:
    if len(x_seqs) != len(p_seqs):
        raise ShapeError(f"{len(x_seqs)} output sequences but {len(p_seqs)} ground-truth sequences")
    per_video = []
    e_sum = e_n = d_sum = d_n = t_sum = t_n = 0
    for x, p in zip(x_seqs, p_seqs):
        xf, pf = _flat(x), _flat(p)
        e, n, d, m = _reg_sums(xf, pf, config.min_motion)
        tm = _tm_terms(xf, config.lambda3)
        per_video.append({
            "video_id": getattr(p, "video_id", str(len(per_video))),
            "euclidean_sum": e, "frames": n,
            "time_delay_sum": d, "delay_frames": m,
            "tm_sum": float(tm.sum()), "tm_frames": int(tm.size),
        })
        e_sum += e
        e_n += n
        d_sum += d
        d_n += m
        t_sum += float(tm.sum())
        t_n += tm.size
    euclid = e_sum / e_n if e_n else 0.0
    delay = d_sum / d_n if d_n else 0.0
    smooth = t_sum / t_n if t_n else 0.0
    total = euclid + config.lambda2 * delay + config.lambda1 * smooth
    return LossBreakdown(euclid, delay, smooth, total, per_video)


def total_loss(params: StabilizerParams, z_seqs, p_seqs, config: TrainConfig) -> LossBreakdown:
    """Stabilize ``z_seqs`` with ``params`` and score the result against ``p_seqs``."""
    for z, p in zip(z_seqs, p_seqs):
        if z.frames.shape != p.frames.shape:
            raise ShapeError(f"video {p.video_id!r}: z {z.frames.shape} vs p {p.frames.shape}")
    x_seqs = stabilize_many(params, z_seqs)
    return loss_from_outputs(x_seqs, p_seqs, config)


# ---------------------------------------------------------------------------
# initialisation and reparameterisation


def noise_level(z_seqs, p_seqs) -> float:
    """Average per-coordinate variance of the detector residual ``z - p``."""
    if not z_seqs or len(z_seqs) != len(p_seqs):
        raise InsufficientDataError("need matching, non-empty detector and ground-truth sets")
    resid = np.concatenate([_flat(z) - _flat(p) for z, p in zip(z_seqs, p_seqs)])
    return float(np.mean(np.var(resid, axis=0)))


def init_params(z_seqs, p_seqs, K: int = 2, mode: str = "map-candidates") -> StabilizerParams:
    """Starting point for training.

    Noise covariance ``rho * I`` with ``rho`` the measured detector variance,
    a near-zero first component and a ``10 rho`` second one, decay and
    blend factors at 0.5, uniform mixture weights, eigenbasis from the
    ground-truth motion.
    """
    if p_seqs is None or len(p_seqs) == 0:
        raise InsufficientDataError("initialisation needs ground-truth sequences")
    rho = noise_level(z_seqs, p_seqs)
    V = build_eigenbasis(p_seqs)
    D = V.shape[0]
    gamma_k = np.empty((K, D))
    gamma_k[0] = 0.0
    # remaining components spread geometrically up to 10 rho; K=2 gives exactly (0, 10 rho)
    for k in range(1, K):
        gamma_k[k] = 10.0 * rho * 10.0 ** (k - (K - 1))
    return StabilizerParams(
        gamma=0.5,
        alpha=np.full(K, 1.0 / K),
        beta=np.full(K, 0.5),
        gamma_noise=np.full(D, max(rho, COV_FLOOR)),
        gamma_k=np.maximum(gamma_k, COV_FLOOR),
        V=V,
        mode=mode,
    )


_P_CLIP = 1e-12


def _logit(p):
    p = np.clip(p, _P_CLIP, 1.0 - _P_CLIP)
    return np.log(p) - np.log1p(-p)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inv(y):
    y = np.maximum(y, 1e-300)
    return y + np.log(-np.expm1(-y))


class Reparam:
    """Map between ``StabilizerParams`` and an unconstrained vector.

    Layout: ``[logit gamma, logit beta_1..K, alpha log-ratios (K-1),
    softplus^-1 noise groups, softplus^-1 component groups (K x G)]``.
    Diagonal entries are tied within ``tie_groups`` contiguous blocks of the
    eigen-ordered axes (largest variance first); ``None`` leaves every entry
    free.  ``V`` and the decoding mode are copied from the template.
    """

    def __init__(self, template: StabilizerParams, tie_groups: int | None = 4):
        self.template = template
        D, K = template.D, template.K
        n_groups = D if tie_groups is None else min(int(tie_groups), D)
        if n_groups < 1:
            raise ValueError("tie_groups must be at least 1")
        self.groups = np.array_split(np.arange(D), n_groups)
        self.K, self.D, self.G = K, D, n_groups

    @property
    def size(self):
        return 1 + self.K + (self.K - 1) + self.G * (self.K + 1)

    def _pool(self, diag):
        return np.array([diag[g].mean() for g in self.groups])

    def _spread(self, vals):
        out = np.empty(self.D)
        for g, v in zip(self.groups, vals):
            out[g] = v
        return out

    def unconstrain(self, params: StabilizerParams) -> np.ndarray:
        log_alpha = np.log(np.maximum(params.alpha, 1e-300))
        parts = [
            [_logit(params.gamma)],
            _logit(params.beta),
            log_alpha[:-1] - log_alpha[-1],
            _softplus_inv(self._pool(params.gamma_noise)),
        ]
        parts += [_softplus_inv(self._pool(gk)) for gk in params.gamma_k]
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in parts])

    def constrain(self, theta) -> StabilizerParams:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.size,):
            raise ShapeError(f"expected {self.size} free parameters, got {theta.shape}")
        K, G = self.K, self.G
        i = 0
        gamma = float(_sigmoid(theta[i]))
        i += 1
        beta = _sigmoid(theta[i:i + K])
        i += K
        logits = np.append(theta[i:i + K - 1], 0.0)
        i += K - 1
        alpha = np.exp(logits - logits.max())
        alpha /= alpha.sum()
        noise = self._spread(_softplus(theta[i:i + G]))
        i += G
        gamma_k = np.stack([self._spread(_softplus(theta[i + k * G:i + (k + 1) * G])) for k in range(K)])
        return StabilizerParams(
            gamma=gamma, alpha=alpha, beta=beta, gamma_noise=noise, gamma_k=gamma_k,
            V=self.template.V, mode=self.template.mode,
        )


def fit(params0: StabilizerParams, z_seqs, p_seqs, config: TrainConfig | None = None, callback=None):
    """Fit stabilizer parameters by Nelder-Mead on the unconstrained vector.

    Returns ``(params, history)`` where ``history[i]`` is the
    ``LossBreakdown`` of the best vertex after iteration ``i`` (entry 0 is
    the starting point), so ``total`` is non-increasing along it.  The
    returned parameters never score worse than ``params0``.
    """
    config = config or TrainConfig()
    reparam = Reparam(params0, config.tie_groups)
    cache: dict[bytes, LossBreakdown] = {}

    def objective(theta):
        key = theta.tobytes()
        if key not in cache:
            try:
                cache[key] = total_loss(reparam.constrain(theta), z_seqs, p_seqs, config)
            except (ValueError, FloatingPointError, OverflowError) as exc:
                log.debug("objective failed at %s: %s", theta, exc)
                cache[key] = LossBreakdown(np.inf, np.inf, np.inf, np.inf)
        return cache[key].total

    start = total_loss(params0, z_seqs, p_seqs, config)
    history = [start]
    best_params, best = params0, start

    def on_iter(k, x_best, f_best):
        objective(x_best)  # normally cached already
        bd = cache[x_best.tobytes()]
        history.append(bd if bd.total <= history[-1].total else history[-1])
        log.info("iter %d total %.6g", k, f_best)
        if callback is not None:
            callback(k, bd)

    theta = reparam.unconstrain(params0)
    remaining = config.max_iters
    while True:
        chunk = remaining if not config.restart_every else min(remaining, config.restart_every)
        res = nelder_mead(
            objective, theta, step=config.step, xtol=config.xtol, ftol=config.ftol,
            max_iters=chunk, callback=lambda k, x, f: on_iter(config.max_iters - remaining + k, x, f),
        )
        remaining -= res.nit
        moved = np.max(np.abs(res.x - theta)) > config.xtol
        theta = res.x
        if remaining <= 0 or (res.converged and not moved) or res.nit == 0:
            break
    objective(res.x)
    found = cache[res.x.tobytes()]
    if found.total < best.total:
        best_params, best = reparam.constrain(res.x), found
    if history[-1].total > best.total:
        history.append(best)
    return best_params, history
