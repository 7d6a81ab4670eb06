"""Streaming Bayesian landmark stabilizer.

The prior over the current frame is a K-component Gaussian mixture whose
components share an exponentially weighted mean of past outputs and differ
in covariance: each blends a learned diagonal matrix with the weighted
empirical covariance of the history.  All covariances are diagonal in a
fixed orthonormal basis ``V`` (rows are eigenvectors of the covariance of
ground-truth frame differences), so every Gaussian factor separates into
independent 1-D problems after rotating with ``u = V @ x``.

Vectors are flattened landmark sets of length ``D = 2M`` ordered
``x1, y1, x2, y2, ...``.  The stream functions accept arrays with any
number of leading batch axes; the last axis is always ``D``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InsufficientDataError, NoPriorError, ShapeError
from .trajectory import TrajectorySequence

COV_FLOOR = 1e-8
MODES = ("map-candidates", "posterior-mean")
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class StabilizerParams:
    gamma: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma_noise: np.ndarray
    gamma_k: np.ndarray
    V: np.ndarray
    mode: str = "map-candidates"

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma_noise", "gamma_k", "V"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))
        self.validate()

    @property
    def K(self):
        return self.alpha.shape[0]

    @property
    def D(self):
        return self.gamma_noise.shape[0]

    @property
    def M(self):
        return self.D // 2

    def validate(self):
        K, D = self.K, self.D
        if D < 2 or D % 2:
            raise ShapeError(f"diagonal length must be a positive even number, got {D}")
        if self.beta.shape != (K,) or self.gamma_k.shape != (K, D) or self.V.shape != (D, D):
            raise ShapeError(
                f"inconsistent shapes: alpha {self.alpha.shape}, beta {self.beta.shape}, "
                f"gamma_k {self.gamma_k.shape}, V {self.V.shape}, D={D}"
            )
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if np.any((self.beta < 0) | (self.beta > 1)):
            raise ValueError(f"beta entries must lie in [0, 1], got {self.beta}")
        if np.any(self.alpha < 0) or abs(self.alpha.sum() - 1.0) > 1e-12:
            raise ValueError(f"alpha must be non-negative and sum to 1, got {self.alpha}")
        if np.any(self.gamma_noise < 0) or np.any(self.gamma_k < 0):
            raise ValueError("diagonal covariance entries must be non-negative")
        if np.abs(self.V @ self.V.T - np.eye(D)).max() > 1e-8:
            raise ValueError("V is not orthonormal")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def replace(self, **changes):
        fields = dict(
            gamma=self.gamma, alpha=self.alpha, beta=self.beta, gamma_noise=self.gamma_noise,
            gamma_k=self.gamma_k, V=self.V, mode=self.mode,
        )
        fields.update(changes)
        return StabilizerParams(**fields)

    def to_dict(self):
        return {
            "K": self.K,
            "M": self.M,
            "gamma": self.gamma,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma_noise_diag": self.gamma_noise.tolist(),
            "gamma_k_diag": self.gamma_k.tolist(),
            "V": self.V.ravel().tolist(),
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            K, M = int(doc["K"]), int(doc["M"])
            D = 2 * M
            params = cls(
                gamma=doc["gamma"],
                alpha=np.asarray(doc["alpha"], dtype=np.float64),
                beta=np.asarray(doc["beta"], dtype=np.float64),
                gamma_noise=np.asarray(doc["gamma_noise_diag"], dtype=np.float64),
                gamma_k=np.asarray(doc["gamma_k_diag"], dtype=np.float64).reshape(K, D),
                V=np.asarray(doc["V"], dtype=np.float64).reshape(D, D),
                mode=doc.get("mode", "map-candidates"),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"invalid params document: {exc}") from None
        if params.K != K or params.M != M:
            raise FormatError(f"K/M fields ({K}, {M}) disagree with array sizes")
        return params


def save_params(path, params: StabilizerParams):
    with open(path, "w") as f:
        json.dump(params.to_dict(), f, sort_keys=True, indent=1)
        f.write("\n")


def load_params(path) -> StabilizerParams:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
    return StabilizerParams.from_dict(doc)


# ---------------------------------------------------------------------------
# eigenbasis


def difference_covariance(sequences) -> np.ndarray:
    """Covariance (population normalisation) of all consecutive frame differences."""
    diffs = []
    dim = None
    for seq in sequences:
        flat = seq.flat() if isinstance(seq, TrajectorySequence) else np.asarray(seq, float)
        if dim is None:
            dim = flat.shape[1]
        elif flat.shape[1] != dim:
            raise ShapeError(f"sequences disagree on landmark count: {flat.shape[1]} vs {dim}")
        if flat.shape[0] >= 2:
            diffs.append(np.diff(flat, axis=0))
    if not diffs:
        raise InsufficientDataError("need at least one sequence with two or more frames")
    d = np.concatenate(diffs)
    d = d - d.mean(axis=0)
    return d.T @ d / d.shape[0]


def _canonical_subspace(basis, dim):
    """Deterministic orthonormal basis of span(basis): Gram-Schmidt on projected unit vectors."""
    k = basis.shape[1]
    proj = basis @ basis.T
    out = []
    for i in range(dim):
        v = proj[:, i].copy()
        for w in out:
            v -= (w @ v) * w
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            out.append(v / norm)
            if len(out) == k:
                break
    return np.array(out).T


def eigenbasis_from_covariance(S, rel_tol=1e-10) -> np.ndarray:
    """Rows are eigenvectors of ``S`` sorted by descending eigenvalue.

    Repeated (including zero) eigenvalues are resolved by identity
    completion inside the degenerate eigenspace, and every row is flipped so
    its largest-magnitude entry is positive.
    """
    S = np.asarray(S, dtype=np.float64)
    S = 0.5 * (S + S.T)
    dim = S.shape[0]
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    tol = rel_tol * max(abs(vals[0]), np.finfo(float).tiny)

    start = 0
    while start < dim:
        stop = start + 1
        while stop < dim and vals[stop - 1] - vals[stop] <= tol:
            stop += 1
        if stop - start > 1:
            vecs[:, start:stop] = _canonical_subspace(vecs[:, start:stop], dim)
        start = stop

    V = vecs.T.copy()
    pivots = np.argmax(np.abs(V), axis=1)
    signs = np.sign(V[np.arange(dim), pivots])
    signs[signs == 0] = 1.0
    return V * signs[:, None]


def build_eigenbasis(sequences) -> np.ndarray:
    return eigenbasis_from_covariance(difference_covariance(sequences))


# ---------------------------------------------------------------------------
# streaming prior


@dataclass
class StreamState:
    """Recursive accumulators for one stream (or a batch of streams).

    ``t`` is the index of the next frame to stabilize, so a fresh state has
    ``t = 1`` and zero weight.  ``weighted_mean`` is the weighted mean of
    past outputs in the original basis and ``weighted_var`` their weighted
    variance along each rotated axis.  Keeping normalised moments (rather
    than raw weighted sums) makes the update independent of the scale of
    ``gamma``, which matters when ``gamma`` is tiny.
    """

    t: int
    weight_sum: np.ndarray
    weighted_mean: np.ndarray
    weighted_var: np.ndarray
    last_output: np.ndarray | None = field(default=None)

    @classmethod
    def initial(cls, dim, batch=()):
        batch = tuple(batch)
        return cls(
            t=1,
            weight_sum=np.zeros(batch),
            weighted_mean=np.zeros(batch + (dim,)),
            weighted_var=np.zeros(batch + (dim,)),
        )

    @property
    def dim(self):
        return self.weighted_mean.shape[-1]

    @property
    def has_prior(self):
        return bool(np.all(self.weight_sum > 0))

    def mean(self):
        if not self.has_prior:
            raise NoPriorError(f"no history at frame t={self.t}")
        return self.weighted_mean


def prior_update(state: StreamState, x_new, gamma: float, basis=None) -> StreamState:
    """Fold the output ``x_new`` into the exponentially weighted history.

    Equivalent to re-evaluating the weighted sums over the whole history
    with weights ``gamma**tau`` but costs O(D) (plus the rotation) per call.
    ``basis`` is the rotation ``V`` for the variance accumulator; identity
    when omitted.
    """
    x_new = np.asarray(x_new, dtype=np.float64)
    if x_new.shape != state.weighted_mean.shape:
        raise ShapeError(f"frame shape {x_new.shape} does not match state {state.weighted_mean.shape}")
    if not np.all(np.isfinite(x_new)):
        raise ValueError("cannot absorb a non-finite frame")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")

    # Old weights shrink by gamma and the new sample enters with weight gamma,
    # so relative to the new total the old history keeps W / (W + 1).
    W = state.weight_sum[..., None]
    keep = W / (W + 1.0)
    shift = x_new - state.weighted_mean
    dev = shift if basis is None else shift @ basis.T
    return StreamState(
        t=state.t + 1,
        weight_sum=gamma * (1.0 + state.weight_sum),
        weighted_mean=state.weighted_mean + (1.0 - keep) * shift,
        weighted_var=keep * (state.weighted_var + (1.0 - keep) * dev**2),
        last_output=x_new,
    )


def prior_moments(state: StreamState, params: StabilizerParams):
    """Shared prior mean (original basis) and per-component rotated variances.

    Returns ``mu`` with shape ``(..., D)`` and ``sigma_diag`` with shape
    ``(..., K, D)``.
    """
    if state.t < 2 or not state.has_prior:
        raise NoPriorError(f"no prior available at frame t={state.t}")
    mu = state.weighted_mean
    emp = np.maximum(state.weighted_var, 0.0)
    beta = params.beta[:, None]
    sigma = beta * params.gamma_k + (1.0 - beta) * emp[..., None, :]
    return mu, np.maximum(sigma, COV_FLOOR)


# ---------------------------------------------------------------------------
# per-frame MAP


@dataclass
class MixtureDecision:
    component_posterior_means: np.ndarray
    component_log_weights: np.ndarray
    candidate_log_density: np.ndarray
    chosen: int | str


def _gauss_logpdf(x, mean, var):
    return -0.5 * np.sum(_LOG_2PI + np.log(var) + (x - mean) ** 2 / var, axis=-1)


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def posterior_terms(u_mu, u_z, sigma, noise, log_alpha):
    """Per-component posterior means, marginal log-weights and candidate densities.

    Everything is in the rotated basis.  ``u_mu``/``u_z`` have shape
    ``(..., D)``, ``sigma`` ``(..., K, D)``, ``noise`` ``(D,)``.  The
    candidate log densities are the unnormalised log posterior
    ``log prior_mixture(c) + log N(z; c, noise)`` evaluated at each
    component's posterior mean ``c``.
    """
    u_mu = u_mu[..., None, :]
    u_z = u_z[..., None, :]
    total = sigma + noise
    cand = (noise * u_mu + sigma * u_z) / total
    log_w = log_alpha + _gauss_logpdf(u_z, u_mu, total)

    # prior mixture evaluated at every candidate: axes (..., candidate, component, D)
    prior_terms = log_alpha + _gauss_logpdf(cand[..., :, None, :], u_mu[..., None, :, :], sigma[..., None, :, :])
    log_prior = _logsumexp(prior_terms, axis=-1)
    log_lik = _gauss_logpdf(u_z, cand, noise)
    return cand, log_w, log_prior + log_lik


def _frame_update(params: StabilizerParams, state: StreamState, z):
    """One step for a state that already has a prior; returns (x, cand, log_w, cand_logp, choice)."""
    mu, sigma = prior_moments(state, params)
    V = params.V
    noise = np.maximum(params.gamma_noise, COV_FLOOR)
    log_alpha = np.log(np.maximum(params.alpha, 1e-300))
    cand, log_w, cand_logp = posterior_terms(mu @ V.T, z @ V.T, sigma, noise, log_alpha)
    if params.mode == "map-candidates":
        choice = np.argmax(cand_logp, axis=-1)
        u_x = np.take_along_axis(cand, choice[..., None, None], axis=-2)[..., 0, :]
    else:
        resp = np.exp(log_w - _logsumexp(log_w, axis=-1)[..., None])
        u_x = np.sum(resp[..., None] * cand, axis=-2)
        choice = None
    return u_x @ V, cand, log_w, cand_logp, choice


def stabilize_frame(state: StreamState, params: StabilizerParams, z):
    """Stabilize one frame.  Returns ``(x, decision, new_state)``.

    ``z`` may be an ``(M, 2)`` landmark array or a flat ``(D,)`` vector; ``x``
    comes back in the same shape.  While the stream has no history the
    observation passes through unchanged and ``decision`` is ``None``.
    """
    z = np.asarray(z, dtype=np.float64)
    shape = z.shape
    z = z.reshape(-1)
    if z.shape[0] != params.D:
        raise ShapeError(f"frame has {z.shape[0]} coordinates, params expect {params.D}")
    if not np.all(np.isfinite(z)):
        raise ValueError("observation must be finite")
    if state.weighted_mean.shape != (params.D,):
        raise ShapeError(f"state dimension {state.weighted_mean.shape} does not match params D={params.D}")

    if not state.has_prior:
        x, decision = z, None
    else:
        x, cand, log_w, cand_logp, choice = _frame_update(params, state, z)
        decision = MixtureDecision(
            component_posterior_means=cand @ params.V,
            component_log_weights=log_w,
            candidate_log_density=cand_logp,
            chosen="blend" if choice is None else int(choice),
        )
    new_state = prior_update(state, x, params.gamma, params.V)
    return x.reshape(shape), decision, new_state


def _run_batch(params: StabilizerParams, z):
    """Stabilize a batch of equal-length streams, ``z`` of shape ``(B, T, D)``."""
    B, T, D = z.shape
    out = np.empty_like(z)
    state = StreamState.initial(D, (B,))
    for t in range(T):
        zt = z[:, t]
        if state.has_prior:
            x = _frame_update(params, state, zt)[0]
        else:
            x = zt
        out[:, t] = x
        state = prior_update(state, x, params.gamma, params.V)
    return out


def stabilize_sequence(params: StabilizerParams, z_seq: TrajectorySequence) -> TrajectorySequence:
    """Causally stabilize a whole sequence; output frame ``t`` depends on inputs ``1..t`` only."""
    return stabilize_many(params, [z_seq])[0]


def stabilize_many(params: StabilizerParams, sequences) -> list[TrajectorySequence]:
    """Stabilize several sequences, batching those of equal length together."""
    sequences = list(sequences)
    for seq in sequences:
        if seq.num_frames < 1:
            raise ShapeError(f"sequence {seq.video_id!r} is empty")
        if 2 * seq.num_landmarks != params.D:
            raise ShapeError(
                f"sequence {seq.video_id!r} has {seq.num_landmarks} landmarks, params expect {params.M}"
            )
    by_len: dict[int, list[int]] = {}
    for i, seq in enumerate(sequences):
        by_len.setdefault(seq.num_frames, []).append(i)
    results: list = [None] * len(sequences)
    for idx in by_len.values():
        z = np.stack([sequences[i].flat() for i in idx])
        if not np.all(np.isfinite(z)):
            raise ValueError("observations must be finite")
        x = _run_batch(params, z)
        for j, i in enumerate(idx):
            results[i] = sequences[i].with_frames(x[j])
    return results
