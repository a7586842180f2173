"""Discrete first-order hidden Markov models over a finite symbol alphabet.

Provides the model and sequence types, scaled forward evaluation of
log-likelihoods, posterior state marginals, Baum-Welch fitting, and
ancestral sampling.  All recursions use per-step scaling so sequences of
length 10**4 and beyond evaluate without underflow; the log-likelihood is
recovered as the sum of the log scale factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError, ParameterError

# Row-sum tolerance for stochastic matrices.
ROW_SUM_TOL = 1e-12

# After each M-step every probability is clamped to at least this value and
# the row renormalized.  Keeps cross-evaluation log-likelihoods finite: a
# model fitted to one sequence never assigns exact zero probability to a
# symbol that only occurs in another sequence.
PROB_FLOOR = 1e-10


def _frozen_array(values, dtype=float):
    out = np.array(values, dtype=dtype)
    out.flags.writeable = False
    return out


def _check_stochastic(name: str, mat: np.ndarray) -> None:
    if np.any(mat < 0.0) or np.any(mat > 1.0):
        raise ParameterError(f"{name} entries must lie in [0, 1]")
    sums = mat.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        raise ParameterError(
            f"{name} rows must sum to 1 within {ROW_SUM_TOL:g} "
            f"(worst deviation {np.abs(sums - 1.0).max():.3e})"
        )


@dataclass(frozen=True, eq=False)
class DiscreteHmm:
    """Model parameters for a discrete ergodic HMM.

    ``initial[i]`` is the probability of starting in hidden state i,
    ``transition[i, j]`` the probability of moving from state i to state j,
    and ``emission[i, k]`` the probability of emitting symbol k from state i.
    Arrays are copied and frozen at construction; rows must be stochastic
    within ``ROW_SUM_TOL``.
    """

    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        initial = _frozen_array(self.initial)
        transition = _frozen_array(self.transition)
        emission = _frozen_array(self.emission)
        if initial.ndim != 1 or transition.ndim != 2 or emission.ndim != 2:
            raise ParameterError(
                "initial must be a vector, transition and emission must be matrices"
            )
        n = initial.shape[0]
        if n < 1:
            raise ParameterError("a model needs at least one hidden state")
        if transition.shape != (n, n):
            raise ParameterError(
                f"transition must be {n}x{n}, got {transition.shape}"
            )
        if emission.shape[0] != n or emission.shape[1] < 1:
            raise ParameterError(
                f"emission must have {n} rows and at least one column, "
                f"got {emission.shape}"
            )
        _check_stochastic("initial", initial)
        _check_stochastic("transition", transition)
        _check_stochastic("emission", emission)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "emission", emission)

    @property
    def n_states(self) -> int:
        return self.initial.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.emission.shape[1]


@dataclass(frozen=True, eq=False)
class ObservationSequence:
    """A single observed event sequence.

    ``symbols`` holds integer codes into some alphabet; the upper bound is
    checked against a concrete model at evaluation time.  ``label`` is an
    optional cohort tag (for synthetic batches: the batch name).
    """

    id: str
    symbols: np.ndarray
    label: str | None = None

    def __post_init__(self):
        symbols = np.array(self.symbols, dtype=np.int64)
        if symbols.ndim != 1 or symbols.size == 0:
            raise DataError(f"sequence {self.id!r} must contain at least one symbol")
        if np.any(symbols < 0):
            raise DataError(f"sequence {self.id!r} contains negative symbol codes")
        symbols.flags.writeable = False
        object.__setattr__(self, "symbols", symbols)

    def __len__(self) -> int:
        return self.symbols.shape[0]


@dataclass(frozen=True, eq=False)
class FitReport:
    """Outcome of a Baum-Welch fit.

    ``loglik_trace`` starts with the log-likelihood of the initial model and
    gains one entry per EM update; it is non-decreasing up to rounding.
    ``converged`` is true iff the improvement dropped below the tolerance
    before the iteration cap was exhausted.
    """

    model: DiscreteHmm
    loglik_trace: tuple[float, ...]
    iterations: int
    converged: bool


def _checked_symbols(model: DiscreteHmm, seq: ObservationSequence) -> np.ndarray:
    obs = seq.symbols
    top = int(obs.max())
    if top >= model.n_symbols:
        raise DataError(
            f"sequence {seq.id!r} uses symbol {top} but the model has only "
            f"{model.n_symbols} symbols"
        )
    return obs


def uninformative_init(
    n_states: int,
    n_symbols: int,
    perturbation: float = 0.01,
    seed: int = 0,
) -> DiscreteHmm:
    """Near-uniform starting model for Baum-Welch.

    Each transition and emission row is the uniform distribution plus seeded
    zero-sum noise whose largest entry deviates by at most ``perturbation``;
    the initial distribution stays exactly uniform.  ``perturbation=0``
    reproduces the exact 1/n matrices, which EM cannot leave (the symmetry
    is a fixed point), so a small default perturbation of 0.01 is used to
    break ties.
    """
    if n_states < 1:
        raise ParameterError("n_states must be at least 1")
    if n_symbols < 2:
        raise ParameterError("n_symbols must be at least 2")
    if not 0.0 <= perturbation <= 0.1:
        raise ParameterError("perturbation must lie in [0, 0.1]")
    rng = np.random.default_rng(seed)
    transition = np.stack(
        [_perturbed_uniform_row(n_states, perturbation, rng) for _ in range(n_states)]
    )
    emission = np.stack(
        [_perturbed_uniform_row(n_symbols, perturbation, rng) for _ in range(n_states)]
    )
    initial = np.full(n_states, 1.0 / n_states)
    return DiscreteHmm(initial, transition, emission)


def _perturbed_uniform_row(n: int, perturbation: float, rng) -> np.ndarray:
    row = np.full(n, 1.0 / n)
    if perturbation == 0.0 or n == 1:
        return row
    noise = rng.uniform(-perturbation, perturbation, size=n)
    noise -= noise.mean()
    # Cap the noise so entries stay positive for any state count and the
    # deviation bound survives renormalization.
    cap = min(perturbation, 0.5 / n) * (1.0 - 1e-12)
    peak = np.abs(noise).max()
    if peak > cap:
        noise *= cap / peak
    row = row + noise
    return row / row.sum()


def _emission_rows(model: DiscreteHmm, obs: np.ndarray) -> np.ndarray:
    """Per-step emission lookup, row t holding b_i(o_t); contiguous rows."""
    return model.emission.T[obs]


def _scaled_forward(model: DiscreteHmm, obs: np.ndarray, e_rows=None):
    """Scaled forward pass.

    Returns ``(alpha, scale, ok)`` where ``alpha[t]`` is the normalized
    forward distribution, ``scale[t]`` the per-step normalizer, and ``ok``
    is false when some prefix has exactly zero probability (the remaining
    rows are then unspecified).
    """
    transition = model.transition
    if e_rows is None:
        e_rows = _emission_rows(model, obs)
    T = obs.shape[0]
    n = model.n_states
    alpha = np.zeros((T, n))
    scale = np.zeros(T)
    a = model.initial * e_rows[0]
    c = a.sum()
    if c == 0.0:
        return alpha, scale, False
    alpha[0] = a / c
    scale[0] = c
    buf = np.empty(n)
    for t in range(1, T):
        np.dot(alpha[t - 1], transition, out=buf)
        buf *= e_rows[t]
        c = buf.sum()
        if c == 0.0:
            return alpha, scale, False
        np.divide(buf, c, out=alpha[t])
        scale[t] = c
    return alpha, scale, True


def _scaled_backward(model: DiscreteHmm, obs: np.ndarray, scale: np.ndarray, e_rows=None) -> np.ndarray:
    transition = model.transition
    if e_rows is None:
        e_rows = _emission_rows(model, obs)
    T = obs.shape[0]
    n = model.n_states
    beta = np.ones((T, n))
    buf = np.empty(n)
    for t in range(T - 2, -1, -1):
        np.multiply(e_rows[t + 1], beta[t + 1], out=buf)
        np.dot(transition, buf, out=beta[t])
        beta[t] /= scale[t + 1]
    return beta


def forward_log_likelihood(model: DiscreteHmm, seq: ObservationSequence) -> float:
    """log Pr(seq | model) via the scaled forward recursion.

    Returns ``-inf`` exactly when the sequence has zero probability under
    the model; otherwise the value is finite for any length.
    """
    obs = _checked_symbols(model, seq)
    _, scale, ok = _scaled_forward(model, obs)
    if not ok:
        return float("-inf")
    return float(np.log(scale).sum())


def forward_log_likelihood_many(model: DiscreteHmm, seqs) -> np.ndarray:
    """log Pr(seq | model) for every sequence in one lockstep scan.

    Sequences of different lengths are padded with a virtual symbol that
    every state emits with probability 1, so padded steps contribute nothing.
    Entries are ``-inf`` for zero-probability sequences.
    """
    seqs = list(seqs)
    if not seqs:
        return np.zeros(0)
    obs_list = [_checked_symbols(model, s) for s in seqs]
    lengths = np.array([o.shape[0] for o in obs_list])
    n = len(seqs)
    t_max = int(lengths.max())
    padded = np.full((n, t_max), model.n_symbols, dtype=np.int64)
    for r, o in enumerate(obs_list):
        padded[r, : o.shape[0]] = o
    e_ext = np.hstack([model.emission, np.ones((model.n_states, 1))])
    transition = model.transition
    ll = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    alpha = model.initial[None, :] * e_ext[:, padded[:, 0]].T
    for t in range(t_max):
        if t > 0:
            alpha = (alpha @ transition) * e_ext[:, padded[:, t]].T
        c = alpha.sum(axis=1)
        active = alive & (lengths > t)
        dead = active & (c <= 0.0)
        if dead.any():
            ll[dead] = -np.inf
            alive &= ~dead
        live = active & (c > 0.0)
        ll[live] += np.log(c[live])
        alpha = alpha / np.where(c > 0.0, c, 1.0)[:, None]
    return ll


def posterior_marginals(model: DiscreteHmm, seq: ObservationSequence) -> np.ndarray:
    """Posterior state probabilities, one row per time step.

    Row t is Pr(x_t = i | seq, model); rows sum to 1.
    """
    obs = _checked_symbols(model, seq)
    e_rows = _emission_rows(model, obs)
    alpha, scale, ok = _scaled_forward(model, obs, e_rows)
    if not ok:
        raise NumericalError(
            f"sequence {seq.id!r} has zero probability under the model; "
            "posteriors are undefined"
        )
    beta = _scaled_backward(model, obs, scale, e_rows)
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    return gamma


@dataclass(frozen=True, eq=False)
class _EStats:
    loglik: float
    gamma: np.ndarray   # (T, n_states) posterior marginals
    xi_sum: np.ndarray  # (n_states, n_states) expected transition counts


def _rescale_stack(prod: np.ndarray, logscale: np.ndarray) -> None:
    """Divide each matrix by its largest entry, accumulating the log factor.

    An all-zero matrix (a structurally impossible stretch) stays zero and
    gets logscale -inf.
    """
    flat = prod.reshape(prod.shape[0], -1)
    if flat.shape[1] == 1:
        peaks = flat[:, 0].copy()
    else:
        # One pairwise maximum per column beats an axis reduction here.
        peaks = np.maximum.reduce([flat[:, i] for i in range(flat.shape[1])])
    if peaks.all():
        prod /= peaks[:, None, None]
        logscale += np.log(peaks)
        return
    live = peaks > 0.0
    prod[live] /= peaks[live, None, None]
    logscale[~live] = -np.inf
    logscale[live] += np.log(peaks[live])


def _scan_prefix_products(mats: np.ndarray):
    """Rescaled inclusive prefix products ``mats[0] @ ... @ mats[k]``.

    Doubling turns the length-K chain into O(log K) stacked matmuls, which
    is what makes EM on long sequences cheap.  Entry k of the returned
    ``(prod, logscale)`` satisfies
    ``mats[0] @ ... @ mats[k] == prod[k] * exp(logscale[k])``.
    """
    prod = mats.copy()
    logscale = np.zeros(prod.shape[0])
    _rescale_stack(prod, logscale)
    shift = 1
    while shift < prod.shape[0]:
        prod[shift:] = np.matmul(prod[:-shift], prod[shift:])
        logscale[shift:] += logscale[:-shift]
        _rescale_stack(prod, logscale)
        shift *= 2
    return prod, logscale


def _e_step(model: DiscreteHmm, obs: np.ndarray) -> _EStats:
    e_rows = _emission_rows(model, obs)
    transition = model.transition
    T = obs.shape[0]
    n = model.n_states
    v0 = model.initial * e_rows[0]
    c0 = v0.sum()
    if T == 1:
        if c0 == 0.0:
            _raise_zero_probability()
        gamma = (v0 / c0)[None, :]
        return _EStats(float(np.log(c0)), gamma, np.zeros((n, n)))
    dead = c0 == 0.0
    if not dead:
        # M_t[i, j] = a_ij b_j(o_t) for t >= 1, so alpha_t ~ v0 M_1 ... M_t.
        mats = transition[None, :, :] * e_rows[1:, None, :]
        prefix, prefix_log = _scan_prefix_products(mats)
        alpha_raw = np.einsum("j,kji->ki", v0, prefix)
        c_rest = alpha_raw.sum(axis=1)
        dead = bool((c_rest == 0.0).any()) or bool(np.isneginf(prefix_log[-1]))
    if dead:
        _raise_zero_probability()
    loglik = float(np.log(c_rest[-1]) + prefix_log[-1])
    alpha = np.empty((T, n))
    alpha[0] = v0 / c0
    alpha[1:] = alpha_raw / c_rest[:, None]
    # Suffix products Q_t = M_{t+1} ... M_{T-1}: scanning the reversed,
    # transposed stack makes Q_t^T a prefix product again.
    mats_rt = np.ascontiguousarray(mats[::-1].transpose(0, 2, 1))
    suffix, _ = _scan_prefix_products(mats_rt)
    beta = np.empty((T, n))
    beta[T - 1] = 1.0 / n
    beta_raw = suffix.sum(axis=1)[::-1]  # row t holds Q_t @ 1 up to scale
    beta[: T - 1] = beta_raw / beta_raw.sum(axis=1, keepdims=True)
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    # xi_t(i, j) ~ alpha_t(i) a_ij b_j(o_{t+1}) beta_{t+1}(j), one slab per
    # step; per-slab normalization absorbs the arbitrary alpha/beta scales.
    w = e_rows[1:] * beta[1:]
    xi = alpha[:-1][:, :, None] * transition[None, :, :] * w[:, None, :]
    xi /= xi.sum(axis=(1, 2), keepdims=True)
    return _EStats(loglik, gamma, xi.sum(axis=0))


def _raise_zero_probability():
    raise NumericalError(
        "zero-probability sequence during EM; the initial model assigns "
        "probability 0 to the data (structural zeros?)"
    )


def _floor_rows(x: np.ndarray) -> np.ndarray:
    x = np.maximum(x, PROB_FLOOR)
    return x / x.sum(axis=-1, keepdims=True) if x.ndim > 1 else x / x.sum()


def _m_step(model: DiscreteHmm, obs: np.ndarray, stats: _EStats) -> DiscreteHmm:
    gamma = stats.gamma
    # Transition rows: expected counts over expected occupancy; rows with zero
    # occupancy keep their previous values.
    out_mass = gamma[:-1].sum(axis=0)
    transition = np.array(model.transition)
    occupied = out_mass > 0.0
    transition[occupied] = stats.xi_sum[occupied] / out_mass[occupied, None]
    # Emission rows likewise.
    total = gamma.sum(axis=0)
    counts = np.zeros((model.n_states, model.n_symbols))
    for k in range(model.n_symbols):
        mask = obs == k
        if mask.any():
            counts[:, k] = gamma[mask].sum(axis=0)
    emission = np.array(model.emission)
    occupied = total > 0.0
    emission[occupied] = counts[occupied] / total[occupied, None]
    initial = gamma[0]
    return DiscreteHmm(
        _floor_rows(initial), _floor_rows(transition), _floor_rows(emission)
    )


def baum_welch_fit(
    seq: ObservationSequence,
    init: DiscreteHmm,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> FitReport:
    """Fit a model to one sequence by expectation-maximization.

    Stops when the absolute log-likelihood improvement falls below ``tol``
    or after ``max_iter`` updates.  Every update keeps rows stochastic and
    applies the probability floor, so the fitted model assigns nonzero
    probability to every symbol from every state.
    """
    if tol <= 0.0:
        raise ParameterError("tol must be positive")
    if max_iter < 1:
        raise ParameterError("max_iter must be at least 1")
    obs = _checked_symbols(init, seq)
    if obs.shape[0] < 2:
        raise ParameterError(
            f"sequence {seq.id!r} is too short to fit (need length >= 2)"
        )
    model = init
    stats = _e_step(model, obs)
    trace = [stats.loglik]
    converged = False
    iterations = 0
    for _ in range(max_iter):
        model = _m_step(model, obs, stats)
        stats = _e_step(model, obs)
        trace.append(stats.loglik)
        iterations += 1
        if trace[-1] - trace[-2] < tol:
            converged = True
            break
    return FitReport(
        model=model,
        loglik_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
    )


def sample_sequence(
    model: DiscreteHmm,
    length: int,
    seed: int,
    seq_id: str | None = None,
    label: str | None = None,
) -> ObservationSequence:
    """Draw one sequence of the given length from the model.

    The state path follows the initial distribution and then the transition
    rows; each step emits from the current state's emission row.  The same
    seed always yields the same sequence.
    """
    if length < 1:
        raise ParameterError("length must be at least 1")
    init_cdf = np.cumsum(model.initial)
    trans_cdf = np.cumsum(model.transition, axis=1)
    emit_cdf = np.cumsum(model.emission, axis=1)
    top_state = model.n_states - 1
    top_symbol = model.n_symbols - 1
    rng = np.random.default_rng(seed)
    u = rng.random(2 * length)
    symbols = np.empty(length, dtype=np.int64)
    # searchsorted can land one past the end when u falls on the rounded top
    # edge of a cdf; clamp.
    state = min(int(np.searchsorted(init_cdf, u[0], side="right")), top_state)
    symbols[0] = min(
        int(np.searchsorted(emit_cdf[state], u[1], side="right")), top_symbol
    )
    for t in range(1, length):
        state = min(
            int(np.searchsorted(trans_cdf[state], u[2 * t], side="right")), top_state
        )
        symbols[t] = min(
            int(np.searchsorted(emit_cdf[state], u[2 * t + 1], side="right")),
            top_symbol,
        )
    name = seq_id if seq_id is not None else f"sample-{seed}"
    return ObservationSequence(id=name, symbols=symbols, label=label)
