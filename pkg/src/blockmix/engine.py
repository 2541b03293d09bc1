"""Variational generalized EM fitter.

The lower bound on the log-likelihood is

    LB(gamma, theta; alpha) = sum_{i<j} sum_{k,l} a_ik a_jl log pi_{d_ij;kl}
                            + sum_{i,k} a_ik (log gamma_k - log a_ik).

The E-step either maximizes a separable quadratic minorizer of LB per node
(MM strategy, one exact simplex QP per node, with a fixed-point proposal
accepted only when it raises the bound) or applies one synchronous
fixed-point sweep (FP strategy).  The M-step is closed-form for gamma and
for unconstrained tables, and damped Newton ascent for exponential-family
parameters.  All heavy sums run through :class:`BlockDyadStats`, which
exploits sparsity: cost per sweep is O(nK^2 + f K^2) where f is the
nonbaseline dyad count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .models import (
    ExpFamBlockModel,
    TabularBlockModel,
    block_moments,
)
from .network import SparseNetwork

__all__ = [
    "VariationalState",
    "BlockDyadStats",
    "FitConfig",
    "FitResult",
    "init_random",
    "accumulate_block_stats",
    "lower_bound",
    "minorizer_value",
    "solve_simplex_qp",
    "e_step_mm",
    "e_step_fp",
    "m_step_gamma",
    "m_step_pi_tabular",
    "m_step_theta_newton",
    "fit",
    "fit_from_alpha",
]

# very negative stand-in for log(0) in minorizer coefficients; keeps the
# per-node QPs finite while still pushing weight off impossible dyads
_NEG_CLIP = -1e30


@dataclass
class VariationalState:
    """Current auxiliary memberships, mixing weights and dyad model."""

    alpha: np.ndarray   # (n, K), rows on the simplex
    gamma: np.ndarray   # (K,), on the simplex
    model: TabularBlockModel | ExpFamBlockModel

    def hard_assignment(self) -> np.ndarray:
        # argmax breaks exact ties toward the lowest component index
        return np.argmax(self.alpha, axis=1)


@dataclass
class BlockDyadStats:
    """Soft sufficient statistics of (network, alpha).

    ``pair_weight[k, l]`` is half the ordered-pair weight
    sum_{i != j} a_ik a_jl = s_k s_l - q_kl, so that summing the full matrix
    gives n(n-1)/2; ``dyad_weight[d, k, l]`` splits it by dyad value (with
    the dyad oriented i-first) and carries the baseline weight obtained by
    subtraction in the baseline slot.
    """

    pair_weight: np.ndarray   # (K, K)
    dyad_weight: np.ndarray   # (D, K, K), baseline slot included
    col_sum: np.ndarray       # (K,)  s_k = sum_i a_ik
    self_prod: np.ndarray     # (K, K) q_kl = sum_i a_ik a_il
    baseline_index: int


@dataclass
class FitConfig:
    max_sweeps: int = 6000
    rel_tol: float = 1e-10
    restarts: int = 1
    e_step: str = "mm"              # "mm" or "fp"
    newton_max_iters: int = 100
    newton_grad_tol: float = 1e-10
    seed: int = 0
    alpha_floor: float = 1e-12

    def __post_init__(self):
        if self.e_step not in ("mm", "fp"):
            raise ValueError("e_step must be 'mm' or 'fp'")


@dataclass
class FitResult:
    state: VariationalState
    lb: float
    lb_trace: list[float]
    hard_assignment: np.ndarray
    sweeps_used: int
    restart_index: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def init_random(n: int, K: int, seed) -> np.ndarray:
    """Row-normalized uniform(0,1) starting memberships."""
    if K < 1:
        raise ValueError("K must be at least 1")
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(size=(n, K))
    return alpha / alpha.sum(axis=1, keepdims=True)


def _floor_rows(alpha: np.ndarray, floor: float) -> np.ndarray:
    alpha = np.maximum(alpha, floor)
    return alpha / alpha.sum(axis=1, keepdims=True)


def accumulate_block_stats(network: SparseNetwork,
                           alpha: np.ndarray) -> BlockDyadStats:
    """Exact soft counts in O(nK + fK^2) time.

    The baseline weight is never enumerated: total pair weight comes from
    the identity sum_{i != j} a_ik a_jl = s_k s_l - q_kl, and the explicit
    nonbaseline pairs are subtracted from it.
    """
    n, K = alpha.shape
    if n != network.n:
        raise ValueError(f"alpha has {n} rows for a network of {network.n} nodes")
    D = network.alphabet.size
    b = network.alphabet.baseline_index
    tr = network.alphabet.transpose

    s = alpha.sum(axis=0)
    q = alpha.T @ alpha
    T = 0.5 * (np.outer(s, s) - q)

    # E[d] = sum over stored pairs (i<j) with dyad d of outer(a_i, a_j)
    E = np.zeros((D, K, K))
    idx = network.dyad_idx
    for d in np.unique(idx):
        sel = idx == d
        E[d] = alpha[network.pair_i[sel]].T @ alpha[network.pair_j[sel]]
    # symmetrize across orientations: C[d] = (E[d] + E[t(d)]') / 2
    C = 0.5 * (E + E[tr].transpose(0, 2, 1))
    C[b] = T - np.delete(C, b, axis=0).sum(axis=0)
    return BlockDyadStats(pair_weight=T, dyad_weight=C, col_sum=s,
                          self_prod=q, baseline_index=b)


def _log_probs(model) -> np.ndarray:
    return model.log_probs()


def _dyad_term(stats: BlockDyadStats, log_pi: np.ndarray) -> float:
    C = stats.dyad_weight
    finite = np.isfinite(log_pi)
    if np.any(~finite & (C > 1e-12)):
        return -np.inf
    return float(np.sum(C[finite] * log_pi[finite]))


def _mixing_entropy_term(alpha: np.ndarray, gamma: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        log_gamma = np.log(gamma)
        inner = np.where(alpha > 0, log_gamma[None, :] - np.log(alpha), 0.0)
    if np.any((gamma == 0) & (alpha.sum(axis=0) > 0)):
        return -np.inf
    return float(np.sum(alpha * inner))


def _lb_from_stats(stats: BlockDyadStats, alpha: np.ndarray,
                   gamma: np.ndarray, log_pi: np.ndarray) -> float:
    return _dyad_term(stats, log_pi) + _mixing_entropy_term(alpha, gamma)


def lower_bound(network: SparseNetwork, state: VariationalState) -> float:
    """Exact LB value; -inf if a zero-probability dyad has positive weight."""
    stats = accumulate_block_stats(network, state.alpha)
    return _lb_from_stats(stats, state.alpha, state.gamma,
                          _log_probs(state.model))


def _neighbor_log_lik(network: SparseNetwork, anchor_alpha: np.ndarray,
                      log_pi: np.ndarray) -> np.ndarray:
    """L[i, k] = sum_{j != i} sum_l anchor_jl log pi_{d_ij;kl}.

    Uses the baseline-subtraction trick: start from the all-baseline value
    and correct only the stored pairs.
    """
    n, K = anchor_alpha.shape
    log_pi = np.where(np.isfinite(log_pi), log_pi, _NEG_CLIP)
    b = network.alphabet.baseline_index
    tr = network.alphabet.transpose
    s = anchor_alpha.sum(axis=0)
    # baseline backdrop: sum_l (s_l - a_il) log pi_{b;kl}
    L = (s[None, :] - anchor_alpha) @ log_pi[b].T
    idx = network.dyad_idx
    for d in np.unique(idx):
        sel = idx == d
        I, J = network.pair_i[sel], network.pair_j[sel]
        np.add.at(L, I, anchor_alpha[J] @ (log_pi[d] - log_pi[b]).T)
        np.add.at(L, J, anchor_alpha[I] @ (log_pi[tr[d]] - log_pi[b]).T)
    return L


def minorizer_value(network: SparseNetwork, anchor_state: VariationalState,
                    candidate_alpha: np.ndarray) -> float:
    """Value of the separable quadratic surrogate Q at ``candidate_alpha``.

    Q touches the LB at the anchor and lies below it elsewhere; the anchor
    memberships must be strictly positive.
    """
    anchor = anchor_state.alpha
    if np.any(anchor <= 0):
        raise ValueError("anchor memberships must be strictly positive")
    cand = np.asarray(candidate_alpha, dtype=float)
    if cand.shape != anchor.shape:
        raise ValueError("candidate alpha has wrong shape")
    L = _neighbor_log_lik(network, anchor, _log_probs(anchor_state.model))
    quad = np.sum(cand ** 2 * (L / (2.0 * anchor) - 1.0 / anchor))
    with np.errstate(divide="ignore"):
        log_gamma = np.log(anchor_state.gamma)
    lin = np.sum(cand * (log_gamma[None, :] - np.log(anchor) + 1.0))
    return float(quad + lin)


def _simplex_qp_batch(a: np.ndarray, b: np.ndarray,
                      tol: float = 1e-12, max_bisect: int = 200) -> np.ndarray:
    """Row-wise maximizers of sum_k a_k x_k^2 + b_k x_k on the simplex.

    All a entries must be negative.  Bisection on the KKT multiplier with
    x_k(lam) = max(0, (lam - b_k) / (2 a_k)).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if np.any(a >= 0):
        raise ValueError("quadratic coefficients must be negative")
    lo = (b + 2.0 * a).min(axis=1)   # sum x >= 1 here
    hi = b.max(axis=1)               # sum x = 0 here
    for _ in range(max_bisect):
        lam = 0.5 * (lo + hi)
        x = np.maximum(0.0, (lam[:, None] - b) / (2.0 * a))
        total = x.sum(axis=1)
        if np.all(np.abs(total - 1.0) <= tol):
            break
        too_big = total > 1.0
        lo = np.where(too_big, lam, lo)
        hi = np.where(too_big, hi, lam)
    return x / x.sum(axis=1, keepdims=True)


def solve_simplex_qp(quad: np.ndarray, lin: np.ndarray,
                     alpha_floor: float = 0.0) -> np.ndarray:
    """Exact maximizer of a separable concave quadratic over the simplex."""
    x = _simplex_qp_batch(np.asarray(quad)[None, :], np.asarray(lin)[None, :])[0]
    if alpha_floor > 0:
        x = _floor_rows(x[None, :], alpha_floor)[0]
    return x


def _mm_update_from_L(anchor: np.ndarray, gamma: np.ndarray, L: np.ndarray,
                      alpha_floor: float) -> np.ndarray:
    a = L / (2.0 * anchor) - 1.0 / anchor
    with np.errstate(divide="ignore"):
        log_gamma = np.log(np.maximum(gamma, 1e-300))
    b = log_gamma[None, :] - np.log(anchor) + 1.0
    return _floor_rows(_simplex_qp_batch(a, b), alpha_floor)


def _fp_update_from_L(gamma: np.ndarray, L: np.ndarray,
                      alpha_floor: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        scores = L + np.log(np.maximum(gamma, 1e-300))[None, :]
    scores -= scores.max(axis=1, keepdims=True)
    alpha_new = np.exp(scores)
    alpha_new /= alpha_new.sum(axis=1, keepdims=True)
    return _floor_rows(alpha_new, alpha_floor)


def e_step_mm(network: SparseNetwork, state: VariationalState,
              alpha_floor: float = 1e-12) -> np.ndarray:
    """One generalized E-step: per-node exact QP on the minorizer.

    All node subproblems share the same anchor, so they are independent.
    Guarantees LB(alpha') >= LB(alpha) up to numerical slack.
    """
    anchor = state.alpha
    L = _neighbor_log_lik(network, anchor, _log_probs(state.model))
    return _mm_update_from_L(anchor, state.gamma, L, alpha_floor)


def e_step_fp(network: SparseNetwork, state: VariationalState,
              alpha_floor: float = 1e-12) -> np.ndarray:
    """One synchronous fixed-point sweep: alpha'_ik prop. to
    gamma_k exp(L_ik), row-normalized with log-sum-exp stabilization.

    Unlike the MM step this update is not guaranteed to increase the LB.
    """
    L = _neighbor_log_lik(network, state.alpha, _log_probs(state.model))
    return _fp_update_from_L(state.gamma, L, alpha_floor)


def m_step_gamma(alpha: np.ndarray) -> np.ndarray:
    """Closed-form update: column means of the membership matrix."""
    return alpha.mean(axis=0)


def m_step_pi_tabular(stats: BlockDyadStats, alphabet,
                      empty_tol: float = 1e-12) -> TabularBlockModel:
    """Closed-form table update: soft dyad counts over total pair weight.

    Block pairs with (numerically) zero total weight fall back to the
    uniform table and are flagged in ``empty_blocks``.
    """
    T = stats.pair_weight
    C = np.clip(stats.dyad_weight, 0.0, None)
    D = C.shape[0]
    K = T.shape[0]
    empty = T <= empty_tol
    safe_T = np.where(empty, 1.0, T)
    pi = C / safe_T[None, :, :]
    pi = np.where(empty[None, :, :], 1.0 / D, pi)
    pi /= pi.sum(axis=0, keepdims=True)
    model = TabularBlockModel(K, alphabet, pi)
    model.empty_blocks = [tuple(ix) for ix in np.argwhere(empty)]
    return model


def m_step_theta_newton(stats: BlockDyadStats, model: ExpFamBlockModel,
                        theta_init: np.ndarray | None = None,
                        max_iters: int = 100,
                        grad_tol: float = 1e-10) -> np.ndarray:
    """Damped Newton ascent of the LB in theta on the free coordinates.

    Gradient: observed soft statistics minus pair-weighted family means.
    Hessian: minus the pair-weighted statistic covariances.  Steps are
    halved until the objective does not decrease; a singular Hessian falls
    back to a gradient step.
    """
    free = ~model.fixed_mask
    T = stats.pair_weight
    C = stats.dyad_weight
    observed = np.einsum("dkl,kldp->p", C, model.stat)

    def objective(theta):
        log_pi = model.log_probs(theta)
        return _dyad_term(stats, log_pi)

    theta = np.array(model.theta if theta_init is None else theta_init,
                     dtype=float)
    theta[model.fixed_mask] = 0.0
    f = objective(theta)
    for _ in range(max_iters):
        mom = block_moments(model, theta)
        grad = observed - np.einsum("kl,klp->p", T, mom.mean)
        g = grad[free]
        if g.size == 0 or np.max(np.abs(g)) <= grad_tol:
            break
        H = np.einsum("kl,klpq->pq", T, mom.cov)[np.ix_(free, free)]
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        if step @ g <= 0:
            step = g / max(1.0, np.max(np.abs(g)))
        scale = 1.0
        while scale > 1e-14:
            trial = theta.copy()
            trial[free] += scale * step
            f_trial = objective(trial)
            if f_trial >= f:
                theta, f = trial, f_trial
                break
            scale *= 0.5
        else:
            break
    return theta


def _m_step_model(stats: BlockDyadStats, model, config: FitConfig):
    if isinstance(model, TabularBlockModel):
        return m_step_pi_tabular(stats, model.alphabet)
    theta = m_step_theta_newton(stats, model,
                                max_iters=config.newton_max_iters,
                                grad_tol=config.newton_grad_tol)
    return model.with_theta(theta)


def _safeguarded_e_step(network: SparseNetwork, state: VariationalState,
                        alpha_floor: float):
    """Monotone E-step used by the fit loop's MM strategy.

    A single synchronous QP pass on the minorizer moves each row only a
    short distance (its curvature scales with the neighborhood
    log-likelihood mass), which stalls on near-symmetric plateaus.  To keep
    monotone ascent without that stall, the fixed-point update is also
    computed from the same neighborhood scores and the candidate with the
    higher bound wins; the QP candidate guarantees the bound never drops.
    Returns (alpha', stats', lb_after_e).
    """
    anchor = state.alpha
    log_pi = _log_probs(state.model)
    L = _neighbor_log_lik(network, anchor, log_pi)
    cand_mm = _mm_update_from_L(anchor, state.gamma, L, alpha_floor)
    cand_fp = _fp_update_from_L(state.gamma, L, alpha_floor)
    stats_mm = accumulate_block_stats(network, cand_mm)
    stats_fp = accumulate_block_stats(network, cand_fp)
    lb_mm = _lb_from_stats(stats_mm, cand_mm, state.gamma, log_pi)
    lb_fp = _lb_from_stats(stats_fp, cand_fp, state.gamma, log_pi)
    if lb_fp > lb_mm:
        return cand_fp, stats_fp, lb_fp
    return cand_mm, stats_mm, lb_mm


def fit_from_alpha(network: SparseNetwork, model, alpha0: np.ndarray,
                   config: FitConfig, restart_index: int = 0) -> FitResult:
    """Run the GEM loop from given memberships, starting with an M-step."""
    alpha = _floor_rows(np.array(alpha0, dtype=float), config.alpha_floor)

    stats = accumulate_block_stats(network, alpha)
    gamma = m_step_gamma(alpha)
    model = _m_step_model(stats, model, config)
    lb = _lb_from_stats(stats, alpha, gamma, _log_probs(model))
    lb_trace = [lb]
    lb_steps = [("init_m", lb)]

    converged = False
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        state = VariationalState(alpha=alpha, gamma=gamma, model=model)
        if config.e_step == "mm":
            alpha, stats, lb_e = _safeguarded_e_step(
                network, state, alpha_floor=config.alpha_floor)
        else:
            alpha = e_step_fp(network, state, alpha_floor=config.alpha_floor)
            stats = accumulate_block_stats(network, alpha)
            lb_e = _lb_from_stats(stats, alpha, gamma, _log_probs(model))
        lb_steps.append(("e", lb_e))

        gamma = m_step_gamma(alpha)
        model = _m_step_model(stats, model, config)
        lb_new = _lb_from_stats(stats, alpha, gamma, _log_probs(model))
        lb_steps.append(("m", lb_new))
        lb_trace.append(lb_new)

        denom = abs(lb_new) if lb_new != 0 else 1.0
        if np.isfinite(lb_new) and abs(lb_new - lb) / denom < config.rel_tol:
            lb = lb_new
            converged = True
            break
        lb = lb_new

    state = VariationalState(alpha=alpha, gamma=gamma, model=model)
    diagnostics = {"lb_steps": lb_steps}
    if isinstance(model, TabularBlockModel) and getattr(model, "empty_blocks", []):
        diagnostics["empty_blocks"] = model.empty_blocks
    return FitResult(state=state, lb=lb, lb_trace=lb_trace,
                     hard_assignment=state.hard_assignment(),
                     sweeps_used=sweeps, restart_index=restart_index,
                     converged=converged, diagnostics=diagnostics)


def fit(network: SparseNetwork, model, config: FitConfig) -> FitResult:
    """Multi-restart variational GEM fit; returns the best-LB restart.

    ``model`` is a skeleton: its table/theta provides the parameter shape
    (and Newton warm start) but is re-estimated from the data.
    """
    K = model.K
    if K > network.n:
        raise ValueError(f"K={K} exceeds node count n={network.n}")
    if network.num_nonbaseline == 0 and isinstance(model, ExpFamBlockModel):
        warnings.warn("empty network: fitting a degenerate baseline model")
    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    best = None
    for r, seq in enumerate(seeds):
        alpha0 = init_random(network.n, K, seq)
        result = fit_from_alpha(network, model, alpha0, config, restart_index=r)
        if best is None or result.lb > best.lb:
            best = result
    return best
