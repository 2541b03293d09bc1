"""Dyad-probability block models.

Two kinds of model are supported:

* :class:`TabularBlockModel` -- an unconstrained probability table
  pi[d, k, l] subject only to per-(k, l) normalization and transpose
  symmetry pi[(a,b), k, l] = pi[(b,a), l, k].

* :class:`ExpFamBlockModel` -- a log-linear family
  pi_{d;kl}(theta) = exp[theta' t_kl(d) - psi_kl(theta)] with block
  statistic tables t_kl(d) materialized as a dense (K, K, D, p) array.
  A boolean ``fixed_mask`` pins coordinates of theta to zero for
  identifiability.

The dyad space D is finite and small, so log-normalizers, means and
covariances are computed by complete enumeration with log-sum-exp
stabilization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .network import (
    DyadAlphabet,
    make_dyad_alphabet,
    signed_alphabet,
    binary_alphabet,
)

__all__ = [
    "TabularBlockModel",
    "ExpFamBlockModel",
    "BlockMoments",
    "dyad_log_prob",
    "block_moments",
    "build_p1_mixture",
    "build_excess_trust",
    "build_saturated",
    "invert_mean_parameters",
    "NonIdentifiableFamilyError",
    "model_to_dict",
    "model_from_dict",
]


class NonIdentifiableFamilyError(ValueError):
    """The aggregated statistic covariance is singular.

    ``null_direction`` holds a unit vector (over the free coordinates,
    embedded in R^p) along which the natural parameters are not identified.
    """

    def __init__(self, message: str, null_direction: np.ndarray):
        super().__init__(message)
        self.null_direction = null_direction


class TabularBlockModel:
    """Unconstrained dyad probability table pi[d, k, l]."""

    kind = "tabular"

    def __init__(self, K: int, alphabet: DyadAlphabet, pi: np.ndarray):
        pi = np.asarray(pi, dtype=float)
        if pi.shape != (alphabet.size, K, K):
            raise ValueError(f"pi must have shape (D, K, K)={ (alphabet.size, K, K) }")
        if np.any(pi < -1e-12) or np.any(pi > 1 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        sums = pi.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            raise ValueError("pi[:, k, l] must sum to 1 for every block pair")
        tr = alphabet.transpose
        if np.max(np.abs(pi - pi[tr].transpose(0, 2, 1))) > 1e-9:
            raise ValueError("pi violates transpose symmetry")
        self.K = K
        self.alphabet = alphabet
        self.pi = np.clip(pi, 0.0, 1.0)

    @classmethod
    def uniform(cls, K: int, alphabet: DyadAlphabet) -> "TabularBlockModel":
        D = alphabet.size
        return cls(K, alphabet, np.full((D, K, K), 1.0 / D))

    def log_probs(self) -> np.ndarray:
        """(D, K, K) table of log pi; -inf where pi is zero."""
        with np.errstate(divide="ignore"):
            return np.log(self.pi)


@dataclass(frozen=True)
class BlockMoments:
    """Per-(k, l) log-normalizer, statistic mean and covariance."""

    log_norm: np.ndarray  # (K, K)
    mean: np.ndarray      # (K, K, p)
    cov: np.ndarray       # (K, K, p, p)


class ExpFamBlockModel:
    """Log-linear dyad model with precomputed block statistic tables."""

    kind = "expfam"

    def __init__(self, K: int, alphabet: DyadAlphabet, stat: np.ndarray,
                 theta: np.ndarray | None = None,
                 fixed_mask: np.ndarray | None = None,
                 family: str = "custom"):
        stat = np.asarray(stat, dtype=float)
        if stat.ndim != 4 or stat.shape[:3] != (K, K, alphabet.size):
            raise ValueError("stat must have shape (K, K, D, p)")
        if not np.all(np.isfinite(stat)):
            raise ValueError("statistic tables must be finite")
        tr = alphabet.transpose
        # t_kl(d) must equal t_lk(transpose(d)) so that transposed dyads get
        # transposed probabilities
        if np.max(np.abs(stat - stat.transpose(1, 0, 2, 3)[:, :, tr, :])) > 1e-9:
            raise ValueError("stat violates transpose consistency")
        p = stat.shape[3]
        if theta is None:
            theta = np.zeros(p)
        theta = np.asarray(theta, dtype=float).copy()
        if theta.shape != (p,):
            raise ValueError(f"theta must have length {p}")
        if fixed_mask is None:
            fixed_mask = np.zeros(p, dtype=bool)
        fixed_mask = np.asarray(fixed_mask, dtype=bool).copy()
        if fixed_mask.shape != (p,):
            raise ValueError(f"fixed_mask must have length {p}")
        theta[fixed_mask] = 0.0
        self.K = K
        self.alphabet = alphabet
        self.stat = stat
        self.theta = theta
        self.fixed_mask = fixed_mask
        self.family = family

    @property
    def p(self) -> int:
        return self.stat.shape[3]

    @property
    def n_free(self) -> int:
        return int((~self.fixed_mask).sum())

    def with_theta(self, theta: np.ndarray) -> "ExpFamBlockModel":
        return ExpFamBlockModel(self.K, self.alphabet, self.stat, theta,
                                self.fixed_mask, self.family)

    def log_probs(self, theta: np.ndarray | None = None) -> np.ndarray:
        """(D, K, K) table of log pi_{d;kl}(theta)."""
        if theta is None:
            theta = self.theta
        scores = self.stat @ theta               # (K, K, D)
        psi = logsumexp(scores, axis=2)          # (K, K)
        return (scores - psi[:, :, None]).transpose(2, 0, 1)

    def probs(self, theta: np.ndarray | None = None) -> np.ndarray:
        return np.exp(self.log_probs(theta))

    def to_tabular(self) -> TabularBlockModel:
        return TabularBlockModel(self.K, self.alphabet, self.probs())


def dyad_log_prob(model, k: int, l: int, d: int) -> float:
    """log pi_{d;kl} for either model kind."""
    K, D = model.K, model.alphabet.size
    if not (0 <= k < K and 0 <= l < K and 0 <= d < D):
        raise IndexError(f"index ({k}, {l}, {d}) out of range")
    return float(model.log_probs()[d, k, l])


def block_moments(model: ExpFamBlockModel,
                  theta: np.ndarray | None = None) -> BlockMoments:
    """Exact psi, E[t] and Cov[t] per block pair by enumeration over dyads."""
    if theta is None:
        theta = model.theta
    scores = model.stat @ theta                  # (K, K, D)
    psi = logsumexp(scores, axis=2)
    w = np.exp(scores - psi[:, :, None])         # (K, K, D) probabilities
    mean = np.einsum("kld,kldp->klp", w, model.stat)
    centered = model.stat - mean[:, :, None, :]
    cov = np.einsum("kld,kldp,kldq->klpq", w, centered, centered)
    cov = 0.5 * (cov + cov.transpose(0, 1, 3, 2))
    return BlockMoments(log_norm=psi, mean=mean, cov=cov)


def build_p1_mixture(K: int, alphabet: DyadAlphabet) -> ExpFamBlockModel:
    """Mixture version of the p1 model for directed binary/signed networks.

    Coordinate 0 is the reciprocity weight on y_ij * y_ji; coordinates
    (1 + 2k, 2 + 2k) are component k's send/receive propensities, entering
    block (k, l) as theta_2k' (y_ij, y_ji) + theta_2l' (y_ji, y_ij).
    For K >= 2, component 0's pair is pinned to zero: shifting every
    component's (send, receive) pair by (c, -c) leaves the probabilities
    unchanged, so the unconstrained family is not identifiable.
    """
    if not alphabet.directed:
        raise ValueError("the p1 mixture needs a directed alphabet")
    D = alphabet.size
    p = 1 + 2 * K
    stat = np.zeros((K, K, D, p))
    for d, (a, b) in enumerate(alphabet.dyad_values):
        for k in range(K):
            for l in range(K):
                stat[k, l, d, 0] = a * b
                stat[k, l, d, 1 + 2 * k] += a
                stat[k, l, d, 2 + 2 * k] += b
                stat[k, l, d, 1 + 2 * l] += b
                stat[k, l, d, 2 + 2 * l] += a
    mask = np.zeros(p, dtype=bool)
    if K >= 2:
        mask[1] = mask[2] = True
    return ExpFamBlockModel(K, alphabet, stat, fixed_mask=mask, family="p1")


def build_excess_trust(K: int) -> ExpFamBlockModel:
    """Excess-trust model on signed directed networks.

    Coordinates: [negative-edge count, positive-edge count (pinned to 0),
    negative reciprocity, positive reciprocity, per-component trust slots].
    Block (k, l) routes the received rating y_ji into slot k and y_ij into
    slot l.  The positive-edge coordinate is kept in the vector but masked,
    leaving 3 + K free natural parameters.
    """
    alphabet = make_dyad_alphabet(signed_alphabet(), directed=True)
    D = alphabet.size
    p = 4 + K
    stat = np.zeros((K, K, D, p))
    for d, (a, b) in enumerate(alphabet.dyad_values):
        a_neg, a_pos = int(a == -1), int(a == 1)
        b_neg, b_pos = int(b == -1), int(b == 1)
        for k in range(K):
            for l in range(K):
                stat[k, l, d, 0] = a_neg + b_neg
                stat[k, l, d, 1] = a_pos + b_pos
                stat[k, l, d, 2] = a_neg * b_neg
                stat[k, l, d, 3] = a_pos * b_pos
                stat[k, l, d, 4 + k] += b
                stat[k, l, d, 4 + l] += a
    mask = np.zeros(p, dtype=bool)
    mask[1] = True
    return ExpFamBlockModel(K, alphabet, stat, fixed_mask=mask,
                            family="excess_trust")


def build_saturated(K: int, alphabet: DyadAlphabet) -> ExpFamBlockModel:
    """Saturated family: one indicator coordinate per free table cell.

    Off-diagonal block pairs k < l get one coordinate per nonbaseline dyad;
    diagonal blocks get one per transpose class of dyads (excluding the
    baseline class), since pi[(a,b);kk] = pi[(b,a);kk] is forced.
    """
    D = alphabet.size
    b = alphabet.baseline_index
    classes = [c for c in alphabet.transpose_classes() if b not in c]
    coords = 0
    diag_coord = {}
    offdiag_coord = {}
    for k in range(K):
        for ci, cls in enumerate(classes):
            diag_coord[(k, ci)] = coords
            coords += 1
    for k in range(K):
        for l in range(k + 1, K):
            for d in range(D):
                if d == b:
                    continue
                offdiag_coord[(k, l, d)] = coords
                coords += 1
    stat = np.zeros((K, K, D, coords))
    class_of = {}
    for ci, cls in enumerate(classes):
        for d in cls:
            class_of[d] = ci
    for k in range(K):
        for d, ci in class_of.items():
            stat[k, k, d, diag_coord[(k, ci)]] = 1.0
    tr = alphabet.transpose
    for (k, l, d), c in offdiag_coord.items():
        stat[k, l, d, c] = 1.0
        stat[l, k, tr[d], c] = 1.0
    return ExpFamBlockModel(K, alphabet, stat, family="saturated")


def _block_pair_weights(K: int, weights: np.ndarray | None) -> np.ndarray:
    if weights is None:
        w = np.ones((K, K))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (K, K):
            raise ValueError("weights must have shape (K, K)")
    return w


def invert_mean_parameters(target: TabularBlockModel,
                           family: ExpFamBlockModel,
                           weights: np.ndarray | None = None,
                           grad_tol: float = 1e-10,
                           max_iters: int = 200) -> np.ndarray:
    """Map a strictly positive table to natural parameters of ``family``.

    Maximizes the concave dual objective
    theta' mu_hat - sum_{kl} w_kl psi_kl(theta), where mu_hat aggregates the
    target's block means of the family statistics, by damped Newton ascent
    from theta = 0.  At the optimum the family matches the target's block
    means on the statistic span.
    """
    if target.K != family.K or target.alphabet.size != family.alphabet.size:
        raise ValueError("target and family must share K and alphabet")
    if np.any(target.pi <= 0):
        raise ValueError("target probabilities must be strictly positive")
    K = family.K
    w = _block_pair_weights(K, weights)
    free = ~family.fixed_mask
    # mu_hat = sum_{k,l} w_kl sum_d t_kl(d) target_pi[d,k,l]
    pi_klD = target.pi.transpose(1, 2, 0)  # (K, K, D)
    mu_hat = np.einsum("kl,kld,kldp->p", w, pi_klD, family.stat)

    mom0 = block_moments(family, np.zeros(family.p))
    H0 = np.einsum("kl,klpq->pq", w, mom0.cov)[np.ix_(free, free)]
    eigvals, eigvecs = np.linalg.eigh(H0)
    if eigvals[-1] <= 0 or eigvals[0] < 1e-10 * eigvals[-1]:
        null = np.zeros(family.p)
        null[free] = eigvecs[:, 0]
        raise NonIdentifiableFamilyError(
            "aggregated statistic covariance is singular", null_direction=null)

    def objective(theta):
        psi = logsumexp(family.stat @ theta, axis=2)
        return float(theta @ mu_hat - np.einsum("kl,kl->", w, psi))

    theta = np.zeros(family.p)
    f = objective(theta)
    for _ in range(max_iters):
        mom = block_moments(family, theta)
        grad = mu_hat - np.einsum("kl,klp->p", w, mom.mean)
        g = grad[free]
        if np.max(np.abs(g)) <= grad_tol:
            break
        H = np.einsum("kl,klpq->pq", w, mom.cov)[np.ix_(free, free)]
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        if step @ g <= 0:
            step = g
        scale = 1.0
        while scale > 1e-12:
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


def model_to_dict(model) -> dict:
    """JSON-serializable model description (see docs/schemas.md)."""
    alpha = model.alphabet
    base = {
        "kind": model.kind,
        "K": model.K,
        "alphabet": {
            "edge_values": list(alpha.edge.values),
            "zero_label": alpha.edge.zero_label,
            "directed": alpha.directed,
        },
    }
    if model.kind == "tabular":
        base["pi"] = model.pi.tolist()
    else:
        base["family"] = model.family
        base["theta"] = model.theta.tolist()
        base["fixed_mask"] = model.fixed_mask.astype(int).tolist()
        if model.family == "custom":
            base["stat"] = model.stat.tolist()
    return base


def model_from_dict(doc: dict):
    a = doc["alphabet"]
    edge = (binary_alphabet() if tuple(a["edge_values"]) == (0, 1)
            else signed_alphabet() if tuple(a["edge_values"]) == (-1, 0, 1)
            else None)
    if edge is None:
        from .network import EdgeAlphabet
        edge = EdgeAlphabet(values=tuple(a["edge_values"]),
                            zero_label=a["zero_label"])
    alphabet = make_dyad_alphabet(edge, a["directed"])
    K = doc["K"]
    if doc["kind"] == "tabular":
        return TabularBlockModel(K, alphabet, np.array(doc["pi"]))
    family = doc.get("family", "custom")
    if family == "p1":
        model = build_p1_mixture(K, alphabet)
    elif family == "excess_trust":
        model = build_excess_trust(K)
    elif family == "saturated":
        model = build_saturated(K, alphabet)
    else:
        return ExpFamBlockModel(K, alphabet, np.array(doc["stat"]),
                                np.array(doc["theta"]),
                                np.array(doc["fixed_mask"], dtype=bool))
    return model.with_theta(np.array(doc["theta"]))
