"""Sparse Monte Carlo network generation.

Instead of visiting all n(n-1)/2 pairs, the sampler draws, per block pair
(k, l), the number of nonbaseline dyads S_kl ~ Binomial(N_kl, 1 - pi_b;kl),
picks S_kl distinct node pairs uniformly without replacement (Floyd's
method over the pair index space, decoded by closed-form unranking), and
assigns each a nonbaseline dyad value from the conditional distribution
pi_d / (1 - pi_b).  Expected cost scales with n K^2 |D| plus the number of
sampled dyads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import ExpFamBlockModel, TabularBlockModel
from .network import SparseNetwork

__all__ = [
    "SimSpec",
    "sample_memberships",
    "sample_distinct_pairs",
    "sample_network",
]


@dataclass
class SimSpec:
    n: int
    gamma: np.ndarray
    model: TabularBlockModel | ExpFamBlockModel
    seed: int = 0
    relabel: bool = True   # shuffle node ids so block structure is not
                           # readable off the node order

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.gamma.shape != (self.model.K,):
            raise ValueError("gamma must have length K")
        if abs(self.gamma.sum() - 1.0) > 1e-9 or np.any(self.gamma < 0):
            raise ValueError("gamma must lie on the simplex")


def sample_memberships(gamma: np.ndarray, n: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial block sizes with contiguous assignment.

    Nodes 0..M_0-1 go to block 0, the next M_1 to block 1, and so on.
    """
    sizes = rng.multinomial(n, gamma)
    assignment = np.repeat(np.arange(len(gamma)), sizes)
    return sizes, assignment


def _unrank_triangular(idx: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Index in 0..m(m-1)/2-1 -> pair (r, c) with 0 <= r < c < m, row-major."""
    idx = np.asarray(idx, dtype=np.int64)
    # row r starts at offset r*m - r(r+1)/2; invert via the quadratic formula,
    # then correct for float rounding
    r = np.floor((2 * m - 1 - np.sqrt((2 * m - 1) ** 2 - 8.0 * idx)) / 2).astype(np.int64)
    r = np.clip(r, 0, m - 2)
    start = r * m - r * (r + 1) // 2
    too_far = start > idx
    while np.any(too_far):
        r[too_far] -= 1
        start = r * m - r * (r + 1) // 2
        too_far = start > idx
    next_start = (r + 1) * m - (r + 1) * (r + 2) // 2
    overshoot = idx >= next_start
    while np.any(overshoot):
        r[overshoot] += 1
        start = r * m - r * (r + 1) // 2
        next_start = (r + 1) * m - (r + 1) * (r + 2) // 2
        overshoot = idx >= next_start
    c = idx - start + r + 1
    return r, c


def _floyd_indices(N: int, S: int, rng: np.random.Generator) -> np.ndarray:
    """S distinct uniform draws from {0..N-1} via Floyd's algorithm."""
    if S > N:
        raise ValueError(f"cannot draw {S} distinct items from {N}")
    if S == 0:
        return np.empty(0, dtype=np.int64)
    if S == N:
        return np.arange(N, dtype=np.int64)
    bounds = np.arange(N - S, N, dtype=np.int64)
    draws = rng.integers(0, bounds + 1)
    chosen: set[int] = set()
    out = np.empty(S, dtype=np.int64)
    for pos, (j, t) in enumerate(zip(bounds, draws)):
        pick = int(j) if t in chosen else int(t)
        chosen.add(pick)
        out[pos] = pick
    return out


def sample_distinct_pairs(N_kl: int, S_kl: int, pair_decoder,
                          rng: np.random.Generator) -> list[tuple[int, int]]:
    """Draw S_kl distinct node pairs out of an index space of size N_kl.

    ``pair_decoder`` maps an array of pair indices to (i, j) arrays; the
    full pair set is never materialized.
    """
    idx = _floyd_indices(N_kl, S_kl, rng)
    i, j = pair_decoder(idx)
    return list(zip(i.tolist(), j.tolist()))


def _pi_table(model) -> np.ndarray:
    if isinstance(model, TabularBlockModel):
        return model.pi
    return model.probs()


def sample_network(spec: SimSpec) -> tuple[SparseNetwork, np.ndarray]:
    """Sample (network, true block assignment) from the spec.

    A master seed spawns one stream for the memberships, one per block pair
    and one for the optional relabeling, so results do not depend on the
    order block pairs are processed.
    """
    K = spec.model.K
    alphabet = spec.model.alphabet
    D = alphabet.size
    b = alphabet.baseline_index
    pi = _pi_table(spec.model)

    root = np.random.SeedSequence(spec.seed)
    n_streams = 1 + K * (K + 1) // 2 + 1
    seqs = root.spawn(n_streams)
    rng_z = np.random.default_rng(seqs[0])
    rng_perm = np.random.default_rng(seqs[-1])

    sizes, assignment = sample_memberships(spec.gamma, spec.n, rng_z)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    nonbase_d = np.delete(np.arange(D), b)

    nonbaseline: dict[tuple[int, int], int] = {}
    stream = 1
    for k in range(K):
        for l in range(k, K):
            rng = np.random.default_rng(seqs[stream])
            stream += 1
            m_k, m_l = int(sizes[k]), int(sizes[l])
            if k == l:
                N_kl = m_k * (m_k - 1) // 2
            else:
                N_kl = m_k * m_l
            if N_kl == 0:
                continue
            p_base = pi[b, k, l]
            if p_base >= 1.0:
                continue
            S_kl = int(rng.binomial(N_kl, 1.0 - p_base)) if p_base > 0 else N_kl
            if S_kl == 0:
                continue
            idx = _floyd_indices(N_kl, S_kl, rng)
            if k == l:
                r, c = _unrank_triangular(idx, m_k)
                i_nodes = starts[k] + r
                j_nodes = starts[k] + c
            else:
                # rectangular decode; block k precedes block l, so i < j holds
                i_nodes = starts[k] + idx // m_l
                j_nodes = starts[l] + idx % m_l
            cond = pi[nonbase_d, k, l] / (1.0 - p_base)
            cond = np.clip(cond, 0.0, None)
            cond /= cond.sum()
            values = nonbase_d[rng.choice(len(nonbase_d), size=S_kl, p=cond)]
            for i, j, d in zip(i_nodes.tolist(), j_nodes.tolist(), values.tolist()):
                nonbaseline[(i, j)] = d

    if spec.relabel:
        perm = rng_perm.permutation(spec.n)
        tr = alphabet.transpose
        relabeled: dict[tuple[int, int], int] = {}
        for (i, j), d in nonbaseline.items():
            a, c = int(perm[i]), int(perm[j])
            if a < c:
                relabeled[(a, c)] = d
            else:
                relabeled[(c, a)] = int(tr[d])
        nonbaseline = relabeled
        new_assignment = np.empty(spec.n, dtype=np.int64)
        new_assignment[perm] = assignment
        assignment = new_assignment

    network = SparseNetwork(n=spec.n, alphabet=alphabet, nonbaseline=nonbaseline)
    return network, assignment


def expected_nonbaseline(spec: SimSpec) -> float:
    """Expected nonbaseline dyad count given expected block sizes.

    Used by tests and the CLI as a quick fidelity reference; uses n*gamma
    in place of the random block sizes.
    """
    pi = _pi_table(spec.model)
    b = spec.model.alphabet.baseline_index
    m = spec.n * spec.gamma
    total = 0.0
    K = spec.model.K
    for k in range(K):
        for l in range(k, K):
            if k == l:
                N = m[k] * (m[k] - 1) / 2
            else:
                N = m[k] * m[l]
            total += N * (1.0 - pi[b, k, l])
    return total
