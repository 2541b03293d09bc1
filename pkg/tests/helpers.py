"""Shared oracles and instance builders for the test suite.

Everything here is implemented independently of the library's hot paths:
dense double loops, complete enumeration, direct formula evaluation.
"""

import itertools

import numpy as np
from scipy.special import logsumexp

from blockmix.models import TabularBlockModel
from blockmix.network import SparseNetwork


def random_tabular(K, alphabet, rng, floor=0.02):
    """Random strictly positive, transpose-symmetric probability table."""
    D = alphabet.size
    pi = rng.uniform(floor, 1.0, size=(D, K, K))
    pi = 0.5 * (pi + pi[alphabet.transpose].transpose(0, 2, 1))
    pi /= pi.sum(axis=0, keepdims=True)
    return TabularBlockModel(K, alphabet, pi)


def random_network(n, alphabet, rng, density=0.2):
    """Random sparse network: each pair nonbaseline w.p. ~density."""
    D = alphabet.size
    b = alphabet.baseline_index
    nonbase = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                d = int(rng.integers(D))
                if d != b:
                    nonbase[(i, j)] = d
    return SparseNetwork(n=n, alphabet=alphabet, nonbaseline=nonbase)


def random_alpha(n, K, rng, floor=0.05):
    """Random strictly positive row-stochastic matrix."""
    a = rng.uniform(floor, 1.0, size=(n, K))
    return a / a.sum(axis=1, keepdims=True)


def brute_force_stats(network, alpha):
    """O(n^2 K^2) soft counts: returns (T, C) with C including baseline.

    C[d] is symmetrized across the two orientations of each pair, matching
    the ordered-pair-halved convention of the library's statistics.
    """
    n, K = alpha.shape
    D = network.alphabet.size
    tr = network.alphabet.transpose
    E = np.zeros((D, K, K))
    for i in range(n):
        for j in range(i + 1, n):
            E[network.dyad_of(i, j)] += np.outer(alpha[i], alpha[j])
    C = 0.5 * (E + E[tr].transpose(0, 2, 1))
    return C.sum(axis=0), C


def brute_force_lb(network, alpha, gamma, log_pi):
    """Direct double-loop evaluation of the variational lower bound."""
    n, K = alpha.shape
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d = network.dyad_of(i, j)
            total += float(alpha[i] @ log_pi[d] @ alpha[j])
    with np.errstate(divide="ignore"):
        log_gamma = np.log(gamma)
    ent = np.where(alpha > 0, alpha * (log_gamma[None, :] - np.log(alpha)), 0.0)
    return total + float(ent.sum())


def exact_log_lik(network, gamma, log_pi):
    """log P(Y = y) by complete enumeration of all K^n assignments."""
    n = network.n
    K = gamma.shape[0]
    with np.errstate(divide="ignore"):
        log_gamma = np.log(gamma)
    terms = []
    for z in itertools.product(range(K), repeat=n):
        ll = sum(log_gamma[zi] for zi in z)
        for i in range(n):
            for j in range(i + 1, n):
                ll += log_pi[network.dyad_of(i, j), z[i], z[j]]
        terms.append(ll)
    return float(logsumexp(np.array(terms)))


def complete_data_log_lik(network, assignment, gamma, log_pi):
    """log P(Y=y, Z=z) for a hard assignment."""
    n = network.n
    with np.errstate(divide="ignore"):
        log_gamma = np.log(gamma)
    ll = float(log_gamma[assignment].sum())
    for i in range(n):
        for j in range(i + 1, n):
            ll += float(log_pi[network.dyad_of(i, j),
                               assignment[i], assignment[j]])
    return ll


def match_rate(truth, predicted, K):
    """Best label-permutation agreement rate between two hard labelings."""
    best = 0.0
    for perm in itertools.permutations(range(K)):
        mapped = np.array(perm)[predicted]
        best = max(best, float(np.mean(mapped == truth)))
    return best
