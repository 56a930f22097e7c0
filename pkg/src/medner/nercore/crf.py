"""Linear-chain CRF inference: path scoring, log-partition, Viterbi,
forward-backward marginals, and expected-count gradients.

Conventions: `emissions` is (N, T) float64 for a sentence of N tokens over T
tags; `transitions` is (T+2, T+2) with the virtual START state at row T and
STOP at row T+1. Illegal transitions carry the finite surrogate -1e4 rather
than -inf so gradients stay finite.

Chronological summation order is kept identical between score_sequence and
the Viterbi recursion so that tie-breaking on equal float scores is exact.
"""

from __future__ import annotations

import numpy as np

MASK_SCORE = -1e4


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable log(sum(exp(a))) along an axis."""
    m = np.max(a, axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.sum(np.exp(a - m), axis=axis))
    return out


def apply_mask(transitions: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    """Pin illegal transitions to MASK_SCORE; identity when mask is None."""
    if mask is None:
        return transitions
    pinned = transitions.copy()
    pinned[~mask] = MASK_SCORE
    return pinned


def score_sequence(emissions: np.ndarray, transitions: np.ndarray, tag_path) -> float:
    """Score of one tag path: START transition, emissions, tag bigrams, STOP."""
    n, t = emissions.shape
    start, stop = t, t + 1
    score = transitions[start, tag_path[0]] + emissions[0, tag_path[0]]
    for i in range(1, n):
        score = score + transitions[tag_path[i - 1], tag_path[i]] + emissions[i, tag_path[i]]
    return float(score + transitions[tag_path[n - 1], stop])


def log_partition(emissions: np.ndarray, transitions: np.ndarray) -> float:
    """log of the sum over all tag paths of exp(score_sequence)."""
    n, t = emissions.shape
    start, stop = t, t + 1
    alpha = transitions[start, :t] + emissions[0]
    inner = transitions[:t, :t]
    for i in range(1, n):
        alpha = logsumexp(alpha[:, None] + inner, axis=0) + emissions[i]
    return float(logsumexp(alpha + transitions[:t, stop], axis=0))


def viterbi(emissions: np.ndarray, transitions: np.ndarray) -> tuple[list[int], float]:
    """Highest-scoring tag path.

    Ties are broken toward the lowest tag index at every backtracking step:
    the final tag is the lowest index attaining the maximum, and each
    backpointer is the lowest-index predecessor attaining it.
    """
    n, t = emissions.shape
    start, stop = t, t + 1
    delta = transitions[start, :t] + emissions[0]
    backptr = np.zeros((n, t), dtype=np.intp)
    inner = transitions[:t, :t]
    for i in range(1, n):
        cand = delta[:, None] + inner
        backptr[i] = np.argmax(cand, axis=0)  # first max = lowest index
        delta = cand[backptr[i], np.arange(t)] + emissions[i]
    final = delta + transitions[:t, stop]
    last = int(np.argmax(final))
    best_score = float(final[last])
    path = [last]
    for i in range(n - 1, 0, -1):
        last = int(backptr[i, last])
        path.append(last)
    path.reverse()
    return path, best_score


def forward_backward(
    emissions: np.ndarray, transitions: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Log-space forward and backward lattices plus the log-partition."""
    n, t = emissions.shape
    start, stop = t, t + 1
    inner = transitions[:t, :t]
    alpha = np.empty((n, t))
    alpha[0] = transitions[start, :t] + emissions[0]
    for i in range(1, n):
        alpha[i] = logsumexp(alpha[i - 1][:, None] + inner, axis=0) + emissions[i]
    beta = np.empty((n, t))
    beta[n - 1] = transitions[:t, stop]
    for i in range(n - 2, -1, -1):
        beta[i] = logsumexp(inner + emissions[i + 1][None, :] + beta[i + 1][None, :], axis=1)
    log_z = float(logsumexp(alpha[n - 1] + beta[n - 1], axis=0))
    return alpha, beta, log_z


def marginals(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    """Posterior p(y_i = t) for every position and tag; rows sum to 1."""
    alpha, beta, log_z = forward_backward(emissions, transitions)
    return np.exp(alpha + beta - log_z)


def nll(emissions: np.ndarray, transitions: np.ndarray, tag_path) -> float:
    """Negative log-likelihood of one gold path; non-negative by construction."""
    return log_partition(emissions, transitions) - score_sequence(
        emissions, transitions, tag_path
    )


def nll_and_gradients(
    emissions: np.ndarray, transitions: np.ndarray, tag_path
) -> tuple[float, np.ndarray, np.ndarray]:
    """NLL plus exact gradients w.r.t. emissions and transitions.

    d(logZ)/d(emission) is the posterior marginal and d(logZ)/d(transition)
    the expected transition count; subtracting the observed gold counts gives
    the NLL gradient. START/STOP rows receive the boundary marginals.
    """
    n, t = emissions.shape
    start, stop = t, t + 1
    inner = transitions[:t, :t]
    alpha, beta, log_z = forward_backward(emissions, transitions)

    d_emissions = np.exp(alpha + beta - log_z)
    d_transitions = np.zeros_like(transitions)
    d_transitions[start, :t] = d_emissions[0]
    d_transitions[:t, stop] = d_emissions[n - 1]
    for i in range(n - 1):
        pair = alpha[i][:, None] + inner + emissions[i + 1][None, :] + beta[i + 1][None, :]
        d_transitions[:t, :t] += np.exp(pair - log_z)

    gold = list(tag_path)
    score = transitions[start, gold[0]] + emissions[0, gold[0]]
    d_emissions[0, gold[0]] -= 1.0
    d_transitions[start, gold[0]] -= 1.0
    for i in range(1, n):
        score = score + transitions[gold[i - 1], gold[i]] + emissions[i, gold[i]]
        d_emissions[i, gold[i]] -= 1.0
        d_transitions[gold[i - 1], gold[i]] -= 1.0
    score = score + transitions[gold[n - 1], stop]
    d_transitions[gold[n - 1], stop] -= 1.0

    return log_z - float(score), d_emissions, d_transitions


def viterbi_batch(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    """Viterbi over a batch of equal-length sentences, (B, N, T) -> (B, N).

    Same lowest-index tie-break as the single-sentence routine.
    """
    b, n, t = emissions.shape
    start, stop = t, t + 1
    inner = transitions[:t, :t]
    delta = transitions[start, :t][None, :] + emissions[:, 0, :]
    backptr = np.zeros((b, n, t), dtype=np.intp)
    rows = np.arange(b)[:, None]
    cols = np.arange(t)[None, :]
    for i in range(1, n):
        cand = delta[:, :, None] + inner[None, :, :]
        bp = np.argmax(cand, axis=1)
        backptr[:, i, :] = bp
        delta = cand[rows, bp, cols] + emissions[:, i, :]
    final = delta + transitions[:t, stop][None, :]
    paths = np.zeros((b, n), dtype=np.intp)
    last = np.argmax(final, axis=1)
    paths[:, n - 1] = last
    for i in range(n - 1, 0, -1):
        last = backptr[np.arange(b), i, last]
        paths[:, i - 1] = last
    return paths
