"""Reference computations that share no code with the solvers under test."""

import itertools

import numpy as np


def random_model_arrays(rng, S, A, gamma, terminal=True, density=0.6):
    """Random (P, R, terminals). With ``terminal`` the last state absorbs and
    every other row puts positive mass on it, so any policy is absorbing."""
    P = np.zeros((A, S, S))
    R = rng.normal(size=(A, S, S))
    live = S - 1 if terminal else S
    for a in range(A):
        for s in range(live):
            support = rng.random(S) < density
            if terminal:
                support[S - 1] = True
            if not support.any():
                support[rng.integers(S)] = True
            w = rng.random(S) * support
            P[a, s] = w / w.sum()
    terms = ()
    if terminal:
        P[:, S - 1, :] = 0.0
        P[:, S - 1, S - 1] = 1.0
        R[:, S - 1, :] = 0.0
        terms = (S - 1,)
    return P, R, terms


def evaluate(P, R, gamma, actions, terminals=()):
    """Value of a deterministic policy by a direct linear solve."""
    S = P.shape[1]
    Ppi = np.array([P[actions[s], s] for s in range(S)])
    rpi = np.array([P[actions[s], s] @ R[actions[s], s] for s in range(S)])
    keep = [s for s in range(S) if s not in terminals]
    v = np.zeros(S)
    M = np.eye(len(keep)) - gamma * Ppi[np.ix_(keep, keep)]
    v[keep] = np.linalg.solve(M, rpi[keep])
    return v


def brute_force(P, R, gamma, terminals=(), e=None, bonus=None):
    """Best objective over every deterministic policy and the argmax set."""
    A, S, _ = P.shape
    e = np.ones(S) if e is None else e
    if bonus is not None:
        R = R + bonus.T[:, :, None]
    best, winners = -np.inf, []
    for actions in itertools.product(range(A), repeat=S):
        obj = e @ evaluate(P, R, gamma, actions, terminals)
        if obj > best + 1e-8:
            best, winners = obj, [actions]
        elif abs(obj - best) <= 1e-8:
            winners.append(actions)
    return best, winners


def soft_policy_iteration(P, R, gamma, kappa, bonus, iters=200):
    """Entropy-regularized policy iteration; converges to the soft fixed point for gamma < 1."""
    A, S, _ = P.shape
    r = np.einsum("ast,ast->sa", P, R) + bonus
    pi = np.full((S, A), 1.0 / A)
    v = np.zeros(S)
    for _ in range(iters):
        Ppi = np.einsum("sa,ast->st", pi, P)
        reg = (pi * (r - kappa * np.log(pi))).sum(axis=1)
        v = np.linalg.solve(np.eye(S) - gamma * Ppi, reg)
        q = r + gamma * np.einsum("ast,t->sa", P, v)
        z = q / kappa
        z -= z.max(axis=1, keepdims=True)
        pi = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    return v, pi
