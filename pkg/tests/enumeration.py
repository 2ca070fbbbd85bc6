"""Exact transition matrices of the horizontal kernels on small discrete spaces.

The matrices are assembled from the kernels' own acceptance functions by
summing over every candidate / selection outcome, so the assertions made
on them are exact statements about the implemented formulas.
"""

import itertools

import numpy as np

from omcmc.horizontal import (
    mixture_log_acceptance,
    pmtm_log_acceptance,
    smh_log_acceptance,
)


def smh_kernel(p, f, N=2):
    m = len(p)
    states = list(itertools.product(range(m), repeat=N))
    index = {s: i for i, s in enumerate(states)}
    K = np.zeros((len(states), len(states)))
    for s in states:
        inv = np.array([f[x] / p[x] for x in s])
        for x0 in range(m):
            a = np.exp(smh_log_acceptance(np.log(inv), np.log(f[x0] / p[x0])))
            for k in range(N):
                pk = inv[k] / inv.sum()
                t = list(s)
                t[k] = x0
                K[index[s], index[tuple(t)]] += f[x0] * pk * a
                K[index[s], index[s]] += f[x0] * pk * (1 - a)
    pg = np.array([np.prod([p[x] for x in s]) for s in states])
    return states, K, pg


def basic_mixture_kernel(p, psi, N=2):
    m = len(p)
    states = list(itertools.product(range(m), repeat=N))
    index = {s: i for i, s in enumerate(states)}
    w = np.log(p) - np.log(psi)
    K = np.zeros((len(states), len(states)))
    for s in states:
        for z in range(m):
            a = np.exp(mixture_log_acceptance(np.full(N, w[z]), w[list(s)]))
            # chains accept independently given the shared candidate
            for moves in itertools.product((0, 1), repeat=N):
                prob = np.prod([a[n] if mv else 1 - a[n] for n, mv in enumerate(moves)])
                t = tuple(z if mv else x for x, mv in zip(s, moves))
                K[index[s], index[t]] += psi[z] * prob
    pg = np.array([np.prod([p[x] for x in s]) for s in states])
    return states, K, pg


def pmtm_kernel(p, psi, L=2):
    """Single-chain P-MTM kernel (the N chains share tries but are tested separately)."""
    m = len(p)
    w = np.log(p) - np.log(psi)
    K = np.zeros((m, m))
    for x in range(m):
        for Z in itertools.product(range(m), repeat=L):
            pz = np.prod([psi[z] for z in Z])
            wz = w[list(Z)]
            sel = np.exp(wz - np.logaddexp.reduce(wz))
            for k in range(L):
                a = float(np.exp(pmtm_log_acceptance(wz, k, w[x])))
                K[x, Z[k]] += pz * sel[k] * a
                K[x, x] += pz * sel[k] * (1 - a)
    return K
