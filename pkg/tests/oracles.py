"""Slow, loop-based reference evaluations used as independent test oracles.

Nothing here imports the autograd module or the batched code paths.
"""
import math

import numpy as np


def softmax(v):
    v = [float(x) for x in v]
    m = max(v)
    z = [math.exp(x - m) for x in v]
    s = math.fsum(z)
    return np.array([x / s for x in z])


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.array([1.0 / (1.0 + math.exp(-v)) if v >= 0 else math.exp(v) / (1.0 + math.exp(v))
                     for v in x.reshape(-1)]).reshape(x.shape)


def kl(p, q, eps=1e-12):
    return math.fsum(pi * (math.log(pi) - math.log(max(qi, eps))) for pi, qi in zip(p, q) if pi > 0)


def lstm_direction(X, Wx, Wh, b, reverse=False):
    """Step-by-step LSTM over rows of X; returns states aligned to input positions."""
    n = Wh.shape[1]
    h = np.zeros(n)
    c = np.zeros(n)
    out = [None] * len(X)
    order = range(len(X) - 1, -1, -1) if reverse else range(len(X))
    for t in order:
        z = Wx @ X[t] + Wh @ h + b
        i = sigmoid(z[:n])
        f = sigmoid(z[n:2 * n])
        g = np.tanh(z[2 * n:3 * n])
        o = sigmoid(z[3 * n:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[t] = h
    return out


def bilstm(X, P):
    fw = lstm_direction(X, P["enc_fw_Wx"], P["enc_fw_Wh"], P["enc_fw_b"])
    bw = lstm_direction(X, P["enc_bw_Wx"], P["enc_bw_Wh"], P["enc_bw_b"], reverse=True)
    H = [np.concatenate([f, b]) for f, b in zip(fw, bw)]
    return H, H[-1]


def init_entities(triples, n, P):
    d = P["W_E_init"].shape[0]
    E = []
    for e in range(n):
        s = np.zeros(d)
        for (h, r, t) in triples:
            if t == e:
                s = s + P["W_E_init"] @ P["rel_emb"][r]
        E.append(sigmoid(s))
    return E


def aggregate(E, q, P):
    beta = [float(q @ (P["W_gate"] @ e + P["b_q"])) for e in E]
    a = softmax(beta)
    eg = np.zeros_like(E[0])
    for w, e in zip(a, E):
        eg = eg + w * e
    return eg, a


def instruction(i_prev, q, eg, H, k, P, use_graph_summary=True):
    parts = [i_prev, q, eg] if use_graph_summary else [i_prev, q]
    qk = P[f"instr_W.{k}"] @ np.concatenate(parts) + P[f"instr_b.{k}"]
    scores = [float(np.sum(P["W_alpha"] @ (qk * h))) for h in H]
    a = softmax(scores)
    i = np.zeros_like(H[0])
    for w, h in zip(a, H):
        i = i + w * h
    return i, a


def reason(i, E, p, triples, P):
    depth = sum(1 for k in P if k.startswith("update_W."))
    newE = []
    for e in range(len(E)):
        ehat = np.zeros_like(E[0])
        for (h, r, t) in triples:
            if t == e:
                m = sigmoid(i * (P["W_R"] @ P["rel_emb"][r]))
                ehat = ehat + p[h] * m
        x = np.concatenate([E[e], ehat])
        for layer in range(depth):
            x = sigmoid(P[f"update_W.{layer}"] @ x + P[f"update_b.{layer}"])
        newE.append(x)
    newp = softmax([float(e @ P["w_score"]) for e in newE])
    return newE, newp


def forward(X, triples, n, topics, P, steps, use_graph_summary=True):
    """Full loop. Returns a list of per-step dicts with E, p, i, eg, alpha, alpha_e."""
    H, q = bilstm(X, P)
    E = init_entities(triples, n, P)
    p = np.zeros(n)
    for t in set(topics):
        p[t] = 1.0 / len(set(topics))
    i = q
    eg, ae = aggregate(E, q, P)
    a0 = np.zeros(len(H))
    a0[-1] = 1.0
    states = [dict(E=np.array(E), p=p, i=i, eg=eg, alpha=a0, alpha_e=ae)]
    for k in range(1, steps + 1):
        i, a = instruction(i, q, eg, H, k, P, use_graph_summary)
        E, p = reason(i, E, p, triples, P)
        eg, ae = aggregate(E, q, P)
        states.append(dict(E=np.array(E), p=p, i=i, eg=eg, alpha=a, alpha_e=ae))
    return states


def bfs(n, edges, sources, depth):
    adj = [set() for _ in range(n)]
    for h, t in edges:
        adj[h].add(t)
        adj[t].add(h)
    dist = {s: 0 for s in sources}
    frontier = list(sources)
    for dd in range(1, depth + 1):
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dd
                    nxt.append(v)
        frontier = nxt
    return dist


def dense_ppr(n, edges, topics, damping, iters=2000):
    """Dense power iteration on the undirected, self-loop-free transition matrix."""
    A = np.zeros((n, n))
    for h, t in edges:
        if h != t:
            A[h, t] += 1
            A[t, h] += 1
    deg = A.sum(axis=1)
    P = np.zeros((n, n))
    for u in range(n):
        if deg[u] > 0:
            P[u] = A[u] / deg[u]
    restart = np.zeros(n)
    restart[list(topics)] = 1.0 / len(topics)
    x = restart.copy()
    for _ in range(iters):
        dangling = x[deg == 0].sum()
        x = damping * (P.T @ x + dangling * restart) + (1 - damping) * restart
    return x
