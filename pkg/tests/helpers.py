"""Small table builders shared by the test modules."""

import numpy as np
import pandas as pd

from flowvote.ingest import CATEGORY, IS_ATTACK, ROW, FlowTable, load_schema


def nsl_table(n: int, attack: np.ndarray | None = None, values: dict | None = None) -> FlowTable:
    """An NSL-KDD table of ``n`` all-zero rows; ``attack`` marks attack rows."""
    schema = load_schema("nsl-kdd")
    attack = np.zeros(n, dtype=bool) if attack is None else np.asarray(attack, dtype=bool)
    data = {}
    for col in schema.columns:
        data[col.name] = np.full(n, "tcp" if col.type == "text" else 0.0, dtype=object
                                 if col.type == "text" else float)
    data["label"] = np.where(attack, "neptune", "normal")
    for k, v in (values or {}).items():
        data[k] = np.asarray(v, dtype=float)
    frame = pd.DataFrame(data)
    frame[ROW] = np.arange(n)
    frame[IS_ATTACK] = attack
    frame[CATEGORY] = np.where(attack, "neptune", "")
    return FlowTable(schema, frame)


def unsw_line(src="10.0.0.1", sport=1234, dst="10.0.0.2", dport=80, proto="tcp", label=0,
              **values) -> str:
    schema = load_schema("unsw-nb15")
    rec = dict.fromkeys(schema.names, "0")
    rec.update(srcip=src, sport=sport, dstip=dst, dsport=dport, proto=proto, state="FIN",
               service="-", attack_cat="Exploits" if label else "", label=label)
    rec.update(values)
    return ",".join(str(rec[n]) for n in schema.names)


def exhaustive_best_score(weights: np.ndarray) -> float:
    """max over non-empty vertex subsets H of min_{v in H} (weighted degree of v inside H)."""
    n, m = weights.shape
    total = n + m
    best = -1.0
    for mask in range(1, 1 << total):
        flows = [i for i in range(n) if mask >> i & 1]
        feats = [j for j in range(m) if mask >> (n + j) & 1]
        sub = weights[np.ix_(flows, feats)]
        degs = list(sub.sum(axis=1)) + list(sub.sum(axis=0))
        if not flows:
            degs = [0.0] * len(feats)
        if not feats:
            degs = [0.0] * len(flows)
        best = max(best, min(degs))
    return best


def check_trace(graph, trace, tol: float = 1e-12) -> int:
    """Replay a peel trace and assert monotonicity and minimal-degree deletion at every step.

    Returns the number of steps checked.
    """
    from flowvote.bicluster import linkage

    g = graph.copy()
    for v, recorded in trace.deletions:
        before = {u: linkage(g, u) for u in g.vertices()}
        assert abs(before[v] - recorded) <= tol * max(1.0, abs(recorded))
        assert all(recorded <= d + tol for d in before.values())
        g.delete(v)
        for u in g.vertices():
            assert linkage(g, u) <= before[u] + tol
    return len(trace.deletions)


def dense_qp_dual(x: np.ndarray, gamma: float, nu: float) -> tuple[float, np.ndarray]:
    """Independent solve of the one-class dual with cvxopt's interior-point QP."""
    from cvxopt import matrix, solvers

    m = len(x)
    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    k = np.exp(-gamma * sq)
    c = 1.0 / (nu * m)
    p = matrix(k)
    q = matrix(np.zeros(m))
    g = matrix(np.vstack([-np.eye(m), np.eye(m)]))
    h = matrix(np.r_[np.zeros(m), np.full(m, c)])
    a = matrix(np.ones((1, m)))
    b = matrix(1.0)
    solvers.options.update(show_progress=False, abstol=1e-12, reltol=1e-12, feastol=1e-12,
                           maxiters=200)
    sol = solvers.qp(p, q, g, h, a, b)
    alpha = np.array(sol["x"]).ravel()
    return 0.5 * float(alpha @ k @ alpha), alpha


def full_alpha(model, x):
    """Dual vector over all training rows (support rows matched back by value)."""
    alpha = np.zeros(len(x))
    for sv, a in zip(model.support_vectors, model.alphas):
        idx = np.flatnonzero(np.all(x == sv, axis=1))
        alpha[idx[0]] += a
    return alpha
