"""Vectorized quaternary belief-propagation engine.

All heavy lifting is batched numpy over a flat Tanner-edge enumeration
(row-major: matrix rows in order, entries sorted by qubit).  One iteration of
the flooding schedule:

* variable->check: ``d_e = sum_E q_e(E) * (-1)^<E, P_e>`` where ``q_e`` is the
  extrinsic distribution on the edge's qubit (the channel prior on the first
  iteration) and ``P_e`` the edge's check Pauli;
* check->variable: ``delta_e = (-1)^{s_j} * prod_{e' in row j, e' != e} d_e'``;
* beliefs: ``log Q_i(E) = log P_i(E) + sum_{e in col i} w_e * log r_e(E)``
  with ``r_e(E) = (1 + (-1)^<E, P_e> * delta_e) / 2``, normalized per qubit;
  the extrinsic for the next iteration leaves out the receiving check's own
  factor.  Multiplicative message weights ``w_e`` enter in the log domain and
  reduce to plain BP exactly at ``w = 1``.

The trace/backward pair implements reverse-mode differentiation of the
training losses (per-iteration cross-entropy against the sampled error,
and/or the soft-syndrome satisfaction penalty) through the unrolled
schedule; it is checked against central finite differences in the test
suite.

Numerical safety: the channel prior is clamped away from zero and ``delta``
is clamped to ``+-(1 - 1e-12)`` before entering logs, so no message can ever
be non-finite.
"""

from __future__ import annotations

import numpy as np

from .pauli import ANTICOMMUTES, COMMUTE_SIGN, SparseCheckMatrix

DELTA_CLIP = 1.0 - 1e-12
PROB_FLOOR = 1e-12


class CheckArrays:
    """Flat-array view of a sparse check matrix for batched message passing."""

    def __init__(self, H: SparseCheckMatrix):
        self.m, self.n = H.m, H.n
        edge_row, edge_col, edge_pauli, slot = [], [], [], []
        for j, row in enumerate(H.rows):
            for k, (q, p) in enumerate(row):
                edge_row.append(j)
                edge_col.append(q)
                edge_pauli.append(p)
                slot.append(k)
        self.n_edges = len(edge_row)
        self.edge_row = np.array(edge_row, dtype=np.int64)
        self.edge_col = np.array(edge_col, dtype=np.int64)
        self.edge_pauli = np.array(edge_pauli, dtype=np.int64)
        self.row_width = int(H.row_weights().max(initial=1))
        self.flat_pos = self.edge_row * self.row_width + np.array(slot)

        # (E, 4) tables indexed by the error Pauli on the edge's qubit.
        self.sign = COMMUTE_SIGN[self.edge_pauli]            # float +-1
        self.anti = ANTICOMMUTES[self.edge_pauli]            # uint8 0/1

        order = np.argsort(self.edge_col, kind="stable")
        self.col_perm = order
        counts = np.bincount(self.edge_col, minlength=self.n)
        self.col_starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
        self.all_cols_used = bool((counts > 0).all())

    @staticmethod
    def of(H: SparseCheckMatrix) -> "CheckArrays":
        """Cached arrays for an immutable check matrix."""
        if H._arrays is None:
            H._arrays = CheckArrays(H)
        return H._arrays

    # -- gather/scatter helpers -------------------------------------------

    def scatter_rows(self, values: np.ndarray, pad: float) -> np.ndarray:
        """(B, E) edge values -> (B, m, row_width) padded row matrix."""
        B = values.shape[0]
        out = np.full((B, self.m * self.row_width), pad, dtype=values.dtype)
        out[:, self.flat_pos] = values
        return out.reshape(B, self.m, self.row_width)

    def gather_rows(self, padded: np.ndarray) -> np.ndarray:
        B = padded.shape[0]
        return padded.reshape(B, self.m * self.row_width)[:, self.flat_pos]

    def col_sum(self, values: np.ndarray) -> np.ndarray:
        """(B, E, 4) edge values -> (B, n, 4) per-qubit sums."""
        if self.all_cols_used:
            return np.add.reduceat(values[:, self.col_perm, :],
                                   self.col_starts, axis=1)
        out = np.zeros((self.n, values.shape[0], 4), dtype=values.dtype)
        np.add.at(out, self.edge_col, values.transpose(1, 0, 2))
        return out.transpose(1, 0, 2)

    def syndrome_of_codes(self, codes: np.ndarray) -> np.ndarray:
        """Syndromes (B, m) of batched per-qubit Pauli codes (B, n)."""
        codes = np.atleast_2d(codes)
        bits = ANTICOMMUTES[self.edge_pauli, codes[:, self.edge_col]]
        padded = self.scatter_rows(bits.astype(np.int64), pad=0)
        return (padded.sum(axis=2) & 1).astype(np.uint8)


def clamp_prior(prior: np.ndarray, n: int) -> np.ndarray:
    """Normalize a (4,) or (n, 4) prior, clamped away from 0 and 1."""
    p = np.asarray(prior, dtype=np.float64)
    if p.ndim == 1:
        p = np.tile(p, (n, 1))
    if p.shape != (n, 4):
        raise ValueError(f"prior must have shape (4,) or ({n}, 4)")
    if (p < 0).any() or not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("prior rows must be distributions")
    p = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return p / p.sum(axis=1, keepdims=True)


def _logsumexp(a: np.ndarray) -> np.ndarray:
    """Stable logsumexp over the trailing axis, keepdims."""
    mx = a.max(axis=-1, keepdims=True)
    return mx + np.log(np.exp(a - mx).sum(axis=-1, keepdims=True))


def _leave_one_out(D: np.ndarray) -> np.ndarray:
    """Per-row products omitting each position, along the trailing axis."""
    pre = np.ones_like(D)
    np.cumprod(D[..., :-1], axis=-1, out=pre[..., 1:])
    suf = np.ones_like(D)
    suf[..., :-1] = np.cumprod(D[..., :0:-1], axis=-1)[..., ::-1]
    return pre * suf


def _leave_one_out_vjp(D: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Backward of :func:`_leave_one_out`; exact also when entries are 0."""
    W = D.shape[-1]
    out = np.empty_like(D)
    for pos in range(W):
        keep = [k for k in range(W) if k != pos]
        loo = _leave_one_out(D[..., keep])
        out[..., pos] = (grad[..., keep] * loo).sum(axis=-1)
    return out


def vn_stage(ar: CheckArrays, lq: np.ndarray) -> np.ndarray:
    """Variable->check scalars d_e from log extrinsic distributions (B, E, 4):
    the commuting-minus-anticommuting probability mass on each edge."""
    return np.einsum("bek,ek->be", np.exp(lq), ar.sign)


def cn_stage(ar: CheckArrays, d: np.ndarray, sign_row: np.ndarray):
    """Check->variable scalars: syndrome sign times the leave-one-out product
    of the row's incoming d values.  Returns (padded d, raw delta, clipped)."""
    D = ar.scatter_rows(d, pad=1.0)
    loo = _leave_one_out(D)
    delta0 = sign_row[:, ar.edge_row] * ar.gather_rows(loo)
    return D, delta0, np.clip(delta0, -DELTA_CLIP, DELTA_CLIP)


def edge_log_factors(ar: CheckArrays, delta: np.ndarray,
                     w_t: np.ndarray | None) -> np.ndarray:
    """Per-edge log likelihood factors ``w * log((1 + sign * delta) / 2)``."""
    lr = np.log1p(ar.sign[None, :, :] * delta[:, :, None]) - np.log(2.0)
    return (w_t[None, :, None] * lr if w_t is not None else lr), lr


def belief_stage(ar: CheckArrays, wlr: np.ndarray, log_prior: np.ndarray):
    """Combine prior and weighted factors into per-qubit log marginals and
    the per-edge extrinsic log distributions for the next iteration."""
    U = log_prior[None, :, :] + ar.col_sum(wlr)
    logQ = U - _logsumexp(U)
    V = U[:, ar.edge_col, :] - wlr
    lq_next = V - _logsumexp(V)
    return logQ, lq_next


def _iteration(ar: CheckArrays, lq: np.ndarray, sign_row: np.ndarray,
               log_prior: np.ndarray, w_t: np.ndarray | None, save: bool):
    """One flooding iteration.

    lq: (B, E, 4) log extrinsic distributions; sign_row: (B, m) floats +-1
    encoding the syndrome; log_prior: (n, 4); w_t: (E,) weights or None.
    Returns (log_marginals (B, n, 4), lq_next (B, E, 4), saved-or-None).
    """
    q = np.exp(lq)
    d = np.einsum("bek,ek->be", q, ar.sign)
    D, delta0, delta = cn_stage(ar, d, sign_row)
    wlr, lr = edge_log_factors(ar, delta, w_t)
    logQ, lq_next = belief_stage(ar, wlr, log_prior)

    saved = None
    if save:
        saved = {
            "q": q, "D": D, "mask": np.abs(delta0) < DELTA_CLIP,
            "delta": delta, "lr": lr, "logQ": logQ, "lq_next": lq_next,
            "w_t": w_t,
        }
    return logQ, lq_next, saved


def _iteration_vjp(ar: CheckArrays, saved: dict, sign_row: np.ndarray,
                   g_lq_next: np.ndarray, g_logQ: np.ndarray):
    """Reverse one iteration: gradients w.r.t. the iteration's weights and
    its input log extrinsic distributions."""
    sm_next = np.exp(saved["lq_next"])
    g_V = g_lq_next - sm_next * g_lq_next.sum(axis=2, keepdims=True)

    g_wlr = -g_V
    g_U = ar.col_sum(g_V)
    smQ = np.exp(saved["logQ"])
    g_U += g_logQ - smQ * g_logQ.sum(axis=2, keepdims=True)
    g_wlr += g_U[:, ar.edge_col, :]

    w_t, lr = saved["w_t"], saved["lr"]
    if w_t is not None:
        g_w = np.einsum("bek,bek->e", g_wlr, lr)
        g_lr = w_t[None, :, None] * g_wlr
    else:
        g_w = None
        g_lr = g_wlr

    denom = 1.0 + ar.sign[None, :, :] * saved["delta"][:, :, None]
    g_delta = (g_lr * ar.sign[None, :, :] / denom).sum(axis=2)
    g_delta0 = g_delta * saved["mask"]

    g_loo = ar.scatter_rows(g_delta0 * sign_row[:, ar.edge_row], pad=0.0)
    g_D = _leave_one_out_vjp(saved["D"], g_loo)
    g_d = ar.gather_rows(g_D)

    g_q = g_d[:, :, None] * ar.sign[None, :, :]
    g_lq = saved["q"] * g_q
    return g_w, g_lq


def initial_lq(ar: CheckArrays, log_prior: np.ndarray, batch: int) -> np.ndarray:
    return np.broadcast_to(
        log_prior[ar.edge_col], (batch, ar.n_edges, 4)).copy()


def bp_run(ar: CheckArrays, s: np.ndarray, log_prior: np.ndarray,
           max_iterations: int, weights: np.ndarray | None,
           early_stop: bool = True):
    """Batched flooding BP with per-shot early stopping.

    s: (B, m) syndrome bits.  Returns (marginals (B, n, 4),
    hard (B, n) Pauli codes, converged (B,) bool, iterations (B,) int).
    """
    B = s.shape[0]
    marginals = np.empty((B, ar.n, 4))
    hard_out = np.empty((B, ar.n), dtype=np.uint8)
    converged = np.zeros(B, dtype=bool)
    iterations = np.full(B, max_iterations, dtype=np.int64)

    active = np.arange(B)
    sign_row = 1.0 - 2.0 * s.astype(np.float64)
    s_act, sign_act = s, sign_row
    lq = initial_lq(ar, log_prior, B)

    for it in range(1, max_iterations + 1):
        w_t = weights[it - 1] if weights is not None else None
        logQ, lq_next, _ = _iteration(ar, lq, sign_act, log_prior, w_t,
                                      save=False)
        last = it == max_iterations
        if early_stop or last:
            hard = np.argmax(logQ, axis=2).astype(np.uint8)
            done = (ar.syndrome_of_codes(hard) == s_act).all(axis=1)
        if not early_stop:
            if last:
                marginals[active] = np.exp(logQ)
                hard_out[active] = hard
                converged[active] = done
                break
            lq = lq_next
            continue

        final = done | last
        if final.any():
            idx = active[final]
            marginals[idx] = np.exp(logQ[final])
            hard_out[idx] = hard[final]
            converged[idx] = done[final]
            iterations[idx] = it
        if final.all():
            break
        keep = ~final
        active = active[keep]
        lq = lq_next[keep]
        s_act = s_act[keep]
        sign_act = sign_act[keep]

    if not np.isfinite(marginals).all():
        # impossible under the prior/delta clamps; a defect, not bad input
        raise FloatingPointError("non-finite BP marginal: clamping defect")
    return marginals, hard_out, converged, iterations


def bp_trace(ar: CheckArrays, s: np.ndarray, log_prior: np.ndarray,
             iterations: int, weights: np.ndarray | None):
    """Run exactly `iterations` flooding iterations with no early stop,
    keeping everything needed for the backward pass.

    Returns (per-iteration log-marginals list, trace dict).
    """
    B = s.shape[0]
    sign_row = 1.0 - 2.0 * s.astype(np.float64)
    lq = initial_lq(ar, log_prior, B)
    saves, logQs = [], []
    for it in range(iterations):
        w_t = weights[it] if weights is not None else None
        logQ, lq, saved = _iteration(ar, lq, sign_row, log_prior, w_t,
                                     save=True)
        saves.append(saved)
        logQs.append(logQ)
    return logQs, {"saves": saves, "sign_row": sign_row, "batch": B}


def cross_entropy_loss(logQs: list[np.ndarray], true_codes: np.ndarray) -> float:
    """Mean over batch of the multi-iteration cross-entropy
    ``sum_t sum_i -log Q_i^(t)(e_i) / (T n)``."""
    T = len(logQs)
    B, n = true_codes.shape
    total = 0.0
    rows = np.arange(B)[:, None], np.arange(n)[None, :]
    for logQ in logQs:
        total -= logQ[rows[0], rows[1], true_codes].sum()
    return float(total / (T * n * B))


def _expected_check_signs(ar: CheckArrays, logQ: np.ndarray):
    """Per-check expected satisfaction sign of the soft decision.

    b_e = sum_E Q_i(E) (-1)^<E, P_e> on each edge from the full beliefs;
    M_j = prod over the row of b_e (before the syndrome sign).
    Returns (b (B, E), padded b (B, m, W), M (B, m))."""
    b = np.einsum("bek,ek->be", np.exp(logQ)[:, ar.edge_col, :], ar.sign)
    B_pad = ar.scatter_rows(b, pad=1.0)
    return b, B_pad, B_pad.prod(axis=2)


def syndrome_loss(ar: CheckArrays, logQs: list[np.ndarray],
                  sign_row: np.ndarray) -> float:
    """Mean over batch of the multi-iteration soft-syndrome penalty
    ``sum_t sum_j -log((1 + s~_j M_j^(t)) / 2) / (T m)``: zero when the
    marginals commit to any error pattern reproducing every check bit."""
    T = len(logQs)
    B, m = sign_row.shape
    total = 0.0
    for logQ in logQs:
        _, _, M = _expected_check_signs(ar, logQ)
        p_sat = np.clip((1.0 + sign_row * M) / 2.0, PROB_FLOOR, None)
        total -= np.log(p_sat).sum()
    return float(total / (T * m * B))


def _syndrome_loss_grad_logq(ar: CheckArrays, logQ: np.ndarray,
                             sign_row: np.ndarray, scale: float) -> np.ndarray:
    """d(syndrome_loss)/d(logQ) for one iteration, times `scale`."""
    b, B_pad, M = _expected_check_signs(ar, logQ)
    sM = sign_row * M
    live = sM > (2.0 * PROB_FLOOR - 1.0)
    g_M = np.where(live, -scale * sign_row / np.maximum(1.0 + sM, 2.0 * PROB_FLOOR),
                   0.0)
    loo = _leave_one_out(B_pad)
    g_b = g_M[:, ar.edge_row] * ar.gather_rows(loo)
    g_Q_edges = g_b[:, :, None] * ar.sign[None, :, :]
    g_Q = ar.col_sum(g_Q_edges)
    return np.exp(logQ) * g_Q


def bp_backward_partial(ar: CheckArrays, trace: dict, true_codes: np.ndarray,
                        loss_iterations: tuple[int, ...],
                        ce_weight: float = 1.0, synd_weight: float = 0.0):
    """Gradient of the training loss w.r.t. the per-iteration edge weights,
    by reverse-mode sweep through the saved trace.

    The loss is ``ce_weight * cross_entropy + synd_weight * syndrome_loss``
    over the iterations in ``loss_iterations`` (all of them for the
    multi-iteration variants, just the last otherwise), each term normalized
    by its own count of iterations, qubits/checks and the batch.
    """
    saves, sign_row = trace["saves"], trace["sign_row"]
    T = len(saves)
    B, n = true_codes.shape
    m = sign_row.shape[1]
    ce_scale = -ce_weight / (len(loss_iterations) * n * B)
    synd_scale = synd_weight / (len(loss_iterations) * m * B)
    loss_set = set(loss_iterations)

    g_w = np.zeros((T, ar.n_edges))
    g_lq = np.zeros((B, ar.n_edges, 4))
    rows = np.arange(B)[:, None], np.arange(n)[None, :]
    for t in range(T - 1, -1, -1):
        g_logQ = np.zeros((B, n, 4))
        if t in loss_set:
            if ce_weight:
                g_logQ[rows[0], rows[1], true_codes] = ce_scale
            if synd_weight:
                g_logQ += _syndrome_loss_grad_logq(ar, saves[t]["logQ"],
                                                   sign_row, synd_scale)
        g_w_t, g_lq = _iteration_vjp(ar, saves[t], sign_row, g_lq, g_logQ)
        if g_w_t is not None:
            g_w[t] = g_w_t
    return g_w
