"""Training kernels: full-batch gradient steps on the joint objective.

The objective for one stage pair (X, Y) couples a forward map F and a
backward map G:

    L = lam_dist * (dist(F(X), Y) + dist(G(Y), X))
      + lam_cycle * (msq(G(F(X)) - X) + msq(F(G(Y)) - Y))

where dist is squared mean distance plus squared Frobenius covariance
distance and msq is the mean squared entry (the per-coordinate squared
residual, divided by d).

For affine maps every gradient of L is an exact function of the pair's
means and covariances, so the hot loop (`centered_affine_steps`) works
on d x d statistics instead of n x d sample matrices. The sample-space
forms (`affine_objective`, `affine_gradients`) are kept as the
reference implementation for finite-difference checks; the moment-space
step must agree with them analytically.

Offsets are optimized in centered coordinates, ct = c + W mx - my for
the forward map and symmetrically for the backward one. In those
coordinates the mean-fit gradient does not act on W, which keeps the
covariance fit independent of how far apart the stage means sit.
Segment boundaries convert back to plain offsets.

The MLP path (one hidden tanh layer on a residual trunk) has no moment
shortcut and trains in sample space.
"""

from __future__ import annotations

import numpy as np


def pair_moments(X: np.ndarray, Y: np.ndarray):
    """Per-pair statistics consumed by the affine step loop."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    mx = X.mean(axis=0)
    my = Y.mean(axis=0)
    Xc = X - mx
    Yc = Y - my
    cx = Xc.T @ Xc / X.shape[0]
    cy = Yc.T @ Yc / Y.shape[0]
    return mx, my, cx, cy


# ---------------------------------------------------------------------------
# affine, sample space (reference forms)
# ---------------------------------------------------------------------------

def affine_objective(wf, cf, wg, cg, X, Y, lam_cycle, lam_dist) -> float:
    n, d = X.shape
    m = Y.shape[0]
    P = X @ wf.T + cf
    Q = Y @ wg.T + cg
    mp, my = P.mean(0), Y.mean(0)
    mq, mx = Q.mean(0), X.mean(0)
    Pc, Yc = P - mp, Y - my
    Qc, Xc = Q - mq, X - mx
    dcf = Pc.T @ Pc / n - Yc.T @ Yc / m
    dcb = Qc.T @ Qc / m - Xc.T @ Xc / n
    dist = float((mp - my) @ (mp - my) + (dcf * dcf).sum()
                 + (mq - mx) @ (mq - mx) + (dcb * dcb).sum())
    r1 = P @ wg.T + cg - X
    r2 = Q @ wf.T + cf - Y
    cyc = float((r1 * r1).sum() / (n * d) + (r2 * r2).sum() / (m * d))
    return lam_dist * dist + lam_cycle * cyc


def affine_gradients(wf, cf, wg, cg, X, Y, lam_cycle, lam_dist):
    """Exact gradients of affine_objective in plain (W, c) coordinates.

    The centering inside the covariance terms contributes nothing: the
    centered rows sum to zero, so the correction term vanishes.
    """
    n, d = X.shape
    m = Y.shape[0]
    P = X @ wf.T + cf
    Q = Y @ wg.T + cg
    mp, my = P.mean(0), Y.mean(0)
    mq, mx = Q.mean(0), X.mean(0)
    Pc, Yc = P - mp, Y - my
    Qc, Xc = Q - mq, X - mx
    dcf = Pc.T @ Pc / n - Yc.T @ Yc / m
    dcb = Qc.T @ Qc / m - Xc.T @ Xc / n
    gP = lam_dist * ((2.0 / n) * (mp - my)[None, :] + (4.0 / n) * (Pc @ dcf))
    gQ = lam_dist * ((2.0 / m) * (mq - mx)[None, :] + (4.0 / m) * (Qc @ dcb))
    r1 = P @ wg.T + cg - X
    r2 = Q @ wf.T + cf - Y
    gP = gP + lam_cycle * (2.0 / (n * d)) * (r1 @ wg)
    gQ = gQ + lam_cycle * (2.0 / (m * d)) * (r2 @ wf)
    gwf = gP.T @ X + lam_cycle * (2.0 / (m * d)) * (r2.T @ Q)
    gcf = gP.sum(0) + lam_cycle * (2.0 / (m * d)) * r2.sum(0)
    gwg = gQ.T @ Y + lam_cycle * (2.0 / (n * d)) * (r1.T @ P)
    gcg = gQ.sum(0) + lam_cycle * (2.0 / (n * d)) * r1.sum(0)
    return gwf, gcf, gwg, gcg


# ---------------------------------------------------------------------------
# affine, moment space (hot loop)
# ---------------------------------------------------------------------------

def centered_affine_steps(steps, lr, lam_cycle, lam_dist,
                          wf, cfc, wg, cgc, cx, cy) -> int:
    """Run gradient steps in centered coordinates, in place.

    Descent happens on (W, c~) with c~ = c + W @ mx - my, which is
    exactly plain descent on mean-centered data. Raw-coordinate
    descent couples the offset into the weight through the feature
    means and turns unstable once those means are large (the age
    coordinate sits at the stage target), so the centered
    parametrization is the one the trainer is defined on. Returns -1
    on success or the 0-based index of the first step whose gradients
    were non-finite (parameters are left as of that step).
    """
    d = wf.shape[0]
    eye = np.eye(d)
    kc = 2.0 * lam_cycle / d
    # divergence is detected and reported, so the overflow on the way
    # there is not worth a warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _centered_loop(steps, lr, lam_dist, kc, eye,
                              wf, cfc, wg, cgc, cx, cy)


def _centered_loop(steps, lr, lam_dist, kc, eye,
                   wf, cfc, wg, cgc, cx, cy) -> int:
    for s in range(steps):
        t1 = wf @ cx
        dcf = t1 @ wf.T - cy
        t2 = wg @ cy
        dcb = t2 @ wg.T - cx
        kf = wg @ wf - eye
        kb = wf @ wg - eye
        r1 = wg @ cfc + cgc
        r2 = wf @ cgc + cfc
        kfcx = kf @ cx
        kbcy = kb @ cy
        gcf = 2.0 * lam_dist * cfc + kc * (wg.T @ r1 + r2)
        gcg = 2.0 * lam_dist * cgc + kc * (wf.T @ r2 + r1)
        gwf = 4.0 * lam_dist * (dcf @ t1) + kc * (
            wg.T @ kfcx + kbcy @ wg.T + np.outer(r2, cgc))
        gwg = 4.0 * lam_dist * (dcb @ t2) + kc * (
            wf.T @ kbcy + kfcx @ wf.T + np.outer(r1, cfc))
        if not (np.isfinite(gwf.sum()) and np.isfinite(gwg.sum())
                and np.isfinite(gcf.sum()) and np.isfinite(gcg.sum())):
            return s
        wf -= lr * gwf
        cfc -= lr * gcf
        wg -= lr * gwg
        cgc -= lr * gcg
    return -1


def run_affine_schedule(wf, cf, wg, cg, moments, segments,
                        lr, lam_cycle, lam_dist, step_fn=None):
    """Apply scheduled segments of steps; returns new params + bad step.

    segments: iterable of (pair_index, n_steps). bad_step is the global
    0-based step index of the first non-finite gradient, or -1.
    """
    if step_fn is None:
        step_fn = centered_affine_steps
    wf = np.array(wf, dtype=np.float64)
    cf = np.array(cf, dtype=np.float64)
    wg = np.array(wg, dtype=np.float64)
    cg = np.array(cg, dtype=np.float64)
    done = 0
    for pair_index, count in segments:
        mx, my, cx, cy = moments[pair_index]
        cfc = cf + wf @ mx - my
        cgc = cg + wg @ my - mx
        bad = step_fn(int(count), lr, lam_cycle, lam_dist,
                      wf, cfc, wg, cgc, cx, cy)
        cf = my + cfc - wf @ mx
        cg = mx + cgc - wg @ my
        if bad >= 0:
            return wf, cf, wg, cg, done + bad
        done += count
    return wf, cf, wg, cg, -1


# ---------------------------------------------------------------------------
# one-hidden-layer residual MLP (sample space)
# ---------------------------------------------------------------------------

def mlp_apply(params, X):
    """out = X + tanh(X @ W1.T + b1) @ W2.T + b2; returns (out, cache)."""
    w1, b1, w2, b2 = params
    T = np.tanh(X @ w1.T + b1)
    return X + T @ w2.T + b2, (X, T)


def _mlp_backprop(params, cache, g_out):
    """Gradients of a cached mlp_apply; returns ((gw1,gb1,gw2,gb2), gX)."""
    w1, b1, w2, b2 = params
    X, T = cache
    gw2 = g_out.T @ T
    gb2 = g_out.sum(0)
    gH = (g_out @ w2) * (1.0 - T * T)
    gw1 = gH.T @ X
    gb1 = gH.sum(0)
    return (gw1, gb1, gw2, gb2), g_out + gH @ w1


def _dist_value_grad(P, target_mean, target_cov, lam_dist):
    n = P.shape[0]
    mp = P.mean(0)
    Pc = P - mp
    dc = Pc.T @ Pc / n - target_cov
    dm = mp - target_mean
    value = lam_dist * float(dm @ dm + (dc * dc).sum())
    grad = lam_dist * ((2.0 / n) * dm[None, :] + (4.0 / n) * (Pc @ dc))
    return value, grad


def mlp_objective(fp, gp, X, Y, lam_cycle, lam_dist) -> float:
    n, d = X.shape
    m = Y.shape[0]
    mx, my, cx, cy = pair_moments(X, Y)
    P, _ = mlp_apply(fp, X)
    Q, _ = mlp_apply(gp, Y)
    vf, _ = _dist_value_grad(P, my, cy, lam_dist)
    vb, _ = _dist_value_grad(Q, mx, cx, lam_dist)
    r1 = mlp_apply(gp, P)[0] - X
    r2 = mlp_apply(fp, Q)[0] - Y
    cyc = float((r1 * r1).sum() / (n * d) + (r2 * r2).sum() / (m * d))
    return vf + vb + lam_cycle * cyc


def mlp_gradients(fp, gp, X, Y, lam_cycle, lam_dist):
    """Gradients of mlp_objective for both parameter sets."""
    n, d = X.shape
    m = Y.shape[0]
    mx, my, cx, cy = pair_moments(X, Y)
    P, cache_fx = mlp_apply(fp, X)
    Q, cache_gy = mlp_apply(gp, Y)
    Z1, cache_gp = mlp_apply(gp, P)
    Z2, cache_fq = mlp_apply(fp, Q)
    _, gP = _dist_value_grad(P, my, cy, lam_dist)
    _, gQ = _dist_value_grad(Q, mx, cx, lam_dist)
    gg_cyc, gP_cyc = _mlp_backprop(gp, cache_gp, (2.0 * lam_cycle / (n * d)) * (Z1 - X))
    gf_cyc, gQ_cyc = _mlp_backprop(fp, cache_fq, (2.0 * lam_cycle / (m * d)) * (Z2 - Y))
    gf_x, _ = _mlp_backprop(fp, cache_fx, gP + gP_cyc)
    gg_y, _ = _mlp_backprop(gp, cache_gy, gQ + gQ_cyc)
    grad_f = tuple(a + b for a, b in zip(gf_x, gf_cyc))
    grad_g = tuple(a + b for a, b in zip(gg_y, gg_cyc))
    return grad_f, grad_g


def run_mlp_schedule(fp, gp, pairs, segments, lr, lam_cycle, lam_dist):
    """Plain gradient descent over scheduled segments of sample pairs."""
    fp = tuple(np.array(a, dtype=np.float64) for a in fp)
    gp = tuple(np.array(a, dtype=np.float64) for a in gp)
    done = 0
    for pair_index, count in segments:
        X, Y = pairs[pair_index]
        for s in range(int(count)):
            grad_f, grad_g = mlp_gradients(fp, gp, X, Y, lam_cycle, lam_dist)
            finite = all(np.isfinite(g.sum()) for g in grad_f + grad_g)
            if not finite:
                return fp, gp, done + s
            fp = tuple(a - lr * g for a, g in zip(fp, grad_f))
            gp = tuple(a - lr * g for a, g in zip(gp, grad_g))
        done += count
    return fp, gp, -1
