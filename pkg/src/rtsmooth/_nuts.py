"""
One multinomial NUTS transition, built iteratively.

The same source is compiled with numba (for targets that expose a jitted
density) and used as plain Python (for arbitrary callables). Densities have
the signature ``fn(x, grad_out, want_grad, *args) -> logp``. All randomness
is passed in as pre-drawn arrays so neither mode touches global RNG state.
"""
import math

import numba
import numpy as np


def _build(jit):
    dec = numba.njit if jit else (lambda f: f)

    @dec
    def leapfrog(x, p, grad, eps, inv_metric, fn, args):
        p_half = p + 0.5 * eps * grad
        x_new = x + eps * (inv_metric * p_half)
        g_new = np.empty_like(x)
        lp = fn(x_new, g_new, True, *args)
        if not np.isfinite(lp) or not np.all(np.isfinite(g_new)):
            return x_new, p_half, g_new, -np.inf
        return x_new, p_half + 0.5 * eps * g_new, g_new, lp

    @dec
    def hamiltonian(lp, p, inv_metric):
        if not np.isfinite(lp):
            return np.inf
        return -lp + 0.5 * np.sum(inv_metric * p * p)

    @dec
    def no_uturn(sharp_a, sharp_b, rho):
        return np.dot(sharp_a, rho) > 0.0 and np.dot(sharp_b, rho) > 0.0

    @dec
    def transition(x0, lp0, g0, p0, uniforms, eps, inv_metric, max_depth, max_err, fn, args):
        """Returns (x, logp, grad, depth, n_leapfrog, accept_stat, divergent, energy_error)."""
        D = x0.shape[0]
        h0 = hamiltonian(lp0, p0, inv_metric)
        u = 0  # next unused uniform

        xl, pl, gl, lpl = x0, p0, g0, lp0
        xr, pr, gr, lpr = x0, p0, g0, lp0
        sharp_l = inv_metric * p0
        sharp_r = sharp_l
        rho = p0.copy()
        xs, lps, gs, hs = x0, lp0, g0, h0
        log_w = 0.0
        n_leap = 0
        sum_metro = 0.0
        divergent = False
        depth = 0

        # per-level records of the first leaf of the latest block of size 2**k
        st_sharp = np.zeros((max_depth + 1, D))
        st_s_before = np.zeros((max_depth + 1, D))
        st_s_after = np.zeros((max_depth + 1, D))
        st_prev_sharp = np.zeros((max_depth + 1, D))
        st_prev_s_before = np.zeros((max_depth + 1, D))

        while depth < max_depth:
            forward = uniforms[u] > 0.5
            u += 1
            if forward:
                x, p, g, lp = xr, pr, gr, lpr
                e = eps
            else:
                x, p, g, lp = xl, pl, gl, lpl
                e = -eps
            n_leaves = 1 << depth
            s = np.zeros(D)
            prev_sharp = np.zeros(D)
            prev_s_before = np.zeros(D)
            first_p = p0
            first_sharp = sharp_l
            sub_lw = -np.inf
            px, plp, pg, ph = x, lp, g, np.inf
            sharp = sharp_l
            valid = True
            for i in range(n_leaves):
                x, p, g, lp = leapfrog(x, p, g, e, inv_metric, fn, args)
                n_leap += 1
                h = hamiltonian(lp, p, inv_metric)
                if np.isnan(h):
                    h = np.inf
                delta = h - h0
                if delta > max_err:
                    divergent = True
                    valid = False
                    break
                sum_metro += 1.0 if delta <= 0.0 else math.exp(-delta)
                lw = -delta
                new_lw = np.logaddexp(sub_lw, lw)
                if uniforms[u] < math.exp(lw - new_lw):
                    px, plp, pg, ph = x, lp, g, h
                u += 1
                sub_lw = new_lw

                sharp = inv_metric * p
                s_before = s
                s = s + p
                if i == 0:
                    first_p = p
                    first_sharp = sharp
                for k in range(depth + 1):
                    if i % (1 << k) != 0:
                        break
                    st_sharp[k] = sharp
                    st_s_before[k] = s_before
                    st_s_after[k] = s
                    st_prev_sharp[k] = prev_sharp
                    st_prev_s_before[k] = prev_s_before
                k = 1
                while k <= depth and (i + 1) % (1 << k) == 0:
                    # block [a, i] split at r: a recorded on level k, r on level k - 1
                    ok = (no_uturn(st_sharp[k], sharp, s - st_s_before[k])
                          and no_uturn(st_sharp[k], st_sharp[k - 1], st_s_after[k - 1] - st_s_before[k])
                          and no_uturn(st_prev_sharp[k - 1], sharp, s - st_prev_s_before[k - 1]))
                    if not ok:
                        valid = False
                        break
                    k += 1
                if not valid:
                    break
                prev_sharp = sharp
                prev_s_before = s_before
            depth += 1
            if not valid:
                break

            if sub_lw > log_w or uniforms[u] < math.exp(sub_lw - log_w):
                xs, lps, gs, hs = px, plp, pg, ph
            u += 1
            log_w = np.logaddexp(log_w, sub_lw)
            if forward:
                ok = (no_uturn(sharp_l, sharp, rho + s)
                      and no_uturn(sharp_l, first_sharp, rho + first_p)
                      and no_uturn(sharp_r, sharp, s + pr))
                xr, pr, gr, lpr = x, p, g, lp
                sharp_r = sharp
            else:
                # the new subtree precedes the old trajectory in time
                ok = (no_uturn(sharp, sharp_r, rho + s)
                      and no_uturn(sharp, sharp_l, s + pl)
                      and no_uturn(first_sharp, sharp_r, rho + first_p))
                xl, pl, gl, lpl = x, p, g, lp
                sharp_l = sharp
            rho = rho + s
            if not ok:
                break

        accept = sum_metro / n_leap if n_leap > 0 else 0.0
        return xs, lps, gs, depth, n_leap, accept, divergent, hs - h0

    def one_step(x, lp, g, p, eps, inv_metric, fn, args):
        """Single leapfrog step; returns the Hamiltonian change ``h0 - h``."""
        h0 = hamiltonian(lp, p, inv_metric)
        _, p1, _, lp1 = leapfrog(x, p, g, eps, inv_metric, fn, args)
        h1 = hamiltonian(lp1, p1, inv_metric)
        d = h0 - h1
        return -np.inf if np.isnan(d) else d

    return transition, (dec(one_step) if jit else one_step)


transition_py, one_step_py = _build(False)
_compiled = None


def compiled():
    """Numba versions of ``(transition, one_step)``, compiled on first use."""
    global _compiled
    if _compiled is None:
        _compiled = _build(True)
    return _compiled


def uniforms_needed(max_depth):
    return (1 << max_depth) + 2 * max_depth + 2
