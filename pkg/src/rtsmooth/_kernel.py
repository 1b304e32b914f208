"""Compiled log posterior and gradient used by the sampler.

The public numpy functions in :mod:`rtsmooth.priors` and
:mod:`rtsmooth.renewal` define the same density term by term; the test
suite checks this kernel against them.
"""
import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)

KIND_CODES = {"rw1": 0, "ou": 1, "rw2": 2, "ibm": 3, "hsgp": 4}
FAMILY_CODES = {"normal": 0, "lognormal": 1, "truncnormal": 2, "exponential": 3, "gamma": 4}

# rows of the offsets vector
PATH, GPRIME, SEED, RHO, KAPPA, NU, LAM, SCALE, THETA, ELL = range(10)


@njit(cache=True)
def digamma(x):
    r = 0.0
    while x < 10.0:
        r -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    t = f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132)))))
    return r + math.log(x) - 0.5 / x - t


@njit(cache=True)
def _scalar_prior(row, v):
    fam = int(row[0])
    if fam == 0:
        r = (v - row[1]) / row[2]
        return -0.5 * LOG_2PI - math.log(row[2]) - 0.5 * r * r, -r / row[2]
    if v <= 0.0:
        return -np.inf, 0.0
    if fam == 1:
        lx = math.log(v)
        r = (lx - row[1]) / row[2]
        return -lx - 0.5 * LOG_2PI - math.log(row[2]) - 0.5 * r * r, (-1.0 - r / row[2]) / v
    if fam == 2:
        if v <= row[3]:
            return -np.inf, 0.0
        r = (v - row[1]) / row[2]
        return -0.5 * LOG_2PI - math.log(row[2]) - 0.5 * r * r - row[4], -r / row[2]
    if fam == 3:
        return math.log(row[1]) - row[1] * v, -row[1]
    shape, rate = row[1], row[2]
    return (shape * math.log(rate) - row[4] + (shape - 1.0) * math.log(v) - rate * v,
            (shape - 1.0) / v - rate)


@njit(cache=True)
def _ibm_pair(e1, e2, h):
    h2 = h * h
    h3 = h2 * h
    quad = 4.0 * e1 * e1 / h - 12.0 * e1 * e2 / h2 + 12.0 * e2 * e2 / h3
    value = -LOG_2PI - 0.5 * (4.0 * math.log(h) - math.log(12.0)) - 0.5 * quad
    de1 = -(4.0 * e1 / h - 6.0 * e2 / h2)
    de2 = -(-6.0 * e1 / h2 + 12.0 * e2 / h3)
    dq = -4.0 * e1 * e1 / h2 + 24.0 * e1 * e2 / h3 - 36.0 * e2 * e2 / (h2 * h2)
    return value, de1, de2, -2.0 / h - 0.5 * dq


@njit(cache=True)
def log_posterior_kernel(x, grad, want_grad, kind, T, n, counts, has_obs,
                         gpmf, dpmf, off, ptab, init, Phi, eigs, obs_const):
    """Fill ``grad`` (if requested) and return the log posterior at ``x``."""
    N = n + 1 + T
    ns = n + 1
    if want_grad:
        for i in range(x.size):
            grad[i] = 0.0
    for i in range(x.size):
        if not math.isfinite(x[i]):
            return -np.inf
    seed0 = off[SEED]
    I = np.empty(N)
    for i in range(N):
        I[i] = math.exp(x[seed0 + i])
        if not I[i] > 0.0 or not math.isfinite(I[i]):
            return -np.inf
    rho = math.exp(x[off[RHO]])
    kappa = math.exp(x[off[KAPPA]])
    nu = math.exp(x[off[NU]])
    lam = math.exp(x[off[LAM]])
    if rho >= 1.0 or not (kappa > 0.0 and nu > 0.0 and lam > 0.0):
        return -np.inf
    if not (math.isfinite(kappa) and math.isfinite(nu) and math.isfinite(lam)):
        return -np.inf
    scale = math.exp(x[off[SCALE]])
    if not (scale > 0.0 and math.isfinite(scale)):
        return -np.inf

    Gamma = np.empty(T)
    p0 = off[PATH]
    M = Phi.shape[1]
    s = np.empty(M)
    dls = np.empty(M)
    if kind == 4:
        ell = math.exp(x[off[ELL]])
        if not (ell > 0.0 and math.isfinite(ell)):
            return -np.inf
        c = 4.0 * 3.0 ** 1.5 / ell ** 3
        for j in range(M):
            w2 = eigs[j] * eigs[j]
            denom = 3.0 / (ell * ell) + w2
            s[j] = scale * math.sqrt(c) / denom
            dls[j] = -1.5 + (6.0 / (ell * ell)) / denom
        for t in range(T):
            acc = 0.0
            for j in range(M):
                acc += Phi[t, j] * s[j] * x[p0 + j]
            Gamma[t] = acc
    else:
        for t in range(T):
            Gamma[t] = x[p0 + t]

    gI = np.zeros(N)
    gGamma = np.zeros(T)
    lp = 0.0
    g_rho = 0.0
    g_kappa = 0.0
    g_nu = 0.0
    g_lam = 0.0
    Ld = dpmf.size - 1
    Lg = gpmf.size - 1

    if has_obs:
        lp -= obs_const  # sum of lgamma(y + 1), fixed by the data
        lgk = math.lgamma(kappa)
        dgk = digamma(kappa) if want_grad else 0.0
        for t in range(T):
            pos = ns + t
            D = 0.0
            for k in range(Ld + 1):
                if pos - k >= 0:
                    D += dpmf[k] * I[pos - k]
            mu = rho * D
            if not (mu > 0.0 and math.isfinite(mu)):
                return -np.inf
            y = counts[t]
            km = kappa + mu
            lp += (math.lgamma(y + kappa) - lgk
                   - kappa * math.log1p(mu / kappa) + y * (math.log(mu) - math.log(km)))
            if want_grad:
                dmu = y / mu - (y + kappa) / km
                g_rho += dmu * D
                g_kappa += digamma(y + kappa) - dgk - math.log1p(mu / kappa) + (mu - y) / km
                for k in range(Ld + 1):
                    if pos - k >= 0:
                        gI[pos - k] += dmu * rho * dpmf[k]

    log_nu = math.log(nu)
    log_lam = math.log(lam)
    for i in range(ns):
        lp += -log_lam - I[i] / lam
        if want_grad:
            gI[i] += -1.0 / lam
            g_lam += -1.0 / lam + I[i] / (lam * lam)
    for t in range(T):
        pos = ns + t
        load = 0.0
        for k in range(1, Lg + 1):
            if pos - k >= 0:
                load += gpmf[k] * I[pos - k]
        R = math.exp(Gamma[t])
        a = R * load * nu
        if not (a > 0.0 and math.isfinite(a)):
            return -np.inf
        u = x[seed0 + pos]
        lp += a * log_nu - math.lgamma(a) + (a - 1.0) * u - nu * I[pos]
        if want_grad:
            da = log_nu - digamma(a) + u
            gGamma[t] += da * a
            for k in range(1, Lg + 1):
                if pos - k >= 0:
                    gI[pos - k] += da * R * nu * gpmf[k]
            gI[pos] += (a - 1.0) / I[pos] - nu
            g_nu += da * a / nu + a / nu - I[pos]

    # log-R prior
    mu1, sigma1, mu1p = init[0], init[1], init[2]
    g_scale = 0.0
    g_theta = 0.0
    if kind == 4:
        for j in range(M):
            z = x[p0 + j]
            lp += -0.5 * LOG_2PI - 0.5 * z * z
        if want_grad:
            g_ell = 0.0
            for j in range(M):
                proj = 0.0
                for t in range(T):
                    proj += Phi[t, j] * gGamma[t]
                z = x[p0 + j]
                grad[p0 + j] += s[j] * proj - z
                g_scale += proj * s[j] * z
                g_ell += proj * s[j] * z * dls[j]
            grad[off[ELL]] += g_ell
    elif kind == 3:
        gp0 = off[GPRIME]
        v0, a0, b0, _ = _ibm_pair(x[gp0] - mu1p, Gamma[0] - mu1, sigma1 * sigma1)
        lp += v0
        h = scale * scale
        dh_total = 0.0
        if want_grad:
            gGamma[0] += b0
            grad[gp0] += a0
        for t in range(1, T):
            gprev = x[gp0 + t - 1]
            e1 = x[gp0 + t] - gprev
            e2 = Gamma[t] - Gamma[t - 1] - h * gprev
            v, de1, de2, dh = _ibm_pair(e1, e2, h)
            lp += v
            if want_grad:
                gGamma[t] += de2
                gGamma[t - 1] -= de2
                grad[gp0 + t] += de1
                grad[gp0 + t - 1] -= de1 + h * de2
                dh_total += dh - de2 * gprev
        g_scale = dh_total * 2.0 * h
    else:
        r1 = Gamma[0] - mu1
        lp += -0.5 * LOG_2PI - math.log(sigma1) - 0.5 * r1 * r1 / (sigma1 * sigma1)
        gGamma[0] += -r1 / (sigma1 * sigma1)
        if kind == 0:
            v = scale * scale / (T - 1)
            rr = 0.0
            for t in range(1, T):
                r = Gamma[t] - Gamma[t - 1]
                rr += r * r
                gGamma[t] -= r / v
                gGamma[t - 1] += r / v
            lp += -0.5 * (T - 1) * (LOG_2PI + math.log(v)) - 0.5 * rr / v
            g_scale = -(T - 1) + rr / v
        elif kind == 1:
            theta = math.exp(x[off[THETA]])
            if not (theta > 0.0 and math.isfinite(theta)):
                return -np.inf
            decay = math.exp(-theta)
            if theta < 1e-5:
                f = 1.0 - theta + 2.0 * theta * theta / 3.0
                df = -1.0 + 4.0 * theta / 3.0
            else:
                f = -math.expm1(-2.0 * theta) / (2.0 * theta)
                df = (math.exp(-2.0 * theta) - f) / theta
            v = scale * scale * f
            rr = 0.0
            dr_dtheta = 0.0
            for t in range(1, T):
                r = Gamma[t] - decay * Gamma[t - 1]
                rr += r * r
                gGamma[t] -= r / v
                gGamma[t - 1] += decay * r / v
                dr_dtheta -= (r / v) * decay * Gamma[t - 1]
            lp += -0.5 * (T - 1) * (LOG_2PI + math.log(v)) - 0.5 * rr / v
            dv = -0.5 * (T - 1) / v + 0.5 * rr / (v * v)
            g_scale = dv * 2.0 * v
            g_theta = (dr_dtheta + dv * scale * scale * df) * theta
        else:
            v = scale * scale
            r = Gamma[1] - Gamma[0]
            rr = r * r
            gGamma[1] -= r / v
            gGamma[0] += r / v
            for t in range(2, T):
                r = Gamma[t] - 2.0 * Gamma[t - 1] + Gamma[t - 2]
                rr += r * r
                gGamma[t] -= r / v
                gGamma[t - 1] += 2.0 * r / v
                gGamma[t - 2] -= r / v
            lp += -0.5 * (T - 1) * (LOG_2PI + math.log(v)) - 0.5 * rr / v
            g_scale = -(T - 1) + rr / v
    if want_grad and kind != 4:
        for t in range(T):
            grad[p0 + t] += gGamma[t]

    # hyperpriors and log-Jacobian of the log transforms
    for i in range(N):
        lp += x[seed0 + i]
    values = (rho, kappa, nu, lam, scale)
    slots = (off[RHO], off[KAPPA], off[NU], off[LAM], off[SCALE])
    chain = (g_rho * rho, g_kappa * kappa, g_nu * nu, g_lam * lam, g_scale)
    for k in range(5):
        v = values[k]
        plp, dplp = _scalar_prior(ptab[k], v)
        lp += plp + x[slots[k]]
        if want_grad:
            grad[slots[k]] += chain[k] + dplp * v + 1.0
    if kind == 1:
        theta = math.exp(x[off[THETA]])
        plp, dplp = _scalar_prior(ptab[5], theta)
        lp += plp + x[off[THETA]]
        if want_grad:
            grad[off[THETA]] += g_theta + dplp * theta + 1.0
    if kind == 4:
        ell = math.exp(x[off[ELL]])
        plp, dplp = _scalar_prior(ptab[6], ell)
        lp += plp + x[off[ELL]]
        if want_grad:
            grad[off[ELL]] += dplp * ell + 1.0
    if not math.isfinite(lp):
        return -np.inf
    if want_grad:
        for i in range(N):
            grad[seed0 + i] += gI[i] * I[i] + 1.0
    return lp
