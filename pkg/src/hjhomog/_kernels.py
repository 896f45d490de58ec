"""Jitted Lax-Friedrichs update kernels for the mechanical and homogeneous
Hamiltonian kinds in 1/2/3 space dimensions.

Each kernel performs one forward-Euler step of

    u' = u - dt * [ H(y, shift + Dmid u) - sum_i sigma_i (D+_i u - D-_i u)/2
                    + lam * u ]

with Dmid the centered difference, on either a periodic torus or a box with
constant extension (clamped indices).  kind 0: H = |a|^2/2 + coef(y);
kind 1: H = |a|^kk * coef(y) (coef = 1/a(y)).  Returns (max one-sided
gradient, max |shift + Dmid u| component) for CFL certification.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def lf_step_1d(u, coef, out, kind, kk, s0, g0, h, dt, lam, periodic):
    n = u.shape[0]
    maxgrad = 0.0
    maxarg = 0.0
    for i in range(n):
        ip = i + 1
        im = i - 1
        if periodic:
            if ip == n:
                ip = 0
            if im < 0:
                im = n - 1
        else:
            if ip == n:
                ip = n - 1
            if im < 0:
                im = 0
        dp = (u[ip] - u[i]) / h
        dm = (u[i] - u[im]) / h
        a0 = 0.5 * (dp + dm) + s0
        if kind == 0:
            Hv = 0.5 * a0 * a0 + coef[i]
        else:
            r = abs(a0)
            Hv = r * coef[i] if kk == 1.0 else r**kk * coef[i]
        diss = 0.5 * g0 * (dp - dm)
        out[i] = u[i] - dt * (Hv - diss + lam * u[i])
        if abs(dp) > maxgrad:
            maxgrad = abs(dp)
        if abs(a0) > maxarg:
            maxarg = abs(a0)
    return maxgrad, maxarg


@njit(cache=True, nogil=True)
def lf_step_2d(u, coef, out, kind, kk, s0, s1, g0, g1, h, dt, lam, periodic):
    n0, n1 = u.shape
    maxgrad = 0.0
    maxarg = 0.0
    for i in range(n0):
        ip = i + 1
        im = i - 1
        if periodic:
            if ip == n0:
                ip = 0
            if im < 0:
                im = n0 - 1
        else:
            if ip == n0:
                ip = n0 - 1
            if im < 0:
                im = 0
        for j in range(n1):
            jp = j + 1
            jm = j - 1
            if periodic:
                if jp == n1:
                    jp = 0
                if jm < 0:
                    jm = n1 - 1
            else:
                if jp == n1:
                    jp = n1 - 1
                if jm < 0:
                    jm = 0
            dp0 = (u[ip, j] - u[i, j]) / h
            dm0 = (u[i, j] - u[im, j]) / h
            dp1 = (u[i, jp] - u[i, j]) / h
            dm1 = (u[i, j] - u[i, jm]) / h
            a0 = 0.5 * (dp0 + dm0) + s0
            a1 = 0.5 * (dp1 + dm1) + s1
            if kind == 0:
                Hv = 0.5 * (a0 * a0 + a1 * a1) + coef[i, j]
            else:
                r = np.sqrt(a0 * a0 + a1 * a1)
                Hv = r * coef[i, j] if kk == 1.0 else r**kk * coef[i, j]
            diss = 0.5 * (g0 * (dp0 - dm0) + g1 * (dp1 - dm1))
            out[i, j] = u[i, j] - dt * (Hv - diss + lam * u[i, j])
            m = max(abs(dp0), abs(dp1))
            if m > maxgrad:
                maxgrad = m
            m = max(abs(a0), abs(a1))
            if m > maxarg:
                maxarg = m
    return maxgrad, maxarg


@njit(cache=True, nogil=True)
def lf_step_3d(u, coef, out, kind, kk, s0, s1, s2, g0, g1, g2, h, dt, lam, periodic):
    n0, n1, n2 = u.shape
    maxgrad = 0.0
    maxarg = 0.0
    for i in range(n0):
        ip = i + 1
        im = i - 1
        if periodic:
            if ip == n0:
                ip = 0
            if im < 0:
                im = n0 - 1
        else:
            if ip == n0:
                ip = n0 - 1
            if im < 0:
                im = 0
        for j in range(n1):
            jp = j + 1
            jm = j - 1
            if periodic:
                if jp == n1:
                    jp = 0
                if jm < 0:
                    jm = n1 - 1
            else:
                if jp == n1:
                    jp = n1 - 1
                if jm < 0:
                    jm = 0
            for k in range(n2):
                kp = k + 1
                km = k - 1
                if periodic:
                    if kp == n2:
                        kp = 0
                    if km < 0:
                        km = n2 - 1
                else:
                    if kp == n2:
                        kp = n2 - 1
                    if km < 0:
                        km = 0
                dp0 = (u[ip, j, k] - u[i, j, k]) / h
                dm0 = (u[i, j, k] - u[im, j, k]) / h
                dp1 = (u[i, jp, k] - u[i, j, k]) / h
                dm1 = (u[i, j, k] - u[i, jm, k]) / h
                dp2 = (u[i, j, kp] - u[i, j, k]) / h
                dm2 = (u[i, j, k] - u[i, j, km]) / h
                a0 = 0.5 * (dp0 + dm0) + s0
                a1 = 0.5 * (dp1 + dm1) + s1
                a2 = 0.5 * (dp2 + dm2) + s2
                if kind == 0:
                    Hv = 0.5 * (a0 * a0 + a1 * a1 + a2 * a2) + coef[i, j, k]
                else:
                    r = np.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
                    Hv = r * coef[i, j, k] if kk == 1.0 else r**kk * coef[i, j, k]
                diss = 0.5 * (g0 * (dp0 - dm0) + g1 * (dp1 - dm1) + g2 * (dp2 - dm2))
                out[i, j, k] = u[i, j, k] - dt * (Hv - diss + lam * u[i, j, k])
                m = max(abs(dp0), abs(dp1), abs(dp2))
                if m > maxgrad:
                    maxgrad = m
                m = max(abs(a0), abs(a1), abs(a2))
                if m > maxarg:
                    maxarg = m
    return maxgrad, maxarg


@njit(cache=True, nogil=True)
def sweep_eikonal_3d(U, rhs, frozen, h, order):
    """One Gauss-Seidel pass of the upwind eikonal update
    max-over-axes scheme for |DU| = rhs on the periodic unit cube.

    order selects one of the 8 sweep direction combinations.  Returns the
    largest update applied.
    """
    n0, n1, n2 = U.shape
    d0 = 1 if order & 1 else -1
    d1 = 1 if order & 2 else -1
    d2 = 1 if order & 4 else -1
    delta = 0.0
    i0 = 0 if d0 == 1 else n0 - 1
    for ii in range(n0):
        i = i0 + d0 * ii
        for jj in range(n1):
            j = (0 if d1 == 1 else n1 - 1) + d1 * jj
            for kk in range(n2):
                k = (0 if d2 == 1 else n2 - 1) + d2 * kk
                if frozen[i, j, k]:
                    continue
                ip = i + 1 if i + 1 < n0 else 0
                im = i - 1 if i - 1 >= 0 else n0 - 1
                jp = j + 1 if j + 1 < n1 else 0
                jm = j - 1 if j - 1 >= 0 else n1 - 1
                kp = k + 1 if k + 1 < n2 else 0
                km = k - 1 if k - 1 >= 0 else n2 - 1
                a = min(U[ip, j, k], U[im, j, k])
                b = min(U[i, jp, k], U[i, jm, k])
                c = min(U[i, j, kp], U[i, j, km])
                # sort a <= b <= c
                if a > b:
                    a, b = b, a
                if b > c:
                    b, c = c, b
                if a > b:
                    a, b = b, a
                f = rhs[i, j, k] * h
                x = a + f
                if x > b:
                    # two-term quadratic (x-a)^2 + (x-b)^2 = f^2
                    s = a + b
                    disc = 2.0 * f * f - (a - b) * (a - b)
                    if disc > 0.0:
                        x = 0.5 * (s + np.sqrt(disc))
                    else:
                        x = a + f
                    if x > c:
                        s = a + b + c
                        disc = s * s - 3.0 * (a * a + b * b + c * c - f * f)
                        if disc > 0.0:
                            x = (s + np.sqrt(disc)) / 3.0
                if x < U[i, j, k]:
                    if U[i, j, k] - x > delta:
                        delta = U[i, j, k] - x
                    U[i, j, k] = x
    return delta
