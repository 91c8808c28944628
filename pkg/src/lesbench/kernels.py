"""Numba kernels for all stencil hot loops.

Kernels take 1-D flat views of the Fortran-ordered field arrays plus the
stride of the axis they operate along (1, nx or nx*ny), so a single kernel
body serves all three directions.  ``bounds`` is the (ilo, ihi, jlo, jhi,
klo, khi) index box to write, in padded-array coordinates.

Everything on the central-difference / multigrid / projection path is
compiled with strict IEEE semantics, which keeps one time step bit-identical
across worker counts.  The WENO reconstruction kernels allow fastmath: they
are roughly twice as fast and their outputs feed paths with no cross-
topology bit-identity contract (results remain deterministic for any fixed
decomposition).
"""

from __future__ import annotations

import numba as nb
import numpy as np

njit_strict = nb.njit(cache=True, nogil=True, fastmath=False)
njit_weno = nb.njit(cache=True, nogil=True, fastmath=True)

# WENO constants shared with the scalar reference implementations
WENO_C1, WENO_C2, WENO_C3 = 0.1, 0.3, 0.6
WENO_EPS = 1.0e-6
K13_12 = 13.0 / 12.0


def interior_bounds(shape, g, axis=None, lo_extra=0, hi_extra=0):
    """Index box of owned cells, optionally extended along one axis."""
    b = []
    for a in range(3):
        lo, hi = g, shape[a] - g
        if a == axis:
            lo -= lo_extra
            hi += hi_extra
        b.extend((lo, hi))
    return tuple(b)


@njit_strict
def k_interp2(f, out, s, base, nx, nxny, b):
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] = 0.5 * (f[n + base] + f[n + base + s])


@njit_strict
def k_interp4(f, out, s, base, nx, nxny, b):
    # classical 4th-order midpoint rule between samples base and base+s
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] = (9.0 * (f[n + base] + f[n + base + s])
                          - (f[n + base - s] + f[n + base + 2 * s])) / 16.0


@njit_strict
def k_deriv_central(f, out, s, a2, a1, inv_den, nx, nxny, b):
    # out = (a2*(f[+2]-f[-2]) + a1*(f[+1]-f[-1])) * inv_den
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] = (a2 * (f[n + 2 * s] - f[n - 2 * s])
                          + a1 * (f[n + s] - f[n - s])) * inv_den


@njit_strict
def k_lap4_acc(f, out, s, inv12d2, nx, nxny, b):
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] += (-f[n + 2 * s] + 16.0 * f[n + s] - 30.0 * f[n]
                           + 16.0 * f[n - s] - f[n - 2 * s]) * inv12d2


@njit_weno
def k_weno_faces_both(f, fl, fr, s, nx, nxny, b):
    """Left- and right-biased 5th-order face values at sample n + 1/2.

    ``fl[n]`` blends the three candidates drawn from samples n-2..n+2
    (upwind for positive advection), ``fr[n]`` is its exact mirror from
    samples n-1..n+3.  Candidates are ordered (upwind, downwind, central)
    so the optimal weights (1/10, 3/10, 6/10) recover the genuine
    fifth-order combination; each candidate is scaled by the smoothness of
    its own stencil.
    """
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                fm2 = f[n - 2 * s]
                fm1 = f[n - s]
                f0 = f[n]
                fp1 = f[n + s]
                fp2 = f[n + 2 * s]
                fp3 = f[n + 3 * s]

                b1 = K13_12 * (fm2 - 2.0 * fm1 + f0) ** 2 \
                    + 0.25 * (fm2 - 4.0 * fm1 + 3.0 * f0) ** 2
                b2 = K13_12 * (f0 - 2.0 * fp1 + fp2) ** 2 \
                    + 0.25 * (3.0 * f0 - 4.0 * fp1 + fp2) ** 2
                b3 = K13_12 * (fm1 - 2.0 * f0 + fp1) ** 2 \
                    + 0.25 * (fm1 - fp1) ** 2
                a1 = WENO_C1 / (b1 + WENO_EPS) ** 2
                a2 = WENO_C2 / (b2 + WENO_EPS) ** 2
                a3 = WENO_C3 / (b3 + WENO_EPS) ** 2
                inv = 1.0 / (a1 + a2 + a3)
                fl[n] = inv * (a1 * (2.0 * fm2 - 7.0 * fm1 + 11.0 * f0)
                               + a2 * (2.0 * f0 + 5.0 * fp1 - fp2)
                               + a3 * (-fm1 + 5.0 * f0 + 2.0 * fp1)) / 6.0

                b1 = K13_12 * (fp3 - 2.0 * fp2 + fp1) ** 2 \
                    + 0.25 * (fp3 - 4.0 * fp2 + 3.0 * fp1) ** 2
                b2 = K13_12 * (fp1 - 2.0 * f0 + fm1) ** 2 \
                    + 0.25 * (3.0 * fp1 - 4.0 * f0 + fm1) ** 2
                b3 = K13_12 * (fp2 - 2.0 * fp1 + f0) ** 2 \
                    + 0.25 * (fp2 - f0) ** 2
                a1 = WENO_C1 / (b1 + WENO_EPS) ** 2
                a2 = WENO_C2 / (b2 + WENO_EPS) ** 2
                a3 = WENO_C3 / (b3 + WENO_EPS) ** 2
                inv = 1.0 / (a1 + a2 + a3)
                fr[n] = inv * (a1 * (2.0 * fp3 - 7.0 * fp2 + 11.0 * fp1)
                               + a2 * (2.0 * fp1 + 5.0 * f0 - fm1)
                               + a3 * (-fp2 + 5.0 * fp1 + 2.0 * f0)) / 6.0


@njit_weno
def k_conv_acc_weno(fl, fr, adv, out, s, invd, nx, nxny, b):
    # out -= adv * d(field)/dx, face difference biased by the advection sign
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                a = adv[n]
                if a >= 0.0:
                    d = (fl[n] - fl[n - s]) * invd
                else:
                    d = (fr[n] - fr[n - s]) * invd
                out[n] -= a * d


@njit_weno
def k_oneside_derivs(fl, fr, dm, dp, s, invd, nx, nxny, b):
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                dm[n] = (fl[n] - fl[n - s]) * invd
                dp[n] = (fr[n] - fr[n - s]) * invd


@njit_weno
def k_godunov_norm(dmx, dpx, dmy, dpy, dmz, dpz, dsrc, out, nx, nxny, b):
    """|grad d| with Godunov upwinding keyed to the sign of dsrc."""
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                if dsrc[n] >= 0.0:
                    ax = max(dmx[n], 0.0)
                    bx = min(dpx[n], 0.0)
                    ay = max(dmy[n], 0.0)
                    by = min(dpy[n], 0.0)
                    az = max(dmz[n], 0.0)
                    bz = min(dpz[n], 0.0)
                else:
                    ax = min(dmx[n], 0.0)
                    bx = max(dpx[n], 0.0)
                    ay = min(dmy[n], 0.0)
                    by = max(dpy[n], 0.0)
                    az = min(dmz[n], 0.0)
                    bz = max(dpz[n], 0.0)
                g2 = max(ax * ax, bx * bx) + max(ay * ay, by * by) \
                    + max(az * az, bz * bz)
                out[n] = np.sqrt(g2)


@njit_strict
def k_reinit_rhs(d, gmag, out, eps_r, nx, nxny, b):
    # out = s(d) * (1 - |grad d|), s = d / sqrt(d^2 + (|grad d| eps_r)^2)
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                g = gmag[n]
                denom = np.sqrt(d[n] * d[n] + (g * eps_r) ** 2)
                s = d[n] / denom if denom > 0.0 else 0.0
                out[n] = s * (1.0 - g)


@njit_strict
def k_band_residual(gmag, d, band, nx, nxny, b):
    """(max | |grad d|-1 | within |d|<=band, band cell count, global max)."""
    max_band = 0.0
    max_all = 0.0
    count = 0
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                r = abs(gmag[n] - 1.0)
                if r > max_all:
                    max_all = r
                if abs(d[n]) <= band:
                    count += 1
                    if r > max_band:
                        max_band = r
    return max_band, count, max_all


@njit_strict
def k_divergence(u, v, w, out, sx, sy, sz, idx, idy, idz, nx, nxny, b):
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] = (u[n] - u[n - sx]) * idx + (v[n] - v[n - sy]) * idy \
                    + (w[n] - w[n - sz]) * idz


@njit_strict
def k_rbgs_sweep(p, rhs, color, sx, sy, sz, cx, cy, cz, dinv,
                 goi, goj, gok, nx, nxny, b):
    """One red-black Gauss-Seidel colour pass of the 7-point Laplacian.

    Colouring uses global indices (local index + offset) so the update
    pattern is independent of the decomposition.
    """
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            parity0 = (b[0] + goi + j + goj + k + gok) & 1
            start = n0 if parity0 == color else n0 + 1
            for n in range(start, n0 + (b[1] - b[0]), 2):
                p[n] = dinv * (cx * (p[n - sx] + p[n + sx])
                               + cy * (p[n - sy] + p[n + sy])
                               + cz * (p[n - sz] + p[n + sz])
                               - rhs[n])


@njit_strict
def k_residual(p, rhs, r, sx, sy, sz, cx, cy, cz, nx, nxny, b):
    # r = rhs - A p, A the 7-point Laplacian
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                ap = cx * (p[n - sx] - 2.0 * p[n] + p[n + sx]) \
                    + cy * (p[n - sy] - 2.0 * p[n] + p[n + sy]) \
                    + cz * (p[n - sz] - 2.0 * p[n] + p[n + sz])
                r[n] = rhs[n] - ap


@njit_strict
def k_laplace7(p, out, sx, sy, sz, cx, cy, cz, nx, nxny, b):
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] = cx * (p[n - sx] - 2.0 * p[n] + p[n + sx]) \
                    + cy * (p[n - sy] - 2.0 * p[n] + p[n + sy]) \
                    + cz * (p[n - sz] - 2.0 * p[n] + p[n + sz])


@njit_strict
def k_restrict(fine, coarse, fnx, fnxny, cnx, cnxny, gf, gc, cb):
    # cell-centred full weighting: coarse cell = mean of its 8 fine cells
    for K in range(cb[4], cb[5]):
        for J in range(cb[2], cb[3]):
            for I in range(cb[0], cb[1]):
                nc = I + cnx * J + cnxny * K
                fi = gf + 2 * (I - gc)
                fj = gf + 2 * (J - gc)
                fk = gf + 2 * (K - gc)
                nf = fi + fnx * fj + fnxny * fk
                acc = (fine[nf] + fine[nf + 1]
                       + fine[nf + fnx] + fine[nf + fnx + 1]
                       + fine[nf + fnxny] + fine[nf + fnxny + 1]
                       + fine[nf + fnxny + fnx] + fine[nf + fnxny + fnx + 1])
                coarse[nc] = 0.125 * acc


@njit_strict
def k_prolong_add(coarse, fine, fnx, fnxny, cnx, cnxny, gf, gc, fb):
    # trilinear interpolation of the coarse correction onto fine centres
    for k in range(fb[4], fb[5]):
        rk = k - gf
        K = gc + rk // 2
        dk = 1 if rk % 2 == 1 else -1
        wk = 0.75
        for j in range(fb[2], fb[3]):
            rj = j - gf
            J = gc + rj // 2
            dj = 1 if rj % 2 == 1 else -1
            for i in range(fb[0], fb[1]):
                ri = i - gf
                I = gc + ri // 2
                di = 1 if ri % 2 == 1 else -1
                nc = I + cnx * J + cnxny * K
                c000 = coarse[nc]
                c100 = coarse[nc + di]
                c010 = coarse[nc + dj * cnx]
                c110 = coarse[nc + di + dj * cnx]
                c001 = coarse[nc + dk * cnxny]
                c101 = coarse[nc + di + dk * cnxny]
                c011 = coarse[nc + dj * cnx + dk * cnxny]
                c111 = coarse[nc + di + dj * cnx + dk * cnxny]
                val = (0.75 * (0.75 * (0.75 * c000 + 0.25 * c100)
                               + 0.25 * (0.75 * c010 + 0.25 * c110))
                       + 0.25 * (0.75 * (0.75 * c001 + 0.25 * c101)
                                 + 0.25 * (0.75 * c011 + 0.25 * c111)))
                fine[i + fnx * j + fnxny * k] += val


@njit_strict
def k_correct_face(un, p, s, dt_invd, nx, nxny, b):
    # u <- u - dt * dp/dn across the face
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                un[n] -= dt_invd * (p[n + s] - p[n])


@njit_strict
def k_correct_face_rho(un, p, inv_rho_face, s, dt_invd, nx, nxny, b):
    # u <- u - (dt / rho_face) * dp/dn across the face
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                un[n] -= dt_invd * inv_rho_face[n] * (p[n + s] - p[n])


@njit_strict
def k_apply_var_poisson(p, out, bx, by, bz, sx, sy, sz, nx, nxny, b):
    """out = div(beta grad p) with face coefficients b? already over dx^2.

    Boundary faces carry zero coefficients, so ghost values never enter.
    """
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] = bx[n] * (p[n + sx] - p[n]) \
                    - bx[n - sx] * (p[n] - p[n - sx]) \
                    + by[n] * (p[n + sy] - p[n]) \
                    - by[n - sy] * (p[n] - p[n - sy]) \
                    + bz[n] * (p[n + sz] - p[n]) \
                    - bz[n - sz] * (p[n] - p[n - sz])


@njit_strict
def k_pgrad_acc(out, p, s, invd, nx, nxny, b):
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] -= (p[n + s] - p[n]) * invd


@njit_strict
def k_pgrad_acc_rho(out, p, inv_rho_face, s, invd, nx, nxny, b):
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] -= inv_rho_face[n] * (p[n + s] - p[n]) * invd


@njit_strict
def k_face_average(c, out, s, nx, nxny, b):
    # cell-centred quantity sampled at the +1/2 face by adjacent average
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] = 0.5 * (c[n] + c[n + s])


@njit_strict
def k_wale(u, v, w, nut, sx, sy, sz, idx, idy, idz, cw2d2, nx, nxny, b):
    """WALE eddy viscosity at cell centres from CD2 velocity gradients."""
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                # same-direction gradients: exact centred difference of faces
                g00 = (u[n] - u[n - sx]) * idx
                g11 = (v[n] - v[n - sy]) * idy
                g22 = (w[n] - w[n - sz]) * idz
                # cross gradients: average to centre, then CD2
                g01 = ((u[n + sy] + u[n + sy - sx]) -
                       (u[n - sy] + u[n - sy - sx])) * (0.25 * idy)
                g02 = ((u[n + sz] + u[n + sz - sx]) -
                       (u[n - sz] + u[n - sz - sx])) * (0.25 * idz)
                g10 = ((v[n + sx] + v[n + sx - sy]) -
                       (v[n - sx] + v[n - sx - sy])) * (0.25 * idx)
                g12 = ((v[n + sz] + v[n + sz - sy]) -
                       (v[n - sz] + v[n - sz - sy])) * (0.25 * idz)
                g20 = ((w[n + sx] + w[n + sx - sz]) -
                       (w[n - sx] + w[n - sx - sz])) * (0.25 * idx)
                g21 = ((w[n + sy] + w[n + sy - sz]) -
                       (w[n - sy] + w[n - sy - sz])) * (0.25 * idy)

                # q = g . g
                q00 = g00 * g00 + g01 * g10 + g02 * g20
                q01 = g00 * g01 + g01 * g11 + g02 * g21
                q02 = g00 * g02 + g01 * g12 + g02 * g22
                q10 = g10 * g00 + g11 * g10 + g12 * g20
                q11 = g10 * g01 + g11 * g11 + g12 * g21
                q12 = g10 * g02 + g11 * g12 + g12 * g22
                q20 = g20 * g00 + g21 * g10 + g22 * g20
                q21 = g20 * g01 + g21 * g11 + g22 * g21
                q22 = g20 * g02 + g21 * g12 + g22 * g22

                tr3 = (q00 + q11 + q22) / 3.0
                sd00 = q00 - tr3
                sd11 = q11 - tr3
                sd22 = q22 - tr3
                sd01 = 0.5 * (q01 + q10)
                sd02 = 0.5 * (q02 + q20)
                sd12 = 0.5 * (q12 + q21)
                sdsd = (sd00 * sd00 + sd11 * sd11 + sd22 * sd22
                        + 2.0 * (sd01 * sd01 + sd02 * sd02 + sd12 * sd12))

                s00 = g00
                s11 = g11
                s22 = g22
                s01 = 0.5 * (g01 + g10)
                s02 = 0.5 * (g02 + g20)
                s12 = 0.5 * (g12 + g21)
                ss = (s00 * s00 + s11 * s11 + s22 * s22
                      + 2.0 * (s01 * s01 + s02 * s02 + s12 * s12))

                denom = ss ** 2.5 + sdsd ** 1.25
                if denom < 1.0e-30:
                    nut[n] = 0.0
                else:
                    nut[n] = cw2d2 * sdsd ** 1.5 / denom


@njit_strict
def k_acc_minus_product(out, a, b_arr, nx, nxny, b):
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] -= a[n] * b_arr[n]


@njit_strict
def k_acc_plus_product(out, a, b_arr, nx, nxny, b):
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                out[n] += a[n] * b_arr[n]


@njit_strict
def k_dt_denominator_max(u, v, w, sx, sy, sz, idx, idy, idz, nx, nxny, b):
    m = 0.0
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                val = max(abs(u[n]), abs(u[n - sx])) * idx \
                    + max(abs(v[n]), abs(v[n - sy])) * idy \
                    + max(abs(w[n]), abs(w[n - sz])) * idz
                if val > m:
                    m = val
    return m


@njit_strict
def k_max_abs(f, nx, nxny, b):
    m = 0.0
    for k in range(b[4], b[5]):
        for j in range(b[2], b[3]):
            n0 = b[0] + nx * j + nxny * k
            for n in range(n0, n0 + (b[1] - b[0])):
                a = abs(f[n])
                if a > m:
                    m = a
    return m
