"""JIT ray-march kernels.

Rays march independently in scalar loops, so frames never depend on tile
decomposition or worker count. Kernels release the GIL; tile threads scale on
real cores. Block-occupancy tests only skip work that provably contributes
nothing (a sample below every threshold, or one that cannot raise a running
maximum), so acceleration never changes output bits.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

EARLY_TERMINATION_ALPHA = 0.999
OCC_BLOCK = 4  # voxels per occupancy cell edge


@njit(cache=True, nogil=True, inline="always")
def _trilinear(grid, gz, gy, gx):
    """Trilinear fetch from a zero-padded grid, edge-clamped (nearest beyond pad)."""
    nz, ny, nx = grid.shape
    if gz < 0.0:
        gz = 0.0
    elif gz > nz - 1.0:
        gz = nz - 1.0
    if gy < 0.0:
        gy = 0.0
    elif gy > ny - 1.0:
        gy = ny - 1.0
    if gx < 0.0:
        gx = 0.0
    elif gx > nx - 1.0:
        gx = nx - 1.0
    iz = int(gz)
    iy = int(gy)
    ix = int(gx)
    if iz > nz - 2:
        iz = nz - 2
    if iy > ny - 2:
        iy = ny - 2
    if ix > nx - 2:
        ix = nx - 2
    fz = gz - iz
    fy = gy - iy
    fx = gx - ix
    c00 = grid[iz, iy, ix] + fx * (grid[iz, iy, ix + 1] - grid[iz, iy, ix])
    c01 = grid[iz, iy + 1, ix] + fx * (grid[iz, iy + 1, ix + 1] - grid[iz, iy + 1, ix])
    c10 = grid[iz + 1, iy, ix] + fx * (grid[iz + 1, iy, ix + 1] - grid[iz + 1, iy, ix])
    c11 = grid[iz + 1, iy + 1, ix] + fx * (grid[iz + 1, iy + 1, ix + 1]
                                           - grid[iz + 1, iy + 1, ix])
    c0 = c00 + fy * (c01 - c00)
    c1 = c10 + fy * (c11 - c10)
    return c0 + fz * (c1 - c0)


@njit(cache=True, nogil=True, inline="always")
def _block_index(p, n_blocks):
    b = int(p) >> 2  # OCC_BLOCK == 4
    if b < 0:
        b = 0
    elif b >= n_blocks:
        b = n_blocks - 1
    return b


@njit(cache=True, nogil=True)
def march_mip(grids, occ, origins, dirs, t0s, spans, step, inv_sp, out):
    """Per-ray, per-channel maximum intensity along the ray span.

    grids: (C, Z+2, Y+2, X+2) padded float32; occ: (C, BZ, BY, BX) dilated
    block maxima; origins/dirs (R, 3); out (R, C) float32.
    """
    n_rays = origins.shape[0]
    n_ch = grids.shape[0]
    for r in range(n_rays):
        span = spans[r]
        if span <= 0.0:
            continue
        n = int(math.ceil(span / step - 0.5))
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        t0 = t0s[r]
        for c in range(n_ch):
            best = 0.0
            bz_n, by_n, bx_n = occ.shape[1], occ.shape[2], occ.shape[3]
            for k in range(n):
                t = t0 + (k + 0.5) * step
                px = (ox + t * dx) * inv_sp[0]
                py = (oy + t * dy) * inv_sp[1]
                pz = (oz + t * dz) * inv_sp[2]
                bx = _block_index(px, bx_n)
                by = _block_index(py, by_n)
                bz = _block_index(pz, bz_n)
                if occ[c, bz, by, bx] <= best:
                    continue  # cannot raise the maximum
                v = _trilinear(grids[c], pz + 0.5, py + 0.5, px + 0.5)
                if v > best:
                    best = v
            out[r, c] = best


@njit(cache=True, nogil=True)
def march_ea(grids, occ, origins, dirs, t0s, spans, step, rate, inv_sp,
             lows, highs, gammas, alphas, colors, out_rgb, out_a):
    """Front-to-back emission-absorption compositing per ray.

    Per-sample opacity is corrected for step size via a = 1 - (1-a)^rate with
    rate = step / reference_step; channels mix by union opacity and additive
    emission. Accumulation stops once alpha reaches the early-termination
    threshold. Samples whose occupancy block sits below every channel
    threshold contribute exactly zero and are skipped.
    """
    n_rays = origins.shape[0]
    n_ch = grids.shape[0]
    bz_n, by_n, bx_n = occ.shape[1], occ.shape[2], occ.shape[3]
    for r in range(n_rays):
        span = spans[r]
        if span <= 0.0:
            continue
        n = int(math.ceil(span / step - 0.5))
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        t0 = t0s[r]
        trans = 1.0
        acc_a = 0.0
        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        for k in range(n):
            if acc_a >= EARLY_TERMINATION_ALPHA:
                break
            t = t0 + (k + 0.5) * step
            px = (ox + t * dx) * inv_sp[0]
            py = (oy + t * dy) * inv_sp[1]
            pz = (oz + t * dz) * inv_sp[2]
            bx = _block_index(px, bx_n)
            by = _block_index(py, by_n)
            bz = _block_index(pz, bz_n)
            live = False
            for c in range(n_ch):
                if occ[c, bz, by, bx] >= lows[c]:
                    live = True
                    break
            if not live:
                continue
            keep = 1.0
            em_r = 0.0
            em_g = 0.0
            em_b = 0.0
            for c in range(n_ch):
                v = _trilinear(grids[c], pz + 0.5, py + 0.5, px + 0.5)
                low = lows[c]
                high = highs[c]
                if high > low:
                    m = (v - low) / (high - low)
                    if m < 0.0:
                        m = 0.0
                    elif m > 1.0:
                        m = 1.0
                else:
                    m = 1.0 if v >= low else 0.0
                if gammas[c] != 1.0:
                    m = m ** gammas[c]
                a = alphas[c] * m
                if rate != 1.0:
                    a = 1.0 - (1.0 - a) ** rate
                g = a * m
                em_r += g * colors[c, 0]
                em_g += g * colors[c, 1]
                em_b += g * colors[c, 2]
                keep *= 1.0 - a
            acc_r += trans * em_r
            acc_g += trans * em_g
            acc_b += trans * em_b
            acc_a += trans * (1.0 - keep)
            trans *= keep
        out_rgb[r, 0] = acc_r
        out_rgb[r, 1] = acc_g
        out_rgb[r, 2] = acc_b
        out_a[r] = acc_a


@njit(cache=True, nogil=True)
def march_first_hit(grids, origins, dirs, t0s, spans, step, inv_sp, threshold):
    """Distance to the first sample whose any-channel intensity reaches threshold.

    Returns -1.0 when nothing along the (single) ray reaches it.
    """
    span = spans[0]
    if span <= 0.0:
        return -1.0
    n = int(math.ceil(span / step - 0.5))
    ox, oy, oz = origins[0, 0], origins[0, 1], origins[0, 2]
    dx, dy, dz = dirs[0, 0], dirs[0, 1], dirs[0, 2]
    t0 = t0s[0]
    for k in range(n):
        t = t0 + (k + 0.5) * step
        px = (ox + t * dx) * inv_sp[0]
        py = (oy + t * dy) * inv_sp[1]
        pz = (oz + t * dz) * inv_sp[2]
        for c in range(grids.shape[0]):
            if _trilinear(grids[c], pz + 0.5, py + 0.5, px + 0.5) >= threshold:
                return t
    return -1.0


def build_occupancy(samples: np.ndarray) -> np.ndarray:
    """Dilated block maxima for one channel, conservative for trilinear reads.

    Each cell holds the maximum over its OCC_BLOCK^3 voxels and all neighbor
    cells, so any trilinear fetch from a position inside the cell is bounded
    by the cell value.
    """
    from scipy.ndimage import maximum_filter

    nz, ny, nx = samples.shape
    b = OCC_BLOCK
    pz, py, px = (-nz) % b, (-ny) % b, (-nx) % b
    padded = np.pad(samples, ((0, pz), (0, py), (0, px)))
    blocks = padded.reshape(padded.shape[0] // b, b,
                            padded.shape[1] // b, b,
                            padded.shape[2] // b, b).max(axis=(1, 3, 5))
    return maximum_filter(blocks, size=3, mode="nearest")
