"""Hot numeric kernels: numba-jitted with pure-numpy fallbacks.

The jitted path is the default whenever numba imports; set the environment
variable ``MDWKB_DISABLE_NUMBA=1`` to force the numpy implementations
(same algorithms, same results to roundoff).  ``benchmarks/bench_kernels.py``
times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("MDWKB_DISABLE_NUMBA", "0") not in ("0", "", "false")

try:  # pragma: no cover - exercised implicitly
    if _DISABLED:
        raise ImportError
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # fallback: identity decorator, serial range
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def gauss_sphere(n_polar: int, n_azimuth: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre (polar) x trapezoid (azimuth) product rule on S^2.

    Used when the angular content of the shell integrand exceeds the
    26-point rule's degree (large shell radius x source curvature).
    """
    u, wu = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    su = np.sqrt(1.0 - u ** 2)
    dirs = np.empty((n_polar * n_azimuth, 3))
    w = np.empty(n_polar * n_azimuth)
    k = 0
    for i in range(n_polar):
        for j in range(n_azimuth):
            dirs[k] = (su[i] * np.cos(phi[j]), su[i] * np.sin(phi[j]), u[i])
            w[k] = wu[i] / (2.0 * n_azimuth)
            k += 1
    return dirs, w


def angular_rule(name: str) -> tuple[np.ndarray, np.ndarray]:
    """Named angular quadratures; weights sum to 1."""
    if name == "lebedev26":
        return lebedev26()
    if name.startswith("gauss"):
        # "gauss<P>x<A>", e.g. gauss16x12
        body = name[len("gauss"):]
        p, _, a = body.partition("x")
        return gauss_sphere(int(p), int(a) if a else 2 * int(p))
    raise ValueError(f"unknown angular rule {name!r}")


# 26-point octahedral quadrature on the unit sphere (exact through degree 7):
# 6 vertices, 12 edge midpoints, 8 face centers.
def lebedev26() -> tuple[np.ndarray, np.ndarray]:
    dirs = []
    w = []
    for i in range(3):
        for s in (1.0, -1.0):
            d = np.zeros(3)
            d[i] = s
            dirs.append(d)
            w.append(1.0 / 21.0)
    r2 = 1.0 / np.sqrt(2.0)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        for si in (1.0, -1.0):
            for sj in (1.0, -1.0):
                d = np.zeros(3)
                d[j] = si * r2
                d[k] = sj * r2
                dirs.append(d)
                w.append(4.0 / 105.0)
    r3 = 1.0 / np.sqrt(3.0)
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            for sz in (1.0, -1.0):
                dirs.append(np.array([sx * r3, sy * r3, sz * r3]))
                w.append(27.0 / 840.0)
    return np.array(dirs), np.array(w)


def _retarded_args(t_eval, dr, angular="lebedev26"):
    """Shell midpoints/widths covering [0, t] exactly (partial last cell)."""
    dirs, wts = angular_rule(angular)
    edges = np.arange(0.0, t_eval, dr)
    edges = np.append(edges, t_eval)
    radii = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    return dirs, wts, radii, widths


def _trilinear_gather_np(vals, pts, lo, dx):
    """vals: (nx,ny,nz); pts: (m,3). Zero outside the box."""
    nx, ny, nz = vals.shape
    f = (pts - lo) / dx
    i0 = np.floor(f).astype(np.int64)
    frac = f - i0
    out = np.zeros(len(pts))
    inside = np.all((i0 >= 0) & (i0 < np.array([nx, ny, nz]) - 1), axis=1)
    if not np.any(inside):
        return out
    i, j, k = i0[inside].T
    fx, fy, fz = frac[inside].T
    c000 = vals[i, j, k]
    c100 = vals[i + 1, j, k]
    c010 = vals[i, j + 1, k]
    c001 = vals[i, j, k + 1]
    c110 = vals[i + 1, j + 1, k]
    c101 = vals[i + 1, j, k + 1]
    c011 = vals[i, j + 1, k + 1]
    c111 = vals[i + 1, j + 1, k + 1]
    out[inside] = (
        c000 * (1 - fx) * (1 - fy) * (1 - fz)
        + c100 * fx * (1 - fy) * (1 - fz)
        + c010 * (1 - fx) * fy * (1 - fz)
        + c001 * (1 - fx) * (1 - fy) * fz
        + c110 * fx * fy * (1 - fz)
        + c101 * fx * (1 - fy) * fz
        + c011 * (1 - fx) * fy * fz
        + c111 * fx * fy * fz
    )
    return out


def retarded_shell_np(source_vals, times, lo, dx, mesh, t_eval, dr,
                      angular="lebedev26"):
    """Light-cone quadrature of the 3d retarded potential, numpy path.

    V(x) = sum_shells r * width * <source(t - r, x + r n)>_angles.
    """
    dirs, wts, radii, widths = _retarded_args(t_eval, dr, angular)
    pts = mesh.reshape(-1, 3)
    out = np.zeros(len(pts))
    dt_src = times[1] - times[0] if len(times) > 1 else 1.0
    for r, wdt in zip(radii, widths):
        ts = t_eval - r
        # linear interpolation in time between bracketing slices
        s = min(max(ts / dt_src, 0.0), len(times) - 1.0)
        k0 = int(np.floor(s))
        k1 = min(k0 + 1, len(times) - 1)
        a = s - k0
        shell = np.zeros(len(pts))
        for d, w in zip(dirs, wts):
            q = pts + r * d
            v0 = _trilinear_gather_np(source_vals[k0], q, lo, dx)
            v1 = _trilinear_gather_np(source_vals[k1], q, lo, dx)
            shell += w * ((1 - a) * v0 + a * v1)
        out += r * wdt * shell
    return out.reshape(mesh.shape[:-1])


if USE_NUMBA:

    @njit(cache=True)
    def _trilinear_one(vals, x, y, z, lox, loy, loz, dx, dy, dz):
        nx, ny, nz = vals.shape
        fx = (x - lox) / dx
        fy = (y - loy) / dy
        fz = (z - loz) / dz
        i = int(np.floor(fx))
        j = int(np.floor(fy))
        k = int(np.floor(fz))
        if i < 0 or j < 0 or k < 0 or i >= nx - 1 or j >= ny - 1 or k >= nz - 1:
            return 0.0
        ax = fx - i
        ay = fy - j
        az = fz - k
        return (
            vals[i, j, k] * (1 - ax) * (1 - ay) * (1 - az)
            + vals[i + 1, j, k] * ax * (1 - ay) * (1 - az)
            + vals[i, j + 1, k] * (1 - ax) * ay * (1 - az)
            + vals[i, j, k + 1] * (1 - ax) * (1 - ay) * az
            + vals[i + 1, j + 1, k] * ax * ay * (1 - az)
            + vals[i + 1, j, k + 1] * ax * (1 - ay) * az
            + vals[i, j + 1, k + 1] * (1 - ax) * ay * az
            + vals[i + 1, j + 1, k + 1] * ax * ay * az
        )

    @njit(cache=True, parallel=True)
    def _retarded_shell_nb(source_vals, times, lo, dx, pts, t_eval, radii,
                           widths, dirs, wts):
        n = pts.shape[0]
        out = np.zeros(n)
        dt_src = times[1] - times[0] if len(times) > 1 else 1.0
        for p in prange(n):
            acc = 0.0
            for ir in range(len(radii)):
                r = radii[ir]
                ts = t_eval - r
                s = ts / dt_src
                if s < 0.0:
                    s = 0.0
                if s > len(times) - 1.0:
                    s = len(times) - 1.0
                k0 = int(np.floor(s))
                k1 = k0 + 1
                if k1 > len(times) - 1:
                    k1 = len(times) - 1
                a = s - k0
                shell = 0.0
                for q in range(dirs.shape[0]):
                    x = pts[p, 0] + r * dirs[q, 0]
                    y = pts[p, 1] + r * dirs[q, 1]
                    z = pts[p, 2] + r * dirs[q, 2]
                    v0 = _trilinear_one(source_vals[k0], x, y, z, lo[0], lo[1], lo[2], dx[0], dx[1], dx[2])
                    v1 = _trilinear_one(source_vals[k1], x, y, z, lo[0], lo[1], lo[2], dx[0], dx[1], dx[2])
                    shell += wts[q] * ((1 - a) * v0 + a * v1)
                acc += r * widths[ir] * shell
            out[p] = acc
        return out

    def retarded_shell(source_vals, times, lo, dx, mesh, t_eval, dr,
                       angular="lebedev26"):
        dirs, wts, radii, widths = _retarded_args(t_eval, dr, angular)
        if len(radii) == 0:
            return np.zeros(mesh.shape[:-1])
        pts = np.ascontiguousarray(mesh.reshape(-1, 3))
        out = _retarded_shell_nb(
            np.ascontiguousarray(source_vals), np.ascontiguousarray(times),
            np.asarray(lo, dtype=np.float64), np.asarray(dx, dtype=np.float64),
            pts, float(t_eval), radii, widths, dirs, wts,
        )
        return out.reshape(mesh.shape[:-1])

else:
    retarded_shell = retarded_shell_np


def gather_rays_3d_np(pos, vals, grid):
    """Scatter ray samples to grid nodes by 8-nearest inverse distance.

    pos: (n, 3) ray positions; vals: (n, c) per-ray values.
    Returns (field of shape grid.shape + (c,), coverage_ok).
    """
    lo = np.array([e[0] for e in grid.extents])
    dxv = np.array(grid.dx)
    shape = grid.shape
    ncell = np.array(shape)
    cell = np.floor((pos - lo) / dxv).astype(np.int64)
    cell = np.clip(cell, 0, ncell - 1)
    flat = (cell[:, 0] * ncell[1] + cell[:, 1]) * ncell[2] + cell[:, 2]
    order = np.argsort(flat, kind="stable")
    flat_s = flat[order]
    pos_s = pos[order]
    vals_s = vals[order]
    starts = np.searchsorted(flat_s, np.arange(np.prod(ncell)))
    ends = np.searchsorted(flat_s, np.arange(np.prod(ncell)) + 1)

    mesh = grid.mesh().reshape(-1, 3)
    out = np.zeros((mesh.shape[0], vals.shape[1]))
    ok = True
    radius = 3.0 * max(grid.dx)
    node_cell = np.floor((mesh - lo) / dxv).astype(np.int64)
    node_cell = np.clip(node_cell, 0, ncell - 1)
    offsets = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)]
    for idx in range(mesh.shape[0]):
        cands = []
        ci, cj, ck = node_cell[idx]
        for a, b, c in offsets:
            i, j, k = ci + a, cj + b, ck + c
            if 0 <= i < ncell[0] and 0 <= j < ncell[1] and 0 <= k < ncell[2]:
                f = (i * ncell[1] + j) * ncell[2] + k
                cands.extend(range(starts[f], ends[f]))
        if not cands:
            ok = False
            continue
        cands = np.array(cands)
        d = np.sqrt(np.sum((pos_s[cands] - mesh[idx]) ** 2, axis=1))
        take = np.argsort(d)[:8]
        d8 = d[take]
        if d8[0] > radius:
            ok = False
            continue
        if d8[0] < 1e-12:
            out[idx] = vals_s[cands[take[0]]]
            continue
        w = 1.0 / d8
        w /= w.sum()
        out[idx] = w @ vals_s[cands[take]]
    return out.reshape(shape + (vals.shape[1],)), ok


if USE_NUMBA:

    @njit(cache=True, parallel=True)
    def _gather_rays_nb(pos_s, vals_s, starts, ends, mesh, node_cell, ncell,
                        radius):
        n_nodes = mesh.shape[0]
        c = vals_s.shape[1]
        out = np.zeros((n_nodes, c))
        okarr = np.ones(n_nodes, dtype=np.uint8)
        for idx in prange(n_nodes):
            best_d = np.full(8, 1e300)
            best_i = np.full(8, -1, dtype=np.int64)
            ci, cj, ck = node_cell[idx, 0], node_cell[idx, 1], node_cell[idx, 2]
            for a in range(-1, 2):
                i = ci + a
                if i < 0 or i >= ncell[0]:
                    continue
                for b in range(-1, 2):
                    j = cj + b
                    if j < 0 or j >= ncell[1]:
                        continue
                    for cc in range(-1, 2):
                        k = ck + cc
                        if k < 0 or k >= ncell[2]:
                            continue
                        f = (i * ncell[1] + j) * ncell[2] + k
                        for r in range(starts[f], ends[f]):
                            dx0 = pos_s[r, 0] - mesh[idx, 0]
                            dx1 = pos_s[r, 1] - mesh[idx, 1]
                            dx2 = pos_s[r, 2] - mesh[idx, 2]
                            d = np.sqrt(dx0 * dx0 + dx1 * dx1 + dx2 * dx2)
                            # keep the 8 closest
                            worst = 0
                            for m in range(1, 8):
                                if best_d[m] > best_d[worst]:
                                    worst = m
                            if d < best_d[worst]:
                                best_d[worst] = d
                                best_i[worst] = r
            if np.min(best_d) > radius:
                okarr[idx] = 0
                continue
            dmin = np.min(best_d)
            if dmin < 1e-12:
                for m in range(8):
                    if best_d[m] == dmin:
                        out[idx] = vals_s[best_i[m]]
                        break
                continue
            wsum = 0.0
            for m in range(8):
                if best_i[m] >= 0:
                    wsum += 1.0 / best_d[m]
            for m in range(8):
                if best_i[m] >= 0:
                    w = (1.0 / best_d[m]) / wsum
                    for ch in range(c):
                        out[idx, ch] += w * vals_s[best_i[m], ch]
        return out, okarr

    def gather_rays_3d(pos, vals, grid):
        lo = np.array([e[0] for e in grid.extents])
        dxv = np.array(grid.dx)
        ncell = np.array(grid.shape, dtype=np.int64)
        cell = np.floor((pos - lo) / dxv).astype(np.int64)
        cell = np.clip(cell, 0, ncell - 1)
        flat = (cell[:, 0] * ncell[1] + cell[:, 1]) * ncell[2] + cell[:, 2]
        order = np.argsort(flat, kind="stable")
        flat_s = flat[order]
        starts = np.searchsorted(flat_s, np.arange(np.prod(ncell))).astype(np.int64)
        ends = np.searchsorted(flat_s, np.arange(np.prod(ncell)) + 1).astype(np.int64)
        mesh = np.ascontiguousarray(grid.mesh().reshape(-1, 3))
        node_cell = np.clip(np.floor((mesh - lo) / dxv).astype(np.int64), 0, ncell - 1)
        out, okarr = _gather_rays_nb(
            np.ascontiguousarray(pos[order]), np.ascontiguousarray(vals[order]),
            starts, ends, mesh, node_cell, ncell, 3.0 * max(grid.dx),
        )
        return out.reshape(grid.shape + (vals.shape[1],)), bool(okarr.all())

else:
    gather_rays_3d = gather_rays_3d_np
