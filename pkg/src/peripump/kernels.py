"""Free-space 2D Stokes kernels.

Velocity single layer (Stokeslet) and double layer (stresslet), the
associated pressure kernels, and the associated traction kernels built
from the target/source dipole functions

    d_x = (z . n_y) / z^2,   d_y = (z . n_x) / z^2,   z = x - y.

All evaluators are vectorized over a target block times a source block
and return arrays shaped (n_tgt, n_src, ...).  Matrix-valued kernels can
be flattened to node-major (2*n_tgt, 2*n_src) operators with
:func:`as_matrix`.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "single_layer",
    "double_layer",
    "pressure_kernels",
    "traction_kernels",
    "kernel_suite",
    "as_matrix",
]


def _geometry(targets, sources):
    """Shared displacement data: z, z^2 with a singular-pair guard."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    z = targets[:, None, :] - sources[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", z, z)
    if np.any(r2 == 0.0):
        raise ValueError("singular kernel evaluation: target coincides with source")
    return z, r2


def single_layer(targets, sources):
    """Stokeslet S_ij = (1/4pi) (delta_ij log(1/z) + z_i z_j / z^2)."""
    z, r2 = _geometry(targets, sources)
    S = np.einsum("ijk,ijl->ijkl", z, z) / r2[..., None, None]
    logterm = -0.5 * np.log(r2)
    S[..., 0, 0] += logterm
    S[..., 1, 1] += logterm
    S *= 1.0 / (4.0 * np.pi)
    return S


def double_layer(targets, sources, n_src):
    """Stresslet D_ij = (1/pi) (z_i z_j / z^2) (z . n_y / z^2)."""
    z, r2 = _geometry(targets, sources)
    n_src = np.atleast_2d(np.asarray(n_src, dtype=float))
    zn = np.einsum("ijk,jk->ij", z, n_src)
    D = np.einsum("ijk,ijl->ijkl", z, z) * (zn / (r2 * r2))[..., None, None]
    D *= 1.0 / np.pi
    return D


def pressure_kernels(targets, sources, n_src):
    """Pressure kernels (P^S, P^D) of the single and double layers."""
    z, r2 = _geometry(targets, sources)
    n_src = np.atleast_2d(np.asarray(n_src, dtype=float))
    PS = z / (2.0 * np.pi * r2[..., None])
    zn = np.einsum("ijk,jk->ij", z, n_src)
    PD = (-n_src[None, :, :] / r2[..., None]
          + 2.0 * (zn / (r2 * r2))[..., None] * z) / np.pi
    return PS, PD


def traction_kernels(targets, sources, n_tgt, n_src):
    """Traction kernels (T^S, T^D) for target direction n_x.

    T^S_ij = -(1/pi)(z_i z_j / z^2)(z . n_x / z^2) and T^D as the dipole
    combination; n_tgt is the direction the stress tensor is contracted
    with at the target (the boundary normal for boundary tractions).
    """
    out = kernel_suite(targets, sources, n_src=n_src, n_tgt=n_tgt, want=("TS", "TD"))
    return out["TS"], out["TD"]


def kernel_suite(targets, sources, n_src=None, n_tgt=None, *, want=("S",)):
    """Evaluate any subset of the six kernels sharing z, z^2 and log z.

    Parameters
    ----------
    want : iterable of {"S","D","PS","PD","TS","TD"}

    Returns
    -------
    dict mapping each requested name to its block array.
    """
    z, r2 = _geometry(targets, sources)
    want = set(want)
    out = {}
    inv_r2 = 1.0 / r2
    zz = np.einsum("ijk,ijl->ijkl", z, z) * inv_r2[..., None, None]
    if n_src is not None:
        n_src = np.atleast_2d(np.asarray(n_src, dtype=float))
        dx = np.einsum("ijk,jk->ij", z, n_src) * inv_r2
    if n_tgt is not None:
        n_tgt = np.atleast_2d(np.asarray(n_tgt, dtype=float))
        dy = np.einsum("ijk,ik->ij", z, n_tgt) * inv_r2

    if "S" in want:
        S = zz.copy()
        logterm = -0.5 * np.log(r2)
        S[..., 0, 0] += logterm
        S[..., 1, 1] += logterm
        out["S"] = S / (4.0 * np.pi)
    if "D" in want:
        out["D"] = zz * (dx / np.pi)[..., None, None]
    if "PS" in want:
        out["PS"] = z * (inv_r2 / (2.0 * np.pi))[..., None]
    if "PD" in want:
        out["PD"] = (-n_src[None, :, :] * inv_r2[..., None]
                     + 2.0 * (dx * inv_r2)[..., None] * z) / np.pi
    if "TS" in want:
        out["TS"] = -zz * (dy / np.pi)[..., None, None]
    if "TD" in want:
        # traction of the double layer, sigma[D g, P^D g] . n_x; verified
        # against the finite-difference stress of the (D, P^D) pair
        nxny = np.einsum("ik,jk->ij", n_tgt, n_src)
        TD = (-8.0 * dx * dy)[..., None, None] * zz
        diag = nxny * inv_r2
        TD[..., 0, 0] += diag
        TD[..., 1, 1] += diag
        z_ny = np.einsum("ijk,jl->ijkl", z, n_src)
        z_nx = np.einsum("ijk,il->ijkl", z, n_tgt)
        sym_ny = z_ny + z_ny.transpose(0, 1, 3, 2)
        sym_nx = z_nx + z_nx.transpose(0, 1, 3, 2)
        TD += (dy * inv_r2)[..., None, None] * sym_ny
        TD += (dx * inv_r2)[..., None, None] * sym_nx
        out["TD"] = TD / np.pi
    return out


def as_matrix(block):
    """Flatten an (n, m, 2, 2) kernel block to a node-major (2n, 2m) matrix."""
    n, m = block.shape[:2]
    return block.transpose(0, 2, 1, 3).reshape(2 * n, 2 * m)
