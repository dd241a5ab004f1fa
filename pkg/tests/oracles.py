"""Independent reference implementations used as test oracles.

Everything here is written from the documented contracts, deliberately
taking different computational routes than the library (brute force,
scalar math, direct summation) so agreement is meaningful.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64_sequence(seed: int, n: int) -> list[int]:
    """Reference splitmix64: n outputs for a seed, straight from the
    published algorithm (Steele, Lea & Flood)."""
    out = []
    x = seed & MASK64
    for _ in range(n):
        x = (x + 0x9E3779B97F4A7C15) & MASK64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        out.append((z ^ (z >> 31)) & MASK64)
    return out


# First outputs for seed 0, straight from the reference implementation's
# published test vector.
SPLITMIX64_SEED0_FIRST = 0xE220A8397B1DCDAF


def frame_outcomes(frame_packet_counts: list[int], survived: list[bool]) -> list[bool]:
    """Which frames complete, for an in-order lossy stream.

    ``survived`` is one flag per packet over the concatenated stream
    (START then fragments, frame by frame). With a single-slot receiver
    and no reordering, a frame completes exactly when every one of its
    packets survived: a lost START means its fragments have nowhere to
    land, and a lost fragment leaves the frame incomplete until the next
    START (or end of stream) discards it.
    """
    outcomes = []
    i = 0
    for n in frame_packet_counts:
        outcomes.append(all(survived[i:i + n]))
        i += n
    assert i == len(survived)
    return outcomes


def yuv_to_rgb_scalar(y: int, u: int, v: int) -> tuple[int, int, int]:
    """One pixel of BT.601 full-range YUV -> RGB, scalar arithmetic."""
    r = y + 1.402 * (v - 128)
    g = y - 0.344136 * (u - 128) - 0.714136 * (v - 128)
    b = y + 1.772 * (u - 128)

    def finish(x: float) -> int:
        x = min(255.0, max(0.0, x))
        return int(math.floor(x + 0.5))  # nearest, ties away from zero

    return finish(r), finish(g), finish(b)


# --- rigid-body point-cloud integrator -------------------------------------

def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish proper rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def cuboid_cloud(extents, center, rotation=None, density: float = 1.0,
                 n: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Sample a solid cuboid as an n^3 midpoint grid of point masses.

    Returns (points (N,3), masses (N,)). ``extents`` are the full edge
    lengths along the cuboid's own axes before rotation.
    """
    extents = np.asarray(extents, dtype=float)
    center = np.asarray(center, dtype=float)
    axes = [(np.arange(n) + 0.5) / n - 0.5 for _ in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = grid * extents
    if rotation is not None:
        pts = pts @ np.asarray(rotation, dtype=float).T
    pts = pts + center
    cell_volume = float(np.prod(extents)) / n ** 3
    masses = np.full(len(pts), density * cell_volume)
    return pts, masses


def cloud_mass_properties(points: np.ndarray, masses: np.ndarray):
    """Brute-force (mass, com, inertia about com) of a point cloud."""
    m = float(masses.sum())
    com = (masses[:, None] * points).sum(axis=0) / m
    r = points - com
    r2 = (r * r).sum(axis=1)
    inertia = np.zeros((3, 3))
    inertia += np.eye(3) * float((masses * r2).sum())
    inertia -= (masses[:, None, None] * r[:, :, None] * r[:, None, :]).sum(axis=0)
    return m, com, inertia


def cloud_inertia_about(points: np.ndarray, masses: np.ndarray, point) -> np.ndarray:
    """Brute-force inertia of a cloud about an arbitrary point (no
    parallel-axis shortcut)."""
    r = points - np.asarray(point, dtype=float)
    r2 = (r * r).sum(axis=1)
    inertia = np.eye(3) * float((masses * r2).sum())
    inertia -= (masses[:, None, None] * r[:, :, None] * r[:, None, :]).sum(axis=0)
    return inertia


def analytic_cuboid_inertia(mass: float, extents, rotation=None) -> np.ndarray:
    """Closed-form solid cuboid inertia about its CoM (for checking the
    cloud integrator itself)."""
    a, b, c = np.asarray(extents, dtype=float)
    local = np.diag([
        mass / 12.0 * (b * b + c * c),
        mass / 12.0 * (a * a + c * c),
        mass / 12.0 * (a * a + b * b),
    ])
    if rotation is None:
        return local
    rot = np.asarray(rotation, dtype=float)
    return rot @ local @ rot.T


def rel_err(actual: np.ndarray, expected: np.ndarray) -> float:
    scale = max(float(np.abs(expected).max()), 1e-30)
    return float(np.abs(np.asarray(actual) - np.asarray(expected)).max()) / scale
