"""Rigid-body mass parameter math for add-on payloads.

Conventions: MKS units throughout; each body carries its inertia tensor
about its own center of mass, expressed in a common reference frame.
A physically realizable tensor is symmetric, positive definite (for
positive mass) and its principal moments obey the triangle inequalities
``lam_i + lam_j >= lam_k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

SYMMETRY_TOL = 1e-12
TRIANGLE_REL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RigidBody:
    """Mass, center of mass, and inertia about that center of mass."""

    mass: float
    com: np.ndarray
    inertia: np.ndarray

    def __post_init__(self) -> None:
        com = np.asarray(self.com, dtype=float).reshape(3)
        inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if self.mass < 0:
            raise ValueError(f"mass must be non-negative, got {self.mass}")
        object.__setattr__(self, "com", com)
        object.__setattr__(self, "inertia", inertia)

    def validate(self) -> list[str]:
        return validate_inertia(self.inertia, self.mass)


def symmetric_eigenvalues(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric 3x3 matrix, ascending, via the
    characteristic cubic (trigonometric closed form)."""
    a = np.asarray(matrix, dtype=float)
    p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    q = np.trace(a) / 3.0
    if p1 == 0.0:
        return np.sort(np.diag(a))
    p2 = (a[0, 0] - q) ** 2 + (a[1, 1] - q) ** 2 + (a[2, 2] - q) ** 2 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    b = (a - q * np.eye(3)) / p
    r = np.linalg.det(b) / 2.0
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3.0
    lam_hi = q + 2.0 * p * math.cos(phi)
    lam_lo = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    lam_mid = 3.0 * q - lam_hi - lam_lo
    # degenerate pairs can come out inverted by a few ulp
    return np.sort(np.array([lam_lo, lam_mid, lam_hi]))


def validate_inertia(inertia: np.ndarray, mass: float) -> list[str]:
    """Check a tensor for physical validity; returns every violation found.

    Symmetry is checked entrywise to ``SYMMETRY_TOL``. For positive mass,
    positive definiteness is established from the three leading principal
    minors (closed form, no eigensolver), and the triangle inequalities
    from the principal moments.
    """
    a = np.asarray(inertia, dtype=float).reshape(3, 3)
    violations: list[str] = []

    asym = np.abs(a - a.T).max()
    if asym >= SYMMETRY_TOL:
        violations.append(f"not symmetric: max |I[i,j] - I[j,i]| = {asym:.3e}")

    if mass <= 0:
        return violations

    sym = 0.5 * (a + a.T)
    m1 = sym[0, 0]
    m2 = sym[0, 0] * sym[1, 1] - sym[0, 1] ** 2
    m3 = float(np.linalg.det(sym))
    for order, minor in ((1, m1), (2, m2), (3, m3)):
        if minor <= 0.0:
            violations.append(f"not positive definite: leading principal minor {order} = {minor:.3e}")

    lam = symmetric_eigenvalues(sym)
    scale = max(float(np.abs(lam).max()), np.finfo(float).tiny)
    tol = TRIANGLE_REL_TOL * scale
    for i, j, k in ((0, 1, 2), (0, 2, 1), (1, 2, 0)):
        if lam[i] + lam[j] < lam[k] - tol:
            violations.append(
                "triangle inequality violated: "
                f"{lam[i]:.6e} + {lam[j]:.6e} < {lam[k]:.6e}"
            )
    return violations


def parallel_axis(inertia_com: np.ndarray, mass: float, d: Sequence[float]) -> np.ndarray:
    """Inertia about a point displaced by ``d`` from the center of mass:
    ``I + m * (|d|^2 E - d d^T)``."""
    i_com = np.asarray(inertia_com, dtype=float).reshape(3, 3)
    dv = np.asarray(d, dtype=float).reshape(3)
    return i_com + mass * (float(dv @ dv) * np.eye(3) - np.outer(dv, dv))


def compose(bodies: Iterable[RigidBody]) -> RigidBody:
    """Merge bodies (all expressed in one frame) into a single rigid body.

    Total mass is the sum, the combined center of mass is the mass-weighted
    mean, and each inertia tensor is shifted to the combined center of mass
    before summing.
    """
    bodies = list(bodies)
    if not bodies:
        raise ValueError("compose needs at least one body")
    total_mass = sum(b.mass for b in bodies)
    if total_mass <= 0:
        raise ValueError("composed center of mass is undefined for zero total mass")
    com = sum(b.mass * b.com for b in bodies) / total_mass
    inertia = np.zeros((3, 3))
    for b in bodies:
        inertia += parallel_axis(b.inertia, b.mass, b.com - com)
    return RigidBody(mass=total_mass, com=com, inertia=inertia)


def com_shift(base: RigidBody, addon: RigidBody) -> np.ndarray:
    """Displacement of the combined center of mass from the base's own,
    after mounting ``addon``: ``(m_a / (m_b + m_a)) * (c_a - c_b)``."""
    if base.mass <= 0 or addon.mass <= 0:
        raise ValueError("com_shift needs two positive-mass bodies")
    return (addon.mass / (base.mass + addon.mass)) * (addon.com - base.com)


def body_from_dict(d: dict) -> RigidBody:
    """Build a body from ``{"mass": m, "com": [x,y,z], "inertia": [9 row-major]}``."""
    try:
        mass = float(d["mass"])
        com = np.asarray(d["com"], dtype=float).reshape(3)
        inertia = np.asarray(d["inertia"], dtype=float).reshape(3, 3)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed body record: {exc}") from None
    return RigidBody(mass=mass, com=com, inertia=inertia)


def load_bodies(path) -> list[RigidBody]:
    """Read one body, a list of bodies, or ``{"bodies": [...]}`` from JSON."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if isinstance(doc, dict) and "bodies" in doc:
        records = doc["bodies"]
    elif isinstance(doc, dict):
        records = [doc]
    elif isinstance(doc, list):
        records = doc
    else:
        raise ValueError("expected a body object, a list of bodies, or {'bodies': [...]}")
    return [body_from_dict(r) for r in records]


def bundled_backpack_body() -> RigidBody:
    """The backpack example body shipped with the package."""
    text = resources.files("nbpk").joinpath("data/backpack_body.json").read_text()
    return body_from_dict(json.loads(text))
