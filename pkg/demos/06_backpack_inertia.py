#!/usr/bin/env python3
"""What a backpack does to a robot's mass distribution.

Loads the bundled backpack body and runs the physical-validity checks on
its inertia tensor. Those checks genuinely fail: the tensor's principal
moments describe a body flatter than an infinitely thin plate, which no
arrangement of mass can produce. The script shows where the numbers go
wrong, repairs them minimally, and then mounts the repaired body on a
torso to see how the combined center of mass and inertia move.
"""

import math

import numpy as np

from nbpk.inertial import (
    RigidBody,
    bundled_backpack_body,
    com_shift,
    compose,
    parallel_axis,
    symmetric_eigenvalues,
)


def show(name, body):
    print(f"{name}: mass {body.mass:.4f} kg, com "
          f"[{body.com[0]:+.4f} {body.com[1]:+.4f} {body.com[2]:+.4f}] m")
    for row in body.inertia:
        print("    [" + "  ".join(f"{v:+.6e}" for v in row) + "]")


pack = bundled_backpack_body()
print("== Bundled backpack body ==")
show("backpack", pack)

print("\n== Validity ==")
lam = symmetric_eigenvalues(pack.inertia)
print(f"principal moments: {lam[0]:.6e}  {lam[1]:.6e}  {lam[2]:.6e}")
for problem in pack.validate():
    print(f"  VIOLATION: {problem}")

# Any real mass distribution satisfies lam_i + lam_j >= lam_k, with
# equality only in the flat-plate limit. Inverting the uniform-cuboid
# formulas makes the failure concrete: the side length along each
# principal axis is sqrt((6/m) * (lam_i + lam_j - lam_k)), and the
# failing combination comes out negative under the square root.
print("\n== The equivalent box does not exist ==")
for k in range(3):
    i, j = [ax for ax in range(3) if ax != k]
    side_sq = (6.0 / pack.mass) * (lam[i] + lam[j] - lam[k])
    side = f"{math.sqrt(side_sq) * 1000:8.1f} mm" if side_sq >= 0 else "imaginary"
    print(f"  side along principal axis {k}: {side}")

print("\n== Minimal repair ==")
vals, vecs = np.linalg.eigh(pack.inertia)
vals[0] = 1.05 * (vals[2] - vals[1])  # just past the flat-plate limit
repaired = RigidBody(mass=pack.mass, com=pack.com,
                     inertia=vecs @ np.diag(vals) @ vecs.T)
show("repaired", repaired)
print(f"  validates clean: {not repaired.validate()}")
sides = [math.sqrt((6.0 / pack.mass) * (vals[i] + vals[j] - vals[k])) * 1000
         for k in range(3) for i, j in [[ax for ax in range(3) if ax != k]]]
print("  equivalent uniform box: "
      + " x ".join(f"{s:.1f}" for s in sorted(sides, reverse=True)) + " mm")

print("\n== Mounted on a torso ==")


def cuboid_body(mass, com, sides):
    a, b, c = sides
    inertia = np.diag([b * b + c * c, a * a + c * c, a * a + b * b]) * (mass / 12.0)
    return RigidBody(mass=mass, com=com, inertia=inertia)


torso = cuboid_body(1.05, [0.0, 0.0, 0.0], (0.10, 0.27, 0.21))
show("torso", torso)
combined = compose([torso, repaired])
show("combined", combined)
print(f"  still valid: {not combined.validate()}")

shift = com_shift(torso, repaired)
print(f"\ncom shift from mounting the pack: "
      f"[{shift[0]:+.5f} {shift[1]:+.5f} {shift[2]:+.5f}] m "
      f"({np.linalg.norm(shift) * 1000:.1f} mm)")
print(f"  agrees with compose: {np.allclose(torso.com + shift, combined.com)}")

# A controller usually wants the inertia about its pivot, not about the
# center of mass; the parallel-axis shift adds m*(|d|^2 E - d d^T), so
# the trace grows by exactly 2 m |d|^2 and never shrinks.
print("\n== About the hip pivot ==")
pivot = np.array([0.0, 0.0, -0.085])
d = pivot - combined.com
about_pivot = parallel_axis(combined.inertia, combined.mass, d)
t_com, t_piv = np.trace(combined.inertia), np.trace(about_pivot)
print(f"  trace about com:   {t_com:.6e}")
print(f"  trace about pivot: {t_piv:.6e} "
      f"(com trace + 2 m |d|^2 = {t_com + 2.0 * combined.mass * float(d @ d):.6e})")
