"""Deterministic planar rigid-body engine.

Maximal-coordinate 2D dynamics (x forward, y up) stepped at 1200 Hz with
semi-implicit Euler integration. Revolute joints and ground/body contacts
are resolved by sequential velocity-level impulses with Baumgarte
positional bias; Coulomb friction is enforced exactly (a final re-clamp
pass keeps |tangent| <= mu * normal even when the normal impulse shrinks
across iterations). Restitution is zero everywhere: locomotion contacts
are inelastic.

No randomness lives here; identical inputs give bitwise-identical states.
Bodies use plain Python floats on purpose: this loop runs 40 times per
control tick and scalar math beats numpy at these sizes.
"""

from __future__ import annotations

import copy
import math

DT = 1.0 / 1200.0
GROUND_ID = -1


class SimulationDiverged(RuntimeError):
    """Raised when a step produces a non-finite state."""

    def __init__(self, step_index: int):
        super().__init__(f"simulation diverged at step {step_index}")
        self.step_index = step_index


def wrap_angle(a: float) -> float:
    """Map an angle difference into (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


class Capsule:
    """Segment from (ax, ay) to (bx, by) in body frame, inflated by radius."""

    __slots__ = ("ax", "ay", "bx", "by", "radius")

    def __init__(self, ax, ay, bx, by, radius):
        self.ax, self.ay, self.bx, self.by = float(ax), float(ay), float(bx), float(by)
        self.radius = float(radius)

    def inertia(self, mass: float) -> float:
        # box-equivalent approximation: (L + 2r) x 2r slab
        length = math.hypot(self.bx - self.ax, self.by - self.ay) + 2.0 * self.radius
        width = 2.0 * self.radius
        return mass * (length * length + width * width) / 12.0


class Box:
    __slots__ = ("hw", "hh")

    def __init__(self, hw, hh):
        self.hw, self.hh = float(hw), float(hh)

    def inertia(self, mass: float) -> float:
        return mass * ((2 * self.hw) ** 2 + (2 * self.hh) ** 2) / 12.0


class Body:
    __slots__ = (
        "bid", "x", "y", "angle", "vx", "vy", "w",
        "mass", "inertia", "inv_m", "inv_i",
        "shape", "friction", "group", "frozen_steps",
    )

    def __init__(self, bid, shape, mass, x=0.0, y=0.0, angle=0.0,
                 friction=0.8, group=0, static=False):
        self.bid = bid
        self.shape = shape
        self.x, self.y, self.angle = float(x), float(y), float(angle)
        self.vx = self.vy = self.w = 0.0
        self.friction = float(friction)
        self.group = group
        self.frozen_steps = 0
        if static:
            self.mass = math.inf
            self.inertia = math.inf
            self.inv_m = 0.0
            self.inv_i = 0.0
        else:
            if mass <= 0.0:
                raise ValueError("mass must be positive")
            self.mass = float(mass)
            self.inertia = shape.inertia(self.mass)
            self.inv_m = 1.0 / self.mass
            self.inv_i = 1.0 / self.inertia

    @property
    def quat(self) -> tuple[float, float, float, float]:
        """Unit quaternion about the out-of-plane axis, (w, x, y, z)."""
        h = 0.5 * self.angle
        return (math.cos(h), 0.0, 0.0, math.sin(h))

    def world_point(self, lx: float, ly: float) -> tuple[float, float]:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return (self.x + c * lx - s * ly, self.y + s * lx + c * ly)

    def aabb(self) -> tuple[float, float, float, float]:
        if isinstance(self.shape, Box):
            c, s = abs(math.cos(self.angle)), abs(math.sin(self.angle))
            ex = self.shape.hw * c + self.shape.hh * s
            ey = self.shape.hw * s + self.shape.hh * c
            return (self.x - ex, self.y - ey, self.x + ex, self.y + ey)
        sh = self.shape
        x1, y1 = self.world_point(sh.ax, sh.ay)
        x2, y2 = self.world_point(sh.bx, sh.by)
        r = sh.radius
        return (min(x1, x2) - r, min(y1, y2) - r, max(x1, x2) + r, max(y1, y2) + r)


class RevoluteJoint:
    """Pin joint between parent a and child b with optional angle limits.

    The joint angle is (b.angle - a.angle - ref_angle); PD gains and the
    torque clamp live here so actuation is a property of the joint.
    """

    __slots__ = ("a", "b", "lax", "lay", "lbx", "lby", "lo", "hi",
                 "kp", "kd", "max_torque", "ref_angle")

    def __init__(self, a, b, anchor_a, anchor_b, lo=None, hi=None,
                 kp=0.0, kd=0.0, max_torque=150.0, ref_angle=0.0):
        self.a, self.b = a, b
        self.lax, self.lay = float(anchor_a[0]), float(anchor_a[1])
        self.lbx, self.lby = float(anchor_b[0]), float(anchor_b[1])
        self.lo, self.hi = lo, hi
        if kp < 0.0 or kd < 0.0:
            raise ValueError("PD gains must be nonnegative")
        self.kp, self.kd = float(kp), float(kd)
        self.max_torque = float(max_torque)
        self.ref_angle = float(ref_angle)


class ContactPoint:
    __slots__ = ("body", "other", "px", "py", "nx", "ny",
                 "normal_impulse", "tangent_impulse", "mu")

    def __init__(self, body, other, px, py, nx, ny, normal_impulse,
                 tangent_impulse, mu):
        self.body = body
        self.other = other
        self.px, self.py = px, py
        self.nx, self.ny = nx, ny
        self.normal_impulse = normal_impulse
        self.tangent_impulse = tangent_impulse
        self.mu = mu


def pd_torque_value(angle, ang_vel, target_angle, target_vel, kp, kd,
                    max_torque) -> float:
    """tau = kp * wrap(target - angle) + kd * (target_vel - ang_vel), clamped."""
    tau = kp * wrap_angle(target_angle - angle) + kd * (target_vel - ang_vel)
    if tau > max_torque:
        return max_torque
    if tau < -max_torque:
        return -max_torque
    return tau


class _Contact:
    """Solver-side contact: one point, one normal, accumulated impulses."""

    __slots__ = ("a", "b", "px", "py", "nx", "ny", "pen",
                 "rax", "ray", "rbx", "rby", "kn", "kt", "bias", "mu",
                 "jn", "jt")

    def __init__(self, a, b, px, py, nx, ny, pen, mu):
        self.a, self.b = a, b  # a may be None for the ground
        self.px, self.py = px, py
        self.nx, self.ny = nx, ny
        self.pen = pen
        self.mu = mu
        self.jn = 0.0
        self.jt = 0.0


class World:
    def __init__(self, gravity=(0.0, -9.81), dt=DT, ground_y=0.0,
                 ground_friction=0.8, iterations=10, baumgarte=0.2,
                 contact_slop=1e-4):
        self.gx, self.gy = float(gravity[0]), float(gravity[1])
        self.dt = float(dt)
        self.ground_y = float(ground_y)
        self.ground_friction = float(ground_friction)
        self.iterations = int(iterations)
        self.baumgarte = float(baumgarte)
        self.contact_slop = float(contact_slop)
        self.bodies: list[Body] = []
        self.joints: list[RevoluteJoint] = []
        self.contacts: list[ContactPoint] = []
        self.step_count = 0
        self.ground_enabled = True
        self._joint_pairs: set[tuple[int, int]] = set()

    # -- construction ------------------------------------------------------

    def add_body(self, shape, mass, x=0.0, y=0.0, angle=0.0, friction=0.8,
                 group=0, static=False) -> int:
        bid = len(self.bodies)
        self.bodies.append(Body(bid, shape, mass, x, y, angle, friction,
                                group, static))
        return bid

    def add_joint(self, joint: RevoluteJoint) -> int:
        self.joints.append(joint)
        # jointed bodies never collide with each other
        self._joint_pairs.add((min(joint.a, joint.b), max(joint.a, joint.b)))
        return len(self.joints) - 1

    def spawn_box(self, size, density, position, velocity=(0.0, 0.0),
                  friction=0.8, group=0) -> int:
        """Add a box of the given density (kg/m^2 in the plane).

        A spawn that overlaps an existing dynamic body of another group is
        deferred by one step (the box is created now, frozen for one step).
        """
        if isinstance(size, (int, float)):
            w = h = float(size)
        else:
            w, h = float(size[0]), float(size[1])
        if w <= 0 or h <= 0 or density <= 0:
            raise ValueError("size and density must be positive")
        shape = Box(w / 2.0, h / 2.0)
        mass = density * w * h
        bid = self.add_body(shape, mass, position[0], position[1], 0.0,
                            friction=friction, group=group)
        body = self.bodies[bid]
        body.vx, body.vy = float(velocity[0]), float(velocity[1])
        lo0, lo1, hi0, hi1 = body.aabb()
        for other in self.bodies[:-1]:
            if other.inv_m == 0.0 or (other.group == group and group > 0):
                continue
            a0, a1, b0, b1 = other.aabb()
            if lo0 <= b0 and a0 <= hi0 and lo1 <= b1 and a1 <= hi1:
                body.frozen_steps = 1
                break
        return bid

    def set_ground_friction(self, mu: float) -> None:
        if mu < 0.0:
            raise ValueError("friction must be nonnegative")
        self.ground_friction = mu

    def clone(self) -> "World":
        return copy.deepcopy(self)

    # -- queries -----------------------------------------------------------

    def joint_angle(self, j: RevoluteJoint) -> float:
        return self.bodies[j.b].angle - self.bodies[j.a].angle - j.ref_angle

    def joint_velocity(self, j: RevoluteJoint) -> float:
        return self.bodies[j.b].w - self.bodies[j.a].w

    def pd_torque(self, joint_index: int, target_angle: float,
                  target_vel: float = 0.0) -> float:
        j = self.joints[joint_index]
        return pd_torque_value(self.joint_angle(j), self.joint_velocity(j),
                               target_angle, target_vel, j.kp, j.kd,
                               j.max_torque)

    def raycast(self, origin, direction, max_range=10.0):
        """Nearest hit among ground and bodies: (distance, body_id) or None."""
        ox, oy = float(origin[0]), float(origin[1])
        dx, dy = float(direction[0]), float(direction[1])
        norm = math.hypot(dx, dy)
        if norm == 0.0:
            raise ValueError("ray direction must be nonzero")
        dx, dy = dx / norm, dy / norm
        best = None
        if self.ground_enabled and dy < 0.0 and oy > self.ground_y:
            t = (self.ground_y - oy) / dy
            if 0.0 <= t <= max_range:
                best = (t, GROUND_ID)
        for body in self.bodies:
            if body.frozen_steps > 0:
                continue
            t = _ray_body(ox, oy, dx, dy, body)
            if t is not None and 0.0 <= t <= max_range:
                if best is None or t < best[0]:
                    best = (t, body.bid)
        return best

    # -- stepping ----------------------------------------------------------

    def pd_torques(self, targets) -> list[float]:
        """PD torques for every joint toward the given target angles."""
        out = []
        bodies = self.bodies
        for j, tgt in zip(self.joints, targets):
            ba, bb = bodies[j.a], bodies[j.b]
            tau = j.kp * wrap_angle(tgt - (bb.angle - ba.angle - j.ref_angle)) \
                + j.kd * (ba.w - bb.w)
            mt = j.max_torque
            out.append(mt if tau > mt else (-mt if tau < -mt else tau))
        return out

    def step(self, torques=None) -> None:
        """Advance one dt with the given per-joint torques (N*m)."""
        dt = self.dt
        bodies = self.bodies
        njoints = len(self.joints)
        if torques is None:
            torques = (0.0,) * njoints
        if len(torques) != njoints:
            raise ValueError("need one torque per joint")

        for body in bodies:
            if body.frozen_steps > 0:
                body.frozen_steps -= 1

        # integrate forces
        for body in bodies:
            if body.inv_m != 0.0 and body.frozen_steps == 0:
                body.vx += dt * self.gx
                body.vy += dt * self.gy
        for j, tau in zip(self.joints, torques):
            mt = j.max_torque
            if tau > mt:
                tau = mt
            elif tau < -mt:
                tau = -mt
            ba, bb = bodies[j.a], bodies[j.b]
            ba.w -= dt * tau * ba.inv_i
            bb.w += dt * tau * bb.inv_i

        trig = [(math.cos(b.angle), math.sin(b.angle)) for b in bodies]
        contacts = self._collide(trig)
        jdata = self._prepare_joints(trig)
        ldata = self._prepare_limits()
        self._prepare_contacts(contacts)

        for _ in range(self.iterations):
            self._solve_joints(jdata)
            self._solve_limits(ldata)
            self._solve_contacts(contacts)
        self._finalize_friction(contacts)

        # integrate positions
        for body in bodies:
            if body.inv_m != 0.0 and body.frozen_steps == 0:
                body.x += dt * body.vx
                body.y += dt * body.vy
                body.angle += dt * body.w

        self.step_count += 1

        for body in bodies:
            if not (math.isfinite(body.x) and math.isfinite(body.y)
                    and math.isfinite(body.angle) and math.isfinite(body.vx)
                    and math.isfinite(body.vy) and math.isfinite(body.w)):
                raise SimulationDiverged(self.step_count)

        self.contacts = [
            ContactPoint(c.b.bid, (c.a.bid if c.a is not None else GROUND_ID),
                         c.px, c.py, c.nx, c.ny, c.jn, c.jt, c.mu)
            for c in contacts
        ]

    # -- collision detection -------------------------------------------------

    def _collide(self, trig) -> list[_Contact]:
        out: list[_Contact] = []
        g = self.ground_y
        ground_mu = self.ground_friction
        if self.ground_enabled:
            for body, (c, s) in zip(self.bodies, trig):
                if body.inv_m == 0.0 or body.frozen_steps > 0:
                    continue
                mu = min(body.friction, ground_mu)
                sh = body.shape
                bx, by = body.x, body.y
                if isinstance(sh, Capsule):
                    r = sh.radius
                    for lx, ly in ((sh.ax, sh.ay), (sh.bx, sh.by)):
                        py = by + s * lx + c * ly
                        pen = g + r - py
                        if pen > 0.0:
                            out.append(_Contact(None, body,
                                                bx + c * lx - s * ly,
                                                py - r, 0.0, 1.0, pen, mu))
                else:
                    for sx in (-1.0, 1.0):
                        for sy in (-1.0, 1.0):
                            lx, ly = sx * sh.hw, sy * sh.hh
                            py = by + s * lx + c * ly
                            pen = g - py
                            if pen > 0.0:
                                out.append(_Contact(None, body,
                                                    bx + c * lx - s * ly,
                                                    py, 0.0, 1.0, pen, mu))
        n = len(self.bodies)
        aabbs = [b.aabb() for b in self.bodies]
        for i in range(n):
            a = self.bodies[i]
            if a.frozen_steps > 0:
                continue
            abox = aabbs[i]
            for k in range(i + 1, n):
                b = self.bodies[k]
                if b.frozen_steps > 0:
                    continue
                if a.inv_m == 0.0 and b.inv_m == 0.0:
                    continue
                if a.group > 0 and a.group == b.group:
                    continue
                if (i, k) in self._joint_pairs:
                    continue
                bbox = aabbs[k]
                if (abox[2] < bbox[0] or bbox[2] < abox[0]
                        or abox[3] < bbox[1] or bbox[3] < abox[1]):
                    continue
                self._narrow(a, b, out)
        return out

    def _narrow(self, a: Body, b: Body, out: list[_Contact]) -> None:
        mu = min(a.friction, b.friction)
        sa, sb = a.shape, b.shape
        if isinstance(sa, Box) and isinstance(sb, Box):
            _box_box(a, b, mu, out)
        elif isinstance(sa, Box) and isinstance(sb, Capsule):
            _box_capsule(a, b, mu, out)
        elif isinstance(sa, Capsule) and isinstance(sb, Box):
            _box_capsule(b, a, mu, out)
        else:
            _capsule_capsule(a, b, mu, out)

    # -- constraint preparation & solving ------------------------------------

    def _prepare_contacts(self, contacts: list[_Contact]) -> None:
        beta_dt = self.baumgarte / self.dt
        slop = self.contact_slop
        for c in contacts:
            b = c.b
            a = c.a
            c.rbx, c.rby = c.px - b.x, c.py - b.y
            if a is not None:
                c.rax, c.ray = c.px - a.x, c.py - a.y
            else:
                c.rax = c.ray = 0.0
            ima = a.inv_m if a is not None else 0.0
            iia = a.inv_i if a is not None else 0.0
            rncb = c.rbx * c.ny - c.rby * c.nx
            rnca = c.rax * c.ny - c.ray * c.nx
            c.kn = 1.0 / (b.inv_m + ima + b.inv_i * rncb * rncb
                          + iia * rnca * rnca)
            tx, ty = -c.ny, c.nx
            rtcb = c.rbx * ty - c.rby * tx
            rtca = c.rax * ty - c.ray * tx
            c.kt = 1.0 / (b.inv_m + ima + b.inv_i * rtcb * rtcb
                          + iia * rtca * rtca)
            pen = c.pen - slop
            c.bias = beta_dt * pen if pen > 0.0 else 0.0

    def _solve_contacts(self, contacts: list[_Contact]) -> None:
        for c in contacts:
            b = c.b
            a = c.a
            nx, ny = c.nx, c.ny
            rbx, rby = c.rbx, c.rby
            imb, iib = b.inv_m, b.inv_i
            # relative velocity at the contact point (b relative to a)
            vx = b.vx - b.w * rby
            vy = b.vy + b.w * rbx
            if a is not None:
                rax, ray = c.rax, c.ray
                ima, iia = a.inv_m, a.inv_i
                vx -= a.vx - a.w * ray
                vy -= a.vy + a.w * rax
            vn = vx * nx + vy * ny
            jn0 = c.jn
            jn = jn0 - (vn - c.bias) * c.kn
            if jn < 0.0:
                jn = 0.0
            c.jn = jn
            djn = jn - jn0
            px, py = djn * nx, djn * ny
            b.vx += imb * px
            b.vy += imb * py
            b.w += iib * (rbx * py - rby * px)
            if a is not None:
                a.vx -= ima * px
                a.vy -= ima * py
                a.w -= iia * (rax * py - ray * px)

            vx = b.vx - b.w * rby
            vy = b.vy + b.w * rbx
            if a is not None:
                vx -= a.vx - a.w * ray
                vy -= a.vy + a.w * rax
            vt = -vx * ny + vy * nx
            max_f = c.mu * jn
            jt0 = c.jt
            jt = jt0 - vt * c.kt
            if jt > max_f:
                jt = max_f
            elif jt < -max_f:
                jt = -max_f
            c.jt = jt
            djt = jt - jt0
            px, py = -djt * ny, djt * nx
            b.vx += imb * px
            b.vy += imb * py
            b.w += iib * (rbx * py - rby * px)
            if a is not None:
                a.vx -= ima * px
                a.vy -= ima * py
                a.w -= iia * (rax * py - ray * px)

    def _finalize_friction(self, contacts: list[_Contact]) -> None:
        # The normal impulse may shrink after a tangent clamp was computed;
        # re-clamp so the cone |jt| <= mu*jn holds exactly at step end.
        for c in contacts:
            max_f = c.mu * c.jn
            if c.jt > max_f or c.jt < -max_f:
                jt_new = max_f if c.jt > 0.0 else -max_f
                djt = jt_new - c.jt
                c.jt = jt_new
                tx, ty = -c.ny, c.nx
                px, py = djt * tx, djt * ty
                b, a = c.b, c.a
                b.vx += b.inv_m * px
                b.vy += b.inv_m * py
                b.w += b.inv_i * (c.rbx * py - c.rby * px)
                if a is not None:
                    a.vx -= a.inv_m * px
                    a.vy -= a.inv_m * py
                    a.w -= a.inv_i * (c.rax * py - c.ray * px)

    def _prepare_joints(self, trig):
        beta_dt = self.baumgarte / self.dt
        data = []
        for j in self.joints:
            a, b = self.bodies[j.a], self.bodies[j.b]
            ca, sa_ = trig[j.a]
            cb, sb_ = trig[j.b]
            pax = a.x + ca * j.lax - sa_ * j.lay
            pay = a.y + sa_ * j.lax + ca * j.lay
            pbx = b.x + cb * j.lbx - sb_ * j.lby
            pby = b.y + sb_ * j.lbx + cb * j.lby
            cx = pbx - pax
            cy = pby - pay
            # impulses act at the anchor midpoint: a single application
            # point keeps the pair's angular momentum exact
            mx, my = 0.5 * (pax + pbx), 0.5 * (pay + pby)
            rax, ray = mx - a.x, my - a.y
            rbx, rby = mx - b.x, my - b.y
            ima, iia = a.inv_m, a.inv_i
            imb, iib = b.inv_m, b.inv_i
            k11 = ima + imb + iia * ray * ray + iib * rby * rby
            k12 = -iia * rax * ray - iib * rbx * rby
            k22 = ima + imb + iia * rax * rax + iib * rbx * rbx
            det = k11 * k22 - k12 * k12
            inv_det = 1.0 / det if det != 0.0 else 0.0
            data.append((a, b, rax, ray, rbx, rby,
                         beta_dt * cx, beta_dt * cy,
                         k22 * inv_det, k12 * inv_det, k11 * inv_det,
                         ima, iia, imb, iib))
        return data

    def _solve_joints(self, data) -> None:
        for (a, b, rax, ray, rbx, rby, bx, by, m11, m12, m22,
             ima, iia, imb, iib) in data:
            aw = a.w
            bw = b.w
            vx = (b.vx - bw * rby) - (a.vx - aw * ray) + bx
            vy = (b.vy + bw * rbx) - (a.vy + aw * rax) + by
            px = -(m11 * vx - m12 * vy)
            py = -(m22 * vy - m12 * vx)
            a.vx -= ima * px
            a.vy -= ima * py
            a.w = aw - iia * (rax * py - ray * px)
            b.vx += imb * px
            b.vy += imb * py
            b.w = bw + iib * (rbx * py - rby * px)

    def _prepare_limits(self):
        beta_dt = self.baumgarte / self.dt
        data = []
        for j in self.joints:
            if j.lo is None and j.hi is None:
                continue
            a, b = self.bodies[j.a], self.bodies[j.b]
            theta = b.angle - a.angle - j.ref_angle
            k = a.inv_i + b.inv_i
            if k == 0.0:
                continue
            if j.lo is not None and theta < j.lo:
                data.append([a, b, 1.0, beta_dt * (j.lo - theta), 1.0 / k, 0.0])
            elif j.hi is not None and theta > j.hi:
                data.append([a, b, -1.0, beta_dt * (theta - j.hi), 1.0 / k, 0.0])
        return data

    def _solve_limits(self, data) -> None:
        # side=+1: push joint open (relative w up); side=-1: push closed.
        for row in data:
            a, b, side, bias, inv_k, acc = row
            jv = side * (b.w - a.w)
            dl = (bias - jv) * inv_k
            new_acc = acc + dl
            if new_acc < 0.0:
                new_acc = 0.0
            dl = new_acc - acc
            row[5] = new_acc
            imp = side * dl
            a.w -= a.inv_i * imp
            b.w += b.inv_i * imp


# ---------------------------------------------------------------------------
# narrowphase helpers
# ---------------------------------------------------------------------------

def _box_box(a: Body, b: Body, mu: float, out: list[_Contact]) -> None:
    # vertex-in-box both ways; normal points from the face owner outward,
    # which always pushes the vertex owner out of the overlap
    _box_corners_in(b, a, mu, out)
    _box_corners_in(a, b, mu, out)


def _box_corners_in(vert_body: Body, face_body: Body, mu: float,
                    out: list[_Contact]) -> None:
    fb = face_body
    sh = fb.shape
    c, s = math.cos(fb.angle), math.sin(fb.angle)
    vsh = vert_body.shape
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            px, py = vert_body.world_point(sx * vsh.hw, sy * vsh.hh)
            dx, dy = px - fb.x, py - fb.y
            lx = c * dx + s * dy
            ly = -s * dx + c * dy
            if abs(lx) <= sh.hw and abs(ly) <= sh.hh:
                pen_x = sh.hw - abs(lx)
                pen_y = sh.hh - abs(ly)
                if pen_x < pen_y:
                    nlx, nly, pen = (1.0 if lx > 0 else -1.0), 0.0, pen_x
                else:
                    nlx, nly, pen = 0.0, (1.0 if ly > 0 else -1.0), pen_y
                nx = c * nlx - s * nly
                ny = s * nlx + c * nly
                out.append(_Contact(face_body, vert_body, px, py, nx, ny,
                                    pen, mu))


def _box_capsule(box: Body, cap: Body, mu: float, out: list[_Contact]) -> None:
    sh = cap.shape
    e1 = cap.world_point(sh.ax, sh.ay)
    e2 = cap.world_point(sh.bx, sh.by)
    # closest point on the capsule core segment to the box center
    ex, ey = e2[0] - e1[0], e2[1] - e1[1]
    ll = ex * ex + ey * ey
    if ll > 0.0:
        t = ((box.x - e1[0]) * ex + (box.y - e1[1]) * ey) / ll
        t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    else:
        t = 0.0
    cx, cy = e1[0] + t * ex, e1[1] + t * ey
    _circle_box(cx, cy, sh.radius, box, cap, mu, out)


def _circle_box(cx, cy, radius, box: Body, other: Body, mu,
                out: list[_Contact]) -> None:
    sh = box.shape
    c, s = math.cos(box.angle), math.sin(box.angle)
    dx, dy = cx - box.x, cy - box.y
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    qx = max(-sh.hw, min(sh.hw, lx))
    qy = max(-sh.hh, min(sh.hh, ly))
    if qx == lx and qy == ly:
        # center inside the box: push along the least-penetration face
        pen_x = sh.hw - abs(lx)
        pen_y = sh.hh - abs(ly)
        if pen_x < pen_y:
            nlx, nly = (1.0 if lx > 0 else -1.0), 0.0
            pen = radius + pen_x
            qx, qy = nlx * sh.hw, ly
        else:
            nlx, nly = 0.0, (1.0 if ly > 0 else -1.0)
            pen = radius + pen_y
            qx, qy = lx, nly * sh.hh
    else:
        ddx, ddy = lx - qx, ly - qy
        dist = math.hypot(ddx, ddy)
        if dist >= radius or dist == 0.0:
            return
        nlx, nly = ddx / dist, ddy / dist
        pen = radius - dist
    nx = c * nlx - s * nly
    ny = s * nlx + c * nly
    px = box.x + c * qx - s * qy
    py = box.y + s * qx + c * qy
    out.append(_Contact(box, other, px, py, nx, ny, pen, mu))


def _capsule_capsule(a: Body, b: Body, mu: float, out: list[_Contact]) -> None:
    sa, sb = a.shape, b.shape
    p1 = a.world_point(sa.ax, sa.ay)
    p2 = a.world_point(sa.bx, sa.by)
    q1 = b.world_point(sb.ax, sb.ay)
    q2 = b.world_point(sb.bx, sb.by)
    (cax, cay), (cbx, cby) = _closest_segment_points(p1, p2, q1, q2)
    dx, dy = cbx - cax, cby - cay
    dist = math.hypot(dx, dy)
    rsum = sa.radius + sb.radius
    if dist >= rsum:
        return
    if dist > 1e-12:
        nx, ny = dx / dist, dy / dist
    else:
        nx, ny = 0.0, 1.0
    px, py = cax + nx * sa.radius, cay + ny * sa.radius
    out.append(_Contact(a, b, px, py, nx, ny, rsum - dist, mu))


def _closest_segment_points(p1, p2, q1, q2):
    # standard segment-segment closest points, clamped parametrization
    d1x, d1y = p2[0] - p1[0], p2[1] - p1[1]
    d2x, d2y = q2[0] - q1[0], q2[1] - q1[1]
    rx, ry = p1[0] - q1[0], p1[1] - q1[1]
    a = d1x * d1x + d1y * d1y
    e = d2x * d2x + d2y * d2y
    f = d2x * rx + d2y * ry
    if a <= 1e-12 and e <= 1e-12:
        return p1, q1
    if a <= 1e-12:
        s = 0.0
        t = max(0.0, min(1.0, f / e))
    else:
        c = d1x * rx + d1y * ry
        if e <= 1e-12:
            t = 0.0
            s = max(0.0, min(1.0, -c / a))
        else:
            bb = d1x * d2x + d1y * d2y
            denom = a * e - bb * bb
            s = max(0.0, min(1.0, (bb * f - c * e) / denom)) if denom != 0.0 else 0.0
            t = (bb * s + f) / e
            if t < 0.0:
                t = 0.0
                s = max(0.0, min(1.0, -c / a))
            elif t > 1.0:
                t = 1.0
                s = max(0.0, min(1.0, (bb - c) / a))
    return ((p1[0] + d1x * s, p1[1] + d1y * s),
            (q1[0] + d2x * t, q1[1] + d2y * t))


# ---------------------------------------------------------------------------
# raycast helpers
# ---------------------------------------------------------------------------

def _ray_body(ox, oy, dx, dy, body: Body):
    sh = body.shape
    if isinstance(sh, Box):
        return _ray_obb(ox, oy, dx, dy, body.x, body.y, body.angle,
                        sh.hw, sh.hh)
    e1 = body.world_point(sh.ax, sh.ay)
    e2 = body.world_point(sh.bx, sh.by)
    best = None
    for (cx, cy) in (e1, e2):
        t = _ray_circle(ox, oy, dx, dy, cx, cy, sh.radius)
        if t is not None and (best is None or t < best):
            best = t
    # rectangle part of the capsule, aligned with the core segment
    sx, sy = e2[0] - e1[0], e2[1] - e1[1]
    ln = math.hypot(sx, sy)
    if ln > 1e-12:
        mx, my = (e1[0] + e2[0]) / 2.0, (e1[1] + e2[1]) / 2.0
        ang = math.atan2(sy, sx)
        t = _ray_obb(ox, oy, dx, dy, mx, my, ang, ln / 2.0, sh.radius)
        if t is not None and (best is None or t < best):
            best = t
    return best


def _ray_circle(ox, oy, dx, dy, cx, cy, r):
    fx, fy = ox - cx, oy - cy
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - r * r
    disc = b * b - c
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    t = -b - sq
    if t < 0.0:
        t = -b + sq
    return t if t >= 0.0 else None


def _ray_obb(ox, oy, dx, dy, bx, by, angle, hw, hh):
    c, s = math.cos(angle), math.sin(angle)
    rx, ry = ox - bx, oy - by
    lox = c * rx + s * ry
    loy = -s * rx + c * ry
    ldx = c * dx + s * dy
    ldy = -s * dx + c * dy
    tmin, tmax = -math.inf, math.inf
    for o, d, h in ((lox, ldx, hw), (loy, ldy, hh)):
        if abs(d) < 1e-12:
            if abs(o) > h:
                return None
        else:
            t1, t2 = (-h - o) / d, (h - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            tmin = max(tmin, t1)
            tmax = min(tmax, t2)
            if tmin > tmax:
                return None
    if tmax < 0.0:
        return None
    return tmin if tmin >= 0.0 else tmax
