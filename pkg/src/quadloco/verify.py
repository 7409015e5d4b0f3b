"""Fast verification suites: oracles and invariant checks.

Each suite returns a list of (name, passed, detail) rows. The CLI `verify`
subcommand runs them on a fresh checkout; the acceptance tests assert them.
Oracles here are deliberately independent of the implementation paths they
check (grid quadrature instead of the closed form, finite differences
instead of backprop, brute-force sums instead of recursions).
"""

from __future__ import annotations

import math
import time

import numpy as np

Row = tuple[str, bool, str]


# ---------------------------------------------------------------------------
# composition: closed form vs grid-normalized product of Gaussians
# ---------------------------------------------------------------------------

def grid_product_moments(w, mus, sigma2, points: int = 4001, span: float = 10.0):
    """Mean/variance of prod_i N(mu_i, sigma^2)^{w_i}, one dim at a time.

    Diagonal covariances factorize the product across dimensions, so each
    dimension is normalized independently on a 1-D grid. Two passes: a
    coarse sweep locates the product's support (it can be much narrower
    than any single factor), then a fine grid resolves it.
    """
    w = np.asarray(w, dtype=np.float64)
    mus = np.asarray(mus, dtype=np.float64)
    k, dims = mus.shape
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), (dims,))
    mean = np.zeros(dims)
    var = np.zeros(dims)
    total_w = float(w.sum())
    for d in range(dims):
        sd = math.sqrt(sigma2[d])
        # the product can be wider than any factor when influences are
        # small; size the window by the flattest possible composite
        reach = span * sd * max(1.0, 1.0 / math.sqrt(min(total_w, 1.0)))
        lo = mus[:, d].min() - reach
        hi = mus[:, d].max() + reach

        def logp_of(xs):
            out = np.zeros_like(xs)
            for i in range(k):
                out += w[i] * (-0.5 * (xs - mus[i, d]) ** 2 / sigma2[d]
                               - 0.5 * math.log(2.0 * math.pi * sigma2[d]))
            return out

        coarse = np.linspace(lo, hi, points)
        lp = logp_of(coarse)
        keep = lp > lp.max() - 40.0
        lo2, hi2 = coarse[keep].min(), coarse[keep].max()
        pad = max(coarse[1] - coarse[0], 1e-6)
        xs = np.linspace(lo2 - pad, hi2 + pad, points)
        lp = logp_of(xs)
        p = np.exp(lp - lp.max())
        p /= np.trapezoid(p, xs)
        mean[d] = np.trapezoid(p * xs, xs)
        var[d] = np.trapezoid(p * (xs - mean[d]) ** 2, xs)
    return mean, var


def composition_suite(cases: int = 200, seed: int = 2024) -> list[Row]:
    from .policy import compose

    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst_mean = 0.0
    worst_var = 0.0
    for _ in range(cases):
        k = int(rng.integers(1, 9))
        dims = int(rng.integers(1, 5))
        w = rng.uniform(0.05, 3.0, size=k)
        mus = rng.normal(0.0, 1.0, size=(k, dims))
        sigma2 = rng.uniform(0.01, 0.5, size=dims)
        cg = compose(w, mus, sigma2)
        gm, gv = grid_product_moments(w, mus, sigma2)
        worst_mean = max(worst_mean, float(np.abs(cg.mean - gm).max()))
        worst_var = max(worst_var, float(np.abs(cg.var - gv).max() / gv.max()))
    dt = time.perf_counter() - t0
    return [
        ("compose mean vs grid oracle",
         worst_mean < 1e-6, f"max abs err {worst_mean:.2e} over {cases} cases"),
        ("compose variance vs grid oracle",
         worst_var < 1e-5, f"max rel err {worst_var:.2e}"),
        ("composition suite runtime", dt < 30.0, f"{dt:.1f} s"),
    ]


# ---------------------------------------------------------------------------
# gradients: every loss in the system vs central finite differences
# ---------------------------------------------------------------------------

def gradient_suite(draws: int = 100, seed: int = 7, rel_tol: float = 1e-4,
                   abs_tol: float = 1e-7) -> list[Row]:
    from .adapter import GANConfig, build_discriminator, d_loss, g_loss
    from .nets import finite_diff_grad, grad_errors, mlp
    from .policy import CompositePolicy, build_gating, build_primitive
    from .training.ppo import l_reg, l_reg_grads, ppo_surrogate, value_loss

    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    rows: list[Row] = []

    def check(name, worst):
        rows.append((f"{name} gradient vs finite differences",
                     worst[0] < rel_tol and worst[1] < abs_tol,
                     f"rel {worst[0]:.2e} abs {worst[1]:.2e} over {draws} draws"))

    # PPO surrogate through gate/compose/primitives
    worst = (0.0, 0.0)
    for _ in range(draws):
        g = build_gating(4, 2, rng, hidden=(6,), k=3)
        p = build_primitive(4, rng, hidden=(8,), k=3, action_dim=2)
        policy = CompositePolicy(g, p, k=3, action_dim=2)
        xg = rng.normal(size=(4, 6))
        xp = rng.normal(size=(4, 4))
        a = np.stack([policy.distribution(xg[i], xp[i]).mean
                      + 0.2 * rng.standard_normal(2) for i in range(4)])
        old_logp, _ = policy.logp_batch(xg, xp, a)
        old_logp = old_logp + 0.05 * rng.standard_normal(4)
        adv = rng.normal(size=4)

        def loss(_):
            s, _, _ = ppo_surrogate(policy, xg, xp, a, old_logp, adv, 0.2)
            return s

        _, grads, _ = ppo_surrogate(policy, xg, xp, a, old_logp, adv, 0.2)
        for name, net in (("gating", g), ("primitive", p)):
            err = grad_errors(grads[name], finite_diff_grad(loss, net, 1e-6))
            worst = (max(worst[0], err[0]), max(worst[1], err[1]))
    check("PPO surrogate", worst)

    # value regression
    worst = (0.0, 0.0)
    for _ in range(draws):
        v = mlp(5, [6], 1, rng, hidden_act="tanh")
        x = rng.normal(size=(6, 5))
        t = rng.normal(size=6)

        def loss(net):
            out, _ = net.forward(x)
            d = out[:, 0] - t
            return 0.5 * float(np.mean(d * d))

        _, grads = value_loss(v, x, t)
        err = grad_errors(grads, finite_diff_grad(loss, v, 1e-6))
        worst = (max(worst[0], err[0]), max(worst[1], err[1]))
    check("value loss", worst)

    # discriminator loss. Central differences at f64 carry ~1e-11 noise on
    # this loss's scale, so gradient entries below 2e-7 can only be
    # compared absolutely; larger steps are no help here because they
    # straddle the leaky-relu kinks instead.
    worst = (0.0, 0.0)
    for _ in range(draws):
        d = build_discriminator(3, rng, hidden=6)
        wr = rng.normal(0.7, 0.3, size=(5, 3))
        wf = rng.normal(0.5, 0.3, size=(5, 3))

        def loss(net):
            val, _ = d_loss(net, wr, wf)
            return val

        _, grads = d_loss(d, wr, wf)
        err = grad_errors(grads, finite_diff_grad(loss, d, 1e-5),
                          abs_floor=2e-7)
        worst = (max(worst[0], err[0]), max(worst[1], err[1]))
    check("discriminator loss", worst)

    # generator loss (adversarial + L1)
    worst = (0.0, 0.0)
    cfgan = GANConfig(lambda_rec=2.0, lambda_adv=1.0)
    for _ in range(draws):
        gen = build_gating(4, 2, rng, hidden=(6,), k=3)
        disc = build_discriminator(3, rng, hidden=6)
        x = rng.normal(size=(5, 6))
        wr = np.abs(rng.normal(0.7, 0.3, size=(5, 3)))

        def loss(net):
            val, _, _ = g_loss(net, disc, x, wr, cfgan)
            return val

        _, grads, _ = g_loss(gen, disc, x, wr, cfgan)
        err = grad_errors(grads, finite_diff_grad(loss, gen, 1e-6))
        worst = (max(worst[0], err[0]), max(worst[1], err[1]))
    check("generator loss", worst)

    # parameter-space regularizer
    worst = (0.0, 0.0)
    for _ in range(draws):
        net = mlp(3, [4], 2, rng)
        anchor = mlp(3, [4], 2, rng)

        def loss(n):
            return l_reg(n, anchor)

        grads = l_reg_grads(net, anchor)
        err = grad_errors(grads, finite_diff_grad(loss, net, 1e-6))
        worst = (max(worst[0], err[0]), max(worst[1], err[1]))
    check("parameter regularizer", worst)

    dt = time.perf_counter() - t0
    rows.append(("gradient suite runtime", dt < 120.0, f"{dt:.1f} s"))
    return rows


# ---------------------------------------------------------------------------
# reward constants
# ---------------------------------------------------------------------------

def reward_value_suite() -> list[Row]:
    from . import refmotion as rm
    from . import rewards as rw
    from .model import heading_vector

    clip = rm.make_pace_clip(2.0, 1.0)
    ref = clip.frames[20]
    rows: list[Row] = []

    s = ref.copy()
    s.contacts = 1.0 - ref.contacts
    val = rw.r_contact(s, ref)
    rows.append(("contact reward, all four mismatched",
                 abs(val - math.exp(-5.0)) <= 1e-7,
                 f"{val:.7e} vs exp(-5)={math.exp(-5.0):.7e}"))

    val = rw.r_speed(2.0, np.array([1.0, 0.0, 0.0]))
    rows.append(("speed reward at 1 m/s error",
                 abs(val - math.exp(-0.8)) <= 1e-5,
                 f"{val:.5f} vs exp(-0.8)={math.exp(-0.8):.5f}"))

    v = np.append(heading_vector(0.3 + math.pi / 2), 0.0)
    val = rw.r_heading(0.3, v)
    rows.append(("heading reward, perpendicular velocity",
                 val == 0.5, f"{val!r}"))

    val = rw.r_imitation(ref, ref)
    rows.append(("imitation reward, perfect match", val == 1.0, f"{val!r}"))
    return rows


# ---------------------------------------------------------------------------
# physics sanity
# ---------------------------------------------------------------------------

def physics_suite() -> list[Row]:
    from .physics import Box, Capsule, DT, RevoluteJoint, World

    rows: list[Row] = []

    w = World(ground_y=-100.0)
    bid = w.add_body(Box(0.1, 0.1), mass=1.0, y=0.0)
    n = 1200
    for _ in range(n):
        w.step()
    expected = -9.81 * DT * DT * (n * (n + 1) / 2)
    err = abs(w.bodies[bid].y - expected)
    rows.append(("projectile drop vs discrete closed form", err < 1e-6,
                 f"error {err:.2e} m after 1 s"))

    w = World()
    ids = [w.add_body(Box(0.15, 0.1), mass=1.0 + i, x=0.35 * i, y=0.3 + 0.2 * i)
           for i in range(4)]
    w.bodies[ids[0]].vx = 1.5
    violations = 0
    contact_steps = 0
    for _ in range(10_000):
        w.step()
        for c in w.contacts:
            contact_steps += 1
            if abs(c.tangent_impulse) > c.mu * c.normal_impulse + 1e-12 \
                    or c.normal_impulse < 0.0:
                violations += 1
    rows.append(("friction cone over 1e4 steps",
                 violations == 0 and contact_steps > 10_000,
                 f"{violations} violations across {contact_steps} contacts"))

    w = World(ground_y=-50.0)
    anchor = w.add_body(Box(0.05, 0.05), mass=1.0, x=0.0, y=2.0, static=True)
    b1 = w.add_body(Capsule(0.0, 0.25, 0.0, -0.25, 0.02), mass=1.0)
    w.bodies[b1].angle = 1.2
    w.bodies[b1].x = 0.25 * math.sin(1.2)
    w.bodies[b1].y = 2.0 - 0.25 * math.cos(1.2)
    b2 = w.add_body(Capsule(0.0, 0.25, 0.0, -0.25, 0.02), mass=0.7)
    tipx = w.bodies[b1].x + 0.25 * math.sin(1.2)
    tipy = w.bodies[b1].y - 0.25 * math.cos(1.2)
    w.bodies[b2].angle = 0.4
    w.bodies[b2].x = tipx + 0.25 * math.sin(0.4)
    w.bodies[b2].y = tipy - 0.25 * math.cos(0.4)
    w.add_joint(RevoluteJoint(anchor, b1, (0.0, 0.0), (0.0, 0.25)))
    w.add_joint(RevoluteJoint(b1, b2, (0.0, -0.25), (0.0, 0.25)))

    def energy():
        e = 0.0
        for i in (b1, b2):
            b = w.bodies[i]
            e += 0.5 * b.mass * (b.vx ** 2 + b.vy ** 2) \
                + 0.5 * b.inertia * b.w ** 2 + b.mass * 9.81 * b.y
        return e

    e0 = energy()
    worst = 0.0
    for _ in range(12_000):
        w.step((0.0, 0.0))
        worst = max(worst, abs(energy() - e0))
    rows.append(("double pendulum energy drift over 10 s",
                 worst / abs(e0) < 0.02,
                 f"max drift {100 * worst / abs(e0):.2f}% of initial"))
    return rows


# ---------------------------------------------------------------------------
# navigation and metric self-checks
# ---------------------------------------------------------------------------

def navigation_suite(grids: int = 50, seed: int = 11) -> list[Row]:
    from . import nav

    rng = np.random.default_rng(seed)
    mismatches = 0
    solved = 0
    for _ in range(grids):
        cells = rng.random((32, 32)) < 0.3
        rows_txt = ["".join("#" if c else "." for c in row) for row in cells]
        rows_txt[0] = "S" + rows_txt[0][1:]
        rows_txt[-1] = rows_txt[-1][:-1] + "G"
        g = nav.GridMap(rows_txt)
        oracle = nav.bfs_path_cost(g, (0, 0), (31, 31))
        path = nav.astar(g, (0, 0), (31, 31))
        if oracle is None:
            if path is not None:
                mismatches += 1
            continue
        solved += 1
        if path is None or len(path) - 1 != oracle:
            mismatches += 1
    rows: list[Row] = [(f"astar vs BFS oracle on {grids} random 32x32 grids",
                        mismatches == 0,
                        f"{mismatches} mismatches, {solved} solvable")]

    replay_ok = True
    worst_miss = 0.0
    for s in range(4):
        rng2 = np.random.default_rng(100 + s)
        cells = rng2.random((16, 16)) < 0.25
        rows_txt = ["".join("#" if c else "." for c in row) for row in cells]
        rows_txt[0] = "S" + rows_txt[0][1:]
        rows_txt[-1] = rows_txt[-1][:-1] + "G"
        g = nav.GridMap(rows_txt)
        path = nav.astar(g, (0, 0), (15, 15))
        if path is None or len(path) < 2:
            continue
        seq = nav.path_to_commands(path, 1.0, g.cell_size)
        h0 = nav._DIR_HEADING[(path[1][0] - path[0][0],
                               path[1][1] - path[0][1])]
        pts, _ = nav.replay_commands(seq, nav.cell_center(path[0]), h0)
        pts = np.array(pts)
        for cell in path:
            cx, cy = nav.cell_center(cell, g.cell_size)
            miss = float(np.min(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)))
            worst_miss = max(worst_miss, miss)
            if miss > 0.5 * g.cell_size:
                replay_ok = False
    rows.append(("command replay visits every path cell",
                 replay_ok, f"worst miss {worst_miss:.3f} cells"))
    return rows


def metrics_suite() -> list[Row]:
    from . import evalsuite as ev
    from . import refmotion as rm
    from .model import QuadrupedConfig

    rows: list[Row] = []
    clip = rm.make_pace_clip(3.0, 1.0)
    rec = ev.Recording(states=list(clip.frames), commands=[],
                       metadata={"gait": "pace", "target_speed": 1.0})
    mse = ev.speed_mse([rec, rec])["pace"][0]
    rows.append(("speed MSE self-comparison", mse < 1e-12, f"{mse:.2e}"))

    iou = ev.end_effector_iou(clip.frames, clip.frames, QuadrupedConfig())
    rows.append(("end-effector IoU self-comparison", iou["average"] == 1.0,
                 f"average {iou['average']}"))

    ang, pos = ev.heading_deviation(rec, rec.headings(), rec.com_track())
    rows.append(("heading deviation self-comparison",
                 ang == 0.0 and pos == 0.0, f"({ang}, {pos})"))

    rng = np.random.default_rng(0)
    t = np.linspace(0, 2 * math.pi, 400, endpoint=False)
    circle = np.stack([np.cos(t), np.sin(t)], axis=1)
    basis = np.linalg.qr(rng.normal(size=(10, 2)))[0]
    cloud = circle @ basis.T + 1e-6 * rng.normal(size=(400, 10))
    _, frac = ev.pca_project(cloud)
    rows.append(("PCA top-2 explained variance on 10-D circle",
                 float(frac.sum()) > 0.999, f"{float(frac.sum()):.6f}"))
    return rows


def fast_suites() -> dict[str, list[Row]]:
    """Everything `verify` runs on a fresh checkout."""
    return {
        "composition": composition_suite(),
        "gradients": gradient_suite(),
        "rewards": reward_value_suite(),
        "physics": physics_suite(),
        "navigation": navigation_suite(),
        "metrics": metrics_suite(),
    }
