"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py``; the summary appears under
"acceptance criteria" at the end of the run.
"""

import math
import time
from statistics import NormalDist

import numpy as np
from scipy.special import ndtr

from petrolmfg import (
    ClusterAssignment,
    ClusterParams,
    FitConfig,
    MarketState,
    Population,
    best_reply,
    closed_form_equilibrium,
    contraction_bound,
    expected_cost,
    fit,
    jacobian_row,
    kmeans,
    model_residuals,
    panel_from_trajectory,
    params_to_vector,
    phi_prime,
    simulate,
    solve_equilibrium,
    transition_map,
)
from petrolmfg.dynamics import reply_bracket
from oracles import (
    FIG3_PARAMS,
    FIG3_SIGMA,
    RESOLVABLE,
    fd_jacobian,
    quad_expected_cost,
    random_params,
    random_population,
    reply_sensitivity,
)


def homogeneous_instances(seed=101, n=50):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        c = random_params(rng)
        m = int(rng.integers(2, 51))
        sig = rng.uniform(0.005, 0.2, m)
        x0 = rng.uniform(-1, 3, m)
        out.append((c, sig, x0))
    return out


def test_criterion_01_closed_form_equilibrium(report):
    t0 = time.perf_counter()
    worst = 0.0
    for c, sig, x0 in homogeneous_instances():
        pop = Population.from_counts([c], [sig.size], sig)
        res = solve_equilibrium(pop, MarketState(x0), tol=1e-10)
        worst = max(worst, float(np.max(np.abs(res.prices - closed_form_equilibrium(c)))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 10
    report(1, ok, f"max |p - (a-b)/(2d)| = {worst:.2e} (<= 1e-8), runtime {elapsed:.2f}s (< 10s)")
    assert ok


def test_criterion_02_gamma_sigma_invariance(report):
    worst = 0.0
    for c, sig, x0 in homogeneous_instances():
        base = solve_equilibrium(Population.from_counts([c], [sig.size], sig), MarketState(x0))
        moved = ClusterParams(c.alpha, c.beta, 10 * c.gamma, c.delta)
        other = solve_equilibrium(Population.from_counts([moved], [sig.size], 3 * sig),
                                  MarketState(x0))
        worst = max(worst, float(np.max(np.abs(base.prices - other.prices))))
    ok = worst < 1e-8
    report(2, ok, f"max change under gamma*10, sigma*3 = {worst:.2e} (< 1e-8)")
    assert ok


def test_criterion_03_contraction_certificate(report):
    rng = np.random.default_rng(303)
    worst_gap, max_L, checked, skipped = -np.inf, 0.0, 0, 0
    for _ in range(50):
        pop = random_population(rng, k=int(rng.integers(2, 4)))
        L = contraction_bound(pop).bound_L
        max_L = max(max_L, L)
        tr = simulate(pop, MarketState(rng.uniform(-1, 3, pop.m)), 200, 1e-15)
        steps = np.max(np.abs(np.diff(tr.prices, axis=0)), axis=1)
        # ratios of steps already at the rounding floor carry no information
        floor = 1e-10 * (1 + np.max(np.abs(tr.prices)))
        ok = steps[:-1] > floor
        checked += int(ok.sum())
        skipped += int((~ok).sum())
        if ok.any():
            worst_gap = max(worst_gap, float(np.max(steps[1:][ok] / steps[:-1][ok] - L)))
    ok = worst_gap <= 1e-9 and max_L < 1
    report(3, ok, f"max(ratio - L) = {worst_gap:.2e} (<= 1e-9) over {checked} ratios "
                  f"({skipped} at rounding floor skipped), max L = {max_L:.6f} (< 1)")
    assert ok


def central_diff5(f, x, h):
    """Fourth-order central difference."""
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


def test_criterion_04_derivatives_and_quadrature(report):
    rng = np.random.default_rng(404)
    worst_fd, worst_quad = 0.0, 0.0
    for _ in range(200):
        c = ClusterParams(*rng.uniform(0.1, 100, 4))
        s = rng.uniform(0.005, 0.2)
        pb, pp, p = rng.uniform(-1, 3, 3)
        fd = central_diff5(lambda q: expected_cost(c, s, pb, pp, q), p, 1e-5)
        worst_fd = max(worst_fd, abs(fd - phi_prime(c, s, pb, pp, p)))
        worst_quad = max(worst_quad, abs(expected_cost(c, s, pb, pp, p)
                                         - quad_expected_cost(c, s, pb, pp, p)))
    ok = worst_fd <= 1e-6 and worst_quad <= 1e-8
    report(4, ok, f"phi' vs finite differences {worst_fd:.2e} (<= 1e-6); "
                  f"phi vs quadrature {worst_quad:.2e} (<= 1e-8); 200 points")
    assert ok


def grid_phi(c, s, pb, pp, grid):
    """Vectorised expected cost on a grid (scipy's ndtr, not the package's normal)."""
    z = (grid - pb) / s
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return (c.alpha * s * (pdf - z * ndtr(-z)) + c.beta * s * (pdf + z * ndtr(z))
            + 0.5 * c.gamma * (grid - pp) ** 2 + 0.5 * c.delta * grid ** 2)


def grid_argmin_chunked(f, lo, hi, step=1e-4, chunk=1_000_000):
    n = int(math.ceil((hi - lo) / step)) + 1
    best_val, best_p = math.inf, math.nan
    for start in range(0, n, chunk):
        grid = lo + step * np.arange(start, min(n, start + chunk))
        vals = f(grid)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_p = float(vals[i]), float(grid[i])
    return best_p


def test_criterion_05_best_reply_grid_oracle(report):
    rng = np.random.default_rng(505)
    worst, max_points = 0.0, 0
    for _ in range(100):
        c = ClusterParams(*rng.uniform(0.1, 100, 3), rng.uniform(0.1, 100))
        s = rng.uniform(0.005, 0.2)
        pb, pp = rng.uniform(-1, 3, 2)
        b = reply_bracket(c, pp)
        # the grid evaluator agrees with the package's closed form
        probe = rng.uniform(b.lo, b.hi)
        exact = expected_cost(c, s, pb, pp, probe)
        assert abs(grid_phi(c, s, pb, pp, np.array([probe]))[0] - exact) <= 1e-12 * (1 + abs(exact))
        ref = grid_argmin_chunked(lambda g: grid_phi(c, s, pb, pp, g), b.lo, b.hi)
        max_points = max(max_points, int((b.hi - b.lo) / 1e-4))
        worst = max(worst, abs(best_reply(c, s, pb, pp) - ref))
    ok = worst <= 1e-4
    report(5, ok, f"max |best_reply - grid argmin| = {worst:.2e} (<= 1e-4), "
                  f"grid step 1e-4, largest grid {max_points} points")
    assert ok


def test_criterion_06_monotonicity_sweeps(report):
    rng = np.random.default_rng(606)
    grid = np.geomspace(0.1, 100, 30)
    strict_n = weak_n = 0
    failures = []

    def check(name, values, replies, base, s, pb, pp, sign):
        nonlocal strict_n, weak_n
        for j in range(len(values) - 1):
            if name == "delta" and not replies[j] > 0:
                continue
            c = base_with(base, name, values[j])
            predicted = reply_sensitivity(c, s, pb, pp, replies[j], name) * (values[j + 1] - values[j])
            diff = sign * (replies[j + 1] - replies[j])
            if abs(predicted) > RESOLVABLE:
                strict_n += 1
                good = diff > 0
            else:
                weak_n += 1
                good = diff >= -1e-12
            if not good:
                failures.append((name, values[j], replies[j], replies[j + 1]))

    for _ in range(100):
        base = ClusterParams(*rng.uniform(0.1, 100, 4))
        s = rng.uniform(0.005, 0.2)
        pb, pp = rng.uniform(-1, 3, 2)
        for name, sign in (("alpha", 1), ("beta", -1), ("delta", -1)):
            replies = [best_reply(base_with(base, name, v), s, pb, pp) for v in grid]
            check(name, grid, replies, base, s, pb, pp, sign)
        gaps = [abs(best_reply(base_with(base, "gamma", v), s, pb, pp) - pp) for v in grid]
        for j in range(len(grid) - 1):
            weak_n += 1
            if gaps[j + 1] > gaps[j] + 1e-12:
                failures.append(("gamma", grid[j], gaps[j], gaps[j + 1]))
    ok = not failures
    report(6, ok, f"100 sweeps x (alpha, beta, delta, gamma): {strict_n} strict and "
                  f"{weak_n} weak comparisons, {len(failures)} violations")
    assert ok, failures[:5]


def base_with(c, name, value):
    vals = dict(alpha=c.alpha, beta=c.beta, gamma=c.gamma, delta=c.delta)
    vals[name] = value
    return ClusterParams(**vals)


def test_criterion_07_degenerate_regime(report):
    rng = np.random.default_rng(707)
    worst_drift, worst_fixed = 0.0, 0.0
    for _ in range(20):
        a, b = rng.uniform(0.1, 100, 2)
        m = int(rng.integers(2, 51))
        sig = rng.uniform(0.005, 0.2, m)
        pop = Population.from_counts([ClusterParams(a, b, 0, 0, degenerate=True)], [m], sig)
        tr = simulate(pop, MarketState(rng.uniform(-1, 3, m)), 50)
        drift = NormalDist().inv_cdf(a / (a + b)) * sig.sum() / m
        worst_drift = max(worst_drift, float(np.max(np.abs(np.diff(tr.means) - drift))))

        balanced = Population.from_counts([ClusterParams(a, a, 0, 0, degenerate=True)], [m], sig)
        x0 = MarketState(rng.uniform(-1, 3, m))
        one = transition_map(balanced, x0).prices
        two = transition_map(balanced, MarketState(one)).prices
        worst_fixed = max(worst_fixed, float(np.max(np.abs(one - x0.mean))),
                          float(np.max(np.abs(two - one))))
    ok = worst_drift <= 1e-10 and worst_fixed <= 1e-14
    report(7, ok, f"max drift error over 50 steps {worst_drift:.2e} (<= 1e-10); "
                  f"alpha = beta reaches p_bar in one step (error {worst_fixed:.1e})")
    assert ok


def test_criterion_08_jacobian(report):
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(20):
        pop = random_population(rng, m=int(rng.integers(2, 9)))
        x = rng.uniform(-1, 3, pop.m)
        state = MarketState(x)
        nxt = transition_map(pop, state, 1e-15).prices
        J = np.array([jacobian_row(pop, state, nxt, i) for i in range(pop.m)])
        worst = max(worst, float(np.max(np.abs(J - fd_jacobian(pop, x, h=1e-6, tol=1e-15)))))
    ok = worst <= 1e-5
    report(8, ok, f"max |jacobian_row - central differences (h=1e-6)| = {worst:.2e} (<= 1e-5)")
    assert ok


def test_criterion_09_calibration_recovery(report):
    t0 = time.perf_counter()
    counts = (3, 12, 15)  # Figure 3 proportions 19/79/96 scaled to 30 stations
    pop = Population.from_counts(FIG3_PARAMS, counts, FIG3_SIGMA)
    rng = np.random.default_rng(909)
    x0 = MarketState(rng.uniform(1.75, 1.95, pop.m))
    traj = simulate(pop, x0, 19, 1e-14)  # 20 daily observations
    panel = panel_from_trajectory(traj)
    assignment = ClusterAssignment(3, pop.labels, np.zeros((3, 2)), 0,
                                   station_ids=panel.station_ids)
    truth = params_to_vector(FIG3_PARAMS)
    cfg = FitConfig(bounds=(0.10, 100.0), seed=0, multistart=8, starts=(truth,))
    res = fit(panel, assignment, cfg, sigmas=pop.sigmas)
    fitted = model_residuals(res.params, pop, x0, panel.mean_series)
    rmse = float(np.sqrt(np.mean(fitted ** 2)))
    pinned = res.start_objectives[0]
    random_best = min(res.final_objectives[1:])
    elapsed = time.perf_counter() - t0
    ok = rmse <= 1e-3 and pinned <= 1e-8 and elapsed < 300
    report(9, ok, f"RMSE {rmse:.2e} EUR/L (<= 1e-3), pinned-start objective {pinned:.2e} "
                  f"(<= 1e-8), best unpinned start {random_best:.2e}, runtime {elapsed:.1f}s (< 300s)")
    assert ok


def test_criterion_10_kmeans_planted(report):
    exact = monotone = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        spread = rng.uniform(0.05, 1.0)
        centres = 10 * spread * np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
        centres += rng.uniform(-5, 5, 2)
        n = int(rng.integers(5, 30))
        X = np.concatenate([c + spread * rng.standard_normal((n, 2)) for c in centres])
        truth = np.repeat(np.arange(3), n)
        perm = rng.permutation(3 * n)
        X, truth = X[perm], truth[perm]
        res = kmeans(X, 3, seed=seed)
        pairs = set(zip(truth.tolist(), res.labels.tolist()))
        exact += len(pairs) == 3 and len({p[1] for p in pairs}) == 3
        monotone += bool(np.all(np.diff(res.inertia_history) <= 0))
    ok = exact == 20 and monotone == 20
    report(10, ok, f"planted 3 clusters (separation 10x spread) recovered in {exact}/20 seeds; "
                   f"WCSS nonincreasing in {monotone}/20 runs")
    assert ok
