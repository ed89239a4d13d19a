"""End-to-end acceptance gate: eleven release checks, one test each.

Every test finishes with a single printed PASS line (visible under
``pytest -s``); a pytest failure on any of them is the corresponding FAIL
line.  Tolerances and runtime caps are pinned next to their asserts.  The
statistical checks (7, 8, 11) run fixed end-to-end seeds, so their
outcomes are deterministic reruns of pre-verified experiments.
"""

import time
import types

import numpy as np
import pytest

from heatplan import cli
from heatplan.baselines import Nsga2Config, error_metrics, nsga2_run, random_search, saa_benchmark
from heatplan.dispatch import (
    CapacityScheme,
    ChpGenerator,
    SystemConfig,
    TypicalDay,
    capital_recovery,
    constraint_residuals,
    evaluate_scheme,
    scheme_from_vector,
    simulate_day,
)
from heatplan.gp import GpModel, KernelParams, estimate_noise_std, log_marginal_likelihood, matern_kernel
from heatplan.moo import AmboConfig, ambo_run, hypervolume, nehvi
from heatplan.scenario import compute_features, generate_typical_scenarios, monthly_moments, select_medoid
from heatplan.solver import QuadraticProgram, SolverSettings, solve_qp, verify_kkt
from heatplan.synth import PlanningSpace, SynthSpec, generate_season, generate_system, planning_space

from oracles import (
    grid_dispatch_1chp_1eb,
    hypervolume_monte_carlo,
    hypervolume_rectangles,
    lp_vertex_enumeration,
    medoid_brute_force,
    mll_fd_gradient,
)


@pytest.fixture(scope="module")
def season180():
    return generate_season(SynthSpec(days=180, seed=0))


@pytest.fixture(scope="module")
def small_system():
    return generate_system("small")


# ------------------------------------------------------------------ check 1


def test_c01_capital_recovery_factor():
    assert capital_recovery(0.05, 25) == pytest.approx(0.0709525, abs=1e-6)
    for tau in (0.03, 0.05, 0.25, 1.0):
        assert capital_recovery(tau, 1) == 1.0 + tau
    print("PASS 1: capital recovery 0.05/25y within 1e-6, one-year factor exact")


# ------------------------------------------------------------------ check 2


def _random_psd_qp(rng):
    """Feasible box+row QP; half the draws use a rank-deficient PSD cost."""
    n = int(rng.integers(2, 21))
    if rng.random() < 0.5:
        M = rng.normal(size=(n, n))
        Q = M @ M.T / n + np.eye(n) * rng.uniform(0.1, 1.0)
    else:
        M = rng.normal(size=(n, max(1, n // 2)))
        Q = M @ M.T / n
    q = rng.normal(size=n)
    z0 = rng.normal(size=n)
    m_eq = int(rng.integers(0, 3))
    A_eq = rng.normal(size=(m_eq, n))
    b_eq = A_eq @ z0
    m_extra = int(rng.integers(1, 5))
    A_extra = rng.normal(size=(m_extra, n))
    v = A_extra @ z0
    A_in = np.vstack([np.eye(n), A_extra])
    l_in = np.concatenate([z0 - rng.uniform(0.5, 2.0, size=n), v - rng.uniform(0.1, 1.0, m_extra)])
    u_in = np.concatenate([z0 + rng.uniform(0.5, 2.0, size=n), v + rng.uniform(0.1, 1.0, m_extra)])
    return QuadraticProgram(Q=Q, q=q, A_eq=A_eq, b_eq=b_eq, A_in=A_in, l_in=l_in, u_in=u_in)


def test_c02_qp_kkt_and_lp_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    for _ in range(100):
        p = _random_psd_qp(rng)
        sol = solve_qp(p, SolverSettings(eps_abs=1e-8, eps_rel=1e-8))
        assert sol.status == "optimal"
        report = verify_kkt(p, sol, tol=1e-6)
        assert report["ok"], report
    rng = np.random.default_rng(203)
    for _ in range(20):
        n = int(rng.integers(2, 6))
        c = rng.normal(size=n)
        z0 = rng.uniform(-0.5, 0.5, size=n)
        A_extra = rng.normal(size=(3, n))
        v = A_extra @ z0
        A = np.vstack([np.eye(n), A_extra])
        l = np.concatenate([np.full(n, -1.0), v - rng.uniform(0.2, 1.0, 3)])
        u = np.concatenate([np.full(n, 2.0), v + rng.uniform(0.2, 1.0, 3)])
        obj_ref, _ = lp_vertex_enumeration(c, A, l, u)
        sol = solve_qp(
            QuadraticProgram(Q=np.zeros((n, n)), q=c, A_in=A, l_in=l, u_in=u),
            SolverSettings(eps_abs=1e-8, eps_rel=1e-8),
        )
        assert sol.status == "optimal"
        assert abs(sol.objective - obj_ref) <= 1e-6 * max(1.0, abs(obj_ref))
    dt = time.perf_counter() - t0
    assert dt < 30.0
    print(f"PASS 2: 100 PSD QPs meet KKT at 1e-6 and 20 LPs match vertex oracle ({dt:.1f} s)")


# ------------------------------------------------------------------ check 3


def test_c03_dispatch_matches_grid_enumeration():
    t0 = time.perf_counter()
    chp = ChpGenerator(
        cost=(1.03, 32.74, 14.62, 0.58, 22.56, 0.15),
        region=(0.15, 0.75, 0.15),
        p_min=10.0,
        p_max=20.0,
        h_min=0.0,
        h_max=8.0,
        ramp=2.0,
    )
    cfg = SystemConfig(
        chp=(chp,),
        lambda_net=0.0,
        t_delay=0,
        e_net_min=0.0,
        e_net_max=0.0,
        price_eb=1.0,
    )
    day = TypicalDay(
        electric_load=np.array([14.0, 15.0, 16.0, 15.0]),
        heat_load=np.array([2.0, 4.0, 6.0, 4.0]),
        wind_max=np.zeros(4),
        pv_max=np.zeros(4),
    )
    scheme = CapacityScheme(eb_rated=(4.0,))
    result = simulate_day(cfg, scheme, day)
    assert result.feasible
    oracle = grid_dispatch_1chp_1eb(
        chp={
            "cost": chp.cost,
            "region": chp.region,
            "c_k": chp.intercept,
            "p_min": chp.p_min,
            "p_max": chp.p_max,
            "h_min": chp.h_min,
            "h_max": chp.h_max,
            "ramp": chp.ramp,
        },
        beta=cfg.eb.beta,
        price_eb=cfg.price_eb,
        e_load=day.electric_load,
        h_load=day.heat_load,
        grid_step=0.5,
        p_eb_max=scheme.eb_rated[0],
    )
    assert abs(result.cost - oracle) / oracle <= 0.005
    residuals = constraint_residuals(cfg, scheme, day, result)
    worst = max(residuals.values())
    assert worst <= 1e-6, residuals
    dt = time.perf_counter() - t0
    assert dt < 60.0
    print(
        f"PASS 3: four-step boiler+cogenerator dispatch within 0.5% of 0.5 MW grid "
        f"enumeration, residuals <= {worst:.1e} ({dt:.1f} s)"
    )


# ------------------------------------------------------------------ check 4


def test_c04_gp_algebra_gradient_and_noise_recovery():
    t0 = time.perf_counter()
    # (a) two observations: posterior mean reproduced by an explicit 2x2 solve
    X = np.array([[0.0], [0.8]])
    y = np.array([0.5, -0.25])
    sig, ls, noise = 1.3, 0.7, 0.15
    params = KernelParams(nu=1.5, signal_std=sig, lengthscales=np.array([ls]))

    def k15(r):
        a = np.sqrt(3.0) * r / ls
        return sig**2 * (1.0 + a) * np.exp(-a)

    Kn = np.array([[k15(0.0) + noise**2, k15(0.8)], [k15(0.8), k15(0.0) + noise**2]])
    ks = np.array([k15(0.3), k15(0.5)])
    expected = ks @ np.linalg.solve(Kn, y)
    mean, _ = GpModel(X, y, params, noise).posterior([[0.3]])
    assert abs(mean[0] - expected) <= 1e-10

    # (b) analytic noise-variance gradient of the marginal likelihood vs
    # central finite differences at ten random noise levels
    rng = np.random.default_rng(404)
    X2 = rng.random((15, 2))
    y2 = rng.normal(size=15)
    params2 = KernelParams(nu=2.5, signal_std=1.0, lengthscales=np.array([0.6, 0.9]))
    K = matern_kernel(X2, X2, params2)

    def mll_of_var(v):
        return log_marginal_likelihood(X2, y2, params2, np.sqrt(v))

    for noise_var in rng.uniform(0.005, 1.0, size=10):
        Kn2 = K + noise_var * np.eye(15)
        alpha = np.linalg.solve(Kn2, y2)
        analytic = 0.5 * (alpha @ alpha - np.trace(np.linalg.inv(Kn2)))
        numeric = mll_fd_gradient(mll_of_var, noise_var, h=1e-6 * max(noise_var, 0.01))
        assert abs(analytic - numeric) <= 1e-4 * max(1.0, abs(numeric))

    # (c) noise level recovered from a known generator on sixty points
    rng = np.random.default_rng(405)
    n = 60
    X3 = rng.random((n, 1))
    params3 = KernelParams(nu=2.5, signal_std=1.0, lengthscales=np.array([0.3]))
    L = np.linalg.cholesky(matern_kernel(X3, X3, params3) + 1e-10 * np.eye(n))
    y3 = L @ rng.standard_normal(n) + 0.1 * rng.standard_normal(n)
    est = estimate_noise_std(X3, y3, params3, init=0.05)
    assert 0.05 <= est.sigma_n <= 0.2
    dt = time.perf_counter() - t0
    assert dt < 30.0
    print(
        f"PASS 4: posterior matches hand algebra at 1e-10, noise gradient matches "
        f"central differences at 1e-4, sigma_n recovered as {est.sigma_n:.3f} ({dt:.1f} s)"
    )


# ------------------------------------------------------------------ check 5


def test_c05_hypervolume_exact_and_monte_carlo():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    ref = np.array([2.5, 2.25])
    for size in range(1, 9):
        for _ in range(5):
            pts = rng.integers(0, 33, size=(size, 2)) / 16.0  # binary-exact rationals
            got = hypervolume(pts, ref)
            want = hypervolume_rectangles(pts, ref)
            assert abs(got - want) <= 1e-9
    worst_sigma = 0.0
    for front_seed in range(20):
        frng = np.random.default_rng(1000 + front_seed)
        pts = frng.random((int(frng.integers(2, 10)), 2))
        mc_ref = np.array([1.25, 1.5])
        est, se = hypervolume_monte_carlo(pts, mc_ref, lower=np.zeros(2), n_samples=10**6, seed=front_seed)
        exact = hypervolume(pts, mc_ref)
        worst_sigma = max(worst_sigma, abs(exact - est) / se)
        assert abs(exact - est) <= 3.0 * se
    dt = time.perf_counter() - t0
    assert dt < 60.0
    print(
        f"PASS 5: sweep equals rectangle decomposition on 40 rational fronts and stays "
        f"within 3 standard errors of 1e6-sample Monte Carlo (worst {worst_sigma:.2f} se) ({dt:.1f} s)"
    )


# ------------------------------------------------------------------ check 6


class _PointMassModel:
    """GP-shaped posterior collapsed to a point mass (zero variance)."""

    def __init__(self, values, X):
        self._table = {tuple(x): float(v) for x, v in zip(np.atleast_2d(X), values)}
        # zero signal makes the kernel exactly zero; duck-typed because the
        # real KernelParams validation (rightly) insists on a positive signal
        self.params = types.SimpleNamespace(nu=2.5, signal_std=0.0, lengthscales=np.array([1.0]))

    def _mean(self, X):
        return np.array([self._table[tuple(x)] for x in np.atleast_2d(X)])

    def latent_cross(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._mean(X), np.zeros((1, X.shape[0]))

    def posterior(self, X, full_cov: bool = False):
        mu = self._mean(np.atleast_2d(np.asarray(X, dtype=float)))
        if full_cov:
            return mu, np.zeros((len(mu), len(mu)))
        return mu, np.zeros(len(mu))


def test_c06_nehvi_point_mass_degeneracy():
    X = np.array([[0.0], [0.2], [0.45], [0.7], [0.9], [0.55]])
    y1 = np.array([0.2, 0.45, 0.7, 1.0, 1.5, 0.5])
    y2 = np.array([0.9, 0.55, 0.35, 0.05, 1.4, 0.42])
    models = [_PointMassModel(y1, X), _PointMassModel(y2, X)]
    ref = np.array([2.0, 2.0])
    Y_obs = np.column_stack([y1[:4], y2[:4]])
    # non-dominated candidate: Monte Carlo average equals the deterministic
    # hypervolume improvement because every sampled future coincides
    want = hypervolume(np.vstack([Y_obs, [[0.5, 0.42]]]), ref) - hypervolume(Y_obs, ref)
    got = nehvi(X[5], models, X[:4], ref, n_samples=256, seed=7)
    assert want > 0.0
    assert abs(got - want) <= 1e-9
    # dominated candidate scores exactly zero
    dominated = nehvi(X[4], models, X[:4], ref, n_samples=256, seed=7)
    assert dominated == 0.0
    print("PASS 6: zero-variance acquisition equals deterministic improvement at 1e-9, dominated point scores 0")


# ------------------------------------------------------------------ check 9


def test_c09_scenario_moments_and_medoid(season180):
    t0 = time.perf_counter()
    scenarios = generate_typical_scenarios(season180, selection="joint", seed=0)
    assert scenarios, "season produced no monthly scenarios"
    for sc in scenarios:
        month_idx = season180.month_day_indices(sc.month)
        days_m = [season180.days[i] for i in month_idx]
        targets = monthly_moments(days_m)
        for name, (mean_t, var_t) in targets.items():
            series = sc.series[name]
            assert abs(float(series.mean()) - mean_t) <= 0.01 * abs(mean_t), (sc.month, name)
            assert abs(float(series.var()) - var_t) <= 0.01 * abs(var_t), (sc.month, name)
        feats = np.array([compute_features(d).vector() for d in days_m])
        std = feats.std(axis=0)
        z = (feats - feats.mean(axis=0)) / np.where(std > 0, std, 1.0)
        oracle = medoid_brute_force(z)
        assert select_medoid(days_m) == oracle
        for name in sc.series_days:
            assert sc.series_days[name] == month_idx[oracle]
    dt = time.perf_counter() - t0
    assert dt < 10.0
    print(
        f"PASS 9: all {len(scenarios)} typical days match month moments within 1% and "
        f"medoids match brute force ({dt:.1f} s)"
    )


# ------------------------------------------------------------------ check 10


def test_c10_plan_rerun_bitwise_identical(tmp_path):
    t0 = time.perf_counter()
    ws = tmp_path / "ws"
    assert cli.main(["synth", "--out", str(ws), "--days", "35", "--seed", "3"]) == 0
    assert cli.main(["scenarios", str(ws / "season.csv"), "--out", str(ws / "bundle.json")]) == 0
    runs = []
    for label in ("a", "b"):
        out = tmp_path / f"run_{label}"
        rc = cli.main(
            [
                "plan",
                "--config",
                str(ws / "config.json"),
                "--algorithm",
                "ambo",
                "--budget",
                "14",
                "--seed",
                "7",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        runs.append(out)
    for name in ("iterations.jsonl", "front.json", "schemes.json", "trace.csv"):
        a = (runs[0] / name).read_bytes()
        b = (runs[1] / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"
    dt = time.perf_counter() - t0
    print(f"PASS 10: repeated plan run is bitwise identical across iteration logs and fronts ({dt:.1f} s)")


# ------------------------------------------------------------------ check 7


def _true_toy_pair(x):
    v = float(np.asarray(x).ravel()[0])
    return np.array([v * v, (v - 2.0) ** 2])


def test_c07_ambo_beats_baselines_on_noisy_toy():
    t0 = time.perf_counter()
    bounds = [[-1.0, 3.0]]
    ref = np.array([10.0, 10.0])

    def noisy(stream):
        rng = np.random.default_rng(77_000 + stream)

        def f(x):
            return tuple(_true_toy_pair(x) + rng.normal(0.0, 0.1, size=2))

        return f

    def true_front_hv(X):
        return hypervolume(np.array([_true_toy_pair(x) for x in X]), ref)

    wins = 0
    for s in range(10):
        res = ambo_run(noisy(3 * s), bounds, AmboConfig(n_iterations=56, seed=s))
        hv_ambo = true_front_hv(res.front.X)
        front_n, _, _ = nsga2_run(noisy(3 * s + 1), bounds, Nsga2Config(population=12, generations=5, seed=s))
        hv_nsga = true_front_hv(front_n.X)
        front_r = random_search(noisy(3 * s + 2), bounds, budget=60, seed=s)
        hv_rand = true_front_hv(front_r.X)
        wins += int(hv_ambo >= hv_nsga and hv_ambo >= hv_rand)
    dt = time.perf_counter() - t0
    assert wins >= 8, f"only {wins}/10 paired seeds won"
    assert dt < 600.0
    print(
        f"PASS 7: 60-evaluation fronts on the noisy toy beat both baselines on true "
        f"hypervolume in {wins}/10 paired seeds ({dt:.0f} s)"
    )


# ------------------------------------------------------------------ check 11


def test_c11_equipment_diversity_widens_front(season180, small_system):
    t0 = time.perf_counter()
    days = [s.day for s in generate_typical_scenarios(season180, seed=0)]

    def run_case(space, seed):
        counts = space.counts()

        def objective(x):
            scheme = scheme_from_vector(np.asarray(x, dtype=float), **counts)
            return evaluate_scheme(small_system, scheme, days).values

        n_init = 2 * space.dimension + 2
        return ambo_run(objective, space.bounds(), AmboConfig(n_initial=n_init, n_iterations=60 - n_init, seed=seed))

    all_kinds = run_case(planning_space("small"), seed=2)
    boiler_only = run_case(
        PlanningSpace(1, 0, 0, 0, eb_max=60.0, pump_max=40.0, tes_max=300.0, csh_max=150.0), seed=2
    )
    assert len(all_kinds.front.F) >= 5
    both = np.vstack([all_kinds.front.F, boiler_only.front.F])
    ref = both.max(axis=0) + 0.1 * (both.max(axis=0) - both.min(axis=0)) + 1e-6
    hv_all = hypervolume(all_kinds.front.F, ref)
    hv_eb = hypervolume(boiler_only.front.F, ref)
    dt = time.perf_counter() - t0
    assert hv_all >= hv_eb
    assert dt < 1800.0
    print(
        f"PASS 11: four-kind case yields {len(all_kinds.front.F)} non-dominated schemes and "
        f"hypervolume {hv_all:.3g} >= boiler-only {hv_eb:.3g} at equal budget ({dt:.0f} s)"
    )


# ------------------------------------------------------------------ check 8


def test_c08_posterior_mean_denoises_season_estimates(small_system):
    t0 = time.perf_counter()
    # calmer load shape keeps the draw noise on the cost objective small while
    # renewable variability still dominates the consumption objective
    season = generate_season(SynthSpec(days=180, seed=0, weekend_factor=0.97, noise_electric=0.015))
    space = planning_space("small")
    counts = space.counts()

    calls = [0]

    def objective(x):
        # one fresh per-call draw of one day per month: the scenario noise the
        # surrogate is expected to average away
        draw = generate_typical_scenarios(season, selection="random", seed=9000 + calls[0])
        calls[0] += 1
        scheme = scheme_from_vector(np.asarray(x, dtype=float), **counts)
        return evaluate_scheme(small_system, scheme, [s.day for s in draw]).values

    res = ambo_run(objective, space.bounds(), AmboConfig(n_iterations=30, seed=1))
    saa = np.array(
        [
            list(saa_benchmark(small_system, scheme_from_vector(np.asarray(x, dtype=float), **counts), season).values)
            for x in res.X
        ]
    )
    report = error_metrics(res.posterior_means, res.Y, saa)
    dt = time.perf_counter() - t0
    assert report.n_schemes == 40
    assert report.n_excluded == 0
    assert report.e_res_posterior < report.e_res_raw, report
    assert report.e_ann_raw <= 0.03, report
    assert dt < 1800.0
    print(
        f"PASS 8: posterior mean cuts the consumption error {report.e_res_raw:.3f} -> "
        f"{report.e_res_posterior:.3f} and raw cost error {report.e_ann_raw:.3f} <= 3% ({dt:.0f} s)"
    )
