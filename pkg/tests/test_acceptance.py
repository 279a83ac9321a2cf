"""Acceptance suite.

Each test implements one release criterion at its stated tolerance and
prints a PASS line with the measured numbers.  Run with `pytest -s
tests/test_acceptance.py` to see the lines as they complete.
"""

import math
import subprocess
import sys
import time

import numpy as np

import robustmix as rm
from robustmix.bench import default_config, run_experiment
from robustmix.clustering import sos_moment_check, trimmed_mean
from robustmix.moments import chi_square_moment_check, second_moment_check
from robustmix.prediction import eval_prediction
from robustmix.subspace import double_filter, double_filter_detail, robust_subspace


def report(criterion: str, detail: str) -> None:
    from conftest import record_acceptance

    line = f"[ACCEPTANCE] {criterion}: PASS  ({detail})"
    print(line)
    record_acceptance(line)


def by_cell(records, metric):
    out = {}
    for r in records:
        if r.metric == metric:
            out[(r.method, r.alpha, r.seed)] = r.value
    return out


class TestCriterion1Figure2:
    def test_figure2_reproduction(self):
        started = time.monotonic()
        cfg = default_config("subspace")
        cfg.seeds = 50
        records = run_experiment(cfg, threads=0)
        elapsed = time.monotonic() - started

        captured = by_cell(records, "captured_variance")
        rem_good = by_cell(records, "removed_good")
        rem_corr = by_cell(records, "removed_corrupted")
        alphas = cfg.subspace["alphas"]
        seeds = range(cfg.seeds)

        oracle_all = [captured[("oracle", a, s)] for a in alphas for s in seeds]
        oracle_mean = float(np.mean(oracle_all))
        assert abs(oracle_mean - 1.0886) <= 0.01

        for a in alphas:
            df_mean = float(np.mean([captured[("double_filter", a, s)] for s in seeds]))
            or_mean = float(np.mean([captured[("oracle", a, s)] for s in seeds]))
            assert abs(df_mean - or_mean) <= 0.02, f"alpha={a}"
            wins = np.mean(
                [
                    captured[("double_filter", a, s)] >= captured[("hrpca", a, s)]
                    for s in seeds
                ]
            )
            assert wins >= 0.8, f"alpha={a}: win rate {wins}"

        df_corr = np.mean([rem_corr[("double_filter", a, s)] for a in alphas for s in seeds])
        hr_corr = np.mean([rem_corr[("hrpca", a, s)] for a in alphas for s in seeds])
        df_good = np.mean([rem_good[("double_filter", a, s)] for a in alphas for s in seeds])
        hr_good = np.mean([rem_good[("hrpca", a, s)] for a in alphas for s in seeds])
        assert df_corr > hr_corr
        assert df_good < hr_good
        assert elapsed <= 600.0
        report(
            "criterion 1 (Figure-2 reproduction)",
            f"oracle={oracle_mean:.4f}, removed corrupted {df_corr:.0f} vs "
            f"{hr_corr:.0f}, removed good {df_good:.0f} vs {hr_good:.0f}, "
            f"{elapsed:.0f}s",
        )


class TestCriterion2MomentIdentities:
    def test_bound_m_identity(self):
        beta = np.zeros(4)
        beta[0] = 1.0
        res = second_moment_check(beta, 1.0, t=5, replicates=100000, seed=101)
        np.testing.assert_allclose(res["diag_expected"], [1.6, 0.4, 0.4, 0.4])
        assert res["max_z"] <= 5.0
        report(
            "criterion 2a (second-moment identity)",
            f"diag={np.round(res['diag_empirical'], 4)}, max |z|={res['max_z']:.2f}",
        )

    def test_chi_square_decomposition(self):
        beta = np.array([0.8, -0.6, 0.3])
        v = np.array([0.5, 0.5, -math.sqrt(0.5)])
        res = chi_square_moment_check(beta, 1.1, v, replicates=100000, seed=102)
        assert res["max_z"] <= 5.0
        report(
            "criterion 2b (chi-square four-moment match)",
            f"max |z|={res['max_z']:.2f} over moments 1..4",
        )

    def test_sos_moment_ratios(self):
        d = 6
        W = np.zeros((d, 1))
        W[0, 0] = 1.0
        meta = rm.MetaParameter(W=W, s=np.array([1.0]), p=np.array([1.0]))
        res = sos_moment_check(meta, t=32, n=100000, m_max=3, n_directions=8, seed=103)
        assert res["passed"] and res["max_ratio"] < 1.0
        report(
            "criterion 2c (moment-bound ratios, C=e^6, m=1..3, t=32)",
            f"max ratio={res['max_ratio']:.3g}",
        )


def large_leverage_instance(n=1000, frac=0.05, d=8, seed=0):
    meta = rm.MetaParameter(W=np.eye(d)[:, :1], s=np.array([1.0]), p=np.array([1.0]))
    tasks = rm.sample_tasks(meta, n, 1, seed=seed)
    cfg = rm.AdversaryConfig("large_leverage", alpha=frac, params={"rho": 1.4})
    tasks = rm.corrupt(tasks, cfg, seed=seed + 1)
    pts = np.vstack([t.y[:, None] * t.x for t in tasks])
    bad = np.array([t.truth.corrupted for t in tasks])
    return pts, bad


class TestCriterion3FilterProperties:
    ALPHA = 1.0 / 36.0

    def test_nested_sets_and_loop_bound(self):
        pts, _ = large_leverage_instance(seed=3)
        n = pts.shape[0]
        bound = math.ceil(9 * self.ALPHA * n)
        for seed in range(25):
            rng = np.random.default_rng(seed)
            current = np.arange(n)
            iters = 0
            for _ in range(bound):
                step = double_filter_detail(pts[current], 1, self.ALPHA, 2.0, rng)
                iters += 1
                nxt = current[step.survivors]
                assert set(nxt) <= set(current)  # nested
                if nxt.size == current.size:
                    break
                current = nxt
            assert iters <= bound
        est = robust_subspace(pts, 1, self.ALPHA, nu=2.0, delta=0.05, seed=7)
        assert all(i <= bound for i in est.diagnostics.inner_iterations)
        for sizes in est.diagnostics.survivor_history:
            assert all(b <= a for a, b in zip(sizes, sizes[1:]))
        report("criterion 3a (nested survivor sets, loop bound)", f"bound={bound}")

    def test_semi_orthogonality_all_seeds(self):
        pts, _ = large_leverage_instance(seed=4)
        worst = 0.0
        for seed in range(25):
            est = robust_subspace(pts, 2, self.ALPHA, nu=2.0, delta=0.05, seed=seed)
            dev = np.max(np.abs(est.U.T @ est.U - np.eye(2)))
            worst = max(worst, dev)
        assert worst <= 1e-8
        report("criterion 3b (semi-orthogonality)", f"max deviation={worst:.2e}")

    def test_unchanged_iff_mean_shift_held(self):
        checked_changed = checked_same = 0
        for seed in range(60):
            rng_data = np.random.default_rng(seed)
            pts = rng_data.standard_normal((400, 6))
            if seed % 2:
                pts[:10] *= 30.0
            rng = np.random.default_rng(5000 + seed)
            step = double_filter_detail(pts, 1, 0.02, 0.5, rng)
            held = step.mu_all - step.mu_good <= step.threshold
            assert held == (not step.changed)
            checked_changed += step.changed
            checked_same += not step.changed
        assert checked_changed > 0 and checked_same > 0
        report(
            "criterion 3c (unchanged-output iff mean-shift inequality)",
            f"{checked_changed} changed / {checked_same} unchanged cases",
        )

    def test_expected_progress(self):
        pts, bad = large_leverage_instance(seed=5)
        n_bad = int(bad.sum())
        totals = []
        for seed in range(200):
            surv = double_filter(pts, 1, self.ALPHA, nu=2.0, seed=seed)
            kept = np.zeros(pts.shape[0], bool)
            kept[surv] = True
            totals.append(2 * int(np.sum(~kept & ~bad)) + int(np.sum(kept & bad)))
        mean_total = float(np.mean(totals))
        assert mean_total <= n_bad  # 2|L'|+|E'| <= 2|L|+|E| with L empty
        report(
            "criterion 3d (expected progress over 200 seeds)",
            f"E[2|L'|+|E'|]={mean_total:.2f} <= |E|={n_bad}",
        )


class TestCriterion4PipelineShape:
    def run_preset(self, adversary=None, seeds=20):
        cfg = default_config("pipeline")
        cfg.seeds = seeds
        if adversary:
            cfg.pipeline["adversary"] = adversary
        return cfg, run_experiment(cfg, threads=0)

    def test_clean_preset_parameter_errors(self):
        started = time.monotonic()
        cfg, records = self.run_preset()
        vals = {}
        for r in records:
            vals.setdefault(r.metric, {})[r.seed] = r.value
        seeds = range(cfg.seeds)
        ok = [
            vals["w_err_over_s_max"][s] <= 0.1
            and vals["s2_rel_err_max"][s] <= 0.1
            and vals["p_abs_err_max"][s] <= 0.05
            for s in seeds
        ]
        frac = float(np.mean(ok))
        elapsed = time.monotonic() - started
        assert frac >= 0.9
        assert elapsed <= 300.0
        report(
            "criterion 4a (clean preset parameter errors)",
            f"{sum(ok)}/{cfg.seeds} seeds inside tolerances, {elapsed:.0f}s",
        )

    def test_cluster_kill_recovers_all_centers(self):
        p_min = 1.0 / 3.0
        adv = {
            "light1": {"strategy": "none", "alpha": 0.0},
            "heavy": {"strategy": "cluster_kill", "alpha": p_min / 32.0},
            "light2": {"strategy": "none", "alpha": 0.0},
        }
        cfg, records = self.run_preset(adversary=adv)
        separation = cfg.pipeline["model"]["separation"]
        worst = max(r.value for r in records if r.metric == "cluster_center_err_max")
        assert worst <= separation / 2.0
        report(
            "criterion 4b (cluster-kill center recovery)",
            f"max center error {worst:.3f} <= Delta/2 = {separation / 2:.1f}",
        )


class TestCriterion5PredictionFloor:
    def test_map_and_bayes_floor(self):
        d, c, s = 8, 4.0, 1.0
        W = np.zeros((d, 2))
        W[0, 0], W[0, 1] = c, -c
        meta = rm.MetaParameter(W=W, s=np.array([s, s]), p=np.array([0.5, 0.5]))
        stats = rm.derived_stats(meta)
        tau = math.ceil(
            64 * (stats.rho ** 4 / stats.delta ** 4) * math.log(meta.k / 0.01)
        )
        theta = rm.FittedMeta(
            w_hat=meta.components.copy(), s2_hat=meta.s ** 2, p_hat=meta.p.copy()
        )
        res = eval_prediction(meta, theta, tau=tau, trials=100000, seed=201)
        floor = float(np.sum(meta.p * meta.s ** 2))
        for key in ("mse_map", "mse_bayes"):
            assert 0.97 * floor <= res[key] <= 1.05 * floor, f"{key}={res[key]}"
        report(
            "criterion 5 (prediction noise floor)",
            f"tau={tau}, mse_map={res['mse_map']:.4f}, "
            f"mse_bayes={res['mse_bayes']:.4f}, floor={floor:.4f}",
        )


class TestCriterion6TrimmedMean:
    def test_gross_outliers(self):
        rng = np.random.default_rng(301)
        n = 10000
        x = rng.standard_normal(n)
        x[: n // 20] = 1e6
        est = trimmed_mean(x, 0.05)
        assert abs(est) <= 0.5
        assert abs(est) <= 18 * math.sqrt(0.05)
        report("criterion 6 (trimmed-mean robustness)", f"|estimate|={abs(est):.4f}")


class TestCriterion7Determinism:
    def test_csv_bytes_identical_across_thread_counts(self, tmp_path):
        import json as _json

        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(
            _json.dumps(
                {
                    "experiment": "subspace",
                    "seeds": 2,
                    "subspace": {"n": 800, "alphas": [0.01, 0.02]},
                }
            )
        )
        payloads = {}
        for label, threads in (("t1", "1"), ("t4", "4"), ("tmax", "0")):
            out = tmp_path / label
            proc = subprocess.run(
                [
                    sys.executable,
                    "-m",
                    "robustmix.bench.cli",
                    "subspace-bench",
                    "--config",
                    str(cfg_path),
                    "--out",
                    str(out),
                    "--threads",
                    threads,
                    "--no-plots",
                ],
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
            payloads[label] = (out / "results.csv").read_bytes()
        assert payloads["t1"] == payloads["t4"] == payloads["tmax"]
        report(
            "criterion 7 (CLI determinism across threads 1/4/max)",
            f"{len(payloads['t1'])} identical bytes",
        )
