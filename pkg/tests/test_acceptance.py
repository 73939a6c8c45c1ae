"""End-to-end acceptance suite: one test (and one PASS/FAIL line) per criterion.

Criteria 1-4 re-run the oracle checks of the unit suites as a single gate;
5-8 drive the benchmark harness at full scale. Run with
``pytest tests/test_acceptance.py -v`` (about 30-40 minutes on one core).
"""
import json
import os
import time
from pathlib import Path

import pytest

import test_cages
import test_env
import test_solver
import test_tsip
from dreamplan import bench, default_config, replay_record
from dreamplan.config import load
from dreamplan.executor import EpisodeRecord, PerturbationConfig

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
JOBS = os.cpu_count() or 1


@pytest.fixture
def report(capsys):
    """Run named checks, print one PASS/FAIL line for the criterion, then assert.

    The runtime budget counts from fixture setup, so data collection is included.
    """
    start = time.perf_counter()

    def run(criterion, checks, budget_s, detail=None):
        failures = []
        for name, check in checks:
            try:
                check()
            except AssertionError as e:
                failures.append(f"{name}: {str(e).splitlines()[0] if str(e) else 'assertion failed'}")
        elapsed = time.perf_counter() - start
        if elapsed > budget_s:
            failures.append(f"runtime {elapsed:.0f}s over the {budget_s:.0f}s budget")
        status = "PASS" if not failures else "FAIL"
        with capsys.disabled():
            print(f"\n[criterion {criterion}] {status} ({elapsed:.1f}s)" + (f"  {detail}" if detail else "")
                  + "".join(f"\n    - {f}" for f in failures))
        assert not failures, "; ".join(failures)

    return run


def push_config():
    return load(CONFIGS / "push_to_goal.json")


# ---------------------------------------------------------------- 1-4: oracle gates


def test_criterion_1_baseline_identity(report):
    checks = [(f"baseline identity on {t}", lambda t=t: test_env.test_baseline_identity_with_hand_rolled_loop(t))
              for t in test_env.TASKS]
    report(1, checks, 60)


def test_criterion_2_oracle_equivalence(report):
    checks = [(f"TSIP.next == bare stepper ({b})", lambda b=b: test_tsip.test_next_matches_bare_stepper(b))
              for b in sorted(test_tsip.WORLDS)]
    checks += [(f"push substep refinement seed {s}", lambda s=s: test_tsip.test_push_matches_substep_refinement(s))
               for s in range(5)]
    checks += [("push vs independent flow", test_tsip.test_push_matches_independent_flow_discretization),
               ("drag-free ballistic within 2 g dt t", test_tsip.test_drag_free_matches_closed_form_parabola)]
    report(2, checks, 60)


def test_criterion_3_constraint_correctness(report):
    report(3, [("brute-force agreement", test_cages.test_matches_brute_force_on_random_cases),
               ("radius monotonicity", test_cages.test_monotone_in_radius_and_shrink_never_validates),
               ("composite identity", test_cages.test_composite_identity_on_random_cases)], 60)


def test_criterion_4_solver_properties(report):
    report(4, [("N-best validity, ties and scaling", test_solver.test_nbest_random_batches_properties),
               ("cage-violating candidate rejected", test_solver.test_cage_violating_candidate_never_selected),
               ("MPPI low temperature == N-best", test_solver.test_mppi_low_temperature_matches_nbest),
               ("MPPI quadratic monotone decrease", test_solver.test_mppi_quadratic_monotone_decrease)], 120)


# ---------------------------------------------------------------- 5: robustness trend

# Regression bounds frozen from the reference sweep (master seed 0, 10 x 100):
#   sigma     0      0.02   0.04   0.08
#   baseline  1.000  0.948  0.256  0.045
#   planner   1.000  0.978  0.306  0.039
# The gap at the largest point must stay below this fraction of the peak gap
# (observed -0.12), and the planner must keep at least these margins.
GAP_SHRINK = 0.5
MIN_GAP = {0.02: 0.01, 0.04: 0.02}


def test_criterion_5_robustness_trend(report, tmp_path):
    cfg = push_config()
    spec = bench.SweepSpec(axis="noise", grid=[0.0, 0.02, 0.04, 0.08], runs=10, episodes=100)
    rows = bench.sweep(cfg, spec, jobs=JOBS, out=tmp_path / "sweep.csv")
    table = {(r["value"], r["method"]): (r["mean_success"], r["std_success"]) for r in rows}
    summary = "; ".join(f"{v}: base {table[v, 'baseline'][0]:.3f}+-{table[v, 'baseline'][1]:.3f} "
                        f"md {table[v, 'manidreams'][0]:.3f}+-{table[v, 'manidreams'][1]:.3f}"
                        for v in spec.grid)
    gaps = {v: table[v, "manidreams"][0] - table[v, "baseline"][0] for v in spec.grid}

    def ceiling():
        assert min(table[0.0, m][0] for m in bench.METHODS) >= 0.90

    def moderate_noise_gap():
        (md, md_std), (base, base_std) = table[0.04, "manidreams"], table[0.04, "baseline"]
        assert md - base >= 0.10, f"gap {md - base:+.3f} < 0.10"
        assert md - md_std > base + base_std, "+-1 std bands overlap"

    def largest_point_degrades():
        hi = spec.grid[-1]
        for m in bench.METHODS:
            assert table[hi, m][0] < table[0.0, m][0], f"{m} did not degrade"
        peak = max(gaps.values())
        assert peak > 0 and gaps[hi] < GAP_SHRINK * peak, "gap did not shrink from its peak"

    def frozen_margins():
        for v, bound in MIN_GAP.items():
            assert gaps[v] >= bound, f"gap at {v} is {gaps[v]:+.3f} < {bound}"

    report(5, [("(a) both >= 90% unperturbed", ceiling),
               ("(b) +10 pts at sigma 0.04 with separated bands", moderate_noise_gap),
               ("regression: planner margins at sigma 0.02 and 0.04", frozen_margins),
               ("(c) both degrade, gap shrinks at the largest point", largest_point_degrades)], 30 * 60, summary)


# ---------------------------------------------------------------- 6: ablation trends


def test_criterion_6_ablation_trends(report):
    cfg = push_config()
    results = {}
    for which in ("m", "N", "width"):
        spec = bench.AblationSpec.from_config(cfg, which)
        results[which] = {str(r["value"]): r["success_rate"] for r in bench.ablate(cfg, spec, jobs=JOBS)}
    text = "; ".join(f"{k}: " + ", ".join(f"{v}={s:.2f}" for v, s in d.items()) for k, d in results.items())

    def m_gap():
        r = results["m"]
        assert r["8"] - r["1"] >= 0.10, f"m=8 minus m=1 is {r['8'] - r['1']:+.2f}"

    def n_gap():
        r = results["N"]
        assert r["8"] - r["1"] >= 0.10, f"N=8 minus N=1 is {r['8'] - r['1']:+.2f}"

    def inverted_u():
        r = results["width"]
        assert r["medium"] >= r["narrow"] and r["medium"] >= r["wide"], "medium is not the best width"

    report(6, [("m=8 beats m=1 by 10 pts", m_gap), ("N=8 beats N=1 by 10 pts", n_gap),
               ("medium width >= narrow and wide", inverted_u)], 20 * 60, text)


# ---------------------------------------------------------------- 7: overhead scaling


def test_criterion_7_overhead_scaling(report):
    rows = bench.profile(push_config(), bench.ProfileSpec())["rows"]
    base, grid = rows[0], rows[1:]
    medians = [r["total"]["median_s"] for r in grid]
    text = ", ".join(f"{r['label']} {1e3 * r['total']['median_s']:.3f}ms" for r in rows)

    def monotone():
        assert [r["N"] * r["m"] for r in grid] == sorted(r["N"] * r["m"] for r in grid)
        assert all(b >= a for a, b in zip(medians, medians[1:])), "median time decreased"

    def baseline_fastest():
        assert base["baseline"] and base["total"]["median_s"] <= min(medians), "baseline is not the fastest"

    def phase_accounting():
        for r in grid:
            assert abs(r["phase_coverage_median"] - 1.0) <= 0.10, f"{r['label']} coverage {r['phase_coverage_median']:.3f}"

    report(7, [("median time monotone in N*m", monotone), ("baseline fastest", baseline_fastest),
               ("phases sum to within 10% of totals", phase_accounting)], 5 * 60, text)


# ---------------------------------------------------------------- 8: determinism


def recorded_episodes():
    for task, mode in [("push-to-goal", "online"), ("push-follow-circle", "online"),
                       ("catch-ball", "online"), ("push-to-goal", "plan-then-execute")]:
        cfg = default_config(task, mode=mode, chunk_length=3)
        cfg.cage = {"kind": "geometric", "center": [0.0, 0.0], "radius": 0.5}
        cfg.perturbation = PerturbationConfig(obs_noise_std=0.02, obs_delay_steps=1, physics_severity=0.3)
        for episode in range(5):
            yield bench.run_episode(cfg, 11, episode, record_timing=True).record


def strip_timing(text):
    rows = [json.loads(line) for line in text.splitlines()]
    for r in rows:
        r.pop("timing", None)
    return [json.dumps(r, sort_keys=True) for r in rows]


def test_criterion_8_determinism(report, tmp_path):
    def record_replay():
        for rec in recorded_episodes():
            text = rec.to_jsonl()
            again = replay_record(EpisodeRecord.from_jsonl(text)).to_jsonl()
            assert strip_timing(again) == strip_timing(text), "replayed record differs"

    cfg = push_config()
    spec = bench.SweepSpec(axis="noise", grid=[0.0, 0.04], runs=2, episodes=10)

    def sweep_csv():
        texts = []
        for i, jobs in enumerate([1, 1, 2]):
            out = tmp_path / f"s{i}.csv"
            bench.sweep(cfg, spec, jobs=jobs, out=out)
            texts.append(out.read_text())
        assert texts[0] == texts[1], "CSV differs between identical runs"
        assert texts[0] == texts[2], "CSV differs between --jobs 1 and --jobs 2"

    def resumed_sweep():
        out = tmp_path / "resume.csv"
        bench.sweep(cfg, spec, out=out)
        full = out.read_text()
        ckpts = sorted(Path(str(out) + ".ckpt").glob("*.json"))
        for c in ckpts[len(ckpts) // 2:]:
            c.unlink()
        out.unlink()
        bench.sweep(cfg, spec, out=out)
        assert out.read_text() == full, "resumed CSV differs"

    report(8, [("record replay", record_replay), ("sweep CSV across runs and jobs", sweep_csv),
               ("resumed sweep byte-identical", resumed_sweep)], 5 * 60)
