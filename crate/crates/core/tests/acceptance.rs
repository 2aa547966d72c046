//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use didsens::sim::{
    self, AlphaLaw, Assignment, CohortAssignment, CostLaw, CovFn, ErrorProcess, InfoTag,
    OutcomeModel, SelectionMechanism, SimConfig, TreatmentEffect,
};
use didsens::stats::mean_and_mcse;
use didsens::{
    att_gt_table, baseline_bias, did_2x2, estimate_rho, pt_mp_check, reg_adjusted_did, DesignSpec,
    Matrix, TwoPeriodSample,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use common::{nsw, rel_close};

struct Check {
    ok: bool,
    detail: String,
}

fn checks(items: Vec<(String, bool)>) -> Check {
    let failed: Vec<&str> = items
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(l, _)| l.as_str())
        .collect();
    let detail = if failed.is_empty() {
        items
            .iter()
            .map(|(l, _)| l.as_str())
            .collect::<Vec<_>>()
            .join("; ")
    } else {
        format!("failed: {}", failed.join("; "))
    };
    Check {
        ok: failed.is_empty(),
        detail,
    }
}

fn timed(limit: Duration, elapsed: Duration) -> (String, bool) {
    (
        format!(
            "runtime {:.2}s < {:.0}s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        ),
        elapsed < limit,
    )
}

fn nsw_golden() -> Check {
    let start = Instant::now();
    let ds = nsw();
    let spec = DesignSpec::nsw_default();
    let did = did_2x2(&ds, 1975, 1978).unwrap();
    let placebo = did_2x2(&ds, 1974, 1975).unwrap();
    let reg = reg_adjusted_did(&ds, 1975, 1978, &spec).unwrap();
    let reg_placebo = reg_adjusted_did(&ds, 1974, 1975, &spec).unwrap();
    let bias = baseline_bias(&ds, 1975, None).unwrap();
    let bias_x = baseline_bias(&ds, 1975, Some(&spec)).unwrap();
    let rho = estimate_rho(&ds, 1974, 1975, 3, None).unwrap();
    let rho_x = estimate_rho(&ds, 1974, 1975, 3, Some(&spec)).unwrap();
    let elapsed = start.elapsed();
    let item = |label: &str, value: f64, ok: bool| (format!("{label}={value:.4}"), ok);
    checks(vec![
        item("did", did.point, rel_close(did.point, 3621.0, 0.005)),
        item("did.se", did.se, rel_close(did.se, 610.0, 0.05)),
        item(
            "|placebo|",
            placebo.point.abs(),
            (placebo.point.abs() - 197.0).abs() <= 2.0,
        ),
        item("placebo.se", placebo.se, rel_close(placebo.se, 280.0, 0.05)),
        item("reg", reg.point, rel_close(reg.point, 2436.0, 0.01)),
        item("reg.se", reg.se, rel_close(reg.se, 654.0, 0.05)),
        item(
            "|reg placebo|",
            reg_placebo.point.abs(),
            (reg_placebo.point.abs() - 335.0).abs() <= 3.0,
        ),
        item("bias", bias.point, rel_close(bias.point, -12119.0, 0.005)),
        item(
            "bias.x",
            bias_x.point,
            rel_close(bias_x.point, -6113.0, 0.01),
        ),
        item(
            "rho.step",
            rho.per_step,
            (rho.per_step - 0.845).abs() <= 0.002,
        ),
        item("rho", rho.adjusted, (rho.adjusted - 0.603).abs() <= 0.005),
        item(
            "rho.x.step",
            rho_x.per_step,
            (rho_x.per_step - 0.827).abs() <= 0.002,
        ),
        item(
            "rho.x",
            rho_x.adjusted,
            (rho_x.adjusted - 0.566).abs() <= 0.005,
        ),
        timed(Duration::from_secs(5), elapsed),
    ])
}

fn sample_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>, Vec<f64>)> {
    (6usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-1e3f64..1e3, n),
            prop::collection::vec(-1e3f64..1e3, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(-5f64..5.0, n),
        )
            .prop_map(|(a, b, mut g, x)| {
                // at least one treated unit and three controls
                g[0] = true;
                g[1..4].iter_mut().for_each(|v| *v = false);
                (a, b, g, x)
            })
    })
}

fn structural_identities() -> Check {
    let start = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 128,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&sample_strategy(), |(pre, post, g, x)| {
        let n = pre.len();
        let scale = pre.iter().chain(&post).fold(1.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-10 * scale;
        let plain = TwoPeriodSample::new(pre.clone(), post.clone(), g.clone(), None).unwrap();
        let did = plain.did().unwrap();
        prop_assert!((plain.att_at_rho(1.0).unwrap().point - did.point).abs() <= tol);

        let grid = [-0.5, 0.3, 1.7];
        let curve = plain.sensitivity_curve(&grid).unwrap();
        let slope = (curve.att[2] - curve.att[0]) / (grid[2] - grid[0]);
        let interp = curve.att[0] + slope * (grid[1] - grid[0]);
        prop_assert!((interp - curve.att[1]).abs() <= tol);

        let ones = Matrix::from_columns(&[vec![1.0; n]], vec!["1".into()]).unwrap();
        let intercept =
            TwoPeriodSample::new(pre.clone(), post.clone(), g.clone(), Some(ones)).unwrap();
        prop_assert!((intercept.did().unwrap().point - did.point).abs() <= tol);

        let design =
            Matrix::from_columns(&[vec![1.0; n], x.clone()], vec!["1".into(), "x".into()]).unwrap();
        let adjusted =
            TwoPeriodSample::new(pre.clone(), post.clone(), g.clone(), Some(design)).unwrap();
        for s in [&plain, &adjusted] {
            let (lo, hi) = (0.4, 0.9);
            let set = s.identified_set(lo, hi).unwrap();
            let a = s.att_at_rho(lo).unwrap().point;
            let b = s.att_at_rho(hi).unwrap().point;
            prop_assert!((set.lo - a.min(b)).abs() <= tol && (set.hi - a.max(b)).abs() <= tol);
        }
        Ok(())
    });
    let elapsed = start.elapsed();
    let (label, ok) = match result {
        Ok(()) => (
            "128 random samples: ATT(1)=DiD, affine curve, intercept-only=DiD, set endpoints"
                .to_string(),
            true,
        ),
        Err(e) => (format!("property failed: {e}"), false),
    };
    checks(vec![(label, ok), timed(Duration::from_secs(1), elapsed)])
}

/// `Y_t(0) = α·γ_t + λ_t + ε_t` with `γ = (1, 1, 0.5)` and AR(1) shocks with
/// coefficient 0.5, so that `Ẏ_2 = 0.5·Ẏ_1 + u_2` with `u_2` independent of
/// `(α, ε_1)`: the persistence is exactly 0.5 and selection on `(α, ε_1)`
/// leaves `Cov(G, ζ_2) = 0` in the population.
fn bias_formula_config() -> SimConfig {
    SimConfig {
        n: 20_000,
        periods: 3,
        outcome: OutcomeModel::RandomCoefficient {
            lambda: vec![0.0, 0.5, 1.0],
            gamma: vec![
                CovFn::constant(1.0),
                CovFn::constant(1.0),
                CovFn::constant(0.5),
            ],
        },
        errors: ErrorProcess::Ar1 {
            rho: 0.5,
            sigma: 1.0,
        },
        alpha: AlphaLaw::standard(),
        covariate: None,
        assignment: Assignment::Binary {
            mechanism: SelectionMechanism::AshenfelterThreshold {
                beta: 0.0,
                info: vec![InfoTag::Alpha, InfoTag::EpsPre],
                cost: CostLaw {
                    mean: 0.5,
                    sd: 0.0,
                    nu_loading: 0.0,
                    eta1_loading: 0.0,
                },
            },
        },
        effect: TreatmentEffect::constant(1.0),
    }
}

fn bias_formula() -> Check {
    let start = Instant::now();
    let cfg = bias_formula_config();
    let rho2 = 0.5;
    // population means of Y_1(0), Y_2(0)
    let (mu1, mu2) = (0.5, 1.0);
    let reps = 200u64;
    let rows: Vec<(f64, f64, f64)> = {
        use rayon::prelude::*;
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let p = sim::simulate_with_rng(&cfg, &mut didsens::rng::substream(41, r)).unwrap();
                let sample = p.two_period(1, 2).unwrap();
                let bias = sample.did().unwrap().point - p.true_att();
                let att = sample.att_at_rho(rho2).unwrap().point - p.true_att();
                let g = p.treated_mask();
                let n = p.n() as f64;
                let share = g.iter().filter(|&&b| b).count() as f64 / n;
                let (mut gy1, mut gz, mut z) = (0.0, 0.0, 0.0);
                for (i, &treated) in g.iter().enumerate() {
                    let y1 = p.at(&p.y0, i, 1) - mu1;
                    let zeta = p.at(&p.y0, i, 2) - mu2 - rho2 * y1;
                    z += zeta;
                    if treated {
                        gy1 += y1;
                        gz += zeta;
                    }
                }
                let denom = share * (1.0 - share);
                let cov_g_zeta = gz / n - share * z / n;
                let formula = (rho2 - 1.0) * (gy1 / n) / denom + cov_g_zeta / denom;
                (bias, formula, att)
            })
            .collect()
    };
    let col = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let (bias, bias_se) = mean_and_mcse(&col(|r| r.0));
    let (formula, _) = mean_and_mcse(&col(|r| r.1));
    let (att_err, att_se) = mean_and_mcse(&col(|r| r.2));
    let elapsed = start.elapsed();
    checks(vec![
        (
            format!("MC bias {bias:.4} vs formula {formula:.4} (mcse {bias_se:.4})"),
            (bias - formula).abs() < 3.0 * bias_se,
        ),
        (
            format!("bias is material: |{bias:.4}| > 10 mcse"),
            bias.abs() > 10.0 * bias_se,
        ),
        (
            format!("ATT(0.5) − ATT = {att_err:.4} (mcse {att_se:.4})"),
            att_err.abs() < 3.0 * att_se,
        ),
        timed(Duration::from_secs(60), elapsed),
    ])
}

fn scenario_bank() -> Check {
    let start = Instant::now();
    let mut items = Vec::new();
    for id in sim::scenario_ids() {
        let v = sim::run_scenario(id, None, None, sim::DEFAULT_SEED).unwrap();
        if !v.pass {
            items.push((
                format!(
                    "{id}: Δ={:.5} mcse={:.5} expected {}",
                    v.delta_post, v.mcse, v.expected
                ),
                false,
            ));
        }
    }
    let total = sim::scenario_ids().len();
    let failed = items.len();
    items.push((
        format!("{}/{} scenarios pass", total - failed, total),
        failed == 0,
    ));
    items.push(timed(Duration::from_secs(300), start.elapsed()));
    checks(items)
}

fn inference_oracle() -> Check {
    let start = Instant::now();
    let cfg = SimConfig {
        n: 2_000,
        periods: 2,
        outcome: OutcomeModel::TwoWay {
            lambda: vec![0.0, 1.0],
        },
        errors: ErrorProcess::Ar1 {
            rho: 0.5,
            sigma: 1.0,
        },
        alpha: AlphaLaw::standard(),
        covariate: None,
        assignment: Assignment::Binary {
            mechanism: SelectionMechanism::FixedEffectThreshold {
                c: 0.0,
                x_loading: 0.0,
                nu_sd: 1.0,
            },
        },
        effect: TreatmentEffect::constant(1.0),
    };
    let simulated = sim::simulate_panel(&cfg, 7)
        .unwrap()
        .two_period(0, 1)
        .unwrap();
    let ds = nsw();
    let spec = DesignSpec::nsw_default();
    let mut items = Vec::new();
    let mut record = |label: String, s: &TwoPeriodSample, rho2: f64| {
        let r = s.oracle_check(rho2, 500, 11).unwrap();
        items.push((
            format!(
                "{label} ρ₂={rho2}: IF {:.3} vs boot {:.3} (gap {:.1}%)",
                r.influence_se,
                r.bootstrap_se,
                100.0 * r.relative_gap
            ),
            r.relative_gap < 0.10,
        ));
    };
    record("sim n=2000".into(), &simulated, 0.8);
    record("sim n=2000".into(), &simulated, 1.0);
    let plain = TwoPeriodSample::from_dataset(&ds, 1975, 1978, None).unwrap();
    let adjusted = TwoPeriodSample::from_dataset(&ds, 1975, 1978, Some(&spec)).unwrap();
    for rho2 in [0.6, 1.0] {
        record("NSW".into(), &plain, rho2);
        record("NSW+X".into(), &adjusted, rho2);
    }
    items.push(timed(Duration::from_secs(120), start.elapsed()));
    checks(items)
}

/// `(g, t, is_pretreatment, estimate)`
type Cell = (i64, i64, bool, f64);
/// `(g, t, gap)`
type Gap = (i64, i64, f64);

fn staggered_recovery() -> Check {
    let start = Instant::now();
    let cfg = SimConfig {
        n: 10_000,
        periods: 4,
        outcome: OutcomeModel::TwoWay {
            lambda: vec![0.0, 0.5, 1.0, 1.5],
        },
        errors: ErrorProcess::IidNormal { sigma: 1.0 },
        alpha: AlphaLaw::standard(),
        covariate: None,
        assignment: Assignment::Staggered {
            cohorts: CohortAssignment {
                alpha: 1.0,
                eps_first: 0.0,
                x_loading: 0.0,
                nu_sd: 0.5,
                cutpoints: vec![-0.8, -0.2, 0.4],
            },
        },
        effect: TreatmentEffect::constant(5.0),
    };
    let reps = 200u64;
    let runs: Vec<(Vec<Cell>, Vec<Gap>)> = {
        use rayon::prelude::*;
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let p = sim::simulate_with_rng(&cfg, &mut didsens::rng::substream(61, r)).unwrap();
                let ds = p.dataset().unwrap();
                let cells = att_gt_table(&ds)
                    .unwrap()
                    .cells
                    .iter()
                    .map(|c| (c.g, c.t, c.is_pretreatment, c.estimate))
                    .collect();
                let gaps = pt_mp_check(&ds)
                    .unwrap()
                    .iter()
                    .map(|q| (q.g, q.t, q.gap))
                    .collect();
                (cells, gaps)
            })
            .collect()
    };
    let mut items = Vec::new();
    let judge = |values: Vec<f64>, target: f64| {
        let (m, se) = mean_and_mcse(&values);
        ((m - target).abs() <= 3.0 * se + 1e-9, m, se)
    };
    for (k, &(g, t, pre, _)) in runs[0].0.iter().enumerate() {
        let target = if pre { 0.0 } else { 5.0 };
        let (ok, m, se) = judge(runs.iter().map(|r| r.0[k].3).collect(), target);
        items.push((format!("att({g},{t})={m:.3}±{se:.3}"), ok));
    }
    for (k, &(g, t, _)) in runs[0].1.iter().enumerate() {
        let (ok, m, se) = judge(runs.iter().map(|r| r.1[k].2).collect(), 0.0);
        items.push((format!("gap({g},{t})={m:.4}±{se:.4}"), ok));
    }
    items.push(timed(Duration::from_secs(30), start.elapsed()));
    checks(items)
}

fn main() {
    type Criterion = (u32, &'static str, fn() -> Check);
    let criteria: [Criterion; 6] = [
        (1, "NSW golden numbers", nsw_golden),
        (2, "structural identities", structural_identities),
        (3, "bias formula", bias_formula),
        (4, "scenario bank", scenario_bank),
        (5, "inference oracle", inference_oracle),
        (6, "staggered recovery", staggered_recovery),
    ];
    let mut failures = 0;
    for (id, name, run) in criteria {
        let check = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Check {
                ok: false,
                detail: format!("panicked: {msg}"),
            }
        });
        if !check.ok {
            failures += 1;
        }
        println!(
            "{} criterion {id} ({name}): {}",
            if check.ok { "PASS" } else { "FAIL" },
            check.detail
        );
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
