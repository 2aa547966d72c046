use didsens::rng::substream;
use didsens::sim::{
    self, majority, replicate, scenario, simulate_with_rng, AlphaLaw, Assignment, Conditioning,
    CostLaw, ErrorProcess, Expected, InfoTag, OutcomeModel, SelectionMechanism, SimConfig,
    TreatmentEffect,
};
use didsens::stats::mean_and_mcse;
use rayon::prelude::*;

fn two_way(
    periods: usize,
    errors: ErrorProcess,
    mechanism: SelectionMechanism,
    effect: TreatmentEffect,
) -> SimConfig {
    SimConfig {
        n: 20_000,
        periods,
        outcome: OutcomeModel::TwoWay {
            lambda: (0..periods).map(|t| 0.5 * t as f64).collect(),
        },
        errors,
        alpha: AlphaLaw::standard(),
        covariate: None,
        assignment: Assignment::Binary { mechanism },
        effect,
    }
}

/// Mean and MC standard error of `f` over `reps` independent panels.
fn monte_carlo(
    cfg: &SimConfig,
    seed: u64,
    reps: u64,
    f: impl Fn(&sim::LatentPanel) -> f64 + Sync,
) -> (f64, f64) {
    let draws: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| f(&simulate_with_rng(cfg, &mut substream(seed, r)).unwrap()))
        .collect();
    mean_and_mcse(&draws)
}

fn did_error(p: &sim::LatentPanel) -> f64 {
    let t = p.t();
    p.two_period(t - 2, t - 1).unwrap().did().unwrap().point - p.true_att()
}

#[test]
fn random_assignment_recovers_constant_effect() {
    let cfg = two_way(
        2,
        ErrorProcess::IidNormal { sigma: 1.0 },
        SelectionMechanism::Random { p: 0.3 },
        TreatmentEffect::constant(2.0),
    );
    let p = sim::simulate_panel(&cfg, 1).unwrap();
    let est = p.two_period(0, 1).unwrap().did().unwrap();
    assert!((est.point - 2.0).abs() < 4.0 * est.se, "{est:?}");
    assert_eq!(p.true_att(), 2.0);
}

#[test]
fn martingale_shocks_with_selection_on_the_past_keep_did_unbiased() {
    let cfg = two_way(
        3,
        ErrorProcess::Martingale {
            sigma0: 1.0,
            sigma_zeta: 1.0,
        },
        SelectionMechanism::AshenfelterThreshold {
            beta: 0.0,
            info: vec![InfoTag::Alpha, InfoTag::EpsPre],
            cost: CostLaw {
                mean: 0.5,
                sd: 0.5,
                nu_loading: 0.0,
                eta1_loading: 0.0,
            },
        },
        TreatmentEffect {
            tau: 1.0,
            tau_alpha: 0.5,
            gain_sd: 0.0,
            tau_eps: 0.0,
        },
    );
    let (err, mcse) = monte_carlo(&cfg, 2, 60, did_error);
    assert!(err.abs() < 3.0 * mcse + 1e-9, "{err} ± {mcse}");
}

#[test]
fn ar1_selection_on_the_pre_shock_biases_did_by_mean_reversion() {
    let rho = 0.5;
    let cfg = SimConfig {
        n: 100_000,
        alpha: AlphaLaw {
            mean: 0.0,
            sd: 0.0,
            x_loading: 0.0,
        },
        ..two_way(
            2,
            ErrorProcess::Ar1 { rho, sigma: 1.0 },
            SelectionMechanism::PreShockThreshold {
                alpha: 0.0,
                eps_pre: 1.0,
                x_loading: 0.0,
                nu_sd: 0.0,
                c: 0.0,
            },
            TreatmentEffect::constant(1.0),
        )
    };
    let p = sim::simulate_panel(&cfg, 3).unwrap();
    let bias = did_error(&p);
    let g = p.treated_mask();
    let n = p.n() as f64;
    let share = g.iter().filter(|&&b| b).count() as f64 / n;
    let centre = (0..p.n()).map(|i| p.at(&p.y0, i, 0)).sum::<f64>() / n;
    let g_y1 = (0..p.n())
        .filter(|&i| g[i])
        .map(|i| p.at(&p.y0, i, 0) - centre)
        .sum::<f64>()
        / n;
    let predicted = (rho - 1.0) * g_y1 / (share * (1.0 - share));
    // units below the threshold revert upward
    assert!(predicted > 0.5, "{predicted}");
    assert!((bias - predicted).abs() < 0.03, "{bias} vs {predicted}");
}

#[test]
fn post_shock_component_vanishes_and_predictable_part_carries_the_gap() {
    let n = 4_000;
    let reps = 100;
    for (id, carries_gap) in [("SC2-MARTINGALE", false), ("AC-AR1", true)] {
        let mut s = scenario(id).unwrap();
        s.config.n = n;
        let rows: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|r| replicate(&s, 9, r).unwrap().1.unwrap())
            .collect();
        let (d1, se1) = mean_and_mcse(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        let (d2, se2) = mean_and_mcse(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        assert!(d1.abs() < 3.0 * se1, "{id}: D1 {d1} ± {se1}");
        if carries_gap {
            assert!(d2.abs() > 5.0 * se2, "{id}: D2 {d2} ± {se2}");
        } else {
            assert!(d2.abs() < 3.0 * se2 + 1e-9, "{id}: D2 {d2} ± {se2}");
        }
    }
}

#[test]
fn decomposition_adds_up_in_every_replication() {
    let mut checked = 0;
    for id in sim::scenario_ids() {
        let mut s = scenario(id).unwrap();
        if !s.use_latents || s.config.is_staggered() || s.conditioning != Conditioning::None {
            continue;
        }
        s.config.n = s.config.n.min(2_000);
        for rep in 0..5 {
            let (delta, parts) = replicate(&s, 13, rep).unwrap();
            let (d1, d2) = parts.unwrap_or_else(|| panic!("{id} has no components"));
            assert!(
                (d1 + d2 - delta).abs() <= 1e-10 * (1.0 + delta.abs()),
                "{id}: {d1} + {d2} != {delta}"
            );
        }
        checked += 1;
    }
    assert!(
        checked >= 5,
        "only {checked} scenarios expose latent components"
    );
}

#[test]
fn majority_trivial_cases() {
    assert!(!majority([]));
    assert!(majority([true]));
    assert!(!majority([false]));
    assert!(majority([true, false]));
    assert!(!majority([false, false, true]));
    assert!(majority([true, true, false]));
}

#[test]
fn random_assignment_gap_shrinks_at_root_n() {
    let base = scenario("RANDOM").unwrap();
    assert_eq!(base.expected, Expected::Zero);
    let sizes = [1_000usize, 4_000, 16_000];
    let mut points = Vec::new();
    for &n in &sizes {
        let mut s = base.clone();
        s.config.n = n;
        let gaps: Vec<f64> = (0..150)
            .into_par_iter()
            .map(|r| replicate(&s, 21, r).unwrap().0)
            .collect();
        let m = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let sd =
            (gaps.iter().map(|g| (g - m).powi(2)).sum::<f64>() / (gaps.len() - 1) as f64).sqrt();
        points.push(((n as f64).ln(), sd.ln()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = points.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((-0.65..=-0.35).contains(&slope), "log-log slope {slope}");
}

#[test]
fn staggered_designs_follow_their_predicted_verdicts() {
    for (id, reps) in [("MP-FE", 60), ("MP-AR1", 60)] {
        let v = sim::run_scenario(id, None, Some(reps), 5).unwrap();
        assert!(
            v.pass,
            "{id}: {} ± {} expected {}",
            v.delta_post, v.mcse, v.expected
        );
    }
}

#[test]
fn scenario_catalog_errors() {
    assert!(matches!(scenario("NOPE"), Err(didsens::Error::Catalog(_))));
    let mut s = scenario("RANDOM").unwrap();
    s.reps = 1;
    assert!(matches!(sim::run(&s, 1), Err(didsens::Error::Argument(_))));
}

#[test]
fn verdicts_are_reproducible() {
    let a = sim::run_scenario("SUFF-FE", Some(2_000), Some(20), 77).unwrap();
    let b = sim::run_scenario("SUFF-FE", Some(2_000), Some(20), 77).unwrap();
    assert_eq!(a, b);
}
