mod common;

use didsens::rng::substream;
use didsens::sim::{
    majority_vote_select, AlphaLaw, Assignment, ErrorProcess, OutcomeModel, SelectionMechanism,
    SimConfig, TreatmentEffect, UnitDraw,
};
use didsens::{
    att_gt, did_2x2, ols, DesignSpec, GroupLabel, Matrix, PanelDataset, TwoPeriodSample, UnitRecord,
};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Binomial, DiscreteCDF};

use common::{nsw, rel_close};

fn mean_where(values: &[f64], mask: &[bool], want: bool) -> f64 {
    let picked: Vec<f64> = values
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m == want)
        .map(|(v, _)| *v)
        .collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

#[test]
fn ols_matches_householder_qr() {
    let mut rng = substream(3, 0);
    let (n, k) = (50, 4);
    let mut cols = vec![vec![1.0; n]];
    for _ in 1..k {
        cols.push((0..n).map(|_| StandardNormal.sample(&mut rng)).collect());
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            1.5 - 2.0 * cols[1][i] + 0.3 * cols[2][i] + 4.0 * cols[3][i] + noise
        })
        .collect();
    let design = Matrix::from_columns(&cols, (0..k).map(|j| format!("c{j}")).collect()).unwrap();
    let fit = ols(&design, &y).unwrap();

    let x = DMatrix::from_fn(n, k, |i, j| cols[j][i]);
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * DVector::from_vec(y.clone());
    let beta = qr.r().solve_upper_triangular(&qty).unwrap();
    for j in 0..k {
        assert!(
            (fit.coefficients[j] - beta[j]).abs() < 1e-8,
            "coef {j}: {} vs {}",
            fit.coefficients[j],
            beta[j]
        );
    }
    let resid = DVector::from_vec(y) - x * beta;
    for i in 0..n {
        assert!((fit.residuals[i] - resid[i]).abs() < 1e-8);
    }
}

#[test]
fn nsw_fixture_shape() {
    let ds = nsw();
    assert_eq!(ds.n_units(), 16_177);
    assert_eq!(ds.periods(), &[1974, 1975, 1978]);
    let treated = ds.treated_mask().unwrap().iter().filter(|&&g| g).count();
    assert_eq!(treated, 185);
}

#[test]
fn nsw_gaps_match_hand_computed_means() {
    let ds = nsw();
    let g = ds.treated_mask().unwrap();
    let y75 = ds.outcomes_at(1975).unwrap();
    let y78 = ds.outcomes_at(1978).unwrap();
    let change: Vec<f64> = y78.iter().zip(y75).map(|(b, a)| b - a).collect();
    let did_hand = mean_where(&change, &g, true) - mean_where(&change, &g, false);
    let bias_hand = mean_where(y75, &g, true) - mean_where(y75, &g, false);

    let s = TwoPeriodSample::from_dataset(&ds, 1975, 1978, None).unwrap();
    assert!((s.did().unwrap().point - did_hand).abs() < 1e-8);
    assert!((s.bias().unwrap().point - bias_hand).abs() < 1e-8);
    assert!(rel_close(bias_hand, -12_119.0, 0.001), "{bias_hand}");
    assert!((did_2x2(&ds, 1975, 1978).unwrap().point - did_hand).abs() < 1e-8);
}

#[test]
fn nsw_att_at_benchmark_persistence() {
    let ds = nsw();
    let plain = TwoPeriodSample::from_dataset(&ds, 1975, 1978, None).unwrap();
    let att = plain.att_at_rho(0.603).unwrap().point;
    assert!((att - -1190.0).abs() < 10.0, "{att}");
    let adjusted =
        TwoPeriodSample::from_dataset(&ds, 1975, 1978, Some(&DesignSpec::nsw_default())).unwrap();
    let att = adjusted.att_at_rho(0.566).unwrap().point;
    assert!((att - -217.0).abs() < 10.0, "{att}");
}

#[test]
fn nsw_curve_slope_is_minus_bias() {
    let ds = nsw();
    let s = TwoPeriodSample::from_dataset(&ds, 1975, 1978, None).unwrap();
    let grid = didsens::did::rho_grid(0.4, 1.2, 0.1).unwrap();
    assert_eq!(grid.len(), 9);
    let curve = s.sensitivity_curve(&grid).unwrap();
    let slope = (curve.att[8] - curve.att[0]) / (grid[8] - grid[0]);
    assert!((slope - 12_118.75).abs() < 0.01, "{slope}");
    for w in curve.att.windows(2) {
        assert!(w[1] > w[0]);
    }
}

#[test]
fn nsw_identified_set_over_persistence_range() {
    let ds = nsw();
    let s = TwoPeriodSample::from_dataset(&ds, 1975, 1978, None).unwrap();
    let set = s.identified_set(0.55, 0.66).unwrap();
    let did = 3621.2319;
    let bias = -12118.7481;
    assert!(
        (set.lo - (did - (0.55 - 1.0) * bias)).abs() < 0.1,
        "{set:?}"
    );
    assert!(
        (set.hi - (did - (0.66 - 1.0) * bias)).abs() < 0.1,
        "{set:?}"
    );
    assert!(set.robust_ci.0 < set.lo && set.hi < set.robust_ci.1);
    assert!(set.hi < 0.0);
}

#[test]
fn nsw_bootstrap_agrees_with_influence_se() {
    let ds = nsw();
    let s = TwoPeriodSample::from_dataset(&ds, 1975, 1978, None).unwrap();
    let r = s.oracle_check(1.0, 999, 5).unwrap();
    assert_eq!(r.reps, 999);
    assert!(rel_close(r.influence_se, 610.0, 0.01));
    assert!(rel_close(r.bootstrap_se, 610.0, 0.10), "{}", r.bootstrap_se);
}

#[test]
fn majority_of_random_voters_matches_binomial_tail() {
    let cfg = SimConfig {
        n: 1,
        periods: 2,
        outcome: OutcomeModel::TwoWay {
            lambda: vec![0.0, 1.0],
        },
        errors: ErrorProcess::IidNormal { sigma: 1.0 },
        alpha: AlphaLaw::standard(),
        covariate: None,
        assignment: Assignment::Binary {
            mechanism: SelectionMechanism::Random { p: 0.4 },
        },
        effect: TreatmentEffect::constant(0.0),
    };
    let member = SelectionMechanism::Random { p: 0.4 };
    let m = 101;
    let draws = 10_000;
    let mut rng = substream(17, 0);
    let mut members = vec![UnitDraw::zeros(2); m];
    let mut yes = 0usize;
    for _ in 0..draws {
        for d in members.iter_mut() {
            cfg.draw_unit(&mut rng, d);
        }
        yes += usize::from(majority_vote_select(&member, &members, cfg.context()).unwrap());
    }
    let freq = yes as f64 / draws as f64;
    // at least 51 of 101 members vote yes
    let exact = Binomial::new(0.4, m as u64).unwrap().sf(50);
    let mcse = (exact * (1.0 - exact) / draws as f64).sqrt();
    assert!((freq - exact).abs() < 4.0 * mcse, "{freq} vs {exact}");
}

#[test]
fn two_period_staggered_cell_is_plain_did() {
    let mut rng = substream(23, 0);
    let units: Vec<UnitRecord> = (0..200)
        .map(|i| {
            let treated = i % 3 == 0;
            let a: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            UnitRecord {
                id: format!("u{i}"),
                group: if treated {
                    GroupLabel::Cohort(2)
                } else {
                    GroupLabel::Never
                },
                outcomes: vec![a, a + 0.5 + e + if treated { 2.0 } else { 0.0 }],
                covariates: vec![],
            }
        })
        .collect();
    let staggered = PanelDataset::new(vec![1, 2], vec![], units).unwrap();
    let binary = staggered
        .with_groups(
            staggered
                .groups()
                .iter()
                .map(|g| GroupLabel::Binary(*g == GroupLabel::Cohort(2)))
                .collect(),
        )
        .unwrap();
    let a = att_gt(&staggered, 2, 2).unwrap();
    let b = did_2x2(&binary, 1, 2).unwrap();
    assert!((a.point - b.point).abs() < 1e-12);
    assert!((a.se - b.se).abs() < 1e-12);
}
