use std::fmt::Write as _;
use std::path::Path;

use didsens::did::rho_grid;
use didsens::sim::{self, measure_pt_gap, measure_staggered_gap, LatentPanel, SimConfig};
use didsens::{
    att_gt_table, estimate_rho, load_panel_csv, pt_mp_check, write_panel_csv, CsvSchema,
    DesignSpec, DidEstimate, Error, PanelDataset, Result, TwoPeriodSample,
};
use serde_json::{json, Value};

use crate::args::{
    AttgtArgs, DataArgs, EstimateArgs, RhoArgs, SensitivityArgs, SimulateArgs, VerifyArgs,
};

/// What a command produced.
pub struct Outcome {
    pub json: Value,
    /// Printed instead of the JSON when present.
    pub text: Option<String>,
    pub files: Vec<(String, Vec<u8>)>,
    /// Digest source: the input file, if any.
    pub input: Option<std::path::PathBuf>,
    pub success: bool,
}

impl Outcome {
    fn json(json: Value, input: Option<&Path>) -> Self {
        Self {
            json,
            text: None,
            files: vec![],
            input: input.map(Path::to_path_buf),
            success: true,
        }
    }
}

fn load(data: &DataArgs) -> Result<PanelDataset> {
    let schema = CsvSchema::new(&data.id_col, &data.period_col, &data.y_col, &data.group_col);
    load_panel_csv(&data.data, &schema)
}

fn parse_design(design: Option<&str>) -> Result<Option<DesignSpec>> {
    match design {
        None => Ok(None),
        Some(s) if s.trim().eq_ignore_ascii_case("default") => Ok(Some(DesignSpec::nsw_default())),
        Some(s) => s.parse().map(Some),
    }
}

fn estimate_json(e: &DidEstimate) -> Value {
    let (lo, hi) = e.ci();
    json!({ "point": e.point, "se": e.se, "ci_lo": lo, "ci_hi": hi })
}

fn numbers(text: &str, sep: char, count: usize, flag: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(sep).map(str::trim).collect();
    if parts.len() != count {
        return Err(Error::Argument(format!(
            "--{flag} expects {count} values separated by '{sep}', got '{text}'"
        )));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Argument(format!("--{flag}: '{p}' is not a number")))
        })
        .collect()
}

fn whole(v: f64, flag: &str) -> Result<i64> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Argument(format!(
            "--{flag}: periods must be integers, got {v}"
        )));
    }
    Ok(v as i64)
}

pub fn estimate(args: &EstimateArgs) -> Result<Outcome> {
    let ds = load(&args.data)?;
    let spec = parse_design(args.design.as_deref())?;
    let sample = TwoPeriodSample::from_dataset(&ds, args.pre, args.post, spec.as_ref())?;
    let est = sample.did()?;
    let json = json!({
        "estimator": if spec.is_some() { "regression_adjusted_did" } else { "did" },
        "pre": args.pre,
        "post": args.post,
        "design": spec.as_ref().map(|s| s.to_string()),
        "n_treated": sample.n_treated(),
        "n_control": sample.n_control(),
        "point": est.point,
        "se": est.se,
        "ci_lo": est.ci().0,
        "ci_hi": est.ci().1,
    });
    Ok(Outcome::json(json, Some(&args.data.data)))
}

pub fn sensitivity(args: &SensitivityArgs) -> Result<Outcome> {
    // Flags are checked before any data is read.
    let grid = args
        .rho_grid
        .as_deref()
        .map(|g| {
            let v = numbers(g, ':', 3, "rho-grid")?;
            rho_grid(v[0], v[1], v[2])
        })
        .transpose()?;
    let bounds = args
        .rho_bounds
        .as_deref()
        .map(|b| numbers(b, ',', 2, "rho-bounds"))
        .transpose()?;
    if let Some(b) = &bounds {
        if !(b[0] <= b[1]) {
            return Err(Error::Argument(format!(
                "--rho-bounds: lower bound {} exceeds upper bound {}",
                b[0], b[1]
            )));
        }
    }
    let benchmark = args
        .rho_benchmark
        .as_deref()
        .map(|b| numbers(b, ',', 3, "rho-benchmark"))
        .transpose()?;

    let ds = load(&args.data)?;
    let spec = parse_design(args.design.as_deref())?;
    let sample = TwoPeriodSample::from_dataset(&ds, args.pre, args.post, spec.as_ref())?;
    let did = sample.did()?;
    let bias = sample.bias()?;

    let rho = match &benchmark {
        Some(b) => {
            let k = b[2];
            if !(k >= 1.0) || k.fract() != 0.0 {
                return Err(Error::Argument(format!(
                    "--rho-benchmark: horizon must be a positive integer, got {k}"
                )));
            }
            let r = estimate_rho(
                &ds,
                whole(b[0], "rho-benchmark")?,
                whole(b[1], "rho-benchmark")?,
                k as u32,
                spec.as_ref(),
            )?;
            Some(r)
        }
        None => None,
    };
    let set = match &bounds {
        Some(b) => Some(sample.identified_set(b[0], b[1])?),
        None => None,
    };
    let mut files = vec![];
    let curve = match &grid {
        Some(g) => {
            let c = sample.sensitivity_curve(g)?;
            let mut buf = Vec::new();
            c.write_csv(&mut buf)?;
            files.push(("sensitivity_curve.csv".to_string(), buf));
            Some(c)
        }
        None => None,
    };
    let json = json!({
        "pre": args.pre,
        "post": args.post,
        "design": spec.as_ref().map(|s| s.to_string()),
        "did": estimate_json(&did),
        "bias": estimate_json(&bias),
        "rho_benchmark": rho,
        "identified_set": set,
        "curve": curve,
    });
    Ok(Outcome {
        files,
        ..Outcome::json(json, Some(&args.data.data))
    })
}

pub fn rho(args: &RhoArgs) -> Result<Outcome> {
    let ds = load(&args.data)?;
    let spec = parse_design(args.design.as_deref())?;
    let r = estimate_rho(&ds, args.from, args.to, args.horizon, spec.as_ref())?;
    let json = json!({
        "from": args.from,
        "to": args.to,
        "design": spec.as_ref().map(|s| s.to_string()),
        "per_step": r.per_step,
        "horizon": r.horizon,
        "adjusted": r.adjusted,
    });
    Ok(Outcome::json(json, Some(&args.data.data)))
}

pub fn attgt(args: &AttgtArgs) -> Result<Outcome> {
    let ds = load(&args.data)?;
    let table = att_gt_table(&ds)?;
    let gaps = pt_mp_check(&ds)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    let json = json!({ "cells": table.cells, "pretrend_gaps": gaps });
    Ok(Outcome {
        files: vec![("attgt.csv".to_string(), buf)],
        ..Outcome::json(json, Some(&args.data.data))
    })
}

fn latents_csv(p: &LatentPanel) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "id",
        "period",
        "group",
        "alpha",
        "alpha_lambda",
        "nu",
        "x",
        "x_lambda",
        "eps",
        "eps_lambda",
        "eta",
        "y0",
        "y1",
    ])
    .map_err(io)?;
    for i in 0..p.n() {
        for t in 0..p.t() {
            w.write_record([
                format!("u{i}"),
                p.periods[t].to_string(),
                p.groups[i].to_string(),
                p.alpha[i].to_string(),
                p.alpha_lambda[i].to_string(),
                p.nu[i].to_string(),
                p.at(&p.x, i, t).to_string(),
                p.at(&p.x_lambda, i, t).to_string(),
                p.at(&p.eps, i, t).to_string(),
                p.at(&p.eps_lambda, i, t).to_string(),
                p.at(&p.eta, i, t).to_string(),
                p.at(&p.y0, i, t).to_string(),
                p.at(&p.y1, i, t).to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn simulate(args: &SimulateArgs, seed: u64) -> Result<Outcome> {
    let mut config: SimConfig = match (&args.config, &args.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        (None, Some(id)) => sim::scenario(id)?.config,
        (None, None) => {
            return Err(Error::Argument(
                "either --config or --scenario is required".into(),
            ))
        }
    };
    if let Some(n) = args.n {
        config.n = n;
    }
    if args.print_config {
        let text = toml::to_string(&config).map_err(|e| Error::Config(e.to_string()))?;
        let mut o = Outcome::json(Value::Null, args.config.as_deref());
        o.text = Some(text);
        return Ok(o);
    }
    let panel = sim::simulate_panel(&config, seed)?;
    let gap = if panel.is_staggered() {
        measure_staggered_gap(&panel)?
    } else {
        measure_pt_gap(&panel, true)?
    };
    let ds = panel.dataset()?;
    let mut observed = Vec::new();
    write_panel_csv(&mut observed, &ds, &CsvSchema::default())?;
    let json = json!({
        "n": panel.n(),
        "periods": panel.periods,
        "treated_share": panel.treated_share(),
        "true_att": panel.true_att(),
        "delta_post": gap.delta_post,
        "deltapost1": gap.components.map(|c| c.0),
        "deltapost2": gap.components.map(|c| c.1),
    });
    let files = vec![
        ("panel.csv".to_string(), observed),
        ("latents.csv".to_string(), latents_csv(&panel)?),
    ];
    Ok(Outcome {
        files,
        ..Outcome::json(json, args.config.as_deref())
    })
}

pub fn verify(args: &VerifyArgs, seed: u64) -> Result<Outcome> {
    if args.reps == Some(0) {
        return Err(Error::Argument("--reps must be positive".into()));
    }
    if args.n == Some(0) {
        return Err(Error::Argument("--n must be positive".into()));
    }
    let ids: Vec<String> = match &args.scenario {
        Some(id) => {
            sim::scenario(id)?;
            vec![id.clone()]
        }
        None => sim::scenario_ids().iter().map(|s| s.to_string()).collect(),
    };
    let verdicts = ids
        .iter()
        .map(|id| sim::run_scenario(id, args.n, args.reps, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut text = format!(
        "{:<20} {:>12} {:>10} {:>10} {:>6}\n",
        "id", "delta_post", "mcse", "expected", "pass"
    );
    let mut csv = String::from("id,delta_post,mcse,deltapost1,deltapost2,expected,pass,n,reps\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for v in &verdicts {
        let _ = writeln!(
            text,
            "{:<20} {:>12.6} {:>10.6} {:>10} {:>6}",
            v.id,
            v.delta_post,
            v.mcse,
            v.expected.to_string(),
            if v.pass { "PASS" } else { "FAIL" }
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            v.id,
            v.delta_post,
            v.mcse,
            opt(v.deltapost1),
            opt(v.deltapost2),
            v.expected,
            v.pass,
            v.n,
            v.reps
        );
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    let _ = writeln!(text, "{passed}/{} scenarios pass", verdicts.len());
    let success = passed == verdicts.len();
    Ok(Outcome {
        json: json!({ "verdicts": verdicts, "all_pass": success }),
        text: Some(text),
        files: vec![("verify.csv".to_string(), csv.into_bytes())],
        input: None,
        success,
    })
}
