use std::fs;
use std::io::Write;

use serde_json::json;
use tokenbound::assembly::{assemble_bound, BoundConfig, LossMode};
use tokenbound::coding::{quantized_code_length, union_complexity};
use tokenbound::concentration::{sigma_grid, GridK};
use tokenbound::harness::{
    coverage_suite, default_coverage_suite, generate_trace, tightness_report, BoundKind, McConfig, PredictorSpec,
    TokenProcessSpec,
};
use tokenbound::io::{
    coverage_table, density_table, load_json, load_matrix, load_trace, parse_report, read_checkpoint_curves,
    read_online_curve, save_trace, term_breakdown_table, tightness_table, to_canonical_json, ReportDocument, Table,
    TraceFormat,
};
use tokenbound::prequential::{
    asymptotic_kh, crossover_point, exact_kh_sum, prequential_complexity, prequential_kh, AsymptoticForm,
};
use tokenbound::presets::presets;
use tokenbound::scaling::{fit_growth_law, fit_power_law, optimal_allocation, select_frontier, ChinchillaParams};
use tokenbound::smoothing::{optimal_alpha, smoothing_guarantee, smoothing_overhead};
use tokenbound::spectral::{
    ldlq_quantize, required_bits, slq_param_sizing, slq_trace_sqrt, DenseOperator, IncoherenceTransform, Quantizer,
    SlqConfig, TransformKind,
};
use tokenbound::{Error, Result};

use crate::{
    BoundChoice, BoundCmd, Cli, Command, GlobalOpts, OutputFormat, PreqCmd, QuantizerChoice, ScalingCmd,
    SpectralCmd, Suite, TransformChoice,
};

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Bound(BoundCmd::Eval(a)) => {
            let trace = load_trace(&a.trace)?;
            let tokens = a.tokens.unwrap_or(trace.parent_size().unwrap_or(trace.len() as u64));
            let mut cfg = BoundConfig::new(a.params, tokens, trace.vocab());
            cfg.bits_per_param = g.bits;
            cfg.delta_fail = g.delta;
            cfg.grid = GridK::uniform(g.grid_size)?;
            cfg.complexity_override = a.complexity;
            cfg.sigma_override = a.sigma;
            cfg.loss_mode = if a.literal { LossMode::Literal } else { LossMode::Smoothed };
            let report = assemble_bound(&trace, &cfg)?;
            let config = json!({
                "trace": a.trace, "params": a.params, "tokens": tokens, "bits": g.bits, "delta": g.delta,
                "grid_size": g.grid_size, "complexity": a.complexity, "sigma": a.sigma, "literal": a.literal,
            });
            match g.format {
                OutputFormat::Csv => write(g, &term_breakdown_table(&[(a.label.clone(), report)])?.to_csv()?),
                OutputFormat::Json => emit(g, "bound_report", config, &report),
            }
        }
        Command::Bound(BoundCmd::Mc(a)) => {
            let specs: Vec<TokenProcessSpec> = match &a.spec {
                Some(path) => load_specs(path)?,
                None => default_coverage_suite(a.vocab, a.horizons[0], g.seed),
            };
            let mut mc = McConfig::new(a.trials, g.delta, g.grid_size)?;
            mc.predictor = PredictorSpec { alpha: a.alpha, ..PredictorSpec::default() };
            let config = json!({
                "suite": format!("{:?}", a.suite).to_lowercase(), "specs": specs, "trials": a.trials,
                "delta": g.delta, "grid_size": g.grid_size, "predictor": mc.predictor, "horizons": a.horizons,
            });
            let table = match a.suite {
                Suite::Coverage => {
                    let mut results = Vec::new();
                    let kinds: Vec<BoundKind> = a.bounds.iter().map(|b| bound_kind(*b)).collect();
                    for spec in &specs {
                        results.extend(coverage_suite(&kinds, spec, &mc)?);
                    }
                    coverage_table(&results)?
                }
                Suite::Tightness => tightness_table(&tightness_report(&specs, &a.horizons, &mc)?)?,
            };
            emit_table(g, "mc_table", config, &table)
        }
        Command::Bound(BoundCmd::Synth(a)) => {
            let spec: TokenProcessSpec = load_json(&a.spec)?;
            let alpha = match a.params {
                Some(n) => {
                    let nats = quantized_code_length(n, g.bits)?.nats;
                    let c = union_complexity(nats, spec.horizon as u64, g.grid_size, g.delta)?;
                    optimal_alpha(c, spec.vocab as u64)?.alpha()
                }
                None => a.alpha,
            };
            let predictor = PredictorSpec { alpha, ..PredictorSpec::default() };
            let synth = generate_trace(&spec, &predictor)?;
            let format: TraceFormat = a.trace_format.parse()?;
            let path = g.out.as_ref().ok_or_else(|| Error::domain("bound synth needs --out"))?;
            save_trace(&synth.trace, path, format)
        }
        Command::Sigma(a) => {
            let trace = load_trace(&a.trace)?;
            if !(trace.alpha_used() > 0.0) {
                return Err(Error::domain("Σ needs a smoothed trace (alpha_used > 0)"));
            }
            let grid = GridK::uniform(g.grid_size)?;
            let tokens = a.tokens.unwrap_or(trace.parent_size().unwrap_or(trace.len() as u64));
            let complexity = match (a.complexity, a.params) {
                (Some(c), _) => c,
                (None, Some(n)) => {
                    union_complexity(quantized_code_length(n, g.bits)?.nats, tokens, grid.len(), g.delta)?
                }
                (None, None) => return Err(Error::domain("sigma needs --complexity or --params")),
            };
            let delta_range = (trace.vocab() as f64 / trace.alpha_used()).ln();
            let result = sigma_grid(&trace.deviation_sequence()?, delta_range, complexity, &grid)?;
            let config = json!({ "trace": a.trace, "complexity": complexity, "grid_size": g.grid_size });
            emit(g, "sigma", config, &json!({ "sigma": result, "delta_range": delta_range, "complexity": complexity }))
        }
        Command::Smooth(a) => {
            let complexity = match (a.complexity, a.params, a.tokens) {
                (Some(c), _, _) => c,
                (None, Some(n), Some(d)) => union_complexity(quantized_code_length(n, g.bits)?.nats, d, g.grid_size, g.delta)?,
                _ => return Err(Error::domain("smooth needs --complexity or both --params and --tokens")),
            };
            let spec = optimal_alpha(complexity, a.vocab)?;
            let guarantee = a.risk.map(|r| smoothing_guarantee(r, complexity, a.vocab)).transpose()?;
            let report = json!({
                "complexity": complexity,
                "alpha": spec.alpha(),
                "delta_s": spec.worst_case_nats(),
                "overhead": smoothing_overhead(complexity, a.vocab)?,
                "guarantee": guarantee,
            });
            emit(g, "smoothing", json!({ "vocab": a.vocab, "complexity": complexity, "risk": a.risk }), &report)
        }
        Command::Preq(cmd) => preq(g, cmd),
        Command::Scaling(cmd) => scaling(g, cmd),
        Command::Spectral(cmd) => spectral(g, cmd),
        Command::Report(a) => {
            let text = fs::read_to_string(&a.input)?;
            let is_json = text.trim_start().starts_with('{');
            match (is_json, g.format) {
                (true, OutputFormat::Json) => {
                    let doc: ReportDocument<serde_json::Value> = parse_report(&text)?;
                    write(g, &doc.to_json()?)
                }
                (true, OutputFormat::Csv) => {
                    let doc: ReportDocument<serde_json::Value> = parse_report(&text)?;
                    write(g, &document_to_table(&doc)?.to_csv()?)
                }
                (false, OutputFormat::Json) => {
                    emit(g, "table", json!({ "source": a.input }), &Table::from_csv(text.as_bytes())?)
                }
                (false, OutputFormat::Csv) => write(g, &Table::from_csv(text.as_bytes())?.to_csv()?),
            }
        }
    }
}

fn preq(g: &GlobalOpts, cmd: &PreqCmd) -> Result<()> {
    let p = presets();
    match cmd {
        PreqCmd::Kh(a) => {
            let curve = read_online_curve(fs::File::open(&a.curve)?)?;
            emit(g, "prequential_kh", json!({ "curve": a.curve, "length": curve.len() }), &prequential_kh(&curve))
        }
        PreqCmd::Asymptotic(a) => {
            let beta = a.beta.unwrap_or(p.data_exponent);
            let params = ChinchillaParams::new(0.0, 1.0, a.coef_b, 1.0, beta)?;
            let form = if a.literal { AsymptoticForm::Literal } else { AsymptoticForm::WithCoefficient };
            let exact = exact_kh_sum(&params, a.tokens)?;
            let asymptotic = asymptotic_kh(&params, a.tokens, form)?;
            let report = json!({
                "exact_nats": exact,
                "asymptotic_nats": asymptotic,
                "relative_difference": (exact - asymptotic) / asymptotic,
            });
            emit(g, "prequential_asymptotic", json!({ "tokens": a.tokens, "beta": beta, "coef_b": a.coef_b, "literal": a.literal }), &report)
        }
        PreqCmd::Crossover(a) => {
            let k = a.k_bits.unwrap_or(p.prequential_growth_fit.coefficient);
            let exponent = a.exponent.unwrap_or(p.prequential_growth_fit.exponent);
            let result = crossover_point(k, exponent, g.bits)?;
            emit(g, "crossover", json!({ "k_bits": k, "exponent": exponent, "bits": g.bits }), &result)
        }
        PreqCmd::Complexity(a) => {
            let c = prequential_complexity(a.kh_nats, a.tokens, g.grid_size, g.delta)?;
            let config = json!({ "kh_nats": a.kh_nats, "tokens": a.tokens, "grid_size": g.grid_size, "delta": g.delta });
            emit(g, "prequential_complexity", config, &json!({ "complexity": c }))
        }
    }
}

fn scaling(g: &GlobalOpts, cmd: &ScalingCmd) -> Result<()> {
    match cmd {
        ScalingCmd::Fit(a) => {
            let table = Table::from_csv(fs::File::open(&a.points)?)?;
            let points = xy_points(&table)?;
            let config = json!({ "points": a.points, "growth": a.growth });
            if a.growth {
                emit(g, "growth_law_fit", config, &fit_growth_law(&points)?)
            } else {
                emit(g, "power_law_fit", config, &fit_power_law(&points)?)
            }
        }
        ScalingCmd::Frontier(a) => {
            let curves = read_checkpoint_curves(fs::File::open(&a.curves)?)?;
            let selections = select_frontier(&curves, a.ratio)?;
            emit(g, "frontier", json!({ "curves": a.curves, "ratio": a.ratio }), &selections)
        }
        ScalingCmd::Allocate(a) => {
            let params: ChinchillaParams = match &a.params {
                Some(path) => load_json(path)?,
                None => presets().chinchilla_replication,
            };
            params.validate()?;
            emit(g, "allocation", json!({ "compute": a.compute, "params": params }), &optimal_allocation(&params, a.compute)?)
        }
    }
}

fn spectral(g: &GlobalOpts, cmd: &SpectralCmd) -> Result<()> {
    match cmd {
        SpectralCmd::Slq(a) => {
            let op = DenseOperator::new(load_matrix(&a.matrix)?)?;
            let probe = a.probe.parse()?;
            let (steps, probes) = match (a.steps, a.probes) {
                (Some(s), Some(p)) => (s, p),
                (s, p) => {
                    let pilot_steps = op_dim(&op).min(64);
                    let mut pilot = SlqConfig::new(pilot_steps, 4, g.seed ^ 0x5eed);
                    pilot.shift_mode = true;
                    let est = slq_trace_sqrt(&op, &pilot)?;
                    if !(est.lambda_min_est > 0.0) {
                        return Err(Error::domain("sizing from the spectrum needs a positive definite matrix; pass --steps and --probes"));
                    }
                    let kappa = est.lambda_max_est / est.lambda_min_est;
                    let sizing = slq_param_sizing(kappa, est.lambda_max_est, est.lambda_min_est, a.eps, a.eta)?;
                    (s.unwrap_or(sizing.steps), p.unwrap_or(sizing.num_probes))
                }
            };
            let mut cfg = SlqConfig::new(steps, probes, g.seed);
            cfg.probe = probe;
            cfg.shift_mode = a.shift;
            let est = slq_trace_sqrt(&op, &cfg)?;
            let config = json!({ "matrix": a.matrix, "slq": cfg, "eps": a.eps, "eta": a.eta });
            match g.format {
                OutputFormat::Csv => write(g, &density_table(&est, a.bins)?.to_csv()?),
                OutputFormat::Json => emit(g, "spectral_estimate", config, &est),
            }
        }
        SpectralCmd::Ldlq(a) => {
            let h = load_matrix(&a.matrix)?;
            let w_mat = load_matrix(&a.weights)?;
            let w = nalgebra::DVector::from_iterator(w_mat.len(), w_mat.transpose().iter().copied());
            let step = a.step.unwrap_or(2f64.powf(-g.bits));
            let (h_w, w_w) = match a.transform {
                TransformChoice::None => (h, w),
                TransformChoice::Gaussian | TransformChoice::Orthogonal => {
                    let kind = if a.transform == TransformChoice::Gaussian {
                        TransformKind::Gaussian
                    } else {
                        TransformKind::Orthogonal
                    };
                    let t = IncoherenceTransform::sample(h.nrows(), kind, g.seed)?;
                    (t.transform_hessian(&h)?, t.transform_weights(&w)?)
                }
            };
            let quantizer = match a.quantizer {
                QuantizerChoice::Nearest => Quantizer::Nearest,
                QuantizerChoice::Stochastic => Quantizer::Stochastic,
            };
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(g.seed);
            let result = ldlq_quantize(w_w.as_slice(), &h_w, quantizer, step, &mut rng)?;
            let config = json!({
                "matrix": a.matrix, "weights": a.weights, "step": step,
                "transform": format!("{:?}", a.transform).to_lowercase(),
                "quantizer": format!("{:?}", a.quantizer).to_lowercase(),
            });
            emit(g, "ldlq", config, &result)
        }
        SpectralCmd::Bits(a) => {
            let bits = required_bits(a.trace_sqrt, a.params, a.budget, g.delta)?;
            let config = json!({ "trace_sqrt": a.trace_sqrt, "params": a.params, "budget": a.budget, "delta": g.delta });
            emit(g, "required_bits", config, &json!({ "bits_per_param": bits }))
        }
    }
}

fn op_dim(op: &DenseOperator) -> usize {
    use tokenbound::spectral::SymmetricOperator;
    op.dim()
}

fn bound_kind(b: BoundChoice) -> BoundKind {
    match b {
        BoundChoice::Azuma => BoundKind::Azuma,
        BoundChoice::FreedmanMaintext => BoundKind::FreedmanMaintext,
        BoundChoice::FreedmanAppendix => BoundKind::FreedmanAppendix,
    }
}

fn load_specs(path: &std::path::Path) -> Result<Vec<TokenProcessSpec>> {
    let value: serde_json::Value = load_json(path)?;
    if value.is_array() {
        Ok(serde_json::from_value(value)?)
    } else {
        Ok(vec![serde_json::from_value(value)?])
    }
}

fn xy_points(table: &Table) -> Result<Vec<(f64, f64)>> {
    let col = |name: &str| {
        table.columns().iter().position(|c| c == name).ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let (ix, iy) = (col("x")?, col("y")?);
    let num = |c: &tokenbound::io::Cell, row: usize| match c {
        tokenbound::io::Cell::Num(v) => Ok(*v),
        tokenbound::io::Cell::Int(v) => Ok(*v as f64),
        _ => Err(Error::InvalidRecord { index: row as u64, reason: "expected a number".into() }),
    };
    table.rows().iter().enumerate().map(|(i, r)| Ok((num(&r[ix], i)?, num(&r[iy], i)?))).collect()
}

/// Tabular view of a report document, for CSV conversion.
fn document_to_table(doc: &ReportDocument<serde_json::Value>) -> Result<Table> {
    match doc.kind.as_str() {
        "bound_report" => {
            let report = serde_json::from_value(doc.report.clone())?;
            term_breakdown_table(&[("model".to_string(), report)])
        }
        "spectral_estimate" => density_table(&serde_json::from_value(doc.report.clone())?, 50),
        _ => match serde_json::from_value::<Table>(doc.report.clone()) {
            Ok(t) => Ok(t),
            Err(_) => flat_table(&doc.report),
        },
    }
}

/// One row of scalar fields.
fn flat_table(value: &serde_json::Value) -> Result<Table> {
    let obj = value.as_object().ok_or_else(|| Error::Schema("report has no tabular form".into()))?;
    let scalars: Vec<(&String, &serde_json::Value)> =
        obj.iter().filter(|(_, v)| v.is_number() || v.is_boolean() || v.is_string()).collect();
    let mut t = Table::new(scalars.iter().map(|(k, _)| k.to_string()));
    t.push_row(
        scalars
            .iter()
            .map(|(_, v)| match v {
                serde_json::Value::Bool(b) => (*b).into(),
                serde_json::Value::Number(n) if n.is_i64() => tokenbound::io::Cell::Int(n.as_i64().unwrap_or(0)),
                serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN).into(),
                other => other.as_str().unwrap_or_default().into(),
            })
            .collect(),
    )?;
    Ok(t)
}

fn emit<T: serde::Serialize>(g: &GlobalOpts, kind: &str, config: serde_json::Value, report: &T) -> Result<()> {
    match g.format {
        OutputFormat::Json => {
            let doc = ReportDocument::new(kind, Some(g.seed), config, report)?;
            write(g, &doc.to_json()?)
        }
        OutputFormat::Csv => {
            let doc = ReportDocument::new(kind, Some(g.seed), config, report)?;
            let parsed: ReportDocument<serde_json::Value> = parse_report(&to_canonical_json(&doc)?)?;
            write(g, &document_to_table(&parsed)?.to_csv()?)
        }
    }
}

fn emit_table(g: &GlobalOpts, kind: &str, config: serde_json::Value, table: &Table) -> Result<()> {
    match g.format {
        OutputFormat::Csv => write(g, &table.to_csv()?),
        OutputFormat::Json => emit(g, kind, config, table),
    }
}

fn write(g: &GlobalOpts, text: &str) -> Result<()> {
    match &g.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}
