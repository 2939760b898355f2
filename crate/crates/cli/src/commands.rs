use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use satsynth::evaluation::{
    coefficient_overlaps, frontier_point, trimmed_mean_pct_diff, within_p_percent,
    write_frontier_csv, write_overlaps_csv, FrontierPoint, TermOverlap, VarianceRule, ZeroPairRule,
};
use satsynth::generator::{generate_table, GeneratorSpec};
use satsynth::loglin::{fit_loglinear, LoglinFit, MarginSpec, DESK_CELL_LIMIT};
use satsynth::models::{CountModelSpec, Family};
use satsynth::synthesis::{
    provenance_comments, provenance_path, read_provenance, synthesize_replicate, write_provenance,
    Execution, Provenance, SynthesisJob,
};
use satsynth::table::{
    read_microdata, read_table, write_table_with_comments, CategoricalSchema,
    SparseContingencyTable, ZeroBasis,
};
use satsynth::tau::{tau_analytic, tau_empirical, tau_standard_errors};
use satsynth::tuning::{tune, TuningTarget};
use serde_json::json;

use crate::args::{
    AggregateArgs, EvaluateArgs, FamilyArg, FitArgs, FrontierArgs, GenerateArgs, MetricsArgs,
    ModelArgs, SynthesizeArgs, TargetArg, TuneArgs, VarianceArg, ZeroRuleArg,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Poisson => Family::Poisson,
            FamilyArg::Nbi => Family::Nbi,
            FamilyArg::Pig => Family::Pig,
        }
    }
}

/// Report header lines: tool version, command and its parameters.
fn header(command: &str, params: &[(&str, String)]) -> Vec<String> {
    let mut lines = vec![format!("satsynth {VERSION} {command}")];
    lines.extend(params.iter().map(|(k, v)| format!("{k}={v}")));
    lines
}

fn create(path: &Path, comments: &[String]) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(out)
}

fn load_table(path: &Path) -> Result<SparseContingencyTable> {
    read_table(path).with_context(|| format!("reading table {}", path.display()))
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| show(p)).collect::<Vec<_>>().join(",")
}

struct Replicate {
    path: PathBuf,
    table: SparseContingencyTable,
    provenance: Option<Provenance>,
}

impl AsRef<SparseContingencyTable> for Replicate {
    fn as_ref(&self) -> &SparseContingencyTable {
        &self.table
    }
}

fn load_replicates(original: &SparseContingencyTable, paths: &[PathBuf]) -> Result<Vec<Replicate>> {
    paths
        .iter()
        .map(|p| {
            let table = load_table(p)?;
            if table.schema() != original.schema() {
                bail!("{} does not share the original table's schema", p.display());
            }
            let sidecar = provenance_path(p);
            let provenance = if sidecar.exists() {
                Some(
                    read_provenance(&sidecar)
                        .with_context(|| format!("reading {}", sidecar.display()))?,
                )
            } else {
                None
            };
            Ok(Replicate {
                path: p.clone(),
                table,
                provenance,
            })
        })
        .collect()
}

fn resolve_model(args: &ModelArgs, fallback: Option<&Provenance>) -> Result<CountModelSpec> {
    let family = match (args.family, fallback) {
        (Some(f), _) => f.into(),
        (None, Some(p)) => p.family,
        (None, None) => bail!("--family is required"),
    };
    let sigma = args.sigma.or(fallback.map(|p| p.sigma)).unwrap_or(0.0);
    let alpha = args.alpha.or(fallback.map(|p| p.alpha)).unwrap_or(0.0);
    Ok(CountModelSpec::new(family, sigma, alpha)?)
}

pub fn aggregate(args: &AggregateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.schema)
        .with_context(|| format!("reading schema {}", args.schema.display()))?;
    let schema: CategoricalSchema = serde_json::from_str(&text)
        .with_context(|| format!("parsing schema {}", args.schema.display()))?;
    let table = read_microdata(&args.microdata, &schema)
        .with_context(|| format!("aggregating {}", args.microdata.display()))?;
    let comments = header(
        "aggregate",
        &[
            ("microdata", show(&args.microdata)),
            ("n", table.total().to_string()),
        ],
    );
    write_table_with_comments(&table, &args.out, &comments)?;
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let spec = GeneratorSpec::from_json_file(&args.spec)
        .with_context(|| format!("reading generator spec {}", args.spec.display()))?;
    let table = generate_table(&spec, args.seed)?;
    let comments = header(
        "generate-escsub",
        &[("spec", show(&args.spec)), ("seed", args.seed.to_string())],
    );
    write_table_with_comments(&table, &args.out, &comments)?;
    eprintln!(
        "generated {} cells, {} nonzero, n = {}",
        table.schema().cell_count(),
        table.nonzero_cells(),
        table.total()
    );
    Ok(())
}

pub fn tune_alpha(args: &TuneArgs) -> Result<()> {
    let table = load_table(&args.table)?;
    let target = match (args.target, args.p) {
        (TargetArg::MatchZeros, _) => TuningTarget::MatchZeros,
        (TargetArg::Tau4, Some(p)) => TuningTarget::Tau4Equals { p },
        (TargetArg::Tau4, None) => bail!("--target tau4 needs --p"),
    };
    let dist = table.cell_size_distribution(ZeroBasis::RandomOnly);
    let outcome = tune(&dist, args.family.into(), args.sigma, target)?;
    let mut value = serde_json::to_value(&outcome)?;
    value["feasible"] = json!(true);
    value["tool_version"] = json!(VERSION);
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

pub fn synthesize(args: &SynthesizeArgs) -> Result<()> {
    if args.model.family.is_none() {
        bail!("--family is required");
    }
    let model = resolve_model(&args.model, None)?;
    let job = SynthesisJob::new(model, args.m, args.seed)?;
    let table = load_table(&args.table)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let stem = args
        .table
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "table".into());
    let mut files = Vec::new();
    let mut seconds = 0.0;
    for r in 1..=args.m {
        let start = Instant::now();
        let syn = synthesize_replicate(&table, &job, r, execution);
        seconds += start.elapsed().as_secs_f64();
        let path = args.out_dir.join(format!("{stem}_syn{r}.csv"));
        let mut comments = header("synthesize", &[("table", show(&args.table))]);
        comments.extend(provenance_comments(syn.provenance()));
        write_table_with_comments(syn.table(), &path, &comments)?;
        write_provenance(syn.provenance(), provenance_path(&path))?;
        files.push(path);
    }
    eprintln!(
        "{}: {} replicate(s) of {} cells in {:.3} s",
        model.label(),
        args.m,
        table.schema().cell_count(),
        seconds
    );
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let table = load_table(&args.table)?;
    let replicates = load_replicates(&table, &args.synthetic)?;
    let model = resolve_model(
        &args.model,
        replicates.first().and_then(|r| r.provenance.as_ref()),
    )?;
    let dist = table.cell_size_distribution(ZeroBasis::RandomOnly);
    fs::create_dir_all(&args.out_dir)?;
    let comments = header(
        "metrics",
        &[
            ("table", show(&args.table)),
            ("model", model.label()),
            ("k_max", args.k_max.to_string()),
            ("synthetic", join_paths(&args.synthetic)),
        ],
    );

    let analytic = tau_analytic(&dist, &model, args.k_max)?;
    let mut out = create(&args.out_dir.join("tau_analytic.csv"), &comments)?;
    analytic.write_csv(&mut out)?;
    out.flush()?;

    if !replicates.is_empty() {
        let empirical = tau_empirical(&table, &replicates, &model, args.k_max)?;
        let mut out = create(&args.out_dir.join("tau_empirical.csv"), &comments)?;
        empirical.write_csv(&mut out)?;
        out.flush()?;

        let mut out = create(&args.out_dir.join("tau_se.csv"), &comments)?;
        writeln!(out, "k,se_tau1,se_tau3,se_tau4")?;
        for k in 0..=args.k_max {
            let se = tau_standard_errors(
                &dist,
                &model,
                k,
                table.eligible_cells(),
                replicates.len() as u32,
            )?;
            writeln!(out, "{k},{},{},{}", se.tau1, se.tau3, se.tau4)?;
        }
        out.flush()?;
    }
    Ok(())
}

struct Fits {
    original: LoglinFit,
    synthetic: Vec<LoglinFit>,
    n: f64,
    n_syn: f64,
    rule: VarianceRule,
}

fn project(table: &SparseContingencyTable, vars: &[String]) -> Result<SparseContingencyTable> {
    if vars.is_empty() {
        return Ok(table.clone());
    }
    let idx = vars
        .iter()
        .map(|v| {
            table
                .schema()
                .variable_index(v)
                .with_context(|| format!("unknown variable {v:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(table.marginalize(&idx)?)
}

fn fit_all(
    original: &SparseContingencyTable,
    replicates: &[&Replicate],
    args: &FitArgs,
) -> Result<Fits> {
    let orig = project(original, &args.vars)?;
    if orig.schema().cell_count() > DESK_CELL_LIMIT {
        bail!(
            "table has {} cells, more than the {} a log-linear fit accepts; choose fewer variables with --vars",
            orig.schema().cell_count(),
            DESK_CELL_LIMIT
        );
    }
    let spec = match &args.margins {
        Some(text) => MarginSpec::parse(orig.schema(), text)?,
        None => MarginSpec::all_interactions(orig.schema(), args.order),
    };
    let original_fit =
        fit_loglinear(&orig, &spec, args.cap).context("fitting the original table")?;
    let mut synthetic = Vec::with_capacity(replicates.len());
    let mut n_syn = 0.0;
    for r in replicates {
        let t = project(&r.table, &args.vars)?;
        n_syn += t.total() as f64;
        synthetic.push(
            fit_loglinear(&t, &spec, args.cap)
                .with_context(|| format!("fitting {}", r.path.display()))?,
        );
    }
    let rule = match args.variance {
        VarianceArg::Naive => VarianceRule::Naive,
        VarianceArg::Raab => VarianceRule::Raab,
        VarianceArg::Auto if replicates.iter().all(|r| r.provenance.is_some()) => {
            VarianceRule::Raab
        }
        VarianceArg::Auto => VarianceRule::Naive,
    };
    Ok(Fits {
        original: original_fit,
        synthetic,
        n: orig.total() as f64,
        n_syn: n_syn / replicates.len() as f64,
        rule,
    })
}

fn overlaps(fits: &Fits, args: &FitArgs) -> Result<Vec<TermOverlap>> {
    Ok(coefficient_overlaps(
        &fits.original,
        &fits.synthetic,
        fits.n,
        fits.n_syn,
        fits.rule,
        args.z,
        args.include_capped,
    )?)
}

fn rule_name(rule: VarianceRule) -> &'static str {
    match rule {
        VarianceRule::Naive => "naive",
        VarianceRule::Raab => "raab",
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let table = load_table(&args.table)?;
    let replicates = load_replicates(&table, &args.synthetic)?;
    let rule = match args.zero_rule {
        ZeroRuleArg::OutsideAll => ZeroPairRule::OutsideAll,
        ZeroRuleArg::BeyondFifty => ZeroPairRule::BeyondFifty,
    };
    fs::create_dir_all(&args.out_dir)?;
    let label = replicates
        .first()
        .and_then(|r| r.provenance.as_ref())
        .and_then(|p| CountModelSpec::new(p.family, p.sigma, p.alpha).ok())
        .map(|m| m.label())
        .unwrap_or_else(|| "synthetic".into());
    let mut params = vec![
        ("table", show(&args.table)),
        ("synthetic", join_paths(&args.synthetic)),
        ("model", label.clone()),
    ];

    // Within-p% proportions averaged over replicates, one row per block.
    let mut rows = Vec::new();
    for (block, nonzero_only) in [("all", false), ("nonzero", true)] {
        let mut sums = vec![0.0; args.p_list.len()];
        for r in &replicates {
            let report = within_p_percent(&table, &r.table, &args.p_list, nonzero_only, rule)?;
            for (s, q) in sums.iter_mut().zip(&report.proportions) {
                *s += q;
            }
        }
        let m = replicates.len() as f64;
        rows.push((block, sums.into_iter().map(|s| s / m).collect::<Vec<_>>()));
    }
    let mut summary = json!({
        "model": label,
        "replicates": replicates.len(),
        "within": rows.iter().map(|(b, v)| (b.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
        "p_list": args.p_list,
    });

    if !args.no_fit {
        let refs: Vec<&Replicate> = replicates.iter().collect();
        let fits = fit_all(&table, &refs, &args.fit)?;
        params.push(("variance", rule_name(fits.rule).to_string()));
        let terms = overlaps(&fits, &args.fit)?;
        let comments = header("evaluate", &params);
        let mut out = create(&args.out_dir.join("overlaps.csv"), &comments)?;
        write_overlaps_csv(&terms, &mut out)?;
        out.flush()?;

        // Percentage differences of averaged synthetic estimates, uncapped only.
        let m = fits.synthetic.len() as f64;
        let mut orig = Vec::new();
        let mut syn = Vec::new();
        for (i, p) in fits.original.parameters.iter().enumerate() {
            if p.capped || fits.synthetic.iter().any(|f| f.parameters[i].capped) {
                continue;
            }
            orig.push(p.estimate);
            syn.push(
                fits.synthetic
                    .iter()
                    .map(|f| f.parameters[i].estimate)
                    .sum::<f64>()
                    / m,
            );
        }
        let trimmed = trimmed_mean_pct_diff(&orig, &syn, args.trim)?;
        let mean_overlap = terms.iter().map(|t| t.overlap).sum::<f64>() / terms.len().max(1) as f64;
        summary["variance"] = json!(rule_name(fits.rule));
        summary["parameters"] = json!(fits.original.parameters.len());
        summary["overlaps"] = json!(terms.len());
        summary["mean_overlap"] = json!(mean_overlap);
        summary["trim"] = json!(args.trim);
        summary["trimmed_mean_pct_diff"] = json!(trimmed.mean);
        summary["trimmed_used"] = json!(trimmed.used);
        summary["zero_originals"] = json!(trimmed.zero_originals);
    }

    let comments = header("evaluate", &params);
    let mut out = create(&args.out_dir.join("within.csv"), &comments)?;
    write!(out, "cells")?;
    for p in &args.p_list {
        write!(out, ",{p}")?;
    }
    writeln!(out)?;
    for (block, values) in &rows {
        write!(out, "{block}")?;
        for v in values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;

    let mut out = create(&args.out_dir.join("evaluation.json"), &[])?;
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    out.flush()?;
    Ok(())
}

pub fn frontier(args: &FrontierArgs) -> Result<()> {
    let table = load_table(&args.table)?;
    let replicates = load_replicates(&table, &args.synthetic)?;
    let mut groups: BTreeMap<String, Vec<&Replicate>> = BTreeMap::new();
    for r in &replicates {
        let label = match &r.provenance {
            Some(p) => CountModelSpec::new(p.family, p.sigma, p.alpha)?.label(),
            None => args.label.clone(),
        };
        groups.entry(label).or_default().push(r);
    }
    let mut points: Vec<FrontierPoint> = Vec::new();
    for (label, members) in &groups {
        let fits = fit_all(&table, members, &args.fit)?;
        let values: Vec<f64> = overlaps(&fits, &args.fit)?
            .iter()
            .map(|t| t.overlap)
            .collect();
        let tables: Vec<&SparseContingencyTable> = members.iter().map(|r| &r.table).collect();
        points.push(frontier_point(&table, &tables, &values, label.clone())?);
    }
    let comments = header(
        "frontier",
        &[
            ("table", show(&args.table)),
            ("synthetic", join_paths(&args.synthetic)),
        ],
    );
    let mut out = create(&args.out, &comments)?;
    write_frontier_csv(&points, &mut out)?;
    out.flush()?;
    Ok(())
}
