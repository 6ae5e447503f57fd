//! Command-line front end: synthetic data generation, clustering,
//! feature generation, full pipeline runs, and re-scoring of existing
//! forecast files.

use chrono::{DateTime, TimeZone, Utc};
use clap::{Parser, Subcommand};
use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ohforecast::cluster::{adjusted_rand_index, random_clustering, Clustering, HouseholdTable};
use ohforecast::error::{Error, Result};
use ohforecast::evaluate::{strategy_errors, EvaluationReport, NodeSet, Strategy};
use ohforecast::panel::PanelFrame;
use ohforecast::pipeline::{
    prepare_run, run_pipeline, write_forecasts_csv, FleetData, RunConfig,
};
use ohforecast::synth::{
    generate_fleet, read_households_csv, read_meteo_csv, write_attributes_csv,
    write_households_csv, write_meteo_csv, write_total_csv, SyntheticFleetSpec,
};

#[derive(Parser)]
#[command(name = "ohforecast", about = "Online hierarchical forecasting toolkit")]
struct Cli {
    /// JSON configuration file (run config, or fleet spec for `synth`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the rayon thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fleet: households, meteo, attributes, total.
    Synth,
    /// Build the configured clustering and an ARI comparison matrix.
    Cluster,
    /// Fit and emit the per-node benchmark features.
    Features,
    /// Execute the full pipeline and write reports plus forecasts.
    Run,
    /// Re-score an existing forecast file against the observations.
    Evaluate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match cli.command {
        Command::Synth => cmd_synth(cli),
        Command::Cluster => cmd_cluster(cli),
        Command::Features => cmd_features(cli),
        Command::Run => cmd_run(cli),
        Command::Evaluate => cmd_evaluate(cli),
    }
}

fn out_dir(cli: &Cli, config: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| {
            config
                .and_then(|c| c.io.as_ref())
                .map(|io| PathBuf::from(&io.out_dir))
        })
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_run_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| {
        Error::InvalidDateRange("--config is required for this subcommand".into())
    })?;
    let mut config: RunConfig = serde_json::from_reader(File::open(path)?)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn load_fleet(config: &RunConfig) -> Result<FleetData> {
    let io = config.io.as_ref().ok_or_else(|| {
        Error::InvalidDateRange("config must provide io paths for data-driven runs".into())
    })?;
    let households = read_households_csv(File::open(&io.households)?)?;
    let regional_meteo = read_meteo_csv(File::open(&io.meteo)?)?;
    let attributes = match &io.attributes {
        Some(path) => Some(HouseholdTable::read_csv(File::open(path)?)?),
        None => None,
    };
    // Region membership comes from the attribute table's `region`
    // column ("R1", "R2", ...); without a table, everything is R1.
    let mut household_region = std::collections::HashMap::new();
    if let Some(table) = &attributes {
        let regions = table.column_values("region")?;
        for (id, region) in table.households.iter().zip(regions) {
            let idx: usize = region
                .trim_start_matches('R')
                .parse()
                .map_err(|_| Error::UnknownColumn(format!("region value {region}")))?;
            household_region.insert(id.clone(), idx - 1);
        }
    } else {
        for id in &households.nodes {
            household_region.insert(id.clone(), 0);
        }
    }
    Ok(FleetData {
        households,
        household_region,
        regional_meteo,
        attributes,
    })
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
}

fn cmd_synth(cli: &Cli) -> Result<()> {
    let mut spec = match &cli.config {
        Some(path) => serde_json::from_reader(File::open(path)?)?,
        None => SyntheticFleetSpec::default_fleet(default_start(), 0),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let fleet = generate_fleet(&spec)?;
    let dir = out_dir(cli, None)?;
    write_households_csv(&fleet.households, File::create(dir.join("households.csv"))?)?;
    write_meteo_csv(&fleet.regional_meteo, File::create(dir.join("meteo.csv"))?)?;
    write_attributes_csv(&fleet, File::create(dir.join("attributes.csv"))?)?;
    write_total_csv(&fleet, File::create(dir.join("total.csv"))?)?;
    println!(
        "wrote {} households x {} steps to {}",
        fleet.households.n_nodes(),
        fleet.households.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_cluster(cli: &Cli) -> Result<()> {
    let config = load_run_config(cli)?;
    let data = load_fleet(&config)?;
    let prepared = prepare_run(&config, &data)?;
    let dir = out_dir(cli, Some(&config))?;
    prepared
        .clustering
        .write_csv(File::create(dir.join("clustering.csv"))?)?;

    // Compare the configured clustering against simple baselines.
    let mut named: Vec<(String, Clustering)> =
        vec![("configured".into(), prepared.clustering.clone())];
    named.push((
        "random".into(),
        random_clustering(&data.households.nodes, config.clustering.k, config.seed)?,
    ));
    if let Some(table) = &data.attributes {
        for column in &table.columns {
            if let Ok((c, _)) = ohforecast::cluster::attribute_clustering(table, column, 1) {
                named.push((format!("attr:{column}"), c));
            }
        }
    }
    let mut out = csv::Writer::from_writer(File::create(dir.join("ari.csv"))?);
    let mut header = vec!["clustering".to_string()];
    header.extend(named.iter().map(|(n, _)| n.clone()));
    out.write_record(&header)?;
    for (name_a, a) in &named {
        let mut row = vec![name_a.clone()];
        for (_, b) in &named {
            row.push(format!("{:.6}", adjusted_rand_index(a, b)?));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    println!("wrote clustering.csv and ari.csv to {}", dir.display());
    Ok(())
}

fn cmd_features(cli: &Cli) -> Result<()> {
    let config = load_run_config(cli)?;
    let data = load_fleet(&config)?;
    let prepared = prepare_run(&config, &data)?;
    let dir = out_dir(cli, Some(&config))?;
    let mut out = csv::Writer::from_writer(File::create(dir.join("features.csv"))?);
    out.write_record(["timestamp", "node_id", "value"])?;
    let panel = &prepared.features;
    for t in 0..panel.len() {
        for (g, node) in panel.nodes.iter().enumerate() {
            out.write_record([
                panel.timestamps[t].to_rfc3339(),
                node.clone(),
                format!("{:.17e}", panel.get(t, g)),
            ])?;
        }
    }
    out.flush()?;
    println!(
        "wrote features for {} nodes x {} steps to {}",
        panel.n_nodes(),
        panel.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_run(cli: &Cli) -> Result<()> {
    let config = load_run_config(cli)?;
    let data = load_fleet(&config)?;
    let output = run_pipeline(&config, &data)?;
    let dir = out_dir(cli, Some(&config))?;
    std::fs::write(dir.join("report.json"), output.report.to_json()?)?;
    output
        .report
        .write_csv(File::create(dir.join("report.csv"))?)?;
    write_forecasts_csv(&output, File::create(dir.join("forecasts.csv"))?)?;
    output
        .clustering
        .write_csv(File::create(dir.join("clustering.csv"))?)?;
    println!(
        "run complete; max constraint violation {:.3e}; reports in {}",
        output.max_constraint_violation,
        dir.display()
    );
    Ok(())
}

fn cmd_evaluate(cli: &Cli) -> Result<()> {
    let config = load_run_config(cli)?;
    let data = load_fleet(&config)?;
    let prepared = prepare_run(&config, &data)?;
    let (_, _, init_end, eval_end) = prepared.indices;
    let eval_obs = prepared.nodes.slice_time(init_end, eval_end);
    let dir = out_dir(cli, Some(&config))?;

    let forecasts = read_forecasts_csv(
        &dir.join("forecasts.csv"),
        &prepared.nodes.nodes,
        &eval_obs.timestamps,
    )?;
    let mut report = EvaluationReport {
        hierarchy_hash: prepared.projector.source_hash.clone(),
        config_digest: config.digest(),
        ..EvaluationReport::default()
    };
    for (strategy, panel) in &forecasts {
        for set in [NodeSet::All, NodeSet::Leaves, NodeSet::Root] {
            let idx = set.indices(&prepared.hierarchy)?;
            let errs = strategy_errors(&eval_obs, panel, &idx)?;
            report.push(*strategy, set, &errs);
        }
    }
    std::fs::write(dir.join("report.json"), report.to_json()?)?;
    report.write_csv(File::create(dir.join("report.csv"))?)?;
    println!("re-scored {} strategies into {}", forecasts.len(), dir.display());
    Ok(())
}

fn parse_strategy(name: &str) -> Result<Strategy> {
    Ok(match name {
        "benchmark" => Strategy::Benchmark,
        "projection" => Strategy::Projection,
        "aggregation" => Strategy::Aggregation,
        "aggregation_projection" => Strategy::AggregationProjection,
        "bottom_up" => Strategy::BottomUp,
        other => return Err(Error::UnknownColumn(other.to_string())),
    })
}

/// Read a long-format forecast file back into per-strategy panels
/// aligned to the given node order and evaluation axis.
fn read_forecasts_csv(
    path: &Path,
    nodes: &[String],
    timestamps: &[DateTime<Utc>],
) -> Result<Vec<(Strategy, PanelFrame)>> {
    let mut reader = csv::Reader::from_reader(File::open(path)?);
    let mut panels: BTreeMap<String, PanelFrame> = BTreeMap::new();
    let ts_index: BTreeMap<DateTime<Utc>, usize> = timestamps
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, i))
        .collect();
    for row in reader.deserialize::<(DateTime<Utc>, String, String, f64)>() {
        let (ts, node, strategy, value) = row?;
        let Some(&t) = ts_index.get(&ts) else {
            continue;
        };
        let g = nodes
            .iter()
            .position(|n| *n == node)
            .ok_or_else(|| Error::UnknownNode(node.clone()))?;
        let panel = panels
            .entry(strategy)
            .or_insert_with(|| PanelFrame::zeros(nodes.to_vec(), timestamps.to_vec()));
        panel.set(t, g, value);
    }
    panels
        .into_iter()
        .map(|(name, panel)| Ok((parse_strategy(&name)?, panel)))
        .collect()
}
