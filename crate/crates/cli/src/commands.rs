use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use riskdrive_core::data::{
    extract_lane_changes, learn_lane_preference, load_trajectories, smooth, split_by_parity, validate,
    DesiredSpeedRule, EgoModel, TrajectoryDataset, Units, ValidationOptions,
};
use riskdrive_core::planner::{PathNode, Reference, ReferencePoint};
use riskdrive_core::prediction::{predict_all, PredictorRegistry};
use riskdrive_core::render::risk_field_svg;
use riskdrive_core::risk::{level_set, sample_field, GridSpec};
use riskdrive_core::sim::{plan_cycle, PlanningInputs, Simulation};
use riskdrive_core::{
    Error, LanePreference, LanePreferenceTable, ModelConfig, PlannedPath, RoadGeometry, Scenario, Vec2, VehicleHistory,
};

use crate::{Cli, Command, DatasetArgs, Half, ModelArg, PreferenceArgs, UnitArg};

/// 1 for unreadable or unwritable files, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_io() { 1 } else { 2 };
        }
    }
    2
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: Option<&'a Path>,
    inputs: Vec<&'a Path>,
    outputs: Vec<String>,
    seed: Option<u64>,
}

struct Output<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> Output<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    fn finish(mut self, cli: &Cli, command: &str, inputs: Vec<&Path>, seed: Option<u64>) -> Result<()> {
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config: cli.config.as_deref(),
            inputs,
            outputs: self.written.clone(),
            seed,
        };
        self.json("manifest.json", &manifest)?;
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<ModelConfig> {
    let Some(path) = path else {
        return Ok(ModelConfig::default());
    };
    let text = read(path)?;
    let mut unknown = Vec::new();
    let cfg: ModelConfig = serde_ignored::deserialize(toml::Deserializer::new(&text), |p| unknown.push(p.to_string()))
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    if !unknown.is_empty() {
        return Err(Error::config(format!("{}: unknown keys {}", path.display(), unknown.join(", "))).into());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let scenario =
        Scenario::from_json_str(&read(path)?).map_err(|e| anyhow::Error::new(e).context(path.display().to_string()))?;
    Ok(scenario)
}

fn load_preference(args: &PreferenceArgs) -> Result<LanePreference> {
    let Some(path) = &args.preference else {
        return Ok(LanePreference::builtin());
    };
    let table: LanePreferenceTable =
        serde_json::from_str(&read(path)?).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    Ok(LanePreference::from_table(&table)?)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate(args) => {
            let mut scenario = load_scenario(&args.scenario)?;
            if let Some(seed) = args.seed {
                scenario.seed = seed;
            }
            let preference = load_preference(&args.preference)?;
            let registry = PredictorRegistry::with_builtin(&cfg.prediction);
            let predictor = registry.get(&cfg.prediction.name)?;
            let trace = Simulation::new(&scenario, &cfg, Some(&preference), predictor)?.run()?;
            let summary = trace.summary();

            let mut out = Output::new(&cli.out)?;
            let mut jsonl = Vec::new();
            trace.write_jsonl(&mut jsonl)?;
            out.write("trace.jsonl", jsonl)?;
            out.json("summary.json", &serde_json::json!({"summary": summary, "events": trace.events}))?;
            out.write("trajectories.csv", trace.trajectories_csv())?;
            let mut inputs = vec![args.scenario.as_path()];
            inputs.extend(args.preference.preference.as_deref());
            out.finish(cli, "simulate", inputs, Some(scenario.seed))?;

            println!(
                "{:.2} s, {} ego lane changes, {} collisions, {} incomplete plans",
                summary.duration_s,
                summary.ego_lane_changes.len(),
                summary.collisions,
                summary.plan_incomplete
            );
            for (t, from, to) in &summary.ego_lane_changes {
                println!("  t = {t:.2} s: lane {from} -> {to}");
            }
        }
        Command::Plan(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let preference = load_preference(&args.preference)?;
            let registry = PredictorRegistry::with_builtin(&cfg.prediction);
            let predictor = registry.get(&cfg.prediction.name)?;
            let sim = Simulation::new(&scenario, &cfg, Some(&preference), predictor)?;
            let (ego, others) = sim.snapshot();
            let mut ego_cfg = scenario.ego.config(&cfg.styles);
            if let Some(h) = args.threshold {
                if !(h >= 0.0 && h.is_finite()) {
                    bail!(Error::config("--threshold must be non-negative"));
                }
                ego_cfg.risk_threshold = h;
            }
            let inputs =
                PlanningInputs { road: &scenario.road, config: &cfg, preference: Some(&preference), predictor };
            let cycle = plan_cycle(&ego, &ego_cfg, &others, &[], inputs)?;
            let dump = PlanDump::new(&cycle.path, ego_cfg.risk_threshold, &cycle.reference);

            let mut out = Output::new(&cli.out)?;
            out.json("plan.json", &dump)?;
            let mut inputs = vec![args.scenario.as_path()];
            inputs.extend(args.preference.preference.as_deref());
            out.finish(cli, "plan", inputs, Some(scenario.seed))?;

            if args.stdout {
                println!("{}", serde_json::to_string_pretty(&dump)?);
            } else {
                println!(
                    "{} path through lanes {:?}, cost {:.6}",
                    if dump.complete { "complete" } else { "incomplete" },
                    dump.lanes,
                    dump.total_cost
                );
            }
        }
        Command::RiskField(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let road = scenario.road;
            if !(args.dx > 0.0 && args.dy > 0.0 && args.behind >= 0.0 && args.ahead >= 0.0) {
                bail!(Error::config("--dx and --dy must be positive, --behind and --ahead non-negative"));
            }
            let registry = PredictorRegistry::with_builtin(&cfg.prediction);
            let predictor = registry.get(&cfg.prediction.name)?;
            let sim = Simulation::new(&scenario, &cfg, None, predictor)?;
            let (ego, others) = sim.snapshot();
            let histories: Vec<VehicleHistory> = others.iter().map(|o| VehicleHistory::from_state(*o)).collect();
            let mut context = others.clone();
            context.push(ego);
            let predictions = predict_all(predictor, &histories, &context, &road, &cfg.planner)?;
            let grid = GridSpec {
                origin: Vec2::new(args.dx / 2.0, ego.position.y - args.behind),
                dx: args.dx,
                dy: args.dy,
                nx: ((road.width() / args.dx).round() as usize).max(1),
                ny: ((args.behind + args.ahead) / args.dy).floor() as usize + 1,
            };
            let field = sample_field(&predictions, args.step, cfg.planner.point_period, &grid, &cfg.risk)?;
            let threshold = scenario.ego.config(&cfg.styles).risk_threshold;
            let admissible = level_set(&field, threshold).admissible_count();

            let mut out = Output::new(&cli.out)?;
            out.write("risk_field.csv", field.to_csv())?;
            if args.svg {
                out.write("risk_field.svg", risk_field_svg(&field, 4.0))?;
            }
            out.finish(cli, "risk-field", vec![args.scenario.as_path()], Some(scenario.seed))?;
            println!(
                "step {} (t = {:.2} s): {} x {} cells, max risk {:.4}, {} of {} at or below {}",
                field.step,
                field.t,
                grid.nx,
                grid.ny,
                field.max(),
                admissible,
                grid.len(),
                threshold
            );
        }
        Command::LearnParams(args) => {
            let (road, dataset) = load_dataset(&args.data)?;
            let learned = learn_lane_preference(&dataset, &road, &cfg.risk)?;
            let mut out = Output::new(&cli.out)?;
            out.json("lane_preference.json", &learned.table)?;
            out.json("learned.json", &learned)?;
            out.finish(cli, "learn-params", vec![args.data.dataset.as_path()], None)?;
            print!("{}", preference_table(&learned.table));
        }
        Command::Validate(args) => {
            let (road, dataset) = load_dataset(&args.data)?;
            let events = extract_lane_changes(&dataset, &road);
            let model = match args.model {
                ModelArg::Identity => EgoModel::Identity,
                ModelArg::Planner => {
                    EgoModel::Planner { config: cfg.clone(), preference: Some(load_preference(&args.preference)?) }
                }
            };
            let desired_speed = match args.desired_speed {
                Some(v) if v >= 0.0 && v.is_finite() => DesiredSpeedRule::Fixed(v),
                Some(_) => bail!(Error::config("--desired-speed must be non-negative")),
                None => DesiredSpeedRule::AtStart,
            };
            let options = ValidationOptions { desired_speed, style: None };
            let report = validate(&events, &dataset, &road, &model, &options)?;

            let mut out = Output::new(&cli.out)?;
            out.json("report.json", &report)?;
            out.write("events.csv", report.events_csv())?;
            let mut inputs = vec![args.data.dataset.as_path()];
            inputs.extend(args.preference.preference.as_deref());
            out.finish(cli, "validate", inputs, None)?;
            print!("{}", report.table());
            if report.skipped > 0 {
                println!("{} events skipped (run outside the record)", report.skipped);
            }
        }
        Command::PrintConfig => {
            let text = toml::to_string_pretty(&cfg)?;
            let mut out = Output::new(&cli.out)?;
            out.write("config.toml", &text)?;
            out.finish(cli, "print-config", Vec::new(), None)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn load_dataset(args: &DatasetArgs) -> Result<(RoadGeometry, TrajectoryDataset)> {
    let units = match args.units {
        UnitArg::Meters => Units::Meters,
        UnitArg::Feet => Units::Feet,
    };
    let road = RoadGeometry::new(args.lanes, args.lane_width, 1.0e9)?;
    let raw = load_trajectories(&args.dataset, units)?;
    let raw = match args.half {
        Half::All => raw,
        Half::Train => split_by_parity(&raw).0,
        Half::Validate => split_by_parity(&raw).1,
    };
    let mut dataset = smooth(&raw, args.window)?;
    dataset.assign_lanes(&road);
    Ok((road, dataset))
}

fn preference_table(table: &LanePreferenceTable) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let mut s = format!("{:<6}{:>10}{:>10}{:>10}\n", "lane", "-sigma", "mean", "+sigma");
    for row in &table.lanes {
        let [m, c, p] = row.risk_at.values();
        let _ = writeln!(s, "{:<6}{:>10}{:>10}{:>10}", row.lane, fmt(m), fmt(c), fmt(p));
    }
    s
}

#[derive(Debug, Serialize)]
struct PlanDump<'a> {
    complete: bool,
    total_cost: f64,
    threshold: f64,
    last_column: usize,
    lanes: Vec<usize>,
    nodes: &'a [PathNode],
    reference: &'a [ReferencePoint],
}

impl<'a> PlanDump<'a> {
    fn new(path: &'a PlannedPath, threshold: f64, reference: &'a Reference) -> Self {
        Self {
            complete: path.complete,
            total_cost: path.total_cost,
            threshold,
            last_column: path.last_column(),
            lanes: path.lanes(),
            nodes: &path.nodes,
            reference: &reference.points,
        }
    }
}
