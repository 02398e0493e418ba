//! Command-line front end.
//!
//! Every command reads one JSON config merged over a named profile and
//! writes plain CSV/JSON files plus `manifest.json` into the output
//! directory. Data files never carry timestamps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use detour::activation::{
    activation_plan, response_sweep, write_sweep_csv, FixtureTimes, A1_DURATIONS_HR,
};
use detour::assignment::{
    aon_assign, disruption_diff, extract_itinerary, ClassFilter, ItineraryKind,
};
use detour::demand::{annual_to_daily, daily_to_hourly, headway_minutes, DayTypeCalendar, HourlyProfile, A1_HOURLY_FLOWS};
use detour::evacuation::{run_scenarios, EvacScenario};
use detour::netmodel::{apply_closure, load_network, load_od, ClosureScenario, Network, RoadClass};
use detour::queueing::{
    build_arrivals, calibrate_brackets, io_delay, ArrivalCurve, QueueParams, A1_DELAY_BRACKETS,
};

const OUT_ENV: &str = "DETOUR_OUT_DIR";
const PROFILES: [&str; 2] = ["paper-a1-flood", "none"];

#[derive(Parser)]
#[command(name = "detour", version, about = "Road-closure detour, delay and evacuation planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config merged over the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: $DETOUR_OUT_DIR, then ./out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Named default profile ("none" starts from empty defaults).
    #[arg(long, global = true, default_value = "paper-a1-flood")]
    profile: String,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Base, closed and difference link flows, plus requested itineraries.
    Assign,
    /// Activation decision table and strategy timeline for one response rate.
    Activate,
    /// Bottleneck delay per closure duration and the bracket calibration sweep.
    Delay,
    /// Cumulative arrival/departure curves per closure duration.
    Curves,
    /// Every allocation strategy against every departure profile.
    Evacuate,
    /// Activation summary per response rate.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Assign => "assign",
            Command::Activate => "activate",
            Command::Delay => "delay",
            Command::Curves => "curves",
            Command::Evacuate => "evacuate",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ItinerarySpec {
    name: String,
    start: String,
    end: String,
    kind: ItineraryKind,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    network: Option<PathBuf>,
    od: Option<PathBuf>,
    closure: Option<ClosureScenario>,
    /// Road classes usable by the base assignment; all when absent.
    assign_classes: Option<Vec<RoadClass>>,
    itineraries: Vec<ItinerarySpec>,
    durations_hr: Vec<f64>,
    response_rate: Option<f64>,
    response_rates: Vec<f64>,
    activation_fixtures: Option<PathBuf>,
    sweep_fixtures: Option<PathBuf>,
    queue: QueueParams,
    arrival_flows: Option<Vec<f64>>,
    /// Annual count converted through the calendar and hourly profile when
    /// `arrival_flows` is absent.
    annual_flow: Option<f64>,
    start_clock: f64,
    horizon_hr: f64,
    delay_durations_hr: Vec<f64>,
    calendar: Option<DayTypeCalendar>,
    hourly_profile: Option<HourlyProfile>,
    evacuation: Option<PathBuf>,
    out_dir: Option<PathBuf>,
}

fn profile_value(name: &str) -> Result<Value> {
    match name {
        "paper-a1-flood" => Ok(serde_json::to_value(Config {
            durations_hr: A1_DURATIONS_HR.to_vec(),
            response_rate: Some(0.6),
            response_rates: vec![0.3, 0.4, 0.5, 0.6, 0.7],
            queue: QueueParams::default(),
            arrival_flows: Some(A1_HOURLY_FLOWS.to_vec()),
            start_clock: 12.0,
            horizon_hr: 12.0,
            delay_durations_hr: vec![1.0, 2.0, 3.0],
            calendar: Some(DayTypeCalendar::default()),
            hourly_profile: Some(HourlyProfile::default()),
            ..Config::default()
        })?),
        "none" => Ok(serde_json::to_value(Config {
            horizon_hr: 12.0,
            ..Config::default()
        })?),
        other => bail!("unknown profile {other:?}; known profiles: {}", PROFILES.join(", ")),
    }
}

/// Objects merge key by key; anything else replaces.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut value = profile_value(&cli.profile)?;
    let mut base_dir = PathBuf::from(".");
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let user: Value = serde_json::from_str(&text)
            .with_context(|| format!("config {} is not valid JSON", path.display()))?;
        ensure!(user.is_object(), "config {} must be a JSON object", path.display());
        merge(&mut value, user);
        base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    }
    let mut cfg: Config = serde_json::from_value(value).context("invalid config")?;
    for p in [
        &mut cfg.network,
        &mut cfg.od,
        &mut cfg.activation_fixtures,
        &mut cfg.sweep_fixtures,
        &mut cfg.evacuation,
        &mut cfg.out_dir,
    ] {
        resolve(&base_dir, p);
    }
    for r in cfg.response_rates.iter().chain(cfg.response_rate.iter()) {
        ensure!((0.0..=1.0).contains(r), "response rate {r} outside [0, 1]");
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &Config) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Collects output files and writes them with a manifest.
struct Outputs {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Outputs { dir, files: BTreeMap::new() }
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> detour::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf).with_context(|| format!("cannot render {name}"))?;
        self.files.insert(name.to_string(), buf);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.files.insert(name.to_string(), buf);
        Ok(())
    }

    fn finish(mut self, command: &str, profile: &str) -> Result<()> {
        fs::create_dir_all(&self.dir)
            .with_context(|| format!("cannot create output directory {}", self.dir.display()))?;
        let listing: Vec<Value> = self
            .files
            .iter()
            .map(|(name, bytes)| json!({ "file": name, "bytes": bytes.len() }))
            .collect();
        let manifest = json!({
            "tool": "detour",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "profile": profile,
            "files": listing,
        });
        self.json("manifest.json", &manifest)?;
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        }
        log::info!("wrote {} files to {}", self.files.len(), self.dir.display());
        Ok(())
    }
}

fn network(cfg: &Config) -> Result<Network> {
    let path = cfg.network.as_ref().context("config has no \"network\" path")?;
    let (net, warnings) =
        load_network(path).with_context(|| format!("cannot load network {}", path.display()))?;
    for w in warnings {
        log::warn!("{w:?}");
    }
    Ok(net)
}

fn cmd_assign(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let net = network(cfg)?;
    let od_path = cfg.od.as_ref().context("config has no \"od\" path")?;
    let od = load_od(od_path, &net).with_context(|| format!("cannot load OD {}", od_path.display()))?;
    let closure = cfg.closure.as_ref().context("config has no \"closure\"")?;
    let filter = cfg.assign_classes.as_deref().map_or_else(ClassFilter::any, ClassFilter::of);

    let base = aon_assign(&net, &od, &filter).context("base assignment failed")?;
    let closed_net = apply_closure(&net, closure)?;
    let closed = aon_assign(&closed_net, &od, &filter).context("assignment with the closure failed")?;
    let (disrupted, diverted) = disruption_diff(&base, &closed)?;
    out.csv("base_flows.csv", |w| base.write_csv(w))?;
    out.csv("closed_flows.csv", |w| closed.write_csv(w))?;
    out.csv("disrupted_flows.csv", |w| disrupted.write_csv(w))?;
    out.csv("diverted_flows.csv", |w| diverted.write_csv(w))?;

    let mut summary = Vec::new();
    for spec in &cfg.itineraries {
        let it = extract_itinerary(&net, closure, &spec.start, &spec.end, spec.kind)
            .with_context(|| format!("itinerary {} failed", spec.name))?;
        out.csv(&format!("itinerary_{}.csv", spec.name), |w| it.write_csv(&net, w))?;
        summary.push(json!({
            "name": spec.name,
            "kind": it.kind.as_str(),
            "links": it.links,
            "length_km": it.length_km,
            "free_flow_min": it.free_flow_min,
        }));
    }
    if !summary.is_empty() {
        out.json("itineraries.json", &summary)?;
    }
    Ok(())
}

fn fixtures(path: Option<&PathBuf>, embedded: fn() -> FixtureTimes) -> Result<FixtureTimes> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read fixtures {}", p.display()))?;
            Ok(FixtureTimes::from_json(&text)?)
        }
        None => Ok(embedded()),
    }
}

fn cmd_activate(cfg: &Config, out: &mut Outputs) -> Result<()> {
    ensure!(!cfg.durations_hr.is_empty(), "durations list is empty");
    let rate = cfg.response_rate.context("config has no \"response_rate\"")?;
    let times = fixtures(cfg.activation_fixtures.as_ref(), FixtureTimes::a1_flood)?;
    let plan = activation_plan(&cfg.durations_hr, rate, &times)?;
    out.csv("activation_decisions.csv", |w| plan.write_csv(w))?;
    out.json("activation_strategy.json", &plan.strategy_json())?;
    Ok(())
}

fn cmd_sweep(cfg: &Config, out: &mut Outputs) -> Result<()> {
    ensure!(!cfg.durations_hr.is_empty(), "durations list is empty");
    ensure!(!cfg.response_rates.is_empty(), "response rate list is empty");
    let times = fixtures(cfg.sweep_fixtures.as_ref(), FixtureTimes::a1_rate_sweep)?;
    let rows = response_sweep(&cfg.response_rates, &cfg.durations_hr, &times)?;
    out.csv("response_sweep.csv", |w| write_sweep_csv(&rows, w))?;
    out.json("response_sweep.json", &rows)?;
    Ok(())
}

fn arrivals(cfg: &Config) -> Result<ArrivalCurve> {
    let flows = match (&cfg.arrival_flows, cfg.annual_flow) {
        (Some(f), _) => f.clone(),
        (None, Some(annual)) => {
            let cal = cfg.calendar.unwrap_or_default();
            let profile = cfg.hourly_profile.clone().unwrap_or_default();
            let daily = annual_to_daily(annual, &cal)?;
            let first = cfg.start_clock.floor() as u32;
            (first..24)
                .map_while(|h| daily_to_hourly(daily, h, &profile).ok())
                .collect()
        }
        (None, None) => bail!("config needs \"arrival_flows\" or \"annual_flow\""),
    };
    ensure!(!flows.is_empty(), "no hourly arrival flows available");
    Ok(build_arrivals(&flows, cfg.start_clock, cfg.horizon_hr)?)
}

fn delay_durations(cfg: &Config) -> Result<&[f64]> {
    ensure!(!cfg.delay_durations_hr.is_empty(), "delay duration list is empty");
    Ok(&cfg.delay_durations_hr)
}

fn arrival_table(arr: &ArrivalCurve) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["hour_start_clock", "flow_vph", "headway_min", "cumulative_veh"])?;
    for (h, count) in arr.boundary_counts().iter().enumerate() {
        let flow = arr.hourly_flows[h];
        let headway = if flow > 0.0 { format!("{:.4}", headway_minutes(flow)?) } else { String::new() };
        w.write_record([
            (arr.start_clock + h as f64).to_string(),
            flow.to_string(),
            headway,
            count.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn cmd_delay(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let arr = arrivals(cfg)?;
    let results = delay_durations(cfg)?
        .iter()
        .map(|&d| io_delay(&arr, d, &cfg.queue).with_context(|| format!("delay for a {d} h closure")))
        .collect::<Result<Vec<_>>>()?;
    out.json("delay.json", &results)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["statistic", "bracket_point", "include_bottleneck_traversal", "delays_min", "max_relative_error"])?;
    for row in calibrate_brackets(&arr, &A1_DELAY_BRACKETS, &cfg.queue)? {
        let delays: Vec<String> = row.delays_min.iter().map(|d| format!("{d:.2}")).collect();
        w.write_record([
            row.statistic.to_string(),
            format!("{:?}", row.bracket_point).to_lowercase(),
            row.include_bottleneck_traversal.to_string(),
            delays.join("/"),
            format!("{:.4}", row.max_relative_error),
        ])?;
    }
    out.files.insert("delay_calibration.csv".into(), w.into_inner()?);
    Ok(())
}

fn cmd_curves(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let arr = arrivals(cfg)?;
    out.files.insert("arrivals.csv".into(), arrival_table(&arr)?);
    for &d in delay_durations(cfg)? {
        let res = io_delay(&arr, d, &cfg.queue).with_context(|| format!("curves for a {d} h closure"))?;
        out.csv(&format!("curve_{d}h.csv"), |w| res.write_curve_csv(&arr, w))?;
    }
    Ok(())
}

fn cmd_evacuate(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let path = cfg.evacuation.as_ref().context("config has no \"evacuation\" scenario path")?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read evacuation scenario {}", path.display()))?;
    let scenario = EvacScenario::from_json(&text)
        .with_context(|| format!("invalid evacuation scenario {}", path.display()))?;
    let net = match &scenario.network {
        Some(rel) => {
            let p = path.parent().unwrap_or(Path::new(".")).join(rel);
            load_network(&p)
                .with_context(|| format!("cannot load network {}", p.display()))?
                .0
        }
        None => network(cfg)?,
    };
    let runs = run_scenarios(&net, &scenario)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let exits: Vec<&String> = scenario.exits.iter().map(|e| &e.id).collect::<Vec<_>>();
    let mut header = vec!["strategy".to_string(), "profile".into(), "clearance_min".into(), "clearance_hm".into()];
    header.extend(exits.iter().map(|e| format!("vehicles_{e}")));
    w.write_record(&header)?;
    let mut summary = Vec::new();
    for run in &runs {
        let name = format!("evacuation_{}_p{}.csv", run.strategy.as_str(), run.profile);
        out.csv(&name, |buf| run.result.write_series_csv(buf))?;
        let mut row = vec![
            run.strategy.as_str().to_string(),
            run.profile.to_string(),
            run.result.clearance_time_min.to_string(),
            run.result.clearance_hm(),
        ];
        row.extend(exits.iter().map(|e| run.allocated.get(*e).copied().unwrap_or(0).to_string()));
        w.write_record(&row)?;
        summary.push(json!({
            "strategy": run.strategy.as_str(),
            "profile": run.profile,
            "clearance_time_min": run.result.clearance_time_min,
            "clearance_hm": run.result.clearance_hm(),
            "total_vehicles": run.result.total_vehicles,
            "allocated": run.allocated,
            "per_exit": run.result.per_exit,
            "series": name,
        }));
    }
    out.files.insert("evacuation_summary.csv".into(), w.into_inner()?);
    out.json("evacuation.json", &summary)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let mut out = Outputs::new(out_dir(cli, &cfg));
    match cli.command {
        Command::Assign => cmd_assign(&cfg, &mut out)?,
        Command::Activate => cmd_activate(&cfg, &mut out)?,
        Command::Delay => cmd_delay(&cfg, &mut out)?,
        Command::Curves => cmd_curves(&cfg, &mut out)?,
        Command::Evacuate => cmd_evacuate(&cfg, &mut out)?,
        Command::Sweep => cmd_sweep(&cfg, &mut out)?,
    }
    out.finish(cli.command.name(), &cli.profile)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
