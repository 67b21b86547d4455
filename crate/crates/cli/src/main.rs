//! `lfpslam`: simulate sessions, calibrate decoder noise, run SLAM, and
//! report on or render the results.

mod config_file;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lfpslam::decoder::{self, MaeTargets, NoiseProfile, CALIBRATION_DRAWS, RAT_TARGETS};
use lfpslam::experience_map::{render_svg, ExperienceMap};
use lfpslam::maze::{build_default_maze, MazeSkeleton};
use lfpslam::pipeline::{
    report_from_artifacts, run_session, skeleton_in_map_frame, split_index, DecoderSource, RunConfig, SlamParams,
    TrajectorySource,
};
use lfpslam::pose_cells::PoseCellConfig;
use lfpslam::signal::lfp::N_CHANNELS;
use lfpslam::signal::morlet::log_frequencies;
use lfpslam::signal::{synthesize_lfp, write_wavelet_tensors, CenterStat, ExportConfig, LfpGenConfig};
use lfpslam::tensor::SlabWriter;
use lfpslam::trajectory::{self, simulate_session, SessionConfig, TrialRecord, TurnRule};

#[derive(Parser)]
#[command(name = "lfpslam", version, about = "Neural-signal SLAM workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a session: trajectory, LFP and normalised wavelet tensors.
    Simulate(SimulateArgs),
    /// Fit decoder noise profiles to target errors.
    Calibrate(CalibrateArgs),
    /// Run the SLAM loop on the test split of a session.
    Slam(SlamArgs),
    /// Recompute a run's metrics from its artifacts.
    Report(ReportArgs),
    /// Render a map graph file to SVG.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Match,
    Mismatch,
}

#[derive(Clone, Copy, ValueEnum)]
enum Center {
    Median,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Zero,
    Rat1,
    Rat2,
    Rat3,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Zero => "zero",
            Preset::Rat1 => "rat1",
            Preset::Rat2 => "rat2",
            Preset::Rat3 => "rat3",
        }
    }
}

/// Session simulation flags; unset values keep the simulator defaults.
#[derive(Args)]
struct SessionArgs {
    /// Maze file; the built-in T-maze when omitted.
    #[arg(long)]
    maze: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    mean_speed: Option<f64>,
    #[arg(long)]
    speed_jitter: Option<f64>,
    #[arg(long)]
    max_speed: Option<f64>,
    #[arg(long)]
    reward_pause_ms: Option<u64>,
    #[arg(long)]
    intertrial_pause_ms: Option<u64>,
    #[arg(long, value_enum)]
    turn_rule: Option<Rule>,
    /// Trajectory seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl SessionArgs {
    fn session(&self) -> SessionConfig {
        let d = SessionConfig::default();
        SessionConfig {
            n_trials: self.trials.unwrap_or(d.n_trials),
            mean_speed_cm_s: self.mean_speed.unwrap_or(d.mean_speed_cm_s),
            speed_jitter_cm_s: self.speed_jitter.unwrap_or(d.speed_jitter_cm_s),
            max_speed_cm_s: self.max_speed.unwrap_or(d.max_speed_cm_s),
            pause_ms_at_reward: self.reward_pause_ms.unwrap_or(d.pause_ms_at_reward),
            intertrial_pause_ms: self.intertrial_pause_ms.unwrap_or(d.intertrial_pause_ms),
            turn_rule: match self.turn_rule {
                Some(Rule::Match) => TurnRule::Match,
                Some(Rule::Mismatch) => TurnRule::Mismatch,
                None => d.turn_rule,
            },
            rng_seed: self.seed.unwrap_or(d.rng_seed),
        }
    }

    fn maze(&self) -> lfpslam::Result<MazeSkeleton> {
        load_maze(self.maze.as_deref())
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    lfp_seed: u64,
    #[arg(long, default_value_t = 0.8)]
    split_fraction: f64,
    #[arg(long, value_enum, default_value_t = Center::Median)]
    center: Center,
    /// Keep every n-th image of each split.
    #[arg(long, default_value_t = 1)]
    image_stride: usize,
    #[arg(long, default_value_t = 2.0)]
    freq_min: f64,
    #[arg(long, default_value_t = 250.0)]
    freq_max: f64,
    #[arg(long, default_value_t = 26)]
    n_freqs: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Named targets; all three rats when neither presets nor targets are given.
    #[arg(long, value_enum, conflicts_with_all = ["location_mae", "direction_mae", "speed_mae"])]
    preset: Vec<Preset>,
    #[arg(long, requires_all = ["direction_mae", "speed_mae"])]
    location_mae: Option<f64>,
    #[arg(long, requires_all = ["location_mae", "speed_mae"])]
    direction_mae: Option<f64>,
    #[arg(long, requires_all = ["location_mae", "direction_mae"])]
    speed_mae: Option<f64>,
    /// Draws for the reported check of each profile.
    #[arg(long, default_value_t = CALIBRATION_DRAWS)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SlamArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Output directory for the run's artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth trajectory CSV instead of a simulated session.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Decodings CSV instead of the noisy oracle.
    #[arg(long)]
    decodings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Zero)]
    noise: Preset,
    /// Multiplies the oracle's noise.
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long, default_value_t = 1)]
    oracle_seed: u64,
    #[arg(long, default_value_t = 0.8)]
    split_fraction: f64,
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    loop_closure: bool,
    #[arg(long)]
    match_threshold: Option<f64>,
    #[arg(long)]
    inject_energy: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    ntheta: Option<usize>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    exc_variance: Option<f64>,
    #[arg(long)]
    exc_radius: Option<usize>,
    #[arg(long)]
    inh_variance: Option<f64>,
    #[arg(long)]
    inh_radius: Option<usize>,
    #[arg(long)]
    inhibition_amplitude: Option<f64>,
    #[arg(long)]
    global_inhibition: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `slam`.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Map graph file (map.json).
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Maze for the skeleton overlay; the built-in T-maze when omitted.
    #[arg(long)]
    maze: Option<PathBuf>,
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    overlay: bool,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<lfpslam::Error> for Failure {
    fn from(e: lfpslam::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn load_maze(path: Option<&Path>) -> lfpslam::Result<MazeSkeleton> {
    match path {
        Some(p) => MazeSkeleton::load(p),
        None => Ok(build_default_maze()),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialise");
    s.push('\n');
    s
}

fn emit(text: &str, out: Option<&Path>) -> CmdResult {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SimulationManifest<'a> {
    session: SessionConfig,
    maze: Option<&'a Path>,
    lfp_seed: u64,
    lfp: &'a LfpGenConfig,
    n_samples: usize,
    duration_ms: u64,
    split_fraction: f64,
    split_t_ms: u64,
    image_stride: usize,
    trials: &'a [TrialRecord],
}

fn simulate(a: &SimulateArgs) -> CmdResult {
    let session_cfg = a.session.session();
    session_cfg.validate()?;
    if !(a.split_fraction > 0.0 && a.split_fraction < 1.0) {
        return Err(Failure::Validation("split fraction must lie in (0, 1)".into()));
    }
    if !(a.freq_min > 0.0 && a.freq_max > a.freq_min) || a.n_freqs == 0 {
        return Err(Failure::Validation("frequency grid needs 0 < freq-min < freq-max and n-freqs ≥ 1".into()));
    }
    let maze = a.session.maze()?;
    let session = simulate_session(&maze, &session_cfg)?;
    let samples = &session.samples;
    if samples.len() < 3 {
        return Err(Failure::Validation("session too short to split".into()));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    trajectory::save_csv(&a.out.join("trajectory.csv"), samples)?;

    let gen = LfpGenConfig::for_maze(&maze);
    let rec = synthesize_lfp(samples, &gen, a.lfp_seed)?;
    let mut raw = SlabWriter::create(&a.out.join("lfp.bslm"), [1, N_CHANNELS, 1, rec.len()], &[rec.t0_ms])?;
    for (c, ch) in rec.channels.iter().enumerate() {
        let v: Vec<f32> = ch.iter().map(|&x| x as f32).collect();
        raw.write_slab(0, c, &v)?;
    }
    drop(raw);

    let split_t_ms = samples[split_index(samples.len(), a.split_fraction)].t_ms;
    let cfg = ExportConfig {
        frequencies: log_frequencies(a.freq_min, a.freq_max, a.n_freqs),
        center: match a.center {
            Center::Median => CenterStat::Median,
            Center::Mean => CenterStat::Mean,
        },
        split_t_ms,
        image_stride: a.image_stride,
    };
    let export = write_wavelet_tensors(&rec, samples, &cfg, &a.out.join("train.bslm"), &a.out.join("test.bslm"))?;
    let p = a.out.join("tensors.json");
    std::fs::write(&p, to_json(&export)).map_err(|e| io_failure(&p, e))?;
    let manifest = SimulationManifest {
        session: session_cfg,
        maze: a.session.maze.as_deref(),
        lfp_seed: a.lfp_seed,
        lfp: &gen,
        n_samples: samples.len(),
        duration_ms: session.duration_ms(),
        split_fraction: a.split_fraction,
        split_t_ms,
        image_stride: a.image_stride,
        trials: &session.trials,
    };
    let p = a.out.join("session.json");
    std::fs::write(&p, to_json(&manifest)).map_err(|e| io_failure(&p, e))?;
    println!(
        "{} samples, {} train and {} test images written to {}",
        samples.len(),
        export.train_labels.len(),
        export.test_labels.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Calibration {
    name: String,
    targets: MaeTargets,
    profile: NoiseProfile,
    achieved: MaeTargets,
    draws: usize,
}

fn calibrate(a: &CalibrateArgs) -> CmdResult {
    let jobs: Vec<(String, MaeTargets)> = match (a.location_mae, a.direction_mae, a.speed_mae) {
        (Some(l), Some(d), Some(s)) => {
            vec![("custom".into(), MaeTargets { location_mae_cm: l, direction_mae_deg: d, speed_mae_cm_s: s })]
        }
        _ if a.preset.is_empty() => RAT_TARGETS.iter().map(|(n, t)| (n.to_string(), *t)).collect(),
        _ => {
            let mut v = Vec::new();
            for p in &a.preset {
                if let Preset::Zero = p {
                    return Err(Failure::Validation("the zero profile has nothing to calibrate".into()));
                }
                v.push((p.name().to_string(), MaeTargets::preset(p.name())?));
            }
            v
        }
    };
    if a.draws == 0 {
        return Err(Failure::Validation("draws must be positive".into()));
    }
    let mut out = Vec::new();
    for (name, targets) in jobs {
        let profile = decoder::calibrate(&targets)?;
        let achieved = decoder::simulate_maes(profile, a.draws, a.seed)?;
        out.push(Calibration { name, targets, profile, achieved, draws: a.draws });
    }
    emit(&to_json(&out), a.out.as_deref())
}

fn slam(a: &SlamArgs) -> CmdResult {
    let d = PoseCellConfig::default();
    let pose_cells = PoseCellConfig {
        nx: a.nx.unwrap_or(d.nx),
        ny: a.ny.unwrap_or(d.ny),
        ntheta: a.ntheta.unwrap_or(d.ntheta),
        cell_size_cm: a.cell_size.unwrap_or(d.cell_size_cm),
        exc_variance: a.exc_variance.unwrap_or(d.exc_variance),
        exc_radius: a.exc_radius.unwrap_or(d.exc_radius),
        inh_variance: a.inh_variance.unwrap_or(d.inh_variance),
        inh_radius: a.inh_radius.unwrap_or(d.inh_radius),
        inhibition_amplitude: a.inhibition_amplitude.unwrap_or(d.inhibition_amplitude),
        global_inhibition: a.global_inhibition.unwrap_or(d.global_inhibition),
    };
    let sd = SlamParams::default();
    if !(a.noise_scale >= 0.0) || !a.noise_scale.is_finite() {
        return Err(Failure::Validation("noise scale must be finite and non-negative".into()));
    }
    let cfg = RunConfig {
        maze: a.session.maze.clone(),
        trajectory: match &a.trajectory {
            Some(p) => TrajectorySource::Csv(p.clone()),
            None => TrajectorySource::Simulate(a.session.session()),
        },
        decoder: match &a.decodings {
            Some(p) => DecoderSource::Csv(p.clone()),
            None => DecoderSource::Oracle {
                profile: NoiseProfile::preset(a.noise.name())?.scaled(a.noise_scale),
                seed: a.oracle_seed,
            },
        },
        slam: SlamParams {
            pose_cells,
            match_threshold_cm: a.match_threshold.unwrap_or(sd.match_threshold_cm),
            inject_energy: a.inject_energy.unwrap_or(sd.inject_energy),
            loop_closure: a.loop_closure,
            record_trace: false,
        },
        split_fraction: a.split_fraction,
        output_dir: Some(a.out.clone()),
    };
    let out = run_session(&cfg)?;
    print!("{}", to_json(&out.report));
    Ok(())
}

fn report(a: &ReportArgs) -> CmdResult {
    if !a.dir.is_dir() {
        return Err(Failure::Validation(format!("{} is not a directory", a.dir.display())));
    }
    let r = report_from_artifacts(&a.dir)?;
    emit(&to_json(&r), a.out.as_deref())
}

fn render(a: &RenderArgs) -> CmdResult {
    let map = ExperienceMap::load(&a.map)?;
    let overlay = match (a.overlay, map.origin()) {
        (true, Some(o)) => Some(skeleton_in_map_frame(&load_maze(a.maze.as_deref())?, o)),
        _ => None,
    };
    let svg = render_svg(&map, overlay.as_deref());
    std::fs::write(&a.out, svg).map_err(|e| io_failure(&a.out, e))
}

fn main() -> ExitCode {
    let args = match config_file::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Slam(a) => slam(a),
        Command::Report(a) => report(a),
        Command::Render(a) => render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
