//! `stgcn` — command-line front end for the skeleton action recognition
//! library: inspect layouts, emit label maps and adjacency stacks, generate
//! synthetic data, train, evaluate, and compare partition strategies.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 at least one
//! comparison arm failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stgcn::adjacency::{build_stack, normalize_with, Normalization};
use stgcn::compare::{run_compare, CompareConfig};
use stgcn::data::{
    load_sequence, read_manifest, synth_dataset, write_dataset, Dataset, SequenceFormat, SynthSpec,
};
use stgcn::gcn::model::STANDARD_PLAN;
use stgcn::gcn::{
    evaluate, load_checkpoint, prepare_samples, save_checkpoint, train, FeatureMode, ModelMeta,
    ModelParams, TrainConfig,
};
use stgcn::partition::{
    average_distances, connection_labels, full_distance_labels, index_labels, partition_count,
    spatial_config_labels, DistanceProfile, LabelMap, Strategy, TieRule,
};
use stgcn::skeleton::{builtin_layout, SkeletonLayout};
use stgcn::Error;

const EXIT_ARM_FAILED: u8 = 3;

/// Errors split by which exit code they map to: usage mistakes (2) versus
/// runtime failures (1). Flag-level problems never reach here — clap exits
/// with code 2 on its own.
enum CmdError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CmdError {
    fn from(err: Error) -> Self {
        CmdError::Runtime(err)
    }
}

impl From<std::io::Error> for CmdError {
    fn from(err: std::io::Error) -> Self {
        CmdError::Runtime(Error::Io(err))
    }
}

type CmdResult<T> = Result<T, CmdError>;

/// Restore the default SIGPIPE disposition so `stgcn ... | head` dies
/// quietly like any other filter instead of panicking on a closed stdout
/// (Rust ignores SIGPIPE by default, turning pipe closure into an Err).
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(CmdError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CmdError::Runtime(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CmdResult<ExitCode> {
    match cli.command {
        Command::Layout(cmd) => cmd.run(),
        Command::Labels(cmd) => cmd.run(),
        Command::Adjacency(cmd) => cmd.run(),
        Command::Synth(cmd) => cmd.run(),
        Command::Train(cmd) => cmd.run(),
        Command::Eval(cmd) => cmd.run(),
        Command::Compare(cmd) => cmd.run(),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "stgcn",
    version,
    about = "Skeleton action recognition: partition strategies, training, comparison"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a skeleton layout in the layout file format
    Layout(LayoutCmd),
    /// Print the partition label map for a layout and strategy
    Labels(LabelsCmd),
    /// Emit the stacked partition adjacency matrices
    Adjacency(AdjacencyCmd),
    /// Generate the synthetic dataset on disk
    Synth(SynthCmd),
    /// Train a model and write a checkpoint
    Train(TrainCmd),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalCmd),
    /// Train one model per partition strategy and tabulate the results
    Compare(CompareCmd),
}

// ---------------------------------------------------------------------------
// Shared flag groups

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LayoutName {
    #[value(name = "openpose18")]
    Openpose18,
    #[value(name = "ntu25")]
    Ntu25,
}

impl LayoutName {
    fn as_str(self) -> &'static str {
        match self {
            LayoutName::Openpose18 => "openpose18",
            LayoutName::Ntu25 => "ntu25",
        }
    }
}

#[derive(Args, Debug)]
struct LayoutOpts {
    /// Built-in skeleton layout
    #[arg(long, value_enum, default_value_t = LayoutName::Openpose18)]
    layout: LayoutName,
    /// Load the layout from a file instead of a built-in
    #[arg(long, value_name = "PATH", conflicts_with = "layout")]
    layout_file: Option<PathBuf>,
}

impl LayoutOpts {
    fn resolve(&self) -> CmdResult<SkeletonLayout> {
        match &self.layout_file {
            Some(path) => Ok(parse_layout_file(path)?),
            None => Ok(builtin_layout(self.layout.as_str())?),
        }
    }
}

fn parse_layout_file(path: &Path) -> CmdResult<SkeletonLayout> {
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(SkeletonLayout::parse(name, &text)?)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MaskArg {
    On,
    Off,
}

impl MaskArg {
    fn enabled(self) -> bool {
        self == MaskArg::On
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum NormArg {
    None,
    Row,
    Symmetric,
}

impl NormArg {
    fn to_scheme(self) -> Normalization {
        match self {
            NormArg::None => Normalization::None,
            NormArg::Row => Normalization::Row,
            NormArg::Symmetric => Normalization::Symmetric,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum TieRuleArg {
    /// Break degree ties by ascending joint index
    Index,
    /// Shuffle tied joints with the seeded generator
    Random,
}

impl TieRuleArg {
    fn to_rule(self, seed: u64) -> TieRule {
        match self {
            TieRuleArg::Index => TieRule::ByIndex,
            TieRuleArg::Random => TieRule::SeededRandom(seed),
        }
    }
}

fn parse_strategy_arg(s: &str) -> Result<Strategy, String> {
    Strategy::from_str(s).map_err(|e| e.to_string())
}

/// Where the spatial strategy's reference distances come from.
#[derive(Args, Debug)]
struct ProfileOpts {
    /// Distance-profile file (one value per joint) for the spatial strategy
    #[arg(long, value_name = "PATH")]
    profile: Option<PathBuf>,
    /// Dataset manifest whose sequences define the spatial reference profile
    #[arg(long, value_name = "PATH", conflicts_with = "profile")]
    profile_manifest: Option<PathBuf>,
}

impl ProfileOpts {
    fn resolve(&self, layout: &SkeletonLayout) -> CmdResult<Option<DistanceProfile>> {
        match (&self.profile, &self.profile_manifest) {
            (Some(path), None) => Ok(Some(read_profile(path)?)),
            (None, Some(path)) => {
                let samples = read_manifest(path)?;
                let sequences: Vec<_> = samples.into_iter().map(|s| s.sequence).collect();
                Ok(Some(average_distances(&sequences, layout)?))
            }
            _ => Ok(None),
        }
    }
}

fn read_profile(path: &Path) -> CmdResult<DistanceProfile> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for token in text.split_whitespace() {
        let value = token.parse::<f64>().map_err(|_| {
            CmdError::Runtime(Error::Parse {
                source_name: path.display().to_string(),
                reason: format!("bad distance value `{token}`"),
            })
        })?;
        values.push(value);
    }
    Ok(DistanceProfile::new(values)?)
}

fn profile_to_text(profile: &DistanceProfile) -> String {
    let mut out = String::new();
    for v in profile.distances() {
        out.push_str(&format!("{v}\n"));
    }
    out
}

/// Reference-frame input for the per-frame (fulldist) strategy.
#[derive(Args, Debug)]
struct FrameOpts {
    /// Internal-format sequence file supplying the reference frame
    #[arg(long, value_name = "PATH")]
    frame: Option<PathBuf>,
    /// Frame index within --frame
    #[arg(long, value_name = "T", default_value_t = 0)]
    frame_index: usize,
}

#[derive(Args, Debug)]
struct SynthOpts {
    /// Number of classes in the generated dataset
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Samples generated per class (split 3:1 into train/validation)
    #[arg(long, default_value_t = 40)]
    samples_per_class: usize,
    /// Frames per generated sequence
    #[arg(long, default_value_t = 32)]
    frames: usize,
    /// Standard deviation of the coordinate noise
    #[arg(long, default_value_t = 0.02)]
    noise_sigma: f64,
    /// Seed for the dataset generator
    #[arg(long, default_value_t = 11)]
    synth_seed: u64,
}

impl SynthOpts {
    fn to_spec(&self) -> SynthSpec {
        SynthSpec {
            num_classes: self.classes,
            samples_per_class: self.samples_per_class,
            frames: self.frames,
            noise_sigma: self.noise_sigma,
            seed: self.synth_seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Shared helpers

/// Default output directory: $STGCN_OUT_DIR, falling back to the working
/// directory.
fn out_dir() -> PathBuf {
    std::env::var_os("STGCN_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn out_path(explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| out_dir().join(default_name))
}

fn ensure_parent(path: &Path) -> CmdResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn append_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}

/// `CHANNELSxSTRIDE,...` (e.g. `8x1,16x2`) or the keyword `standard`.
fn parse_plan(text: &str) -> CmdResult<Vec<(usize, usize)>> {
    if text == "standard" {
        return Ok(STANDARD_PLAN.to_vec());
    }
    let mut plan = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let bad = || {
            CmdError::Usage(format!(
                "bad --plan entry `{part}`: expected CHANNELSxSTRIDE like 8x1, or `standard`"
            ))
        };
        let (channels, stride) = part.split_once('x').ok_or_else(bad)?;
        let channels = channels.parse::<usize>().map_err(|_| bad())?;
        let stride = stride.parse::<usize>().map_err(|_| bad())?;
        plan.push((channels, stride));
    }
    Ok(plan)
}

fn manifests_dataset(train_manifest: &Path, val_manifest: Option<&Path>) -> CmdResult<Dataset> {
    let train = read_manifest(train_manifest)?;
    let validation = match val_manifest {
        Some(path) => read_manifest(path)?,
        None => Vec::new(),
    };
    if train.is_empty() {
        return Err(CmdError::Runtime(Error::EmptyDataset));
    }
    let num_classes = train
        .iter()
        .chain(&validation)
        .map(|s| s.label)
        .max()
        .unwrap_or(0)
        + 1;
    Ok(Dataset {
        train,
        validation,
        num_classes,
    })
}

/// Build the label map a strategy needs, checking that its extra inputs
/// (profile or reference frame) were supplied.
fn label_map_for(
    layout: &SkeletonLayout,
    strategy: Strategy,
    profile: Option<&DistanceProfile>,
    frame: &FrameOpts,
    tie_rule: TieRule,
) -> CmdResult<LabelMap> {
    match strategy {
        Strategy::SpatialConfig => {
            let profile = profile.ok_or_else(|| {
                CmdError::Usage(
                    "the spatial strategy needs --profile or --profile-manifest".into(),
                )
            })?;
            Ok(spatial_config_labels(layout, profile)?)
        }
        Strategy::FullDistance => {
            let path = frame.frame.as_deref().ok_or_else(|| {
                CmdError::Usage(
                    "the fulldist strategy needs --frame <internal-format sequence file>".into(),
                )
            })?;
            let (sequence, _) = load_sequence(path, SequenceFormat::Internal)?;
            sequence.check_layout(layout)?;
            if frame.frame_index >= sequence.num_frames() {
                return Err(CmdError::Usage(format!(
                    "--frame-index {} out of range: {} has {} frames",
                    frame.frame_index,
                    path.display(),
                    sequence.num_frames()
                )));
            }
            Ok(full_distance_labels(layout, sequence.frame(frame.frame_index))?)
        }
        Strategy::Connection => Ok(connection_labels(layout, tie_rule)),
        Strategy::Index => Ok(index_labels(layout)),
    }
}

// ---------------------------------------------------------------------------
// layout

#[derive(Args, Debug)]
struct LayoutCmd {
    #[command(flatten)]
    layout: LayoutOpts,
}

impl LayoutCmd {
    fn run(self) -> CmdResult<ExitCode> {
        let layout = self.layout.resolve()?;
        print!("{}", layout.to_file_text());
        Ok(ExitCode::SUCCESS)
    }
}

// ---------------------------------------------------------------------------
// labels

#[derive(Args, Debug)]
struct LabelsCmd {
    #[command(flatten)]
    layout: LayoutOpts,
    /// Partition strategy (spatial|fulldist|connection|index)
    #[arg(long, value_parser = parse_strategy_arg)]
    strategy: Strategy,
    #[command(flatten)]
    profile: ProfileOpts,
    #[command(flatten)]
    frame: FrameOpts,
    /// Degree-tie handling for the connection strategy
    #[arg(long, value_enum, default_value_t = TieRuleArg::Index)]
    tie_rule: TieRuleArg,
    /// Seed for --tie-rule random
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl LabelsCmd {
    fn run(self) -> CmdResult<ExitCode> {
        let layout = self.layout.resolve()?;
        let profile = self.profile.resolve(&layout)?;
        let map = label_map_for(
            &layout,
            self.strategy,
            profile.as_ref(),
            &self.frame,
            self.tie_rule.to_rule(self.seed),
        )?;
        print!("{}", map.to_text());
        Ok(ExitCode::SUCCESS)
    }
}

// ---------------------------------------------------------------------------
// adjacency

#[derive(Args, Debug)]
struct AdjacencyCmd {
    #[command(flatten)]
    layout: LayoutOpts,
    /// Partition strategy (spatial|fulldist|connection|index)
    #[arg(long, value_parser = parse_strategy_arg)]
    strategy: Strategy,
    #[command(flatten)]
    profile: ProfileOpts,
    #[command(flatten)]
    frame: FrameOpts,
    /// Degree-tie handling for the connection strategy
    #[arg(long, value_enum, default_value_t = TieRuleArg::Index)]
    tie_rule: TieRuleArg,
    /// Seed for --tie-rule random
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Normalization applied to each slice
    #[arg(long, value_enum, default_value_t = NormArg::Row)]
    normalization: NormArg,
    /// Output format
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Output file (text defaults to standard output; binary defaults to
    /// adjacency.pstk in the output directory)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

impl AdjacencyCmd {
    fn run(self) -> CmdResult<ExitCode> {
        let layout = self.layout.resolve()?;
        let profile = self.profile.resolve(&layout)?;
        let map = label_map_for(
            &layout,
            self.strategy,
            profile.as_ref(),
            &self.frame,
            self.tie_rule.to_rule(self.seed),
        )?;
        let stack = build_stack(&layout, &map)?;
        let stack = normalize_with(&stack, self.normalization.to_scheme());
        match self.format {
            FormatArg::Text => match &self.out {
                None => print!("{}", stack.to_text()),
                Some(path) => {
                    ensure_parent(path)?;
                    fs::write(path, stack.to_text())?;
                    println!("wrote {}", path.display());
                }
            },
            FormatArg::Binary => {
                let path = out_path(self.out, "adjacency.pstk");
                ensure_parent(&path)?;
                let mut bytes = Vec::new();
                stack.write_binary(&mut bytes)?;
                fs::write(&path, bytes)?;
                println!("wrote {}", path.display());
            }
        }
        Ok(ExitCode::SUCCESS)
    }
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args, Debug)]
struct SynthCmd {
    #[command(flatten)]
    synth: SynthOpts,
    /// Output directory (defaults to $STGCN_OUT_DIR or the working directory)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl SynthCmd {
    fn run(self) -> CmdResult<ExitCode> {
        let dataset = synth_dataset(&self.synth.to_spec())?;
        let dir = self.out.unwrap_or_else(out_dir);
        fs::create_dir_all(&dir)?;
        write_dataset(&dataset, &dir)?;
        println!(
            "wrote {} training and {} validation samples to {}",
            dataset.train.len(),
            dataset.validation.len(),
            dir.display()
        );
        Ok(ExitCode::SUCCESS)
    }
}

// ---------------------------------------------------------------------------
// train

#[derive(Args, Debug)]
struct TrainCmd {
    #[command(flatten)]
    layout: LayoutOpts,
    /// Partition strategy (spatial|fulldist|connection|index)
    #[arg(long, value_parser = parse_strategy_arg)]
    strategy: Strategy,
    /// Learnable edge-importance mask
    #[arg(long, value_enum, default_value_t = MaskArg::Off)]
    mask: MaskArg,
    /// Train on the generated synthetic dataset
    #[arg(long, conflicts_with = "train_manifest")]
    synth: bool,
    #[command(flatten)]
    synth_opts: SynthOpts,
    /// Manifest of training samples
    #[arg(long, value_name = "PATH")]
    train_manifest: Option<PathBuf>,
    /// Manifest of validation samples
    #[arg(long, value_name = "PATH", requires = "train_manifest")]
    val_manifest: Option<PathBuf>,
    /// Seed for initialization, shuffling, and dropout
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 80)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Initial learning rate
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Epochs at which the learning rate decays (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 50])]
    decay_epochs: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    decay_factor: f64,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 0.0001)]
    weight_decay: f64,
    /// Every sequence is padded or truncated to this many frames
    #[arg(long, default_value_t = 64)]
    fixed_frames: usize,
    /// Layer plan: CHANNELSxSTRIDE list (e.g. 8x1,16x2) or `standard`
    #[arg(long, default_value = "8x1,16x2")]
    plan: String,
    /// Degree-tie handling for the connection strategy
    #[arg(long, value_enum, default_value_t = TieRuleArg::Index)]
    tie_rule: TieRuleArg,
    /// Checkpoint output path (defaults to model.stgm in the output directory)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

impl TrainCmd {
    fn run(self) -> CmdResult<ExitCode> {
        let layout = self.layout.resolve()?;
        let dataset = if let Some(path) = &self.train_manifest {
            manifests_dataset(path, self.val_manifest.as_deref())?
        } else if self.synth {
            synth_dataset(&self.synth_opts.to_spec())?
        } else {
            return Err(CmdError::Usage(
                "provide a dataset: --synth or --train-manifest <PATH>".into(),
            ));
        };
        if dataset.train.is_empty() {
            return Err(CmdError::Runtime(Error::EmptyDataset));
        }

        let profile = if self.strategy == Strategy::SpatialConfig {
            let sequences: Vec<_> = dataset.train.iter().map(|s| s.sequence.clone()).collect();
            Some(average_distances(&sequences, &layout)?)
        } else {
            None
        };
        let tie_rule = self.tie_rule.to_rule(self.seed);
        let config = TrainConfig {
            initial_lr: self.lr,
            decay_factor: self.decay_factor,
            decay_epochs: self.decay_epochs.clone(),
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            fixed_frames: self.fixed_frames,
        };
        let prepared_train = prepare_samples(
            &layout,
            self.strategy,
            &dataset.train,
            profile.as_ref(),
            tie_rule,
            config.fixed_frames,
            FeatureMode::Raw,
        )?;
        let prepared_val = prepare_samples(
            &layout,
            self.strategy,
            &dataset.validation,
            profile.as_ref(),
            tie_rule,
            config.fixed_frames,
            FeatureMode::Raw,
        )?;

        let meta = ModelMeta {
            strategy: self.strategy,
            layout_name: layout.name().to_string(),
            num_partitions: partition_count(self.strategy, &layout),
            num_joints: layout.num_joints(),
            in_channels: dataset.train[0].sequence.channels(),
            num_classes: dataset.num_classes,
            temporal_kernel_size: 9,
            mask_enabled: self.mask.enabled(),
        };
        let plan = parse_plan(&self.plan)?;
        let mut model = ModelParams::new(meta, &plan, self.seed)?;
        let metrics = train(&mut model, &prepared_train, &prepared_val, &config)?;
        for m in &metrics {
            println!("{}", m.to_line());
        }

        let out = out_path(self.out, "model.stgm");
        ensure_parent(&out)?;
        save_checkpoint(&model, &out)?;
        println!("checkpoint {}", out.display());
        if let Some(profile) = &profile {
            let profile_path = append_suffix(&out, ".profile");
            fs::write(&profile_path, profile_to_text(profile))?;
            println!("profile {}", profile_path.display());
        }
        Ok(ExitCode::SUCCESS)
    }
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args, Debug)]
struct EvalCmd {
    /// Checkpoint to evaluate
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Layout file, when the checkpoint was trained on a non-built-in layout
    #[arg(long, value_name = "PATH")]
    layout_file: Option<PathBuf>,
    /// Evaluate on the generated synthetic validation split
    #[arg(long, conflicts_with = "manifest")]
    synth: bool,
    #[command(flatten)]
    synth_opts: SynthOpts,
    /// Manifest of samples to evaluate
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    profile: ProfileOpts,
    /// Count a sample correct when the label ranks in the top n classes
    #[arg(long, default_value_t = 1)]
    top_n: usize,
    /// Every sequence is padded or truncated to this many frames
    #[arg(long, default_value_t = 64)]
    fixed_frames: usize,
    /// Degree-tie handling for the connection strategy
    #[arg(long, value_enum, default_value_t = TieRuleArg::Index)]
    tie_rule: TieRuleArg,
    /// Seed for --tie-rule random
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EvalCmd {
    fn run(self) -> CmdResult<ExitCode> {
        let model = load_checkpoint(&self.model)?;
        let layout = match &self.layout_file {
            Some(path) => {
                let layout = parse_layout_file(path)?;
                if layout.num_joints() != model.meta.num_joints {
                    return Err(CmdError::Runtime(Error::Consistency(format!(
                        "layout file has {} joints, checkpoint expects {}",
                        layout.num_joints(),
                        model.meta.num_joints
                    ))));
                }
                layout
            }
            None => builtin_layout(&model.meta.layout_name)?,
        };

        let (samples, synth_train) = if let Some(path) = &self.manifest {
            (read_manifest(path)?, None)
        } else if self.synth {
            let dataset = synth_dataset(&self.synth_opts.to_spec())?;
            (dataset.validation, Some(dataset.train))
        } else {
            return Err(CmdError::Usage(
                "provide samples: --synth or --manifest <PATH>".into(),
            ));
        };
        if samples.is_empty() {
            return Err(CmdError::Runtime(Error::EmptyDataset));
        }

        let profile = if model.meta.strategy == Strategy::SpatialConfig {
            match self.profile.resolve(&layout)? {
                Some(p) => Some(p),
                None => match &synth_train {
                    Some(train_samples) => {
                        let sequences: Vec<_> =
                            train_samples.iter().map(|s| s.sequence.clone()).collect();
                        Some(average_distances(&sequences, &layout)?)
                    }
                    None => {
                        return Err(CmdError::Usage(
                            "spatial checkpoints need --profile or --profile-manifest".into(),
                        ))
                    }
                },
            }
        } else {
            None
        };

        let prepared = prepare_samples(
            &layout,
            model.meta.strategy,
            &samples,
            profile.as_ref(),
            self.tie_rule.to_rule(self.seed),
            self.fixed_frames,
            FeatureMode::Raw,
        )?;
        let accuracy = evaluate(&model, &prepared, self.top_n)?;
        println!("samples {}", prepared.len());
        println!("top{}_accuracy {:.6}", self.top_n, accuracy);
        Ok(ExitCode::SUCCESS)
    }
}

// ---------------------------------------------------------------------------
// compare

#[derive(Args, Debug)]
struct CompareCmd {
    /// Built-in skeleton layout
    #[arg(long, value_enum, default_value_t = LayoutName::Openpose18)]
    layout: LayoutName,
    #[command(flatten)]
    synth_opts: SynthOpts,
    /// Manifest of training samples (defaults to the synthetic dataset)
    #[arg(long, value_name = "PATH")]
    train_manifest: Option<PathBuf>,
    /// Manifest of validation samples
    #[arg(long, value_name = "PATH", requires = "train_manifest")]
    val_manifest: Option<PathBuf>,
    /// Seed shared by every arm
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Initial learning rate
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Epochs at which the learning rate decays (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = vec![80usize])]
    decay_epochs: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    decay_factor: f64,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    #[arg(long, default_value_t = 0.0001)]
    weight_decay: f64,
    /// Every sequence is padded or truncated to this many frames
    #[arg(long, default_value_t = 32)]
    fixed_frames: usize,
    /// Layer plan: CHANNELSxSTRIDE list (e.g. 16x1,32x2) or `standard`
    #[arg(long, default_value = "16x1,32x2")]
    plan: String,
    /// Strategies that additionally run with the mask enabled (comma separated)
    #[arg(long, value_parser = parse_strategy_arg, value_delimiter = ',', default_values_t = vec![Strategy::Index])]
    mask_strategy: Vec<Strategy>,
    /// Degree-tie handling for the connection strategy
    #[arg(long, value_enum, default_value_t = TieRuleArg::Index)]
    tie_rule: TieRuleArg,
    /// CSV output path (defaults to compare.csv in the output directory)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

impl CompareCmd {
    fn run(self) -> CmdResult<ExitCode> {
        let dataset = if let Some(path) = &self.train_manifest {
            manifests_dataset(path, self.val_manifest.as_deref())?
        } else {
            synth_dataset(&self.synth_opts.to_spec())?
        };
        let config = CompareConfig {
            layout_name: self.layout.as_str().to_string(),
            train: TrainConfig {
                initial_lr: self.lr,
                decay_factor: self.decay_factor,
                decay_epochs: self.decay_epochs.clone(),
                weight_decay: self.weight_decay,
                dropout: self.dropout,
                epochs: self.epochs,
                batch_size: self.batch_size,
                seed: self.seed,
                fixed_frames: self.fixed_frames,
            },
            model_plan: parse_plan(&self.plan)?,
            tie_rule: self.tie_rule.to_rule(self.seed),
            mask_strategies: self.mask_strategy.clone(),
        };
        let report = run_compare(&config, &dataset)?;
        print!("{}", report.to_table());
        let csv_path = out_path(self.out, "compare.csv");
        ensure_parent(&csv_path)?;
        fs::write(&csv_path, report.to_csv())?;
        println!("wrote {}", csv_path.display());
        if report.any_failed() {
            eprintln!("error: at least one comparison arm failed");
            return Ok(ExitCode::from(EXIT_ARM_FAILED));
        }
        Ok(ExitCode::SUCCESS)
    }
}
