//! The `lca` command-line surface.
//!
//! Subcommands: `gen-synth`, `train-coherence`, `train-regress`, `assemble`,
//! `evaluate`, `score`, `bench`. Result JSON goes to stdout (and to files
//! where a subcommand writes artifacts); diagnostics go to stderr. Exit
//! codes: 0 success, 1 user error, 2 internal error.
//!
//! Option precedence: command-line flag, then `--config` JSON file, then the
//! built-in defaults (which mirror the published full-scale hyperparameters).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assembly::{
    beam_search, stub_pool, AssemblyConfig, AssemblyMode, CountingScorer, LcaScorer,
    TableScorer, DEFAULT_BEAM_WIDTH, DEFAULT_GAMMA,
};
use crate::data::Shot;
use crate::encoder::{lca_score, EncoderConfig};
use crate::error::{Error, Result};
use crate::io::checkpoint::{load_checkpoint, save_checkpoint};
use crate::io::embedding_file::save_embeddings;
use crate::io::manifest::{
    load_pool, load_rated, load_triplets, read_json, write_json, ManifestPosition,
    ManifestRated, ManifestTriplet, PoolManifest, RatedManifest, ShotIndex, TripletManifest,
};
use crate::metrics::{iou, recall_at_k, sms};
use crate::rng::Rng;
use crate::synthdata::{
    gen_candidate_pool, gen_coherent_video, gen_rated_sequence, make_triplet, PoolGenConfig,
};
use crate::training::{train_coherence, train_regressor, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "lca", version, about = "Sequence-coherence scoring and beam-search assembly")]
struct Cli {
    /// Seed for every stochastic step of the subcommand.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON config file; flags override it, it overrides built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run encoder inference in 32-bit arithmetic (assemble/score only;
    /// training always runs in 64-bit).
    #[arg(long = "f32", global = true)]
    use_f32: bool,
    #[command(subcommand)]
    command: CommandKind,
}

#[derive(Subcommand, Debug)]
enum CommandKind {
    /// Generate a synthetic dataset: embeddings, triplet/rated manifests,
    /// and candidate pools with known ground truth.
    GenSynth(GenSynthArgs),
    /// Stage 1: contrastive coherence training; writes a checkpoint and a
    /// training report.
    TrainCoherence(TrainCoherenceArgs),
    /// Stage 2: fit the regression head on a frozen encoder.
    TrainRegress(TrainRegressArgs),
    /// Beam-search assembly of one candidate pool.
    Assemble(AssembleArgs),
    /// Compute IoU / SMS / Recall@K for assembly results.
    Evaluate(EvaluateArgs),
    /// Print the coherence score of one sequence.
    Score(ScoreArgs),
    /// Run (n, k, m) beam-search grids with a stub scorer and report call
    /// counts and wall time.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    videos: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    shots_min: usize,
    #[arg(long, default_value_t = 12)]
    shots_max: usize,
    /// Number of contrastive triplets (defaults to one per video).
    #[arg(long)]
    triplets: Option<usize>,
    #[arg(long, default_value_t = 4)]
    negatives: usize,
    #[arg(long, default_value_t = 100)]
    rated: usize,
    #[arg(long, default_value_t = 10)]
    pools: usize,
    #[arg(long, default_value_t = 8)]
    pool_positions: usize,
    #[arg(long, default_value_t = 5)]
    candidates: usize,
    /// Attach per-candidate text similarities (maximal at the ground truth).
    #[arg(long, default_value_t = false)]
    text: bool,
    #[arg(long, default_value_t = crate::synthdata::DEFAULT_STEP_SIGMA)]
    step_sigma: f64,
    #[arg(long, default_value_t = crate::synthdata::DEFAULT_FRAME_SIGMA)]
    frame_sigma: f64,
    #[arg(long, default_value_t = crate::synthdata::DEFAULT_JITTER_SIGMA)]
    jitter: f64,
    #[arg(long, default_value_t = crate::synthdata::DEFAULT_REPLACE_FRAC)]
    replace_frac: f64,
    #[arg(long, default_value_t = crate::synthdata::DEFAULT_SIM_THRESHOLD)]
    sim_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    blend_max: f64,
}

#[derive(Args, Debug)]
struct TrainCoherenceArgs {
    /// Triplet manifest (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Training report JSON (default: <out> with a .report.json extension).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Encoder preset: "full" (published sizes) or "desk".
    #[arg(long)]
    encoder: Option<String>,
}

#[derive(Args, Debug)]
struct TrainRegressArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Rated manifest (JSON).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
}

#[derive(Args, Debug)]
struct AssembleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Pool manifest (JSON).
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// "visual_only" or "text_augmented".
    #[arg(long)]
    mode: Option<String>,
    /// Record the kept frontier after every step.
    #[arg(long, default_value_t = false)]
    trace: bool,
    /// Also write the result JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Assembly result JSONs.
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    /// K for Recall@K over each result's top sequences.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Embedding file holding the shots.
    #[arg(long)]
    embeddings: PathBuf,
    /// Comma-separated shot ids, in order.
    #[arg(long)]
    ids: String,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated sequence lengths.
    #[arg(long, default_value = "5")]
    n: String,
    /// Comma-separated candidates-per-position values.
    #[arg(long, default_value = "3")]
    k: String,
    /// Comma-separated beam widths.
    #[arg(long, default_value = "2")]
    m: String,
}

/// Optional values loadable from `--config`; any present key replaces the
/// built-in default unless a flag overrides it.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    epochs: Option<usize>,
    batch: Option<usize>,
    tau: Option<f64>,
    lambda: Option<f64>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    encoder: Option<String>,
    d_model: Option<usize>,
    layers: Option<usize>,
    heads: Option<usize>,
    d_ff: Option<usize>,
    d_out: Option<usize>,
    max_seq_len: Option<usize>,
    beam: Option<usize>,
    gamma: Option<f64>,
    mode: Option<String>,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Entry point used by `main` and by tests. `argv` excludes the binary name.
pub fn cli_main(argv: &[String]) -> i32 {
    let mut full = vec!["lca".to_string()];
    full.extend_from_slice(argv);
    let cli = match Cli::try_parse_from(&full) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config: ConfigFile = match &cli.config {
        Some(path) => read_json(path)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        CommandKind::GenSynth(args) => gen_synth(&cli, args),
        CommandKind::TrainCoherence(args) => cmd_train_coherence(&cli, &config, args),
        CommandKind::TrainRegress(args) => cmd_train_regress(&cli, &config, args),
        CommandKind::Assemble(args) => cmd_assemble(&cli, &config, args),
        CommandKind::Evaluate(args) => cmd_evaluate(&cli, args),
        CommandKind::Score(args) => cmd_score(&cli, args),
        CommandKind::Bench(args) => cmd_bench(&cli, args),
    }
}

fn provenance(cli: &Cli, command: &str, effective: serde_json::Value) -> serde_json::Value {
    json!({ "command": command, "seed": cli.seed, "config": effective })
}

fn emit(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    if let Some(path) = out {
        write_json(path, value)?;
    }
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-synth
// ---------------------------------------------------------------------------

fn gen_synth(cli: &Cli, args: &GenSynthArgs) -> Result<()> {
    if args.videos == 0 {
        return Err(Error::Param("need at least one video".into()));
    }
    if args.shots_min < 1 || args.shots_max < args.shots_min {
        return Err(Error::Param("invalid shots-min/shots-max range".into()));
    }
    std::fs::create_dir_all(&args.out)?;
    std::fs::create_dir_all(args.out.join("pools"))?;
    let base = cli.seed;

    // coherent source videos with mixed lengths
    let mut videos = Vec::with_capacity(args.videos);
    let span = args.shots_max - args.shots_min + 1;
    for i in 0..args.videos {
        let seed = Rng::mix(&[base, 1, i as u64]);
        let n = args.shots_min + Rng::new(Rng::mix(&[base, 9, i as u64])).below(span);
        videos.push(gen_coherent_video(seed, n, args.dim, args.step_sigma, args.frame_sigma)?);
    }
    let donors: Vec<Shot> = videos.iter().flat_map(|v| v.shots().to_vec()).collect();

    let mut all_shots: Vec<Shot> = donors.clone();
    let mut seen: HashSet<String> = all_shots.iter().map(|s| s.id.clone()).collect();

    // contrastive triplets
    let num_triplets = args.triplets.unwrap_or(args.videos);
    let mut triplet_entries = Vec::with_capacity(num_triplets);
    for i in 0..num_triplets {
        let video = &videos[i % videos.len()];
        let triplet = make_triplet(
            video,
            &donors,
            args.negatives,
            args.jitter,
            args.replace_frac,
            args.sim_threshold,
            Rng::mix(&[base, 2, i as u64]),
        )?;
        for shot in triplet.positive.shots() {
            if seen.insert(shot.id.clone()) {
                all_shots.push(shot.clone());
            }
        }
        triplet_entries.push(ManifestTriplet {
            anchor: triplet.anchor.shot_ids(),
            positive: triplet.positive.shot_ids(),
            negatives: triplet.negatives.iter().map(|n| n.shot_ids()).collect(),
        });
    }

    // substitution-rated samples, cycling the five supported fractions; the
    // cycle rotates by one on each pass over the videos so no video (hence
    // no length) is pinned to a single fraction
    let fracs = [0.0, 0.2, 0.4, 0.6, 0.8];
    let mut rated_entries = Vec::with_capacity(args.rated);
    for i in 0..args.rated {
        let video = &videos[i % videos.len()];
        let rated = gen_rated_sequence(
            video,
            &donors,
            fracs[(i + i / videos.len()) % fracs.len()],
            Rng::mix(&[base, 3, i as u64]),
        )?;
        rated_entries.push(ManifestRated {
            shots: rated.sequence.shot_ids(),
            rating: rated.rating,
        });
    }

    // candidate pools with known ground truth
    let pool_cfg = PoolGenConfig {
        positions: args.pool_positions,
        candidates_per_position: args.candidates,
        dim: args.dim,
        step_sigma: args.step_sigma,
        frame_sigma: args.frame_sigma,
        blend_max: args.blend_max,
        with_text: args.text,
    };
    let effective = json!({
        "videos": args.videos, "dim": args.dim,
        "shots_min": args.shots_min, "shots_max": args.shots_max,
        "triplets": num_triplets, "negatives": args.negatives,
        "rated": args.rated, "pools": args.pools,
        "pool_positions": args.pool_positions, "candidates": args.candidates,
        "text": args.text, "step_sigma": args.step_sigma,
        "frame_sigma": args.frame_sigma, "jitter": args.jitter,
        "replace_frac": args.replace_frac, "sim_threshold": args.sim_threshold,
        "blend_max": args.blend_max,
    });
    let prov = provenance(cli, "gen-synth", effective);

    let mut pool_paths = Vec::with_capacity(args.pools);
    for i in 0..args.pools {
        let generated = gen_candidate_pool(&pool_cfg, Rng::mix(&[base, 4, i as u64]))?;
        for p in generated.pool.positions() {
            for shot in &p.candidates {
                if seen.insert(shot.id.clone()) {
                    all_shots.push(shot.clone());
                }
            }
        }
        let manifest = PoolManifest {
            embedding_file: "../shots.lcae".into(),
            positions: generated
                .pool
                .positions()
                .iter()
                .map(|p| ManifestPosition {
                    candidates: p.candidates.iter().map(|c| c.id.clone()).collect(),
                    text_similarity: p.text_similarity.clone(),
                })
                .collect(),
            ground_truth: Some(generated.gt_ids.clone()),
            provenance: Some(prov.clone()),
        };
        let path = args.out.join("pools").join(format!("pool_{i:04}.json"));
        write_json(&path, &manifest)?;
        pool_paths.push(path.display().to_string());
    }

    save_embeddings(&args.out.join("shots.lcae"), &all_shots)?;
    write_json(
        &args.out.join("triplets.json"),
        &TripletManifest {
            embedding_file: "shots.lcae".into(),
            triplets: triplet_entries,
            provenance: Some(prov.clone()),
        },
    )?;
    write_json(
        &args.out.join("rated.json"),
        &RatedManifest {
            embedding_file: "shots.lcae".into(),
            samples: rated_entries,
            provenance: Some(prov.clone()),
        },
    )?;

    let summary = json!({
        "out": args.out.display().to_string(),
        "shots_written": all_shots.len(),
        "videos": args.videos,
        "triplets": num_triplets,
        "rated": args.rated,
        "pools": pool_paths,
        "provenance": prov,
    });
    emit(None, &summary)
}

// ---------------------------------------------------------------------------
// training commands
// ---------------------------------------------------------------------------

fn encoder_config_from(
    preset: Option<&str>,
    file: &ConfigFile,
    input_dim: usize,
) -> Result<EncoderConfig> {
    let preset = preset.or(file.encoder.as_deref()).unwrap_or("full");
    let mut cfg = match preset {
        "full" => EncoderConfig::full_scale(input_dim),
        "desk" => EncoderConfig::desk_scale(input_dim),
        other => {
            return Err(Error::Param(format!(
                "unknown encoder preset {other:?} (expected \"full\" or \"desk\")"
            )))
        }
    };
    if let Some(v) = file.d_model {
        cfg.d_model = v;
    }
    if let Some(v) = file.layers {
        cfg.num_layers = v;
    }
    if let Some(v) = file.heads {
        cfg.num_heads = v;
    }
    if let Some(v) = file.d_ff {
        cfg.d_ff = v;
    }
    if let Some(v) = file.d_out {
        cfg.d_out = v;
    }
    if let Some(v) = file.max_seq_len {
        cfg.max_seq_len = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn warn_f32_training(cli: &Cli) {
    if cli.use_f32 {
        eprintln!("note: --f32 applies to inference only; training runs in 64-bit");
    }
}

fn cmd_train_coherence(cli: &Cli, file: &ConfigFile, args: &TrainCoherenceArgs) -> Result<()> {
    warn_f32_training(cli);
    let triplets = load_triplets(&args.data)?;
    if triplets.is_empty() {
        return Err(Error::Param("triplet manifest is empty".into()));
    }
    let full = TrainConfig::full_scale();
    let train_config = TrainConfig {
        tau: pick(args.tau, file.tau, full.tau),
        lambda: pick(args.lambda, file.lambda, full.lambda),
        learning_rate: pick(args.lr, file.lr, full.learning_rate),
        epochs: pick(args.epochs, file.epochs, full.epochs),
        batch_size: pick(args.batch, file.batch, full.batch_size),
        weight_decay: pick(args.weight_decay, file.weight_decay, full.weight_decay),
        replace_frac: full.replace_frac,
        rng_seed: cli.seed,
    };
    let input_dim = triplets[0].anchor.dim();
    let encoder_config = encoder_config_from(args.encoder.as_deref(), file, input_dim)?;

    eprintln!(
        "training stage 1: {} triplets, {} epochs, batch {}, tau {}, lambda {}",
        triplets.len(),
        train_config.epochs,
        train_config.batch_size,
        train_config.tau,
        train_config.lambda
    );
    let (params, report) = train_coherence(&triplets, &train_config, encoder_config)?;
    save_checkpoint(&args.out, &params)?;

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    let effective = json!({ "train": train_config, "encoder": encoder_config });
    let out = json!({
        "checkpoint": args.out.display().to_string(),
        "report": report,
        "provenance": provenance(cli, "train-coherence", effective),
    });
    write_json(&report_path, &out)?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_train_regress(cli: &Cli, file: &ConfigFile, args: &TrainRegressArgs) -> Result<()> {
    warn_f32_training(cli);
    let frozen = load_checkpoint(&args.checkpoint)?;
    let rated = load_rated(&args.data)?;
    let stage2 = TrainConfig::stage2(cli.seed);
    let train_config = TrainConfig {
        learning_rate: pick(args.lr, file.lr, stage2.learning_rate),
        epochs: pick(args.epochs, file.epochs, stage2.epochs),
        batch_size: pick(args.batch, file.batch, stage2.batch_size),
        weight_decay: pick(args.weight_decay, file.weight_decay, stage2.weight_decay),
        ..stage2
    };
    eprintln!(
        "training stage 2: {} rated samples, {} epochs (encoder frozen)",
        rated.len(),
        train_config.epochs
    );
    let params = train_regressor(&frozen, &rated, &train_config)?;
    save_checkpoint(&args.out, &params)?;
    let effective = json!({ "train": train_config });
    let out = json!({
        "checkpoint": args.out.display().to_string(),
        "samples": rated.len(),
        "provenance": provenance(cli, "train-regress", effective),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// assemble / evaluate / score / bench
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct AssembleOutput {
    pool: String,
    mode: AssemblyMode,
    beam: usize,
    gamma: f64,
    chosen: Vec<usize>,
    chosen_ids: Vec<String>,
    score: Option<f64>,
    scorer_calls: u64,
    /// Final frontier as id sequences, best first.
    top_sequences: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beam_trace: Option<Vec<crate::assembly::BeamStep>>,
    provenance: serde_json::Value,
}

fn cmd_assemble(cli: &Cli, file: &ConfigFile, args: &AssembleArgs) -> Result<()> {
    let params = load_checkpoint(&args.checkpoint)?;
    let loaded = load_pool(&args.pool)?;
    let mode: AssemblyMode = match (&args.mode, &file.mode) {
        (Some(m), _) => m.parse()?,
        (None, Some(m)) => m.parse()?,
        (None, None) => AssemblyMode::VisualOnly,
    };
    let config = AssemblyConfig {
        beam_width: pick(args.beam, file.beam, DEFAULT_BEAM_WIDTH),
        gamma: pick(args.gamma, file.gamma, DEFAULT_GAMMA),
        mode,
        record_trace: args.trace,
    };

    let result = if cli.use_f32 {
        let scorer = LcaScorer::new(params.to_f32());
        beam_search(&loaded.pool, &scorer, &config)?
    } else {
        let scorer = LcaScorer::new(params);
        beam_search(&loaded.pool, &scorer, &config)?
    };

    let ids_of = |indices: &[usize]| -> Vec<String> {
        indices
            .iter()
            .enumerate()
            .map(|(pos, &c)| loaded.pool.shot(pos, c).id.clone())
            .collect()
    };
    let effective = json!({
        "beam": config.beam_width, "gamma": config.gamma, "mode": config.mode,
        "f32": cli.use_f32, "checkpoint": args.checkpoint.display().to_string(),
    });
    let output = AssembleOutput {
        pool: args.pool.display().to_string(),
        mode: config.mode,
        beam: config.beam_width,
        gamma: config.gamma,
        chosen_ids: ids_of(&result.chosen),
        chosen: result.chosen.clone(),
        score: result.score,
        scorer_calls: result.scorer_calls,
        top_sequences: result.final_frontier.iter().map(|e| ids_of(&e.indices)).collect(),
        beam_trace: result.beam_trace,
        provenance: provenance(cli, "assemble", effective),
    };
    emit(args.out.as_deref(), &serde_json::to_value(&output)?)
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    if args.k < 1 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(args.results.len());
    let mut sum_iou = 0.0;
    let mut sum_sms = 0.0;
    let mut sum_recall = 0.0;
    for path in &args.results {
        let result: AssembleOutput = read_json(path)?;
        let pool_path = resolve_relative(path, &result.pool);
        let loaded = load_pool(&pool_path)?;
        let gt = loaded.ground_truth.ok_or_else(|| {
            Error::Param(format!("pool {} has no ground truth", pool_path.display()))
        })?;
        let sample_iou = iou(&gt, &result.chosen_ids);
        let sample_sms = sms(&gt, &result.chosen_ids);
        let top: Vec<Vec<String>> = if result.top_sequences.is_empty() {
            vec![result.chosen_ids.clone()]
        } else {
            result.top_sequences.iter().take(args.k).cloned().collect()
        };
        let sample_recall = recall_at_k(&gt, &top)?;
        sum_iou += sample_iou;
        sum_sms += sample_sms;
        sum_recall += sample_recall;
        rows.push(json!({
            "result": path.display().to_string(),
            "pool": pool_path.display().to_string(),
            "iou": sample_iou,
            "sms": sample_sms,
            "recall_at_k": sample_recall,
        }));
    }
    let n = rows.len() as f64;
    let output = json!({
        "k": args.k,
        "per_sample": rows,
        "mean": {
            "iou": sum_iou / n,
            "sms": sum_sms / n,
            "recall_at_k": sum_recall / n,
        },
        "provenance": provenance(cli, "evaluate", json!({ "k": args.k })),
    });
    emit(args.out.as_deref(), &output)
}

fn resolve_relative(reference: &Path, stored: &str) -> PathBuf {
    let p = Path::new(stored);
    if p.is_absolute() || p.exists() {
        p.to_path_buf()
    } else {
        reference.parent().unwrap_or_else(|| Path::new(".")).join(p)
    }
}

fn cmd_score(cli: &Cli, args: &ScoreArgs) -> Result<()> {
    let params = load_checkpoint(&args.checkpoint)?;
    let index = ShotIndex::load(&args.embeddings)?;
    let ids: Vec<String> = args
        .ids
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if ids.is_empty() {
        return Err(Error::Param("no shot ids given".into()));
    }
    let sequence = index.sequence("cli", &ids)?;
    let score = if cli.use_f32 {
        crate::encoder::lca_score_f32(&params.to_f32(), &sequence)?
    } else {
        lca_score(&params, &sequence)?
    };
    let output = json!({
        "ids": ids,
        "score": score,
        "provenance": provenance(cli, "score", json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "f32": cli.use_f32,
        })),
    });
    emit(None, &output)
}

fn parse_list(what: &str, s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Param(format!("invalid {what} value {p:?}")))
        })
        .collect()
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let ns = parse_list("n", &args.n)?;
    let ks = parse_list("k", &args.k)?;
    let ms = parse_list("m", &args.m)?;
    if ns.is_empty() || ks.is_empty() || ms.is_empty() {
        return Err(Error::Param("bench needs at least one n, k, and m".into()));
    }
    let mut rows = Vec::new();
    for &n in &ns {
        for &k in &ks {
            let pool = stub_pool(n, k)?;
            let table = TableScorer::random(&pool, cli.seed);
            for &m in &ms {
                let counting = CountingScorer::new(&table);
                let start = std::time::Instant::now();
                let result = beam_search(
                    &pool,
                    &counting,
                    &AssemblyConfig {
                        beam_width: m,
                        mode: AssemblyMode::VisualOnly,
                        gamma: 0.0,
                        record_trace: false,
                    },
                )?;
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let expected = (m <= k * k * k || n <= 3)
                    .then(|| crate::assembly::expected_scorer_calls(n, k, m));
                rows.push(json!({
                    "n": n, "k": k, "m": m,
                    "scorer_calls": result.scorer_calls,
                    "observed_calls": counting.calls(),
                    "expected_calls": expected,
                    "score": result.score,
                    "wall_ms": wall_ms,
                }));
            }
        }
    }
    let output = json!({
        "rows": rows,
        "provenance": provenance(
            cli,
            "bench",
            json!({ "n": ns, "k": ks, "m": ms, "scorer": "additive random stub" }),
        ),
    });
    emit(None, &output)
}
