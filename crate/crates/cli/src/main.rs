use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ham_core::container::TensorStore;
use ham_core::language::{
    inter_sentence_ensemble, intra_sentence_ensemble, mask_text, Vocabulary,
};
use ham_core::oracle::{run_suite, Suite};
use ham_core::pipeline::{evaluate, run_forward, ForwardReport, HamWeights, PipelineConfig};
use ham_core::sampling::{decode_ids, default_channel_weights, encode_ids, sample, Strategy};
use ham_core::scene::{
    generate_scene, read_queries, synthetic_queries, write_queries, GeneratorConfig, QueryRecord,
    Scene,
};
use ham_core::smgm::{build_partition, region_mask};
use ham_core::Rng;

#[derive(Parser)]
#[command(name = "ham", version, about = "3D visual grounding forward pipeline")]
struct Cli {
    /// Overrides the seed from `--config`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with PipelineConfig fields; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic scene, matching queries and the builtin vocabulary.
    Generate(GenerateArgs),
    /// Samples key-point ids from a scene.
    Sample(SampleArgs),
    /// Writes the proposal-to-key region mask.
    Partition(PartitionArgs),
    /// Applies word masking and sentence ensembles to a query file.
    Prompt(PromptArgs),
    /// Runs the full forward pass over a query file.
    Forward(ForwardArgs),
    /// Scores a forward report against the scene's boxes.
    Eval(EvalArgs),
    /// Runs the self-check suites; exits nonzero when any fails.
    Oracle(OracleArgs),
    /// Times the sampling strategies over scene sizes.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    objects: usize,
    #[arg(long, default_value_t = 8)]
    queries: usize,
    /// Point count; defaults to the configured L.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, default_value = "scene0")]
    scene_id: String,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value = "cs")]
    strategy: Strategy,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Comma-separated per-channel weights over xyz then attributes.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long, default_value_t = 4)]
    r: usize,
    #[arg(long)]
    scene: PathBuf,
    /// Key point id file as written by `sample`.
    #[arg(long)]
    keys: PathBuf,
    /// Proposal point id file, ids into the scene cloud.
    #[arg(long)]
    proposals: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PromptArgs {
    /// Upper bound on the masked fraction of words.
    #[arg(long, default_value_t = 0.2)]
    mask: f64,
    /// Inclusive range of sentences fused per record, e.g. `1,6`.
    #[arg(long, value_delimiter = ',')]
    intra: Option<Vec<usize>>,
    /// Group size for inter-sentence ensembles.
    #[arg(long)]
    inter: Option<usize>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Weight container; seeded random weights when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Vocabulary file; the builtin vocabulary when absent.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    dump_logits: bool,
    /// Writes the weights used to this path.
    #[arg(long)]
    save_weights: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Report written by `forward`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "dfps,ffps,fs,cs")]
    strategy: Vec<Strategy>,
    /// Scene sizes L.
    #[arg(long, value_delimiter = ',', default_value = "5000,10000,20000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    match cli.command {
        Command::Generate(a) => generate(a, &config),
        Command::Sample(a) => sample_cmd(a),
        Command::Partition(a) => partition(a),
        Command::Prompt(a) => prompt(a, &config),
        Command::Forward(a) => forward(a, &config),
        Command::Eval(a) => eval(a),
        Command::Oracle(a) => oracle(a, &config),
        Command::Bench(a) => bench(a, &config),
    }
}

fn write_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_scene(p: &Path) -> Result<Scene> {
    Scene::load(p).with_context(|| format!("reading scene {}", p.display()))
}

fn generate(a: GenerateArgs, config: &PipelineConfig) -> Result<bool> {
    let gen = GeneratorConfig {
        n_objects: a.objects,
        n_points: a.points.unwrap_or(config.n_points),
        ..GeneratorConfig::default()
    };
    let scene = generate_scene(config.seed, &gen)?;
    let queries = synthetic_queries(&scene, &a.scene_id, a.queries, config.seed);
    fs::create_dir_all(&a.out_dir)?;
    scene.save(a.out_dir.join("scene.hamp"))?;
    write_queries(a.out_dir.join("queries.jsonl"), &queries)?;
    Vocabulary::builtin().save(a.out_dir.join("vocab.txt"))?;
    Ok(true)
}

fn sample_cmd(a: SampleArgs) -> Result<bool> {
    let scene = load_scene(&a.scene)?;
    let weights = a
        .weights
        .unwrap_or_else(|| default_channel_weights(&scene.cloud));
    let result = sample(a.strategy, &scene.cloud, a.n, a.start, &weights)?;
    fs::write(&a.out, encode_ids(&result.indices))?;
    Ok(true)
}

fn read_ids(p: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(decode_ids(&bytes)?)
}

fn positions_of(scene: &Scene, ids: &[usize]) -> Result<Vec<[f64; 3]>> {
    let pos = scene.cloud.positions();
    ids.iter()
        .map(|&i| match pos.get(i) {
            Some(p) => Ok(*p),
            None => bail!("point id {i} out of range for {} points", pos.len()),
        })
        .collect()
}

fn partition(a: PartitionArgs) -> Result<bool> {
    let scene = load_scene(&a.scene)?;
    let keys = positions_of(&scene, &read_ids(&a.keys)?)?;
    let proposals = positions_of(&scene, &read_ids(&a.proposals)?)?;
    let part = build_partition(&scene.bounds, a.r, &keys, &proposals)?;
    let mask = region_mask(&part);
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&(proposals.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(keys.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&mask.pack_bits());
    fs::write(&a.out, bytes)?;
    Ok(true)
}

fn prompt(a: PromptArgs, config: &PipelineConfig) -> Result<bool> {
    let records = read_queries(&a.input)?;
    let mut rng = Rng::derive_named(config.seed, "prompt.mask");
    let mut masked = Vec::with_capacity(records.len());
    for r in &records {
        masked.push(QueryRecord {
            text: mask_text(&r.text, a.mask, &mut rng)?,
            ..r.clone()
        });
    }

    let fused = match a.intra {
        Some(range) => {
            if range.len() != 2 {
                bail!("--intra takes two values, got {range:?}");
            }
            let mut rng = Rng::derive_named(config.seed, "prompt.intra");
            let mut out = Vec::with_capacity(masked.len());
            for r in &masked {
                let pool: Vec<QueryRecord> = masked
                    .iter()
                    .filter(|o| o.scene_id == r.scene_id)
                    .cloned()
                    .collect();
                out.push(intra_sentence_ensemble(&pool, (range[0], range[1]), &mut rng)?);
            }
            out
        }
        None => masked,
    };

    let final_records = match a.inter {
        Some(size) => {
            let mut rng = Rng::derive_named(config.seed, "prompt.inter");
            inter_sentence_ensemble(&fused, size, &mut rng)?
                .into_iter()
                .enumerate()
                .flat_map(|(g, group)| {
                    group.into_iter().map(move |r| QueryRecord {
                        group: Some(g as u32),
                        ..r
                    })
                })
                .collect()
        }
        None => fused,
    };
    write_queries(&a.out, &final_records)?;
    Ok(true)
}

fn forward(a: ForwardArgs, config: &PipelineConfig) -> Result<bool> {
    let scene = load_scene(&a.scene)?;
    let queries = read_queries(&a.queries)?;
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::builtin(),
    };
    let weights = match &a.weights {
        Some(p) => HamWeights::from_store(&TensorStore::load(p)?, config)?,
        None => HamWeights::random(config, vocab.len()),
    };
    if let Some(p) = &a.save_weights {
        weights.to_store().save(p)?;
    }
    let report = run_forward(&scene, &queries, &vocab, &weights, config, a.dump_logits)?;
    write_json(a.out.as_deref(), &report)?;
    Ok(true)
}

fn eval(a: EvalArgs) -> Result<bool> {
    let scene = load_scene(&a.scene)?;
    let report: ForwardReport = serde_json::from_str(&fs::read_to_string(&a.report)?)?;
    write_json(a.out.as_deref(), &evaluate(&scene, &report)?)?;
    Ok(true)
}

fn oracle(a: OracleArgs, config: &PipelineConfig) -> Result<bool> {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![serde_json::from_value(serde_json::Value::String(a.suite.clone()))
            .with_context(|| format!("unknown suite {:?}", a.suite))?]
    };
    let reports = suites
        .into_iter()
        .map(|s| run_suite(s, config.seed))
        .collect::<ham_core::Result<Vec<_>>>()?;
    let ok = reports.iter().all(|r| r.passed);
    write_json(a.out.as_deref(), &reports)?;
    Ok(ok)
}

#[derive(Serialize)]
struct BenchRow {
    strategy: Strategy,
    points: usize,
    n: usize,
    elapsed_ms: f64,
    points_per_sec: f64,
    duplicate_fraction: f64,
}

fn bench(a: BenchArgs, config: &PipelineConfig) -> Result<bool> {
    let mut rows = Vec::new();
    for &size in &a.sizes {
        let gen = GeneratorConfig {
            n_points: size,
            ..GeneratorConfig::default()
        };
        let scene = generate_scene(config.seed, &gen)?;
        let weights = default_channel_weights(&scene.cloud);
        let n = a.n.min(size);
        for &strategy in &a.strategy {
            let t = Instant::now();
            let result = sample(strategy, &scene.cloud, n, 0, &weights)?;
            let secs = t.elapsed().as_secs_f64();
            rows.push(BenchRow {
                strategy,
                points: size,
                n,
                elapsed_ms: secs * 1e3,
                points_per_sec: size as f64 / secs.max(1e-12),
                duplicate_fraction: result.duplicate_fraction(),
            });
        }
    }
    write_json(a.out.as_deref(), &rows)?;
    Ok(true)
}
