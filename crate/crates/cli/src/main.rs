use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ccfloc::ccf::CcfRecord;
use ccfloc::eval::{corloc, load_results, save_results, CorLocReport, ImageResult};
use ccfloc::pipeline::{
    dump_maps, localize_dataset, select_from_manifest, LocalizeParams, SelectParams, Selection,
};
use ccfloc::superpixel::SlicParams;
use ccfloc::synth::{generate, write_dataset, Scenario, SynthConfig};
use ccfloc::tensor_store::{load_manifest, DatasetManifest};

#[derive(Parser, Debug)]
#[command(name = "ccfloc", version, about = "Object co-localization from positive images")]
struct Cli {
    /// Worker threads for per-image work (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster kernels and write ccf.json.
    SelectCcf {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        select: SelectArgs,
    },
    /// Localize every image and write results.json.
    Localize {
        #[command(flatten)]
        io: IoArgs,
        /// CCF file (default: <out>/ccf.json).
        #[arg(long)]
        ccf: Option<PathBuf>,
        #[command(flatten)]
        localize: LocalizeArgs,
    },
    /// Score results.json and write report.json / report.csv.
    Eval {
        #[command(flatten)]
        io: IoArgs,
        /// Results file (default: <out>/results.json).
        #[arg(long)]
        results: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// select-ccf, localize and eval in one go.
    All {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        localize: LocalizeArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Write a synthetic dataset with planted objects.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        images: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ScenarioArg::Standard)]
        scenario: ScenarioArg,
        #[arg(long, default_value = "synthetic")]
        class_name: String,
    },
}

#[derive(Args, Debug)]
struct IoArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long, default_value_t = 5)]
    k_clusters: usize,
    /// Cluster rank to take the CCFs from (1 = highest score).
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Number of consecutive ranked clusters to merge, starting at --rank.
    #[arg(long, default_value_t = 1)]
    top_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.25)]
    threshold: f64,
    /// Target superpixel count.
    #[arg(long, default_value_t = 300)]
    superpixels: usize,
    #[arg(long, default_value_t = 10.0)]
    compactness: f64,
    #[arg(long)]
    no_propagation: bool,
    /// Box only the largest connected region of the mask.
    #[arg(long)]
    largest_component: bool,
    /// Write per-image likelihood, label and distance maps under <out>/maps.
    #[arg(long)]
    dump_maps: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, default_value_t = 0.5)]
    iou_threshold: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScenarioArg {
    Standard,
    Partial,
    Graded,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Standard => Scenario::Standard,
            ScenarioArg::Partial => Scenario::PartialActivation,
            ScenarioArg::Graded => Scenario::GradedClusters,
        }
    }
}

impl SelectArgs {
    fn params(&self) -> Result<SelectParams> {
        if self.k_clusters == 0 {
            bail!("--k-clusters must be >= 1");
        }
        if self.rank == 0 || self.rank > self.k_clusters {
            bail!("--rank must lie in 1..={}", self.k_clusters);
        }
        if self.top_k == 0 || self.rank + self.top_k - 1 > self.k_clusters {
            bail!("--top-k must be >= 1 and --rank + --top-k - 1 must not exceed --k-clusters");
        }
        Ok(SelectParams {
            k_clusters: self.k_clusters,
            rank: self.rank,
            top_k: self.top_k,
            seed: self.seed,
        })
    }
}

impl LocalizeArgs {
    fn params(&self) -> Result<LocalizeParams> {
        let params = LocalizeParams {
            mu: self.mu,
            threshold: self.threshold,
            slic: SlicParams {
                target_count: self.superpixels,
                compactness: self.compactness,
                ..SlicParams::default()
            },
            propagation_enabled: !self.no_propagation,
            largest_component: self.largest_component,
        };
        params.validate()?;
        Ok(params)
    }
}

impl EvalArgs {
    fn threshold(&self) -> Result<f64> {
        if !(0.0..1.0).contains(&self.iou_threshold) {
            bail!("--iou-threshold must lie in [0, 1)");
        }
        Ok(self.iou_threshold)
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn print_clusters(sel: &Selection<f64>) {
    let c = &sel.clustering;
    println!("{:>4}  {:>7}  {:>5}  {:>12}", "rank", "cluster", "size", "score");
    for (r, &id) in c.ranking.iter().enumerate() {
        let mark = if (sel.ccf.source_cluster_rank..sel.ccf.source_cluster_rank + sel.ccf.top_k)
            .contains(&(r + 1))
        {
            "  *"
        } else {
            ""
        };
        println!(
            "{:>4}  {:>7}  {:>5}  {:>12.6}{mark}",
            r + 1,
            id,
            c.cluster_size(id),
            c.cluster_scores[id]
        );
    }
    println!("selected {} kernels: {:?}", sel.ccf.kernel_ids.len(), sel.ccf.kernel_ids);
}

fn select(manifest: &DatasetManifest, args: &SelectArgs, out: &Path) -> Result<CcfRecord> {
    let params = args.params()?;
    let sel = select_from_manifest::<f64>(manifest, &params)?;
    print_clusters(&sel);
    create_out(out)?;
    sel.record.save(out.join("ccf.json"))?;
    Ok(sel.record)
}

fn localize(
    manifest: &DatasetManifest,
    record: &CcfRecord,
    args: &LocalizeArgs,
    out: &Path,
) -> Result<Vec<ImageResult>> {
    let params = args.params()?;
    let ccf = record.ccf_set()?;
    create_out(out)?;
    let maps = out.join("maps");
    let results = localize_dataset::<f64, _>(manifest, &ccf, &params, |_, r| {
        if args.dump_maps {
            dump_maps(&maps, r)?;
        }
        Ok(())
    });
    for r in &results {
        if let Some(e) = &r.error {
            eprintln!("warning: {}: {e}", r.id);
        }
    }
    save_results(out.join("results.json"), &results)?;
    let boxed = results.iter().filter(|r| r.pred_box.is_some()).count();
    println!("localized {boxed}/{} images", results.len());
    Ok(results)
}

fn evaluate(
    manifest: &DatasetManifest,
    results: &[ImageResult],
    args: &EvalArgs,
    out: &Path,
) -> Result<CorLocReport> {
    let report = corloc(results, manifest, args.threshold()?)?;
    create_out(out)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(out.join("report.json"), json).context("writing report.json")?;
    fs::write(out.join("report.csv"), report.to_csv()).context("writing report.csv")?;
    println!(
        "{}: corloc {:.2}% ({}/{}), mean IoU {:.4}",
        report.class_name,
        report.corloc,
        report.n_correct,
        report.n_images,
        report.mean_best_iou()
    );
    Ok(report)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::SelectCcf { io, select: args } => {
            let manifest = load_manifest(&io.manifest)?;
            select(&manifest, &args, &io.out)?;
        }
        Command::Localize {
            io,
            ccf,
            localize: args,
        } => {
            args.params()?;
            let manifest = load_manifest(&io.manifest)?;
            let record = CcfRecord::load(ccf.unwrap_or_else(|| io.out.join("ccf.json")))?;
            localize(&manifest, &record, &args, &io.out)?;
        }
        Command::Eval {
            io,
            results,
            eval: args,
        } => {
            args.threshold()?;
            let manifest = load_manifest(&io.manifest)?;
            let results = load_results(results.unwrap_or_else(|| io.out.join("results.json")))?;
            evaluate(&manifest, &results, &args, &io.out)?;
        }
        Command::All {
            io,
            select: s,
            localize: l,
            eval: e,
        } => {
            s.params()?;
            l.params()?;
            e.threshold()?;
            let manifest = load_manifest(&io.manifest)?;
            let record = select(&manifest, &s, &io.out)?;
            let results = localize(&manifest, &record, &l, &io.out)?;
            evaluate(&manifest, &results, &e, &io.out)?;
        }
        Command::Synth {
            out,
            images,
            seed,
            scenario,
            class_name,
        } => {
            if images == 0 {
                bail!("--images must be >= 1");
            }
            let cfg = SynthConfig {
                n_images: images,
                seed,
                scenario: scenario.into(),
                ..SynthConfig::default()
            };
            let path = write_dataset(&out, &class_name, &generate(&cfg))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
