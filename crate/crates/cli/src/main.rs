use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use lpcs::bench::{
    self, detect_all, evaluate, load_dataset, load_samples, ocr_rank_curve, split_dataset, summarize, train_ocr,
    tune_c, write_rank_curve, write_reports, write_tune, PlateSample,
};
use lpcs::metric::JcParams;
use lpcs::ocr::{HogParams, OcrModel};
use lpcs::raster::load_gray;
use lpcs::segment::{run_segmenter, SegmentConfig, SegmenterId};
use lpcs::synth::{gen_corpus, write_corpus, Profile};

#[derive(Parser)]
#[command(name = "lpcs", version, about = "License plate character segmentation benchmark")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Dataset directory of <name>.png + <name>.txt pairs.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Seed for corpus generation and the vehicle split.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Centroid penalty weight.
    #[arg(long, global = true, default_value_t = JcParams::DEFAULT_C)]
    c: f64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Treat plates as light characters on a dark background.
    #[arg(long, global = true)]
    invert: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic corpus to --out.
    Generate {
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// clean, degraded or mixed.
        #[arg(long, default_value = "mixed")]
        profile: Profile,
    },
    /// Segment one plate image and print its boxes as `x y w h`.
    Segment {
        image: PathBuf,
        #[arg(long, default_value = "iterative")]
        segmenter: SegmenterId,
    },
    /// Score one segmenter on the test partition.
    Evaluate {
        #[arg(long, default_value = "iterative")]
        segmenter: SegmenterId,
    },
    /// Score all segmenters on the test partition.
    Bench,
    /// Pick C on the validation partition.
    TuneC {
        /// Model written by `ocr-train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "iterative")]
        segmenter: SegmenterId,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        candidates: Vec<f64>,
    },
    /// OCR accuracy over the top-ranked characters of the test partition.
    OcrCurve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "iterative")]
        segmenter: SegmenterId,
    },
    /// Train the character recognizer on the training partition.
    OcrTrain,
}

struct Partitions {
    train: Vec<PlateSample>,
    validation: Vec<PlateSample>,
    test: Vec<PlateSample>,
}

impl Common {
    fn data(&self) -> Result<&Path> {
        self.data.as_deref().context("--data is required for this command")
    }

    fn out(&self) -> Result<&Path> {
        let out = self.out.as_deref().context("--out is required for this command")?;
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(out)
    }

    fn params(&self) -> Result<JcParams> {
        JcParams::new(self.c).with_context(|| format!("--c must be positive, got {}", self.c))
    }

    fn partitions(&self) -> Result<Partitions> {
        let dir = self.data()?;
        let plates = load_dataset(dir).with_context(|| format!("loading {}", dir.display()))?;
        let split = split_dataset(&plates, self.seed)?;
        let [train, validation, test] = split.partition(&plates);
        info!(
            "{} plates: {} train, {} validation, {} test",
            plates.len(),
            train.len(),
            validation.len(),
            test.len()
        );
        Ok(Partitions {
            train: load_samples(&train, self.invert)?,
            validation: load_samples(&validation, self.invert)?,
            test: load_samples(&test, self.invert)?,
        })
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.workers)
        .build_global()
        .context("starting worker pool")?;
    run(&cli.common, &cli.cmd)
}

fn run(common: &Common, cmd: &Cmd) -> Result<()> {
    let cfg = SegmentConfig::default();
    match cmd {
        Cmd::Generate { count, profile } => {
            let out = common.out()?;
            write_corpus(&gen_corpus(*count, *profile, common.seed), out)?;
            info!("wrote {count} plates to {}", out.display());
        }
        Cmd::Segment { image, segmenter } => {
            let mut plate = load_gray(image)?;
            if common.invert {
                plate = plate.inverted();
            }
            for b in run_segmenter(*segmenter, &plate, &cfg).boxes() {
                println!("{} {} {} {}", b.x, b.y, b.w, b.h);
            }
        }
        Cmd::Evaluate { segmenter } => {
            let p = common.params()?;
            let test = common.partitions()?.test;
            let reports = [evaluate(*segmenter, &test, &p, &cfg)];
            write_reports(&reports, common.out()?)?;
            print!("{}", summarize(&reports));
        }
        Cmd::Bench => {
            let p = common.params()?;
            let test = common.partitions()?.test;
            let reports = bench::evaluate_all(&test, &p, &cfg);
            write_reports(&reports, common.out()?)?;
            print!("{}", summarize(&reports));
        }
        Cmd::TuneC {
            model,
            segmenter,
            candidates,
        } => {
            if candidates.is_empty() {
                bail!("no C candidates given");
            }
            let model = OcrModel::load(model)?;
            let validation = common.partitions()?.validation;
            let dets = detect_all(*segmenter, &validation, &cfg);
            let result = tune_c(&validation, &dets, &model, candidates)?;
            write_tune(&result, &common.out()?.join("tune_c.csv"))?;
            println!("best C = {}", result.best);
        }
        Cmd::OcrCurve { model, segmenter } => {
            let p = common.params()?;
            let model = OcrModel::load(model)?;
            let test = common.partitions()?.test;
            let dets = detect_all(*segmenter, &test, &cfg);
            let curve = ocr_rank_curve(&test, &dets, &model, &p);
            write_rank_curve(&curve, &common.out()?.join("ocr_rank_curve.csv"))?;
            for r in &curve {
                println!("{:>3}% {:.3} {:.3}", r.top_percent, r.by_jaccard, r.by_jc);
            }
        }
        Cmd::OcrTrain => {
            let train = common.partitions()?.train;
            let model = train_ocr(&train, &HogParams::default())?;
            let path = common.out()?.join("ocr_model.bin");
            model.save(&path)?;
            info!("trained on {} plates, model at {}", train.len(), path.display());
        }
    }
    Ok(())
}
