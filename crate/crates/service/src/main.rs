use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gencolor_core::corpus::GenerateOptions;
use gencolor_core::evaluation::{evaluate, BaselineDataset, Category};
use gencolor_core::glyph::{layout_glyph, render_svg, GlyphConfig};
use gencolor_core::prompt::{build_prompts_with, enhance_context, ContextEnhancementTable, NegativePrompts};
use gencolor_core::segmentation::{NoDetectionPolicy, SegmentParams};
use gencolor_core::{
    sample_requests, AssociationParams, ConceptSpec, PaletteComposition, PipelineParams, SampleSource,
    Style,
};
use gencolor_service::api::{self, AppState};
use gencolor_service::files::{load_method_primaries, load_palettes, parse_conditions};
use gencolor_service::runner::{GenerationConfig, RunConfig, RunRequest, SegmentationConfig};
use gencolor_service::{search, GalleryStore, JobManager, PipelineRunner, SearchQuery};

#[derive(Parser)]
#[command(name = "gencolor", version, about = "Mine primary-accent colour palettes for concepts")]
struct Cli {
    /// Gallery directory.
    #[arg(long, global = true, env = "GENCOLOR_DATA_DIR", default_value = "gencolor-data")]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the prompts and sampler requests for a concept.
    Prompts {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        enhancements: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        prompt_seed: u64,
    },
    /// Run the pipeline for one concept and store the result.
    Run {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Gallery tag; defaults to Q/QC/G/GC from source and style.
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        category: Option<CategoryArg>,
        #[arg(long, default_value_t = 0)]
        prompt_seed: u64,
        /// Write the palette set JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the top palette's glyph SVG here.
        #[arg(long)]
        glyph: Option<PathBuf>,
        /// Do not add the result to the gallery.
        #[arg(long)]
        no_store: bool,
    },
    /// Search the gallery.
    Search {
        query: Vec<String>,
        #[arg(long)]
        style: Option<String>,
        #[arg(long)]
        category: Option<CategoryArg>,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long, default_value_t = 20)]
        limit: usize,
        /// Print the full results as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write a gallery entry's palettes (and optionally its glyph) to files.
    Export {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        glyph: Option<PathBuf>,
    },
    /// Render a palette file as a radial glyph.
    Glyph {
        #[arg(long)]
        palette: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Group rank to draw (1 = largest group).
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long, default_value_t = 256)]
        size: u32,
    },
    /// Score palettes against a designer baseline.
    Eval {
        #[arg(long)]
        baseline: PathBuf,
        /// Directory with one sub-directory of palette files per condition.
        #[arg(long)]
        palettes: PathBuf,
        #[arg(long, default_value = "Q,G,QC,GC")]
        conditions: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Concurrent pipeline jobs.
        #[arg(long, default_value_t = 2)]
        workers: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long)]
    concept: String,
    #[arg(long)]
    context: Option<String>,
    /// realistic_photo, flat_design, or any free-text style phrase.
    #[arg(long, default_value = "realistic_photo")]
    style: String,
    #[arg(long)]
    lighting: Option<String>,
    #[arg(long)]
    audience: Option<String>,
    #[arg(long, default_value_t = gencolor_core::prompt::DEFAULT_IMAGE_COUNT)]
    images: u32,
    #[arg(long, default_value_t = gencolor_core::prompt::DEFAULT_RESOLUTION)]
    resolution: u32,
}

impl SpecArgs {
    fn to_spec(&self) -> Result<ConceptSpec> {
        let mut spec = ConceptSpec::new(self.concept.trim());
        spec.context = self.context.clone().filter(|c| !c.trim().is_empty());
        spec.style = self.style.parse::<Style>().unwrap_or_else(|e| match e {});
        if let Some(l) = &self.lighting {
            spec.lighting = l.clone();
        }
        spec.audience = self.audience.clone();
        spec.image_count = self.images;
        spec.resolution = self.resolution;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Http,
    Fixture,
}

#[derive(Clone, Copy, ValueEnum)]
enum SegBackendKind {
    Http,
    Fixture,
    Whole,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Generated,
    Queried,
    Fixture,
}

#[derive(Clone, Copy, ValueEnum)]
enum CategoryArg {
    Fruit,
    Vegetable,
    Environment,
    Animal,
    Context,
}

impl From<CategoryArg> for Category {
    fn from(c: CategoryArg) -> Self {
        match c {
            CategoryArg::Fruit => Category::Fruit,
            CategoryArg::Vegetable => Category::Vegetable,
            CategoryArg::Environment => Category::Environment,
            CategoryArg::Animal => Category::Animal,
            CategoryArg::Context => Category::Context,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NoDetectionArg {
    Skip,
    Whole,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, value_enum, default_value = "fixture")]
    backend: BackendKind,
    #[arg(long, env = "GENCOLOR_BACKEND_URL")]
    backend_url: Option<String>,
    /// Fixture backend: images to read. HTTP backend: where to save the corpus.
    #[arg(long)]
    corpus_dir: Option<PathBuf>,
    /// How fixture images were obtained.
    #[arg(long, value_enum, default_value = "queried")]
    source: SourceArg,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Fraction of requests that must succeed.
    #[arg(long, default_value_t = 0.8)]
    min_success: f64,
    #[arg(long, value_enum, default_value = "whole")]
    seg_backend: SegBackendKind,
    /// Fixture masks directory (defaults to the corpus directory).
    #[arg(long)]
    mask_dir: Option<PathBuf>,
    #[arg(long, env = "GENCOLOR_DETECTOR_URL")]
    detector_url: Option<String>,
    #[arg(long, env = "GENCOLOR_MASKER_URL")]
    masker_url: Option<String>,
    #[arg(long, default_value_t = gencolor_core::segmentation::DEFAULT_BOX_THRESHOLD)]
    box_threshold: f64,
    #[arg(long, default_value_t = gencolor_core::segmentation::DEFAULT_NMS_IOU)]
    nms_iou: f64,
    /// What to do with images where nothing is detected.
    #[arg(long, value_enum, default_value = "skip")]
    no_detection: NoDetectionArg,
    /// Pixel sampling stride (1 = every pixel).
    #[arg(long, default_value_t = 1)]
    stride: u32,
    /// Seed for accent clustering.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra `trigger => phrase` context enhancements.
    #[arg(long)]
    enhancements: Option<PathBuf>,
    /// Per-request timeout in seconds for remote backends.
    #[arg(long, default_value_t = 300)]
    timeout: u64,
}

fn load_enhancements(path: Option<&Path>) -> Result<ContextEnhancementTable> {
    let mut table = ContextEnhancementTable::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        table.extend(&ContextEnhancementTable::parse(&text)?);
    }
    Ok(table)
}

impl PipelineArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let generation = match self.backend {
            BackendKind::Http => GenerationConfig::Http {
                url: self.backend_url.clone().context("--backend http needs --backend-url")?,
                token: None,
            },
            BackendKind::Fixture => GenerationConfig::Fixture {
                dir: self.corpus_dir.clone().context("--backend fixture needs --corpus-dir")?,
                source: match self.source {
                    SourceArg::Generated => SampleSource::Generated,
                    SourceArg::Queried => SampleSource::Queried,
                    SourceArg::Fixture => SampleSource::Fixture,
                },
            },
        };
        let segmentation = match self.seg_backend {
            SegBackendKind::Whole => SegmentationConfig::Whole,
            SegBackendKind::Fixture => SegmentationConfig::Fixture { dir: self.mask_dir.clone() },
            SegBackendKind::Http => SegmentationConfig::Http {
                detector_url: self.detector_url.clone().context("--seg-backend http needs --detector-url")?,
                masker_url: self.masker_url.clone().context("--seg-backend http needs --masker-url")?,
                token: None,
                params: SegmentParams {
                    box_threshold: self.box_threshold,
                    iou_threshold: self.nms_iou,
                },
            },
        };
        if !(0.0..=1.0).contains(&self.min_success) {
            bail!("--min-success must be in [0, 1]");
        }
        let mut config = RunConfig::new(generation, segmentation);
        config.enhancements = load_enhancements(self.enhancements.as_deref())?;
        config.pipeline = PipelineParams {
            association: AssociationParams {
                stride: self.stride.max(1),
                seed: self.seed,
                ..AssociationParams::default()
            },
            no_detection: match self.no_detection {
                NoDetectionArg::Skip => NoDetectionPolicy::SkipImage,
                NoDetectionArg::Whole => NoDetectionPolicy::WholeImage,
            },
            parallelism: self.parallelism.max(1),
        };
        config.generate = GenerateOptions {
            retries: self.retries,
            min_success_fraction: self.min_success,
            parallelism: self.parallelism.max(1),
            ..GenerateOptions::default()
        };
        if matches!(self.backend, BackendKind::Http) {
            config.corpus_out = self.corpus_dir.clone();
        }
        config.timeout = Duration::from_secs(self.timeout.max(1));
        Ok(config)
    }
}

fn glyph_svg(palette: &PaletteComposition, size: u32) -> Result<String> {
    let config = GlyphConfig {
        size,
        ..GlyphConfig::default()
    };
    Ok(render_svg(&layout_glyph(palette, &config)?))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_palette(p: &PaletteComposition) {
    let accents: Vec<String> = p
        .accents
        .iter()
        .map(|a| format!("{} {:.1}%", a.color, a.proportion * 100.0))
        .collect();
    println!(
        "  #{} primary {}  ({} images)  accents: {}",
        p.group_rank,
        p.primary,
        p.group_size,
        accents.join(", ")
    );
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Prompts {
            spec,
            enhancements,
            prompt_seed,
        } => {
            let spec = spec.to_spec()?;
            let table = load_enhancements(enhancements.as_deref())?;
            let prompts = build_prompts_with(&enhance_context(&spec, &table), &NegativePrompts::default())?;
            let requests = sample_requests(&spec, &prompts, prompt_seed)?;
            let out = serde_json::json!({ "prompts": prompts, "requests": requests });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Run {
            spec,
            pipeline,
            tag,
            category,
            prompt_seed,
            out,
            glyph,
            no_store,
        } => {
            let request = RunRequest {
                spec: spec.to_spec()?,
                prompt_seed,
                tag,
                category: category.map(Category::from),
            };
            let config = pipeline.to_config()?;
            let result = gencolor_service::run(&request, &config, &|stage, p| {
                log::debug!("{stage:?} {:.0}%", p * 100.0)
            })?;
            for (id, reason) in &result.palettes.skipped {
                log::info!("skipped {id}: {reason}");
            }
            println!("{}", request.spec.label());
            result.palettes.palettes.iter().for_each(print_palette);
            if let Some(path) = &out {
                write(path, &result.palettes.to_json())?;
            }
            if let (Some(path), Some(top)) = (&glyph, result.palettes.top()) {
                write(path, &glyph_svg(top, GlyphConfig::default().size)?)?;
            }
            if !no_store {
                let store = GalleryStore::open(&cli.data_dir)?;
                let id = store.put(result.entry)?;
                println!("stored as {id}");
            }
        }
        Command::Search {
            query,
            style,
            category,
            offset,
            limit,
            json,
        } => {
            let store = GalleryStore::open(&cli.data_dir)?;
            let q = SearchQuery {
                q: query.join(" "),
                style,
                category: category.map(Category::from),
                offset,
                limit,
            };
            let results = store.with_entries(|entries| search(entries, &q))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&results)?);
            } else {
                for hit in &results.hits {
                    let e = &hit.entry;
                    let primary = e.palettes.first().map(|p| p.primary.to_hex()).unwrap_or_default();
                    println!("{}  {:<28} {:<4} {}  score {}", e.id, e.spec.label(), e.tag, primary, hit.score);
                }
                println!("{} of {} matches", results.hits.len(), results.total);
            }
        }
        Command::Export { id, out, glyph } => {
            let store = GalleryStore::open(&cli.data_dir)?;
            let entry = store.get(&id).with_context(|| format!("no gallery entry {id:?}"))?;
            let json = serde_json::to_string_pretty(&entry)?;
            match &out {
                Some(path) => write(path, &json)?,
                None => println!("{json}"),
            }
            if let Some(path) = &glyph {
                write(path, &glyph_svg(&entry.palettes[0], GlyphConfig::default().size)?)?;
            }
        }
        Command::Glyph {
            palette,
            out,
            rank,
            size,
        } => {
            let loaded = load_palettes(&palette)?;
            let p = loaded
                .palettes
                .iter()
                .find(|p| p.group_rank == rank || loaded.palettes.len() == 1)
                .with_context(|| format!("no palette with rank {rank}"))?;
            write(&out, &glyph_svg(p, size)?)?;
        }
        Command::Eval {
            baseline,
            palettes,
            conditions,
            out_dir,
        } => {
            let conditions = parse_conditions(&conditions)?;
            let file = fs::File::open(&baseline).with_context(|| format!("opening {}", baseline.display()))?;
            let dataset = BaselineDataset::from_jsonl(std::io::BufReader::new(file))?;
            let method = load_method_primaries(&palettes, &conditions)?;
            let report = evaluate(&method, &dataset);
            for m in &report.missing {
                log::warn!("{} {}: {}", m.condition, m.concept, m.reason);
            }
            fs::create_dir_all(&out_dir)?;
            write(&out_dir.join("report.csv"), &report.to_csv())?;
            write(&out_dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
            for a in &report.aggregates {
                println!(
                    "{:<3} {:<18} n={:<3} mean {:.2}  sd {:.2}",
                    a.condition,
                    a.key.label(),
                    a.n,
                    a.mean,
                    a.sd
                );
            }
        }
        Command::Serve {
            addr,
            workers,
            pipeline,
        } => {
            let mut config = pipeline.to_config()?;
            if matches!(config.generation, GenerationConfig::Http { .. }) && config.corpus_out.is_none() {
                config.corpus_out = Some(cli.data_dir.join("corpora"));
            }
            let store = Arc::new(GalleryStore::open(&cli.data_dir)?);
            let jobs = JobManager::new(workers, Arc::new(PipelineRunner { config }), Arc::clone(&store));
            let state = Arc::new(AppState { jobs, store });
            tokio::runtime::Runtime::new()?.block_on(api::serve(state, &addr))?;
        }
    }
    Ok(())
}
