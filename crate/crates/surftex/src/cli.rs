//! Command-line front end: flat-file config parsing, the four user
//! workflows (`sandblast`, `mill`, `stats`, `bench`), and synthetic
//! measurement fixtures for trying the tool without real data.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};

use crate::field::HeightField;
use crate::mill::{
    self, Dist, GridSpec, InteractionKind, MillConfig, PassOrdering, PathSpec,
    ShapeKind, SpiralDirection,
};
use crate::rng::RandomStream;
use crate::sandblast::{self, Method, SandblastConfig, SizeStrategy};
use crate::spectral::{autocorrelation, histogram};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sandblast,
    Mill,
    Stats,
    Bench,
}

/// Command-line flags. Everything except the mode can also come from
/// the config file; flags win.
#[derive(Debug, Parser)]
#[command(
    name = "surftex",
    about = "Synthesize height-field textures of machined metal surfaces"
)]
pub struct Args {
    /// Workflow to run.
    #[arg(value_enum)]
    pub mode: Mode,
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path; `stats` derives `<out>.hist.csv` and
    /// `<out>.acf.hfld` from it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Input `.hfld`, or `fixture:sandblasted` / `fixture:milled` for a
    /// synthetic measurement.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Worker threads; falls back to SURFTEX_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output size in pixels, e.g. 512x512.
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long = "spacing-um")]
    pub spacing_um: Option<f64>,
}

/// Key-value store over the config file that tracks which keys were
/// consumed, so leftovers can be rejected by name.
struct ConfigMap {
    map: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl ConfigMap {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got '{line}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { map, used: BTreeSet::new() })
    }

    fn empty() -> Self {
        Self { map: BTreeMap::new(), used: BTreeSet::new() }
    }

    fn get(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.map.get(key).cloned()
    }

    fn get_parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!(
                    "key '{key}': cannot parse '{v}' as {}",
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    fn get_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.get_parse(key)?.unwrap_or(default))
    }

    fn finish(&self) -> Result<()> {
        for key in self.map.keys() {
            if !self.used.contains(key) {
                return Err(Error::Config(format!("unknown config key '{key}'")));
            }
        }
        Ok(())
    }
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let err = || Error::Config(format!("size must be WxH in pixels, got '{s}'"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(err)?;
    Ok((
        w.trim().parse().map_err(|_| err())?,
        h.trim().parse().map_err(|_| err())?,
    ))
}

/// Everything a single run needs, resolved from file plus flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub size: (usize, usize),
    pub spacing_um: f64,
    pub mill: MillConfig,
    pub grid_origin_mm: (f64, f64),
    pub tile_px: usize,
    /// Target (mean, variance) for height adaptation of mill output.
    pub adapt_to: Option<(f64, f64)>,
    pub sandblast_method: Method,
    pub sandblast_strategy: SizeStrategy,
    pub patch_size: usize,
    pub overlap: usize,
    pub stats_bins: usize,
    pub stats_autocorrelation: bool,
    pub bench_sizes: Vec<usize>,
    pub bench_alphas: Vec<f64>,
    pub bench_repetitions: usize,
}

fn dist(map: &mut ConfigMap, prefix: &str, default: Dist) -> Result<Dist> {
    Ok(Dist {
        mean: map.get_or(&format!("{prefix}_mean"), default.mean)?,
        std: map.get_or(&format!("{prefix}_std"), default.std)?,
    })
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<T>().map_err(|_| {
                Error::Config(format!("key '{key}': bad list element '{}'", p.trim()))
            })
        })
        .collect()
}

/// Build the run configuration from the optional config file and the
/// flags, flags taking precedence. Unknown file keys are rejected by
/// name.
pub fn parse_config(args: &Args) -> Result<RunConfig> {
    let mut map = match &args.config {
        Some(path) => ConfigMap::parse(&std::fs::read_to_string(path)?)?,
        None => ConfigMap::empty(),
    };

    // file values are always consumed, then flags take precedence
    let file_seed: u64 = map.get_or("seed", 0)?;
    let seed = args.seed.unwrap_or(file_seed);
    let file_out = map.get("out").map(PathBuf::from);
    let out = args
        .out
        .clone()
        .or(file_out)
        .ok_or_else(|| Error::Config("missing required key 'out'".into()))?;
    let input = args
        .input
        .clone()
        .or_else(|| map.get("input").map(PathBuf::from));
    let file_size = map.get("size");
    let size = match (&args.size, file_size) {
        (Some(s), _) => parse_size(s)?,
        (None, Some(s)) => parse_size(&s)?,
        (None, None) => (512, 512),
    };
    let file_spacing: f64 = map.get_or("spacing_um", 12.2)?;
    let spacing_um = args.spacing_um.unwrap_or(file_spacing);

    // milling model
    let d = map.get_or("mill.d_mm", 4.0)?;
    let alpha = match (map.get_parse::<f64>("mill.alpha")?, map.get_parse::<f64>("mill.a_e")?) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either 'mill.alpha' or 'mill.a_e', not both".into(),
            ));
        }
        (Some(a), None) => a,
        (None, Some(ae)) => 1.0 - ae,
        (None, None) => 0.2,
    };
    let shape = match map.get("mill.shape").as_deref() {
        None | Some("cosine") => ShapeKind::Cosine,
        Some("indicator") => ShapeKind::Indicator,
        Some("bump") => ShapeKind::Bump,
        Some(v) => {
            return Err(Error::Config(format!("key 'mill.shape': unknown shape '{v}'")));
        }
    };
    let interaction = match map.get("mill.interaction").as_deref() {
        None | Some("min") => InteractionKind::Min,
        Some("latest") => InteractionKind::Latest,
        Some("convex") => InteractionKind::Convex,
        Some(v) => {
            return Err(Error::Config(format!(
                "key 'mill.interaction': unknown interaction '{v}'"
            )));
        }
    };
    let ordering = match map.get("mill.ordering").as_deref() {
        None | Some("same-up") => PassOrdering::SameUp,
        Some("same-down") => PassOrdering::SameDown,
        Some("alternating") => PassOrdering::Alternating,
        Some(v) => {
            return Err(Error::Config(format!(
                "key 'mill.ordering': unknown ordering '{v}'"
            )));
        }
    };
    let beta_rad = map.get_or("mill.beta_rad", 0.0)?;
    let path = match map.get("mill.path").as_deref() {
        None | Some("parallel") => PathSpec::Parallel { beta_rad, ordering },
        Some("spiral") => PathSpec::Spiral {
            origin_mm: (
                map.get_or("mill.spiral_origin_x_mm", 0.0)?,
                map.get_or("mill.spiral_origin_y_mm", 0.0)?,
            ),
            beta_rad,
            orientation: map.get_or("mill.spiral_orientation", 1i8)?,
            direction: match map.get("mill.spiral_direction").as_deref() {
                None | Some("outward") => SpiralDirection::Outward,
                Some("inward") => SpiralDirection::Inward,
                Some(v) => {
                    return Err(Error::Config(format!(
                        "key 'mill.spiral_direction': unknown direction '{v}'"
                    )));
                }
            },
        },
        Some(v) => {
            return Err(Error::Config(format!("key 'mill.path': unknown path '{v}'")));
        }
    };
    let defaults = MillConfig::default();
    let mill_cfg = MillConfig {
        head_diameter_mm: d,
        overlap: alpha,
        center_spacing_mm: map.get_or("mill.delta_mm", defaults.center_spacing_mm)?,
        shape,
        interaction,
        w_minus_mm: dist(&mut map, "mill.w_minus_mm", defaults.w_minus_mm)?,
        w_plus_i_mm: dist(&mut map, "mill.w_plus_i_mm", defaults.w_plus_i_mm)?,
        w_plus_o_mm: dist(&mut map, "mill.w_plus_o_mm", defaults.w_plus_o_mm)?,
        tilt_angle_rad: map.get_or("mill.tilt_angle_rad", defaults.tilt_angle_rad)?,
        center_depth_um: map.get_or("mill.center_depth_um", defaults.center_depth_um)?,
        sigma_l_minus_um: map.get_or("mill.sigma_l_minus_um", defaults.sigma_l_minus_um)?,
        sigma_h_minus_um: map.get_or("mill.sigma_h_minus_um", defaults.sigma_h_minus_um)?,
        l_plus_i_um: dist(&mut map, "mill.l_plus_i_um", defaults.l_plus_i_um)?,
        h_plus_i_um: dist(&mut map, "mill.h_plus_i_um", defaults.h_plus_i_um)?,
        l_plus_o_um: dist(&mut map, "mill.l_plus_o_um", defaults.l_plus_o_um)?,
        h_plus_o_um: dist(&mut map, "mill.h_plus_o_um", defaults.h_plus_o_um)?,
        noise_lambda: map.get_or("mill.noise_lambda", defaults.noise_lambda)?,
        noise_tau: map.get_or("mill.noise_tau", defaults.noise_tau)?,
        a_min: map.get_or("mill.a_min", defaults.a_min)?,
        a_max: map.get_or("mill.a_max", defaults.a_max)?,
        b_min: map.get_or("mill.b_min", defaults.b_min)?,
        b_max: map.get_or("mill.b_max", defaults.b_max)?,
        center_jitter_mm: (
            map.get_or("mill.jitter_x_mm", defaults.center_jitter_mm.0)?,
            map.get_or("mill.jitter_y_mm", defaults.center_jitter_mm.1)?,
        ),
        reorder_fraction: map.get_or("mill.reorder_fraction", defaults.reorder_fraction)?,
        path,
        seed,
    };
    let adapt_to = match (
        map.get_parse::<f64>("mill.target_mean_um")?,
        map.get_parse::<f64>("mill.target_variance_um2")?,
    ) {
        (Some(m), Some(v)) => Some((m, v)),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "mill.target_mean_um and mill.target_variance_um2 must be given together"
                    .into(),
            ));
        }
    };

    let sandblast_method = match map.get("sandblast.method").as_deref() {
        None | Some("rpn") => Method::Rpn,
        Some("adsn") => Method::Adsn,
        Some(v) => {
            return Err(Error::Config(format!(
                "key 'sandblast.method': unknown method '{v}'"
            )));
        }
    };
    let sandblast_strategy = match map.get("sandblast.strategy").as_deref() {
        None | Some("auto") => SizeStrategy::Auto,
        Some("crop") => SizeStrategy::Crop,
        Some("pad") => SizeStrategy::Pad,
        Some("stitch") => SizeStrategy::Stitch,
        Some(v) => {
            return Err(Error::Config(format!(
                "key 'sandblast.strategy': unknown strategy '{v}'"
            )));
        }
    };

    let cfg = RunConfig {
        mode: args.mode,
        seed,
        out,
        input,
        size,
        spacing_um,
        mill: mill_cfg,
        grid_origin_mm: (
            map.get_or("mill.origin_x_mm", 0.0)?,
            map.get_or("mill.origin_y_mm", 0.0)?,
        ),
        tile_px: map.get_or("mill.tile_px", 64)?,
        adapt_to,
        sandblast_method,
        sandblast_strategy,
        patch_size: map.get_or("sandblast.patch_size", 256)?,
        overlap: map.get_or("sandblast.overlap", 128)?,
        stats_bins: map.get_or("stats.bins", 64)?,
        stats_autocorrelation: map.get_or("stats.autocorrelation", true)?,
        bench_sizes: parse_list(&map.get("bench.sizes").unwrap_or("256,512".into()), "bench.sizes")?,
        bench_alphas: parse_list(
            &map.get("bench.alphas").unwrap_or("0.2,0.5,0.8".into()),
            "bench.alphas",
        )?,
        bench_repetitions: map.get_or("bench.repetitions", 3)?,
    };
    map.finish()?;
    Ok(cfg)
}

/// Synthetic measurement kinds for demos and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    Sandblasted,
    Milled,
}

/// Exact sample statistics of every generated fixture, enforced by a
/// final affine height adaptation.
pub const FIXTURE_SANDBLAST_MEAN_UM: f64 = 10.0;
pub const FIXTURE_SANDBLAST_VARIANCE_UM2: f64 = 4.0;
pub const FIXTURE_MILL_MEAN_UM: f64 = -3.0;
pub const FIXTURE_MILL_VARIANCE_UM2: f64 = 2.25;

/// Deterministic pseudo-measurement: smoothed noise for a sandblasted
/// look, a procedural render for a milled one.
pub fn fixture_gen(kind: FixtureKind, seed: u64) -> HeightField {
    match kind {
        FixtureKind::Sandblasted => {
            let n = 256;
            let mut rng = RandomStream::new(seed).substream("fixture");
            let noise: Vec<f64> = (0..n * n).map(|_| rng.standard_normal()).collect();
            // two passes of a 5x5 box blur (wrap-around) give the
            // short-range correlation typical of blasted surfaces
            let mut cur = noise;
            for _ in 0..2 {
                let mut next = vec![0.0; n * n];
                for y in 0..n {
                    for x in 0..n {
                        let mut acc = 0.0;
                        for dy in -2i64..=2 {
                            for dx in -2i64..=2 {
                                let sx = (x as i64 + dx).rem_euclid(n as i64) as usize;
                                let sy = (y as i64 + dy).rem_euclid(n as i64) as usize;
                                acc += cur[sy * n + sx];
                            }
                        }
                        next[y * n + x] = acc / 25.0;
                    }
                }
                cur = next;
            }
            let field = HeightField::new(n, n, 1.75, cur).expect("finite data");
            mill::adapt_height(
                &field,
                FIXTURE_SANDBLAST_MEAN_UM,
                FIXTURE_SANDBLAST_VARIANCE_UM2,
            )
            .expect("smoothed noise has positive variance")
        }
        FixtureKind::Milled => {
            let cfg = MillConfig { seed, ..MillConfig::default() };
            let grid = GridSpec {
                x0_mm: 0.0,
                y0_mm: 0.0,
                width_px: 160,
                height_px: 160,
                spacing_um: 40.0,
            };
            let (field, _) = mill::render_mill(&cfg, &grid, 64).expect("valid defaults");
            mill::adapt_height(&field, FIXTURE_MILL_MEAN_UM, FIXTURE_MILL_VARIANCE_UM2)
                .expect("default render has positive variance")
        }
    }
}

fn read_input(cfg: &RunConfig) -> Result<HeightField> {
    let path = cfg.input.as_ref().ok_or_else(|| {
        Error::Config("this mode needs --input (or 'input' in the config)".into())
    })?;
    let text = path.to_string_lossy();
    match text.strip_prefix("fixture:") {
        Some("sandblasted") => Ok(fixture_gen(FixtureKind::Sandblasted, cfg.seed)),
        Some("milled") => Ok(fixture_gen(FixtureKind::Milled, cfg.seed)),
        Some(other) => Err(Error::Config(format!("unknown fixture kind '{other}'"))),
        None => HeightField::read_hfld(path),
    }
}

/// Tracks files written during a run so a failure removes partial
/// output; exit code 0 means every artifact landed.
struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Self {
        Self { written: Vec::new(), committed: false }
    }

    fn note(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

fn print_stats(field: &HeightField) {
    let s = field.stats();
    println!(
        "output: {}x{} px @ {} um, mean {:.4} um, std {:.4} um, range [{:.4}, {:.4}]",
        field.width(),
        field.height(),
        field.spacing_um(),
        s.mean,
        s.variance.sqrt(),
        s.min,
        s.max
    );
}

fn cmd_mill(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let grid = GridSpec {
        x0_mm: cfg.grid_origin_mm.0,
        y0_mm: cfg.grid_origin_mm.1,
        width_px: cfg.size.0,
        height_px: cfg.size.1,
        spacing_um: cfg.spacing_um,
    };
    let start = Instant::now();
    let (field, n_rings) = mill::render_mill(&cfg.mill, &grid, cfg.tile_px)?;
    let field = match cfg.adapt_to {
        Some((mean, var)) => mill::adapt_height(&field, mean, var)?,
        None => field,
    };
    let elapsed = start.elapsed();
    out.note(&cfg.out);
    field.write_hfld(&cfg.out)?;
    println!("rings: {n_rings}");
    println!("wall time: {:.3} s", elapsed.as_secs_f64());
    print_stats(&field);
    Ok(())
}

fn cmd_sandblast(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let input = read_input(cfg)?;
    let sb = SandblastConfig {
        target_w: cfg.size.0,
        target_h: cfg.size.1,
        target_spacing_um: cfg.spacing_um,
        method: cfg.sandblast_method,
        size_strategy: cfg.sandblast_strategy,
        patch_size: cfg.patch_size,
        overlap: cfg.overlap,
        seed: cfg.seed,
    };
    println!("strategy: {:?}", sandblast::resolve_strategy(&input, &sb)?);
    let field = sandblast::synthesize_sandblast(&input, &sb)?;
    out.note(&cfg.out);
    field.write_hfld(&cfg.out)?;
    print_stats(&field);
    Ok(())
}

/// Paths derived from `--out` for the stats artifacts.
pub fn stats_paths(out: &Path) -> (PathBuf, PathBuf) {
    let base = out.to_string_lossy();
    (
        PathBuf::from(format!("{base}.hist.csv")),
        PathBuf::from(format!("{base}.acf.hfld")),
    )
}

fn cmd_stats(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let input = read_input(cfg)?;
    let (hist_path, acf_path) = stats_paths(&cfg.out);
    let hist = histogram(&input, cfg.stats_bins)?;
    out.note(&hist_path);
    std::fs::write(&hist_path, hist.to_csv())?;
    if cfg.stats_autocorrelation {
        let acf = autocorrelation(&input);
        out.note(&acf_path);
        acf.write_hfld(&acf_path)?;
    }
    print_stats(&input);
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    if cfg.bench_repetitions == 0 {
        return Err(Error::Config("bench.repetitions must be >= 1".into()));
    }
    let mut csv = String::from("size,alpha,mean_time,min,max,mean_ring_count\n");
    for &size in &cfg.bench_sizes {
        for &alpha in &cfg.bench_alphas {
            let mut mill_cfg = cfg.mill.clone();
            mill_cfg.overlap = alpha;
            let grid = GridSpec {
                x0_mm: cfg.grid_origin_mm.0,
                y0_mm: cfg.grid_origin_mm.1,
                width_px: size,
                height_px: size,
                spacing_um: cfg.spacing_um,
            };
            let mut times = Vec::new();
            let mut ring_sum = 0usize;
            for rep in 0..cfg.bench_repetitions {
                mill_cfg.seed = cfg.seed.wrapping_add(rep as u64);
                let start = Instant::now();
                let (_, n) = mill::render_mill(&mill_cfg, &grid, cfg.tile_px)?;
                times.push(start.elapsed().as_secs_f64());
                ring_sum += n;
            }
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            let min = times.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            csv.push_str(&format!(
                "{size},{alpha},{mean},{min},{max},{}\n",
                ring_sum as f64 / cfg.bench_repetitions as f64
            ));
            println!("size {size} alpha {alpha}: mean {mean:.3} s");
        }
    }
    out.note(&cfg.out);
    std::fs::write(&cfg.out, csv)?;
    Ok(())
}

/// Execute one parsed run; removes partial outputs on failure.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let mut outputs = Outputs::new();
    match cfg.mode {
        Mode::Mill => cmd_mill(cfg, &mut outputs)?,
        Mode::Sandblast => cmd_sandblast(cfg, &mut outputs)?,
        Mode::Stats => cmd_stats(cfg, &mut outputs)?,
        Mode::Bench => cmd_bench(cfg, &mut outputs)?,
    }
    outputs.commit();
    Ok(())
}

/// Binary entry point; returns the process exit code.
pub fn main_entry() -> i32 {
    let args = Args::parse();
    let threads = args.threads.or_else(|| {
        std::env::var("SURFTEX_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return 1;
        }
    }
    let cfg = match parse_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
