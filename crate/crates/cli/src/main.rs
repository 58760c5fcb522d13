use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sdem::apps::{cartogram_population, register, remesh, RegionLabeling};
use sdem::beltrami::SourceMetric;
use sdem::conformal::initial_conformal_map;
use sdem::geometry::face_areas;
use sdem::io::{
    load_mesh, read_index_list_csv, read_labels_csv, read_landmarks_csv, read_population_csv,
    read_region_populations_csv, write_obj,
};
use sdem::lsdem::{lsdem_run_with, EnergyWeights, LandmarkSet, LsdemConfig};
use sdem::metrics::{
    beltrami_stats, landmark_error, logged_area_ratio, mean_abs, normalized_density_variance, std_dev, MetricsReport,
};
use sdem::overlap::{count_flips, CorrectionConfig};
use sdem::sdem::{recouple_density, sdem_run_with, IterationRecord, SdemConfig};
use sdem::sphere::SphericalMap;
use sdem::{Error, TriMesh};

#[derive(Parser, Debug)]
#[command(name = "sdem", version, about = "Spherical density-equalizing maps of genus-0 meshes")]
struct Cli {
    /// Accepted for scripting compatibility; every pipeline is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct SdemFlags {
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

impl SdemFlags {
    fn config(&self) -> SdemConfig {
        SdemConfig { dt: self.dt, eps: self.eps, max_iter: self.max_iter }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spherical conformal map written as a unit-sphere OBJ.
    Conformal { input: PathBuf, output: PathBuf, report: PathBuf },
    /// Density-equalizing map for a face population, or area-preserving map.
    Sdem {
        input: PathBuf,
        output: PathBuf,
        report: PathBuf,
        /// CSV rows `face_index,population`.
        #[arg(long, required_unless_present = "area_preserving", conflicts_with = "area_preserving")]
        population: Option<PathBuf>,
        /// Use the input face areas as the population.
        #[arg(long)]
        area_preserving: bool,
        #[command(flatten)]
        flags: SdemFlags,
    },
    /// Landmark-aligned density-equalizing map.
    Lsdem {
        input: PathBuf,
        /// CSV rows `face_index,population`.
        population: PathBuf,
        /// CSV rows `vertex_index,qx,qy,qz`.
        landmarks: PathBuf,
        output: PathBuf,
        report: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 5.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
    },
    /// Near-uniform remesh pulled back through an area-preserving map.
    Remesh {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        vertices: usize,
        /// Face list CSV (one face index per row) whose population is multiplied by SCALE.
        #[arg(long, num_args = 2, value_names = ["FACES_CSV", "SCALE"])]
        boost: Option<Vec<String>>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Map mesh A onto the surface of mesh B through landmark-aligned spherical maps.
    Register {
        a: PathBuf,
        b: PathBuf,
        /// One vertex index of A per row.
        landmarks_a: PathBuf,
        /// The matching vertex indices of B, row for row.
        landmarks_b: PathBuf,
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Spherical cartogram from per-face region labels and region populations.
    Cartogram {
        input: PathBuf,
        /// CSV rows `face_index,region_id`; region 0 is the sea.
        labels: PathBuf,
        /// CSV rows `region_id,population`.
        populations: PathBuf,
        output: PathBuf,
        report: PathBuf,
        #[command(flatten)]
        flags: SdemFlags,
    },
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Solver(String),
    Stall(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Stall(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Solver(m) | Failure::Stall(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::SingularSystem(_)
            | Error::NonConvergence { .. }
            | Error::ConformalCollapse { .. }
            | Error::BeltramiTooLarge { .. }
            | Error::NonPositiveDensity { .. }
            | Error::Location => Failure::Solver(m),
            Error::FlipsRemain { .. } => Failure::Stall(m),
            _ => Failure::Input(m),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn open(path: &Path) -> Outcome<File> {
    File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// JSON-lines iteration log next to the report.
struct TraceWriter {
    out: Option<BufWriter<File>>,
    error: Option<std::io::Error>,
}

impl TraceWriter {
    fn beside(report: Option<&Path>) -> Outcome<Self> {
        let out = match report {
            Some(r) => Some(BufWriter::new(File::create(r.with_extension("trace.jsonl"))?)),
            None => None,
        };
        Ok(TraceWriter { out, error: None })
    }

    fn record(&mut self, r: &IterationRecord) {
        log::debug!("iteration {} ratio {:.3e} flips {} dt {}", r.iteration, r.ratio, r.flip_count, r.dt);
        if let (Some(out), None) = (self.out.as_mut(), self.error.as_ref()) {
            let line = serde_json::to_string(r).expect("records serialize");
            if let Err(e) = writeln!(out, "{line}") {
                self.error = Some(e);
            }
        }
    }

    fn finish(self) -> Outcome {
        if let Some(e) = self.error {
            return Err(e.into());
        }
        if let Some(mut out) = self.out {
            out.flush()?;
        }
        Ok(())
    }
}

fn mesh_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn density_variance(mesh: &TriMesh, map: &SphericalMap, population: &[f64]) -> Outcome<f64> {
    let d = recouple_density(mesh, map.points(), population)?;
    Ok(normalized_density_variance(&d.vertex_density))
}

fn start_report(name: String, mesh: &TriMesh, f0: &SphericalMap) -> Outcome<MetricsReport> {
    let d = logged_area_ratio(mesh, f0.points())?;
    Ok(MetricsReport {
        mesh_name: name,
        face_count: mesh.num_faces(),
        d_area_mean_initial: Some(mean_abs(&d)),
        d_area_sd_initial: Some(std_dev(&d)),
        ..Default::default()
    })
}

/// Fills the final-map fields. `mu_mean` is measured against the initial conformal
/// map `f0` when given, otherwise against the input surface.
fn finish_report(report: &mut MetricsReport, mesh: &TriMesh, f0: Option<&SphericalMap>, f: &SphericalMap) -> Outcome {
    let d = logged_area_ratio(mesh, f.points())?;
    report.d_area_mean_final = Some(mean_abs(&d));
    report.d_area_sd_final = Some(std_dev(&d));
    let source = match f0 {
        Some(g) => SourceMetric::Sphere(g.points()),
        None => SourceMetric::Surface(mesh.vertices()),
    };
    report.mu_mean = Some(beltrami_stats(mesh, source, f.points())?.mean);
    report.flip_count = count_flips(mesh, f.points());
    Ok(())
}

fn write_report(path: &Path, report: &MetricsReport) -> Outcome {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, report).map_err(|e| Failure::Input(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn write_map(path: &Path, mesh: &TriMesh, f: &SphericalMap) -> Outcome {
    write_obj(path, f.points(), mesh.faces())?;
    Ok(())
}

fn stall_check(stalled: bool) -> Outcome {
    if stalled {
        return Err(Failure::Stall("overlap correction stalled; wrote the last flip-free map".into()));
    }
    Ok(())
}

/// Conformal start, density-equalizing flow, outputs; shared by `sdem` and `cartogram`.
fn run_sdem(input: &Path, mesh: &TriMesh, population: &[f64], cfg: &SdemConfig, output: &Path, report: &Path) -> Outcome {
    cfg.validate()?;
    let start = Instant::now();
    let f0 = initial_conformal_map(mesh)?;
    let mut trace_out = TraceWriter::beside(Some(report))?;
    let (f, trace) = sdem_run_with(mesh, population, &f0, cfg, &CorrectionConfig::default(), |r| trace_out.record(r))?;
    let wall = start.elapsed().as_secs_f64();
    trace_out.finish()?;
    let mut rep = start_report(mesh_name(input), mesh, &f0)?;
    rep.wall_time = wall;
    rep.var_initial = Some(density_variance(mesh, &f0, population)?);
    rep.var_final = Some(density_variance(mesh, &f, population)?);
    finish_report(&mut rep, mesh, Some(&f0), &f)?;
    write_map(output, mesh, &f)?;
    write_report(report, &rep)?;
    log::info!("{} iterations, converged {}", trace.records.len(), trace.converged);
    stall_check(trace.stalled)
}

fn cmd_conformal(input: &Path, output: &Path, report: &Path) -> Outcome {
    let mesh = load_mesh(input, None)?;
    let start = Instant::now();
    let f = initial_conformal_map(&mesh)?;
    let mut rep = start_report(mesh_name(input), &mesh, &f)?;
    rep.wall_time = start.elapsed().as_secs_f64();
    finish_report(&mut rep, &mesh, None, &f)?;
    write_map(output, &mesh, &f)?;
    write_report(report, &rep)
}

fn cmd_lsdem(
    input: &Path,
    population: &Path,
    landmarks: &Path,
    output: &Path,
    report: &Path,
    weights: EnergyWeights,
    cfg: LsdemConfig,
) -> Outcome {
    weights.validate()?;
    cfg.validate()?;
    let mesh = load_mesh(input, None)?;
    let pop = read_population_csv(open(population)?, mesh.num_faces())?;
    let lm = LandmarkSet::new(read_landmarks_csv(open(landmarks)?, mesh.num_vertices())?, mesh.num_vertices())?;
    let start = Instant::now();
    let f0 = initial_conformal_map(&mesh)?;
    let mut trace_out = TraceWriter::beside(Some(report))?;
    let (f, trace) = lsdem_run_with(&mesh, &pop, &f0, &lm, &weights, &cfg, &CorrectionConfig::default(), |r| {
        trace_out.record(r)
    })?;
    let wall = start.elapsed().as_secs_f64();
    trace_out.finish()?;
    let mut rep = start_report(mesh_name(input), &mesh, &f0)?;
    rep.wall_time = wall;
    rep.var_initial = Some(density_variance(&mesh, &f0, &pop)?);
    rep.var_final = Some(density_variance(&mesh, &f, &pop)?);
    rep.landmark_error_initial = Some(landmark_error(f0.points(), lm.pairs()));
    rep.landmark_error_final = Some(landmark_error(f.points(), lm.pairs()));
    finish_report(&mut rep, &mesh, Some(&f0), &f)?;
    write_map(output, &mesh, &f)?;
    write_report(report, &rep)?;
    stall_check(trace.stalled)
}

fn cmd_remesh(input: &Path, output: &Path, vertices: usize, boost: Option<&[String]>, report: Option<&Path>) -> Outcome {
    let mesh = load_mesh(input, None)?;
    let mut pop = face_areas(&mesh, mesh.vertices());
    if let Some([faces, scale]) = boost {
        let scale: f64 = scale.parse().map_err(|_| Failure::Input(format!("invalid boost scale '{scale}'")))?;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Failure::Input(format!("boost scale must be positive, got {scale}")));
        }
        for f in read_index_list_csv(open(Path::new(faces))?, mesh.num_faces(), "face")? {
            pop[f] *= scale;
        }
    }
    let start = Instant::now();
    let f0 = initial_conformal_map(&mesh)?;
    let mut trace_out = TraceWriter::beside(report)?;
    let cfg = SdemConfig::default();
    let (f, trace) = sdem_run_with(&mesh, &pop, &f0, &cfg, &CorrectionConfig::default(), |r| trace_out.record(r))?;
    let out = remesh(&mesh, &f, vertices)?;
    let wall = start.elapsed().as_secs_f64();
    trace_out.finish()?;
    write_obj(output, out.vertices(), out.faces())?;
    if let Some(path) = report {
        let mut rep = start_report(mesh_name(input), &mesh, &f0)?;
        rep.wall_time = wall;
        rep.var_initial = Some(density_variance(&mesh, &f0, &pop)?);
        rep.var_final = Some(density_variance(&mesh, &f, &pop)?);
        finish_report(&mut rep, &mesh, Some(&f0), &f)?;
        write_report(path, &rep)?;
    }
    stall_check(trace.stalled)
}

fn cmd_register(a: &Path, b: &Path, lm_a: &Path, lm_b: &Path, output: &Path, report: Option<&Path>) -> Outcome {
    let mesh_a = load_mesh(a, None)?;
    let mesh_b = load_mesh(b, None)?;
    let ia = read_index_list_csv(open(lm_a)?, mesh_a.num_vertices(), "vertex")?;
    let ib = read_index_list_csv(open(lm_b)?, mesh_b.num_vertices(), "vertex")?;
    if ia.len() != ib.len() {
        return Err(Failure::Input(format!("{} landmarks on A but {} on B", ia.len(), ib.len())));
    }
    let start = Instant::now();
    let ga = initial_conformal_map(&mesh_a)?;
    let gb = initial_conformal_map(&mesh_b)?;
    // Both surfaces are flowed with their landmarks pinned to the same sphere points.
    let targets: Vec<_> = ib.iter().map(|&v| gb.points()[v]).collect();
    let set_a = LandmarkSet::new(ia.into_iter().zip(targets.iter().copied()).collect(), mesh_a.num_vertices())?;
    let set_b = LandmarkSet::new(ib.into_iter().zip(targets).collect(), mesh_b.num_vertices())?;
    let (weights, cfg, corr) = (EnergyWeights::default(), LsdemConfig::default(), CorrectionConfig::default());
    let mut trace_out = TraceWriter::beside(report)?;
    let pop_a = face_areas(&mesh_a, mesh_a.vertices());
    let (fa, ta) = lsdem_run_with(&mesh_a, &pop_a, &ga, &set_a, &weights, &cfg, &corr, |r| trace_out.record(r))?;
    let pop_b = face_areas(&mesh_b, mesh_b.vertices());
    let (fb, tb) = lsdem_run_with(&mesh_b, &pop_b, &gb, &set_b, &weights, &cfg, &corr, |r| trace_out.record(r))?;
    let positions = register(&mesh_a, &mesh_b, &fa, &fb)?.pull_back(&mesh_b);
    let wall = start.elapsed().as_secs_f64();
    trace_out.finish()?;
    write_obj(output, &positions, mesh_a.faces())?;
    if let Some(path) = report {
        let mut rep = start_report(mesh_name(a), &mesh_a, &ga)?;
        rep.wall_time = wall;
        rep.landmark_error_initial = Some(landmark_error(ga.points(), set_a.pairs()));
        rep.landmark_error_final = Some(landmark_error(fa.points(), set_a.pairs()));
        finish_report(&mut rep, &mesh_a, Some(&ga), &fa)?;
        write_report(path, &rep)?;
    }
    stall_check(ta.stalled || tb.stalled)
}

fn cmd_cartogram(input: &Path, labels: &Path, populations: &Path, output: &Path, report: &Path, cfg: &SdemConfig) -> Outcome {
    let mesh = load_mesh(input, None)?;
    let labels = read_labels_csv(open(labels)?, mesh.num_faces())?;
    let table = read_region_populations_csv(open(populations)?)?;
    let pop = cartogram_population(&RegionLabeling::new(labels, table)?, &mesh)?;
    run_sdem(input, &mesh, &pop, cfg, output, report)
}

fn run(cli: Cli) -> Outcome {
    if cli.seed.is_some() {
        log::debug!("--seed has no effect on deterministic pipelines");
    }
    match cli.command {
        Command::Conformal { input, output, report } => cmd_conformal(&input, &output, &report),
        Command::Sdem { input, output, report, population, area_preserving, flags } => {
            let mesh = load_mesh(&input, None)?;
            let pop = match (population, area_preserving) {
                (Some(p), false) => read_population_csv(open(&p)?, mesh.num_faces())?,
                _ => face_areas(&mesh, mesh.vertices()),
            };
            run_sdem(&input, &mesh, &pop, &flags.config(), &output, &report)
        }
        Command::Lsdem { input, population, landmarks, output, report, alpha, beta, gamma, dt, eps, max_iter } => cmd_lsdem(
            &input,
            &population,
            &landmarks,
            &output,
            &report,
            EnergyWeights { alpha, beta, gamma },
            LsdemConfig { dt, eps, max_iter },
        ),
        Command::Remesh { input, output, vertices, boost, report } => {
            cmd_remesh(&input, &output, vertices, boost.as_deref(), report.as_deref())
        }
        Command::Register { a, b, landmarks_a, landmarks_b, output, report } => {
            cmd_register(&a, &b, &landmarks_a, &landmarks_b, &output, report.as_deref())
        }
        Command::Cartogram { input, labels, populations, output, report, flags } => {
            cmd_cartogram(&input, &labels, &populations, &output, &report, &flags.config())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sdem_flags_default_and_exclusive() {
        let cli = Cli::try_parse_from(["sdem", "sdem", "a.obj", "b.obj", "r.json", "--area-preserving"]).unwrap();
        match cli.command {
            Command::Sdem { flags, area_preserving, .. } => {
                assert!(area_preserving);
                assert_eq!(flags.config(), SdemConfig::default());
            }
            _ => unreachable!(),
        }
        assert!(Cli::try_parse_from(["sdem", "sdem", "a.obj", "b.obj", "r.json"]).is_err());
        assert!(Cli::try_parse_from(["sdem", "sdem", "a", "b", "r", "--population", "p.csv", "--area-preserving"]).is_err());
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(Failure::from(Error::Genus { euler: 0 }).code(), 2);
        assert_eq!(Failure::from(Error::NonConvergence { residual: 1.0 }).code(), 3);
        assert_eq!(Failure::from(Error::FlipsRemain { count: 2 }).code(), 4);
    }
}
