use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use jnc_core::czkernel::{apply_cz_on, apply_modified_on, kernel_transpose, padded_window, CorrectionSpec, KernelSpec};
use jnc_core::hardy::{
    atom_exponent, decompose_molecule, make_atom, max_level, validate_atom, validate_molecule, MoleculeRecord,
};
use jnc_core::lab::{families, run, ExperimentConfig, ExperimentName, FamilyKind, FamilySpec};
use jnc_core::polyproj::residual_moments;
use jnc_core::spaces::{
    amalgam_norm, dyadic_radii, jn_ball_seminorm, jn_con_norm, rm_ball_seminorm, rm_con_norm, SearchConfig, SideSet,
};
use jnc_core::{moment_projection, Error, GridFunction, NormParams, Policy, Region, Window};

const EXIT_VIOLATION: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_RUNTIME: u8 = 1;

#[derive(Parser)]
#[command(
    name = "jnc",
    version,
    about = "Congruent-cube function spaces, operators and experiments on grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a cube or ball norm of a grid function.
    Norm(NormArgs),
    /// Moment-matching polynomial projection on a cube.
    Project(ProjectArgs),
    /// Apply a singular integral operator.
    ApplyOp(ApplyArgs),
    /// Build or certify atoms.
    #[command(subcommand)]
    Atom(AtomCommand),
    /// Certify or decompose molecules.
    #[command(subcommand)]
    Molecule(MoleculeCommand),
    /// Run a named experiment.
    Experiment(ExperimentArgs),
}

fn parse_exponent(s: &str) -> Result<f64, String> {
    match s {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        _ => s.parse::<f64>().map_err(|e| e.to_string()),
    }
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Outer exponent (`inf` allowed).
    #[arg(long, default_value = "2", value_parser = parse_exponent)]
    p: f64,
    /// Inner exponent (`inf` allowed).
    #[arg(long, default_value = "2", value_parser = parse_exponent)]
    q: f64,
    /// Polynomial degree.
    #[arg(long, default_value_t = 0)]
    s: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<NormParams, Error> {
        NormParams::new(self.p, self.q, self.s, self.alpha)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    RandomOsc,
    SmoothOsc,
    Step,
    Polynomial,
    Atom,
    Constant,
    Zero,
}

impl From<FamilyArg> for FamilyKind {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::RandomOsc => FamilyKind::RandomOsc,
            FamilyArg::SmoothOsc => FamilyKind::SmoothOsc,
            FamilyArg::Step => FamilyKind::Step,
            FamilyArg::Polynomial => FamilyKind::Polynomial,
            FamilyArg::Atom => FamilyKind::Atom,
            FamilyArg::Constant => FamilyKind::Constant,
            FamilyArg::Zero => FamilyKind::Zero,
        }
    }
}

/// A grid function read from JSON or generated from a seeded family.
#[derive(Args, Clone)]
struct FunctionArgs {
    /// JSON grid function (`{"window": …, "values": […]}`).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random-osc")]
    family: FamilyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Lower corner, one value per axis.
    #[arg(long, value_delimiter = ',', default_value = "-1", allow_negative_numbers = true)]
    lower: Vec<f64>,
    /// Upper corner, one value per axis.
    #[arg(long, value_delimiter = ',', default_value = "1", allow_negative_numbers = true)]
    upper: Vec<f64>,
    /// Cells per axis.
    #[arg(long, default_value_t = 256)]
    cells: usize,
}

impl FunctionArgs {
    fn load(&self, params: &NormParams) -> Result<GridFunction, Error> {
        if let Some(path) = &self.input {
            return read_json(path);
        }
        let n = self.lower.len();
        if self.upper.len() != n {
            return Err(Error::Config("--lower and --upper need the same length".into()));
        }
        let w = Window::new(&self.lower, &self.upper, &vec![self.cells; n])?;
        let spec = FamilySpec {
            kind: self.family.into(),
            count: self.index + 1,
            seed: self.seed,
        };
        families::sample(&spec, self.index, &w, params)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NormKind {
    Jn,
    Rm,
    JnBall,
    RmBall,
    Amalgam,
}

#[derive(Clone, Copy, ValueEnum)]
enum SidesArg {
    Dyadic,
    All,
}

#[derive(Args)]
struct NormArgs {
    #[arg(long, value_enum, default_value = "jn")]
    norm: NormKind,
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    function: FunctionArgs,
    #[arg(long, value_enum, default_value = "dyadic")]
    sides: SidesArg,
    /// Smallest cube side in cells.
    #[arg(long, default_value_t = 4)]
    min_cells: usize,
    #[arg(long, default_value_t = 1)]
    offset_stride: usize,
    /// Exact packing search instead of tilings.
    #[arg(long)]
    packing: bool,
    /// Treat the function as zero outside the window.
    #[arg(long)]
    zero_extend: bool,
    /// Amalgam radius, or largest ball radius.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    function: FunctionArgs,
    /// Degree of the projection.
    #[arg(long, default_value_t = 0)]
    degree: usize,
    /// Cube center, one value per axis.
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    center: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    side: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OpMode {
    /// Principal value operator.
    Cz,
    /// Modified operator with the transposed kernel.
    Modified,
}

#[derive(Args)]
struct ApplyArgs {
    /// hilbert, riesz_1, riesz_2, perturbed, smooth_bump.
    #[arg(long, default_value = "hilbert")]
    kernel: String,
    #[arg(long, value_enum, default_value = "cz")]
    mode: OpMode,
    #[command(flatten)]
    function: FunctionArgs,
    /// Taylor order of the modified operator.
    #[arg(long, default_value_t = 0)]
    degree: usize,
    /// Evaluation window dilation factor.
    #[arg(long, default_value_t = 1)]
    padding: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AtomCommand {
    /// Seeded atom on a cube.
    Make(AtomMakeArgs),
    /// Certify a JSON grid function as an atom on a cube.
    Check(AtomCheckArgs),
}

#[derive(Args)]
struct AtomMakeArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    cells: usize,
    #[arg(long, default_value_t = 1.0)]
    side: f64,
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    center: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AtomCheckArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    center: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    side: f64,
}

#[derive(Subcommand)]
enum MoleculeCommand {
    /// Certify a JSON grid function as a molecule around a cube.
    Check(MoleculeArgs),
    /// Decompose a certified molecule into atoms.
    Decompose(MoleculeArgs),
}

#[derive(Args)]
struct MoleculeArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    center: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    side: f64,
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    #[arg(long, default_value_t = jnc_core::tol::VANISHING_MOMENT)]
    tol_moment: f64,
    /// Largest decomposition level.
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// jn-boundedness, rm-boundedness, equivalence, atom-image, duality,
    /// decomposition, vanishing-moments.
    name: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Refinements, cells per axis.
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<usize>>,
    #[arg(long)]
    padding: Option<usize>,
    #[arg(long)]
    tol_stability: Option<f64>,
    #[arg(long)]
    tol_bracket: Option<f64>,
    #[arg(long)]
    tol_amalgam: Option<f64>,
    #[arg(long)]
    tol_duality: Option<f64>,
    #[arg(long)]
    tol_reconstruction: Option<f64>,
    #[arg(long)]
    tol_closed_form: Option<f64>,
    #[arg(long)]
    tol_moment: Option<f64>,
    #[arg(long)]
    tol_hk_spread: Option<f64>,
    #[arg(long)]
    tol_sensitivity: Option<f64>,
}

/// Outcome categories mapped to exit codes.
enum Failure {
    Violation(String),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>, file: &str) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(file), text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn point(v: &[f64]) -> Result<[f64; 2], Error> {
    match v {
        [x] => Ok([*x, 0.0]),
        [x, y] => Ok([*x, *y]),
        _ => Err(Error::Config(format!(
            "points need 1 or 2 coordinates, got {}",
            v.len()
        ))),
    }
}

fn norm(a: NormArgs) -> Result<(), Failure> {
    let params = a.params.params()?;
    let f = a.function.load(&params)?;
    let search = SearchConfig {
        sides: match a.sides {
            SidesArg::Dyadic => SideSet::Dyadic,
            SidesArg::All => SideSet::All,
        },
        min_cells: a.min_cells,
        offset_stride: a.offset_stride,
        packing: a.packing,
        policy: if a.zero_extend {
            Policy::ZeroExtend
        } else {
            Policy::Restrict
        },
    };
    let w = &f.window;
    let out = a.out.as_deref();
    match a.norm {
        NormKind::Jn => emit(&jn_con_norm(&f, &params, &search)?, out, "norm.json")?,
        NormKind::Rm => emit(&rm_con_norm(&f, &params, &search)?, out, "norm.json")?,
        NormKind::JnBall | NormKind::RmBall => {
            let radii = dyadic_radii(w, a.radius.unwrap_or(w.min_side() / 2.0));
            let rep = if matches!(a.norm, NormKind::JnBall) {
                jn_ball_seminorm(&f, &params, &radii)?
            } else {
                rm_ball_seminorm(&f, &params, &radii)?
            };
            emit(&rep, out, "norm.json")?
        }
        NormKind::Amalgam => {
            let r = a.radius.unwrap_or(w.min_side() / 8.0);
            let v = amalgam_norm(&f, params.p, params.q, r)?;
            emit(
                &serde_json::json!({ "norm": "amalgam", "radius": r, "value": v }),
                out,
                "norm.json",
            )?
        }
    }
    Ok(())
}

fn project(a: ProjectArgs) -> Result<(), Failure> {
    let params = NormParams::new(2.0, 2.0, a.degree, 0.0)?;
    let f = a.function.load(&params)?;
    let region = Region::cube(point(&a.center)?, a.side);
    let p = moment_projection(&f, &region, a.degree)?;
    let (moments, scale) = residual_moments(&f, &region, &p);
    emit(
        &serde_json::json!({ "polynomial": p, "residual_moments": moments, "scale": scale }),
        a.out.as_deref(),
        "projection.json",
    )?;
    Ok(())
}

fn apply_op(a: ApplyArgs) -> Result<(), Failure> {
    let k = KernelSpec::from_name(&a.kernel)?;
    let params = NormParams::new(2.0, 2.0, a.degree, 0.0)?;
    let f = a.function.load(&params)?;
    let eval = padded_window(&f.window, a.padding)?;
    let values = match a.mode {
        OpMode::Cz => {
            let rep = apply_cz_on(&k, &f, &eval, None)?;
            if !rep.converged {
                eprintln!(
                    "warning: principal value not converged (increment {:e})",
                    rep.increments[1]
                );
            }
            rep.values
        }
        OpMode::Modified => {
            let corr = CorrectionSpec::new(f.window.center(), f.window.min_side() / 4.0, a.degree)?;
            apply_modified_on(&kernel_transpose(&k), &corr, &f, &eval, None)?.canonical
        }
    };
    emit(&values, a.out.as_deref(), "values.json")?;
    Ok(())
}

fn atom(c: AtomCommand) -> Result<(), Failure> {
    match c {
        AtomCommand::Make(a) => {
            let params = a.params.params()?;
            let c = point(&a.center)?;
            let w = Window::centered(a.center.len(), c, a.side, a.cells)?;
            emit(&make_atom(a.seed, &w, &params)?, a.out.as_deref(), "atom.json")?;
            Ok(())
        }
        AtomCommand::Check(a) => {
            let params = a.params.params()?;
            let f: GridFunction = read_json(&a.input)?;
            let cube = Region::cube(point(&a.center)?, a.side);
            let cert = validate_atom(&f, &cube, &params);
            emit(
                &serde_json::json!({ "certification": cert, "size_exponent": atom_exponent(&params) }),
                None,
                "",
            )?;
            if cert.passed() {
                Ok(())
            } else {
                Err(Failure::Violation(format!("not an atom: {:?}", cert.failures())))
            }
        }
    }
}

fn molecule(c: MoleculeCommand) -> Result<(), Failure> {
    let (a, decompose) = match c {
        MoleculeCommand::Check(a) => (a, false),
        MoleculeCommand::Decompose(a) => (a, true),
    };
    let params = a.params.params()?;
    let f: GridFunction = read_json(&a.input)?;
    let z = point(&a.center)?;
    if !decompose {
        let j = max_level(&f.window, z, a.side).ok_or_else(|| Error::Config("core cube exceeds the window".into()))?;
        let cert = validate_molecule(&f, z, a.side, &params, a.epsilon, j, a.tol_moment)?;
        emit(&cert, a.out.as_deref(), "molecule.json")?;
        return if cert.passed() {
            Ok(())
        } else {
            Err(Failure::Violation("not a molecule".into()))
        };
    }
    let m = match MoleculeRecord::new(f, z, a.side, params, a.epsilon, a.tol_moment) {
        Ok(m) => m,
        Err(Error::Certification(why)) => return Err(Failure::Violation(why)),
        Err(e) => return Err(e.into()),
    };
    let rep = decompose_molecule(&m, a.levels)?;
    emit(&rep, a.out.as_deref(), "decomposition.json")?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let name = ExperimentName::parse(&a.name)?;
    let mut cfg = match &a.config {
        Some(path) => {
            let cfg: ExperimentConfig = read_json(path)?;
            if cfg.experiment != name {
                return Err(Error::Config(format!(
                    "config is for {}, not {}",
                    cfg.experiment.as_str(),
                    name.as_str()
                ))
                .into());
            }
            cfg
        }
        None => ExperimentConfig::default_for(name),
    };
    if let Some(s) = a.seed {
        cfg.family.seed = s;
    }
    if let Some(c) = a.cells {
        cfg.refinements = c;
    }
    if let Some(p) = a.padding {
        cfg.padding = p;
    }
    let t = &mut cfg.tolerances;
    for (slot, v) in [
        (&mut t.stability, a.tol_stability),
        (&mut t.bracket_spread, a.tol_bracket),
        (&mut t.amalgam_agreement, a.tol_amalgam),
        (&mut t.duality, a.tol_duality),
        (&mut t.reconstruction, a.tol_reconstruction),
        (&mut t.closed_form, a.tol_closed_form),
        (&mut t.vanishing_moment, a.tol_moment),
        (&mut t.hk_spread, a.tol_hk_spread),
        (&mut t.sensitivity, a.tol_sensitivity),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(out) = &a.out {
        cfg.output = Some(out.display().to_string());
    }
    cfg.validate()?;
    let res = run(&cfg)?;
    let dir = PathBuf::from(cfg.output.clone().unwrap_or_else(|| ".".into()));
    let (csv, json) = res.write(&dir)?;
    for p in &res.properties {
        let cmp = match p.comparison {
            jnc_core::lab::reports::Comparison::AtMost => "<=",
            jnc_core::lab::reports::Comparison::AtLeast => ">=",
        };
        let verdict = if p.holds { "PASS" } else { "FAIL" };
        let note = p.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
        println!("{verdict} {}: {:e} {cmp} {:e}{note}", p.name, p.value, p.threshold);
    }
    for n in &res.notes {
        println!("note: {n}");
    }
    println!("wrote {} and {}", csv.display(), json.display());
    if res.passed {
        Ok(())
    } else {
        Err(Failure::Violation(format!("{} property violated", name.as_str())))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidParams(_)
        | Error::InvalidExponent(_)
        | Error::InvalidWindow(_)
        | Error::InvalidGrid(_)
        | Error::Resample(_)
        | Error::Json(_) => EXIT_CONFIG,
        Error::Certification(_) => EXIT_VIOLATION,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Norm(a) => norm(a),
        Command::Project(a) => project(a),
        Command::ApplyOp(a) => apply_op(a),
        Command::Atom(c) => atom(c),
        Command::Molecule(c) => molecule(c),
        Command::Experiment(a) => experiment(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(why)) => {
            eprintln!("property violation: {why}");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
