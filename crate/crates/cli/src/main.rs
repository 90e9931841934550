//! `multitime`: batch verifications and experiments for multi-time Dirac
//! systems, reporting JSON (and CSV series for `simulate`).

use clap::{Args, Parser, Subcommand, ValueEnum};
use multitime_core::clifford::{alpha_alpha_residual, commutator_table, CommutatorCheck, GammaRep};
use multitime_core::consistency::{
    cc_report, check_consistency, draw_samples, to_coefficient_form, ConsistencyError, ConsistencyReport, Verdict,
};
use multitime_core::dsl::SpacetimeConfig;
use multitime_core::potential::{builtin, hoho_params, system_from_json, BuiltinParams, MultiTimeSystem, PotentialError, Region};
use multitime_core::solver::{holonomy_experiment, path_independence_experiment, Grid, SolverError, WaveFunction};
use multitime_core::symmetry::{
    classify_gauge, classify_interaction, exponential_form_residual, interaction_witness_hoho, poincare_residual,
    random_shifts, translation_residual, GaugeGrid, GaugeVerdict, PoincareTransform, SymmetryError,
};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "multitime", version, about = "Consistency checks and experiments for multi-time Dirac systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clifford relations and the α-commutator table.
    VerifyClifford(Common),
    /// Derivative-coefficient and zeroth-order consistency residuals.
    Check(Common),
    /// Coefficient form and the cc1..cc16 residuals.
    Cc(Common),
    /// Gauge classification, translation and exponential-form residuals.
    Classify(Common),
    /// Covariance residuals over a sweep of Poincaré transforms.
    Poincare(Common),
    /// Path-independence and loop-holonomy experiments on a line grid.
    Simulate(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RegionArg {
    All,
    Spacelike,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RepArg {
    Dirac,
    Weyl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Expect {
    Consistent,
    Inconsistent,
    Interacting,
    GaugeRemovable,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// JSON system specification.
    #[arg(long, conflicts_with = "builtin")]
    spec: Option<PathBuf>,
    /// Named system: free, example1_vector, hoho, coefficient_form, coulomb_like.
    #[arg(long)]
    builtin: Option<String>,
    /// Builtin parameter as name=value (value in the expression language).
    #[arg(long = "param", value_name = "K=V")]
    params: Vec<String>,
    #[arg(long, value_enum, default_value = "all")]
    region: RegionArg,
    #[arg(long, default_value_t = 100)]
    nsamples: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "dirac")]
    rep: RepArg,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    expect: Option<Expect>,
    #[arg(long = "grid-n", default_value_t = 128)]
    grid_n: usize,
    #[arg(long = "box-L", default_value_t = 20.0)]
    box_l: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    t: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.05, 0.025])]
    dt: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.08, 0.04, 0.02])]
    delta: Vec<f64>,
}

enum Failure {
    /// Malformed input or unsupported system: exit 2.
    Spec(String),
    /// Numerical-domain failure: exit 3.
    Numerical(String),
}

impl From<PotentialError> for Failure {
    fn from(e: PotentialError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Spec(e.to_string())
        }
    }
}

impl From<ConsistencyError> for Failure {
    fn from(e: ConsistencyError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Spec(e.to_string())
        }
    }
}

impl From<SymmetryError> for Failure {
    fn from(e: SymmetryError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Spec(e.to_string())
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Spec(e.to_string())
        }
    }
}

impl From<multitime_core::dsl::EvalError> for Failure {
    fn from(e: multitime_core::dsl::EvalError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

/// Outcome of a command: the report body and, when the command has one,
/// the verdict matched against `--expect`.
struct Outcome {
    report: Value,
    verdict: Option<Expect>,
    series: Vec<(String, String)>,
}

impl Common {
    fn region(&self) -> Region {
        match self.region {
            RegionArg::All => Region::All,
            RegionArg::Spacelike => Region::Spacelike,
        }
    }

    fn rep(&self) -> GammaRep {
        match self.rep {
            RepArg::Dirac => GammaRep::dirac(),
            RepArg::Weyl => GammaRep::weyl(),
        }
    }

    fn builtin_params(&self) -> Result<BuiltinParams, Failure> {
        let mut out = BuiltinParams::new();
        for p in &self.params {
            let Some((k, v)) = p.split_once('=') else {
                return Err(Failure::Spec(format!("--param '{p}' must have the form name=value")));
            };
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(out)
    }

    fn system(&self) -> Result<MultiTimeSystem, Failure> {
        match (&self.spec, &self.builtin) {
            (Some(path), None) => {
                if !self.params.is_empty() {
                    return Err(Failure::Spec("--param applies to --builtin only".into()));
                }
                let src = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Spec(format!("cannot read {}: {e}", path.display())))?;
                Ok(system_from_json(&src)?)
            }
            (None, Some(name)) => Ok(builtin(name, &self.builtin_params()?)?),
            _ => Err(Failure::Spec("exactly one of --spec or --builtin is required".into())),
        }
    }

    fn samples(&self, n: usize) -> Result<Vec<SpacetimeConfig>, Failure> {
        Ok(draw_samples(self.region(), n, self.nsamples, self.seed)?)
    }

    fn echo(&self, command: &str) -> Value {
        let params: BTreeMap<String, String> = self.builtin_params().unwrap_or_default();
        json!({
            "command": command,
            "spec": self.spec.as_ref().map(|p| p.display().to_string()),
            "builtin": self.builtin,
            "params": params,
            "region": self.region,
            "nsamples": self.nsamples,
            "tol": self.tol,
            "rep": self.rep,
            "expect": self.expect,
            "grid_n": self.grid_n,
            "box_L": self.box_l,
            "T": self.t,
            "dt": self.dt,
            "delta": self.delta,
        })
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn verify_clifford(_c: &Common) -> Result<Outcome, Failure> {
    let reps = [("dirac", GammaRep::dirac()), ("weyl", GammaRep::weyl())];
    let mut out = Vec::new();
    for (name, rep) in &reps {
        let table: Vec<CommutatorCheck> = commutator_table(rep);
        out.push(json!({
            "representation": name,
            "anticommutator_residual": rep.clifford_residual(),
            "structure_residual": rep.structure_residual(),
            "commutator_table": table,
            "alpha_alpha_plus_2i": alpha_alpha_residual(rep, 1.0),
            "alpha_alpha_minus_2i": alpha_alpha_residual(rep, -1.0),
        }));
    }
    Ok(Outcome {
        report: json!({ "representations": out }),
        verdict: None,
        series: Vec::new(),
    })
}

fn consistency_expect(consistent: bool) -> Expect {
    if consistent {
        Expect::Consistent
    } else {
        Expect::Inconsistent
    }
}

fn check(c: &Common) -> Result<Outcome, Failure> {
    let sys = c.system()?;
    let reports: Vec<ConsistencyReport> = check_consistency(&sys, c.region(), c.nsamples, c.tol, &c.rep(), c.seed)?;
    let consistent = reports.iter().all(|r| r.verdict == Verdict::ConsistentAtTol);
    let verdict = if consistent { Verdict::ConsistentAtTol } else { Verdict::Inconsistent };
    Ok(Outcome {
        report: json!({ "system": sys.name, "reports": reports, "verdict": verdict }),
        verdict: Some(consistency_expect(consistent)),
        series: Vec::new(),
    })
}

fn cc(c: &Common) -> Result<Outcome, Failure> {
    let sys = c.system()?;
    let samples = c.samples(sys.n)?;
    let report = cc_report(&sys, &samples, c.region(), c.tol)?;
    let cs = to_coefficient_form(&sys)?;
    let fields: BTreeMap<String, String> = cs
        .nonzero_fields()
        .into_iter()
        .map(|f| {
            let e = cs.get(&f).to_string();
            (f, e)
        })
        .collect();
    let consistent = report.all_below_tol;
    Ok(Outcome {
        report: json!({
            "system": sys.name,
            "fields": fields,
            "cc": to_value(&report),
            "verdict": if consistent { Verdict::ConsistentAtTol } else { Verdict::Inconsistent },
        }),
        verdict: Some(consistency_expect(consistent)),
        series: Vec::new(),
    })
}

fn verdict_expect(v: GaugeVerdict) -> Option<Expect> {
    match v {
        GaugeVerdict::GaugeRemovable => Some(Expect::GaugeRemovable),
        GaugeVerdict::Interacting => Some(Expect::Interacting),
        GaugeVerdict::Undecided => None,
    }
}

fn classify(c: &Common) -> Result<Outcome, Failure> {
    let sys = c.system()?;
    if sys.n != 2 {
        return Err(Failure::Spec("classify needs a two-particle system".into()));
    }
    let rep = c.rep();
    let samples = c.samples(2)?;
    let cs = to_coefficient_form(&sys)?;
    let gauge = classify_gauge(&cs, &samples, &GaugeGrid::default(), c.tol)?;
    let shifts = random_shifts(10, c.seed);
    let mut translation = Vec::new();
    for v in &sys.potentials {
        let mut worst: f64 = 0.0;
        for a in &shifts {
            worst = worst.max(translation_residual(v, *a, &samples, &rep)?);
        }
        translation.push(worst);
    }
    let exponential = match exponential_form_residual(&cs, [sys.masses[0], sys.masses[1]], &samples) {
        Ok(r) => json!({ "residuals": r }),
        Err(SymmetryError::PreconditionViolated(why)) => json!({ "precondition_violated": why }),
        Err(e) => return Err(e.into()),
    };
    let witness = if c.builtin.as_deref() == Some("hoho") {
        let hp = hoho_params(&c.builtin_params()?)?;
        Some((
            interaction_witness_hoho(&hp, &rep, &samples),
            interaction_witness_hoho(&hp, &rep, &[SpacetimeConfig::zeros(2)]),
        ))
    } else {
        None
    };
    let overall = classify_interaction(&cs, &gauge, witness.map(|w| w.0));
    Ok(Outcome {
        report: json!({
            "system": sys.name,
            "gauge": gauge,
            "translation_residuals": translation,
            "translation_shifts": shifts,
            "exponential_form": exponential,
            "witness": witness.map(|(inf, origin)| json!({ "inf_over_samples": inf, "at_origin": origin })),
            "verdict": overall,
        }),
        verdict: verdict_expect(overall),
        series: Vec::new(),
    })
}

fn poincare(c: &Common) -> Result<Outcome, Failure> {
    let sys = c.system()?;
    let rep = c.rep();
    let samples = c.samples(sys.n)?;
    let sweep: Vec<(&str, [f64; 3], f64)> = vec![
        ("boost", [0.0, 0.0, 1.0], 0.1),
        ("boost", [0.0, 0.0, 1.0], 0.5),
        ("boost", [0.0, 0.0, 1.0], 1.0),
        ("boost", [1.0, 0.0, 0.0], 0.5),
        ("rotation", [0.0, 0.0, 1.0], 0.5),
        ("rotation", [0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2),
        ("rotation", [1.0, 0.0, 0.0], 1.0),
    ];
    let mut rows = Vec::new();
    for (kind, axis, p) in sweep {
        let t = if kind == "boost" {
            PoincareTransform::boost(&rep, axis, p)?
        } else {
            PoincareTransform::rotation(&rep, axis, p)?
        };
        let residuals = sys
            .potentials
            .iter()
            .map(|v| poincare_residual(v, &t, &samples, &rep))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(json!({
            "kind": kind,
            "axis": axis,
            "parameter": p,
            "generator_sign": t.generator_sign,
            "orientation": t.orientation,
            "residuals": residuals,
        }));
    }
    let shifts = random_shifts(10, c.seed);
    let mut translation = Vec::new();
    for v in &sys.potentials {
        let mut worst: f64 = 0.0;
        for a in &shifts {
            worst = worst.max(translation_residual(v, *a, &samples, &rep)?);
        }
        translation.push(worst);
    }
    Ok(Outcome {
        report: json!({
            "system": sys.name,
            "transforms": rows,
            "translation": { "shifts": shifts, "residuals": translation },
        }),
        verdict: None,
        series: Vec::new(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn simulate(c: &Common) -> Result<Outcome, Failure> {
    let sys = c.system()?;
    let rep = c.rep();
    let grid = Grid::new(c.box_l, c.grid_n)?;
    let psi0 = WaveFunction::default_packet(grid);
    let path = path_independence_experiment(&sys, &psi0, c.t, &c.dt, &rep)?;
    let holonomy = holonomy_experiment(&sys, &psi0, &c.delta, &rep)?;
    let consistent = holonomy.rows.iter().all(|r| r.deviation < 1e-9) || holonomy.ratio_slope.is_some_and(|s| s >= 0.5);
    let mut csv = String::from("dt,discrepancy,fitted_order\n");
    for r in &path.rows {
        csv.push_str(&format!("{:e},{:e},{}\n", r.dt, r.discrepancy, fmt_opt(path.fitted_order)));
    }
    let mut hcsv = String::from("delta,deviation,ratio\n");
    for r in &holonomy.rows {
        hcsv.push_str(&format!("{:e},{:e},{:e}\n", r.delta, r.deviation, r.ratio));
    }
    Ok(Outcome {
        report: json!({
            "system": sys.name,
            "grid": grid,
            "path_independence": path,
            "holonomy": holonomy,
            "verdict": if consistent { Verdict::ConsistentAtTol } else { Verdict::Inconsistent },
        }),
        verdict: Some(consistency_expect(consistent)),
        series: vec![("csv".into(), csv), ("holonomy.csv".into(), hcsv)],
    })
}

/// Writes to a sibling temporary file, then renames over `path`.
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

fn series_path(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let (name, common, f): (&str, &Common, fn(&Common) -> Result<Outcome, Failure>) = match &cli.command {
        Command::VerifyClifford(c) => ("verify-clifford", c, verify_clifford),
        Command::Check(c) => ("check", c, check),
        Command::Cc(c) => ("cc", c, cc),
        Command::Classify(c) => ("classify", c, classify),
        Command::Poincare(c) => ("poincare", c, poincare),
        Command::Simulate(c) => ("simulate", c, simulate),
    };
    let outcome = f(common)?;
    if common.expect.is_some() && outcome.verdict.is_none() && matches!(name, "verify-clifford" | "poincare") {
        return Err(Failure::Spec(format!("--expect does not apply to {name}")));
    }
    let matched = match common.expect {
        None => true,
        Some(e) => outcome.verdict == Some(e),
    };
    let doc = json!({
        "artifact": "multitime",
        "version": VERSION,
        "seed": common.seed,
        "config": common.echo(name),
        "report": outcome.report,
        "expectation_met": common.expect.map(|_| matched),
    });
    let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
    match &common.out {
        Some(path) => {
            write_atomic(path, &text).map_err(|e| Failure::Spec(format!("cannot write {}: {e}", path.display())))?;
            for (ext, body) in &outcome.series {
                let p = series_path(path, ext);
                write_atomic(&p, body).map_err(|e| Failure::Spec(format!("cannot write {}: {e}", p.display())))?;
            }
        }
        None => print!("{text}"),
    }
    Ok(matched)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("expectation not met");
            ExitCode::from(1)
        }
        Err(Failure::Spec(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical error: {msg}");
            ExitCode::from(3)
        }
    }
}
