//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` are run at full strength and
//! reported as FAIL; the process only exits nonzero when a criterion fails
//! outside that list, or when a listed one starts passing.

use multitime_core::clifford::{commutator_table, decompose, gram16, identity, reconstruct, CMatrix, GammaRep};
use multitime_core::clifford::{BasisElement, TensorBasisElement};
use multitime_core::consistency::{
    cc_residuals, check_consistency_on, derivative_coefficients, draw_samples, to_coefficient_form, CoefficientSet,
    Verdict,
};
use multitime_core::dsl::{parse, Expr, Func, SpacetimeConfig};
use multitime_core::potential::{builtin, hoho_system, BuiltinParams, HohoParams, MultiTimeSystem, Potential, PotentialTerm, Region};
use multitime_core::solver::{holonomy_experiment, Grid, WaveFunction};
use multitime_core::symmetry::{
    classify_gauge, classify_interaction, exponential_form_residual, interaction_witness_hoho, poincare_residual,
    random_shifts, translation_residual, GaugeGrid, GaugeVerdict, PoincareTransform,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::collections::HashMap;
use std::process::Command;
use std::time::Instant;

const KNOWN_UNATTAINABLE: [u32; 2] = [1, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multitime"))
}

fn run_json(args: &[&str]) -> (i32, Value, f64) {
    let start = Instant::now();
    let out = bin().args(args).output().expect("spawn multitime");
    let secs = start.elapsed().as_secs_f64();
    let code = out.status.code().unwrap_or(-1);
    let v = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code, v, secs)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst_cliff: f64 = 0.0;
    let mut failing = Vec::new();
    for (name, rep) in [("dirac", GammaRep::dirac()), ("weyl", GammaRep::weyl())] {
        worst_cliff = worst_cliff.max(rep.clifford_residual());
        for row in commutator_table(&rep) {
            if !(row.residual < 1e-12) {
                failing.push(format!("{name}: {} (residual {:.3})", row.identity, row.residual));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_cliff < 1e-12 && failing.is_empty() && secs < 1.0;
    outcome(
        pass,
        format!(
            "anticommutator residual {worst_cliff:.1e}, {} table identities off: [{}], {secs:.3}s",
            failing.len(),
            failing.join("; ")
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let rep = GammaRep::dirac();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = CMatrix::from_fn(16, 16, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let c = decompose(&m, 2, &rep).expect("16x16");
        worst = worst.max((reconstruct(&c, &rep) - &m).norm());
    }
    let gram = (gram16(&rep) - identity(16) * Complex64::from(4.0)).norm();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-12 && gram < 1e-12 && secs < 1.0,
        format!("round trip {worst:.1e}, Gram defect {gram:.1e}, {secs:.3}s"),
    )
}

fn sups(v: &Value) -> (f64, f64) {
    let mut deriv: f64 = 0.0;
    let mut zeroth: f64 = 0.0;
    for r in v["report"]["reports"].as_array().into_iter().flatten() {
        for d in r["deriv_coeff_sup"].as_array().into_iter().flatten() {
            deriv = deriv.max(d.as_f64().unwrap_or(f64::INFINITY));
        }
        zeroth = zeroth.max(r["zeroth_sup"].as_f64().unwrap_or(f64::INFINITY));
    }
    (deriv, zeroth)
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for region in ["all", "spacelike"] {
        let (code, v, secs) = run_json(&["check", "--builtin", "hoho", "--region", region, "--nsamples", "100"]);
        let (d, z) = sups(&v);
        pass &= code == 0 && d < 1e-10 && z < 1e-10 && secs < 5.0 && v["report"]["reports"].is_array();
        detail.push(format!("{region}: deriv {d:.1e}, zeroth {z:.1e}, {secs:.2}s"));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_4() -> Outcome {
    let (code, v, _) = run_json(&[
        "check", "--builtin", "example1_vector", "--param", "A0=1", "--param", "A1=0", "--param", "A2=0", "--param", "A3=0",
    ]);
    let (_, z) = sups(&v);
    let verdict = v["report"]["verdict"].as_str().unwrap_or("?").to_string();
    let pass = code == 0 && (z - 8.0).abs() < 1e-10 && verdict == "INCONSISTENT";
    let (_, v3, _) = run_json(&["check", "--builtin", "example1_vector", "--param", "A3=1"]);
    let (_, z3) = sups(&v3);
    outcome(
        pass,
        format!(
            "A = (1,0,0,0): zeroth {z:.3e}, verdict {verdict}; for comparison A = (0,0,0,1): zeroth {z3:.3e}, verdict {}",
            v3["report"]["verdict"].as_str().unwrap_or("?")
        ),
    )
}

fn random_coeff(rng: &mut ChaCha8Rng) -> Expr {
    let c = Expr::num(Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    match rng.gen_range(0..3) {
        0 => c,
        1 => Expr::mul(c, Expr::coord(rng.gen_range(1..=2), rng.gen_range(0..4))),
        _ => Expr::mul(c, Expr::call(Func::Cos, Expr::coord(rng.gen_range(1..=2), 0))),
    }
}

fn two_particle(owner: usize, own: BasisElement, other: BasisElement) -> TensorBasisElement {
    if owner == 1 {
        TensorBasisElement::new(vec![own, other])
    } else {
        TensorBasisElement::new(vec![other, own])
    }
}

fn max_deriv(sys: &MultiTimeSystem, rep: &GammaRep, samples: &[SpacetimeConfig]) -> f64 {
    samples
        .iter()
        .flat_map(|x| derivative_coefficients(sys, 1, 2, x, rep).expect("evaluable"))
        .map(|m| m.norm())
        .fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let rep = GammaRep::dirac();
    let samples = draw_samples(Region::All, 2, 10, 5).expect("samples");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let others: Vec<BasisElement> = BasisElement::all()
        .filter(|b| *b != BasisElement::IDENTITY && *b != BasisElement::GAMMA5)
        .collect();
    let allowed_terms = |rng: &mut ChaCha8Rng, owner: usize, count: usize| -> Vec<PotentialTerm> {
        (0..count)
            .map(|_| {
                let own = BasisElement::from_index(rng.gen_range(0..16));
                let oth = if rng.gen_bool(0.5) { BasisElement::IDENTITY } else { BasisElement::GAMMA5 };
                PotentialTerm::new(two_particle(owner, own, oth), random_coeff(rng))
            })
            .collect()
    };
    let mut worst_pass: f64 = 0.0;
    for _ in 0..50 {
        let n1 = rng.gen_range(1..5);
        let n2 = rng.gen_range(0..5);
        let v1 = allowed_terms(&mut rng, 1, n1);
        let v2 = allowed_terms(&mut rng, 2, n2);
        let sys = MultiTimeSystem::new("t3", vec![1.0, 1.0], vec![Potential::new(1, v1), Potential::new(2, v2)]).unwrap();
        worst_pass = worst_pass.max(max_deriv(&sys, &rep, &samples));
    }
    let mut weakest_fail = f64::INFINITY;
    for case in 0..50 {
        let owner = 1 + case % 2;
        let n = rng.gen_range(0..4);
        let mut terms = allowed_terms(&mut rng, owner, n);
        let own = BasisElement::from_index(rng.gen_range(0..16));
        let bad = others[rng.gen_range(0..others.len())];
        let c = Complex64::from_polar(rng.gen_range(0.1..2.0), rng.gen_range(0.0..std::f64::consts::TAU));
        terms.push(PotentialTerm::new(two_particle(owner, own, bad), Expr::num(c)));
        let pots = if owner == 1 {
            vec![Potential::new(1, terms), Potential::zero(2)]
        } else {
            vec![Potential::zero(1), Potential::new(2, terms)]
        };
        let sys = MultiTimeSystem::new("t3", vec![1.0, 1.0], pots).unwrap();
        weakest_fail = weakest_fail.min(max_deriv(&sys, &rep, &samples));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_pass < 1e-12 && weakest_fail >= 0.1 && secs < 10.0,
        format!("span cases max {worst_pass:.1e}, other-factor cases min {weakest_fail:.3}, {secs:.2}s"),
    )
}

fn random_hoho(rng: &mut ChaCha8Rng) -> HohoParams {
    HohoParams {
        big_c: std::array::from_fn(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
        small_c: std::array::from_fn(|_| Complex64::from(rng.gen_range(-1.0..1.0))),
        m1: rng.gen_range(0.0..2.0),
        m2: rng.gen_range(0.0..2.0),
    }
}

fn criterion_6() -> Outcome {
    let rep = GammaRep::dirac();
    let tol = 1e-9;
    let samples = draw_samples(Region::All, 2, 100, 6).expect("samples");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let names = CoefficientSet::field_names();
    let mut mismatches = Vec::new();
    let mut consistent_count = 0;
    for case in 0..20 {
        let (cs, masses) = match case % 4 {
            // the consistent interacting family
            0 => {
                let hp = random_hoho(&mut rng);
                (to_coefficient_form(&hoho_system(&hp).unwrap()).unwrap(), [hp.m1, hp.m2])
            }
            // external fields: A..B in x_1 only, E..F in x_2 only
            1 => {
                let mut cs = CoefficientSet::zero();
                for l in ["A", "B", "E", "F"] {
                    let p = if l < "C" { 1 } else { 2 };
                    let mu = rng.gen_range(0..4);
                    let e = Expr::mul(Expr::real(rng.gen_range(-1.0..1.0)), Expr::call(Func::Sin, Expr::coord(p, rng.gen_range(0..4))));
                    cs.set(&format!("{l}{mu}"), e);
                }
                (cs, [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)])
            }
            // the interacting family with one extra field
            2 => {
                let hp = random_hoho(&mut rng);
                let mut cs = to_coefficient_form(&hoho_system(&hp).unwrap()).unwrap();
                let f = &names[rng.gen_range(0..names.len())];
                let e = Expr::add(cs.get(f).clone(), random_coeff(&mut rng));
                cs.set(f, e);
                (cs, [hp.m1, hp.m2])
            }
            _ => {
                let mut cs = CoefficientSet::zero();
                for _ in 0..rng.gen_range(1..6) {
                    let f = &names[rng.gen_range(0..names.len())];
                    cs.set(f, random_coeff(&mut rng));
                }
                (cs, [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)])
            }
        };
        let sys = cs.to_system(masses).unwrap();
        let report = &check_consistency_on(&sys, &samples, Region::All, tol, &rep).unwrap()[0];
        let cc = cc_residuals(&cs, masses, &samples).unwrap();
        let by_matrix = report.verdict == Verdict::ConsistentAtTol;
        if by_matrix {
            consistent_count += 1;
        }
        if by_matrix != cc.all_below(tol) {
            mismatches.push(format!("case {case}: matrix {by_matrix}, cc max {:.2e}", cc.max()));
        }
    }
    let hoho = builtin("hoho", &BuiltinParams::new()).unwrap();
    let hcs = to_coefficient_form(&hoho).unwrap();
    let hoho_max = cc_residuals(&hcs, [1.0, 1.0], &samples).unwrap().max();
    outcome(
        mismatches.is_empty() && hoho_max < 1e-10,
        format!(
            "20 systems ({consistent_count} consistent), mismatches [{}]; hoho cc max {hoho_max:.1e}",
            mismatches.join("; ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let none = HashMap::new();
    let mut cs = CoefficientSet::zero();
    cs.set("W1_0", parse("cos(x1_0 + x2_3)", 2, &none).unwrap());
    cs.set("W2_3", parse("cos(x1_0 + x2_3)", 2, &none).unwrap());
    let samples = draw_samples(Region::All, 2, 20, 7).expect("samples");
    let grid = GaugeGrid::default();
    let report = classify_gauge(&cs, &samples, &grid, 1e-9).expect("classify");
    let coords = grid.coords();
    let err = match report.m_full.as_ref().and_then(|m| m.first()) {
        Some(m) => {
            let mut d = Vec::new();
            for (a, u) in coords.iter().enumerate() {
                for (b, v) in coords.iter().enumerate() {
                    d.push(m.value(a, b).re - (u + v).sin());
                    d.push(m.value(a, b).im);
                }
            }
            let re: Vec<f64> = d.iter().step_by(2).copied().collect();
            let lo = re.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = re.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let im = d.iter().skip(1).step_by(2).fold(0.0f64, |a, b| a.max(b.abs()));
            ((hi - lo) / 2.0).max(im)
        }
        None => f64::INFINITY,
    };
    let rep = GammaRep::dirac();
    let w0 = interaction_witness_hoho(&HohoParams::default(), &rep, &[SpacetimeConfig::zeros(2)]);
    let hoho = builtin("hoho", &BuiltinParams::new()).unwrap();
    let hcs = to_coefficient_form(&hoho).unwrap();
    let hg = classify_gauge(&hcs, &samples, &grid, 1e-9).expect("classify");
    let ws = interaction_witness_hoho(&HohoParams::default(), &rep, &samples);
    let overall = classify_interaction(&hcs, &hg, Some(ws));
    outcome(
        err < 1e-5 && w0 >= 0.5 && report.verdict == GaugeVerdict::GaugeRemovable && overall == GaugeVerdict::Interacting,
        format!(
            "gradient recovered to {err:.1e} on {}x{} grid ({:?}); hoho witness at x = 0: {w0:.3}, verdict {overall:?}",
            coords.len(),
            coords.len(),
            report.verdict
        ),
    )
}

fn criterion_8() -> Outcome {
    let samples = draw_samples(Region::All, 2, 100, 8).expect("samples");
    let hoho = builtin("hoho", &BuiltinParams::new()).unwrap();
    let r = exponential_form_residual(&to_coefficient_form(&hoho).unwrap(), [1.0, 1.0], &samples).unwrap();
    let mut poly = CoefficientSet::zero();
    poly.set("B0", parse("x2_0^2", 2, &HashMap::new()).unwrap());
    let p = exponential_form_residual(&poly, [1.0, 1.0], &samples).unwrap();
    outcome(
        r["B"] < 1e-9 && r["D"] < 1e-9 && p["B"] >= 1.0,
        format!("hoho B {:.1e}, D {:.1e}; polynomial B {:.3}", r["B"], r["D"], p["B"]),
    )
}

fn criterion_9() -> Outcome {
    let rep = GammaRep::dirac();
    let samples = draw_samples(Region::All, 2, 100, 9).expect("samples");
    let hoho = builtin("hoho", &BuiltinParams::new()).unwrap();
    let boost = PoincareTransform::boost(&rep, [0.0, 0.0, 1.0], 0.5).unwrap();
    let cov = poincare_residual(hoho.potential(1), &boost, &samples, &rep).unwrap();
    let mut trans: f64 = 0.0;
    for a in random_shifts(10, 9) {
        trans = trans.max(translation_residual(hoho.potential(1), a, &samples, &rep).unwrap());
    }
    outcome(
        cov > 0.1 && trans < 1e-12,
        format!("boost residual {cov:.3}, translation residual {trans:.1e}"),
    )
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let rep = GammaRep::dirac();
    let grid = Grid::default();
    let psi0 = WaveFunction::default_packet(grid);
    let deltas = [0.08, 0.04, 0.02];
    let run = |name: &str| holonomy_experiment(&builtin(name, &BuiltinParams::new()).unwrap(), &psi0, &deltas, &rep).unwrap();
    let free = run("free");
    let hoho = run("hoho");
    let ex1 = run("example1_vector");
    let secs = start.elapsed().as_secs_f64();
    let free_max = free.rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let slope = hoho.ratio_slope.unwrap_or(f64::NAN);
    let r = &ex1.rows;
    let cauchy = (r[2].ratio - r[1].ratio).abs() / r[2].ratio;
    let agree = (r[2].ratio - ex1.curvature_norm).abs() / ex1.curvature_norm;
    outcome(
        free_max < 1e-9 && slope >= 0.5 && r[2].ratio > 0.0 && cauchy < 0.1 && agree < 0.1 && grid.n == 128 && secs < 120.0,
        format!(
            "free {free_max:.1e}; hoho ratio slope {slope:.2}; example1 ratios {:.4}/{:.4}/{:.4} vs grid |F psi0| {:.4} ({:.2}%); {secs:.1}s",
            r[0].ratio,
            r[1].ratio,
            r[2].ratio,
            ex1.curvature_norm,
            100.0 * agree
        ),
    )
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut same = true;
    let mut detail = Vec::new();
    for cmd in ["check", "classify"] {
        let mut bodies = Vec::new();
        for run in 0..2 {
            let path = dir.path().join(format!("{cmd}{run}.json"));
            let status = bin()
                .args([cmd, "--builtin", "hoho", "--seed", "1234", "--nsamples", "50", "--out"])
                .arg(&path)
                .status()
                .expect("spawn");
            same &= status.success();
            bodies.push(std::fs::read(&path).unwrap_or_default());
        }
        let eq = !bodies[0].is_empty() && bodies[0] == bodies[1];
        same &= eq;
        detail.push(format!("{cmd}: {} bytes, identical {eq}", bodies[0].len()));
    }
    outcome(same, detail.join("; "))
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "Clifford relations and commutator table", criterion_1),
        (2, "basis completeness", criterion_2),
        (3, "interacting example is consistent", criterion_3),
        (4, "vector example inconsistency", criterion_4),
        (5, "span{1, g5} property", criterion_5),
        (6, "cc equivalence", criterion_6),
        (7, "gauge classifier", criterion_7),
        (8, "exponential form", criterion_8),
        (9, "Poincare covariance", criterion_9),
        (10, "solver holonomy", criterion_10),
        (11, "determinism", criterion_11),
    ];
    let mut unexpected = Vec::new();
    for (n, title, f) in criteria {
        let o = std::panic::catch_unwind(f).unwrap_or_else(|_| outcome(false, "panicked".into()));
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let known = KNOWN_UNATTAINABLE.contains(&n);
        let note = match (o.pass, known) {
            (false, true) => " [known unattainable, see decisions ledger]",
            (true, true) => " [listed as unattainable but passed]",
            _ => "",
        };
        println!("{tag} criterion {n} ({title}): {}{note}", o.detail);
        if o.pass == known {
            unexpected.push(n);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: all outcomes as recorded");
    } else {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
