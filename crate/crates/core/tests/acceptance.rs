//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test --release -p kuhnfem --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use kuhnfem::density::bv::BvFunction;
use kuhnfem::density::perturbation::{bv_gaussian_bound, catalog_pairs, delta_sweep, estimate, ResidualOptions};
use kuhnfem::density::projection_bounds::{check_projection_bounds, CompactSmooth, Smooth};
use kuhnfem::density::{Cutoff, DensitySpec};
use kuhnfem::error::Result;
use kuhnfem::forms::spectral::GeneralizedEigen;
use kuhnfem::forms::{assemble, AssemblyOptions, FormMatrices, MARKOV_TOL};
use kuhnfem::mosco::experiment::{gaussian_bv_experiment, BvExperimentConfig};
use kuhnfem::triangulation::GridSpec;
use kuhnfem::verify::{self, Check};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn all_checks(checks: &[Check]) -> Outcome {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} d={} r={}: {:e} > {:e}", c.name, c.d, c.r, c.value, c.tolerance))
        .collect();
    let worst = checks.iter().map(|c| c.value).fold(0.0, f64::max);
    if failed.is_empty() {
        outcome(true, format!("{} checks, worst {worst:.2e}", checks.len()))
    } else {
        outcome(false, failed.join("; "))
    }
}

fn forms_for(rho: &DensitySpec, r: f64) -> Result<FormMatrices> {
    use kuhnfem::density::Density;
    let (lo, hi) = rho.support_box();
    let grid = GridSpec::covering(r, &lo, &hi)?;
    assemble(&grid, rho, &AssemblyOptions::default())
}

fn gaussian_box(d: usize, half: f64) -> Result<DensitySpec> {
    DensitySpec::gaussian_on_box(vec![0.0; d], vec![1.0; d], vec![-half; d], vec![half; d])
}

fn partition_of_unity() -> Result<Outcome> {
    let t0 = Instant::now();
    let mut checks = Vec::new();
    for d in 1..=3 {
        for r in [1.0, 0.25] {
            checks.push(verify::partition_of_unity(d, r, 100_000, SEED));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let mut o = all_checks(&checks);
    o.detail = format!("{}, {secs:.1}s (limit 30s)", o.detail);
    o.passed &= secs < 30.0;
    Ok(o)
}

fn tent_mass() -> Result<Outcome> {
    let mut checks = Vec::new();
    for d in 1..=3 {
        for r in [1.0, 0.25] {
            checks.push(verify::tent_mass(d, r)?);
        }
    }
    Ok(all_checks(&checks))
}

fn weak_gradient() -> Result<Outcome> {
    let mut checks = Vec::new();
    for d in 1..=3 {
        for r in [1.0, 0.25] {
            checks.push(verify::weak_gradient_identity(d, r, 100, SEED)?);
            checks.push(verify::finite_difference_gradient(d, r, 100, SEED)?);
        }
    }
    Ok(all_checks(&checks))
}

fn cell_volume() -> Result<Outcome> {
    let checks: Vec<Check> = (2..=4).map(|d| verify::cell_volume(d, 1_000_000, SEED)).collect();
    Ok(all_checks(&checks))
}

fn mass_laws() -> Result<Outcome> {
    let densities = [
        ("gaussian d=1", DensitySpec::standard_gaussian(1)),
        ("gaussian d=2", gaussian_box(2, 5.0)?),
        ("uniform d=1", DensitySpec::uniform(vec![-0.7], vec![0.9])?),
        ("uniform d=2", DensitySpec::uniform(vec![-0.3, -0.55], vec![0.45, 0.2])?),
    ];
    let mut worst_i = 0.0f64;
    let mut worst_r = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    let mut count = 0;
    for (name, rho) in &densities {
        let d = rho.dim();
        let pairs = catalog_pairs(d);
        for r in [0.5, 0.25, 0.125] {
            let sp = estimate(rho, &Cutoff::One, r, &pairs, &ResidualOptions::for_dim(d))?;
            for p in &sp.pairs {
                count += 1;
                let di = (p.int_i - p.int_g).abs();
                let dr = p.int_r - 2.0 * p.int_g;
                worst_i = worst_i.max(di);
                worst_r = worst_r.max(dr);
                if di > 1e-8 || dr > 1e-8 {
                    failures.push(format!("{name} r={r} {}: |dI|={di:.2e}, R-2g={dr:.2e}", p.pair_id));
                }
            }
        }
    }
    let head = format!("{count} (density, r, pair) cases, max |int I - int g| {worst_i:.2e}, max int R - 2 int g {worst_r:.2e}");
    Ok(if failures.is_empty() { outcome(true, head) } else { outcome(false, format!("{head}; {}", failures.join("; "))) })
}

fn bump1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (1.0 - x * x).powi(2)
    } else {
        0.0
    }
}

fn dbump1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        -4.0 * x * (1.0 - x * x)
    } else {
        0.0
    }
}

fn projection_bounds() -> Result<Outcome> {
    let t0 = Instant::now();
    let opts1 = ResidualOptions::for_dim(1);
    let opts2 = ResidualOptions::for_dim(2);
    let step = BvFunction::positive_indicator();
    let perturbed = DensitySpec::bv_perturbed(DensitySpec::standard_gaussian(1), step, vec![1.0])?;
    let gauss1 = DensitySpec::standard_gaussian(1);
    let gauss2 = gaussian_box(2, 5.0)?;

    let u_sin = |x: &[f64]| (2.0 * x[0]).sin();
    let du_sin = |x: &[f64]| vec![2.0 * (2.0 * x[0]).cos()];
    let u_tanh = |x: &[f64]| x[0].tanh();
    let du_tanh = |x: &[f64]| vec![1.0 / x[0].cosh().powi(2)];
    let u_2d = |x: &[f64]| x[0].sin() * x[1].cos();
    let du_2d = |x: &[f64]| vec![x[0].cos() * x[1].cos(), -x[0].sin() * x[1].sin()];

    let g1 = |x: &[f64]| bump1(x[0]);
    let dg1 = |x: &[f64]| vec![dbump1(x[0])];
    let pg1 = |x: &[f64], _: usize| dbump1(x[0]);
    let g2 = |x: &[f64]| bump1(x[0] / 1.5) * bump1(x[1] / 1.5);
    let dg2 = |x: &[f64]| vec![dbump1(x[0] / 1.5) / 1.5 * bump1(x[1] / 1.5), bump1(x[0] / 1.5) * dbump1(x[1] / 1.5) / 1.5];
    let pg2 = |x: &[f64], i: usize| dg2(x)[i];

    let lo1 = [-1.0];
    let hi1 = [1.0];
    let lo2 = [-1.5, -1.5];
    let hi2 = [1.5, 1.5];
    let gf1 = CompactSmooth { f: Smooth { value: &g1, grad: &dg1 }, lo: &lo1, hi: &hi1, partial: &pg1 };
    let gf2 = CompactSmooth { f: Smooth { value: &g2, grad: &dg2 }, lo: &lo2, hi: &hi2, partial: &pg2 };

    let cases: Vec<(&str, &DensitySpec, Smooth<'_>, CompactSmooth<'_>, &ResidualOptions)> = vec![
        ("gaussian d=1, u=sin 2x", &gauss1, Smooth { value: &u_sin, grad: &du_sin }, gf1, &opts1),
        ("step-perturbed d=1, u=tanh x", &perturbed, Smooth { value: &u_tanh, grad: &du_tanh }, gf1, &opts1),
        ("gaussian d=2, u=sin x cos y", &gauss2, Smooth { value: &u_2d, grad: &du_2d }, gf2, &opts2),
    ];
    let mut lines = Vec::new();
    let mut passed = true;
    for (name, rho, u, g, opts) in cases {
        for r in [0.25, 0.125] {
            let b = check_projection_bounds(rho, &Cutoff::One, u, g, r, opts)?;
            passed &= b.all_hold();
            if !b.all_hold() {
                lines.push(format!("{name} r={r}: {b:?}"));
            } else {
                lines.push(format!(
                    "{name} r={r}: (ii) {:.1e}<={:.1e} (iii) {:.1e}<={:.1e} (iv) {:.1e}<={:.1e}",
                    b.weak_error.lhs, b.weak_error.rhs, b.energy_cross.lhs, b.energy_cross.rhs,
                    b.energy_growth.lhs, b.energy_growth.rhs
                ));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    passed &= secs < 120.0;
    Ok(outcome(passed, format!("{}; {secs:.1}s (limit 120s)", lines.join("; "))))
}

fn m_matrix_markov() -> Result<Outcome> {
    let cases = [
        ("gaussian d=1", DensitySpec::standard_gaussian(1), 1.0 / 16.0),
        ("gaussian d=2", gaussian_box(2, 4.0)?, 0.25),
        (
            "step-perturbed d=1",
            DensitySpec::bv_perturbed(DensitySpec::standard_gaussian(1), BvFunction::positive_indicator(), vec![1.0])?,
            1.0 / 16.0,
        ),
        ("uniform d=3", DensitySpec::uniform(vec![0.0; 3], vec![1.0; 3])?, 0.25),
    ];
    let mut parts = Vec::new();
    let mut passed = true;
    for (k, (name, rho, r)) in cases.iter().enumerate() {
        let forms = forms_for(rho, *r)?;
        let off = forms.stiffness.max_offdiagonal();
        let rep = forms.markov_check(1.0, 1000, SEED + k as u64)?;
        let ok = off <= 1e-14 && rep.passed();
        passed &= ok;
        parts.push(format!(
            "{name}: max offdiag {off:.1e}, alpha G range [{:.3e}, {:.12}] over {} trials{}",
            rep.min,
            rep.max,
            rep.trials,
            if ok { "" } else { " FAILED" }
        ));
    }
    Ok(outcome(passed, format!("{} (tolerance {MARKOV_TOL:e})", parts.join("; "))))
}

fn ornstein_uhlenbeck() -> Result<Outcome> {
    let rho = gaussian_box(1, 6.0)?;
    let forms = forms_for(&rho, 1.0 / 32.0)?;
    let eig = GeneralizedEigen::new(&forms.stiffness, &forms.mass)?;
    let mut passed = true;
    let mut parts = Vec::new();
    for k in 0..4 {
        let lam = eig.values[k];
        let err = if k == 0 { lam.abs() } else { (lam - k as f64).abs() / k as f64 };
        passed &= err <= 0.02;
        parts.push(format!("lambda_{k}={lam:.5}"));
    }
    let f = forms.interpolate(|x| x[0]);
    for alpha in [0.5, 1.0, 2.0] {
        let u = forms.resolvent(alpha, &f)?.u;
        let exact: Vec<f64> = f.iter().map(|v| v / (alpha + 1.0)).collect();
        let diff: Vec<f64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
        let rel = forms.l2_norm(&diff) / forms.l2_norm(&exact);
        passed &= rel <= 0.02;
        parts.push(format!("G_{alpha} x rel err {rel:.2e}"));
    }
    Ok(outcome(passed, parts.join(", ")))
}

fn resolvent_identity() -> Result<Outcome> {
    let cases = [
        ("gaussian d=1", DensitySpec::standard_gaussian(1), 1.0 / 16.0),
        ("gaussian d=2", gaussian_box(2, 4.0)?, 0.25),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for (_, rho, r) in &cases {
        let forms = forms_for(rho, *r)?;
        for &(alpha, beta) in &[(0.5, 2.0), (1.0, 3.0), (0.1, 10.0)] {
            for _ in 0..5 {
                let f: Vec<f64> = (0..forms.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let ga = forms.resolvent(alpha, &f)?.u;
                let gb = forms.resolvent(beta, &f)?.u;
                let gagb = forms.resolvent(alpha, &gb)?.u;
                let lhs: Vec<f64> = ga.iter().zip(&gb).map(|(a, b)| a - b).collect();
                let diff: Vec<f64> = lhs.iter().zip(&gagb).map(|(l, g)| l - (beta - alpha) * g).collect();
                worst = worst.max(forms.l2_norm(&diff) / forms.l2_norm(&lhs));
            }
        }
    }
    Ok(outcome(worst <= 1e-8, format!("30 random inputs, worst relative error {worst:.2e} (tolerance 1e-8)")))
}

fn envelopes() -> Result<Outcome> {
    let fs = [
        ("step", BvFunction::positive_indicator()),
        ("ramp", BvFunction::ramp(-1.0, 1.0, 0.5)?),
        ("staircase", BvFunction::staircase(vec![-1.0, 0.3, 1.7], vec![0.0, 2.0, -1.0, 0.5])?),
    ];
    let levels: Vec<usize> = (1..=6).map(|k| 1 << k).collect();
    let mut checks = Vec::new();
    let mut gaps = Vec::new();
    for (name, f) in &fs {
        let (rows, c) = verify::envelope_checks(f, &levels, 10_000, (-3.0, 3.0), SEED)?;
        gaps.push(format!("{name} gap {:.1e} -> {:.1e}", rows[0].continuity_gap, rows[rows.len() - 1].continuity_gap));
        checks.extend(c);
    }
    let mut o = all_checks(&checks);
    o.detail = format!("{}; {}", o.detail, gaps.join(", "));
    Ok(o)
}

fn delta_sweeps() -> Result<Outcome> {
    let m_values: Vec<usize> = (1..=6).map(|k| 1 << k).collect();
    let pairs = catalog_pairs(1);
    let opts = ResidualOptions::for_dim(1);
    let base = DensitySpec::standard_gaussian(1);
    let lambda = 1.0;
    let variants = [
        ("gaussian", None),
        ("step-perturbed", Some(BvFunction::positive_indicator())),
        ("ramp-perturbed", Some(BvFunction::ramp(-1.0, 1.0, 0.5)?)),
    ];
    // base delta at r = 1/m and the two coarser widths the bound needs
    let base_delta = |r: f64| -> Result<f64> { Ok(estimate(&base, &Cutoff::One, r, &pairs, &opts)?.delta) };
    let mut bases = std::collections::BTreeMap::new();
    for &m in &m_values {
        for s in [1.0, 2.0, 4.0] {
            let r = s / m as f64;
            let key = r.to_bits();
            if !bases.contains_key(&key) {
                bases.insert(key, base_delta(r)?);
            }
        }
    }
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, f) in &variants {
        let rho = match f {
            None => base.clone(),
            Some(f) => DensitySpec::bv_perturbed(base.clone(), f.clone(), vec![lambda])?,
        };
        let sw = delta_sweep(&rho, &Cutoff::One, &m_values, &pairs, &opts)?;
        let order = sw.order.unwrap_or(f64::NAN);
        let order_ok = (0.8..=1.2).contains(&order);
        let mut bound_ok = true;
        if let Some(f) = f {
            for p in &sw.points {
                let d = [p.r, 2.0 * p.r, 4.0 * p.r].map(|r| bases[&r.to_bits()]);
                let b = bv_gaussian_bound(f, lambda, 1.0, p.r, d)?;
                bound_ok &= p.delta <= b;
            }
        }
        let ok = sw.delta_decreasing && order_ok && sw.c_bounded && bound_ok;
        passed &= ok;
        let ds: Vec<String> = sw.points.iter().map(|p| format!("{:.3}", p.delta)).collect();
        parts.push(format!(
            "{name}: delta [{}] decreasing {}, order {order:.3}{}, C bounded {}, within bound {}",
            ds.join(" "),
            sw.delta_decreasing,
            if order_ok { "" } else { " (outside [0.8, 1.2])" },
            sw.c_bounded,
            if f.is_some() { bound_ok.to_string() } else { "n/a".into() }
        ));
    }
    Ok(outcome(passed, parts.join("; ")))
}

fn shipped_experiment() -> Result<Outcome> {
    let t0 = Instant::now();
    let cfg = BvExperimentConfig::shipped();
    let rep = gaussian_bv_experiment(&cfg)?;
    // Z_N = (E exp(-f(X)/4))^N with E exp(-1_{X>0}/4) = (1 + e^{-1/4})/2 for centered X
    let per_coordinate = 0.5 * (1.0 + (-0.25f64).exp());
    let closed_form_ok = rep
        .partition
        .iter()
        .all(|row| (row.exact - per_coordinate.powi(row.n as i32)).abs() <= 1e-9 * row.exact);
    let z_ok = closed_form_ok && rep.flag("partition_function").is_some_and(|f| f.passed);
    let pairings_ok = rep.pairings.weak && rep.pairings.rows.len() >= 2;
    let pairing_gap = rep.pairings.rows.last().map_or(f64::NAN, |r| r.pairing_gap);
    let energy_gaps: Vec<f64> = rep.recovery.iter().map(|r| r.rows.last().map_or(f64::NAN, |e| e.gap.abs())).collect();
    let energy_ok = rep.recovery.len() == 3 && energy_gaps.iter().all(|g| *g <= 5e-3);
    let min_slack = rep
        .liminf
        .iter()
        .flat_map(|l| l.rows.iter().filter(|row| row.n >= 2).map(|row| row.slack))
        .fold(f64::INFINITY, f64::min);
    let liminf_ok = min_slack >= -1e-3;
    let secs = t0.elapsed().as_secs_f64();
    let passed = z_ok && pairings_ok && energy_ok && liminf_ok && secs < 600.0;
    let eg: Vec<String> = energy_gaps.iter().map(|g| format!("{g:.1e}")).collect();
    Ok(outcome(
        passed,
        format!(
            "(a) Z_N {z_ok}; (b) pairing tail gap {pairing_gap:.1e} {pairings_ok}; (c) energy gaps [{}] {energy_ok}; \
             (d) min liminf slack {min_slack:.1e} {liminf_ok}; all flags {}; {secs:.1}s (limit 600s)",
            eg.join(" "),
            rep.passed
        ),
    ))
}

fn main() -> ExitCode {
    // cargo passes harness flags such as --nocapture; none apply here
    let criteria: [(&str, fn() -> Result<Outcome>); 12] = [
        ("partition of unity", partition_of_unity),
        ("tent mass", tent_mass),
        ("weak gradient identity", weak_gradient),
        ("cell volume", cell_volume),
        ("residual/perturbation mass laws", mass_laws),
        ("projection bounds", projection_bounds),
        ("M-matrix and sub-Markov resolvent", m_matrix_markov),
        ("Ornstein-Uhlenbeck spectral oracle", ornstein_uhlenbeck),
        ("resolvent identity", resolvent_identity),
        ("BV envelope sandwich", envelopes),
        ("delta/C sweeps", delta_sweeps),
        ("shipped Gaussian-BV experiment", shipped_experiment),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = run().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        failed += usize::from(!o.passed);
        println!(
            "criterion {:>2} {}: {} ({:.1}s) {}",
            k + 1,
            if o.passed { "PASS" } else { "FAIL" },
            name,
            t0.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
