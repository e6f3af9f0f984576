//! The Gaussian measure perturbed by a bounded-variation potential along coordinate
//! projections, run end to end: partition functions, weighted weak convergence,
//! resolvent pairings, energy recovery, the liminf inequality, the envelope sandwich and
//! the delta/C sweep of the one-dimensional conditionals.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::product::{
    embedding_report, m1_liminf_diagnostic, m2_recovery_diagnostic, resolvent_pairings, BvGaussianModel, LiminfReport,
    ProductSequence, ProductTest, RecoveryReport, SequenceSpec, Shape1d,
};
use super::{sandwich_check, ConvergenceReport, NamedTest, SandwichLevel, SandwichReport, Space};
use crate::density::bv::{partition_function, weighted_expectation, BvFunction};
use crate::density::perturbation::{bv_gaussian_bound, catalog_pairs, estimate, proof_pairs, PrimalPair, ResidualOptions};
use crate::density::Cutoff;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairSet {
    #[default]
    Proof,
    Catalog,
}

impl PairSet {
    pub fn pairs(&self, d: usize) -> Vec<PrimalPair> {
        match self {
            PairSet::Proof => proof_pairs(d),
            PairSet::Catalog => catalog_pairs(d),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub m_values: Vec<usize>,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<Cutoff>,
    #[serde(default)]
    pub pairs: PairSet,
}

fn default_cutoffs() -> Vec<Cutoff> {
    vec![Cutoff::One]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub pairing: f64,
    pub energy: f64,
    pub liminf_slack: f64,
    pub embedding: f64,
    /// Allowed Monte Carlo deviation in standard errors.
    pub mc_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { pairing: 5e-3, energy: 5e-3, liminf_slack: 1e-3, embedding: 5e-3, mc_sigmas: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvExperimentConfig {
    pub variances: Vec<f64>,
    pub f: BvFunction,
    pub weights: Vec<f64>,
    pub sequence: SequenceSpec,
    pub alpha: f64,
    pub pairing_tests: Vec<ProductTest>,
    pub energy_tests: Vec<ProductTest>,
    pub liminf_tests: Vec<ProductTest>,
    #[serde(default = "default_from_n")]
    pub liminf_from_n: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub z_samples: usize,
    pub weighted_samples: usize,
    pub markov_trials: usize,
    /// Envelope meshes `1/m` for the sandwich on the first coordinate.
    pub envelope_levels: Vec<usize>,
    pub sweep: SweepConfig,
    pub seed: u64,
}

fn default_from_n() -> usize {
    2
}

/// `sigma_k^2 = 1 / (pi k)^2`, the Karhunen-Loeve variances of a Brownian bridge.
pub fn bridge_variances(d: usize) -> Vec<f64> {
    (1..=d).map(|k| 1.0 / (PI * k as f64).powi(2)).collect()
}

impl BvExperimentConfig {
    /// Four coordinates, `f = 1_{(0, inf)}`, uniform weights `1/D`.
    pub fn shipped() -> Self {
        let d = 4;
        let tb = |freq, phase, width| Shape1d::TrigBump { freq, phase, width };
        let pb = |power, width| Shape1d::PolyBump { power, width };
        Self {
            variances: bridge_variances(d),
            f: BvFunction::positive_indicator(),
            weights: vec![1.0 / d as f64; d],
            sequence: SequenceSpec {
                n_values: vec![1, 2, 3, 4],
                r_std: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0],
                r_limit: None,
                lumped: false,
            },
            alpha: 1.0,
            pairing_tests: vec![
                ProductTest::new("trig1", &[(1, tb(1.0, 0.0, 1.5))]),
                ProductTest::new("poly1", &[(1, pb(1, 1.0))]),
                ProductTest::new("trig2", &[(2, tb(0.5, 0.5, 2.0))]),
                ProductTest::new("poly3", &[(3, pb(2, 1.0))]),
                ProductTest::new("cos4", &[(4, Shape1d::Cos { freq: 1.0 })]),
            ],
            energy_tests: vec![
                ProductTest::new("u12", &[(1, tb(1.0, 0.0, 1.5)), (2, pb(1, 1.0))]),
                ProductTest::new("u3", &[(3, Shape1d::Sin { freq: 0.5 })]),
                ProductTest::new("u14", &[(1, pb(0, 2.0)), (4, tb(0.5, 0.0, 2.0))]),
            ],
            liminf_tests: vec![
                ProductTest::new("trig1", &[(1, tb(1.0, 0.0, 1.5))]),
                ProductTest::new("poly2", &[(2, pb(1, 1.5))]),
            ],
            liminf_from_n: 2,
            tolerances: Tolerances::default(),
            z_samples: 1_000_000,
            weighted_samples: 200_000,
            markov_trials: 100,
            envelope_levels: vec![2, 4, 8, 16],
            sweep: SweepConfig { m_values: vec![2, 4, 8, 16], cutoffs: default_cutoffs(), pairs: PairSet::Proof },
            seed: 20_240_601,
        }
    }

    pub fn validate(&self) -> Result<BvGaussianModel> {
        let model = BvGaussianModel::new(self.variances.clone(), self.f.clone(), self.weights.clone())?;
        let d = model.dim();
        for t in self.pairing_tests.iter().chain(&self.energy_tests).chain(&self.liminf_tests) {
            t.validate(d)?;
        }
        for t in self.pairing_tests.iter().chain(&self.liminf_tests) {
            if t.active().len() > 1 {
                return Err(Error::InvalidArgument(format!("resolvent test '{}' must act on one coordinate", t.name)));
            }
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument("alpha must be positive".into()));
        }
        let t = &self.tolerances;
        if [t.pairing, t.energy, t.liminf_slack, t.embedding, t.mc_sigmas].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.sweep.m_values.is_empty() || self.sweep.m_values.contains(&0) {
            return Err(Error::InvalidArgument("sweep needs positive m values".into()));
        }
        if self.envelope_levels.contains(&0) {
            return Err(Error::InvalidArgument("envelope levels must be positive".into()));
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub n: usize,
    pub exact: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedRow {
    pub test: String,
    pub n: usize,
    pub exact: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub within: bool,
    /// `|value at N - value with every coordinate active|`.
    pub gap_to_limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovRow {
    pub n: usize,
    pub coordinate: usize,
    pub violations: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub n: usize,
    pub coordinate: usize,
    pub cutoff: usize,
    pub perturbed: bool,
    pub delta: f64,
    pub c: f64,
    /// Perturbation bound from the Gaussian conditional, for `kappa = 1`.
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSup {
    pub m: usize,
    pub coordinate: usize,
    pub cutoff: usize,
    pub sup_delta: f64,
    pub sup_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSweep {
    pub rows: Vec<SweepRow>,
    pub sup_rows: Vec<SweepSup>,
    /// For every coordinate and cutoff, the sup over perturbed conditionals decreases in `m`.
    pub perturbed_delta_decreasing: bool,
    pub within_bound: bool,
}

/// `delta` and `C` of the conditionals along each coordinate, for every `(m, N, kappa)`.
///
/// For a product measure the conditional along coordinate `k` does not depend on the
/// other coordinates, so the `L^2(nu)` and `L^inf(nu)` norms over the mixing measure are
/// the values of the single one-dimensional factor.
pub fn condition_mucken_sweep(
    model: &BvGaussianModel,
    n_values: &[usize],
    sweep: &SweepConfig,
) -> Result<ConditionSweep> {
    let pairs = sweep.pairs.pairs(1);
    let opts = ResidualOptions::default();
    let d = model.dim();
    // distinct jobs: (coordinate, perturbed, cutoff index, r)
    let mut jobs: Vec<(usize, bool, usize, usize, u32)> = Vec::new();
    for k in 0..d {
        for (ci, _) in sweep.cutoffs.iter().enumerate() {
            for &m in &sweep.m_values {
                for perturbed in [false, true] {
                    jobs.push((k, perturbed, ci, m, 0));
                }
                // base widths 2r and 4r for the bound
                jobs.push((k, false, ci, m, 1));
                jobs.push((k, false, ci, m, 2));
            }
        }
    }
    jobs.sort_unstable();
    jobs.dedup();
    let results: Vec<Result<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(k, perturbed, ci, m, shift)| {
            let rho = model.factor_density(k, perturbed)?;
            let r = 2f64.powi(shift as i32) / m as f64;
            let sp = estimate(&rho, &sweep.cutoffs[ci], r, &pairs, &opts)?;
            Ok((sp.delta, sp.c))
        })
        .collect();
    let mut table = BTreeMap::new();
    for (j, res) in jobs.iter().zip(results) {
        table.insert(*j, res?);
    }
    let mut rows = Vec::new();
    let mut within_bound = true;
    for &m in &sweep.m_values {
        for &n in n_values {
            for k in 0..d {
                for (ci, kappa) in sweep.cutoffs.iter().enumerate() {
                    let perturbed = k < n && model.weights[k] > 0.0;
                    let (delta, c) = table[&(k, perturbed, ci, m, 0)];
                    let bound = if perturbed && *kappa == Cutoff::One {
                        let deltas = [0u32, 1, 2].map(|s| table[&(k, false, ci, m, s)].0);
                        Some(bv_gaussian_bound(&model.f, model.weights[k], model.variances[k], 1.0 / m as f64, deltas)?)
                    } else {
                        None
                    };
                    if let Some(b) = bound {
                        within_bound &= delta <= b;
                    }
                    rows.push(SweepRow { m, n, coordinate: k + 1, cutoff: ci, perturbed, delta, c, bound });
                }
            }
        }
    }
    let mut sup_rows = Vec::new();
    let mut perturbed_delta_decreasing = true;
    for k in 0..d {
        for ci in 0..sweep.cutoffs.len() {
            let mut prev = f64::INFINITY;
            for &m in &sweep.m_values {
                let sel: Vec<&SweepRow> =
                    rows.iter().filter(|r| r.m == m && r.coordinate == k + 1 && r.cutoff == ci).collect();
                let sup_delta = sel.iter().map(|r| r.delta).fold(0.0, f64::max);
                let sup_c = sel.iter().map(|r| r.c).fold(0.0, f64::max);
                sup_rows.push(SweepSup { m, coordinate: k + 1, cutoff: ci, sup_delta, sup_c });
                let pert = sel.iter().filter(|r| r.perturbed).map(|r| r.delta).fold(f64::NAN, f64::max);
                if !pert.is_nan() {
                    perturbed_delta_decreasing &= pert <= prev;
                    prev = pert;
                }
            }
        }
    }
    Ok(ConditionSweep { rows, sup_rows, perturbed_delta_decreasing, within_bound })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dim: usize,
    pub n_values: Vec<usize>,
    pub r_std: Vec<f64>,
    pub r_limit: f64,
    pub z_limit: f64,
    pub partition: Vec<PartitionRow>,
    pub weighted: Vec<WeightedRow>,
    pub embedding: ConvergenceReport,
    pub pairings: ConvergenceReport,
    pub recovery: Vec<RecoveryReport>,
    pub liminf: Vec<LiminfReport>,
    pub markov: Vec<MarkovRow>,
    pub sandwich: SandwichReport,
    pub sweep: ConditionSweep,
    pub flags: Vec<Flag>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn flag(&self, name: &str) -> Option<&Flag> {
        self.flags.iter().find(|f| f.name == name)
    }
}

/// Relative allowance for the Gaussian tail beyond the truncation box of the quadrature,
/// which matters only when the Monte Carlo variance vanishes.
const TAIL_SLACK: f64 = 1e-9;

fn mc_agrees(exact: f64, mean: f64, stderr: f64, sigmas: f64) -> bool {
    (exact - mean).abs() <= sigmas * stderr + TAIL_SLACK * exact.abs()
}

pub fn gaussian_bv_experiment(cfg: &BvExperimentConfig) -> Result<ExperimentReport> {
    let model = cfg.validate()?;
    let d = model.dim();
    let seq = ProductSequence::build(&model, &cfg.sequence)?;
    let n_values = cfg.sequence.n_values.clone();
    let tol = &cfg.tolerances;
    let mut flags = Vec::new();

    flags.push(Flag {
        name: "sufficient_tail".into(),
        passed: n_values.len() >= 2,
        detail: format!("{} members; at least 2 are needed for a tail", n_values.len()),
    });

    // partition functions against an independent Monte Carlo estimate
    let partition = n_values
        .par_iter()
        .map(|&n| {
            let exact = model.partition_function(n)?;
            let mc = partition_function(
                &model.f,
                &model.weights,
                &model.variances,
                n,
                cfg.z_samples,
                seed::derive(cfg.seed, &format!("z/N={n}")),
            )?;
            let within = mc_agrees(exact, mc.mean, mc.stderr, tol.mc_sigmas);
            Ok(PartitionRow { n, exact, mc_mean: mc.mean, mc_stderr: mc.stderr, within })
        })
        .collect::<Result<Vec<_>>>()?;
    let z_limit = model.partition_function(d)?;
    flags.push(Flag {
        name: "partition_function".into(),
        passed: partition.iter().all(|r| r.within),
        detail: format!("Z_N within {} standard errors of {} samples", tol.mc_sigmas, cfg.z_samples),
    });

    // weighted weak convergence of exp(-Q_f o P_N) mu
    let jobs: Vec<(usize, usize)> =
        (0..cfg.pairing_tests.len()).flat_map(|i| n_values.iter().map(move |&n| (i, n))).collect();
    let scales = model.scales();
    let weighted = jobs
        .par_iter()
        .map(|&(i, n)| {
            let g = &cfg.pairing_tests[i];
            let exact = model.weighted_integral(g, n)?;
            let lim = model.weighted_integral(g, d)?;
            let mc = weighted_expectation(
                &model.f,
                &model.weights,
                &model.variances,
                n,
                cfg.weighted_samples,
                seed::derive(cfg.seed, &format!("weighted/{}/N={n}", g.name)),
                |x| g.eval(x, &scales),
            )?;
            Ok(WeightedRow {
                test: g.name.clone(),
                n,
                exact,
                mc_mean: mc.mean,
                mc_stderr: mc.stderr,
                within: mc_agrees(exact, mc.mean, mc.stderr, tol.mc_sigmas),
                gap_to_limit: (exact - lim).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    flags.push(Flag {
        name: "weighted_weak".into(),
        passed: weighted.iter().all(|r| r.within),
        detail: format!("quadrature against {} Monte Carlo samples per entry", cfg.weighted_samples),
    });

    let embedding = embedding_report(&seq, &cfg.pairing_tests, tol.embedding);
    flags.push(Flag {
        name: "embedding".into(),
        passed: embedding.strong,
        detail: format!("last gap {:.3e}", embedding.rows.last().map(|r| r.pairing_gap).unwrap_or(f64::NAN)),
    });

    let pairings = resolvent_pairings(&seq, cfg.alpha, &cfg.pairing_tests, tol.pairing)?;
    flags.push(Flag {
        name: "resolvent_pairings".into(),
        passed: pairings.weak,
        detail: format!("last gap {:.3e}", pairings.rows.last().map(|r| r.pairing_gap).unwrap_or(f64::NAN)),
    });

    let recovery: Vec<RecoveryReport> =
        cfg.energy_tests.iter().map(|u| m2_recovery_diagnostic(&seq, u, tol.energy)).collect();
    flags.push(Flag {
        name: "energy_recovery".into(),
        passed: recovery.iter().all(|r| r.passed),
        detail: recovery
            .iter()
            .map(|r| format!("{}: {:.3e}", r.test, r.rows.last().map(|x| x.gap).unwrap_or(f64::NAN)))
            .collect::<Vec<_>>()
            .join(", "),
    });

    let liminf = cfg
        .liminf_tests
        .iter()
        .map(|f| m1_liminf_diagnostic(&seq, f, cfg.alpha, &cfg.pairing_tests, cfg.liminf_from_n, tol.liminf_slack))
        .collect::<Result<Vec<_>>>()?;
    flags.push(Flag {
        name: "liminf".into(),
        passed: liminf.iter().all(|r| r.passed),
        detail: liminf
            .iter()
            .map(|r| {
                let worst = r.rows.iter().filter(|x| x.n >= r.from_n).map(|x| x.slack).fold(f64::INFINITY, f64::min);
                format!("{}: min slack {:.3e}", r.test, worst)
            })
            .collect::<Vec<_>>()
            .join(", "),
    });

    let mut markov = Vec::new();
    for m in &seq.members {
        let reps = m.markov(cfg.alpha, cfg.markov_trials, seed::derive(cfg.seed, &format!("markov/N={}", m.active)))?;
        for (k, r) in reps.into_iter().enumerate() {
            markov.push(MarkovRow { n: m.active, coordinate: k + 1, violations: r.violations, min: r.min, max: r.max });
        }
    }
    flags.push(Flag {
        name: "sub_markov".into(),
        passed: markov.iter().all(|r| r.violations == 0),
        detail: format!("{} random inputs per factor", cfg.markov_trials),
    });

    let sandwich = envelope_sandwich(&seq, cfg, tol.pairing)?;
    flags.push(Flag {
        name: "sandwich".into(),
        passed: sandwich.passed,
        detail: sandwich.first_violation.clone().unwrap_or_else(|| "hypotheses hold".into()),
    });

    let sweep = condition_mucken_sweep(&model, &n_values, &cfg.sweep)?;
    flags.push(Flag {
        name: "delta_sweep".into(),
        passed: sweep.perturbed_delta_decreasing && sweep.within_bound,
        detail: format!(
            "decreasing: {}, within perturbation bound: {}",
            sweep.perturbed_delta_decreasing, sweep.within_bound
        ),
    });

    let passed = flags.iter().all(|f| f.passed);
    Ok(ExperimentReport {
        dim: d,
        n_values,
        r_std: cfg.sequence.r_std.clone(),
        r_limit: seq.limit.r_std,
        z_limit,
        partition,
        weighted,
        embedding,
        pairings,
        recovery,
        liminf,
        markov,
        sandwich,
        sweep,
        flags,
        passed,
    })
}

/// `exp(-lambda_1 f)` on the first coordinate between the envelope weights
/// `exp(-lambda_1 f^maj_m) <= . <= exp(-lambda_1 f^min_m)`.
fn envelope_sandwich(seq: &ProductSequence, cfg: &BvExperimentConfig, tolerance: f64) -> Result<SandwichReport> {
    let lam = seq.model.weights[0];
    let f = &seq.model.f;
    let s = seq.limit.scales[0];
    let spaces: Vec<Space<'_>> = seq
        .members
        .iter()
        .map(|m| Space { index: m.active, scale: m.r_std, forms: &m.factors[0] })
        .collect();
    let limit = Space { index: 0, scale: seq.limit.r_std, forms: &seq.limit.factors[0] };
    let g = |x: &[f64]| (-lam * f.eval(x[0])).exp();
    let gv: Vec<Vec<f64>> = spaces.iter().map(|sp| sp.forms.interpolate(g)).collect();
    let gl = limit.forms.interpolate(g);
    let mut levels = Vec::new();
    for &m in &cfg.envelope_levels {
        let (lo, hi) = f.envelopes(m)?;
        let minorant = |x: &[f64]| (-lam * hi.eval(x[0])).exp();
        let majorant = |x: &[f64]| (-lam * lo.eval(x[0])).exp();
        levels.push(SandwichLevel {
            m,
            minorants: spaces.iter().map(|sp| sp.forms.interpolate(minorant)).collect(),
            majorants: spaces.iter().map(|sp| sp.forms.interpolate(majorant)).collect(),
            minorant_limit: limit.forms.interpolate(minorant),
            majorant_limit: limit.forms.interpolate(majorant),
        });
    }
    let shapes: Vec<(String, Shape1d)> = cfg
        .pairing_tests
        .iter()
        .filter(|t| t.active() == [0])
        .map(|t| (t.name.clone(), t.shape(0)))
        .chain(std::iter::once(("one".to_string(), Shape1d::One)))
        .collect();
    let fns: Vec<Box<dyn Fn(&[f64]) -> f64 + Sync>> = shapes
        .iter()
        .map(|(_, sh)| {
            let sh = *sh;
            Box::new(move |x: &[f64]| sh.eval(x[0] / s)) as Box<dyn Fn(&[f64]) -> f64 + Sync>
        })
        .collect();
    let tests: Vec<NamedTest<'_>> =
        shapes.iter().zip(&fns).map(|((n, _), f)| NamedTest { name: n.clone(), f: f.as_ref() }).collect();
    sandwich_check(&spaces, limit, &gv, &gl, &levels, &tests, tolerance)
}
