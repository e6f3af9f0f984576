use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kuhnfem::density::bv::BvFunction;
use kuhnfem::density::perturbation::{delta_sweep, ResidualOptions};
use kuhnfem::density::{Cutoff, DensityConfig};
use kuhnfem::forms::{assemble, AssemblyOptions, FormMatrices, ShiftedOperator, SolverKind};
use kuhnfem::mosco::experiment::{gaussian_bv_experiment, BvExperimentConfig, PairSet};
use kuhnfem::mosco::product::TestFactor;
use kuhnfem::triangulation::GridSpec;
use kuhnfem::verify::{basis_suite, envelope_checks, BasisSuiteConfig};

use crate::config::{each, nonempty, Loaded, Seeded};
use crate::CliError;

/// Artifact writer for one command run.
pub struct Output {
    dir: PathBuf,
    command: &'static str,
    hash: String,
}

impl Output {
    pub fn new(dir: &Path, command: &'static str, hash: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), command, hash: hash.to_string() })
    }

    fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.dir.join(name);
        fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }

    /// CSV with a `#` line naming the command, config hash and units.
    pub fn csv(&self, name: &str, units: &str, columns: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut s = format!("# kuhnfem {} config_sha256={} units: {units}\n", self.command, self.hash);
        s.push_str(&columns.join(","));
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.write(name, &s)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(&serde_json::json!({
            "command": self.command,
            "config_sha256": self.hash,
            "result": value,
        }))?;
        s.push('\n');
        self.write(name, &s)
    }

    pub fn text(&self, name: &str, text: &str) -> Result<(), CliError> {
        self.write(name, text)
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------- verify-basis

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerifyBasisConfig(pub BasisSuiteConfig);

impl Seeded for VerifyBasisConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.0.seed
    }

    fn check(&self) -> Result<(), (String, String)> {
        nonempty("dims", &self.0.dims)?;
        each("dims", &self.0.dims, |d| (1..=6).contains(d), "dimension must lie in 1..=6")?;
        nonempty("r_values", &self.0.r_values)?;
        each("r_values", &self.0.r_values, |r| *r > 0.0 && r.is_finite(), "mesh size must be positive")
    }
}

pub fn verify_basis(cfg: Loaded<VerifyBasisConfig>, out: &Path) -> Result<bool, CliError> {
    let o = Output::new(out, "verify-basis", &cfg.hash)?;
    let rep = basis_suite(&cfg.config.0)?;
    let rows: Vec<Vec<String>> = rep
        .checks
        .iter()
        .map(|c| vec![c.name.clone(), c.d.to_string(), num(c.r), c.passed.to_string(), num(c.value), num(c.tolerance)])
        .collect();
    o.csv(
        "verify_basis.csv",
        "r is the lattice spacing; value and tolerance are absolute deviations or failure counts",
        &cols(&["check", "d", "r", "passed", "value", "tolerance"]),
        &rows,
    )?;
    o.json("verify_basis.json", &rep)?;
    for c in &rep.checks {
        eprintln!("{} d={} r={} {} ({:e} vs {:e})", c.name, c.d, c.r, if c.passed { "ok" } else { "FAIL" }, c.value, c.tolerance);
    }
    Ok(rep.passed)
}

// ---------------------------------------------------------------- delta-sweep

fn default_cutoff() -> Cutoff {
    Cutoff::One
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSweepConfig {
    pub density: DensityConfig,
    #[serde(default = "default_cutoff")]
    pub cutoff: Cutoff,
    #[serde(default)]
    pub pairs: PairSet,
    pub m_values: Vec<usize>,
    pub seed: u64,
}

impl Seeded for DeltaSweepConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }

    fn check(&self) -> Result<(), (String, String)> {
        nonempty("m_values", &self.m_values)?;
        each("m_values", &self.m_values, |m| *m > 0, "m must be positive")?;
        if self.m_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(("/m_values".into(), "m values must increase".into()));
        }
        Ok(())
    }
}

pub fn delta_sweep_cmd(cfg: Loaded<DeltaSweepConfig>, out: &Path) -> Result<bool, CliError> {
    let o = Output::new(out, "delta-sweep", &cfg.hash)?;
    let c = &cfg.config;
    let rho = c.density.build()?;
    let d = rho.dim();
    let pairs = c.pairs.pairs(d);
    let sweep = delta_sweep(&rho, &c.cutoff, &c.m_values, &pairs, &ResidualOptions::for_dim(d))?;
    let mut rows = Vec::new();
    for (m, p) in sweep.m_values.iter().zip(&sweep.points) {
        for e in &p.pairs {
            let mut warn = Vec::new();
            if e.c_unstable {
                warn.push("c_unstable");
            }
            if e.mass_deficit > 0.0 {
                warn.push("mass_deficit");
            }
            rows.push(vec![m.to_string(), num(p.r), e.pair_id.clone(), num(e.delta), num(e.c), num(e.c_refined), warn.join(";")]);
            eprintln!("m={m} pair={} runtime_ms={:.1}", e.pair_id, e.runtime_ms);
        }
        rows.push(vec![m.to_string(), num(p.r), "sup".into(), num(p.delta), num(p.c), String::new(), String::new()]);
    }
    o.csv(
        "delta_sweep.csv",
        "r is the lattice spacing; delta and C are dimensionless dual norms",
        &cols(&["m", "r", "pair_id", "delta", "C", "C_refined", "warnings"]),
        &rows,
    )?;
    #[derive(Serialize)]
    struct Summary {
        m_values: Vec<usize>,
        r: Vec<f64>,
        delta: Vec<f64>,
        c: Vec<f64>,
        order: Option<f64>,
        delta_decreasing: bool,
        c_bounded: bool,
    }
    let summary = Summary {
        m_values: sweep.m_values.clone(),
        r: sweep.points.iter().map(|p| p.r).collect(),
        delta: sweep.points.iter().map(|p| p.delta).collect(),
        c: sweep.points.iter().map(|p| p.c).collect(),
        order: sweep.order,
        delta_decreasing: sweep.delta_decreasing,
        c_bounded: sweep.c_bounded,
    };
    o.json("delta_sweep.json", &summary)?;
    eprintln!(
        "delta decreasing: {}, fitted order: {}",
        sweep.delta_decreasing,
        sweep.order.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into())
    );
    Ok(true)
}

// ---------------------------------------------------------------- shared FE setup

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn check_grid(grid: &GridConfig) -> Result<(), (String, String)> {
    if !(grid.r > 0.0) || !grid.r.is_finite() {
        return Err(("/grid/r".into(), "mesh size must be positive".into()));
    }
    if grid.lo.len() != grid.hi.len() {
        return Err(("/grid/hi".into(), "box corners differ in dimension".into()));
    }
    if grid.lo.iter().zip(&grid.hi).any(|(a, b)| !(a < b)) {
        return Err(("/grid".into(), "empty box".into()));
    }
    Ok(())
}

fn build_forms(density: &DensityConfig, grid: &GridConfig, opts: &AssemblyOptions) -> Result<FormMatrices, CliError> {
    let rho = density.build()?;
    if rho.dim() != grid.lo.len() {
        return Err(CliError::Config { pointer: "/grid/lo".into(), message: "grid and density dimensions differ".into() });
    }
    let g = GridSpec::covering(grid.r, &grid.lo, &grid.hi)?;
    Ok(assemble(&g, &rho, opts)?)
}

/// Nodal input functions for resolvent and semigroup runs.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputFunction {
    Constant { value: f64 },
    /// `x_axis`, 1-based.
    Coordinate { axis: usize },
    /// Product of one-dimensional shapes in the raw coordinates.
    Product { factors: Vec<TestFactor> },
    Indicator { lo: Vec<f64>, hi: Vec<f64> },
}

impl InputFunction {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InputFunction::Constant { value } => *value,
            InputFunction::Coordinate { axis } => x[axis - 1],
            InputFunction::Product { factors } => factors.iter().map(|f| f.shape.eval(x[f.coordinate - 1])).product(),
            InputFunction::Indicator { lo, hi } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn check(&self, d: usize) -> Result<(), (String, String)> {
        let ok = match self {
            InputFunction::Constant { .. } => true,
            InputFunction::Coordinate { axis } => (1..=d).contains(axis),
            InputFunction::Product { factors } => factors.iter().all(|f| (1..=d).contains(&f.coordinate)),
            InputFunction::Indicator { lo, hi } => lo.len() == d && hi.len() == d,
        };
        if ok {
            Ok(())
        } else {
            Err(("/input".into(), format!("input does not fit dimension {d}")))
        }
    }
}

fn nodal_rows(forms: &FormMatrices, lead: &[String], f: &[f64], u: &[f64]) -> Vec<Vec<String>> {
    (0..forms.len())
        .map(|k| {
            let mut row = lead.to_vec();
            row.push(k.to_string());
            row.extend(forms.coords(k).into_iter().map(num));
            row.push(num(f[k]));
            row.push(num(u[k]));
            row
        })
        .collect()
}

fn nodal_columns(lead: &[&str], d: usize, last: &[&str]) -> Vec<String> {
    let mut c = cols(lead);
    c.push("node".into());
    c.extend((1..=d).map(|i| format!("x{i}")));
    c.extend(cols(last));
    c
}

// ---------------------------------------------------------------- assemble

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssembleConfig {
    pub density: DensityConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub assembly: AssemblyOptions,
    pub seed: u64,
}

impl Seeded for AssembleConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }

    fn check(&self) -> Result<(), (String, String)> {
        check_grid(&self.grid)
    }
}

pub fn assemble_cmd(cfg: Loaded<AssembleConfig>, out: &Path) -> Result<bool, CliError> {
    let o = Output::new(out, "assemble", &cfg.hash)?;
    let c = &cfg.config;
    let forms = build_forms(&c.density, &c.grid, &c.assembly)?;
    let comment = format!("kuhnfem assemble config_sha256={}", cfg.hash);
    o.text("stiffness.mtx", &forms.stiffness.to_matrix_market(&comment))?;
    o.text("mass.mtx", &forms.mass.to_matrix_market(&comment))?;
    let d = forms.grid.d;
    let rows: Vec<Vec<String>> = (0..forms.len())
        .map(|k| {
            let mut r = vec![k.to_string()];
            r.extend(forms.coords(k).into_iter().map(num));
            r
        })
        .collect();
    o.csv("nodes.csv", "coordinates in the units of the density", &nodal_columns(&[], d, &[])[..], &rows)?;
    #[derive(Serialize)]
    struct Summary {
        nodes: usize,
        stiffness_nnz: usize,
        mass_nnz: usize,
        dropped_cells: usize,
        total_mass: f64,
        max_offdiagonal: f64,
        max_asymmetry: f64,
        m_matrix: bool,
        lumped: bool,
    }
    let max_off = forms.stiffness.max_offdiagonal();
    let s = Summary {
        nodes: forms.len(),
        stiffness_nnz: forms.stiffness.nnz(),
        mass_nnz: forms.mass.nnz(),
        dropped_cells: forms.dropped_cells,
        total_mass: forms.total_mass(),
        max_offdiagonal: max_off,
        max_asymmetry: forms.stiffness.max_asymmetry().max(forms.mass.max_asymmetry()),
        m_matrix: max_off <= 1e-14,
        lumped: forms.lumped,
    };
    o.json("assemble.json", &s)?;
    eprintln!("{} nodes, max off-diagonal {:e}", s.nodes, s.max_offdiagonal);
    Ok(s.m_matrix)
}

// ---------------------------------------------------------------- resolvent

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventConfig {
    pub density: DensityConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub assembly: AssemblyOptions,
    pub alphas: Vec<f64>,
    pub input: InputFunction,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub markov_trials: usize,
    pub seed: u64,
}

impl Seeded for ResolventConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }

    fn check(&self) -> Result<(), (String, String)> {
        check_grid(&self.grid)?;
        nonempty("alphas", &self.alphas)?;
        each("alphas", &self.alphas, |a| *a > 0.0 && a.is_finite(), "alpha must be positive")?;
        self.input.check(self.grid.lo.len())
    }
}

pub fn resolvent_cmd(cfg: Loaded<ResolventConfig>, out: &Path) -> Result<bool, CliError> {
    let o = Output::new(out, "resolvent", &cfg.hash)?;
    let c = &cfg.config;
    let forms = build_forms(&c.density, &c.grid, &c.assembly)?;
    let f = forms.interpolate(|x| c.input.eval(x));
    #[derive(Serialize)]
    struct Row {
        alpha: f64,
        residual: f64,
        contraction: bool,
        markov: Option<kuhnfem::forms::MarkovReport>,
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut ok = true;
    for (i, &alpha) in c.alphas.iter().enumerate() {
        let sol = ShiftedOperator::new(&forms, alpha, c.solver)?.resolvent(&f)?;
        let au: Vec<f64> = sol.u.iter().map(|v| alpha * v).collect();
        let contraction = forms.l2_norm(&au) <= forms.l2_norm(&f) * (1.0 + 1e-12);
        let markov = if c.markov_trials > 0 {
            let seed = kuhnfem::seed::derive(c.seed, &format!("resolvent/markov/{i}"));
            Some(forms.markov_check(alpha, c.markov_trials, seed)?)
        } else {
            None
        };
        ok &= contraction && markov.as_ref().map(|m| m.passed()).unwrap_or(true);
        rows.extend(nodal_rows(&forms, &[num(alpha)], &f, &sol.u));
        summary.push(Row { alpha, residual: sol.residual, contraction, markov });
    }
    o.csv(
        "resolvent.csv",
        "alpha in inverse time; f and u = G_alpha f are nodal values",
        &nodal_columns(&["alpha"], forms.grid.d, &["f", "u"]),
        &rows,
    )?;
    o.json("resolvent.json", &summary)?;
    Ok(ok)
}

// ---------------------------------------------------------------- semigroup

fn default_steps() -> usize {
    64
}

fn default_laguerre() -> usize {
    64
}

/// Relative tolerance of the resolvent against the Laplace transform of the semigroup.
const CONSISTENCY_TOL: f64 = 1e-3;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupConfig {
    pub density: DensityConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub assembly: AssemblyOptions,
    pub times: Vec<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub input: InputFunction,
    /// Compare the resolvent at this `alpha` with the Laplace transform of the semigroup.
    #[serde(default)]
    pub consistency_alpha: Option<f64>,
    /// Gauss-Laguerre nodes for that comparison; smooth inputs need about 64.
    #[serde(default = "default_laguerre")]
    pub consistency_nodes: usize,
    pub seed: u64,
}

impl Seeded for SemigroupConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }

    fn check(&self) -> Result<(), (String, String)> {
        check_grid(&self.grid)?;
        nonempty("times", &self.times)?;
        each("times", &self.times, |t| *t > 0.0 && t.is_finite(), "time must be positive")?;
        if self.consistency_nodes == 0 {
            return Err(("/consistency_nodes".into(), "need at least one node".into()));
        }
        if self.steps == 0 {
            return Err(("/steps".into(), "need at least one step".into()));
        }
        if let Some(a) = self.consistency_alpha {
            if !(a > 0.0) {
                return Err(("/consistency_alpha".into(), "alpha must be positive".into()));
            }
        }
        self.input.check(self.grid.lo.len())
    }
}

pub fn semigroup_cmd(cfg: Loaded<SemigroupConfig>, out: &Path) -> Result<bool, CliError> {
    let o = Output::new(out, "semigroup", &cfg.hash)?;
    let c = &cfg.config;
    let forms = build_forms(&c.density, &c.grid, &c.assembly)?;
    let f = forms.interpolate(|x| c.input.eval(x));
    #[derive(Serialize)]
    struct Row {
        t: f64,
        steps: usize,
        error_estimate: f64,
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &t in &c.times {
        let s = forms.semigroup(t, &f, c.steps)?;
        rows.extend(nodal_rows(&forms, &[num(t)], &f, &s.extrapolated));
        summary.push(Row { t, steps: s.steps, error_estimate: s.error_estimate });
    }
    o.csv(
        "semigroup.csv",
        "t in time units; f and T_t f are nodal values (Richardson-extrapolated implicit Euler)",
        &nodal_columns(&["t"], forms.grid.d, &["f", "value"]),
        &rows,
    )?;
    let consistency = match c.consistency_alpha {
        Some(a) => Some(forms.resolvent_semigroup_consistency(a, &f, c.consistency_nodes)?),
        None => None,
    };
    o.json("semigroup.json", &serde_json::json!({ "times": summary, "consistency": consistency }))?;
    Ok(consistency.map(|r| r.relative_error <= CONSISTENCY_TOL).unwrap_or(true))
}

// ---------------------------------------------------------------- mosco

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
pub struct MoscoConfig(pub BvExperimentConfig);

impl Seeded for MoscoConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.0.seed
    }

    fn check(&self) -> Result<(), (String, String)> {
        let c = &self.0;
        nonempty("variances", &c.variances)?;
        each("variances", &c.variances, |v| *v > 0.0 && v.is_finite(), "variance must be positive")?;
        if c.weights.len() != c.variances.len() {
            return Err(("/weights".into(), "one weight per coordinate".into()));
        }
        nonempty("sequence/n_values", &c.sequence.n_values)?;
        each("sequence/r_std", &c.sequence.r_std, |r| *r > 0.0 && r.is_finite(), "mesh size must be positive")?;
        if c.sequence.r_std.len() != c.sequence.n_values.len() {
            return Err(("/sequence/r_std".into(), "one mesh size per member".into()));
        }
        c.validate().map(|_| ()).map_err(|e| ("/".into(), e.to_string()))
    }
}

pub fn mosco_cmd(cfg: Loaded<MoscoConfig>, out: &Path) -> Result<bool, CliError> {
    let o = Output::new(out, "mosco", &cfg.hash)?;
    let rep = gaussian_bv_experiment(&cfg.config.0)?;
    o.json("report.json", &rep)?;

    let mut columns = cols(&["N", "r_std", "Z_exact", "Z_mc", "Z_stderr", "embedding_gap", "pairing_gap", "pairing_norm_gap"]);
    columns.extend(rep.recovery.iter().map(|r| format!("energy_gap_{}", r.test)));
    columns.extend(rep.liminf.iter().map(|r| format!("liminf_slack_{}", r.test)));
    columns.push("markov_violations".into());
    let rows: Vec<Vec<String>> = rep
        .n_values
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let z = &rep.partition[i];
            let mut row = vec![
                n.to_string(),
                num(rep.r_std[i]),
                num(z.exact),
                num(z.mc_mean),
                num(z.mc_stderr),
                num(rep.embedding.rows[i].pairing_gap),
                num(rep.pairings.rows[i].pairing_gap),
                num(rep.pairings.rows[i].norm_gap),
            ];
            row.extend(rep.recovery.iter().map(|r| num(r.rows[i].gap)));
            row.extend(rep.liminf.iter().map(|r| num(r.rows[i].slack)));
            row.push(rep.markov.iter().filter(|m| m.n == n).map(|m| m.violations).sum::<usize>().to_string());
            row
        })
        .collect();
    o.csv("report.csv", "r_std in standard deviations of each coordinate; all other columns dimensionless", &columns, &rows)?;

    let sweep_rows: Vec<Vec<String>> = rep
        .sweep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                r.n.to_string(),
                r.coordinate.to_string(),
                r.cutoff.to_string(),
                r.perturbed.to_string(),
                num(r.delta),
                num(r.c),
                r.bound.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    o.csv(
        "sweep.csv",
        "r = 1/m in the raw coordinate; delta, C and bound dimensionless",
        &cols(&["m", "N", "coordinate", "cutoff", "perturbed", "delta", "C", "bound"]),
        &sweep_rows,
    )?;
    for f in &rep.flags {
        eprintln!("{:<20} {}  {}", f.name, if f.passed { "pass" } else { "FAIL" }, f.detail);
    }
    Ok(rep.passed)
}

// ---------------------------------------------------------------- envelopes

fn default_points() -> usize {
    10_000
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopesConfig {
    pub f: BvFunction,
    pub m_values: Vec<usize>,
    #[serde(default = "default_points")]
    pub points: usize,
    pub window: [f64; 2],
    /// Rows per level in the plotting CSV.
    #[serde(default = "default_plot")]
    pub plot_points: usize,
    pub seed: u64,
}

fn default_plot() -> usize {
    401
}

impl Seeded for EnvelopesConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }

    fn check(&self) -> Result<(), (String, String)> {
        nonempty("m_values", &self.m_values)?;
        each("m_values", &self.m_values, |m| *m > 0, "m must be positive")?;
        if self.m_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(("/m_values".into(), "m values must increase".into()));
        }
        if !(self.window[0] < self.window[1]) {
            return Err(("/window".into(), "empty window".into()));
        }
        if self.plot_points < 2 {
            return Err(("/plot_points".into(), "need at least two points".into()));
        }
        Ok(())
    }
}

pub fn envelopes_cmd(cfg: Loaded<EnvelopesConfig>, out: &Path) -> Result<bool, CliError> {
    let o = Output::new(out, "envelopes", &cfg.hash)?;
    let c = &cfg.config;
    let (rows, checks) = envelope_checks(&c.f, &c.m_values, c.points, (c.window[0], c.window[1]), c.seed)?;
    let mut plot = Vec::new();
    for &m in &c.m_values {
        let (lo, hi) = c.f.envelopes(m)?;
        for k in 0..c.plot_points {
            let x = c.window[0] + (c.window[1] - c.window[0]) * k as f64 / (c.plot_points - 1) as f64;
            plot.push(vec![m.to_string(), num(x), num(c.f.eval(x)), num(lo.eval(x)), num(hi.eval(x))]);
        }
    }
    o.csv(
        "envelopes.csv",
        "x in the argument units of f; f and envelopes in its value units",
        &cols(&["m", "x", "f", "lower", "upper"]),
        &plot,
    )?;
    let passed = checks.iter().all(|c| c.passed);
    o.json("envelopes.json", &serde_json::json!({ "levels": rows, "checks": checks, "passed": passed }))?;
    for ch in &checks {
        eprintln!("{} {}", ch.name, if ch.passed { "ok" } else { "FAIL" });
    }
    Ok(passed)
}
