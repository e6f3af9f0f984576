//! Finite-dimensional diagnostics for convergence of forms on varying `L^2` spaces.
//!
//! Limits are never available exactly. A quantity "converges" here when its gap to the
//! reference value does not increase over the tail of the sequence and the last gap is
//! within tolerance.

pub mod experiment;
pub mod product;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::FormMatrices;

/// Nodal interpolation `Psi phi` of a test function.
pub fn embed_test(phi: &dyn Fn(&[f64]) -> f64, forms: &FormMatrices) -> Vec<f64> {
    forms.interpolate(phi)
}

/// Index of the first row of the tail: the last `ceil(n / 2)` rows.
pub fn tail_start(n: usize) -> usize {
    n - n.div_ceil(2)
}

/// Non-increasing over the tail, where a step that stays below `tol / 10` never counts
/// as an increase.
pub fn tail_non_increasing(gaps: &[f64], tol: f64) -> bool {
    let tail = &gaps[tail_start(gaps.len())..];
    tail.windows(2).all(|w| w[1] <= w[0] || w[1] <= 0.1 * tol)
}

/// Least-squares slope of `ln gap` against `ln scale`, over rows with a positive gap.
pub fn fitted_slope(scales: &[f64], gaps: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .zip(gaps)
        .filter(|(s, g)| **s > 0.0 && **g > 0.0)
        .map(|(s, g)| (s.ln(), g.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Pairing and norm statistics of one member of a section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionRow {
    pub index: usize,
    /// Mesh width or another decreasing scale used for slope fits.
    pub scale: f64,
    /// `<u_N, Psi_N phi_j>_N` for each test `phi_j`.
    pub pairings: Vec<f64>,
    pub norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionSeries {
    pub label: String,
    pub test_names: Vec<String>,
    pub rows: Vec<SectionRow>,
    pub limit: SectionRow,
}

/// A discretized space in a sequence: its index, scale and matrices.
#[derive(Clone, Copy)]
pub struct Space<'a> {
    pub index: usize,
    pub scale: f64,
    pub forms: &'a FormMatrices,
}

pub struct NamedTest<'a> {
    pub name: String,
    pub f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
}

fn section_row(space: &Space<'_>, u: &[f64], tests: &[NamedTest<'_>]) -> Result<SectionRow> {
    if u.len() != space.forms.len() {
        return Err(Error::DimensionMismatch { expected: space.forms.len(), got: u.len() });
    }
    let pairings = tests.iter().map(|t| space.forms.l2_inner(u, &embed_test(t.f, space.forms))).collect();
    Ok(SectionRow { index: space.index, scale: space.scale, pairings, norm_sq: space.forms.l2_inner(u, u) })
}

impl SectionSeries {
    pub fn from_vectors(
        label: &str,
        members: &[(Space<'_>, Vec<f64>)],
        limit: (Space<'_>, Vec<f64>),
        tests: &[NamedTest<'_>],
    ) -> Result<Self> {
        let rows = members.iter().map(|(s, u)| section_row(s, u, tests)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            label: label.into(),
            test_names: tests.iter().map(|t| t.name.clone()).collect(),
            rows,
            limit: section_row(&limit.0, &limit.1, tests)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub index: usize,
    pub scale: f64,
    /// `max_j |<u_N, Psi_N phi_j>_N - <u, phi_j>|`.
    pub pairing_gap: f64,
    pub norm_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub tolerance: f64,
    pub rows: Vec<ConvergenceRow>,
    pub pairing_slope: Option<f64>,
    pub norm_slope: Option<f64>,
    /// Pairings converge against every test.
    pub weak: bool,
    /// Pairings and norms converge.
    pub strong: bool,
}

/// Strong convergence of a section: pairings against every test and norms.
pub fn strong_convergence_check(series: &SectionSeries, tolerance: f64) -> ConvergenceReport {
    let rows: Vec<ConvergenceRow> = series
        .rows
        .iter()
        .map(|r| ConvergenceRow {
            index: r.index,
            scale: r.scale,
            pairing_gap: r
                .pairings
                .iter()
                .zip(&series.limit.pairings)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
            norm_gap: (r.norm_sq.sqrt() - series.limit.norm_sq.sqrt()).abs(),
        })
        .collect();
    gap_report(&series.label, rows, tolerance)
}

fn converges(gaps: &[f64], tol: f64) -> bool {
    !gaps.is_empty() && tail_non_increasing(gaps, tol) && gaps[gaps.len() - 1] <= tol
}

/// Builds a report from precomputed gaps.
pub fn gap_report(label: &str, rows: Vec<ConvergenceRow>, tolerance: f64) -> ConvergenceReport {
    let scales: Vec<f64> = rows.iter().map(|r| r.scale).collect();
    let pg: Vec<f64> = rows.iter().map(|r| r.pairing_gap).collect();
    let ng: Vec<f64> = rows.iter().map(|r| r.norm_gap).collect();
    let weak = converges(&pg, tolerance);
    ConvergenceReport {
        label: label.into(),
        tolerance,
        pairing_slope: fitted_slope(&scales, &pg),
        norm_slope: fitted_slope(&scales, &ng),
        weak,
        strong: weak && converges(&ng, tolerance),
        rows,
    }
}

/// One envelope level `m`: minorant and majorant on every member and on the limit.
#[derive(Clone, Debug)]
pub struct SandwichLevel {
    pub m: usize,
    pub minorants: Vec<Vec<f64>>,
    pub majorants: Vec<Vec<f64>>,
    pub minorant_limit: Vec<f64>,
    pub majorant_limit: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub hypothesis_holds: bool,
    pub first_violation: Option<String>,
    /// `(m, |majorant - minorant|_{L^2} on the limit space)`.
    pub envelope_gaps: Vec<(usize, f64)>,
    pub envelope_gaps_shrink: bool,
    /// Per level, whether both envelopes converge strongly along the sequence.
    pub envelopes_converge: Vec<(usize, bool)>,
    pub conclusion: ConvergenceReport,
    pub passed: bool,
}

/// Checks `f^m_N <= g_N <= F^m_N` entrywise, the convergence of the envelopes and, as the
/// conclusion, the strong convergence of `g_N`.
pub fn sandwich_check(
    spaces: &[Space<'_>],
    limit: Space<'_>,
    g: &[Vec<f64>],
    g_limit: &[f64],
    levels: &[SandwichLevel],
    tests: &[NamedTest<'_>],
    tolerance: f64,
) -> Result<SandwichReport> {
    if g.len() != spaces.len() {
        return Err(Error::DimensionMismatch { expected: spaces.len(), got: g.len() });
    }
    const SLACK: f64 = 1e-12;
    let mut first_violation = None;
    'outer: for lv in levels {
        let all = lv
            .minorants
            .iter()
            .zip(&lv.majorants)
            .zip(g)
            .map(|((a, b), c)| (a.as_slice(), b.as_slice(), c.as_slice()))
            .chain(std::iter::once((lv.minorant_limit.as_slice(), lv.majorant_limit.as_slice(), g_limit)));
        for (n, (lo, hi, gv)) in all.enumerate() {
            for k in 0..gv.len() {
                let member = if n < spaces.len() { format!("member {}", spaces[n].index) } else { "limit".into() };
                if lo[k] > gv[k] + SLACK {
                    first_violation = Some(format!("m={}: minorant above g at {member}, node {k}: {} > {}", lv.m, lo[k], gv[k]));
                    break 'outer;
                }
                if gv[k] > hi[k] + SLACK {
                    first_violation = Some(format!("m={}: g above majorant at {member}, node {k}: {} > {}", lv.m, gv[k], hi[k]));
                    break 'outer;
                }
            }
        }
    }
    let envelope_gaps: Vec<(usize, f64)> = levels
        .iter()
        .map(|lv| {
            let d: Vec<f64> = lv.majorant_limit.iter().zip(&lv.minorant_limit).map(|(a, b)| a - b).collect();
            (lv.m, limit.forms.l2_norm(&d))
        })
        .collect();
    let envelope_gaps_shrink = envelope_gaps.windows(2).all(|w| w[1].1 <= w[0].1 + SLACK);
    let mut envelopes_converge = Vec::new();
    for lv in levels {
        let mk = |vs: &[Vec<f64>], lim: &[f64], name: &str| -> Result<bool> {
            let members: Vec<(Space<'_>, Vec<f64>)> = spaces.iter().copied().zip(vs.iter().cloned()).collect();
            let s = SectionSeries::from_vectors(name, &members, (limit, lim.to_vec()), tests)?;
            Ok(strong_convergence_check(&s, tolerance).strong)
        };
        let ok = mk(&lv.minorants, &lv.minorant_limit, "minorant")? && mk(&lv.majorants, &lv.majorant_limit, "majorant")?;
        envelopes_converge.push((lv.m, ok));
    }
    let members: Vec<(Space<'_>, Vec<f64>)> = spaces.iter().copied().zip(g.iter().cloned()).collect();
    let series = SectionSeries::from_vectors("sandwiched", &members, (limit, g_limit.to_vec()), tests)?;
    let conclusion = strong_convergence_check(&series, tolerance);
    let hypothesis_holds = first_violation.is_none();
    let passed = hypothesis_holds && envelope_gaps_shrink && conclusion.strong;
    Ok(SandwichReport {
        hypothesis_holds,
        first_violation,
        envelope_gaps,
        envelope_gaps_shrink,
        envelopes_converge,
        conclusion,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;
    use crate::forms::{assemble, AssemblyOptions};
    use crate::triangulation::GridSpec;

    fn gaussian_forms(rs: &[f64]) -> Vec<FormMatrices> {
        let g = DensitySpec::standard_gaussian(1);
        rs.iter()
            .map(|&r| {
                let grid = GridSpec::covering(r, &g.support_lo, &g.support_hi).unwrap();
                assemble(&grid, &g, &AssemblyOptions::default()).unwrap()
            })
            .collect()
    }

    fn spaces<'a>(forms: &'a [FormMatrices], rs: &[f64]) -> Vec<Space<'a>> {
        forms.iter().zip(rs).enumerate().map(|(i, (f, &r))| Space { index: i + 1, scale: r, forms: f }).collect()
    }

    fn tests() -> Vec<(String, Box<dyn Fn(&[f64]) -> f64 + Sync>)> {
        vec![
            ("bump".into(), Box::new(|x: &[f64]| (-x[0] * x[0]).exp())),
            ("cos".into(), Box::new(|x: &[f64]| x[0].cos())),
            ("atan".into(), Box::new(|x: &[f64]| x[0].atan())),
        ]
    }

    #[test]
    fn tail_rules() {
        assert_eq!(tail_start(4), 2);
        assert_eq!(tail_start(5), 2);
        assert_eq!(tail_start(1), 0);
        assert!(tail_non_increasing(&[9.0, 1.0, 0.5, 0.4], 1.0));
        assert!(!tail_non_increasing(&[0.1, 1.0, 0.5, 0.6], 1.0));
        assert!(tail_non_increasing(&[0.1, 1.0, 0.01, 0.02], 1.0));
        let s = fitted_slope(&[0.5, 0.25, 0.125], &[0.25, 0.0625, 0.015625]).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn embedded_sections_converge_and_alternating_ones_do_not() {
        let rs = [0.5, 0.25, 0.125, 0.0625];
        let forms = gaussian_forms(&[0.5, 0.25, 0.125, 0.0625, 1.0 / 64.0]);
        let sp = spaces(&forms[..4], &rs);
        let lim = Space { index: 0, scale: 1.0 / 64.0, forms: &forms[4] };
        let tf = tests();
        let named: Vec<NamedTest<'_>> = tf.iter().map(|(n, f)| NamedTest { name: n.clone(), f: f.as_ref() }).collect();
        let phi = |x: &[f64]| 1.0 / (1.0 + x[0] * x[0]);
        let members: Vec<_> = sp.iter().map(|s| (*s, embed_test(&phi, s.forms))).collect();
        let series = SectionSeries::from_vectors("embedded", &members, (lim, embed_test(&phi, lim.forms)), &named).unwrap();
        let rep = strong_convergence_check(&series, 5e-3);
        assert!(rep.strong, "{rep:?}");
        let alt: Vec<_> = members
            .iter()
            .enumerate()
            .map(|(i, (s, u))| (*s, u.iter().map(|v| if i % 2 == 1 { -v } else { *v }).collect()))
            .collect();
        let series = SectionSeries::from_vectors("alternating", &alt, (lim, embed_test(&phi, lim.forms)), &named).unwrap();
        let rep = strong_convergence_check(&series, 5e-3);
        assert!(!rep.weak && !rep.strong);
    }

    #[test]
    fn oscillating_section_is_weak_but_not_strong() {
        // fixed fine grid, oscillation frequency growing with N
        let forms = gaussian_forms(&[1.0 / 128.0]);
        let f = &forms[0];
        let sp: Vec<Space<'_>> = (1..=4).map(|i| Space { index: i, scale: 1.0 / i as f64, forms: f }).collect();
        let tf = tests();
        let named: Vec<NamedTest<'_>> = tf.iter().map(|(n, f)| NamedTest { name: n.clone(), f: f.as_ref() }).collect();
        let phi = |x: &[f64]| (-x[0] * x[0] / 4.0).exp();
        let members: Vec<_> = sp
            .iter()
            .map(|s| {
                let w = 4.0 * 2f64.powi(s.index as i32);
                (*s, embed_test(&|x: &[f64]| phi(x) + (w * x[0]).sin(), f))
            })
            .collect();
        let series = SectionSeries::from_vectors("oscillating", &members, (sp[0], embed_test(&phi, f)), &named).unwrap();
        let rep = strong_convergence_check(&series, 5e-3);
        assert!(rep.weak, "{rep:?}");
        assert!(!rep.strong);
        // the oscillation keeps about half its square in the norm
        assert!(rep.rows.last().unwrap().norm_gap > 0.1);
    }

    #[test]
    fn degenerate_and_swapped_sandwiches() {
        let rs = [0.5, 0.25, 0.125];
        let forms = gaussian_forms(&[0.5, 0.25, 0.125, 1.0 / 32.0]);
        let sp = spaces(&forms[..3], &rs);
        let lim = Space { index: 0, scale: 1.0 / 32.0, forms: &forms[3] };
        let tf = tests();
        let named: Vec<NamedTest<'_>> = tf.iter().map(|(n, f)| NamedTest { name: n.clone(), f: f.as_ref() }).collect();
        let g = |x: &[f64]| (-x[0].max(0.0)).exp();
        let gv: Vec<Vec<f64>> = sp.iter().map(|s| embed_test(&g, s.forms)).collect();
        let gl = embed_test(&g, lim.forms);
        let level = SandwichLevel { m: 1, minorants: gv.clone(), majorants: gv.clone(), minorant_limit: gl.clone(), majorant_limit: gl.clone() };
        let rep = sandwich_check(&sp, lim, &gv, &gl, &[level], &named, 5e-3).unwrap();
        assert!(rep.hypothesis_holds && rep.conclusion.strong, "{rep:?}");
        let lo: Vec<Vec<f64>> = gv.iter().map(|v| v.iter().map(|x| x - 0.1).collect()).collect();
        let hi: Vec<Vec<f64>> = gv.iter().map(|v| v.iter().map(|x| x + 0.1).collect()).collect();
        let swapped = SandwichLevel {
            m: 2,
            minorants: hi,
            majorants: lo,
            minorant_limit: gl.iter().map(|x| x + 0.1).collect(),
            majorant_limit: gl.iter().map(|x| x - 0.1).collect(),
        };
        let rep = sandwich_check(&sp, lim, &gv, &gl, &[swapped], &named, 5e-3).unwrap();
        assert!(!rep.hypothesis_holds && !rep.passed);
        assert!(rep.first_violation.unwrap().contains("minorant above g"));
    }
}
