//! Exhaustive equivalence checks between the trellis machinery and direct
//! enumeration over inputs and deletion patterns, for small `N`.

use std::collections::HashMap;

use serde::Serialize;

use crate::arikan::{self, BranchPath};
use crate::bits::all_strings;
use crate::channels::{trim, DeletionParams};
use crate::error::{invalid, Result};
use crate::hmm_input::FaimProcess;
use crate::logspace::ln_pow;
use crate::sc_decoder::leaf_posterior;
use crate::trellis::{build_hmm_trellis, build_tdc_trellis, Trellis};

/// Relative deviation above which a check fails.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOptions {
    /// Largest block length checked, at most 8.
    pub max_len: usize,
    pub delta: f64,
    /// Multiply one edge weight of every trellis under test by this factor.
    pub perturb: Option<f64>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { max_len: 8, delta: 0.2, perturb: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: u64,
    pub max_rel_dev: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_dev <= TOLERANCE
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<CheckOutcome>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }
}

/// `|a - b| / max(|b|, 1e-300)`, 0 when both vanish.
pub fn rel_dev(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / b.abs().max(1e-300)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Deletion,
    Trimmed,
}

/// `P(x) W(y|x)` for every `(x, y)` with `|x| = len`, by enumerating masks.
fn joint_table(p: &FaimProcess, params: DeletionParams, len: usize, kind: Kind) -> Vec<HashMap<Vec<u8>, f64>> {
    all_strings(len)
        .map(|x| {
            let px = p.exact_probability(&x);
            let mut m: HashMap<Vec<u8>, f64> = HashMap::new();
            for mask in 0u32..1 << len {
                let y: Vec<u8> = (0..len).filter(|k| mask >> k & 1 == 1).map(|k| x[k]).collect();
                let w = (ln_pow(1.0 - params.delta, y.len()) + ln_pow(params.delta, len - y.len())).exp();
                let key = if kind == Kind::Trimmed { trim(&y).to_vec() } else { y };
                *m.entry(key).or_default() += px * w;
            }
            m
        })
        .collect()
}

fn evidence_set(len: usize, max_out: usize, kind: Kind) -> Vec<Vec<u8>> {
    (0..=max_out.min(len))
        .flat_map(all_strings)
        .filter(|y| kind == Kind::Deletion || trim(y).len() == y.len())
        .collect()
}

fn build(p: &FaimProcess, params: DeletionParams, len: usize, y: &[u8], kind: Kind, perturb: Option<f64>) -> Result<Trellis> {
    let mut t = match kind {
        Kind::Deletion => build_hmm_trellis(len, y, params, p)?,
        Kind::Trimmed => build_tdc_trellis(len, y, params, p)?,
    };
    if let Some(f) = perturb {
        t.perturb_first_edge(f);
    }
    Ok(t)
}

fn processes() -> Result<Vec<(&'static str, FaimProcess)>> {
    Ok(vec![("uniform", FaimProcess::uniform()), ("markov(0.7)", FaimProcess::markov(0.7)?)])
}

fn kinds() -> [(Kind, &'static str); 2] {
    [(Kind::Deletion, "deletion"), (Kind::Trimmed, "trimmed")]
}

/// Path sums equal `P(x) W(y|x)` for every `x` and `y`.
fn check_laws(opts: &OracleOptions, params: DeletionParams) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (pname, p) in processes()? {
        for (kind, kname) in kinds() {
            let mut c = CheckOutcome { name: format!("law/{kname}/{pname}"), cases: 0, max_rel_dev: 0.0 };
            for len in 1..=opts.max_len {
                let table = joint_table(&p, params, len, kind);
                for y in evidence_set(len, len, kind) {
                    let t = build(&p, params, len, &y, kind, opts.perturb)?;
                    for (v, x) in all_strings(len).enumerate() {
                        let want = table[v].get(&y).copied().unwrap_or(0.0);
                        c.max_rel_dev = c.max_rel_dev.max(rel_dev(t.path_sum(&x)?, want));
                        c.cases += 1;
                    }
                }
            }
            out.push(c);
        }
    }
    Ok(out)
}

/// Minus and plus path sums equal the direct marginal and conditional sums
/// of the base path sums.
fn check_transforms(opts: &OracleOptions, params: DeletionParams) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (pname, p) in processes()? {
        for (kind, kname) in kinds() {
            let mut c = CheckOutcome { name: format!("minus-plus/{kname}/{pname}"), cases: 0, max_rel_dev: 0.0 };
            for len in [2, 4, 8].into_iter().filter(|&l| l <= opts.max_len) {
                let half = len / 2;
                for y in evidence_set(len, len, kind) {
                    let t = build(&p, params, len, &y, kind, opts.perturb)?;
                    let base: Vec<f64> = all_strings(len).map(|x| t.path_sum(&x)).collect::<Result<_>>()?;
                    let at = |a: &[u8], b: &[u8]| {
                        let x = arikan::combine(a, b);
                        base[crate::bits::BitString::new(x).expect("binary").to_index() as usize]
                    };
                    let minus = t.minus_transform()?;
                    for a in all_strings(half) {
                        let want: f64 = all_strings(half).map(|b| at(&a, &b)).sum();
                        c.max_rel_dev = c.max_rel_dev.max(rel_dev(minus.path_sum(&a)?, want));
                        c.cases += 1;
                    }
                    for z in all_strings(half) {
                        let plus = t.plus_transform(&z)?;
                        for b in all_strings(half) {
                            c.max_rel_dev = c.max_rel_dev.max(rel_dev(plus.path_sum(&b)?, at(&z, &b)));
                            c.cases += 1;
                        }
                    }
                }
            }
            out.push(c);
        }
    }
    Ok(out)
}

/// Leaf posteriors equal `P(U_i = u, U_1^{i-1} = û, y)` for every index and
/// every past, over outputs of length at most 4.
fn check_leaves(opts: &OracleOptions, params: DeletionParams) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (pname, p) in processes()? {
        for (kind, kname) in kinds() {
            let mut c = CheckOutcome { name: format!("leaf/{kname}/{pname}"), cases: 0, max_rel_dev: 0.0 };
            let mut len = 2;
            while len <= opts.max_len {
                let n = arikan::log2_exact(len)?;
                let table = joint_table(&p, params, len, kind);
                for y in evidence_set(len, 4, kind) {
                    let t = build(&p, params, len, &y, kind, opts.perturb)?;
                    // prefix[i][value of u_1..u_i] = P(U_1^i, y)
                    let mut prefix: Vec<Vec<f64>> = (0..=len).map(|i| vec![0.0; 1 << i]).collect();
                    for (v, x) in all_strings(len).enumerate() {
                        let w = table[v].get(&y).copied().unwrap_or(0.0);
                        let u = arikan::transform(&x)?;
                        let mut key = 0usize;
                        for i in 1..=len {
                            key = key << 1 | u[i - 1] as usize;
                            prefix[i][key] += w;
                        }
                    }
                    for i in 1..=len {
                        let b = BranchPath::from_index(i, n)?;
                        for past in all_strings(i - 1) {
                            let post = leaf_posterior(&t, &b, &past)?;
                            let key = past.iter().fold(0usize, |k, &s| k << 1 | s as usize);
                            c.max_rel_dev = c
                                .max_rel_dev
                                .max(rel_dev(post.p0(), prefix[i][key << 1]))
                                .max(rel_dev(post.p1(), prefix[i][key << 1 | 1]));
                            c.cases += 2;
                        }
                    }
                }
                len *= 2;
            }
            out.push(c);
        }
    }
    Ok(out)
}

/// Run every check up to `opts.max_len`.
pub fn run_oracle_suite(opts: &OracleOptions) -> Result<OracleReport> {
    if opts.max_len == 0 || opts.max_len > 8 {
        return Err(invalid(format!("max_len {} outside [1, 8]", opts.max_len)));
    }
    let params = DeletionParams::new(opts.delta)?;
    let mut checks = check_laws(opts, params)?;
    checks.extend(check_transforms(opts, params)?);
    checks.extend(check_leaves(opts, params)?);
    Ok(OracleReport { checks })
}
