//! Sectioned trellises whose path sums are joint input/output probabilities,
//! and the minus/plus transforms that halve them.
//!
//! A trellis with `N` sections has vertex layers `V_0..V_N` and edge sets
//! `E_1..E_N`; edge `e ∈ E_j` runs from `V_{j-1}` to `V_j`. Weights are
//! natural-log probabilities with `-inf` as exact zero. Within a section the
//! edges are stored grouped by source vertex and sorted by target, so the
//! transform inner loop walks exactly the 2-step paths.

use std::fmt::Write as _;

use crate::channels::{is_trimmed, log_rates, DeletionParams};
use crate::error::{invalid, Error, Result};
use crate::hmm_input::FaimProcess;
use crate::logspace::{ln, log_add, log_sum_exp, LOG_ZERO};

/// Row `i` (symbols received so far) and input state `s` of a base-trellis vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexLabel {
    pub i: u32,
    pub s: u32,
}

/// Full identity of a vertex: layer `j`, row `i`, state `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TrellisVertexId {
    pub j: usize,
    pub i: usize,
    pub s: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
    pub label: u8,
    pub log_w: f64,
}

/// Stored edge; `w` is linear and relative to the section scale.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Arc {
    from: u32,
    to: u32,
    label: u8,
    w: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct Section {
    arcs: Vec<Arc>,
    /// `arcs[offsets[v]..offsets[v+1]]` leave source vertex `v`.
    offsets: Vec<u32>,
    /// Edge weight is `w · exp(log_scale)`.
    log_scale: f64,
}

impl Section {
    fn build(mut edges: Vec<Edge>, n_from: usize) -> Section {
        edges.sort_unstable_by_key(|e| (e.from, e.to, e.label));
        let mut merged: Vec<Edge> = Vec::with_capacity(edges.len());
        for e in edges {
            match merged.last_mut() {
                Some(m) if (m.from, m.to, m.label) == (e.from, e.to, e.label) => {
                    m.log_w = log_add(m.log_w, e.log_w)
                }
                _ => merged.push(e),
            }
        }
        let top = merged.iter().map(|e| e.log_w).fold(LOG_ZERO, f64::max);
        let log_scale = if top == LOG_ZERO { 0.0 } else { top };
        let arcs = merged
            .iter()
            .map(|e| Arc { from: e.from, to: e.to, label: e.label, w: (e.log_w - log_scale).exp() })
            .collect();
        Section::from_arcs(arcs, n_from, log_scale)
    }

    /// `arcs` must be grouped by source vertex in increasing order.
    fn from_arcs(arcs: Vec<Arc>, n_from: usize, log_scale: f64) -> Section {
        let mut offsets = vec![0u32; n_from + 1];
        for a in &arcs {
            offsets[a.from as usize + 1] += 1;
        }
        for v in 0..n_from {
            offsets[v + 1] += offsets[v];
        }
        Section { arcs, offsets, log_scale }
    }

    #[inline]
    fn log_w(&self, a: &Arc) -> f64 {
        if a.w > 0.0 {
            a.w.ln() + self.log_scale
        } else {
            LOG_ZERO
        }
    }

    fn edge(&self, a: &Arc) -> Edge {
        Edge { from: a.from, to: a.to, label: a.label, log_w: self.log_w(a) }
    }

    fn edges(&self) -> Vec<Edge> {
        self.arcs.iter().map(|a| self.edge(a)).collect()
    }

    #[inline]
    fn out(&self, v: usize) -> &[Arc] {
        &self.arcs[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

}

#[derive(Clone, Debug, PartialEq)]
pub struct Trellis {
    layers: Vec<Vec<VertexLabel>>,
    sections: Vec<Section>,
    log_q: Vec<f64>,
    log_r: Vec<f64>,
}

impl Trellis {
    /// Assemble a trellis from raw parts. `edges[j]` lists the edges of
    /// section `j + 1`; parallel edges with equal labels are merged.
    pub fn from_parts(
        layers: Vec<Vec<VertexLabel>>,
        edges: Vec<Vec<Edge>>,
        log_q: Vec<f64>,
        log_r: Vec<f64>,
    ) -> Result<Self> {
        if layers.len() != edges.len() + 1 {
            return Err(invalid("need exactly one more layer than sections"));
        }
        let n = edges.len();
        if log_q.len() != layers[0].len() || log_r.len() != layers[n].len() {
            return Err(invalid("q and r must match the first and last layers"));
        }
        let bad = |w: f64| w.is_nan() || w > 1e-12;
        if log_q.iter().chain(&log_r).any(|&w| bad(w)) {
            return Err(invalid("q and r must lie in [0, 1]"));
        }
        let mut sections = Vec::with_capacity(n);
        for (j, es) in edges.into_iter().enumerate() {
            for e in &es {
                if e.from as usize >= layers[j].len() || e.to as usize >= layers[j + 1].len() {
                    return Err(invalid(format!("edge {e:?} leaves section {}", j + 1)));
                }
                if e.label > 1 || bad(e.log_w) {
                    return Err(invalid(format!("edge {e:?} has a bad label or weight")));
                }
            }
            sections.push(Section::build(es, layers[j].len()));
        }
        Ok(Self { layers, sections, log_q, log_r })
    }

    pub fn n_sections(&self) -> usize {
        self.sections.len()
    }

    /// Vertices of layer `V_j`, `0 ≤ j ≤ N`.
    pub fn layer(&self, j: usize) -> &[VertexLabel] {
        &self.layers[j]
    }

    pub fn vertex_id(&self, j: usize, k: usize) -> TrellisVertexId {
        let v = self.layers[j][k];
        TrellisVertexId { j, i: v.i as usize, s: v.s as usize }
    }

    /// Edges of section `E_j`, `1 ≤ j ≤ N`.
    pub fn section_edges(&self, j: usize) -> Vec<Edge> {
        self.sections[j - 1].edges()
    }

    pub fn num_vertices(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.sections.iter().map(|s| s.arcs.len()).sum()
    }

    pub fn log_q(&self) -> &[f64] {
        &self.log_q
    }

    pub fn log_r(&self) -> &[f64] {
        &self.log_r
    }

    /// `ln T(x)`.
    pub fn log_path_sum(&self, x: &[u8]) -> Result<f64> {
        if x.len() != self.n_sections() {
            return Err(Error::LengthMismatch { expected: self.n_sections(), got: x.len() });
        }
        Ok(self.forward(|j, e| e.label == x[j]))
    }

    /// `T(x)`: sum over label-matching paths of `q(start) · Π w(e) · r(end)`.
    pub fn path_sum(&self, x: &[u8]) -> Result<f64> {
        self.log_path_sum(x).map(f64::exp)
    }

    /// `ln Σ_x T(x)`.
    pub fn log_total_mass(&self) -> f64 {
        self.forward(|_, _| true)
    }

    fn forward(&self, keep: impl Fn(usize, &Edge) -> bool) -> f64 {
        let mut f = self.log_q.clone();
        for (j, sec) in self.sections.iter().enumerate() {
            let mut g = vec![LOG_ZERO; self.layers[j + 1].len()];
            for (alpha, &fa) in f.iter().enumerate() {
                if fa == LOG_ZERO {
                    continue;
                }
                for e in sec.out(alpha).iter().map(|a| sec.edge(a)).filter(|e| keep(j, e)) {
                    let t = e.to as usize;
                    g[t] = log_add(g[t], fa + e.log_w);
                }
            }
            f = g;
        }
        let ends: Vec<f64> = f.iter().zip(&self.log_r).map(|(a, b)| a + b).collect();
        log_sum_exp(&ends)
    }

    /// `[ln T(0), ln T(1)]` of a one-section trellis.
    pub fn leaf_log_values(&self) -> Result<[f64; 2]> {
        if self.n_sections() != 1 {
            return Err(invalid(format!("leaf needs 1 section, have {}", self.n_sections())));
        }
        let linear = |ws: &[f64]| {
            let m = ws.iter().copied().fold(LOG_ZERO, f64::max);
            let m = if m == LOG_ZERO { 0.0 } else { m };
            (ws.iter().map(|w| (w - m).exp()).collect::<Vec<f64>>(), m)
        };
        let (q, mq) = linear(&self.log_q);
        let (r, mr) = linear(&self.log_r);
        let sec = &self.sections[0];
        let mut sum = [0.0f64; 2];
        for a in &sec.arcs {
            sum[a.label as usize] += q[a.from as usize] * a.w * r[a.to as usize];
        }
        let scale = mq + mr + sec.log_scale;
        Ok(sum.map(|v| if v > 0.0 { v.ln() + scale } else { LOG_ZERO }))
    }

    /// Trellis for `x^[0]`: `T'(z) = Σ_{x: x^[0] = z} T(x)`.
    pub fn minus_transform(&self) -> Result<Trellis> {
        self.minus_with_work().map(|(t, _)| t)
    }

    /// Trellis for `x^[1]` given `x^[0] = z`: `T'(z') = T(x)` for the `x`
    /// with `x^[0] = z`, `x^[1] = z'`.
    pub fn plus_transform(&self, z: &[u8]) -> Result<Trellis> {
        self.plus_with_work(z).map(|(t, _)| t)
    }

    /// Minus transform plus the number of 2-step paths visited.
    pub fn minus_with_work(&self) -> Result<(Trellis, u64)> {
        self.check_even()?;
        Ok(self.combine_sections(None))
    }

    pub fn plus_with_work(&self, z: &[u8]) -> Result<(Trellis, u64)> {
        self.check_even()?;
        if z.len() * 2 != self.n_sections() {
            return Err(Error::LengthMismatch { expected: self.n_sections() / 2, got: z.len() });
        }
        if z.iter().any(|&b| b > 1) {
            return Err(invalid("z must be binary"));
        }
        Ok(self.combine_sections(Some(z)))
    }

    fn check_even(&self) -> Result<()> {
        let n = self.n_sections();
        if n < 2 || n % 2 != 0 {
            return Err(invalid(format!("transform needs an even, nonzero section count, have {n}")));
        }
        Ok(())
    }

    fn combine_sections(&self, z: Option<&[u8]>) -> (Trellis, u64) {
        let half = self.n_sections() / 2;
        let mut sections = Vec::with_capacity(half);
        let mut work = 0u64;
        let mut scratch = Scratch::default();
        for j in 0..half {
            let (sec, w) = match z {
                None => self.combine_pair::<false>(j, 0, &mut scratch),
                Some(z) => self.combine_pair::<true>(j, z[j], &mut scratch),
            };
            sections.push(sec);
            work += w;
        }
        let layers = self.layers.iter().step_by(2).cloned().collect();
        let t = Trellis {
            layers,
            sections,
            log_q: self.log_q.clone(),
            log_r: self.log_r.clone(),
        };
        (t, work)
    }

    /// Merge sections `2j+1` and `2j+2` (1-based). Products run on the
    /// linear weights; the result is renormalized to a maximum of 1.
    fn combine_pair<const PLUS: bool>(&self, j: usize, zj: u8, s: &mut Scratch) -> (Section, u64) {
        let a = &self.sections[2 * j];
        let b = &self.sections[2 * j + 1];
        let n_from = self.layers[2 * j].len();
        let n_to = self.layers[2 * j + 2].len();
        s.reset(n_to);
        let mut arcs = Vec::new();
        let mut work = 0u64;
        let mut top = 0.0f64;
        for alpha in 0..n_from {
            for e1 in a.out(alpha) {
                let r = b.out(e1.to as usize);
                work += r.len() as u64;
                for e2 in r {
                    let label = if PLUS {
                        if e1.label ^ e2.label != zj {
                            continue;
                        }
                        e2.label
                    } else {
                        e1.label ^ e2.label
                    };
                    let g = e2.to as usize;
                    if !s.seen[g] {
                        s.seen[g] = true;
                        s.touched.push(e2.to);
                    }
                    s.acc[g][label as usize] += e1.w * e2.w;
                }
            }
            s.touched.sort_unstable();
            for &g in &s.touched {
                let slot = &mut s.acc[g as usize];
                for (label, v) in slot.iter().enumerate() {
                    if *v > 0.0 {
                        top = top.max(*v);
                        arcs.push(Arc { from: alpha as u32, to: g, label: label as u8, w: *v });
                    }
                }
                *slot = [0.0; 2];
                s.seen[g as usize] = false;
            }
            s.touched.clear();
        }
        let mut log_scale = a.log_scale + b.log_scale;
        if top > 0.0 {
            for arc in &mut arcs {
                arc.w /= top;
            }
            log_scale += top.ln();
        }
        (Section::from_arcs(arcs, n_from, log_scale), work)
    }

    /// `C(T) = Σ_j P_2(j)`: 2-step paths over section pairs `(2j-1, 2j)`.
    pub fn two_step_path_count(&self) -> Result<u64> {
        self.check_even()?;
        let mut total = 0u64;
        for j in 0..self.n_sections() / 2 {
            let (a, b) = (&self.sections[2 * j], &self.sections[2 * j + 1]);
            total += a.arcs.iter().map(|e| b.out(e.to as usize).len() as u64).sum::<u64>();
        }
        Ok(total)
    }

    /// Drop zero-weight edges and vertices that lie on no positive-weight
    /// path from a positive-`q` start to a positive-`r` end.
    pub fn prune(&self) -> Trellis {
        let n = self.n_sections();
        let mut fwd: Vec<Vec<bool>> = Vec::with_capacity(n + 1);
        fwd.push(self.log_q.iter().map(|&w| w > LOG_ZERO).collect());
        for (j, sec) in self.sections.iter().enumerate() {
            let mut next = vec![false; self.layers[j + 1].len()];
            for e in sec.arcs.iter().filter(|e| e.w > 0.0) {
                if fwd[j][e.from as usize] {
                    next[e.to as usize] = true;
                }
            }
            fwd.push(next);
        }
        let mut bwd: Vec<Vec<bool>> = vec![Vec::new(); n + 1];
        bwd[n] = self.log_r.iter().map(|&w| w > LOG_ZERO).collect();
        for j in (0..n).rev() {
            let mut prev = vec![false; self.layers[j].len()];
            for e in self.sections[j].arcs.iter().filter(|e| e.w > 0.0) {
                if bwd[j + 1][e.to as usize] {
                    prev[e.from as usize] = true;
                }
            }
            bwd[j] = prev;
        }
        let mut remap: Vec<Vec<Option<u32>>> = Vec::with_capacity(n + 1);
        let mut layers = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let mut map = vec![None; self.layers[j].len()];
            let mut layer = Vec::new();
            for (k, v) in self.layers[j].iter().enumerate() {
                if fwd[j][k] && bwd[j][k] {
                    map[k] = Some(layer.len() as u32);
                    layer.push(*v);
                }
            }
            remap.push(map);
            layers.push(layer);
        }
        let keep_weights = |ws: &[f64], map: &[Option<u32>]| -> Vec<f64> {
            ws.iter().zip(map).filter(|(_, m)| m.is_some()).map(|(w, _)| *w).collect()
        };
        let log_q = keep_weights(&self.log_q, &remap[0]);
        let log_r = keep_weights(&self.log_r, &remap[n]);
        let sections = self
            .sections
            .iter()
            .enumerate()
            .map(|(j, sec)| {
                // Remapping is monotone, so arcs stay grouped by source.
                let arcs = sec
                    .arcs
                    .iter()
                    .filter(|e| e.w > 0.0)
                    .filter_map(|e| {
                        let from = remap[j][e.from as usize]?;
                        let to = remap[j + 1][e.to as usize]?;
                        Some(Arc { from, to, ..*e })
                    })
                    .collect();
                Section::from_arcs(arcs, layers[j].len(), sec.log_scale)
            })
            .collect();
        Trellis { layers, sections, log_q, log_r }
    }

    /// Restrict `q` to start vertices in state `s0` and `r` to end vertices
    /// in state `s_n`.
    pub fn with_boundary_states(&self, s0: usize, s_n: usize) -> Trellis {
        let mut t = self.clone();
        let n = t.n_sections();
        for (k, v) in t.layers[0].iter().enumerate() {
            if v.s as usize != s0 {
                t.log_q[k] = LOG_ZERO;
            }
        }
        for (k, v) in t.layers[n].iter().enumerate() {
            if v.s as usize != s_n {
                t.log_r[k] = LOG_ZERO;
            }
        }
        t
    }

    /// Trellis whose path sum is `T_a(x_a) · T_b(x_b)` on the concatenation.
    pub fn concat(a: &Trellis, b: &Trellis) -> Result<Trellis> {
        let (na, nb) = (a.n_sections(), b.n_sections());
        if na == 0 || nb == 0 {
            return Err(invalid("concatenation needs nonempty trellises"));
        }
        let mut layers: Vec<Vec<VertexLabel>> = a.layers[..na].to_vec();
        layers.extend(b.layers.iter().cloned());
        let mut sections: Vec<Section> = a.sections[..na - 1].to_vec();
        let mut junction = Vec::new();
        for e in a.sections[na - 1].edges() {
            let rv = a.log_r[e.to as usize];
            if rv == LOG_ZERO {
                continue;
            }
            for (w, &qw) in b.log_q.iter().enumerate() {
                if qw > LOG_ZERO {
                    junction.push(Edge { to: w as u32, log_w: e.log_w + rv + qw, ..e });
                }
            }
        }
        sections.push(Section::build(junction, a.layers[na - 1].len()));
        sections.extend(b.sections.iter().cloned());
        Ok(Trellis {
            layers,
            sections,
            log_q: a.log_q.clone(),
            log_r: b.log_r.clone(),
        })
    }

    /// Scale the first live edge weight of section 1 by `factor`; a
    /// sensitivity hook for the oracle suite.
    #[doc(hidden)]
    pub fn perturb_first_edge(&mut self, factor: f64) {
        if let Some(e) = self.sections.first_mut().and_then(|s| s.arcs.iter_mut().find(|e| e.w > 0.0)) {
            e.w *= factor;
        }
    }

    /// Deterministic text dump used by golden-file tests. Weights are printed
    /// as linear probabilities.
    pub fn dump(&self) -> String {
        let n = self.n_sections();
        let mut out = String::new();
        let p = |w: f64| format!("{:.12e}", w.exp());
        writeln!(out, "trellis sections {n}").unwrap();
        for (j, layer) in self.layers.iter().enumerate() {
            writeln!(out, "layer {j} vertices {}", layer.len()).unwrap();
            for (k, v) in layer.iter().enumerate() {
                write!(out, "  v {k} i {} s {}", v.i, v.s).unwrap();
                if j == 0 {
                    write!(out, " q {}", p(self.log_q[k])).unwrap();
                }
                if j == n {
                    write!(out, " r {}", p(self.log_r[k])).unwrap();
                }
                out.push('\n');
            }
            if j < n {
                let sec = &self.sections[j];
                writeln!(out, "section {} edges {}", j + 1, sec.arcs.len()).unwrap();
                for e in sec.edges() {
                    writeln!(out, "  e {} -> {} label {} w {}", e.from, e.to, e.label, p(e.log_w))
                        .unwrap();
                }
            }
        }
        out
    }
}

#[derive(Default)]
struct Scratch {
    acc: Vec<[f64; 2]>,
    seen: Vec<bool>,
    touched: Vec<u32>,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        self.acc.clear();
        self.acc.resize(n, [0.0; 2]);
        self.seen.clear();
        self.seen.resize(n, false);
        self.touched.clear();
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Rows {
    /// Only rows `max(0, M-N+j) ≤ i ≤ min(j, M)` that can lie on a full path.
    Banded,
    /// Every row `0 ≤ i ≤ M` in every layer.
    Full,
}

fn row_range(rows: Rows, n: usize, m: usize, j: usize) -> (usize, usize) {
    match rows {
        Rows::Full => (0, m),
        Rows::Banded => ((m + j).saturating_sub(n), j.min(m)),
    }
}

fn grid_trellis(
    n: usize,
    y: &[u8],
    params: DeletionParams,
    p: &FaimProcess,
    trimmed: bool,
    rows: Rows,
) -> Result<Trellis> {
    let m = y.len();
    if m > n {
        return Err(invalid(format!("output length {m} exceeds input length {n}")));
    }
    if y.iter().any(|&b| b > 1) {
        return Err(invalid("output must be binary"));
    }
    let s = p.num_states();
    let (ln_keep, ln_del) = log_rates(params);
    let ranges: Vec<(usize, usize)> = (0..=n).map(|j| row_range(rows, n, m, j)).collect();
    let layers: Vec<Vec<VertexLabel>> = ranges
        .iter()
        .map(|&(lo, hi)| {
            (lo..=hi)
                .flat_map(|i| (0..s).map(move |st| VertexLabel { i: i as u32, s: st as u32 }))
                .collect()
        })
        .collect();
    let index = |j: usize, i: usize, st: usize| -> Option<u32> {
        let (lo, hi) = ranges[j];
        (lo..=hi).contains(&i).then(|| ((i - lo) * s + st) as u32)
    };
    let mut edges = Vec::with_capacity(n);
    for j in 0..n {
        let (lo, hi) = ranges[j];
        let mut es = Vec::new();
        for i in lo..=hi {
            for alpha in 0..s {
                let from = index(j, i, alpha).unwrap();
                for t in p.transitions(alpha) {
                    if let Some(to) = index(j + 1, i, t.next) {
                        let free = trimmed && t.symbol == 0 && (i == 0 || i == m);
                        let log_w = if free { t.prob.ln() } else { ln_del + t.prob.ln() };
                        if log_w > LOG_ZERO {
                            es.push(Edge { from, to, label: t.symbol, log_w });
                        }
                    }
                    if i < m && t.symbol == y[i] {
                        if let Some(to) = index(j + 1, i + 1, t.next) {
                            let log_w = ln_keep + t.prob.ln();
                            if log_w > LOG_ZERO {
                                es.push(Edge { from, to, label: t.symbol, log_w });
                            }
                        }
                    }
                }
            }
        }
        edges.push(es);
    }
    let log_q = layers[0]
        .iter()
        .map(|v| if v.i == 0 { ln(p.stationary()[v.s as usize]) } else { LOG_ZERO })
        .collect();
    let log_r = layers[n]
        .iter()
        .map(|v| if v.i as usize == m { 0.0 } else { LOG_ZERO })
        .collect();
    Trellis::from_parts(layers, edges, log_q, log_r)
}

/// Base trellis for uniform i.i.d. input over the deletion channel:
/// `T(x) = 2^{-N} W(y|x)`. Only rows reachable on a full path are built.
pub fn build_uniform_trellis(n: usize, y: &[u8], params: DeletionParams) -> Result<Trellis> {
    grid_trellis(n, y, params, &FaimProcess::uniform(), false, Rows::Banded)
}

/// [`build_uniform_trellis`] on the full `(M+1) × (N+1)` grid.
pub fn build_uniform_trellis_full(n: usize, y: &[u8], params: DeletionParams) -> Result<Trellis> {
    grid_trellis(n, y, params, &FaimProcess::uniform(), false, Rows::Full)
}

/// Base trellis for hidden-Markov input: `T(x) = P_X(x) W(y|x)`.
pub fn build_hmm_trellis(
    n: usize,
    y: &[u8],
    params: DeletionParams,
    p: &FaimProcess,
) -> Result<Trellis> {
    grid_trellis(n, y, params, p, false, Rows::Banded)
}

pub fn build_hmm_trellis_full(
    n: usize,
    y: &[u8],
    params: DeletionParams,
    p: &FaimProcess,
) -> Result<Trellis> {
    grid_trellis(n, y, params, p, false, Rows::Full)
}

/// Base trellis for hidden-Markov input over the TDC: `T(x) = P_X(x) W*(y*|x)`.
/// Zero-labelled horizontal edges in the first and last rows carry no
/// deletion factor, since such zeros vanish either way.
pub fn build_tdc_trellis(
    n: usize,
    y_star: &[u8],
    params: DeletionParams,
    p: &FaimProcess,
) -> Result<Trellis> {
    if !is_trimmed(y_star) {
        return Err(Error::NotTrimmed);
    }
    grid_trellis(n, y_star, params, p, true, Rows::Banded)
}

pub fn build_tdc_trellis_full(
    n: usize,
    y_star: &[u8],
    params: DeletionParams,
    p: &FaimProcess,
) -> Result<Trellis> {
    if !is_trimmed(y_star) {
        return Err(Error::NotTrimmed);
    }
    grid_trellis(n, y_star, params, p, true, Rows::Full)
}

/// Trellis of the input process alone: `T(x) = P_X(x)`.
pub fn build_input_trellis(n: usize, p: &FaimProcess) -> Trellis {
    let s = p.num_states();
    let layer: Vec<VertexLabel> = (0..s).map(|st| VertexLabel { i: 0, s: st as u32 }).collect();
    let section: Vec<Edge> = (0..s)
        .flat_map(|a| {
            p.transitions(a).iter().map(move |t| Edge {
                from: a as u32,
                to: t.next as u32,
                label: t.symbol,
                log_w: t.prob.ln(),
            })
        })
        .collect();
    let log_q = p.stationary().iter().map(|&w| ln(w)).collect();
    Trellis::from_parts(vec![layer; n + 1], vec![section; n], log_q, vec![0.0; s])
        .expect("input trellis is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: f64) -> DeletionParams {
        DeletionParams::new(d).unwrap()
    }

    fn chain(labels: &[u8]) -> Trellis {
        let n = labels.len();
        let layers = vec![vec![VertexLabel { i: 0, s: 0 }]; n + 1];
        let edges = labels
            .iter()
            .map(|&l| vec![Edge { from: 0, to: 0, label: l, log_w: 0.0 }])
            .collect();
        Trellis::from_parts(layers, edges, vec![0.0], vec![0.0]).unwrap()
    }

    #[test]
    fn single_chain() {
        let t = chain(&[1, 0]);
        assert_eq!(t.path_sum(&[1, 0]).unwrap(), 1.0);
        assert_eq!(t.path_sum(&[1, 1]).unwrap(), 0.0);
        assert!(t.path_sum(&[1]).is_err());
        assert_eq!(t.two_step_path_count().unwrap(), 1);
        let m = t.minus_transform().unwrap();
        assert_eq!(m.path_sum(&[1]).unwrap(), 1.0);
        assert_eq!(m.path_sum(&[0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_q() {
        let mut t = chain(&[1]);
        t.log_q[0] = LOG_ZERO;
        assert_eq!(t.path_sum(&[1]).unwrap(), 0.0);
        assert_eq!(t.prune().num_vertices(), 0);
    }

    #[test]
    fn full_bipartite_count() {
        for k in 1..6u32 {
            let layers = vec![
                vec![VertexLabel { i: 0, s: 0 }],
                (0..k).map(|s| VertexLabel { i: 0, s }).collect(),
                vec![VertexLabel { i: 0, s: 0 }],
            ];
            let e = |from, to, label| Edge { from, to, label, log_w: 0.25f64.ln() };
            let first = (0..k).flat_map(|m| [e(0, m, 0), e(0, m, 1)]).collect();
            let second = (0..k).flat_map(|m| [e(m, 0, 0), e(m, 0, 1)]).collect();
            let t = Trellis::from_parts(layers, vec![first, second], vec![0.0], vec![0.0]).unwrap();
            assert_eq!(t.two_step_path_count().unwrap(), 4 * k as u64);
        }
    }

    #[test]
    fn parallel_edges_merge() {
        let layers = vec![vec![VertexLabel { i: 0, s: 0 }]; 2];
        let e = Edge { from: 0, to: 0, label: 1, log_w: 0.25f64.ln() };
        let t = Trellis::from_parts(layers, vec![vec![e, e]], vec![0.0], vec![0.0]).unwrap();
        assert_eq!(t.num_edges(), 1);
        assert!((t.path_sum(&[1]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parts() {
        let layers = vec![vec![VertexLabel { i: 0, s: 0 }]; 2];
        let e = Edge { from: 1, to: 0, label: 1, log_w: 0.0 };
        assert!(Trellis::from_parts(layers.clone(), vec![vec![e]], vec![0.0], vec![0.0]).is_err());
        let e = Edge { from: 0, to: 0, label: 1, log_w: 0.5 };
        assert!(Trellis::from_parts(layers, vec![vec![e]], vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn empty_output_law() {
        let d = 0.3;
        let t = build_uniform_trellis(3, &[], params(d)).unwrap();
        for v in 0..8u64 {
            let x = crate::bits::index_bits(v, 3);
            let expect = d.powi(3) / 8.0;
            assert!((t.path_sum(&x).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_sizes() {
        let y = [0, 1, 1];
        let full = build_uniform_trellis_full(4, &y, params(0.2)).unwrap();
        assert!((0..=4).all(|j| full.layer(j).len() == 4));
        let banded = build_uniform_trellis(4, &y, params(0.2)).unwrap();
        let sizes: Vec<usize> = (0..=4).map(|j| banded.layer(j).len()).collect();
        assert_eq!(sizes, vec![1, 2, 2, 2, 1]);
        let p = FaimProcess::markov(0.7).unwrap();
        let h = build_hmm_trellis_full(4, &y, params(0.2), &p).unwrap();
        assert!((0..=4).all(|j| h.layer(j).len() == 4 * 2));
        assert!(build_uniform_trellis(2, &y, params(0.2)).is_err());
        assert_eq!(build_tdc_trellis(4, &[0, 1], params(0.2), &p).unwrap_err(), Error::NotTrimmed);
    }

    #[test]
    fn tdc_single_symbol() {
        let d = 0.25;
        let p = FaimProcess::markov(0.8).unwrap();
        let t = build_tdc_trellis(1, &[1], params(d), &p).unwrap();
        let expect: f64 = (0..2).map(|a| p.stationary()[a] * (1.0 - d) * p.prob(a, 1, 1)).sum();
        assert!((t.path_sum(&[1]).unwrap() - expect).abs() < 1e-15);
        assert_eq!(t.path_sum(&[0]).unwrap(), 0.0);
    }

    #[test]
    fn input_trellis_matches_process() {
        let p = FaimProcess::markov(0.65).unwrap();
        let t = build_input_trellis(5, &p);
        for x in crate::bits::all_strings(5) {
            let a = t.path_sum(&x).unwrap();
            assert!((a - p.exact_probability(&x)).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_restriction_partitions_mass() {
        let p = FaimProcess::markov(0.6).unwrap();
        let t = build_hmm_trellis(4, &[1, 0], params(0.3), &p).unwrap();
        let x = [1, 1, 0, 0];
        let total: f64 = (0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| t.with_boundary_states(a, b).path_sum(&x).unwrap())
            .sum();
        assert!((total - t.path_sum(&x).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn concat_multiplies() {
        let p = FaimProcess::uniform();
        let a = build_tdc_trellis(2, &[1], params(0.2), &p).unwrap();
        let b = build_tdc_trellis(2, &[1, 1], params(0.2), &p).unwrap();
        let c = Trellis::concat(&a, &b).unwrap();
        for x in crate::bits::all_strings(4) {
            let expect = a.path_sum(&x[..2]).unwrap() * b.path_sum(&x[2..]).unwrap();
            assert!((c.path_sum(&x).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn plus_rejects_bad_z() {
        let t = build_uniform_trellis(4, &[1], params(0.1)).unwrap();
        assert!(t.plus_transform(&[1]).is_err());
        assert!(t.plus_transform(&[1, 2]).is_err());
        assert!(chain(&[1]).minus_transform().is_err());
    }
}
