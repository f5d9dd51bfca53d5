//! Exact discrete optimal transport.
//!
//! [`solve_transport`] runs a primal network simplex on the complete
//! bipartite graph between the two supports. Supplies are converted to
//! 64-bit fixed point so pivoting is exact in the flow variables; once the
//! optimal basis is found, flows are recomputed in floating point on that
//! basis tree from the original marginals.

use crate::domain::{PlanEntry, TransportPlan, MEASURE_MASS_TOL};
use crate::error::{Error, Result};

/// Fixed-point scale for supplies.
pub const FLOW_SCALE: f64 = 1e9;

/// Dense nonnegative cost matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let rows = values.len();
        let cols = values.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows * cols);
        for (i, row) in values.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Dimension {
                    row: Some(i),
                    expected: cols,
                    found: row.len(),
                });
            }
            flat.extend(row);
        }
        Self::from_flat(rows, cols, flat)
    }

    pub fn from_flat(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                row: None,
                expected: rows * cols,
                found: values.len(),
            });
        }
        for (idx, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidCost {
                    row: idx / cols.max(1),
                    col: idx % cols.max(1),
                });
            }
        }
        Ok(CostMatrix { rows, cols, values })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::from_flat(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

fn check_marginal(w: &[f64], side: &'static str) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Empty("transport marginal"));
    }
    for (i, v) in w.iter().enumerate() {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(Error::NonFinite { row: i, what: "marginal weight" });
        }
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > MEASURE_MASS_TOL {
        return Err(Error::MarginalMismatch { side, total });
    }
    Ok(())
}

/// Optimal plan for a dense cost matrix.
pub fn solve_discrete_ot(a: &[f64], b: &[f64], cost: &CostMatrix) -> Result<TransportPlan> {
    if cost.rows() != a.len() || cost.cols() != b.len() {
        return Err(Error::Dimension {
            row: None,
            expected: a.len() * b.len(),
            found: cost.rows() * cost.cols(),
        });
    }
    solve_transport(a, b, |i, j| cost.get(i, j))
}

/// Optimal plan for a cost given as a function of `(row, column)`. The
/// function is evaluated repeatedly during pricing and must be pure.
pub fn solve_transport<F>(a: &[f64], b: &[f64], cost: F) -> Result<TransportPlan>
where
    F: Fn(usize, usize) -> f64,
{
    check_marginal(a, "plus")?;
    check_marginal(b, "minus")?;

    // Zero-mass points are dropped from the network and mapped back after.
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let aa: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let bb: Vec<f64> = cols.iter().map(|&j| b[j]).collect();

    let mut max_cost: f64 = 0.0;
    for &i in &rows {
        for &j in &cols {
            let c = cost(i, j);
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidCost { row: i, col: j });
            }
            max_cost = max_cost.max(c);
        }
    }

    let local = |i: usize, j: usize| cost(rows[i], cols[j]);
    let mut simplex = NetworkSimplex::new(&aa, &bb, local, max_cost)?;
    simplex.run()?;
    let entries = simplex.extract_plan(&aa, &bb);
    let entries = entries
        .into_iter()
        .map(|e| PlanEntry {
            i: rows[e.i],
            j: cols[e.j],
            mass: e.mass,
        })
        .collect();
    TransportPlan::new(entries, a.len(), b.len())
}

fn to_fixed(w: &[f64]) -> Result<Vec<i64>> {
    let mut v: Vec<i64> = w
        .iter()
        .map(|x| ((x * FLOW_SCALE).round() as i64).max(1))
        .collect();
    let total: i64 = v.iter().sum();
    let imax = (0..v.len()).max_by(|&x, &y| v[x].cmp(&v[y]).then(y.cmp(&x))).unwrap_or(0);
    v[imax] += FLOW_SCALE as i64 - total;
    if v[imax] < 1 {
        return Err(Error::Solver("marginal cannot be represented in fixed point".into()));
    }
    Ok(v)
}

const UP: i8 = 1;
const DOWN: i8 = -1;
const NONE: usize = usize::MAX;
/// Relative slack when deciding whether a reduced cost is negative.
const PRICE_EPS: f64 = 1e-13;
const MAX_RESTARTS: usize = 8;
/// Basis flows below this are rounding noise on degenerate arcs.
const DROP_FLOW_TOL: f64 = 1e-14;
/// A basis flow below minus this means the float marginals make the basis
/// infeasible.
const NEGATIVE_FLOW_TOL: f64 = 1e-12;

/// Primal network simplex with a strongly feasible spanning-tree basis,
/// block-search pricing and thread-list tree updates. Arcs `i * k + j` are
/// the implicit bipartite arcs; arc `m * k + u` is the artificial arc
/// joining node `u` to the root.
struct NetworkSimplex<F> {
    m: usize,
    k: usize,
    root: usize,
    arc_num: usize,
    cost: F,
    art_cost: f64,
    art_up: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    /// Flow on the tree arc `pred[u]`; non-tree arcs carry no flow.
    pred_flow: Vec<i64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    block_size: usize,
    next_arc: usize,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    dirty_revs: Vec<usize>,
}

impl<F: Fn(usize, usize) -> f64> NetworkSimplex<F> {
    fn new(a: &[f64], b: &[f64], cost: F, max_cost: f64) -> Result<Self> {
        let m = a.len();
        let k = b.len();
        let root = m + k;
        let n = root + 1;
        let arc_num = m * k;
        let art_cost = (max_cost + 1.0) * n as f64;
        let sa = to_fixed(a)?;
        let sb = to_fixed(b)?;

        let mut s = NetworkSimplex {
            m,
            k,
            root,
            arc_num,
            cost,
            art_cost,
            art_up: vec![true; root],
            parent: vec![root; n],
            pred: vec![NONE; n],
            pred_dir: vec![UP; n],
            pred_flow: vec![0; n],
            thread: vec![0; n],
            rev_thread: vec![0; n],
            succ_num: vec![1; n],
            last_succ: vec![0; n],
            pi: vec![0.0; n],
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            dirty_revs: Vec::new(),
        };
        for u in 0..root {
            let supply = if u < m { sa[u] } else { -sb[u - m] };
            s.pred[u] = arc_num + u;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.last_succ[u] = u;
            if supply >= 0 {
                s.art_up[u] = true;
                s.pred_dir[u] = UP;
                s.pred_flow[u] = supply;
                s.pi[u] = 0.0;
            } else {
                s.art_up[u] = false;
                s.pred_dir[u] = DOWN;
                s.pred_flow[u] = -supply;
                s.pi[u] = art_cost;
            }
        }
        s.parent[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = n;
        s.last_succ[root] = root - 1;
        Ok(s)
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.arc_num {
            e / self.k
        } else if self.art_up[e - self.arc_num] {
            e - self.arc_num
        } else {
            self.root
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.arc_num {
            self.m + e % self.k
        } else if self.art_up[e - self.arc_num] {
            self.root
        } else {
            e - self.arc_num
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arc_num {
            (self.cost)(e / self.k, e % self.k)
        } else if self.art_up[e - self.arc_num] {
            0.0
        } else {
            self.art_cost
        }
    }

    fn find_entering_arc(&mut self) -> bool {
        let total = self.arc_num;
        let mut min = 0.0;
        let mut best = NONE;
        let mut cnt = self.block_size;
        let mut e = self.next_arc;
        let (mut i, mut j) = (e / self.k, e % self.k);
        for _ in 0..total {
            let c = (self.cost)(i, j);
            let ps = self.pi[i];
            let pt = self.pi[self.m + j];
            let rc = c + ps - pt;
            if rc < min && rc < -PRICE_EPS * (c.abs() + ps.abs() + pt.abs()) {
                min = rc;
                best = e;
            }
            e += 1;
            j += 1;
            if j == self.k {
                j = 0;
                i += 1;
            }
            if e == total {
                e = 0;
                i = 0;
                j = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if best != NONE {
                    break;
                }
                cnt = self.block_size;
            }
        }
        if best == NONE {
            return false;
        }
        self.in_arc = best;
        self.next_arc = e;
        true
    }

    fn pivot(&mut self) -> Result<()> {
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);

        let (mut u, mut v) = (first, second);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;

        let mut delta = i64::MAX;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == UP && self.pred_flow[u] < delta {
                delta = self.pred_flow[u];
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DOWN && self.pred_flow[u] <= delta {
                delta = self.pred_flow[u];
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 0 {
            return Err(Error::Solver("unbounded pivot".into()));
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }

        if delta > 0 {
            let mut u = first;
            while u != self.join {
                self.pred_flow[u] -= self.pred_dir[u] as i64 * delta;
                u = self.parent[u];
            }
            let mut u = second;
            while u != self.join {
                self.pred_flow[u] += self.pred_dir[u] as i64 * delta;
                u = self.parent[u];
            }
        }
        self.update_tree_structure(delta);
        self.update_potential();
        Ok(())
    }

    fn update_tree_structure(&mut self, delta: i64) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let in_arc = self.in_arc;
        let in_dir = if u_in == self.source(in_arc) { UP } else { DOWN };

        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = delta;

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for idx in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[idx];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            // Walk the stem from u_out back to u_in, shifting tree arcs
            // (with their flows) one step towards u_out.
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                self.pred_flow[u] = self.pred_flow[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = delta;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in]
            - self.pi[u_in]
            - self.pred_dir[u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Recomputes all potentials from the tree, discarding drift from
    /// incremental updates.
    fn recompute_potentials(&mut self) {
        self.pi[self.root] = 0.0;
        let mut u = self.thread[self.root];
        while u != self.root {
            let c = self.arc_cost(self.pred[u]);
            self.pi[u] = self.pi[self.parent[u]] - self.pred_dir[u] as f64 * c;
            u = self.thread[u];
        }
    }

    /// Verifies the thread, subtree and potential bookkeeping. Test builds
    /// run it after every pivot on small networks.
    #[cfg(test)]
    fn check_tree(&self) {
        let n = self.root + 1;
        let mut seen = vec![false; n];
        let mut u = self.root;
        for _ in 0..n {
            assert!(!seen[u], "thread revisits {u}");
            seen[u] = true;
            assert_eq!(self.rev_thread[self.thread[u]], u);
            u = self.thread[u];
        }
        assert_eq!(u, self.root);
        let is_descendant = |mut x: usize, v: usize| {
            while x != NONE {
                if x == v {
                    return true;
                }
                x = self.parent[x];
            }
            false
        };
        for v in 0..n {
            let mut count = 1;
            let mut last = v;
            let mut w = self.thread[v];
            while w != v && is_descendant(w, v) {
                count += 1;
                last = w;
                w = self.thread[w];
            }
            assert_eq!(count, self.succ_num[v], "succ_num at {v}");
            assert_eq!(last, self.last_succ[v], "last_succ at {v}");
        }
        for v in 0..self.root {
            let e = self.pred[v];
            let (s, t) = (self.source(e), self.target(e));
            let p = self.parent[v];
            let expected = if self.pred_dir[v] == UP { (v, p) } else { (p, v) };
            assert_eq!((s, t), expected);
            let rc = self.arc_cost(e) + self.pi[s] - self.pi[t];
            assert!(rc.abs() < 1e-9 * (1.0 + self.art_cost), "tree arc of {v} has reduced cost {rc}");
            assert!(self.pred_flow[v] >= 0);
        }
    }

    fn run(&mut self) -> Result<()> {
        if self.arc_num == 0 {
            return Ok(());
        }
        for _ in 0..MAX_RESTARTS {
            while self.find_entering_arc() {
                self.pivot()?;
                #[cfg(test)]
                if self.root < 100 {
                    self.check_tree();
                }
            }
            self.recompute_potentials();
            if !self.find_entering_arc() {
                return Ok(());
            }
            self.pivot()?;
        }
        Ok(())
    }

    /// Plan on the final basis. Flows are recomputed in floating point from
    /// the original marginals; if that disagrees with the fixed-point
    /// support, the fixed-point flows are used with rows rescaled to `a`.
    fn extract_plan(&self, a: &[f64], b: &[f64]) -> Vec<PlanEntry> {
        let n = self.root + 1;
        let mut sub = vec![0.0; n];
        for (i, &w) in a.iter().enumerate() {
            sub[i] = w;
        }
        for (j, &w) in b.iter().enumerate() {
            sub[self.m + j] = -w;
        }
        let mut exact = vec![0.0; n];
        let mut u = self.rev_thread[self.root];
        while u != self.root {
            exact[u] = self.pred_dir[u] as f64 * sub[u];
            let p = self.parent[u];
            sub[p] += sub[u];
            u = self.rev_thread[u];
        }

        let mut entries = Vec::new();
        let mut consistent = true;
        for u in 0..self.root {
            let e = self.pred[u];
            if e >= self.arc_num {
                continue;
            }
            if exact[u] < -NEGATIVE_FLOW_TOL {
                consistent = false;
            } else if exact[u] > DROP_FLOW_TOL {
                entries.push(PlanEntry {
                    i: e / self.k,
                    j: e % self.k,
                    mass: exact[u],
                });
            }
        }
        if consistent {
            entries.sort_by(|x, y| x.i.cmp(&y.i).then(x.j.cmp(&y.j)));
            return entries;
        }

        let mut entries: Vec<PlanEntry> = (0..self.root)
            .filter(|&u| self.pred[u] < self.arc_num && self.pred_flow[u] > 0)
            .map(|u| PlanEntry {
                i: self.pred[u] / self.k,
                j: self.pred[u] % self.k,
                mass: self.pred_flow[u] as f64 / FLOW_SCALE,
            })
            .collect();
        let mut rows = vec![0.0; a.len()];
        for e in &entries {
            rows[e.i] += e.mass;
        }
        for e in &mut entries {
            e.mass *= a[e.i] / rows[e.i];
        }
        entries.sort_by(|x, y| x.i.cmp(&y.i).then(x.j.cmp(&y.j)));
        entries
    }
}

/// North-west-corner coupling of two sorted weighted supports. Optimal for
/// any cost `g(x - y)` with `g` convex.
pub fn solve_monotone_1d(
    locations_a: &[f64],
    a: &[f64],
    locations_b: &[f64],
    b: &[f64],
) -> Result<TransportPlan> {
    for (loc, w) in [(locations_a, a), (locations_b, b)] {
        if loc.len() != w.len() {
            return Err(Error::Dimension {
                row: None,
                expected: loc.len(),
                found: w.len(),
            });
        }
    }
    if locations_a.windows(2).any(|p| !(p[0] <= p[1])) {
        return Err(Error::Unsorted("plus"));
    }
    if locations_b.windows(2).any(|p| !(p[0] <= p[1])) {
        return Err(Error::Unsorted("minus"));
    }
    check_marginal(a, "plus")?;
    check_marginal(b, "minus")?;

    let mut entries = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    while i < a.len() && j < b.len() {
        let q = ra.min(rb);
        if q > 0.0 {
            entries.push(PlanEntry { i, j, mass: q });
        }
        if ra <= rb {
            rb -= ra;
            i += 1;
            ra = if i < a.len() { a[i] } else { 0.0 };
        } else {
            ra -= rb;
            j += 1;
            rb = if j < b.len() { b[j] } else { 0.0 };
        }
    }
    TransportPlan::new(entries, a.len(), b.len())
}

pub fn plan_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    let mut total = 0.0;
    for e in plan.entries() {
        if e.i >= cost.rows() || e.j >= cost.cols() {
            return Err(Error::IndexOutOfRange {
                row: e.i,
                col: e.j,
                rows: cost.rows(),
                cols: cost.cols(),
            });
        }
        total += e.mass * cost.get(e.i, e.j);
    }
    Ok(total)
}

/// [`plan_cost`] for a cost given as a function.
pub fn plan_cost_with(plan: &TransportPlan, cost: impl Fn(usize, usize) -> f64) -> f64 {
    plan.entries().iter().map(|e| e.mass * cost(e.i, e.j)).sum()
}
