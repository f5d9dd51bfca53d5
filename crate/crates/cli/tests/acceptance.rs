//! End-to-end acceptance checks. Prints one PASS, FAIL or SKIP line per
//! criterion and exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use fairot_cli::config::Config;
use fairot_cli::emit::{aggregate, relative_table};
use fairot_cli::sweep::{load_source, prepare_seed};
use fairot_cli::{run_sweep, Method};
use fairot_core::aware::{interpolate_w2_at_level, EmpiricalDistribution};
use fairot_core::data::{gen_synthetic_1d, oracle_eta_1d, Rng};
use fairot_core::decomposition::{build_partition, estimate_delta};
use fairot_core::estimators::OraclePosterior;
use fairot_core::metrics::{ks, ks_grid, w2_empirical};
use fairot_core::ot::{plan_cost, solve_discrete_ot, solve_monotone_1d, CostMatrix};
use fairot_core::relaxation::{
    cost_tv_unaware, cost_w2_unaware, solve_relaxed, targets_tv, targets_w2, RelaxedProblem,
    TargetLookup,
};
use fairot_core::{GroupPriors, Lambda, Penalty, PseudoPoint, RelaxationConfig, TransportPlan};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

type Check = fn() -> Outcome;

fn main() {
    let checks: [(&str, Check); 12] = [
        ("closed-form kernels match brute-force minimization", closed_form_vs_oracle),
        ("gap identity of the W2 targets", gap_identity),
        ("large-lambda limits of the W2 targets", large_lambda_limits),
        ("transport solver against vertex enumeration", solver_correctness),
        ("unaware W2 reduces to aware interpolation", aware_unaware_consistency),
        ("ERM test MSE at the noise floor", erm_noise_floor),
        ("exact-fairness endpoint of unaware W2", exact_fairness_endpoint),
        ("TV pseudo-labels saturate at both ends", tv_saturation),
        ("monotone trade-off along the default grid", monotone_tradeoff),
        ("Law School relative table", law_school_relative),
        ("W2 metric matches the transport cost", metrics_oracle),
        ("sweep output is deterministic", determinism),
    ];
    // Comma list of criterion numbers to run; unset runs all.
    let selected: Option<Vec<usize>> = std::env::var("FAIROT_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|k| k.trim().parse().ok()).collect());
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = match &selected {
            Some(keep) if !keep.contains(&(k + 1)) => Outcome::Skip("not selected".into()),
            _ => check(),
        };
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {:>2}: {name} ({detail}) [{secs:.1}s]", k + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Pairwise kernels

/// One random pair: plus point `(h1, a1)`, minus point `(h2, -a2)`.
#[derive(Clone, Copy)]
struct Triple {
    h1: f64,
    h2: f64,
    a1: f64,
    a2: f64,
    lambda: f64,
}

impl Triple {
    fn points(&self) -> (PseudoPoint, PseudoPoint) {
        (
            PseudoPoint { h: self.h1, d: self.a1, w: 1.0 },
            PseudoPoint { h: self.h2, d: -self.a2, w: 1.0 },
        )
    }
}

fn triples() -> Vec<Triple> {
    let mut rng = Rng::new(20_240_611);
    (0..1000)
        .map(|_| Triple {
            h1: -3.0 + 6.0 * rng.uniform(),
            h2: -3.0 + 6.0 * rng.uniform(),
            a1: 0.05 + 4.95 * rng.uniform(),
            a2: 0.05 + 4.95 * rng.uniform(),
            lambda: 100.0 * rng.uniform(),
        })
        .collect()
}

const GOLDEN_ITERS: usize = 90;

/// Golden-section minimum of a unimodal function on `[lo, hi]`.
fn golden<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

const GRID: usize = 400;

fn hull(t: &Triple) -> (f64, f64) {
    (t.h1.min(t.h2) - 1.0, t.h1.max(t.h2) + 1.0)
}

fn grid_point(lo: f64, hi: f64, k: usize) -> f64 {
    lo + (hi - lo) * k as f64 / (GRID - 1) as f64
}

fn fit_term(t: &Triple, y1: f64, y2: f64) -> f64 {
    (t.h1 - y1).powi(2) / t.a1 + (t.h2 - y2).powi(2) / t.a2
}

/// Minimizer and minimum of `fit + lambda (y1 - y2)^2`: a grid scan, then
/// nested golden-section refinement over the padded hull.
fn oracle_w2(t: &Triple) -> (f64, f64, f64) {
    let (lo, hi) = hull(t);
    let phi = |y1: f64, y2: f64| fit_term(t, y1, y2) + t.lambda * (y1 - y2).powi(2);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..GRID {
        for j in 0..GRID {
            let (y1, y2) = (grid_point(lo, hi, i), grid_point(lo, hi, j));
            let v = phi(y1, y2);
            if v < best.0 {
                best = (v, y1, y2);
            }
        }
    }
    let inner = |y1: f64| golden(|y2| phi(y1, y2), lo, hi);
    let (y1, v) = golden(|y1| inner(y1).1, lo, hi);
    let y2 = inner(y1).0;
    if v <= best.0 {
        (v, y1, y2)
    } else {
        best
    }
}

/// TV objective `fit + lambda 1[y1 != y2]`, minimized separately on the
/// diagonal and off it. Returns the minimum, the diagonal minimizer and
/// both branch values.
fn oracle_tv(t: &Triple) -> (f64, f64, f64, f64) {
    let (lo, hi) = hull(t);
    let diag = |y: f64| fit_term(t, y, y);
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..GRID {
        let y = grid_point(lo, hi, k);
        if diag(y) < best.0 {
            best = (diag(y), y);
        }
    }
    let (y, v) = golden(diag, lo, hi);
    let (diag_min, y_diag) = if v <= best.0 { (v, y) } else { best };
    let (_, v1) = golden(|y1| (t.h1 - y1).powi(2) / t.a1, lo, hi);
    let (_, v2) = golden(|y2| (t.h2 - y2).powi(2) / t.a2, lo, hi);
    let off = t.lambda + v1 + v2;
    (diag_min.min(off), y_diag, diag_min, off)
}

fn closed_form_vs_oracle() -> Outcome {
    let start = Instant::now();
    let (mut cost_err, mut target_err) = (0.0f64, 0.0f64);
    for t in triples() {
        let (z1, z2) = t.points();
        let lambda = Lambda::Finite(t.lambda);

        let (v, y1, y2) = oracle_w2(&t);
        cost_err = cost_err.max((cost_w2_unaware(&z1, &z2, lambda).unwrap() - v).abs());
        let tw = targets_w2(&z1, &z2, lambda).unwrap();
        target_err = target_err.max((tw.y_plus - y1).abs()).max((tw.y_minus - y2).abs());

        let (v, y_diag, diag, off) = oracle_tv(&t);
        cost_err = cost_err.max((cost_tv_unaware(&z1, &z2, lambda).unwrap() - v).abs());
        let tt = targets_tv(&z1, &z2, lambda).unwrap();
        let merged_err = (tt.y_plus - y_diag).abs().max((tt.y_minus - y_diag).abs());
        let apart_err = (tt.y_plus - t.h1).abs().max((tt.y_minus - t.h2).abs());
        let err = if (diag - off).abs() <= 1e-9 {
            merged_err.min(apart_err)
        } else if diag < off {
            merged_err
        } else {
            apart_err
        };
        target_err = target_err.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        cost_err <= 1e-4 && target_err <= 1e-4 && secs < 30.0,
        format!("max cost err {cost_err:.2e}, max target err {target_err:.2e}, {secs:.1}s; need <= 1e-4, <= 1e-4, < 30s"),
    )
}

fn gap_identity() -> Outcome {
    let mut worst = 0.0f64;
    for t in triples() {
        let (z1, z2) = t.points();
        let tw = targets_w2(&z1, &z2, Lambda::Finite(t.lambda)).unwrap();
        let want = (t.h1 - t.h2) / (1.0 + t.lambda * (t.a1 + t.a2));
        worst = worst.max((tw.y_plus - tw.y_minus - want).abs());
    }
    verdict(worst <= 1e-12, format!("max deviation {worst:.2e}; need <= 1e-12"))
}

fn large_lambda_limits() -> Outcome {
    let (mut worst_ratio, mut inexact) = (0.0f64, 0);
    for t in triples() {
        let (z1, z2) = t.points();
        let bary = (t.a2 * t.h1 + t.a1 * t.h2) / (t.a1 + t.a2);
        let gap = (t.h1 - t.h2).abs();
        let big = targets_w2(&z1, &z2, Lambda::Finite(1e8)).unwrap();
        let dev = (big.y_plus - bary).abs().max((big.y_minus - bary).abs());
        if gap > 0.0 {
            worst_ratio = worst_ratio.max(dev / gap);
        }
        let inf = targets_w2(&z1, &z2, Lambda::Infinite).unwrap();
        if inf.y_plus != bary || inf.y_minus != bary {
            inexact += 1;
        }
    }
    verdict(
        worst_ratio <= 1e-6 && inexact == 0,
        format!("max deviation/gap at 1e8 {worst_ratio:.2e} (need <= 1e-6), {inexact} inexact infinite cases"),
    )
}

// ---------------------------------------------------------------------------
// Transport solver

/// Positive parts of `total` split into `len` pieces.
fn compositions(total: usize, len: usize) -> Vec<Vec<usize>> {
    if len == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 1..=total - (len - 1) {
        for mut rest in compositions(total - first, len - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Marginals on the 0.1 grid with up to four atoms.
fn grid_marginals() -> Vec<Vec<f64>> {
    (1..=4)
        .flat_map(|len| compositions(10, len))
        .map(|c| c.into_iter().map(|k| k as f64 / 10.0).collect())
        .collect()
}

/// Spanning trees of the complete bipartite graph `K_{m,k}`, as cell lists.
fn spanning_trees(m: usize, k: usize) -> Vec<Vec<(usize, usize)>> {
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let need = m + k - 1;
    let mut out = Vec::new();
    let n = cells.len();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != need {
            continue;
        }
        let mut parent: Vec<usize> = (0..m + k).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        let mut acyclic = true;
        let mut tree = Vec::with_capacity(need);
        for (bit, &(i, j)) in cells.iter().enumerate() {
            if mask & (1 << bit) == 0 {
                continue;
            }
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, m + j));
            if ri == rj {
                acyclic = false;
                break;
            }
            parent[ri] = rj;
            tree.push((i, j));
        }
        if acyclic {
            out.push(tree);
        }
    }
    out
}

/// Flows on a spanning tree meeting the marginals, found by peeling leaves.
fn tree_flows(a: &[f64], b: &[f64], tree: &[(usize, usize)]) -> Option<Vec<f64>> {
    let (m, k) = (a.len(), b.len());
    let mut supply: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut flows = vec![f64::NAN; tree.len()];
    let mut open: Vec<bool> = vec![true; tree.len()];
    for _ in 0..tree.len() {
        let mut degree = vec![0usize; m + k];
        for (e, &(i, j)) in tree.iter().enumerate() {
            if open[e] {
                degree[i] += 1;
                degree[m + j] += 1;
            }
        }
        let (e, leaf) = tree.iter().enumerate().filter(|(e, _)| open[*e]).find_map(|(e, &(i, j))| {
            if degree[i] == 1 {
                Some((e, i))
            } else if degree[m + j] == 1 {
                Some((e, m + j))
            } else {
                None
            }
        })?;
        let (i, j) = tree[e];
        let f = supply[leaf];
        flows[e] = f;
        supply[i] -= f;
        supply[m + j] -= f;
        open[e] = false;
    }
    if flows.iter().any(|&f| f < -1e-12) {
        return None;
    }
    Some(flows)
}

/// Plan cost in exact integer units for integer locations and masses on
/// the 0.1 grid. `None` if any mass is off the grid.
fn lattice_cost(plan: &TransportPlan, xa: &[f64], xb: &[f64]) -> Option<i64> {
    let mut total = 0i64;
    for e in plan.entries() {
        let units = (10.0 * e.mass).round();
        if (10.0 * e.mass - units).abs() > 1e-12 {
            return None;
        }
        let d = (xa[e.i] - xb[e.j]) as i64;
        total += units as i64 * d * d;
    }
    Some(total)
}

fn solver_correctness() -> Outcome {
    let marginals = grid_marginals();
    let trees: Vec<Vec<Vec<Vec<(usize, usize)>>>> = (1..=4)
        .map(|m| (1..=4).map(|k| spanning_trees(m, k)).collect())
        .collect();
    let mut rng = Rng::new(7);
    let (mut worst, mut solves, mut mono_mismatch, mut mono_worst) = (0.0f64, 0usize, 0usize, 0.0f64);
    for a in &marginals {
        for b in &marginals {
            let vertices: Vec<(Vec<(usize, usize)>, Vec<f64>)> = trees[a.len() - 1][b.len() - 1]
                .iter()
                .filter_map(|t| tree_flows(a, b, t).map(|f| (t.clone(), f)))
                .collect();
            for _ in 0..20 {
                let raw: Vec<f64> = (0..a.len() * b.len()).map(|_| 10.0 * rng.uniform()).collect();
                let c = CostMatrix::from_fn(a.len(), b.len(), |i, j| raw[i * b.len() + j]).unwrap();
                let best = vertices
                    .iter()
                    .map(|(t, f)| t.iter().zip(f).map(|(&(i, j), &x)| x * c.get(i, j)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                let plan = solve_discrete_ot(a, b, &c).unwrap();
                worst = worst.max((plan_cost(&plan, &c).unwrap() - best).abs());
                solves += 1;
            }

            let mut xa: Vec<f64> = (0..a.len()).map(|_| (10.0 * rng.uniform()).round()).collect();
            let mut xb: Vec<f64> = (0..b.len()).map(|_| (10.0 * rng.uniform()).round()).collect();
            xa.sort_by(f64::total_cmp);
            xb.sort_by(f64::total_cmp);
            let c = CostMatrix::from_fn(a.len(), b.len(), |i, j| (xa[i] - xb[j]).powi(2)).unwrap();
            let mono = solve_monotone_1d(&xa, a, &xb, b).unwrap();
            let simplex = solve_discrete_ot(a, b, &c).unwrap();
            let (mono_units, simplex_units) = (lattice_cost(&mono, &xa, &xb), lattice_cost(&simplex, &xa, &xb));
            if mono_units.is_none() || mono_units != simplex_units {
                mono_mismatch += 1;
            }
            let float_diff = (plan_cost(&mono, &c).unwrap() - plan_cost(&simplex, &c).unwrap()).abs();
            mono_worst = mono_worst.max(float_diff);
        }
    }
    verdict(
        worst <= 1e-9 && mono_mismatch == 0,
        format!(
            "{solves} solves, max gap to enumeration {worst:.2e} (need <= 1e-9); \
             monotone vs simplex: {mono_mismatch} of {} differ in exact lattice cost, \
             max float rounding diff {mono_worst:.2e}",
            marginals.len() * marginals.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// Pipelines

fn aware_unaware_consistency() -> Outcome {
    let ds = gen_synthetic_1d(4000, 0.6, 11).unwrap().with_sensitive_feature();
    let priors = GroupPriors::from_dataset(&ds).unwrap();
    let last = ds.n_features() - 1;
    let true_group = OraclePosterior(move |x: &[f64]| x[last]);
    let h: Vec<f64> = ds.rows().map(|x| oracle_eta_1d(x[0])).collect();
    let d: Vec<f64> = ds.rows().map(|x| estimate_delta(&true_group, &priors, x).unwrap()).collect();
    let partition = build_partition(&h, &d, 1e-6).unwrap();

    let plus = partition.measure_plus.points();
    let minus = partition.measure_minus.points();
    let dist_plus = EmpiricalDistribution::from_sample(&plus.iter().map(|p| p.h).collect::<Vec<_>>()).unwrap();
    let dist_minus = EmpiricalDistribution::from_sample(&minus.iter().map(|p| p.h).collect::<Vec<_>>()).unwrap();
    // Rank of each point within its own group, for the quantile interval it
    // occupies.
    let ranks = |pts: &[PseudoPoint]| {
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&x, &y| pts[x].h.total_cmp(&pts[y].h));
        let mut rank = vec![0; pts.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        rank
    };
    let (rank_plus, rank_minus) = (ranks(plus), ranks(minus));
    let (np, nm) = (plus.len() as f64, minus.len() as f64);

    let (mut worst, mut unmatched, mut pairs) = (0.0f64, 0usize, 0usize);
    for l in [0.1, 1.0, 10.0] {
        let lambda = Lambda::Finite(l);
        let config = RelaxationConfig::unaware(Penalty::W2, lambda);
        let solution = solve_relaxed(&partition, &config).unwrap();
        let problem = RelaxedProblem::new(&partition, &config).unwrap();
        for e in solution.plan.as_ref().unwrap().entries() {
            pairs += 1;
            let lo = (rank_plus[e.i] as f64 / np).max(rank_minus[e.j] as f64 / nm);
            let hi = ((rank_plus[e.i] + 1) as f64 / np).min((rank_minus[e.j] + 1) as f64 / nm);
            if !(lo < hi) {
                unmatched += 1;
                continue;
            }
            let t = 0.5 * (lo + hi);
            let y = problem.targets(e.i, e.j);
            let want_plus =
                interpolate_w2_at_level(plus[e.i].h, t, &dist_plus, &dist_minus, &priors, lambda).unwrap();
            let want_minus =
                interpolate_w2_at_level(minus[e.j].h, t, &dist_plus, &dist_minus, &priors, lambda).unwrap();
            worst = worst.max((y.y_plus - want_plus).abs()).max((y.y_minus - want_minus).abs());
        }
    }
    verdict(
        worst <= 1e-6 && unmatched == 0,
        format!("{pairs} plan pairs, {unmatched} not quantile-matched, max target deviation {worst:.2e}; need <= 1e-6"),
    )
}

fn synthetic_2d(n: usize, methods: &str, grid: &str, seeds: usize) -> Config {
    Config::from_toml_str(&format!(
        "version = 1\n[dataset]\nsource = \"synthetic-2d\"\nn = {n}\ngamma = 0.5\n\
         [run]\nmethods = {methods}\nlambda_grid = \"{grid}\"\nseeds = {seeds}\n"
    ))
    .unwrap()
}

fn erm_noise_floor() -> Outcome {
    let start = Instant::now();
    let records = run_sweep(&synthetic_2d(10_000, "[\"erm\"]", "0", 10)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mean = records.iter().map(|r| r.report.mse).sum::<f64>() / records.len() as f64;
    verdict(
        (0.23..=0.27).contains(&mean) && secs < 10.0 && records.len() == 10,
        format!("mean test MSE {mean:.4} over {} seeds in {secs:.1}s; need [0.23, 0.27], < 10s", records.len()),
    )
}

fn exact_fairness_endpoint() -> Outcome {
    let records = run_sweep(&synthetic_2d(10_000, "[\"erm\", \"ot-u-w2\"]", "inf", 10)).unwrap();
    let aggs = aggregate(&records);
    let erm = aggs.iter().find(|a| a.method == Method::Erm).unwrap();
    let ot = aggs.iter().find(|a| a.method == Method::OtUnawareW2).unwrap();
    let ratio = ot.mean.w2 / erm.mean.w2;
    verdict(
        ratio < 0.15,
        format!("mean W2 {:.4} vs ERM {:.4}, ratio {ratio:.3}; need < 0.15", ot.mean.w2, erm.mean.w2),
    )
}

fn tv_saturation() -> Outcome {
    let config = synthetic_2d(10_000, "[\"ot-u-tv\"]", "inf", 1);
    let loaded = load_source(&config.source().unwrap()).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for seed in [0u64, 1] {
        let ctx = prepare_seed(&config, &loaded, seed).unwrap();
        let partition = &ctx.partition;
        let (plus, minus) = (partition.measure_plus.points(), partition.measure_minus.points());
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for p in plus {
            for q in minus {
                let thr = (p.h - q.h).powi(2) / (p.d.abs() + q.d.abs());
                lo = lo.min(thr);
                hi = hi.max(thr);
            }
        }
        let below = RelaxationConfig::unaware(Penalty::TV, Lambda::Finite(0.5 * lo));
        let above = RelaxationConfig::unaware(Penalty::TV, Lambda::Finite(2.0 * hi));
        let exact = RelaxationConfig::unaware(Penalty::TV, Lambda::Infinite);
        let labels_below = solve_relaxed(partition, &below).unwrap().pseudo_labels;
        let labels_above = solve_relaxed(partition, &above).unwrap().pseudo_labels;
        let labels_exact = solve_relaxed(partition, &exact).unwrap().pseudo_labels;
        let identity = labels_below.as_slice() == partition.h_values();
        let saturated = labels_above == labels_exact;
        ok &= identity && saturated;
        details.push(format!(
            "seed {seed}: thresholds [{lo:.2e}, {hi:.2e}], identity below {identity}, exact above {saturated}"
        ));
    }
    verdict(ok, details.join("; "))
}

fn monotone_tradeoff() -> Outcome {
    let config = synthetic_2d(4000, "[\"ot-u-w2\", \"ot-a-w2\"]", "default", 10);
    let aggs = aggregate(&run_sweep(&config).unwrap());
    let mut ok = true;
    let mut details = Vec::new();
    for method in [Method::OtUnawareW2, Method::OtAwareW2] {
        let curve: Vec<_> = aggs.iter().filter(|a| a.method == method).collect();
        let (mut mse_excess, mut w2_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for pair in curve.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let mse_drop = a.mean.mse - b.mean.mse;
            let w2_rise = b.mean.w2 - a.mean.w2;
            mse_excess = mse_excess.max(mse_drop - a.std.mse.max(b.std.mse));
            w2_excess = w2_excess.max(w2_rise - a.std.w2.max(b.std.w2));
        }
        ok &= mse_excess <= 0.0 && w2_excess <= 0.0;
        details.push(format!(
            "{method}: worst MSE drop minus std {mse_excess:.2e}, worst W2 rise minus std {w2_excess:.2e}"
        ));
    }
    verdict(ok, format!("{} points per curve; {}; need <= 0", aggs.len() / 2, details.join("; ")))
}

fn law_school_csv() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("FAIROT_LAW_SCHOOL_CSV") {
        return Some(PathBuf::from(p));
    }
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/law_school.csv");
    p.exists().then_some(p)
}

fn law_school_relative() -> Outcome {
    let Some(path) = law_school_csv() else {
        return Outcome::Skip("no Law School CSV; set FAIROT_LAW_SCHOOL_CSV or add data/law_school.csv".into());
    };
    let mut config = Config::for_dataset("law_school");
    config.dataset.path = Some(path);
    config.run.methods = vec![Method::Erm, Method::OtUnawareW2, Method::PluginHard, Method::PluginSoft];
    config.run.lambda_grid = "inf".into();
    let records = match run_sweep(&config) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.render()),
    };
    let rows = relative_table(&aggregate(&records)).unwrap();
    let row = |m: Method| rows.iter().find(|r| r.method == m).unwrap().values;
    let ot = row(Method::OtUnawareW2);
    let (hard, soft) = (row(Method::PluginHard), row(Method::PluginSoft));
    verdict(
        (1.02..=1.09).contains(&ot[0]) && (0.05..=0.20).contains(&ot[1]) && hard[1] >= 0.25 && soft[1] >= 0.25,
        format!(
            "OT-U relative MSE {:.3} (need [1.02, 1.09]), W2 {:.3} (need [0.05, 0.20]); plug-in W2 {:.3}/{:.3} (need >= 0.25)",
            ot[0], ot[1], hard[1], soft[1]
        ),
    )
}

// ---------------------------------------------------------------------------
// Metrics and determinism

fn metrics_oracle() -> Outcome {
    let mut rng = Rng::new(99);
    let (mut worst, mut ks_violations) = (0.0f64, 0);
    for k in 0..100 {
        let sample = |rng: &mut Rng, n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let v = -5.0 + 10.0 * rng.uniform();
                    // Every other pair uses coarse values so ties occur.
                    if k % 2 == 0 { v } else { v.round() }
                })
                .collect()
        };
        let na = 1 + rng.below(50);
        let nb = 1 + rng.below(50);
        let (a, b) = (sample(&mut rng, na), sample(&mut rng, nb));
        let wa = vec![1.0 / na as f64; na];
        let wb = vec![1.0 / nb as f64; nb];
        let c = CostMatrix::from_fn(na, nb, |i, j| (a[i] - b[j]).powi(2)).unwrap();
        let ot = plan_cost(&solve_discrete_ot(&wa, &wb, &c).unwrap(), &c).unwrap().sqrt();
        worst = worst.max((w2_empirical(&a, &b).unwrap() - ot).abs());
        if ks_grid(&a, &b, 50).unwrap() > ks(&a, &b).unwrap() {
            ks_violations += 1;
        }
    }
    verdict(
        worst <= 1e-9 && ks_violations == 0,
        format!("max |w2 - sqrt(ot cost)| {worst:.2e} (need <= 1e-9), {ks_violations} grid KS above KS"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        "version = 1\n[dataset]\nsource = \"synthetic-1d\"\nn = 600\ngamma = 0.6\n\
         [run]\nlambda_grid = \"0,0.1,1,10,inf\"\nseeds = 2\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_fairot"))
            .args(["sweep", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome::Fail(String::from_utf8_lossy(&status.stderr).trim().to_string());
        }
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    let same = outputs[0] == outputs[1];
    verdict(
        same && outputs[0].len() == 7,
        format!("{} CSV files per run, byte-identical: {same}", outputs[0].len()),
    )
}
