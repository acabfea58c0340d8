use rayon::prelude::*;
use serde_json::{json, Value};

use moduli_core::coeffring::rat;
use moduli_core::hyperbolic::{mcshane_partial_sums, FNTorus, TorusKernel};
use moduli_core::kernels::{quadrature_oracle, OracleTarget};
use moduli_core::stablegraphs::graph_sum_for_family;
use moduli_core::tqft::{amplitudes_all_decompositions, rank_factorization_residuals, su2_level, verlinde_rank};
use moduli_core::trengine::{
    check_airy_relations, check_integrated_symmetry, ks_recursion, stable_range, twisted_volume, AiryTensors,
};
use moduli_core::*;

use crate::config::{RunConfig, Suite};
use crate::output::Table;
use crate::Failure;

struct SuiteResult {
    passed: bool,
    detail: String,
    failures: Vec<String>,
}

fn done(detail: String, failures: Vec<String>) -> SuiteResult {
    SuiteResult { passed: failures.is_empty(), detail, failures }
}

fn run(cfg: &RunConfig, suite: Suite) -> Result<SuiteResult, String> {
    let maxc = cfg.max_complexity.unwrap_or(3);
    match suite {
        Suite::OracleTriangle => oracle_triangle(cfg, maxc),
        Suite::Airy => airy(cfg),
        Suite::Symmetry => symmetry(cfg, maxc),
        Suite::Scaling => scaling(maxc),
        Suite::Moments => moments(cfg),
        Suite::Mcshane => mcshane(cfg),
        Suite::Tqft => tqft(maxc),
    }
}

fn oracle_triangle(cfg: &RunConfig, maxc: u32) -> Result<SuiteResult, String> {
    let data = cfg.kernel.data();
    let engine = Engine::<CoeffElem>::new(data.clone());
    let tensors = AiryTensors::from_data(data.as_ref(), 2 * maxc + 2).map_err(|e| e.to_string())?;
    let formal = MomentSpec::Formal { tag: 0 };
    let graphs = cfg.kernel.perturbed.is_none();
    let cells = stable_range(maxc);
    let failures: Vec<Vec<String>> = cells
        .par_iter()
        .map(|&(g, n)| -> Result<Vec<String>, EngineError> {
            let mut bad = Vec::new();
            let v = engine.volume(g, n)?;
            let f = ks_recursion(&tensors, g, n)?;
            if f.len() != v.len() || v.terms().any(|(d, c)| f.get(d) != Some(c)) {
                bad.push(format!("KS recursion differs at ({g},{n})"));
            }
            if graphs {
                let fam = &cfg.kernel.family;
                let a = graph_sum_for_family::<FormalCoeff>(g, n, fam, &formal)?;
                let b = twisted_volume::<FormalCoeff>(g, n, fam, &formal)?;
                if a != b {
                    bad.push(format!("stable graph sum differs at ({g},{n})"));
                }
            }
            Ok(bad)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let what = if graphs { "KS recursion and stable graph sums" } else { "KS recursion" };
    Ok(done(format!("{what} on {} cells", cells.len()), failures.concat()))
}

fn airy(cfg: &RunConfig) -> Result<SuiteResult, String> {
    let t = AiryTensors::from_data(cfg.kernel.data().as_ref(), cfg.window + 5).map_err(|e| e.to_string())?;
    let r = check_airy_relations(&t, cfg.window).map_err(|e| e.to_string())?;
    let failures = r.failing_relations().iter().map(|k| format!("relation {k}")).collect();
    Ok(done(format!("{}", r).trim_end().to_string(), failures))
}

fn symmetry(cfg: &RunConfig, maxc: u32) -> Result<SuiteResult, String> {
    let data = cfg.kernel.data();
    let r = check_integrated_symmetry::<CoeffElem>(data.as_ref(), cfg.window).map_err(|e| e.to_string())?;
    let mut failures: Vec<String> = r.failing().iter().map(|c| format!("integrated condition {c}")).collect();
    let engine = Engine::<CoeffElem>::new(data);
    let cells = stable_range(maxc);
    for &(g, n) in &cells {
        if !engine.volume(g, n).map_err(|e| e.to_string())?.is_symmetric() {
            failures.push(format!("volume ({g},{n}) not symmetric"));
        }
    }
    Ok(done(format!("four integrated conditions, symmetry of {} volumes", cells.len()), failures))
}

fn scaling(maxc: u32) -> Result<SuiteResult, String> {
    let betas = [rat(1, 2), rat(2, 3), rat(3, 2), rat(2, 1), rat(5, 2)];
    let cells = stable_range(maxc);
    let mut failures = Vec::new();
    for &(g, n) in &cells {
        let vm = trengine::volume(g, n, &KernelFamily::Mirzakhani).map_err(|e| e.to_string())?;
        let dim = 6 * g as i32 - 6 + 2 * n as i32;
        for beta in &betas {
            let fam = KernelFamily::beta_scaled(beta.clone()).map_err(|e| e.to_string())?;
            let vb = trengine::volume(g, n, &fam).map_err(|e| e.to_string())?;
            let mut expect = EvenPoly::new(n);
            for (d, c) in vm.terms() {
                let p = 2 * d.iter().sum::<u32>() as i32 - dim;
                let mut w = rat(1, 1);
                let base = if p >= 0 { beta.clone() } else { rat(1, 1) / beta.clone() };
                for _ in 0..p.unsigned_abs() {
                    w *= base.clone();
                }
                expect.add_term(d.clone(), c.scale(&w));
            }
            if vb != expect {
                failures.push(format!("scaling law at ({g},{n}), beta {beta}"));
            }
        }
        let vk = trengine::volume(g, n, &KernelFamily::Kontsevich).map_err(|e| e.to_string())?;
        if vm.top_degree_part() != vk {
            failures.push(format!("top degree at ({g},{n})"));
        }
    }
    Ok(done(format!("{} cells, {} values of beta", cells.len(), betas.len()), failures))
}

fn moments(cfg: &RunConfig) -> Result<SuiteResult, String> {
    let fam = &cfg.kernel.family;
    let data = cfg.kernel.data();
    let pts = [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0];
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut check = |what: String, exact: f64, q: f64| {
        let rel = ((q - exact) / exact).abs();
        worst = worst.max(rel);
        if rel >= cfg.rel_tol {
            failures.push(format!("{what}: relative error {rel:.2e}"));
        }
    };
    for k in 0..=4 {
        let b = data.b_moment(k).map_err(|e| e.to_string())?;
        for (i, &l1) in pts.iter().enumerate() {
            let l2 = pts[(i + 3) % pts.len()];
            let exact = b.eval_real(&[l1, l2]).map_err(|e| e.to_string())?;
            let q = quadrature_oracle(fam, OracleTarget::B { k, l1, l2 }).map_err(|e| e.to_string())?;
            check(format!("B k={k} at ({l1},{l2})"), exact, q);
        }
    }
    for j in 0..=4 {
        for k in 0..=(4 - j) {
            let c = data.c_moment(j, k).map_err(|e| e.to_string())?;
            for &l1 in &pts {
                let exact = c.eval_real(&[l1]).map_err(|e| e.to_string())?;
                let q = quadrature_oracle(fam, OracleTarget::C { j, k, l1 }).map_err(|e| e.to_string())?;
                check(format!("C j={j} k={k} at {l1}"), exact, q);
            }
        }
    }
    Ok(done(format!("maximal relative error {worst:.2e}"), failures))
}

fn mcshane(cfg: &RunConfig) -> Result<SuiteResult, String> {
    let points = [(2.0, 1.0, 0.0), (3.0, 2.0, 0.7), (4.0, 1.5, -0.4)];
    let mut failures = Vec::new();
    let mut sums = Vec::new();
    for (l, ell, tau) in points {
        let t = FNTorus::new(l, ell, tau).map_err(|e| e.to_string())?;
        let rows = mcshane_partial_sums(&t, cfg.cutoff, TorusKernel::Mirzakhani).map_err(|e| e.to_string())?;
        if rows.windows(2).any(|w| w[1].partial_sum <= w[0].partial_sum) {
            failures.push(format!("partial sums not increasing at ({l},{ell},{tau})"));
        }
        let s = rows.last().map_or(0.0, |r| r.partial_sum);
        if s > 1.0 + 1e-9 || (s - 1.0).abs() >= cfg.abs_tol {
            failures.push(format!("sum {s} at ({l},{ell},{tau})"));
        }
        sums.push(format!("{s:.9}"));
    }
    Ok(done(format!("sums {}", sums.join(", ")), failures))
}

fn tqft(maxc: u32) -> Result<SuiteResult, String> {
    let mut failures = Vec::new();
    let mut ranks = 0;
    for k in 1..=4 {
        let alg = su2_level(k).map_err(|e| e.to_string())?;
        for (g, n) in stable_range(maxc.min(3)) {
            let all = amplitudes_all_decompositions(&alg, g, n).map_err(|e| e.to_string())?;
            if all.iter().any(|t| *t != all[0]) {
                failures.push(format!("su2 level {k} ({g},{n}) depends on the decomposition"));
            }
            for idx in all[0].indices() {
                let r = verlinde_rank(&alg, g, &idx).map_err(|e| e.to_string())?;
                if coeffring::rat_int(r.rank) != *all[0].get(&idx) {
                    failures.push(format!("su2 level {k} ({g},{n}) {idx:?}: rank {}", r.rank));
                }
                ranks += 1;
            }
        }
        for (g, n) in stable_range(maxc.min(2)) {
            if !rank_factorization_residuals(&alg, g, n).map_err(|e| e.to_string())?.is_empty() {
                failures.push(format!("su2 level {k} ({g},{n}) rank factorization"));
            }
        }
    }
    Ok(done(format!("{ranks} ranks compared"), failures))
}

pub fn verify(cfg: &RunConfig) -> Result<(Table, bool), Failure> {
    let mut table = Table::new(Value::Null, vec!["suite", "passed", "detail", "failures"]);
    let mut out = Vec::new();
    let mut all = true;
    for &suite in &cfg.suites {
        let r = run(cfg, suite).unwrap_or_else(|e| SuiteResult { passed: false, detail: "error".into(), failures: vec![e] });
        if !r.passed {
            eprintln!("{} failed: {}", suite.name(), r.failures.join("; "));
        }
        all &= r.passed;
        table.push(vec![suite.name().into(), r.passed.to_string(), r.detail.clone(), r.failures.join("; ")]);
        out.push(json!({"suite": suite.name(), "passed": r.passed, "detail": r.detail, "failures": r.failures}));
    }
    table.json = json!({"kernel": cfg.kernel.id(), "passed": all, "suites": out});
    Ok((table, all))
}
