use rayon::prelude::*;
use serde_json::{json, Value};

use moduli_core::hyperbolic::{mcshane_partial_sums, FNTorus, TorusKernel};
use moduli_core::stablegraphs::{enumerate, inverse_aut_sum};
use moduli_core::tqft::verlinde_rank;
use moduli_core::trengine::{check_airy_relations, psi_intersections, twisted_volume, AiryTensors};
use moduli_core::{CoeffElem, Coefficient, Engine, EvenPoly, FormalCoeff, KernelFamily, Rational};

use crate::config::{Format, RunConfig};
use crate::output::{join, Table};
use crate::Failure;

const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;

fn compute<E: ToString>(e: E) -> Failure {
    Failure::Compute(e.to_string())
}

fn rational_value(q: &Rational) -> f64 {
    CoeffElem::from_rational(q.clone()).eval(PI2)
}

fn poly_terms(p: &EvenPoly, numeric: bool) -> Vec<Value> {
    p.terms()
        .map(|(d, c)| {
            if numeric {
                json!({"d": d, "value": c.eval(PI2)})
            } else {
                json!({"d": d, "coeff": c.to_json()})
            }
        })
        .collect()
}

fn exact_rows(table: &mut Table, g: u32, n: usize, p: &EvenPoly, numeric: bool) {
    for (d, c) in p.terms() {
        if numeric {
            table.push(vec![g.to_string(), n.to_string(), join(d), c.eval(PI2).to_string()]);
        } else {
            for (k, q) in c.terms() {
                table.push(vec![
                    g.to_string(),
                    n.to_string(),
                    join(d),
                    k.to_string(),
                    q.numer().to_string(),
                    q.denom().to_string(),
                ]);
            }
        }
    }
}

fn poly_header(numeric: bool) -> Vec<&'static str> {
    if numeric {
        vec!["g", "n", "d", "value"]
    } else {
        vec!["g", "n", "d", "pi2", "num", "den"]
    }
}

pub fn volumes(cfg: &RunConfig) -> Result<Table, Failure> {
    let engine = Engine::<CoeffElem>::new(cfg.kernel.data());
    let cells = cfg.cells_or(3);
    let polys = cells
        .par_iter()
        .map(|&(g, n)| engine.volume(g, n))
        .collect::<Result<Vec<_>, _>>()
        .map_err(compute)?;
    let mut table = Table::new(Value::Null, poly_header(cfg.numeric));
    let mut rows = Vec::new();
    for (&(g, n), p) in cells.iter().zip(&polys) {
        rows.push(json!({"g": g, "n": n, "polynomial": p.to_string(), "terms": poly_terms(p, cfg.numeric)}));
        exact_rows(&mut table, g, n, p, cfg.numeric);
    }
    table.json = json!({"kernel": engine.id(), "volumes": rows});
    Ok(table)
}

pub fn psi(cfg: &RunConfig) -> Result<Table, Failure> {
    let cells = cfg.cells_or(3);
    let tables = cells
        .par_iter()
        .map(|&(g, n)| psi_intersections(g, n))
        .collect::<Result<Vec<_>, _>>()
        .map_err(compute)?;
    let mut table = Table::new(Value::Null, vec!["g", "n", "d", "value"]);
    let mut rows = Vec::new();
    for (&(g, n), t) in cells.iter().zip(&tables) {
        for (d, q) in t {
            let value = if cfg.numeric { json!(rational_value(q)) } else { json!(q.to_string()) };
            let text = if cfg.numeric { rational_value(q).to_string() } else { q.to_string() };
            rows.push(json!({"g": g, "n": n, "d": d, "value": value}));
            table.push(vec![g.to_string(), n.to_string(), join(d), text]);
        }
    }
    table.json = json!({"intersections": rows});
    Ok(table)
}

fn twist_cells<C: Coefficient>(cfg: &RunConfig, cells: &[(u32, usize)]) -> Result<Vec<EvenPoly<C>>, Failure> {
    cells
        .par_iter()
        .map(|&(g, n)| twisted_volume::<C>(g, n, &cfg.kernel.family, &cfg.twist))
        .collect::<Result<Vec<_>, _>>()
        .map_err(compute)
}

pub fn twist(cfg: &RunConfig) -> Result<Table, Failure> {
    if cfg.kernel.perturbed.is_some() {
        return Err(Failure::Config("twist needs an unperturbed kernel family".into()));
    }
    let cells = cfg.cells_or(3);
    let header = json!({"kernel": cfg.kernel.family.to_json(), "twist": cfg.twist.to_json()});
    let mut rows = Vec::new();
    let mut table;
    if cfg.twist.is_formal() {
        if cfg.numeric {
            return Err(Failure::Config("numeric output needs a twist with concrete moments".into()));
        }
        table = Table::new(Value::Null, vec!["g", "n", "d", "coeff"]);
        for (&(g, n), p) in cells.iter().zip(twist_cells::<FormalCoeff>(cfg, &cells)?.iter()) {
            let terms: Vec<Value> = p.terms().map(|(d, c)| json!({"d": d, "coeff": c.to_json()})).collect();
            rows.push(json!({"g": g, "n": n, "polynomial": p.to_string(), "terms": terms}));
            for (d, c) in p.terms() {
                table.push(vec![g.to_string(), n.to_string(), join(d), c.to_string()]);
            }
        }
    } else {
        table = Table::new(Value::Null, poly_header(cfg.numeric));
        for (&(g, n), p) in cells.iter().zip(twist_cells::<CoeffElem>(cfg, &cells)?.iter()) {
            rows.push(json!({"g": g, "n": n, "polynomial": p.to_string(), "terms": poly_terms(p, cfg.numeric)}));
            exact_rows(&mut table, g, n, p, cfg.numeric);
        }
    }
    table.json = json!({"kernel": header["kernel"], "twist": header["twist"], "volumes": rows});
    Ok(table)
}

pub fn graphs(cfg: &RunConfig) -> Result<Table, Failure> {
    let cells = cfg.cells_or(2);
    let lists = cells
        .par_iter()
        .map(|&(g, n)| Ok((enumerate(g, n)?, inverse_aut_sum(g, n)?)))
        .collect::<Result<Vec<_>, moduli_core::EngineError>>()
        .map_err(compute)?;
    let mut table = Table::new(Value::Null, vec!["g", "n", "index", "vertex_genera", "edges", "leaves", "aut"]);
    let mut out = Vec::new();
    for (&(g, n), (list, inv)) in cells.iter().zip(&lists) {
        out.push(json!({
            "g": g,
            "n": n,
            "count": list.len(),
            "inverse_aut_sum": inv.to_string(),
            "graphs": list.iter().map(|s| s.to_json()).collect::<Vec<_>>(),
        }));
        for (i, s) in list.iter().enumerate() {
            let edges: Vec<String> = s.edges.iter().map(|(a, b)| format!("{a}-{b}")).collect();
            table.push(vec![
                g.to_string(),
                n.to_string(),
                i.to_string(),
                join(&s.genus),
                edges.join(" "),
                join(&s.leaves),
                s.aut().to_string(),
            ]);
        }
    }
    table.json = json!({"cells": out});
    Ok(table)
}

pub fn mcshane(cfg: &RunConfig) -> Result<Table, Failure> {
    let kernel = match &cfg.kernel.family {
        _ if cfg.kernel.perturbed.is_some() => None,
        KernelFamily::Mirzakhani => Some(TorusKernel::Mirzakhani),
        KernelFamily::Kontsevich => Some(TorusKernel::Kontsevich),
        _ => None,
    }
    .ok_or_else(|| Failure::Config("mcshane supports the mirzakhani and kontsevich kernels".into()))?;
    let coords = cfg.fn_coords.clone().ok_or_else(|| Failure::Config("mcshane needs --fn".into()))?;
    let (boundary, ell, tau) = match coords[..] {
        [ell, tau] => (cfg.boundary.unwrap_or(2.0), ell, tau),
        [l, ell, tau] => {
            if cfg.boundary.is_some_and(|b| b != l) {
                return Err(Failure::Config("boundary given twice with different values".into()));
            }
            (l, ell, tau)
        }
        _ => unreachable!("checked when the config was read"),
    };
    let torus = FNTorus::new(boundary, ell, tau).map_err(|e| Failure::Config(e.to_string()))?;
    let rows = mcshane_partial_sums(&torus, cfg.cutoff, kernel).map_err(compute)?;
    let sum = rows.last().map_or(0.0, |r| r.partial_sum);
    let mut table = Table::new(Value::Null, vec!["p", "q", "length", "partial_sum"]);
    let mut out = Vec::new();
    for r in &rows {
        out.push(json!({"p": r.p, "q": r.q, "length": r.length, "partial_sum": r.partial_sum}));
        table.push(vec![r.p.to_string(), r.q.to_string(), r.length.to_string(), r.partial_sum.to_string()]);
    }
    let kname = match kernel {
        TorusKernel::Mirzakhani => "mirzakhani",
        TorusKernel::Kontsevich => "kontsevich",
    };
    table.json = json!({
        "kernel": kname,
        "boundary": boundary,
        "length": ell,
        "twist": tau,
        "cutoff": cfg.cutoff,
        "curves": rows.len(),
        "sum": sum,
        "partial_sums": out,
    });
    eprintln!("{} curves up to length {}: sum {}", rows.len(), cfg.cutoff, sum);
    Ok(table)
}

/// All label tuples of length `n`, in lexicographic order.
fn label_tuples(dim: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out.into_iter().flat_map(|t| (0..dim).map(move |l| [t.clone(), vec![l]].concat())).collect();
    }
    out
}

pub fn verlinde(cfg: &RunConfig) -> Result<Table, Failure> {
    let alg = cfg.algebra()?;
    let labels = cfg.labels(&alg)?;
    let cells = if cfg.has_range() {
        cfg.cells_or(0)
    } else {
        match &labels {
            Some(l) => vec![(0, l.len())],
            None => return Err(Failure::Config("verlinde needs --gn or --max-complexity".into())),
        }
    };
    let mut jobs = Vec::new();
    for &(g, n) in &cells {
        match &labels {
            Some(l) if l.len() != n => {
                return Err(Failure::Config(format!("{} labels given for n = {n}", l.len())));
            }
            Some(l) => jobs.push((g, l.clone())),
            None => jobs.extend(label_tuples(alg.dim(), n).into_iter().map(|t| (g, t))),
        }
    }
    let ranks = jobs
        .par_iter()
        .map(|(g, l)| verlinde_rank(&alg, *g, l))
        .collect::<Result<Vec<_>, _>>()
        .map_err(compute)?;
    let mut header = vec!["g", "n", "labels", "rank"];
    if cfg.numeric {
        header.push("value");
    }
    let mut table = Table::new(Value::Null, header);
    let mut out = Vec::new();
    for ((g, l), r) in jobs.iter().zip(&ranks) {
        let names: Vec<&str> = l.iter().map(|i| alg.labels[*i].as_str()).collect();
        let mut row = json!({"g": g, "n": l.len(), "labels": names, "rank": r.rank});
        let mut csv = vec![g.to_string(), l.len().to_string(), names.join(","), r.rank.to_string()];
        if cfg.numeric {
            row["value"] = json!(r.value);
            csv.push(r.value.to_string());
        }
        out.push(row);
        table.push(csv);
    }
    table.json = json!({"labels": alg.labels, "ranks": out});
    Ok(table)
}

pub fn airy_check(cfg: &RunConfig) -> Result<(Table, bool), Failure> {
    let cap = cfg.window + 5;
    let t = AiryTensors::from_data(cfg.kernel.data().as_ref(), cap).map_err(compute)?;
    let report = check_airy_relations(&t, cfg.window).map_err(compute)?;
    let mut table = Table::new(Value::Null, vec!["relation", "checked", "failures"]);
    let mut rels = Vec::new();
    for r in 0..6 {
        let bad = report.residuals.iter().filter(|x| x.relation as usize == r + 1).count();
        rels.push(json!({"relation": r + 1, "checked": report.checked[r], "failures": bad}));
        table.push(vec![(r + 1).to_string(), report.checked[r].to_string(), bad.to_string()]);
    }
    let residuals: Vec<Value> = report
        .residuals
        .iter()
        .take(20)
        .map(|r| json!({"relation": r.relation, "indices": r.indices, "value": r.value.to_json()}))
        .collect();
    table.json = json!({
        "kernel": cfg.kernel.id(),
        "window": cfg.window,
        "cap": cap,
        "passed": report.passed(),
        "failing_relations": report.failing_relations(),
        "relations": rels,
        "residuals": residuals,
    });
    if !report.passed() {
        eprintln!("relations failing: {:?}", report.failing_relations());
    }
    Ok((table, report.passed()))
}

pub fn default_format(cfg: &RunConfig) -> Format {
    cfg.format.unwrap_or(match cfg.command {
        crate::config::Command::Mcshane => Format::Csv,
        _ => Format::Json,
    })
}
