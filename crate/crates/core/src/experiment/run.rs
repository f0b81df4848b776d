//! Runs an experiment document and writes its artifact directory:
//!
//! ```text
//! config.snapshot                  validated config (JSON)
//! summary.csv                      method,best_success,final_success
//! curves/<method>.csv              iter,success_rate,mean_cost,alpha
//! pairs/pairs.csv                  cond,src_t,tgt_t
//! pairs/{source,target}_states.csv cond,t,<agent columns>
//! alignment/em_rounds.csv          EM alignment only
//! checkpoints/<method>.json        fitted correspondence
//! checkpoints/feature_scale.csv    method,feature_scale
//! training/<method>.csv            embedding loss curve
//! stats/*.csv                      iter,mean_cost,success_rate,step_size
//! trajectories/source/cond_<c>.csv source mean-policy rollouts
//! trajectories/<method>/cond_<c>.csv final target mean-policy rollouts
//! ```
//!
//! Proxy solutions, pairs and the source solution are computed once and
//! shared by every method; each stage uses the same seed it would get from
//! [`run_transfer`](crate::transfer::run_transfer), so the per-method
//! results are identical to separate single-method runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use crate::alignment::{agent_states_csv, PairSet, Provenance};
use crate::baselines::Method;
use crate::dynamics::{DomainSpec, Trajectory};
use crate::error::{Error, Result};
use crate::seed;
use crate::trajopt::stats_csv;
use crate::transfer::{
    build_pairs, fit_method, proxy_trajectories, solve_proxies, solve_task, transfer_rl,
    ProxySolution, TransferRun,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub best_success: f64,
    pub final_success: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<TransferRun>,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method,best_success,final_success\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.method, r.best_success, r.final_success);
    }
    out
}

fn write(root: &Path, rel: &str, contents: &str) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn write_trajectories(
    root: &Path,
    dir: &str,
    spec: &DomainSpec,
    trajs: &[Trajectory],
) -> Result<()> {
    let agent = spec.morphology.agent_columns();
    let env = spec.env_columns();
    let action = spec.morphology.action_columns();
    for (c, t) in trajs.iter().enumerate() {
        write(
            root,
            &format!("{dir}/cond_{c}.csv"),
            &t.to_csv(&agent, &env, &action),
        )?;
    }
    Ok(())
}

fn write_proxies(root: &Path, proxies: &[ProxySolution]) -> Result<()> {
    for p in proxies {
        write(
            root,
            &format!("stats/proxy_{}_source.csv", p.task.name()),
            &stats_csv(&p.source.stats),
        )?;
        write(
            root,
            &format!("stats/proxy_{}_target.csv", p.task.name()),
            &stats_csv(&p.target.stats),
        )?;
    }
    Ok(())
}

/// Runs every configured method into `out`, which is created if needed.
/// Files are written as their stage completes, so a failed run keeps the
/// artifacts of the stages before the failure.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let methods = cfg.methods()?;
    let proxy_tasks = cfg.proxy_tasks()?;
    let source = cfg.source_spec()?;
    let target = cfg.target_spec()?;
    let seed = cfg.seed;
    fs::create_dir_all(out)?;
    write(out, "config.snapshot", &cfg.snapshot())?;

    let needs_pairs = methods.iter().any(|&m| m != Method::NoTransfer);
    let (pairs, alignment) = if needs_pairs {
        let solved = solve_proxies(
            &source,
            &target,
            &proxy_tasks,
            &cfg.rl,
            cfg.budgets.proxy_iterations,
            seed,
        )?;
        write_proxies(out, &solved)?;
        let refs: Vec<&ProxySolution> = solved.iter().collect();
        let (pairs, alignment) = build_pairs(&refs, cfg.alignment, &cfg.models, seed)
            .map_err(|e| e.in_stage("alignment"))?;
        let (src, tgt) = proxy_trajectories(&refs, (&cfg.models).into());
        write(out, "pairs/pairs.csv", &pairs.to_csv())?;
        write(
            out,
            "pairs/source_states.csv",
            &agent_states_csv(&src, &source.morphology.agent_columns()),
        )?;
        write(
            out,
            "pairs/target_states.csv",
            &agent_states_csv(&tgt, &target.morphology.agent_columns()),
        )?;
        if let Some(em) = &alignment {
            write(out, "alignment/em_rounds.csv", &em.diagnostics_csv())?;
        }
        (pairs, alignment)
    } else {
        (
            PairSet {
                entries: Vec::new(),
                provenance: Provenance::TimeAligned,
            },
            None,
        )
    };

    let solution = solve_task(
        &source,
        &cfg.rl,
        cfg.budgets.source_iterations,
        seed::derive(seed, &["source"], &[]),
    )
    .map_err(|e| e.in_stage("source"))?;
    write(out, "stats/source.csv", &stats_csv(&solution.stats))?;
    write_trajectories(out, "trajectories/source", &source, &solution.trajectories)?;

    let mut rows = Vec::with_capacity(methods.len());
    let mut runs = Vec::with_capacity(methods.len());
    let mut scales = String::from("method,feature_scale\n");
    for &method in &methods {
        let fitted = if method == Method::NoTransfer {
            None
        } else {
            fit_method(method, &pairs, alignment.as_ref(), &cfg.models, seed)
                .map_err(|e| e.in_stage(format!("fit {method}")))?
        };
        if let Some(f) = &fitted {
            write(
                out,
                &format!("checkpoints/{method}.json"),
                &f.method.to_json(),
            )?;
            let _ = writeln!(scales, "{method},{}", f.scale);
            write(out, "checkpoints/feature_scale.csv", &scales)?;
            if let Some(h) = &f.history {
                write(out, &format!("training/{method}.csv"), &h.to_csv())?;
            }
        }
        let tc = cfg.transfer_config(method);
        let run = transfer_rl(
            &target,
            &solution,
            fitted.as_ref(),
            &tc,
            &cfg.rl,
            cfg.budgets.target_iterations,
            seed,
        )
        .map_err(|e| e.in_stage(format!("target {method}")))?;
        write(out, &format!("curves/{method}.csv"), &run.curve_csv())?;
        write_trajectories(
            out,
            &format!("trajectories/{method}"),
            &target,
            &run.final_rollouts,
        )?;
        rows.push(SummaryRow {
            method,
            best_success: run.best_success(),
            final_success: run.final_success(),
        });
        write(out, "summary.csv", &summary_csv(&rows))?;
        log::info!(
            "{}: {method} best {:.2} final {:.2}",
            cfg.id,
            run.best_success(),
            run.final_success()
        );
        runs.push(run);
    }
    Ok(RunReport {
        out_dir: out.to_path_buf(),
        rows,
        runs,
    })
}

/// Reads back the rows of a `summary.csv`.
pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "method,best_success,final_success")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `method,best_success,final_success`".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = |m: String| Error::Parse {
                line: i + 1,
                message: m,
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            Ok(SummaryRow {
                method: f[0].parse().map_err(|e: Error| bad(e.to_string()))?,
                best_success: num(f[1])?,
                final_success: num(f[2])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::parse_config;

    #[test]
    fn summary_round_trips() {
        let rows = vec![
            SummaryRow {
                method: Method::NoTransfer,
                best_success: 0.0,
                final_success: 0.0,
            },
            SummaryRow {
                method: Method::Invariant,
                best_success: 0.85,
                final_success: 0.7,
            },
        ];
        assert_eq!(parse_summary(&summary_csv(&rows)).unwrap(), rows);
        assert!(parse_summary("method,best\n").is_err());
        assert!(matches!(
            parse_summary("method,best_success,final_success\nnone,0.1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn no_transfer_run_writes_its_artifacts() {
        let text = r#"
id = "tiny"
methods = ["none"]
[source]
morphology = "three_link"
task = "reach"
horizon = 20
[target]
morphology = "four_link"
task = "reach"
horizon = 20
[budgets]
source_iterations = 1
target_iterations = 2
"#;
        let cfg = parse_config(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(report.rows.len(), 1);
        for f in [
            "config.snapshot",
            "summary.csv",
            "curves/no_transfer.csv",
            "stats/source.csv",
            "trajectories/source/cond_0.csv",
            "trajectories/no_transfer/cond_3.csv",
        ] {
            assert!(dir.path().join(f).is_file(), "{f} missing");
        }
        assert!(!dir.path().join("pairs").exists());
        let snap = fs::read_to_string(dir.path().join("config.snapshot")).unwrap();
        assert_eq!(parse_config(&snap).unwrap(), cfg);
        let rows =
            parse_summary(&fs::read_to_string(dir.path().join("summary.csv")).unwrap()).unwrap();
        assert_eq!(rows, report.rows);
    }
}
