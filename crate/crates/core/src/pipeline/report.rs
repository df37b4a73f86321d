//! Report text and the output directory layout:
//!
//! ```text
//! report.txt
//! clusters/assignments.csv
//! clusters/cluster_<id>/{pair_trace,p1,p2,p3,vrr}.csv, rules.txt
//! expressions/cluster_<id>.txt
//! retrain/repetitions.csv
//! compare/{runs,summary}.csv         (compare only)
//! ```

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use super::{chromosomes, ClusterExplanation, ClusterStatus, Comparison, FailureAnalysis, RetrainComparison};
use crate::clustering::write_assignments;
use crate::error::{Error, Result};
use crate::param_space::{write_csv, ParameterSpace};
use crate::retrain::RetrainOutcome;

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub scenario: String,
    pub seed: u64,
    pub failures: FailureAnalysis,
    pub explanations: Vec<ClusterExplanation>,
    pub retraining: Option<RetrainComparison>,
}

impl PipelineReport {
    /// Clusters where PaiR found at least one member.
    pub fn covered(&self) -> usize {
        self.explanations.iter().filter(|e| e.counts().0 > 0).count()
    }

    pub fn characterized(&self) -> Vec<&ClusterExplanation> {
        self.explanations
            .iter()
            .filter(|e| e.status == ClusterStatus::Characterized)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "test accuracy: {:.4}", self.failures.test_accuracy);
        let _ = writeln!(s, "failures: {}", self.failures.failing.len());
        let Some(clustering) = &self.failures.clustering else {
            let _ = writeln!(s, "no failures to explain");
            return s;
        };
        let _ = writeln!(s, "clustering: layer {}, k = {}", clustering.layer, clustering.k);
        let n = self.explanations.len();
        let _ = writeln!(
            s,
            "covered clusters: {}/{n} ({:.1}%)",
            self.covered(),
            100.0 * self.covered() as f64 / n.max(1) as f64
        );
        let _ = writeln!(s, "characterized clusters: {}/{n}", self.characterized().len());
        for e in &self.explanations {
            let (p1, p2, p3) = e.counts();
            let _ = writeln!(s, "\ncluster {}: {}", e.id(), e.status.label());
            match &e.status {
                ClusterStatus::Uncharacterizable(why) | ClusterStatus::Failed(why) => {
                    let _ = writeln!(s, "  reason: {why}");
                }
                _ => {}
            }
            let _ = writeln!(
                s,
                "  members: {}, layer {}, radius {:.6}",
                e.cluster.len(),
                e.cluster.layer,
                e.cluster.radius
            );
            let _ = writeln!(
                s,
                "  P1 {p1}, P2 {p2}, P3 {p3}, simulations {}, diversity {:.4}",
                e.simulations, e.diversity
            );
            if let Some(list) = &e.list {
                let _ = writeln!(s, "  rules:");
                for line in list.to_text().lines() {
                    let _ = writeln!(s, "    {line}");
                }
            }
            if let Some(x) = &e.expression {
                let _ = writeln!(s, "  expression: {x}");
            }
            if !e.vrr.is_empty() {
                let parts: Vec<String> = e.vrr.iter().map(|(p, v)| format!("{p} {v:.3}")).collect();
                let _ = writeln!(s, "  vrr: {}", parts.join(", "));
            }
            if let Some(sp) = &e.space {
                let _ = writeln!(
                    s,
                    "  unsafe space: accuracy {:.3} inside vs {:.3} random (n = {}), Fisher p {:.3e}",
                    sp.inside_accuracy, sp.random_accuracy, sp.samples, sp.p_value
                );
            }
        }
        if let Some(r) = &self.retraining {
            let _ = writeln!(s, "\nretraining ({} unsafe samples)", r.unsafe_samples);
            let _ = writeln!(s, "  original accuracy: {:.4}", r.original_accuracy);
            let fmt = |o: &RetrainOutcome| {
                let reps: Vec<String> = o.accuracies().iter().map(|a| format!("{a:.4}")).collect();
                format!("best {:.4} (repetitions {})", o.best_accuracy, reps.join(", "))
            };
            let _ = writeln!(s, "  SEDE: {}", fmt(&r.sede));
            let _ = writeln!(s, "  random: {}", fmt(&r.random));
            let _ = writeln!(s, "  gain: {:+.4}", r.gain());
        }
        s
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_cluster(dir: &Path, space: &ParameterSpace, e: &ClusterExplanation) -> Result<()> {
    let dir = dir.join(format!("cluster_{}", e.id()));
    fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
    if let Some(search) = &e.search {
        let path = dir.join("pair_trace.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["iteration", "in_cluster", "best", "worst", "diversity", "evaluations"])?;
        for r in &search.pair.trace {
            w.write_record([
                r.iteration.to_string(),
                r.in_cluster.to_string(),
                r.best.to_string(),
                r.worst.to_string(),
                r.diversity.to_string(),
                r.evaluations.to_string(),
            ])?;
        }
        finish(w, &path)?;
        for (name, pop) in [
            ("p1.csv", &search.pair.in_cluster),
            ("p2.csv", &search.unsafe_set),
            ("p3.csv", &search.safe_set),
        ] {
            let path = dir.join(name);
            write_csv(space, &chromosomes(pop), create(&path)?)?;
        }
    }
    if let Some(list) = &e.list {
        write_text(&dir.join("rules.txt"), &list.to_text())?;
    }
    if !e.vrr.is_empty() {
        let path = dir.join("vrr.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["parameter", "vrr"])?;
        for (p, v) in &e.vrr {
            w.write_record([p.clone(), v.to_string()])?;
        }
        finish(w, &path)?;
    }
    Ok(())
}

/// Writes the report and its CSV bundle under `dir`.
pub fn write_artifacts(report: &PipelineReport, space: &ParameterSpace, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("report.txt"), &report.to_text())?;
    if let Some(clustering) = &report.failures.clustering {
        write_assignments(clustering, create(&dir.join("clusters").join("assignments.csv"))?)?;
    }
    for e in &report.explanations {
        write_cluster(&dir.join("clusters"), space, e)?;
        if let Some(x) = &e.expression {
            write_text(&dir.join("expressions").join(format!("cluster_{}.txt", e.id())), &format!("{x}\n"))?;
        }
    }
    if let Some(r) = &report.retraining {
        let path = dir.join("retrain").join("repetitions.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["arm", "repetition", "simulator", "field", "improvement", "accuracy", "diverged", "best"])?;
        for (arm, o) in [("sede", &r.sede), ("random", &r.random)] {
            for (k, rep) in o.repetitions.iter().enumerate() {
                w.write_record([
                    arm.to_string(),
                    k.to_string(),
                    rep.simulator_count.to_string(),
                    rep.field_count.to_string(),
                    rep.improvement_count.to_string(),
                    rep.accuracy.to_string(),
                    rep.diverged.to_string(),
                    (k == o.best_index).to_string(),
                ])?;
            }
        }
        finish(w, &path)?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl Comparison {
    /// `compare/runs.csv` and `compare/summary.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let dir = dir.join("compare");
        let path = dir.join("runs.csv");
        let mut w = csv_writer(&path)?;
        w.write_record([
            "algorithm",
            "cluster",
            "run",
            "checkpoint",
            "evaluations",
            "in_cluster",
            "in_cluster_pct",
            "diversity",
        ])?;
        for r in &self.runs {
            w.write_record([
                r.algorithm.name().to_string(),
                r.cluster.to_string(),
                r.run.to_string(),
                r.checkpoint.to_string(),
                r.evaluations.to_string(),
                r.in_cluster.to_string(),
                r.in_cluster_pct().to_string(),
                r.diversity.to_string(),
            ])?;
        }
        finish(w, &path)?;
        let path = dir.join("summary.csv");
        let mut w = csv_writer(&path)?;
        w.write_record([
            "checkpoint",
            "evaluations",
            "algorithm",
            "diversity_avg",
            "diversity_std",
            "diversity_p",
            "diversity_a12",
            "in_cluster_avg",
            "in_cluster_std",
            "in_cluster_p",
            "in_cluster_a12",
            "covered",
            "runs",
            "coverage_p",
        ])?;
        for k in 0..self.budgets.len() {
            for s in self.summary(k)? {
                w.write_record([
                    k.to_string(),
                    s.budget.to_string(),
                    s.algorithm.name().to_string(),
                    s.diversity_mean.to_string(),
                    s.diversity_std.to_string(),
                    opt(s.diversity_p),
                    opt(s.diversity_a12),
                    s.in_cluster_mean.to_string(),
                    s.in_cluster_std.to_string(),
                    opt(s.in_cluster_p),
                    opt(s.in_cluster_a12),
                    s.covered.to_string(),
                    s.total.to_string(),
                    opt(s.coverage_p),
                ])?;
            }
        }
        finish(w, &path)
    }

    /// The final-checkpoint table as text.
    pub fn to_text(&self) -> Result<String> {
        let k = self.final_checkpoint();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} clusters x {} runs, {} evaluations per run",
            self.clusters.len(),
            self.seeds,
            self.budgets[k]
        );
        let _ = writeln!(
            s,
            "{:<12} {:>9} {:>9} {:>9} {:>7} {:>10} {:>9} {:>7} {:>9} {:>10}",
            "algorithm", "diversity", "std", "p", "A12", "in-cluster", "p", "A12", "covered", "coverage p"
        );
        let f = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"));
        for r in self.summary(k)? {
            let _ = writeln!(
                s,
                "{:<12} {:>9.4} {:>9.4} {:>9} {:>7} {:>9.1}% {:>9} {:>7} {:>9} {:>10}",
                r.algorithm.name(),
                r.diversity_mean,
                r.diversity_std,
                f(r.diversity_p, 4),
                f(r.diversity_a12, 3),
                r.in_cluster_mean,
                f(r.in_cluster_p, 4),
                f(r.in_cluster_a12, 3),
                format!("{}/{}", r.covered, r.total),
                f(r.coverage_p, 4),
            );
        }
        Ok(s)
    }
}
