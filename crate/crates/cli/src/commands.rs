use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use sede::clustering::write_assignments;
use sede::pipeline::{
    analyse_failures, compare_search_algorithms, evaluate_unsafe_space, explain_clusters, prepare, retrain_step,
    run_prepared, write_artifacts, Config, PipelineReport, Setup,
};
use sede::rules::{parse_expr, UnsafeExpression};
use sede::seed;

use crate::error::CliError;
use crate::{Command, GlobalArgs};

type Result<T> = std::result::Result<T, CliError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Core(sede::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    fs::write(path, text).map_err(io(path))
}

/// Config file, then flags on top.
fn load_config(args: &GlobalArgs) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::ConfigUnreadable {
                path: path.clone(),
                source,
            })?;
            Config::from_toml(&text)?
        }
        None => Config::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(m) = &args.model {
        cfg.model.path = Some(m.clone());
    }
    if let Some(m) = &cfg.model.path {
        if !m.is_file() {
            return Err(CliError::MissingModel(m.clone()));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: &GlobalArgs, command: &Command) -> Result<()> {
    let cfg = load_config(args)?;
    if cfg.workers > 0 {
        // fails only if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    let out = args.output.as_path();
    fs::create_dir_all(out).map_err(io(out))?;
    write(&out.join("config.toml"), &cfg.to_toml()?)?;
    match command {
        Command::Train => train(&cfg, out),
        Command::Cluster => cluster(&cfg, out),
        Command::Explain => explain(&cfg, out),
        Command::Evaluate { expressions } => evaluate(&cfg, out, &expressions_dir(out, expressions)),
        Command::Retrain { expressions, runs } => retrain(&cfg, out, &expressions_dir(out, expressions), *runs),
        Command::Compare => compare(&cfg, out),
        Command::Report => report(&cfg, out),
    }
}

fn expressions_dir(out: &Path, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| out.join("expressions"))
}

fn setup(cfg: &Config) -> Result<Setup> {
    info!("preparing scenario `{}` with seed {}", cfg.scenario, cfg.seed);
    Ok(prepare(cfg)?)
}

fn train(cfg: &Config, out: &Path) -> Result<()> {
    let s = setup(cfg)?;
    let accuracy = s.model.accuracy(&s.pools.test)?;
    write(&out.join("model").join("model.txt"), &s.model.to_text())?;
    let summary = format!(
        "layers: {:?}\ntraining inputs: {}\nfield inputs: {}\ntest accuracy: {accuracy:.4}\n",
        s.model.layers().iter().map(|l| l.outputs).collect::<Vec<_>>(),
        s.pools.simulator.len(),
        s.pools.field.len(),
    );
    write(&out.join("model").join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cluster(cfg: &Config, out: &Path) -> Result<()> {
    let s = setup(cfg)?;
    let failures = analyse_failures(&s, &cfg.clustering)?;
    let mut text = format!(
        "test accuracy: {:.4}\nfailures: {}\n",
        failures.test_accuracy,
        failures.failing.len()
    );
    match &failures.clustering {
        None => text.push_str("no failures to cluster\n"),
        Some(c) => {
            let path = out.join("clusters").join("assignments.csv");
            fs::create_dir_all(out.join("clusters")).map_err(io(out))?;
            write_assignments(c, fs::File::create(&path).map_err(io(&path))?)?;
            let _ = writeln!(text, "layer {}, k = {}", c.layer, c.k);
            for rc in &c.clusters {
                let _ = writeln!(
                    text,
                    "cluster {}: {} members, radius {:.6}{}",
                    rc.id,
                    rc.members.len(),
                    rc.radius,
                    if rc.degenerate { ", degenerate" } else { "" }
                );
            }
        }
    }
    write(&out.join("clusters").join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn explain(cfg: &Config, out: &Path) -> Result<()> {
    let s = setup(cfg)?;
    let failures = analyse_failures(&s, &cfg.clustering)?;
    let explanations = match &failures.clustering {
        Some(c) => explain_clusters(&s, &c.clusters, cfg),
        None => Vec::new(),
    };
    let report = PipelineReport {
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        failures,
        explanations,
        retraining: None,
    };
    // an empty directory marks a run that produced no expressions
    fs::create_dir_all(out.join("expressions")).map_err(io(out))?;
    write_artifacts(&report, s.simulator.space(), out)?;
    print!("{}", report.to_text());
    Ok(())
}

/// `cluster_<id>.txt` files, ordered by id.
fn read_expressions(dir: &Path) -> Result<Vec<(usize, UnsafeExpression)>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Err(CliError::MissingExpressions(dir.to_path_buf())),
    };
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(io(dir))?.path();
        let id = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("cluster_"))
            .and_then(|n| n.strip_suffix(".txt"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(id) = id {
            let text = fs::read_to_string(&path).map_err(io(&path))?;
            found.push((id, UnsafeExpression::from_expr(parse_expr(&text)?)));
        }
    }
    if found.is_empty() {
        return Err(CliError::MissingExpressions(dir.to_path_buf()));
    }
    found.sort_by_key(|(id, _)| *id);
    Ok(found)
}

fn evaluate(cfg: &Config, out: &Path, dir: &Path) -> Result<()> {
    let exprs = read_expressions(dir)?;
    let s = setup(cfg)?;
    let path = out.join("evaluate").join("unsafe_space.csv");
    let mut csv = String::from("cluster,samples,inside_accuracy,random_accuracy,p_value\n");
    let mut text = String::new();
    for (id, expr) in &exprs {
        // same stream as `explain`, so the numbers agree
        let mut rng = seed::rng(seed::derive(cfg.seed, &["cluster", &id.to_string(), "evaluate"]));
        let e = evaluate_unsafe_space(expr, cfg.evaluate.samples, s.simulator.as_ref(), &s.model, &mut rng)?;
        let _ = writeln!(
            csv,
            "{id},{},{},{},{}",
            e.samples, e.inside_accuracy, e.random_accuracy, e.p_value
        );
        let _ = writeln!(
            text,
            "cluster {id}: accuracy {:.3} inside vs {:.3} random (n = {}), Fisher p {:.3e}",
            e.inside_accuracy, e.random_accuracy, e.samples, e.p_value
        );
    }
    write(&path, &csv)?;
    print!("{text}");
    Ok(())
}

fn retrain(cfg: &Config, out: &Path, dir: &Path, runs: u64) -> Result<()> {
    let exprs = read_expressions(dir)?;
    let s = setup(cfg)?;
    let mut csv = String::from("run,unsafe_samples,original_accuracy,sede_accuracy,random_accuracy,gain\n");
    let mut text = String::new();
    let mut gains = Vec::new();
    for run in 0..runs {
        match retrain_step(&s, &exprs, cfg, run)? {
            Some(r) => {
                let _ = writeln!(
                    csv,
                    "{run},{},{},{},{},{}",
                    r.unsafe_samples,
                    r.original_accuracy,
                    r.sede.best_accuracy,
                    r.random.best_accuracy,
                    r.gain()
                );
                let _ = writeln!(
                    text,
                    "run {run}: original {:.4}, SEDE {:.4}, random {:.4}, gain {:+.4}",
                    r.original_accuracy,
                    r.sede.best_accuracy,
                    r.random.best_accuracy,
                    r.gain()
                );
                gains.push(r.gain());
            }
            None => {
                let _ = writeln!(text, "run {run}: no unsafe samples could be drawn");
            }
        }
    }
    if !gains.is_empty() {
        let _ = writeln!(text, "mean gain: {:+.4}", gains.iter().sum::<f64>() / gains.len() as f64);
    }
    write(&out.join("retrain").join("runs.csv"), &csv)?;
    write(&out.join("retrain").join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn compare(cfg: &Config, out: &Path) -> Result<()> {
    let s = setup(cfg)?;
    let failures = analyse_failures(&s, &cfg.clustering)?;
    let Some(clustering) = &failures.clustering else {
        let text = "no failures, nothing to compare\n";
        write(&out.join("compare").join("table.txt"), text)?;
        print!("{text}");
        return Ok(());
    };
    let cmp = compare_search_algorithms(&s, &clustering.clusters, cfg)?;
    cmp.write(out)?;
    let text = cmp.to_text()?;
    write(&out.join("compare").join("table.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn report(cfg: &Config, out: &Path) -> Result<()> {
    let s = setup(cfg)?;
    let report = run_prepared(&s, cfg)?;
    fs::create_dir_all(out.join("expressions")).map_err(io(out))?;
    write_artifacts(&report, s.simulator.space(), out)?;
    print!("{}", report.to_text());
    Ok(())
}
