use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

use conroute_core::diagnostics::{
    feature_weight_groups, modulation_curves, modulation_svg, translation_probe, weight_groups_svg, write_drift_csv,
    write_modulation_csv, write_weight_groups_csv, PROBE_OFFSETS,
};
use conroute_core::inference::{evaluate_benchmark, load_references, solution_svg, DecodeKind, DecodeSettings};
use conroute_core::instances::{generate_cvrptw, instance_files, random_instance, validate_instance};
use conroute_core::mdp::verify_solution;
use conroute_core::oracle::{
    canonical_scorer_check, exact_solver_check, gradient_check, soft_top1_limit_check, CheckReport,
};
use conroute_core::training::{derive_seed, write_metrics_csv, DataSource, Trainer};
use conroute_core::{PolicyParams, RoutingInstance, Solution, Task};

use crate::config::{generator_source, train_settings, GeneratorSource};
use crate::{
    CheckArg, Cli, Command, DiagnoseArgs, EvalArgs, GenerateArgs, ModeArg, OracleArgs, ProbeArg, SolveArgs, TrainArgs,
    ValidateArgs, VerifyArgs,
};

const FAILURE: u8 = 1;

pub fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Generate(a) => generate(a, seed.unwrap_or(0)),
        Command::Validate(a) => validate(a),
        Command::Train(a) => train(a, seed),
        Command::Solve(a) => solve(a, seed.unwrap_or(0)),
        Command::Eval(a) => eval(a, seed.unwrap_or(0)),
        Command::Verify(a) => verify(a),
        Command::Oracle(a) => oracle(a, seed.unwrap_or(0)),
        Command::Diagnose(a) => diagnose(a),
    }
}

fn parse_task(s: &str) -> Result<Task> {
    Ok(s.parse::<Task>()?)
}

fn load_instance(path: &Path) -> Result<RoutingInstance> {
    RoutingInstance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<PolicyParams> {
    if !path.exists() {
        bail!("checkpoint {} does not exist", path.display());
    }
    PolicyParams::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_instances(dir: &Path) -> Result<Vec<RoutingInstance>> {
    let insts = RoutingInstance::load_dir(dir).with_context(|| format!("loading instances from {}", dir.display()))?;
    if insts.is_empty() {
        bail!("no instance files in {}", dir.display());
    }
    Ok(insts)
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs, seed: u64) -> Result<ExitCode> {
    let task = parse_task(&a.task)?;
    let source = generator_source(a.config.as_deref())?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for i in 0..a.count {
        let s = derive_seed(seed, i as u64, 0);
        let inst = match (&source, task) {
            (GeneratorSource::Prior(prior), Task::Cvrptw) => generate_cvrptw(&prior.sample(s), a.n)?,
            (GeneratorSource::Fixed(latents), Task::Cvrptw) => {
                let mut l = latents.clone();
                l.rng_seed = s;
                generate_cvrptw(&l, a.n)?
            }
            _ => random_instance(task, a.n, s)?,
        };
        let path = a.out.join(format!("{}.json", inst.name));
        fs::write(&path, inst.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!("wrote {} instances to {}", a.count, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let files = if a.input.is_dir() {
        instance_files(&a.input)?
    } else {
        vec![a.input.clone()]
    };
    if files.is_empty() {
        bail!("no instance files in {}", a.input.display());
    }
    let mut bad = 0;
    for path in &files {
        match RoutingInstance::load(path) {
            Ok(inst) => {
                let report = validate_instance(&inst);
                if report.is_valid() {
                    writeln!(std::io::stdout(), "{}: ok", path.display())?;
                } else {
                    bad += 1;
                    for v in &report.violations {
                        writeln!(std::io::stdout(), "{}: {:?}: {}", path.display(), v.kind, v.message)?;
                    }
                }
            }
            Err(e) => {
                bad += 1;
                writeln!(std::io::stdout(), "{}: {e}", path.display())?;
            }
        }
    }
    writeln!(
        std::io::stdout(),
        "{} of {} instances valid",
        files.len() - bad,
        files.len()
    )?;
    Ok(if bad == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILURE)
    })
}

fn train(a: TrainArgs, seed: Option<u64>) -> Result<ExitCode> {
    let task = a.task.as_deref().map(parse_task).transpose()?;
    let (mut cfg, policy) = train_settings(a.config.as_deref(), task)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(n) = a.customers {
        cfg.customers = n;
    }
    let params = match &a.resume {
        Some(path) => {
            PolicyParams::load_matching(path, &policy).with_context(|| format!("resuming from {}", path.display()))?
        }
        None => PolicyParams::new(policy, derive_seed(cfg.seed, 0, 1))?,
    };
    let data = match &a.dataset {
        Some(dir) => DataSource::Fixed(load_instances(dir)?),
        None => DataSource::Generated,
    };
    let mut trainer = Trainer::new(cfg, params)?;
    let metrics = trainer.fit(&data, |m| {
        eprintln!(
            "epoch {:>4}  cost {:>10.4}  |A| {:.4}  grad {:.4}  tau {:.3}  lambda {:.3}",
            m.epoch, m.mean_cost, m.mean_abs_advantage, m.grad_norm, m.tau, m.lambda_morph
        );
    })?;
    trainer.params.save(&a.out_checkpoint)?;
    if let Some(path) = &a.metrics {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_metrics_csv(&metrics, file)?;
    }
    eprintln!("saved checkpoint to {}", a.out_checkpoint.display());
    Ok(ExitCode::SUCCESS)
}

fn settings(mode: ModeArg, budget: usize, seed: u64) -> DecodeSettings {
    let kind = match mode {
        ModeArg::Greedy => DecodeKind::Greedy,
        ModeArg::Sample => DecodeKind::Sample,
        ModeArg::Beam => DecodeKind::Beam,
        ModeArg::Aug8 => DecodeKind::Aug8,
    };
    DecodeSettings { kind, budget, seed }
}

fn solve(a: SolveArgs, seed: u64) -> Result<ExitCode> {
    let params = load_checkpoint(&a.checkpoint)?;
    let inst = load_instance(&a.instance)?;
    let sol = settings(a.mode, a.n, seed).decode(&inst, &params)?;
    let report = verify_solution(&sol, &inst);
    write_output(a.out.as_deref(), format!("{}\n", sol.to_json()?).as_bytes())?;
    if let Some(svg) = &a.svg {
        fs::write(svg, solution_svg(&inst, &sol)).with_context(|| format!("writing {}", svg.display()))?;
    }
    eprintln!("{}: cost {:.4}, {} routes", inst.name, sol.distance, sol.routes.len());
    if !report.is_feasible() {
        eprintln!("solution has {} violations", report.violations.len());
        return Ok(ExitCode::from(FAILURE));
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(a: EvalArgs, seed: u64) -> Result<ExitCode> {
    let params = load_checkpoint(&a.checkpoint)?;
    let refs = match &a.refs {
        Some(p) => load_references(p).with_context(|| format!("reading {}", p.display()))?,
        None => HashMap::new(),
    };
    let report = evaluate_benchmark(&a.dir, &params, &refs, &settings(a.mode, a.n, seed))?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_output(a.out.as_deref(), &buf)?;
    match report.mean_gap() {
        Some(g) => eprintln!(
            "{} instances, mean cost {:.4}, mean gap {g:.2}%",
            report.rows.len(),
            report.mean_cost()
        ),
        None => eprintln!("{} instances, mean cost {:.4}", report.rows.len(), report.mean_cost()),
    }
    Ok(if report.all_feasible() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILURE)
    })
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let inst = load_instance(&a.instance)?;
    let text = fs::read_to_string(&a.solution).with_context(|| format!("reading {}", a.solution.display()))?;
    let sol = Solution::from_json(&text)?;
    let report = verify_solution(&sol, &inst);
    writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(if report.is_feasible() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILURE)
    })
}

fn print_report(r: &CheckReport) -> Result<()> {
    writeln!(
        std::io::stdout(),
        "{} {}: {} trials, {} failures, max error {:.3e} (tolerance {:.0e})",
        if r.passed() { "PASS" } else { "FAIL" },
        r.name,
        r.trials,
        r.failures,
        r.max_error,
        r.tolerance
    )?;
    Ok(())
}

fn oracle(a: OracleArgs, seed: u64) -> Result<ExitCode> {
    let reports = match a.check {
        CheckArg::A2 => {
            let trials = a.trials.unwrap_or(1000);
            let mut out = Vec::new();
            for m in 2..=8 {
                for p in 1..=6 {
                    out.push(canonical_scorer_check(
                        m,
                        p,
                        trials,
                        derive_seed(seed, m as u64, p as u64),
                    )?);
                }
            }
            out
        }
        CheckArg::Softtop1 => vec![soft_top1_limit_check(a.trials.unwrap_or(1000), seed)?],
        CheckArg::Grad => vec![gradient_check(a.trials.unwrap_or(50), seed)?],
        CheckArg::ExactGap => {
            let trials = a.trials.unwrap_or(100);
            vec![exact_solver_check(trials, trials.div_ceil(2), seed)?]
        }
    };
    for r in &reports {
        print_report(r)?;
    }
    Ok(if reports.iter().all(CheckReport::passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILURE)
    })
}

fn diagnose(a: DiagnoseArgs) -> Result<ExitCode> {
    let params = load_checkpoint(&a.checkpoint)?;
    let instances = load_instances(&a.instances)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let create = |name: &str| {
        let path = a.out.join(name);
        fs::File::create(&path).with_context(|| format!("creating {}", path.display()))
    };
    match a.probe {
        ProbeArg::Translation => {
            let rows = translation_probe(&params, &instances, &PROBE_OFFSETS)?;
            write_drift_csv(&rows, create("translation.csv")?)?;
            for r in &rows {
                writeln!(
                    std::io::stdout(),
                    "{:<10} offset {:>4}: mean TV {:.3e}, max TV {:.3e}, flips {}/{}",
                    r.variant,
                    r.offset,
                    r.mean_tv,
                    r.max_tv,
                    r.flips,
                    r.steps
                )?;
            }
        }
        ProbeArg::Modulation => {
            let points = modulation_curves(&params, &instances, 10)?;
            write_modulation_csv(&points, create("modulation.csv")?)?;
            fs::write(a.out.join("modulation.svg"), modulation_svg(&points))?;
        }
        ProbeArg::Weights => {
            let groups = feature_weight_groups(&params, &instances)?;
            write_weight_groups_csv(&groups, create("weights.csv")?)?;
            fs::write(a.out.join("weights.svg"), weight_groups_svg(&groups))?;
        }
    }
    eprintln!("wrote diagnostics to {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}
