//! Command-line driver: run pipeline stages, verification suites and
//! experiments; emit machine-readable artifacts (JSON manifests, CSV
//! reports). Outputs are deterministic given the seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lpdot::construct::{
    run_pipeline, ConstructionParams, ExponentSpec, PipelineConfig, PipelineMode,
};
use lpdot::diverge::{self, compare_growth, DivergeConfig};
use lpdot::maps::{transport, DigitInterleave};
use lpdot::piecewise::Piecewise1D;
use lpdot::systems::{BiorthSystem, Which};
use lpdot::vexp::{self, BoxSum, ExponentFn};

#[derive(Parser)]
#[command(name = "lpdot", version, about = "Variable-exponent Lebesgue space toolkit")]
struct Cli {
    /// Flat key=value config file mirroring the flags; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exponent-construction pipeline and write its manifest.
    Construct(RunArgs),
    /// Run every module invariant suite; nonzero exit on any failure.
    Verify(RunArgs),
    /// Rectangle-indicator lower-bound scan for the constructed exponent.
    Norms(RunArgs),
    /// Biorthonormal system checks: Gram matrix and vanishing integrals.
    Systems(RunArgs),
    /// Build F1/F2, check membership, run the growth experiment.
    Diverge(RunArgs),
    /// Everything: construct, norms, systems, diverge.
    All(RunArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Exponent profile: const:V | step:V1,V2,… | conj-log | log | file:PATH.
    #[arg(long)]
    exponent: Option<String>,
    /// Ambient dimension n of Ω = [0,1]^n.
    #[arg(long)]
    dim: Option<usize>,
    /// Witness level a (auto-selected when omitted).
    #[arg(long)]
    a: Option<f64>,
    /// Exponential base c > e^(1/a) (auto-selected when omitted).
    #[arg(long)]
    c: Option<f64>,
    /// Conjugate-bound constant C (auto-selected when omitted).
    #[arg(long = "bigC")]
    big_c: Option<f64>,
    /// Truncation order K of the construction.
    #[arg(long = "K")]
    levels: Option<usize>,
    /// Level count of the divergence schedule.
    #[arg(long)]
    nmax: Option<usize>,
    /// Partial-sum range of the growth sweep.
    #[arg(long = "Nmax")]
    n_terms: Option<usize>,
    /// System descriptor: walsh:n=2 | trig:n=2 | pwalsh:n=1,alpha=0.1,M=64.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bisection tolerance for Luxemburg norms.
    #[arg(long)]
    tol: Option<f64>,
    /// Per-axis box depth of the norms scan.
    #[arg(long)]
    depth: Option<u32>,
}

struct RunConfig {
    exponent: ExponentSpec,
    dim: usize,
    params: Option<ConstructionParams>,
    manual_a: Option<f64>,
    manual_c: Option<f64>,
    levels: usize,
    nmax: usize,
    n_terms: Option<usize>,
    system: BiorthSystem,
    seed: u64,
    out: PathBuf,
    tol: f64,
    norms_depth: u32,
}

fn parse_exponent(s: &str) -> Result<ExponentSpec, String> {
    if s == "conj-log" {
        return Ok(ExponentSpec::ConjLog);
    }
    if s == "log" {
        return Ok(ExponentSpec::Log);
    }
    if let Some(v) = s.strip_prefix("const:") {
        return v
            .parse::<f64>()
            .map(ExponentSpec::Constant)
            .map_err(|e| format!("bad constant exponent: {e}"));
    }
    if let Some(list) = s.strip_prefix("step:") {
        let vals: Result<Vec<f64>, _> = list.split(',').map(|x| x.trim().parse::<f64>()).collect();
        return vals.map(ExponentSpec::Step).map_err(|e| format!("bad step list: {e}"));
    }
    if let Some(path) = s.strip_prefix("file:") {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
        let profile = Piecewise1D::from_text(&text)?;
        return Ok(ExponentSpec::Profile(profile));
    }
    Err(format!("unknown exponent spec `{s}`"))
}

fn load_config_file(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config: {e}"))?;
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", ln + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn resolve(args: &RunArgs, config: &Option<PathBuf>) -> Result<RunConfig, String> {
    let mut kv: std::collections::BTreeMap<String, String> = Default::default();
    if let Some(path) = config {
        for (k, v) in load_config_file(path)? {
            kv.insert(k, v);
        }
    }
    let get = |key: &str| kv.get(key).cloned();
    let parse_f64 = |key: &str| -> Result<Option<f64>, String> {
        get(key)
            .map(|v| v.parse::<f64>().map_err(|e| format!("config {key}: {e}")))
            .transpose()
    };
    let parse_usize = |key: &str| -> Result<Option<usize>, String> {
        get(key)
            .map(|v| v.parse::<usize>().map_err(|e| format!("config {key}: {e}")))
            .transpose()
    };

    let exponent_str = args
        .exponent
        .clone()
        .or_else(|| get("exponent"))
        .unwrap_or_else(|| "conj-log".to_string());
    let exponent = parse_exponent(&exponent_str)?;
    let dim = args.dim.or(parse_usize("dim")?).unwrap_or(2);
    if dim == 0 || dim > 6 {
        return Err("dim must be between 1 and 6".into());
    }
    let manual_a = args.a.or(parse_f64("a")?);
    let manual_c = args.c.or(parse_f64("c")?);
    let manual_big_c = args.big_c.or(parse_f64("bigC")?);
    let levels = args.levels.or(parse_usize("K")?).unwrap_or(12);
    let nmax = args.nmax.or(parse_usize("nmax")?).unwrap_or(4);
    let n_terms = args.n_terms.or(parse_usize("Nmax")?);
    let system_str = args
        .system
        .clone()
        .or_else(|| get("system"))
        .unwrap_or_else(|| format!("walsh:n={dim}"));
    let system = BiorthSystem::parse(&system_str).map_err(|e| e.to_string())?;
    let seed = args
        .seed
        .or(get("seed").map(|v| v.parse::<u64>()).transpose().map_err(|e| format!("seed: {e}"))?)
        .unwrap_or(1);
    let out = args
        .out
        .clone()
        .or_else(|| get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let tol = args.tol.or(parse_f64("tol")?).unwrap_or(1e-10);
    let norms_depth = args.depth.or(parse_usize("depth")?.map(|d| d as u32)).unwrap_or(1);

    if manual_a.is_some() != manual_c.is_some() {
        return Err("provide both a and c (or neither; they are auto-selected)".into());
    }
    let params = match (manual_a, manual_c) {
        (Some(a), Some(c)) => {
            let t1 = parse_f64("t1")?.unwrap_or(0.125);
            let l1 = lpdot::piecewise::log_e_over(t1);
            let min_c = l1 / (a * l1 - 1.0);
            let big_c = manual_big_c.unwrap_or(1.5 * min_c.abs());
            Some(ConstructionParams { a, c, big_c, t1 })
        }
        _ => None,
    };

    Ok(RunConfig {
        exponent,
        dim,
        params,
        manual_a,
        manual_c,
        levels,
        nmax,
        n_terms,
        system,
        seed,
        out,
        tol,
        norms_depth,
    })
}

fn pipeline_config(cfg: &RunConfig) -> PipelineConfig {
    PipelineConfig {
        exponent: cfg.exponent.clone(),
        mode: PipelineMode::Conjugate,
        dim: cfg.dim,
        levels: cfg.levels,
        params: cfg.params,
        dense_set: None,
        samples: 2000,
        seed: cfg.seed,
        piece_cap: 400_000,
    }
}

fn write(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| format!("mkdir {dir:?}: {e}"))?;
    }
    fs::write(path, contents).map_err(|e| format!("write {path:?}: {e}"))
}

fn cmd_construct(cfg: &RunConfig) -> Result<Vec<String>, String> {
    let r = run_pipeline(&pipeline_config(cfg)).map_err(|e| e.to_string())?;
    let manifest = serde_json::to_string_pretty(&r.manifest()).map_err(|e| e.to_string())?;
    write(&cfg.out.join("manifest.json"), &manifest)?;
    write(&cfg.out.join("envelope.txt"), &r.h.to_text())?;
    write(&cfg.out.join("star_profile.txt"), &r.star_profile.to_text())?;
    write(&cfg.out.join("q_tilde.txt"), &r.q_tilde.to_text())?;
    write(&cfg.out.join("zeta.txt"), &r.zeta.to_text())?;
    write(&cfg.out.join("omega_core.txt"), &r.omega.core.to_text())?;
    let c = &r.certificates;
    let mut failures = Vec::new();
    if !c.cuts.pass {
        failures.push("construct:cut-certificate".to_string());
    }
    if !c.conj_bound_pass {
        failures.push("construct:conjugate-bound".to_string());
    }
    println!(
        "construct: K={} pieces={} mass={:.6} omega_gap={:e} -> {}",
        r.cuts.order(),
        r.overlay.piece_count(),
        c.overlay.mass,
        c.omega_gap,
        cfg.out.display()
    );
    Ok(failures)
}

fn cmd_norms(cfg: &RunConfig) -> Result<Vec<String>, String> {
    let r = run_pipeline(&pipeline_config(cfg)).map_err(|e| e.to_string())?;
    let rep = vexp::char_lower_bound(&r.exponent, cfg.norms_depth, r.params.c, cfg.tol, true)
        .map_err(|e| e.to_string())?;
    write(&cfg.out.join("norms.csv"), &rep.to_csv())?;
    println!(
        "norms: depth={} boxes={} min_norm={:.6} bound=1/c={:.6} violations={}",
        cfg.norms_depth, rep.boxes_checked, rep.min_norm, rep.bound, rep.violations
    );
    Ok(if rep.pass() { vec![] } else { vec!["norms:char-lower-bound".to_string()] })
}

fn cmd_systems(cfg: &RunConfig) -> Result<Vec<String>, String> {
    let sys = cfg.system;
    let gram = sys.gram_check(64);
    // E = [0,1/2) × [0,1)^(n−1): the canonical vanishing-test set.
    let e = vec![lpdot::maps::DyadicBox {
        axes: (0..sys.dim)
            .map(|axis| {
                if axis == 0 {
                    lpdot::maps::DyadicIv { num: 0, depth: 1 }
                } else {
                    lpdot::maps::DyadicIv { num: 0, depth: 0 }
                }
            })
            .collect(),
    }];
    let vanish = sys.vanishing_check(&e, Which::F, 64).map_err(|e| e.to_string())?;
    write(&cfg.out.join("vanishing.csv"), &vanish.to_csv(Which::F))?;
    let summary = serde_json::json!({
        "system": sys.descriptor(),
        "bound": sys.bound(),
        "gram_deviation": gram,
        "vanishing_tail_from_2": vanish.tail_sup.get(1).copied().unwrap_or(0.0),
    });
    write(
        &cfg.out.join("systems.json"),
        &serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?,
    )?;
    println!("systems: {} gram_deviation={:e} bound={}", sys.descriptor(), gram, sys.bound());
    Ok(if gram <= 1e-10 { vec![] } else { vec!["systems:gram".to_string()] })
}

fn cmd_diverge(cfg: &RunConfig) -> Result<Vec<String>, String> {
    let dcfg = DivergeConfig {
        exponent: cfg.exponent.clone(),
        dim: cfg.dim,
        nmax: cfg.nmax,
        grid_depth: 12,
        n_terms: cfg.n_terms,
        system: cfg.system,
        seed: cfg.seed,
        pool_cap: 10,
        tol: cfg.tol.max(1e-10),
    };
    let r = diverge::run_diverge(&dcfg).map_err(|e| e.to_string())?;
    write(&cfg.out.join(format!("growth_nmax{}.csv", cfg.nmax)), &r.growth.to_csv())?;
    write(
        &cfg.out.join("membership.json"),
        &serde_json::to_string_pretty(&r.membership).map_err(|e| e.to_string())?,
    )?;
    write(
        &cfg.out.join("fpair.json"),
        &serde_json::to_string_pretty(&r.fpair.provenance).map_err(|e| e.to_string())?,
    )?;
    println!(
        "diverge: nmax={} |F1|_1={:.6} ratio_f1={:.4} ratio_f2={:.4} ladder_max={:.3} fraction(G>10)={:.5}",
        cfg.nmax,
        r.membership.l1_f1,
        r.membership.ratio_f1,
        r.membership.ratio_f2,
        r.growth.ladder_max,
        r.growth.fraction_above(10.0)
    );
    Ok(if r.membership.pass { vec![] } else { vec!["diverge:membership".to_string()] })
}

fn cmd_verify(cfg: &RunConfig) -> Result<Vec<String>, String> {
    use rand::{Rng, SeedableRng};
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, result: Result<(), String>| match result {
        Ok(()) => println!("ok   {name}"),
        Err(why) => {
            println!("FAIL {name}: {why}");
            failures.push(name.to_string());
        }
    };

    check("piecewise:integrals", {
        let f = Piecewise1D::log_e_over_t();
        let i1 = f.integrate(0.0, 1.0).map_err(|e| e.to_string())?;
        let i2 = f.integrate(0.5, 1.0).map_err(|e| e.to_string())?;
        let p = f.pow_integral(std::f64::consts::E.sqrt(), 0.0, 1.0).map_err(|e| e.to_string())?;
        if (i1 - 2.0).abs() < 1e-12
            && (i2 - (1.0 - 0.5 * 2.0f64.ln())).abs() < 1e-12
            && (p - 2.0 * std::f64::consts::E.sqrt()).abs() < 1e-12
        {
            Ok(())
        } else {
            Err(format!("values {i1} {i2} {p}"))
        }
    });

    check("piecewise:rearrangement", {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut res = Ok(());
        'outer: for _ in 0..200 {
            let pieces = rng.gen_range(2..32usize);
            let mut breaks: Vec<f64> = vec![0.0, 1.0];
            for _ in 0..pieces - 1 {
                breaks.push((rng.gen_range(1..u64::pow(2, 20)) as f64) / 2.0f64.powi(20));
            }
            breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            breaks.dedup();
            let values: Vec<f64> =
                (0..breaks.len() - 1).map(|_| rng.gen_range(0.0..10.0f64)).collect();
            let f = Piecewise1D::step(&breaks, &values).map_err(|e| e.to_string())?;
            let r = f.rearrange().map_err(|e| e.to_string())?;
            for &v in &values {
                if f.distribution(v) != r.sorted.distribution(v) {
                    res = Err(format!("distribution mismatch at {v}"));
                    break 'outer;
                }
            }
            let ia = f.integrate(0.0, 1.0).map_err(|e| e.to_string())?;
            let ib = r.sorted.integrate(0.0, 1.0).map_err(|e| e.to_string())?;
            if (ia - ib).abs() > 1e-12 {
                res = Err(format!("integral drift {ia} vs {ib}"));
                break;
            }
        }
        res
    });

    check("maps:interleave-preservation", {
        let mut res = Ok(());
        for dim in 1..=3usize {
            let rep = DigitInterleave::for_dim(dim).verify_preserving(10);
            if rep.max_discrepancy != 0.0 {
                res = Err(format!("dim {dim}: discrepancy {}", rep.max_discrepancy));
            }
        }
        res
    });

    check("maps:transport-identity", {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
        let mut res = Ok(());
        'outer: for _ in 0..50 {
            let n = rng.gen_range(2..24usize);
            let breaks: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0f64)).collect();
            let f = Piecewise1D::step(&breaks, &values).map_err(|e| e.to_string())?;
            let (zeta, r) = transport(&f).map_err(|e| e.to_string())?;
            for i in 0..200 {
                let t = (i as f64 + 0.5) / 200.0;
                if (f.eval(t) - r.sorted.eval(zeta.forward(t))).abs() > 1e-12 {
                    res = Err(format!("transport mismatch at {t}"));
                    break 'outer;
                }
            }
            if zeta.verify_preserving(6).max_discrepancy > 1e-12 {
                res = Err("transport not measure preserving".to_string());
                break;
            }
        }
        res
    });

    check("vexp:constant-exponent-norms", {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xabc);
        let rho = DigitInterleave::for_dim(2);
        let mut res = Ok(());
        for &p0 in &[1.5, 2.0, 3.0] {
            let p = ExponentFn::pullback(Piecewise1D::constant(p0), rho);
            for _ in 0..10 {
                let d = rng.gen_range(0..4u32);
                let b = lpdot::maps::DyadicBox {
                    axes: vec![
                        lpdot::maps::DyadicIv {
                            num: rng.gen_range(0..(1u64 << d).max(1)),
                            depth: d,
                        },
                        lpdot::maps::DyadicIv {
                            num: rng.gen_range(0..(1u64 << d).max(1)),
                            depth: d,
                        },
                    ],
                };
                let f = BoxSum::new(vec![(b, rng.gen_range(0.3..4.0))]);
                let want = vexp::lp_norm_constant(&f, &rho, p0).map_err(|e| e.to_string())?;
                let got = vexp::norm(&f, &p, 1e-11).map_err(|e| e.to_string())?.value;
                if (got - want).abs() > 1e-8 * want.max(1.0) {
                    res = Err(format!("p0={p0}: {got} vs {want}"));
                }
            }
        }
        res
    });

    check("construct:pipeline-certificates", {
        let mut pcfg = pipeline_config(cfg);
        pcfg.levels = pcfg.levels.min(10);
        let r = run_pipeline(&pcfg).map_err(|e| e.to_string())?;
        let c = &r.certificates;
        if !c.cuts.pass {
            Err("cut certificate failed".to_string())
        } else if c.overlay.max_monotone_violation > 1e-12 {
            Err(format!("monotone violation {}", c.overlay.max_monotone_violation))
        } else if c.overlay.mass > 2.0 {
            Err(format!("mass {} exceeds 2", c.overlay.mass))
        } else if c.overlay.min_window_margin < -1e-9 {
            Err(format!("window lower bound violated by {}", c.overlay.min_window_margin))
        } else if c.transported_profile_margin > 1e-9 {
            Err(format!("overlay exceeds transported profile by {}", c.transported_profile_margin))
        } else if c.domination_margin > 1e-9 {
            Err(format!("rearrangement domination violated by {}", c.domination_margin))
        } else if !c.conj_bound_pass {
            Err("conjugate bound failed".to_string())
        } else if c.equimeasurability_gap > 1e-9 {
            Err(format!("equimeasurability gap {}", c.equimeasurability_gap))
        } else if c.omega_gap != 0.0 {
            Err(format!("omega gap {} (expected exact 0)", c.omega_gap))
        } else {
            Ok(())
        }
    });

    check("systems:gram-and-vanishing", {
        let walsh = BiorthSystem::walsh(cfg.dim.min(3));
        let pw = BiorthSystem::perturbed_walsh(1, 0.1, 64);
        let trig = BiorthSystem::trig(2);
        if walsh.gram_check(64) != 0.0 {
            Err("walsh gram deviation".to_string())
        } else if pw.gram_check(64) > 1e-10 {
            Err("perturbed walsh gram deviation".to_string())
        } else if trig.gram_check(16) > 1e-12 {
            Err("trig gram deviation".to_string())
        } else {
            let sys1 = BiorthSystem::walsh(1);
            let e = vec![lpdot::maps::DyadicBox {
                axes: vec![lpdot::maps::DyadicIv { num: 0, depth: 1 }],
            }];
            let rep = sys1.vanishing_check(&e, Which::F, 32).map_err(|e| e.to_string())?;
            if rep.values[1..].iter().all(|&v| v == 0.0) {
                Ok(())
            } else {
                Err("nonzero tail integral".to_string())
            }
        }
    });

    check("diverge:membership-and-growth", {
        let mk = |nmax: usize| DivergeConfig {
            exponent: cfg.exponent.clone(),
            dim: cfg.dim,
            nmax,
            grid_depth: 10,
            n_terms: Some(255),
            system: BiorthSystem::walsh(cfg.dim),
            seed: cfg.seed,
            pool_cap: 10,
            tol: 1e-8,
        };
        let small = diverge::run_diverge(&mk(2)).map_err(|e| e.to_string())?;
        let large = diverge::run_diverge(&mk(4)).map_err(|e| e.to_string())?;
        let cmpr = compare_growth(&small.growth, &large.growth, 10.0);
        if !small.membership.pass || !large.membership.pass {
            Err(format!("membership ratios out of range: {:?}", large.membership))
        } else if !cmpr.cellwise_nondecreasing {
            Err(format!("growth decreased cellwise by {}", -cmpr.min_gap))
        } else if !cmpr.strictly_grew {
            Err("high-threshold fraction did not grow".to_string())
        } else {
            Ok(())
        }
    });

    Ok(failures)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Construct(a)
        | Command::Verify(a)
        | Command::Norms(a)
        | Command::Systems(a)
        | Command::Diverge(a)
        | Command::All(a) => a.clone(),
    };
    let cfg = match resolve(&args, &cli.config) {
        Ok(cfg) => cfg,
        Err(why) => {
            eprintln!("config error: {why}");
            return ExitCode::from(2);
        }
    };
    // Manual parameter sanity is a config-level error (exit 2).
    if let Some(p) = cfg.params {
        if let Err(why) = p.validate() {
            eprintln!("config error: {why}");
            return ExitCode::from(2);
        }
    }
    let _ = (cfg.manual_a, cfg.manual_c);

    let run = || -> Result<Vec<String>, String> {
        match &cli.command {
            Command::Construct(_) => cmd_construct(&cfg),
            Command::Verify(_) => cmd_verify(&cfg),
            Command::Norms(_) => cmd_norms(&cfg),
            Command::Systems(_) => cmd_systems(&cfg),
            Command::Diverge(_) => cmd_diverge(&cfg),
            Command::All(_) => {
                let mut failures = cmd_construct(&cfg)?;
                failures.extend(cmd_norms(&cfg)?);
                failures.extend(cmd_systems(&cfg)?);
                failures.extend(cmd_diverge(&cfg)?);
                Ok(failures)
            }
        }
    };

    match run() {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in &failures {
                eprintln!("failed check: {f}");
            }
            ExitCode::from(1)
        }
        Err(why) => {
            // Parameter/requirement violations surface as config errors.
            let config_like = why.contains("requirement") || why.contains("must");
            eprintln!("error: {why}");
            ExitCode::from(if config_like { 2 } else { 1 })
        }
    }
}
