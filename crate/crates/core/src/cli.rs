//! Command line front end.
//!
//! Every subcommand writes one report: structured text (JSON) by default or
//! CSV with `--format csv`. Reports start with the library version and the
//! full effective configuration, and a fixed seed reproduces them byte for
//! byte. Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
//! check ran but its hypothesis was rejected.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::boltzmann::{decomposition_check, Boltzmann, BoltzmannParams, UniformSampler};
use crate::census::{generate_codes_with_bound, CensusTable, DEFAULT_GENERATION_BOUND};
use crate::decorated::{BoundaryCondition, DecoratedLaw, DecoratedParams, SpinMeasure};
use crate::error::{Error, Result};
use crate::markov::{counterexample_branches, rerooting_invariance_check, single_type1, strong_markov_test, weak_markov_test, FirstType2, PrefixRule, StoppingMapQ, StoppingRule};
use crate::metric::{mcmc_sample_metric, mid_edge_markov_test, p3_shape_test, McmcConfig, MetricParams, DEFAULT_EPSILON};
use crate::peeling::{encode, parse_events, replay, Builder};

/// Library version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the directory for relative `--output` paths.
pub const OUTPUT_DIR_VAR: &str = "QUADMAP_OUTPUT_DIR";

/// Exit code for a rejected hypothesis.
pub const EXIT_REJECTED: i32 = 2;

/// Exit code for usage and configuration errors.
pub const EXIT_USAGE: i32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mu {
    Ising,
    Gaussian,
}

impl Mu {
    fn measure(self) -> SpinMeasure {
        match self {
            Mu::Ising => SpinMeasure::Ising,
            Mu::Gaussian => SpinMeasure::Gaussian,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "quadmap", version, about = "Random quadrangulations with boundary: census, sampling, peeling and Markov-property checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    /// Write the report to this file instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Counts of quadrangulations by semi-perimeter and face count.
    Census(CensusArgs),
    /// Canonical exploration of a map given by its codec string.
    Explore {
        /// Codec string of a hole-free map.
        codec: String,
    },
    /// Maps drawn from the Boltzmann law, one codec string per line.
    Sample {
        /// Semi-perimeter.
        #[arg(long = "l")]
        ell: usize,
        /// Weight per face.
        #[arg(long, default_value_t = 1.0 / 24.0)]
        q: f64,
        /// Number of maps.
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Random seed.
        #[arg(long)]
        seed: u64,
        /// Largest face count of the truncated law.
        #[arg(long, default_value_t = 60)]
        face_cap: usize,
    },
    /// Exact and statistical checks.
    #[command(subcommand)]
    Verify(Verify),
    /// Spin-decorated maps from the truncated decorated law.
    SampleDecorated(DecoratedArgs),
    /// Metric maps with Brownian bridge decorations.
    #[command(subcommand)]
    Metric(MetricCommand),
}

#[derive(Args, Debug)]
struct CensusArgs {
    /// Largest semi-perimeter of the table.
    #[arg(long, default_value_t = 4)]
    lmax: usize,
    /// Largest face count of the table.
    #[arg(long, default_value_t = 8)]
    fmax: usize,
    /// List every map with semi-perimeter L and F faces instead of counting.
    #[arg(long, num_args = 2, value_names = ["L", "F"])]
    generate: Option<Vec<usize>>,
}

#[derive(Subcommand, Debug)]
enum Verify {
    /// Largest gap between point probabilities and products of step probabilities.
    Decomposition {
        /// Largest semi-perimeter.
        #[arg(long = "l", default_value_t = 3)]
        ell: usize,
        /// Largest face count.
        #[arg(long, default_value_t = 3)]
        fmax: usize,
        /// Weight per face.
        #[arg(long, default_value_t = 1.0 / 24.0)]
        q: f64,
        /// Largest accepted relative gap.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Weak Markov property of a fixed submap.
    WeakMarkov {
        #[command(flatten)]
        common: MarkovArgs,
        /// Codec prefix of the submap (default: a single type-1 step).
        #[arg(long)]
        subq: Option<String>,
    },
    /// Strong Markov property for a stopping rule.
    StrongMarkov {
        #[command(flatten)]
        common: MarkovArgs,
        /// Stopping rule: `prefix:N`, `first-type2` or `right-process`.
        #[arg(long, default_value = "first-type2")]
        rule: String,
    },
    /// Exact rerooting invariance of the Boltzmann law.
    Reroot {
        /// Largest semi-perimeter.
        #[arg(long = "l", default_value_t = 3)]
        ell: usize,
        /// Largest face count.
        #[arg(long, default_value_t = 2)]
        fmax: usize,
        /// Weight per face.
        #[arg(long, default_value_t = 1.0 / 24.0)]
        q: f64,
    },
    /// Branches of the right-process stopping map that fail to discover the map.
    Counterexample {
        /// Weight per face.
        #[arg(long, default_value_t = 1.0 / 24.0)]
        q: f64,
    },
}

#[derive(Args, Debug)]
struct MarkovArgs {
    /// Semi-perimeter.
    #[arg(long = "l", default_value_t = 1)]
    ell: usize,
    /// Weight per face.
    #[arg(long, default_value_t = 1.0 / 24.0)]
    q: f64,
    /// Number of sampled maps.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    /// Reject when any p-value is at or below this level.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct DecoratedArgs {
    /// Semi-perimeter.
    #[arg(long = "l", default_value_t = 1)]
    ell: usize,
    /// Weight per face.
    #[arg(long, default_value_t = 1.0 / 24.0)]
    q: f64,
    /// Spin measure.
    #[arg(long, value_enum, default_value = "ising")]
    mu: Mu,
    /// Inverse temperature.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Comma-separated boundary spins (default: all 1).
    #[arg(long)]
    boundary: Option<String>,
    /// Largest face count.
    #[arg(long, default_value_t = 4)]
    face_cap: usize,
    /// Number of samples.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Random seed.
    #[arg(long)]
    seed: u64,
}

#[derive(Args, Debug)]
struct MetricArgs {
    /// Semi-perimeter.
    #[arg(long = "l", default_value_t = 1)]
    ell: usize,
    /// Weight per internal vertex.
    #[arg(long, default_value_t = 0.25)]
    q: f64,
    /// Length penalty rate.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Largest number of internal vertices.
    #[arg(long, default_value_t = 3)]
    cap: usize,
    /// Spin measure.
    #[arg(long, value_enum, default_value = "gaussian")]
    mu: Mu,
    /// Comma-separated boundary values (default: 0,1,0,1,… for gaussian, all 1 for ising).
    #[arg(long)]
    boundary: Option<String>,
    /// Number of recorded chain samples.
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    /// Sweeps between recorded samples.
    #[arg(long, default_value_t = 5)]
    thin: usize,
    /// Sweeps discarded at the start of each chain.
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
}

#[derive(Subcommand, Debug)]
enum MetricCommand {
    /// Chain samples: codec string, edge lengths and spins.
    Sample(MetricArgs),
    /// Log-linear shape of the return density along the root edge.
    P3 {
        #[command(flatten)]
        common: MetricArgs,
        /// Half-width of the return window.
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Smallest time of the grid.
        #[arg(long, default_value_t = 0.2)]
        tmin: f64,
        /// Largest time of the grid.
        #[arg(long, default_value_t = 2.0)]
        tmax: f64,
        /// Number of grid times.
        #[arg(long, default_value_t = 10)]
        tcount: usize,
    },
    /// Markov property at a point inside the root edge.
    MidEdge {
        #[command(flatten)]
        common: MetricArgs,
        /// Exploration depth along the root edge.
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        /// Reject when any p-value is at or below this level.
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
}

/// A finished report.
struct Report {
    command: String,
    config: Value,
    result: Value,
    csv: String,
    rejected: bool,
}

impl Report {
    fn render(&self, format: Format) -> String {
        match format {
            Format::Text => {
                let v = json!({ "tool": "quadmap", "version": VERSION, "command": self.command, "config": self.config, "result": self.result, "rejected": self.rejected });
                serde_json::to_string_pretty(&v).expect("reports serialize") + "\n"
            }
            Format::Csv => format!(
                "# quadmap {VERSION}\n# command: {}\n# config: {}\n# rejected: {}\n{}",
                self.command,
                serde_json::to_string(&self.config).expect("configs serialize"),
                self.rejected,
                self.csv
            ),
        }
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {x:?}")))).collect()
}

fn census(a: &CensusArgs) -> Result<Report> {
    if let Some(g) = &a.generate {
        let (l, f) = (g[0], g[1]);
        let bound = DEFAULT_GENERATION_BOUND.max(l + 2 * f);
        let codes: Vec<String> = generate_codes_with_bound(l, f, bound)?.into_iter().map(|(ev, _)| crate::peeling::encode_events(&ev)).collect();
        let mut csv = String::from("codec\n");
        for c in &codes {
            csv.push_str(&format!("\"{c}\"\n"));
        }
        return Ok(Report {
            command: "census --generate".into(),
            config: json!({ "l": l, "f": f }),
            result: json!({ "count": codes.len(), "codecs": codes }),
            csv,
            rejected: false,
        });
    }
    let t = CensusTable::new(a.lmax, a.fmax);
    let mut rows = Vec::new();
    let mut csv = String::from("l,f,count\n");
    for l in 1..=a.lmax {
        for f in 0..=a.fmax {
            let c = t.count(l, f)?.to_string();
            csv.push_str(&format!("{l},{f},{c}\n"));
            rows.push(json!({ "l": l, "f": f, "count": c }));
        }
    }
    Ok(Report { command: "census".into(), config: json!({ "lmax": a.lmax, "fmax": a.fmax }), result: Value::Array(rows), csv, rejected: false })
}

fn explore_cmd(codec: &str) -> Result<Report> {
    let events = parse_events(codec)?;
    let ell = crate::peeling::implied_semi_perimeter(&events)?;
    let mut b = Builder::initial(ell)?;
    let mut csv = String::from("step,event,perimeters\n");
    let mut steps = Vec::new();
    let show = |p: &[usize]| p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    csv.push_str(&format!("0,,{}\n", show(b.hole_half_perimeters())));
    for (i, ev) in events.iter().enumerate() {
        let h = *b.marks().first().ok_or_else(|| Error::Parse("events continue after the map is complete".into()))?;
        b.peel(h, *ev)?;
        csv.push_str(&format!("{},{ev},{}\n", i + 1, show(b.hole_half_perimeters())));
        steps.push(json!({ "event": ev.to_string(), "perimeters": b.hole_half_perimeters() }));
    }
    Ok(Report { command: "explore".into(), config: json!({ "codec": codec, "l": ell }), result: json!({ "steps": steps, "complete": b.is_complete() }), csv, rejected: false })
}

fn sample_cmd(ell: usize, q: f64, n: usize, seed: u64, face_cap: usize) -> Result<Report> {
    let params = BoltzmannParams { q, face_cap, ..BoltzmannParams::default() };
    let law = Boltzmann::new(params, ell)?;
    let sampler = UniformSampler::new(ell, face_cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codes = Vec::with_capacity(n);
    for _ in 0..n {
        codes.push(encode(&law.sample(ell, &sampler, &mut rng)?)?);
    }
    let csv = std::iter::once("codec".to_string()).chain(codes.iter().map(|c| format!("\"{c}\""))).collect::<Vec<_>>().join("\n") + "\n";
    Ok(Report {
        command: "sample".into(),
        config: json!({ "l": ell, "q": q, "n": n, "seed": seed, "face_cap": face_cap, "tail_tol": params.tail_tol }),
        result: json!({ "codecs": codes }),
        csv,
        rejected: false,
    })
}

fn markov_csv(rep: &crate::markov::MarkovTestReport) -> String {
    let mut csv = String::from("kind,stratum,hole,hits,statistic,dof,p_value\n");
    for t in &rep.marginal {
        csv.push_str(&format!("marginal,\"{}\",{},{},{},{},{}\n", t.stratum, t.hole, t.hits, t.result.statistic, t.result.dof, t.result.p_value));
    }
    for t in &rep.independence {
        csv.push_str(&format!("independence,\"{}\",{}-{},,{},{},{}\n", t.stratum, t.first, t.second, t.result.statistic, t.result.dof, t.result.p_value));
    }
    csv
}

fn rule_of(s: &str) -> Result<Box<dyn StoppingRule>> {
    if let Some(n) = s.strip_prefix("prefix:") {
        let n = n.parse().map_err(|_| Error::Parse(format!("bad prefix length {n:?}")))?;
        return Ok(Box::new(PrefixRule(n)));
    }
    match s {
        "first-type2" => Ok(Box::new(FirstType2)),
        "right-process" => Ok(Box::new(StoppingMapQ)),
        _ => Err(Error::InvalidArgument(format!("unknown stopping rule {s:?}; use prefix:N, first-type2 or right-process"))),
    }
}

fn verify(v: &Verify, threads: usize) -> Result<Report> {
    match v {
        Verify::Decomposition { ell, fmax, q, tol } => {
            let params = BoltzmannParams::with_q(*q);
            let err = decomposition_check(*ell, *fmax, &params)?;
            Ok(Report {
                command: "verify decomposition".into(),
                config: json!({ "l": ell, "fmax": fmax, "q": q, "tol": tol, "face_cap": params.face_cap, "tail_tol": params.tail_tol }),
                result: json!({ "max_relative_error": err }),
                csv: format!("max_relative_error\n{err}\n"),
                rejected: err.is_nan() || err > *tol,
            })
        }
        Verify::WeakMarkov { common: c, subq } => {
            let params = BoltzmannParams::with_q(c.q);
            let sub = match subq {
                Some(s) => replay(c.ell, &parse_events(s)?)?,
                None => single_type1(c.ell)?,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            let rep = weak_markov_test(c.ell, &params, &sub, c.n, &mut rng, threads)?;
            Ok(Report {
                command: "verify weak-markov".into(),
                config: json!({ "l": c.ell, "q": c.q, "n": c.n, "seed": c.seed, "alpha": c.alpha, "subq": subq.clone().unwrap_or_else(|| "T1".into()), "face_cap": params.face_cap, "tail_tol": params.tail_tol }),
                rejected: rep.min_p_value() <= c.alpha,
                csv: markov_csv(&rep),
                result: to_value(&rep),
            })
        }
        Verify::StrongMarkov { common: c, rule } => {
            let params = BoltzmannParams::with_q(c.q);
            let r = rule_of(rule)?;
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            let rep = strong_markov_test(c.ell, &params, r.as_ref(), c.n, &mut rng, threads)?;
            Ok(Report {
                command: "verify strong-markov".into(),
                config: json!({ "l": c.ell, "q": c.q, "n": c.n, "seed": c.seed, "alpha": c.alpha, "rule": rule, "face_cap": params.face_cap, "tail_tol": params.tail_tol }),
                rejected: rep.min_p_value() <= c.alpha,
                csv: markov_csv(&rep),
                result: to_value(&rep),
            })
        }
        Verify::Reroot { ell, fmax, q } => {
            let params = BoltzmannParams::with_q(*q);
            let err = rerooting_invariance_check(*ell, *fmax, &params)?;
            Ok(Report {
                command: "verify reroot".into(),
                config: json!({ "l": ell, "fmax": fmax, "q": q, "face_cap": params.face_cap, "tail_tol": params.tail_tol }),
                result: json!({ "max_error": err }),
                csv: format!("max_error\n{err}\n"),
                rejected: err != 0.0,
            })
        }
        Verify::Counterexample { q } => {
            let params = BoltzmannParams::with_q(*q);
            let rep = counterexample_branches(&params)?;
            let mut csv = String::from("leaf,steps,probability,completions,compatible,equal_to_q\n");
            for l in &rep.leaves {
                let steps = l.steps.iter().map(|(label, ev)| format!("{label}:{ev}")).collect::<Vec<_>>().join(" ");
                csv.push_str(&format!("\"{}\",\"{steps}\",{},{},{},{}\n", l.name, l.probability, l.completions, l.compatible, l.equal_to_q));
            }
            let ok = rep.all_fail_to_discover() && rep.leaves.iter().all(|l| l.probability > 0.0);
            Ok(Report { command: "verify counterexample".into(), config: json!({ "q": q }), result: to_value(&rep), csv, rejected: !ok })
        }
    }
}

fn decorated_cmd(a: &DecoratedArgs) -> Result<Report> {
    let mu = a.mu.measure();
    let values = match &a.boundary {
        Some(s) => parse_values(s)?,
        None => vec![1.0; 2 * a.ell],
    };
    let b = BoundaryCondition::new(values, a.ell, &mu)?;
    let params = DecoratedParams { q: a.q, face_cap: a.face_cap, beta: a.beta, mu, ..DecoratedParams::default() };
    let law = DecoratedLaw::new(a.ell, &b, &params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut samples = Vec::new();
    let mut csv = String::from("sample,codec,face,value\n");
    for i in 0..a.n {
        let (m, s) = law.sample(&mut rng)?;
        let code = encode(&m)?;
        if s.spins.is_empty() {
            csv.push_str(&format!("{i},\"{code}\",,\n"));
        }
        for (k, v) in s.spins.iter().enumerate() {
            csv.push_str(&format!("{i},\"{code}\",{k},{v}\n"));
        }
        samples.push(json!({ "codec": code, "spins": s.spins }));
    }
    Ok(Report {
        command: "sample-decorated".into(),
        config: json!({ "l": a.ell, "q": a.q, "mu": a.mu, "beta": a.beta, "boundary": b.0, "face_cap": law.cap(), "tail_tol": params.tail_tol, "n": a.n, "seed": a.seed }),
        result: json!({ "partition": law.total(), "tail_estimate": law.tail_estimate(), "samples": samples }),
        csv,
        rejected: false,
    })
}

fn metric_setup(a: &MetricArgs) -> Result<(MetricParams, Vec<f64>, Value)> {
    let mu = a.mu.measure();
    let b = match &a.boundary {
        Some(s) => parse_values(s)?,
        None => match a.mu {
            Mu::Ising => vec![1.0; 2 * a.ell],
            Mu::Gaussian => (0..2 * a.ell).map(|k| (k % 2) as f64).collect(),
        },
    };
    let params = MetricParams {
        q: a.q,
        lambda: a.lambda,
        mu,
        skeleton_cap: a.cap,
        mcmc: McmcConfig { thin: a.thin, burn_in: a.burn_in, ..McmcConfig::default() },
    };
    let config = json!({ "l": a.ell, "boundary": b, "params": to_value(&params), "steps": a.steps, "seed": a.seed });
    Ok((params, b, config))
}

fn metric(m: &MetricCommand, threads: usize) -> Result<Report> {
    match m {
        MetricCommand::Sample(a) => {
            let (params, b, config) = metric_setup(a)?;
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let run = mcmc_sample_metric(a.ell, &b, &params, a.steps, &mut rng)?;
            let mut csv = String::from("sample,codec,edge,tail,head,length,tail_value,head_value\n");
            let mut samples = Vec::new();
            for (i, s) in run.samples.iter().enumerate() {
                let sk = &s.map.skeleton;
                for (k, (e, w)) in sk.edges().iter().zip(&s.map.lengths).enumerate() {
                    csv.push_str(&format!("{i},\"{}\",{k},{},{},{w},{},{}\n", sk.codec(), e.tail, e.head, s.value(e.tail), s.value(e.head)));
                }
                samples.push(json!({ "codec": sk.codec(), "lengths": s.map.lengths, "spins": s.spins }));
            }
            Ok(Report { command: "metric sample".into(), config, result: json!({ "diagnostics": run.diagnostics, "samples": samples }), csv, rejected: false })
        }
        MetricCommand::P3 { common: a, epsilon, tmin, tmax, tcount } => {
            let (params, b, mut config) = metric_setup(a)?;
            if *tcount < 3 {
                return Err(Error::InvalidArgument("the regression needs at least three grid times".into()));
            }
            let grid: Vec<f64> = (0..*tcount).map(|k| tmin + (tmax - tmin) * k as f64 / (*tcount - 1) as f64).collect();
            config["epsilon"] = json!(epsilon);
            config["t_grid"] = json!(grid);
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let rep = p3_shape_test(a.ell, &b, &params, &grid, a.steps, *epsilon, &mut rng, threads)?;
            let mut csv = String::from("t,hits,estimate,log_shape\n");
            for k in 0..grid.len() {
                csv.push_str(&format!("{},{},{},{}\n", grid[k], rep.hits[k], rep.estimates[k], rep.log_shape[k]));
            }
            let r = &rep.regression;
            let ok = r.r2 >= 0.98 && r.slope < 0.0 && rep.intercept_z.abs() < 3.0;
            Ok(Report { command: "metric p3".into(), config, result: to_value(&rep), csv, rejected: !ok })
        }
        MetricCommand::MidEdge { common: a, t, alpha } => {
            let (params, b, mut config) = metric_setup(a)?;
            config["t"] = json!(t);
            config["alpha"] = json!(alpha);
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let rep = mid_edge_markov_test(a.ell, &b, &params, *t, a.steps, &mut rng, threads)?;
            let mut csv = String::from("bin,lo,hi,hits,joint_statistic,joint_dof,joint_p,residual_ks_p,skeleton_p\n");
            for (k, bin) in rep.bins.iter().enumerate() {
                let sp = bin.skeleton.map_or(String::new(), |s| s.p_value.to_string());
                csv.push_str(&format!("{k},{},{},{},{},{},{},{},{sp}\n", bin.lo, bin.hi, bin.hits, bin.joint.statistic, bin.joint.dof, bin.joint.p_value, bin.residual_ks.p_value));
            }
            let rejected = rep.p_values().iter().any(|&p| p <= *alpha);
            Ok(Report { command: "metric mid-edge".into(), config, result: to_value(&rep), csv, rejected })
        }
    }
}

fn execute(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Census(a) => census(a),
        Command::Explore { codec } => explore_cmd(codec),
        Command::Sample { ell, q, n, seed, face_cap } => sample_cmd(*ell, *q, *n, *seed, *face_cap),
        Command::Verify(v) => verify(v, cli.threads),
        Command::SampleDecorated(a) => decorated_cmd(a),
        Command::Metric(m) => metric(m, cli.threads),
    }
}

fn output_path(p: &PathBuf) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_VAR) {
        Some(dir) if p.is_relative() => PathBuf::from(dir).join(p),
        _ => p.clone(),
    }
}

/// Runs the command line `argv` (program name first), writing the report to
/// `out` unless `--output` is given, and error messages to `err`. Returns the
/// exit code.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let text = report.render(cli.format);
    let written = match &cli.output {
        Some(p) => {
            let path = output_path(p);
            std::fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => out.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    if report.rejected {
        let _ = writeln!(err, "check failed: {}", report.command);
        EXIT_REJECTED
    } else {
        0
    }
}

/// Runs the command line with standard output and standard error.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
