use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Rational64;
use serde_json::{json, Value};

use powdex::absences::{densities, AbsenceCategory};
use powdex::exactsolve::{enumerate_lattices_exact, ExactLambda};
use powdex::latmath::{cell_from_gram, gram_from_cell, niggli_reduce, LatticeParams, SymMat};
use powdex::pipeline::{auto_params, index, n_sol_for, n_zone_for, IndexReport, SourceType};
use powdex::synth::{corrupt, qlist_from_lattice, reciprocal_gram, SynthConfig};

mod peakfile;

#[derive(Parser)]
#[command(name = "powdex", version, about = "Powder diffraction auto-indexing")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Index a peak list.
    Index(IndexArgs),
    /// Write a synthetic peak list.
    Simulate(SimArgs),
    /// Pair and triple densities for the absence categories.
    Densities {
        #[arg(long)]
        json: bool,
    },
    /// Lattices with a given complete set of values.
    Exact {
        file: PathBuf,
        /// Rank of the form.
        #[arg(short, long)]
        n: usize,
        /// Cutoff (default: largest value).
        #[arg(long)]
        cutoff: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Niggli-reduce a cell.
    Reduce {
        /// a b c alpha beta gamma
        #[arg(num_args = 6, allow_negative_numbers = true)]
        cell: Vec<f64>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Lab,
    Synchrotron,
}

#[derive(Args)]
struct IndexArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value = "lab")]
    source: Source,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    npeak: Option<usize>,
    #[arg(long)]
    nzone: Option<usize>,
    #[arg(long)]
    nsol: Option<usize>,
    #[arg(long)]
    volmin: Option<f64>,
    #[arg(long)]
    volmax: Option<f64>,
    /// Minimum interatomic distance (Å).
    #[arg(long)]
    d: Option<f64>,
    /// Extra zero shift in degrees for 2θ input.
    #[arg(long, allow_negative_numbers = true)]
    zeroshift: Option<f64>,
    #[arg(long)]
    no_prune: bool,
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 3.0)]
    min_merit: f64,
}

#[derive(Args)]
struct SimArgs {
    /// a b c alpha beta gamma
    #[arg(long, num_args = 6)]
    cell: Vec<f64>,
    #[arg(long, default_value_t = 2.5)]
    qmax: f64,
    #[arg(long)]
    category: Option<AbsenceCategory>,
    #[arg(long, default_value_t = 0.0)]
    eps1: f64,
    #[arg(long, default_value_t = 0.0)]
    eps2: f64,
    /// Exact number of false peaks.
    #[arg(long)]
    false_peaks: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1e-7)]
    err_abs: f64,
    #[arg(long, default_value_t = 1e-5)]
    err_rel: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Writes to stdout; a closed pipe ends the process quietly.
fn emit(args: std::fmt::Arguments) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("powdex: {e}");
        std::process::exit(2);
    }
}

macro_rules! out {
    ($($t:tt)*) => { emit(format_args!($($t)*)) };
}

macro_rules! outln {
    ($($t:tt)*) => { emit(format_args!("{}\n", format_args!($($t)*))) };
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("powdex: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            return fail(e);
        }
    }
    match cli.cmd {
        Cmd::Index(a) => cmd_index(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Densities { json } => cmd_densities(json),
        Cmd::Exact { file, n, cutoff, json } => cmd_exact(file, n, cutoff, json),
        Cmd::Reduce { cell, json } => cmd_reduce(&cell, json),
    }
}

fn cmd_index(a: IndexArgs) -> ExitCode {
    let text = match fs::read_to_string(&a.file) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", a.file.display())),
    };
    let pf = match peakfile::parse(&text) {
        Ok(p) => p,
        Err(e) => return fail(format!("{}: {e}", a.file.display())),
    };
    let peaks = match pf.to_peaks(a.zeroshift.unwrap_or(0.0)) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let source = match a.source {
        Source::Lab => SourceType::Lab,
        Source::Synchrotron => SourceType::Synchrotron,
    };
    let mut params = match auto_params(&peaks, source) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    if let Some(d) = a.d {
        params = match powdex::pipeline::auto_params_with_d(&peaks, source, d) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
    }
    if let Some(n) = a.npeak {
        params.n_peak = n.min(peaks.len());
        params.n_zone = n_zone_for(params.n_peak);
        params.n_sol = n_sol_for(params.n_zone);
    }
    if let Some(c) = a.c {
        params.c = c;
    }
    if let Some(n) = a.nzone {
        params.n_zone = n;
    }
    if let Some(n) = a.nsol {
        params.n_sol = n;
    }
    if let Some(v) = a.volmin {
        params.vol_min = v;
    }
    if let Some(v) = a.volmax {
        params.vol_max = v;
    }
    params.delta_two_theta = pf.zeroshift + a.zeroshift.unwrap_or(0.0);
    params.prune = !a.no_prune;
    let report = match index(&peaks, &params) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if a.json {
        outln!("{}", serde_json::to_string_pretty(&index_json(&report)).unwrap());
    } else {
        out!("{}", index_tsv(&report));
    }
    if report.solutions.iter().any(|s| s.merit >= a.min_merit) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn index_tsv(r: &IndexReport) -> String {
    let mut s = String::from("rank\ta\tb\tc\talpha\tbeta\tgamma\tvolume\tbravais\tmerit\tdet\tsource\n");
    for (i, x) in r.solutions.iter().enumerate() {
        let c = &x.cell;
        let src: Vec<String> = x.source.iter().map(|k| k.to_string()).collect();
        s.push_str(&format!(
            "{}\t{:.5}\t{:.5}\t{:.5}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{}\t{:.2}\t{:.6e}\t{}\n",
            i + 1,
            c.a,
            c.b,
            c.c,
            c.alpha,
            c.beta,
            c.gamma,
            x.volume,
            x.bravais,
            x.merit,
            x.det(),
            src.join(",")
        ));
    }
    s
}

fn index_json(r: &IndexReport) -> Value {
    let p = &r.params;
    let sols: Vec<Value> = r
        .solutions
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c = &x.cell;
            json!({
                "rank": i + 1,
                "cell": {"a": c.a, "b": c.b, "c": c.c, "alpha": c.alpha, "beta": c.beta, "gamma": c.gamma},
                "volume": x.volume,
                "bravais": x.bravais.symbol(),
                "merit": x.merit,
                "n_calc": x.n_calc,
                "det": x.det(),
                "reciprocal_gram": x.gram.rows(),
                "source": x.source,
            })
        })
        .collect();
    json!({
        "schema": 1,
        "params": {
            "c": p.c, "n_peak": p.n_peak, "n_zone": p.n_zone, "n_sol": p.n_sol,
            "vol_min": p.vol_min, "vol_max": p.vol_max, "d": p.d,
            "delta_two_theta": p.delta_two_theta, "prune": p.prune,
        },
        "stats": {
            "zones_parallelogram": r.stats.zones_parallelogram,
            "zones_three_q": r.stats.zones_three_q,
            "zones_kept": r.stats.zones_kept,
            "candidates": r.stats.candidates,
            "unique": r.stats.unique,
        },
        "solutions": sols,
    })
}

fn cell_arg(v: &[f64]) -> Result<LatticeParams, String> {
    match v {
        [a, b, c, al, be, ga] => Ok(LatticeParams::new(*a, *b, *c, *al, *be, *ga)),
        _ => Err("a cell needs six numbers: a b c alpha beta gamma".into()),
    }
}

fn cmd_simulate(a: SimArgs) -> ExitCode {
    let cell = match cell_arg(&a.cell) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let s = match reciprocal_gram(&cell) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let qs = match qlist_from_lattice(&s, a.qmax, a.category) {
        Ok(q) => q,
        Err(e) => return fail(e),
    };
    let cfg = SynthConfig {
        q_max: a.qmax,
        category: a.category,
        epsilon1: a.eps1,
        epsilon2: a.eps2,
        false_peaks: a.false_peaks,
        sigma_rel: a.sigma,
        err_abs: a.err_abs,
        err_rel: a.err_rel,
        two_theta: None,
        seed: a.seed,
    };
    match corrupt(&qs, &cfg) {
        Ok(p) => {
            out!("{}", peakfile::write_q(&p));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn cmd_densities(as_json: bool) -> ExitCode {
    let rows: Vec<(AbsenceCategory, f64, f64)> = AbsenceCategory::ROWS
        .iter()
        .map(|&c| {
            let (p, t) = densities(c);
            (c, p.value(), t.value())
        })
        .collect();
    if as_json {
        let v: Vec<Value> =
            rows.iter().map(|(c, p, t)| json!({"category": c.letter().to_string(), "pair": p, "triple": t})).collect();
        outln!("{}", serde_json::to_string_pretty(&json!({"schema": 1, "densities": v})).unwrap());
    } else {
        outln!("category\tpair\ttriple");
        for (c, p, t) in rows {
            outln!("{}\t{p:.4}\t{t:.4}", c.letter());
        }
    }
    ExitCode::SUCCESS
}

fn rational(tok: &str) -> Result<Rational64, String> {
    let bad = || format!("not an exact number: '{tok}'");
    if let Some((n, d)) = tok.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational64::new(n, d));
    }
    if let Some((i, f)) = tok.split_once('.') {
        let digits = f.len() as u32;
        let scale = 10i64.checked_pow(digits).ok_or_else(bad)?;
        let whole: i64 = format!("{i}{f}").parse().map_err(|_| bad())?;
        return Ok(Rational64::new(whole, scale));
    }
    tok.parse::<i64>().map(Rational64::from_integer).map_err(|_| bad())
}

fn cmd_exact(file: PathBuf, n: usize, cutoff: Option<String>, as_json: bool) -> ExitCode {
    let text = match fs::read_to_string(&file) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", file.display())),
    };
    let mut vals = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        for tok in t.split_whitespace() {
            match rational(tok) {
                Ok(v) => vals.push(v),
                Err(e) => return fail(format!("{}: line {}: {e}", file.display(), k + 1)),
            }
        }
    }
    let c = match cutoff.as_deref().map(rational) {
        Some(Ok(c)) => c,
        Some(Err(e)) => return fail(e),
        None => match vals.iter().max() {
            Some(&m) => m,
            None => return fail("the value list is empty"),
        },
    };
    let lam = match ExactLambda::new(vals, c) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let sols = match enumerate_lattices_exact(n, &lam) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if as_json {
        let v: Vec<Value> = sols
            .iter()
            .map(|s| {
                let rows: Vec<Vec<String>> =
                    (0..s.gram.n).map(|i| (0..s.gram.n).map(|j| s.gram.a[i][j].to_string()).collect()).collect();
                json!({"gram": rows, "equivalent_to": s.equivalent_to})
            })
            .collect();
        outln!("{}", serde_json::to_string_pretty(&json!({"schema": 1, "solutions": v})).unwrap());
    } else {
        for (i, s) in sols.iter().enumerate() {
            match s.equivalent_to {
                Some(j) => outln!("{}\t{}\tequivalent to {}", i + 1, s.gram, j + 1),
                None => outln!("{}\t{}", i + 1, s.gram),
            }
        }
    }
    ExitCode::SUCCESS
}

fn cmd_reduce(cell: &[f64], as_json: bool) -> ExitCode {
    let p = match cell_arg(cell) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let g = match gram_from_cell(&p) {
        Ok(g) => g,
        Err(e) => return fail(e),
    };
    let (r, t): (SymMat, _) = match niggli_reduce(&g, 1e-9) {
        Ok(x) => x,
        Err(e) => return fail(e),
    };
    let c = match cell_from_gram(&r) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if as_json {
        let m: Vec<Vec<i64>> = (0..3).map(|i| t.row(i)).collect();
        let v = json!({
            "schema": 1,
            "cell": {"a": c.a, "b": c.b, "c": c.c, "alpha": c.alpha, "beta": c.beta, "gamma": c.gamma},
            "transform": m,
        });
        outln!("{}", serde_json::to_string_pretty(&v).unwrap());
    } else {
        outln!("{:.6}\t{:.6}\t{:.6}\t{:.4}\t{:.4}\t{:.4}", c.a, c.b, c.c, c.alpha, c.beta, c.gamma);
    }
    ExitCode::SUCCESS
}
