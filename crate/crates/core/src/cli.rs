//! The `bpda` command line.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage,
//! I/O or parse errors. Reports are `key: value` lines; numbers carry 12
//! significant digits.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alphabet::Alphabet;
use crate::bpda::Bpda;
use crate::compiler::{check_states, compile};
use crate::constructions::{fixture_fig2, make_dyck, make_dyck_recognizer, make_ngram, ReadoutSource};
use crate::format::{self, parse_bpda, parse_certificate, parse_model, Model};
use crate::lm::{sample_with, LanguageModel, Sample};
use crate::oracle::compare;
use crate::stack::DEFAULT_CONFIG_CAP;
use crate::structure::{
    check_representation_compatible, fit_readout, infer_certificate, logit_affine_rank,
    verify_certificate, READOUT_TOLERANCE,
};

#[derive(Parser, Debug)]
#[command(name = "bpda", version, about = "Bounded pushdown automata and their compilation to Elman RNN LMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the probabilistic and deterministic conditions of a BPDA or PFSA.
    Validate { model: PathBuf },
    /// Verify (or infer) a certificate and report the logit rank.
    Analyze {
        bpda: PathBuf,
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Compile a certified BPDA into a Heaviside RNN LM.
    Compile {
        bpda: PathBuf,
        certificate: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Probability of a string (bpda, pfsa or rnn file).
    Prob { model: PathBuf, string: String },
    /// Ancestral samples from a model.
    Sample {
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        max_len: usize,
        #[arg(short, default_value_t = 1)]
        n: usize,
    },
    /// Compile and compare against the automaton on every string up to a length.
    Verify {
        bpda: PathBuf,
        certificate: PathBuf,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Write a built-in automaton and its certificate.
    Make {
        #[command(subcommand)]
        what: Make,
    },
}

#[derive(Args, Debug)]
struct Out {
    /// Output path prefix.
    #[arg(short, long)]
    out: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Make {
    /// Bounded Dyck LM with `b` bracket types and depth `n`.
    Dyck {
        #[arg(long)]
        b: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Solve for a readout recognizing the language at threshold alpha.
        #[arg(long)]
        recognizer: bool,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 6.0)]
        margin: f64,
        #[command(flatten)]
        out: Out,
    },
    /// n-gram LM over an alphabet (`ab` or `x,y,z`).
    Ngram {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alphabet: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Out,
    },
    /// The 3-gram fixture PFSA over {a, b}.
    Fig2 {
        #[command(flatten)]
        out: Out,
    },
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

fn check(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

type Outcome = Result<i32, Failure>;

/// Formats with 12 significant digits, dropping trailing zeros.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..12).contains(&exp) {
        trim(format!("{:.*}", (11 - exp).max(0) as usize, x))
    } else {
        let s = format!("{x:.11e}");
        let (mantissa, e) = s.split_once('e').expect("scientific notation");
        format!("{}e{e}", trim(mantissa.to_string()))
    }
}

/// Runs the CLI on `args` (including the program name).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Model, Failure> {
    parse_model(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_bpda(path: &Path) -> Result<Bpda, Failure> {
    parse_bpda(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_certificate(path: &Path, bpda: &Bpda) -> Result<crate::structure::Certificate, Failure> {
    parse_certificate(&read(path)?, bpda).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn io(e: std::io::Error) -> Failure {
    usage(e)
}

macro_rules! kv {
    ($out:expr, $key:expr, $($arg:tt)*) => {
        writeln!($out, "{}: {}", $key, format!($($arg)*)).map_err(io)?
    };
}

fn dispatch(command: Command, out: &mut dyn Write) -> Outcome {
    match command {
        Command::Validate { model } => validate(&model, out),
        Command::Analyze { bpda, certificate } => analyze(&bpda, certificate.as_deref(), out),
        Command::Compile {
            bpda,
            certificate,
            output,
        } => compile_cmd(&bpda, &certificate, &output, out),
        Command::Prob { model, string } => prob(&model, &string, out),
        Command::Sample {
            model,
            seed,
            max_len,
            n,
        } => sample(&model, seed, max_len, n, out),
        Command::Verify {
            bpda,
            certificate,
            max_len,
            tol,
        } => verify(&bpda, &certificate, max_len, tol, out),
        Command::Make { what } => make(what, out),
    }
}

fn validate(path: &Path, out: &mut dyn Write) -> Outcome {
    let (kind, report) = match load(path)? {
        Model::Bpda(b) => ("bpda", b.validate()),
        Model::Pfsa(p) => ("pfsa", p.validate()),
        _ => return Err(usage("validate takes a bpda or pfsa file")),
    };
    kv!(out, "kind", "{kind}");
    kv!(out, "probabilistic", "{}", report.is_probabilistic);
    kv!(out, "deterministic", "{}", report.is_deterministic);
    kv!(out, "violations", "{}", report.violations.len());
    for v in &report.violations {
        match v {
            crate::lm::MassViolation::Initial { total } => kv!(out, "violation", "initial mass {}", num(*total)),
            crate::lm::MassViolation::Outgoing { at, total } => {
                kv!(out, "violation", "mass at {at} is {}", num(*total))
            }
        }
    }
    Ok(if report.is_probabilistic { 0 } else { 1 })
}

fn analyze(path: &Path, cert_path: Option<&Path>, out: &mut dyn Write) -> Outcome {
    let bpda = load_bpda(path)?;
    let space = bpda.space();
    let configs = bpda
        .reachable_configs(DEFAULT_CONFIG_CAP)
        .map_err(check)?;
    kv!(out, "reachable configurations", "{}", configs.len());
    kv!(out, "m", "{}", space.bound());
    kv!(out, "G", "{}", space.bits());
    kv!(out, "deterministic", "{}", bpda.is_deterministic());
    let mut code = 0;
    match logit_affine_rank(&bpda) {
        Ok(rank) => {
            kv!(out, "logit rank", "{rank}");
            kv!(out, "rank bound", "{}", space.width() + 1);
        }
        Err(e) => kv!(out, "logit rank", "unavailable ({e})"),
    }
    if let Ok(fit) = fit_readout(&bpda) {
        kv!(out, "representation residual", "{}", num(fit.max_residual));
        kv!(
            out,
            "representation compatible",
            "{}",
            check_representation_compatible(&bpda, READOUT_TOLERANCE).is_ok()
        );
    }
    let cert = match cert_path {
        Some(p) => {
            kv!(out, "certificate", "{}", p.display());
            Some(load_certificate(p, &bpda)?)
        }
        None => match infer_certificate(&bpda) {
            Ok(c) => {
                kv!(out, "certificate", "inferred");
                Some(c)
            }
            Err(e) => {
                kv!(out, "certificate", "not found at {e}");
                code = 1;
                None
            }
        },
    };
    if let Some(cert) = cert {
        let report = verify_certificate(&bpda, &cert, READOUT_TOLERANCE);
        kv!(out, "K", "{}", cert.classes());
        kv!(out, "D", "{}", cert.hidden_size(space));
        kv!(out, "verify", "{}", if report.passed() { "pass" } else { "fail" });
        for v in report.violations.iter().take(10) {
            kv!(out, "witness", "{v}");
        }
        if !report.passed() {
            code = 1;
        }
    }
    Ok(code)
}

fn compile_cmd(bpda_path: &Path, cert_path: &Path, output: &Path, out: &mut dyn Write) -> Outcome {
    let bpda = load_bpda(bpda_path)?;
    let cert = load_certificate(cert_path, &bpda)?;
    let compiled = compile(&bpda, &cert).map_err(check)?;
    write_file(output, &format::rnn_json(&compiled.lm))?;
    write!(out, "{}", compiled.report).map_err(io)?;
    kv!(out, "output", "{}", output.display());
    Ok(0)
}

fn parse_string(sigma: &Alphabet, text: &str) -> Result<Vec<usize>, Failure> {
    if text == "ε" {
        return Ok(Vec::new());
    }
    sigma.tokenize(text).map_err(usage)
}

fn prob(path: &Path, text: &str, out: &mut dyn Write) -> Outcome {
    fn report<L: LanguageModel>(lm: &L, text: &str, out: &mut dyn Write) -> Outcome {
        let s = parse_string(lm.sigma(), text)?;
        kv!(out, "string", "{}", lm.sigma().render(&s));
        kv!(out, "length", "{}", s.len());
        kv!(out, "prob", "{}", num(lm.prob(&s)));
        Ok(0)
    }
    match load(path)? {
        Model::Bpda(m) => report(&m, text, out),
        Model::Pfsa(m) => report(&m, text, out),
        Model::Rnn(m) => report(&m, text, out),
        Model::Certificate(_) => Err(usage("a certificate is not a language model")),
    }
}

fn sample(path: &Path, seed: u64, max_len: usize, n: usize, out: &mut dyn Write) -> Outcome {
    fn draw<L: LanguageModel>(lm: &L, seed: u64, max_len: usize, n: usize, out: &mut dyn Write) -> Outcome {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            match sample_with(lm, &mut rng, max_len) {
                Sample::Complete(s) => kv!(out, "sample", "{}", lm.sigma().render(&s)),
                Sample::Truncated(s) => kv!(out, "truncated", "{}", lm.sigma().render(&s)),
            }
        }
        Ok(0)
    }
    match load(path)? {
        Model::Bpda(m) => draw(&m, seed, max_len, n, out),
        Model::Pfsa(m) => draw(&m, seed, max_len, n, out),
        Model::Rnn(m) => draw(&m, seed, max_len, n, out),
        Model::Certificate(_) => Err(usage("a certificate is not a language model")),
    }
}

fn verify(bpda_path: &Path, cert_path: &Path, max_len: usize, tol: f64, out: &mut dyn Write) -> Outcome {
    let bpda = load_bpda(bpda_path)?;
    let cert = load_certificate(cert_path, &bpda)?;
    let compiled = compile(&bpda, &cert).map_err(check)?;
    kv!(out, "K", "{}", compiled.report.classes);
    kv!(out, "D", "{}", compiled.report.hidden_size);
    let cmp = compare(&bpda, &compiled.lm, max_len, tol).map_err(usage)?;
    kv!(out, "strings", "{}", cmp.strings);
    kv!(out, "max abs diff", "{}", num(cmp.max_abs_diff));
    kv!(out, "worst string", "{}", bpda.sigma().render(&cmp.worst_string));
    kv!(out, "tolerance", "{}", num(tol));
    kv!(out, "equivalence", "{}", if cmp.passed() { "pass" } else { "fail" });
    let states = check_states(&bpda, &compiled.lm, compiled.report.classes, max_len);
    match &states {
        Ok(s) => {
            kv!(out, "prefixes checked", "{}", s.prefixes);
            kv!(out, "max precision", "{}", s.max_precision);
            kv!(out, "single copy", "pass");
        }
        Err(e) => {
            kv!(out, "single copy", "fail");
            kv!(out, "witness", "{e}");
        }
    }
    let passed = cmp.passed() && states.is_ok();
    kv!(out, "result", "{}", if passed { "pass" } else { "fail" });
    Ok(if passed { 0 } else { 1 })
}

fn parse_alphabet(spec: &str) -> Result<Alphabet, Failure> {
    let result = if spec.contains(',') {
        Alphabet::new(spec.split(',').map(str::trim))
    } else {
        Alphabet::from_chars(spec)
    };
    result.map_err(usage)
}

fn write_pair(prefix: &str, bpda: &Bpda, cert: &crate::structure::Certificate, out: &mut dyn Write) -> Outcome {
    let bpda_path = format!("{prefix}.bpda.json");
    let cert_path = format!("{prefix}.cert.json");
    write_file(Path::new(&bpda_path), &format::bpda_json(bpda))?;
    write_file(Path::new(&cert_path), &format::certificate_json(cert, bpda))?;
    let compiled = compile(bpda, cert).map_err(check)?;
    kv!(out, "K", "{}", compiled.report.classes);
    kv!(out, "m", "{}", compiled.report.bound);
    kv!(out, "G", "{}", compiled.report.bits);
    kv!(out, "D", "{}", compiled.report.hidden_size);
    kv!(out, "bpda", "{bpda_path}");
    kv!(out, "certificate", "{cert_path}");
    Ok(0)
}

fn make(what: Make, out: &mut dyn Write) -> Outcome {
    match what {
        Make::Dyck {
            b,
            n,
            seed,
            recognizer,
            alpha,
            margin,
            out: o,
        } => {
            let prefix = o.out.unwrap_or_else(|| "dyck".into());
            if recognizer {
                match make_dyck_recognizer(b, n, alpha, margin) {
                    Ok((bpda, cert)) => {
                        kv!(out, "recognizer", "alpha {} margin {}", num(alpha), num(margin));
                        write_pair(&prefix, &bpda, &cert, out)
                    }
                    Err(e @ crate::constructions::ConstructionError::Parameter(_)) => Err(usage(e)),
                    Err(e) => Err(check(e)),
                }
            } else {
                let (bpda, cert) = make_dyck(b, n, &ReadoutSource::Seed(seed)).map_err(usage)?;
                write_pair(&prefix, &bpda, &cert, out)
            }
        }
        Make::Ngram {
            n,
            alphabet,
            seed,
            out: o,
        } => {
            let sigma = parse_alphabet(&alphabet)?;
            let (bpda, cert) = make_ngram(n, &sigma, &ReadoutSource::Seed(seed)).map_err(usage)?;
            write_pair(&o.out.unwrap_or_else(|| "ngram".into()), &bpda, &cert, out)
        }
        Make::Fig2 { out: o } => {
            let path = format!("{}.pfsa.json", o.out.unwrap_or_else(|| "fig2".into()));
            let pfsa = fixture_fig2();
            write_file(Path::new(&path), &format::pfsa_json(&pfsa))?;
            kv!(out, "states", "{}", pfsa.states().len());
            kv!(
                out,
                "note",
                "drawn arc weights scaled by {}, final weight {} on every state",
                num(1.0 - crate::constructions::FIG2_FINAL),
                num(crate::constructions::FIG2_FINAL)
            );
            kv!(out, "pfsa", "{path}");
            Ok(0)
        }
    }
}
