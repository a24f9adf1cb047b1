use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bmtree::covariance::{farris_forward, farris_inverse, simulate_sample_cov, TreeMetric};
use bmtree::mle::{experiment, fit, Domain, FitOptions};
use bmtree::pcoords::{p_adjoint_from_theta, pair_key};
use bmtree::poly::poly_to_json;
use bmtree::scalar::frac;
use bmtree::toric::{all_quartet_binomials, codimension, generators, residuals, semialgebraic_membership};
use bmtree::trees::{all_shapes, TreeJson};
use bmtree::treks::{
    adjugate_polynomials, binomial_positivity_certificate, factorization, theta_to_t, trek_polynomial, trek_systems,
};
use bmtree::{parse_newick, Error, QuartetTopology, RootedTree, SymMatrix, Theta};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "bmtree", version, about = "Brownian motion tree models: covariance, toric and likelihood tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Cone,
    Spectrahedron,
}

#[derive(Subcommand)]
enum Command {
    /// Sample covariance of N draws from the tree model.
    Simulate {
        #[arg(long)]
        tree: String,
        /// Edge weights `θ_1,...` (comma separated, or a single value for
        /// all edges); defaults to the branch lengths of the tree.
        #[arg(long)]
        theta: Option<String>,
        #[arg(long = "N", alias = "samples")]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Subtract the sample mean before forming `S`.
        #[arg(long)]
        center: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Maximum likelihood estimate over the tree cone.
    Fit {
        #[arg(long)]
        tree: String,
        /// Sample covariance as JSON rows or CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long, value_enum, default_value = "cone")]
        domain: DomainArg,
    },
    /// Decide membership of a concentration matrix in the model.
    Membership {
        #[arg(long)]
        tree: String,
        /// Concentration matrix `K` (JSON rows or CSV).
        #[arg(long, conflicts_with = "sigma", required_unless_present = "sigma")]
        k: Option<PathBuf>,
        /// Covariance matrix `Σ`; its inverse is tested.
        #[arg(long)]
        sigma: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Convert the input to exact rationals and test with zero tolerance.
        #[arg(long)]
        exact: bool,
    },
    /// Quadratic binomials generating the toric ideal.
    ToricGens {
        #[arg(long)]
        tree: String,
        /// All three binomials per star quartet instead of a minimal set.
        #[arg(long)]
        all: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Trek systems and their polynomial for a pair of leaves.
    Treks {
        #[arg(long)]
        tree: String,
        #[arg(long, value_parser = parse_pair)]
        pair: (usize, usize),
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Positivity certificate `(p_ij p_kl − p_il p_jk)·det Σ` for a quartet.
    Certify {
        #[arg(long)]
        tree: String,
        #[arg(long, value_parser = parse_quartet)]
        quartet: [usize; 4],
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Determinant factorization of `p_ij · det Σ` in path-sum variables.
    Factorize {
        #[arg(long)]
        tree: String,
        /// A single pair; all pairs when omitted.
        #[arg(long, value_parser = parse_pair)]
        pair: Option<(usize, usize)>,
    },
    /// Farris transform between tree metrics and covariances.
    Farris {
        /// Tree metric as a JSON pair map; prints the covariance.
        #[arg(long, conflicts_with = "sigma", required_unless_present = "sigma")]
        metric: Option<PathBuf>,
        /// Covariance (JSON rows or CSV); prints the metric.
        #[arg(long)]
        sigma: Option<PathBuf>,
    },
    /// Face-codimension frequencies of the MLE over simulated data.
    Experiment {
        #[arg(long)]
        tree: String,
        #[arg(long, default_value = "1")]
        theta: String,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Exact identity suite over all tree shapes up to `max-n` leaves.
    Verify {
        #[arg(long, default_value_t = 5)]
        max_n: usize,
        /// Random parameter points per shape for the toric check.
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
}

fn parse_list(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
        .collect()
}

fn parse_pair(text: &str) -> Result<(usize, usize), String> {
    match parse_list(text)?.as_slice() {
        &[i, j] => Ok((i.min(j), i.max(j))),
        _ => Err("expected two labels such as 1,2".into()),
    }
}

fn parse_quartet(text: &str) -> Result<[usize; 4], String> {
    parse_list(text)?
        .try_into()
        .map_err(|_| "expected four labels such as 1,2,3,4".to_string())
}

type CliResult<T> = Result<T, String>;

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

/// A tree given inline as Newick text, or a path to a Newick or JSON file.
fn load_tree(arg: &str) -> CliResult<(RootedTree, Theta<f64>)> {
    let text = if arg.trim_end().ends_with(';') && !Path::new(arg).exists() {
        arg.to_string()
    } else {
        read_text(Path::new(arg))?
    };
    if text.trim_start().starts_with('{') {
        let json: TreeJson = serde_json::from_str(&text).map_err(|e| format!("invalid tree JSON: {e}"))?;
        return json.into_tree().map_err(|e| e.to_string());
    }
    parse_newick::<f64>(text.trim()).map_err(|e| e.to_string())
}

fn load_matrix(path: &Path) -> CliResult<SymMatrix<f64>> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| format!("invalid matrix JSON: {e}"))
    } else {
        SymMatrix::from_csv(&text).map_err(|e| e.to_string())
    }
}

fn parse_theta(text: &str, tree: &RootedTree) -> CliResult<Theta<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("invalid theta {x:?}: {e}")))
        .collect::<CliResult<_>>()?;
    let m = tree.num_vertices();
    match values.len() {
        1 => Ok(Theta::constant(m, values[0])),
        k if k == m => Ok(Theta::new(values)),
        k => Err(format!("theta needs 1 or {m} values, got {k}")),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn err(e: Error) -> String {
    e.to_string()
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Simulate {
            tree,
            theta,
            samples,
            seed,
            center,
            format,
        } => {
            let (tree, lengths) = load_tree(&tree)?;
            let theta = match theta {
                Some(t) => parse_theta(&t, &tree)?,
                None => lengths,
            };
            let s = simulate_sample_cov(&tree, &theta, samples, seed, center).map_err(err)?;
            Ok(match format {
                Format::Csv => s.to_csv(),
                _ => to_json(&s),
            })
        }
        Command::Fit {
            tree,
            data,
            restarts,
            tol,
            seed,
            max_iter,
            domain,
        } => {
            let (tree, _) = load_tree(&tree)?;
            let s = load_matrix(&data)?;
            let opts = FitOptions {
                tol,
                max_iter,
                restarts,
                seed,
                domain: match domain {
                    DomainArg::Cone => Domain::Cone,
                    DomainArg::Spectrahedron => Domain::Spectrahedron,
                },
                ..FitOptions::default()
            };
            let result = fit(&tree, &s, &opts).map_err(err)?;
            if result.singular_data {
                eprintln!("warning: data matrix is singular; the estimate may sit on a degenerate face");
            }
            Ok(to_json(&result))
        }
        Command::Membership {
            tree,
            k,
            sigma,
            tol,
            exact,
        } => {
            let (tree, _) = load_tree(&tree)?;
            let (matrix, invert) = match (k, sigma) {
                (Some(path), _) => (load_matrix(&path)?, false),
                (None, Some(path)) => (load_matrix(&path)?, true),
                (None, None) => unreachable!("clap requires one input"),
            };
            let report = if exact {
                let m = matrix.to_rational().ok_or("matrix has non-finite entries")?;
                let k = if invert { m.inverse().map_err(err)? } else { m };
                semialgebraic_membership(&tree, &k, &frac(0, 1))
            } else {
                let k = if invert { matrix.inverse().map_err(err)? } else { matrix };
                semialgebraic_membership(&tree, &k, &tol)
            }
            .map_err(err)?;
            Ok(to_json(&report))
        }
        Command::ToricGens { tree, all, format } => {
            let (tree, _) = load_tree(&tree)?;
            let gens = if all { all_quartet_binomials(&tree) } else { generators(&tree) };
            let n = tree.n_leaves();
            let lines: Vec<String> = gens.iter().map(|g| g.display(n)).collect();
            Ok(match format {
                Format::Json => to_json(&json!({
                    "generators": lines,
                    "count": lines.len(),
                    "codimension": codimension(&tree),
                })),
                _ => lines.join("\n"),
            })
        }
        Command::Treks { tree, pair, format } => {
            let (tree, _) = load_tree(&tree)?;
            let (i, j) = pair;
            let systems = trek_systems(&tree, i, j).map_err(err)?;
            let poly = trek_polynomial(&tree, i, j).map_err(err)?;
            Ok(match format {
                Format::Json => to_json(&json!({
                    "pair": [i, j],
                    "systems": systems,
                    "polynomial": poly.to_json("θ"),
                })),
                _ => {
                    let mut out = String::new();
                    for system in &systems {
                        let treks: Vec<String> = system
                            .treks
                            .iter()
                            .map(|t| format!("{}<-{}->{}", t.initial, t.top, t.final_))
                            .collect();
                        writeln!(out, "{}", treks.join("  ")).unwrap();
                    }
                    write!(out, "p{}*s = {}", pair_key(tree.n_leaves(), i, j), poly.fmt_with("θ")).unwrap();
                    out
                }
            })
        }
        Command::Certify { tree, quartet, format } => {
            let (tree, _) = load_tree(&tree)?;
            let cert = binomial_positivity_certificate(&tree, quartet).map_err(err)?;
            let [i, j] = cert.split.left;
            let [k, l] = cert.split.right;
            let n = tree.n_leaves();
            let key = |a: usize, b: usize| format!("p{}", pair_key(n, a.min(b), a.max(b)));
            let label = format!("({}*{} - {}*{})", key(i, j), key(k, l), key(i, l), key(j, k));
            Ok(match format {
                Format::Json => to_json(&json!({
                    "quartet": format!("{i}{j}|{k}{l}"),
                    "scaled": poly_to_json(&cert.scaled, "θ"),
                    "reduced": cert.reduced.as_ref().map(|p| poly_to_json(p, "θ")),
                })),
                _ => match &cert.reduced {
                    Some(p) => format!("{label}*s = {}", p.fmt_with("θ")),
                    None => format!("{label}*s^2 = {}", cert.scaled.fmt_with("θ")),
                },
            })
        }
        Command::Factorize { tree, pair } => {
            let (tree, _) = load_tree(&tree)?;
            if !tree.is_binary() {
                return Err(err(Error::NotBinary));
            }
            let adj = adjugate_polynomials(&tree).map_err(err)?;
            let n = tree.n_leaves();
            let pairs: Vec<(usize, usize)> = match pair {
                Some(p) => vec![p],
                None => adj.p.keys().copied().collect(),
            };
            let mut out = String::new();
            for (i, j) in pairs {
                if !(i < j && j <= n) {
                    return Err(format!("invalid pair ({i}, {j})"));
                }
                let lhs = theta_to_t(&tree, &adj.get(i, j).to_poly());
                let rhs = factorization(&tree, i, j).map_err(err)?;
                let status = if lhs == rhs { "ok" } else { "MISMATCH" };
                writeln!(out, "P{} = {}  [{status}]", pair_key(n, i, j), rhs.fmt_with("t")).unwrap();
                if lhs != rhs {
                    return Err(err(Error::FactorizationFailed {
                        i,
                        j,
                        difference: (&lhs - &rhs).fmt_with("t"),
                    }));
                }
            }
            Ok(out.trim_end().to_string())
        }
        Command::Farris { metric, sigma } => match (metric, sigma) {
            (Some(path), _) => {
                let d: TreeMetric<f64> =
                    serde_json::from_str(&read_text(&path)?).map_err(|e| format!("invalid metric JSON: {e}"))?;
                Ok(to_json(&farris_forward(&d)))
            }
            (None, Some(path)) => Ok(to_json(&farris_inverse(&load_matrix(&path)?))),
            (None, None) => unreachable!("clap requires one input"),
        },
        Command::Experiment {
            tree,
            theta,
            sizes,
            reps,
            seed,
            restarts,
            tol,
        } => {
            let (tree, _) = load_tree(&tree)?;
            let theta = parse_theta(&theta, &tree)?;
            let opts = FitOptions {
                tol,
                restarts,
                ..FitOptions::default()
            };
            let table = experiment(&tree, &theta, &sizes, reps, seed, &opts).map_err(err)?;
            Ok(table.to_csv().trim_end().to_string())
        }
        Command::Verify { max_n, points } => verify(max_n, points),
    }
}

/// Runs every exact identity over all shapes with `2 <= n <= max_n`.
fn verify(max_n: usize, points: usize) -> CliResult<String> {
    if !(2..=7).contains(&max_n) {
        return Err("max-n must lie in 2..=7".into());
    }
    let mut out = String::new();
    let mut failures = 0;
    for n in 2..=max_n {
        let shapes = all_shapes(n);
        let mut counts = [0usize; 4];
        let mut bad = Vec::new();
        for (idx, shape) in shapes.iter().enumerate() {
            match verify_shape(shape, idx as u64, points) {
                Ok(c) => counts.iter_mut().zip(c).for_each(|(a, b)| *a += b),
                Err(e) => bad.push(format!("{}: {e}", shape.topology_key())),
            }
        }
        writeln!(
            out,
            "n={n} shapes={} trek-identities={} certificates={} factorizations={} toric-points={} {}",
            shapes.len(),
            counts[0],
            counts[1],
            counts[2],
            counts[3],
            if bad.is_empty() { "PASS" } else { "FAIL" }
        )
        .unwrap();
        for line in &bad {
            writeln!(out, "  {line}").unwrap();
        }
        failures += bad.len();
    }
    if failures > 0 {
        print!("{out}");
        return Err(format!("{failures} shape(s) failed verification"));
    }
    out.push_str("all suites pass");
    Ok(out)
}

fn verify_shape(tree: &RootedTree, salt: u64, points: usize) -> Result<[usize; 4], String> {
    let adj = adjugate_polynomials(tree).map_err(err)?;
    let mut counts = [0; 4];
    for (&(i, j), p) in &adj.p {
        let treks = trek_polynomial(tree, i, j).map_err(err)?;
        if &treks != p || !treks.all_coefficients_one() {
            return Err(format!("trek identity fails for ({i}, {j})"));
        }
        counts[0] += 1;
    }
    for labels in tree.quartets() {
        let topology = tree.quartet_topology(labels).map_err(err)?;
        if !adj.quartet_equalities_hold(topology, labels) {
            return Err(format!("quartet equalities fail for {labels:?}"));
        }
        if let QuartetTopology::Trivalent(split) = topology {
            adj.certificate(split).map_err(err)?;
            counts[1] += 1;
        }
    }
    if tree.is_binary() {
        for &(i, j) in adj.p.keys() {
            let lhs = theta_to_t(tree, &adj.get(i, j).to_poly());
            if lhs != factorization(tree, i, j).map_err(err)? {
                return Err(format!("factorization fails for ({i}, {j})"));
            }
            counts[2] += 1;
        }
    }
    let gens = generators(tree);
    let m = tree.num_vertices();
    for k in 0..points as u64 {
        // deterministic positive rationals, distinct per shape and point
        let theta = Theta::new(
            (0..m as u64)
                .map(|v| frac(((v + 3) * (k + 7) * (salt + 11) % 97 + 1) as i64, (v + k) as i64 % 5 + 1))
                .collect(),
        );
        let (p, _) = p_adjoint_from_theta(tree, &theta).map_err(err)?;
        if residuals(&gens, &p) != frac(0, 1) {
            return Err("toric generators do not vanish at a model point".into());
        }
        counts[3] += 1;
    }
    Ok(counts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
