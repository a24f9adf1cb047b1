//! Maximum likelihood estimation over the tree cone `θ ≥ 0`.
//!
//! The objective is `ℓ(Σ) = −log det Σ − trace(S Σ⁻¹)` with `Σ = Σ_θ`.
//! Because `Σ_θ = Σ_v θ_v e_v e_vᵀ` with `e_v` the indicator of `de(v)`,
//! gradient and Hessian in `θ` reduce to quadratic forms in `Σ⁻¹`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::covariance::{pairs_by_lca, sigma_from_theta, simulate_sample_cov_with};
use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::trees::{parse_newick, RootedTree, Theta};

/// `−log det Σ − trace(S Σ⁻¹)`.
pub fn loglik_sigma(sigma: &SymMatrix<f64>, s: &SymMatrix<f64>) -> Result<f64> {
    check_dims(sigma.dim(), s)?;
    let (log_det, inv) = sigma.log_det_and_inverse()?;
    Ok(-log_det - inv.trace_product(s))
}

/// `log det K − trace(S K)`.
pub fn loglik_k(k: &SymMatrix<f64>, s: &SymMatrix<f64>) -> Result<f64> {
    check_dims(k.dim(), s)?;
    Ok(k.log_det()? - k.trace_product(s))
}

fn check_dims(n: usize, s: &SymMatrix<f64>) -> Result<()> {
    if s.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: s.dim(),
        });
    }
    Ok(())
}

/// Whether the optimizer keeps `θ ≥ 0` or only requires `Σ_θ ≻ 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// The model `L_{T,≥}`.
    #[default]
    Cone,
    /// The spectrahedron `L_T ∩ PD`.
    Spectrahedron,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Bound on the dimensionless KKT residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Perturbed starts in addition to the default start.
    pub restarts: usize,
    pub seed: u64,
    /// `θ̂_v <= active_threshold · max θ̂` marks a boundary coordinate.
    pub active_threshold: f64,
    pub domain: Domain,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 500,
            restarts: 8,
            seed: 42,
            active_threshold: 1e-6,
            domain: Domain::Cone,
        }
    }
}

const DIVERGENCE: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MleResult {
    #[serde(serialize_with = "ser_theta")]
    pub theta: Theta<f64>,
    pub sigma: SymMatrix<f64>,
    pub k: SymMatrix<f64>,
    pub loglik: f64,
    pub kkt_residual: f64,
    pub active_set: Vec<usize>,
    pub face_codim: usize,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: usize,
    /// `θ̂ ≥ 0`; always true for cone fits, informative for the closed
    /// forms and spectrahedron fits.
    pub in_cone: bool,
    /// The data matrix is not positive definite (fewer samples than leaves).
    pub singular_data: bool,
}

fn ser_theta<Ser: Serializer>(theta: &Theta<f64>, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
    theta.values().serialize(ser)
}

/// The likelihood as a function of `θ` for a fixed tree and data matrix.
pub struct Objective<'a> {
    tree: &'a RootedTree,
    s: &'a SymMatrix<f64>,
    /// Leaf indices (0-based) below each vertex, indexed by `v - 1`.
    clades: Vec<Vec<usize>>,
    /// Mean diagonal of `S`, the natural unit for `θ`.
    scale: f64,
}

/// `Σ_θ⁻¹` together with `ℓ(θ)`.
pub struct Evaluation {
    pub loglik: f64,
    pub sigma_inv: SymMatrix<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(tree: &'a RootedTree, s: &'a SymMatrix<f64>) -> Result<Self> {
        check_dims(tree.n_leaves(), s)?;
        let clades = tree
            .vertices()
            .map(|v| tree.descendants(v).into_iter().map(|i| i - 1).collect())
            .collect();
        let n = s.dim() as f64;
        let mean_diag = (0..s.dim()).map(|i| s.get(i, i)).sum::<f64>() / n;
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        Ok(Self { tree, s, clades, scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `None` when `Σ_θ` is not positive definite.
    pub fn evaluate(&self, theta: &[f64]) -> Option<Evaluation> {
        let sigma = sigma_from_theta(self.tree, &Theta::new(theta.to_vec())).ok()?;
        let (log_det, sigma_inv) = sigma.log_det_and_inverse().ok()?;
        let loglik = -log_det - sigma_inv.trace_product(self.s);
        loglik.is_finite().then_some(Evaluation { loglik, sigma_inv })
    }

    /// `∂ℓ/∂θ_v = e_vᵀ (Σ⁻¹SΣ⁻¹ − Σ⁻¹) e_v`.
    pub fn gradient(&self, eval: &Evaluation) -> Vec<f64> {
        let w = eval.sigma_inv.sandwich(self.s).sub(&eval.sigma_inv);
        self.clades
            .iter()
            .map(|c| c.iter().flat_map(|&i| c.iter().map(move |&j| (i, j))).map(|(i, j)| w.get(i, j)).sum())
            .collect()
    }

    /// `∂²ℓ/∂θ_u∂θ_v = a² − 2ab` with `a = e_uᵀΣ⁻¹e_v`, `b = e_uᵀΣ⁻¹SΣ⁻¹e_v`.
    pub fn hessian(&self, eval: &Evaluation) -> Vec<Vec<f64>> {
        let m = self.clades.len();
        let inv = &eval.sigma_inv;
        let middle = inv.sandwich(self.s);
        let block = |mat: &SymMatrix<f64>, a: &[usize], b: &[usize]| -> f64 {
            a.iter().map(|&i| b.iter().map(|&j| mat.get(i, j)).sum::<f64>()).sum()
        };
        let mut h = vec![vec![0.0; m]; m];
        for u in 0..m {
            for v in u..m {
                let a = block(inv, &self.clades[u], &self.clades[v]);
                let b = block(&middle, &self.clades[u], &self.clades[v]);
                h[u][v] = a * a - 2.0 * a * b;
                h[v][u] = h[u][v];
            }
        }
        h
    }

    /// Dimensionless projected-gradient residual: in units where `θ` is
    /// measured in multiples of the mean data variance, the sup-norm of
    /// `x − P(x + ∇ₓℓ)`.
    pub fn kkt_residual(&self, theta: &[f64], grad: &[f64], domain: Domain) -> f64 {
        let c = self.scale;
        theta
            .iter()
            .zip(grad)
            .map(|(&t, &g)| match domain {
                Domain::Spectrahedron => (c * g).abs(),
                Domain::Cone => {
                    let x = t / c;
                    (x - (x + c * g).max(0.0)).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `ℓ(Σ_θ)` for the given tree.
pub fn loglik_theta(tree: &RootedTree, theta: &Theta<f64>, s: &SymMatrix<f64>) -> Result<f64> {
    loglik_sigma(&sigma_from_theta(tree, theta)?, s)
}

/// Gradient of `ℓ(Σ_θ)` in `θ`, indexed like `θ`.
pub fn grad_theta(tree: &RootedTree, theta: &Theta<f64>, s: &SymMatrix<f64>) -> Result<Theta<f64>> {
    theta.check_len(tree)?;
    let obj = Objective::new(tree, s)?;
    let eval = obj.evaluate(theta.values()).ok_or(Error::NotPositiveDefinite)?;
    Ok(Theta::new(obj.gradient(&eval)))
}

/// Hessian of `ℓ(Σ_θ)` in `θ`.
pub fn hessian_theta(tree: &RootedTree, theta: &Theta<f64>, s: &SymMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    theta.check_len(tree)?;
    let obj = Objective::new(tree, s)?;
    let eval = obj.evaluate(theta.values()).ok_or(Error::NotPositiveDefinite)?;
    Ok(obj.hessian(&eval))
}

/// Orthogonal projection of `S` onto `L_T` (averaging entries that share an
/// lca), as path sums per vertex.
fn project_path_sums(tree: &RootedTree, s: &SymMatrix<f64>) -> Vec<f64> {
    pairs_by_lca(tree)
        .iter()
        .map(|pairs| {
            if pairs.is_empty() {
                0.0
            } else {
                pairs.iter().map(|&(i, j)| s.get(i - 1, j - 1)).sum::<f64>() / pairs.len() as f64
            }
        })
        .collect()
}

/// Default start: `θ` of the projection of `S` onto `L_T`, clipped below
/// at `1e-3` times the mean data variance.
pub fn default_start(tree: &RootedTree, s: &SymMatrix<f64>) -> Result<Theta<f64>> {
    let obj = Objective::new(tree, s)?;
    let t = project_path_sums(tree, s);
    let floor = 1e-3 * obj.scale;
    Ok(Theta::new(
        tree.vertices()
            .map(|v| (t[v] - t[tree.parent(v)]).max(floor))
            .collect(),
    ))
}

/// One local ascent from a fixed start.
#[derive(Clone, Debug)]
pub struct LocalFit {
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    /// `ℓ` at every accepted iterate, starting with the initial point.
    pub history: Vec<f64>,
}

/// Projected Newton ascent with Levenberg damping and an Armijo search
/// along the projected arc; falls back to a projected gradient step when
/// the Newton direction makes no progress.
pub fn ascend(obj: &Objective, start: &[f64], opts: &FitOptions) -> Result<LocalFit> {
    let project = |x: Vec<f64>| -> Vec<f64> {
        match opts.domain {
            Domain::Cone => x.into_iter().map(|t| t.max(0.0)).collect(),
            Domain::Spectrahedron => x,
        }
    };
    let mut theta = project(start.to_vec());
    let mut eval = obj.evaluate(&theta).ok_or(Error::NotPositiveDefinite)?;
    let mut history = vec![eval.loglik];
    let c = obj.scale;
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;
    let mut residual;
    loop {
        let grad = obj.gradient(&eval);
        residual = obj.kkt_residual(&theta, &grad, opts.domain);
        if residual <= opts.tol {
            converged = true;
            break;
        }
        if theta.iter().any(|t| t.abs() > DIVERGENCE) {
            diverged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        // coordinates pinned at the boundary with an outward gradient
        let eps = (1e-6 * c).min(residual * c);
        let free: Vec<usize> = (0..theta.len())
            .filter(|&v| opts.domain == Domain::Spectrahedron || !(theta[v] <= eps && grad[v] < 0.0))
            .collect();
        let hess = obj.hessian(&eval);
        let newton = newton_direction(&hess, &grad, &free);

        let mut next = None;
        if let Some(dir) = newton {
            next = line_search(obj, &theta, &eval, &grad, &dir, &project);
        }
        if next.is_none() {
            let dir: Vec<f64> = grad.iter().map(|g| g * c * c).collect();
            next = line_search(obj, &theta, &eval, &grad, &dir, &project);
        }
        match next {
            Some((t, e)) => {
                theta = t;
                eval = e;
                history.push(eval.loglik);
            }
            None => break,
        }
    }
    Ok(LocalFit {
        theta,
        loglik: eval.loglik,
        kkt_residual: residual,
        converged: converged && !diverged,
        diverged,
        iterations,
        history,
    })
}

/// Solves `(−H_FF + μI) d_F = g_F`, raising `μ` until the system is
/// positive definite. Coordinates outside `free` get `d = 0`.
fn newton_direction(hess: &[Vec<f64>], grad: &[f64], free: &[usize]) -> Option<Vec<f64>> {
    let k = free.len();
    if k == 0 {
        return None;
    }
    let base: Vec<Vec<f64>> = free.iter().map(|&a| free.iter().map(|&b| -hess[a][b]).collect()).collect();
    let rhs: Vec<f64> = free.iter().map(|&a| grad[a]).collect();
    let diag_scale = (0..k).map(|a| base[a][a].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut mu = 0.0;
    for _ in 0..60 {
        let mut m = base.clone();
        for (a, row) in m.iter_mut().enumerate() {
            row[a] += mu;
        }
        if let Some(sol) = cholesky_solve(m, &rhs) {
            let mut dir = vec![0.0; grad.len()];
            for (a, &v) in free.iter().enumerate() {
                dir[v] = sol[a];
            }
            return Some(dir);
        }
        mu = if mu == 0.0 { 1e-10 * diag_scale } else { mu * 10.0 };
    }
    None
}

fn cholesky_solve(mut m: Vec<Vec<f64>>, rhs: &[f64]) -> Option<Vec<f64>> {
    let k = m.len();
    for j in 0..k {
        let d = m[j][j] - (0..j).map(|p| m[j][p] * m[j][p]).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        m[j][j] = d.sqrt();
        for i in j + 1..k {
            let s = m[i][j] - (0..j).map(|p| m[i][p] * m[j][p]).sum::<f64>();
            m[i][j] = s / m[j][j];
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        y[i] = (rhs[i] - (0..i).map(|p| m[i][p] * y[p]).sum::<f64>()) / m[i][i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        x[i] = (y[i] - (i + 1..k).map(|p| m[p][i] * x[p]).sum::<f64>()) / m[i][i];
    }
    Some(x)
}

fn line_search(
    obj: &Objective,
    theta: &[f64],
    eval: &Evaluation,
    grad: &[f64],
    dir: &[f64],
    project: &dyn Fn(Vec<f64>) -> Vec<f64>,
) -> Option<(Vec<f64>, Evaluation)> {
    let base = eval.loglik;
    let noise = 1e-14 * (1.0 + base.abs());
    let mut alpha = 1.0;
    for _ in 0..60 {
        let cand = project(theta.iter().zip(dir).map(|(t, d)| t + alpha * d).collect());
        let gain: f64 = cand.iter().zip(theta).zip(grad).map(|((a, b), g)| (a - b) * g).sum();
        if gain <= 0.0 && alpha == 1.0 && cand.iter().zip(theta).all(|(a, b)| a == b) {
            return None;
        }
        if let Some(e) = obj.evaluate(&cand) {
            let sufficient = e.loglik >= base + 1e-4 * gain.max(0.0) && e.loglik > base;
            // near a maximizer the predicted gain drops below rounding noise;
            // take the full step as long as ℓ does not measurably decrease
            let negligible = alpha == 1.0 && gain.abs() <= noise && e.loglik >= base - noise;
            if sufficient || negligible {
                return Some((cand, e));
            }
        }
        alpha *= 0.5;
    }
    None
}

fn active_set(theta: &[f64], threshold: f64) -> Vec<usize> {
    let max = theta.iter().cloned().fold(0.0, f64::max);
    theta
        .iter()
        .enumerate()
        .filter(|(_, &t)| t <= threshold * max)
        .map(|(i, _)| i + 1)
        .collect()
}

fn finish(
    tree: &RootedTree,
    s: &SymMatrix<f64>,
    theta: Vec<f64>,
    kkt_residual: f64,
    converged: bool,
    iterations: usize,
    restarts: usize,
    threshold: f64,
) -> Result<MleResult> {
    let theta = Theta::new(theta);
    let sigma = sigma_from_theta(tree, &theta)?;
    let (log_det, k) = sigma.log_det_and_inverse()?;
    let loglik = -log_det - k.trace_product(s);
    let active_set = active_set(theta.values(), threshold);
    Ok(MleResult {
        in_cone: theta.values().iter().all(|&t| t >= 0.0),
        face_codim: active_set.len(),
        active_set,
        theta,
        sigma,
        k,
        loglik,
        kkt_residual,
        converged,
        iterations,
        restarts,
        singular_data: !s.is_positive_definite(&0.0),
    })
}

/// Maximizes `ℓ` over the chosen domain from the default start and
/// `opts.restarts` log-normal perturbations of it; returns the best
/// converged local optimum (or the best one if none converged).
pub fn fit(tree: &RootedTree, s: &SymMatrix<f64>, opts: &FitOptions) -> Result<MleResult> {
    let obj = Objective::new(tree, s)?;
    let start = default_start(tree, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<LocalFit> = None;
    let mut iterations = 0;
    for r in 0..=opts.restarts {
        let init: Vec<f64> = if r == 0 {
            start.values().to_vec()
        } else {
            start
                .values()
                .iter()
                .map(|&t| {
                    let z: f64 = rng.sample(StandardNormal);
                    t * (0.5 * z).exp()
                })
                .collect()
        };
        let local = match ascend(&obj, &init, opts) {
            Ok(local) => local,
            Err(Error::NotPositiveDefinite) => continue,
            Err(e) => return Err(e),
        };
        iterations += local.iterations;
        let better = match &best {
            None => true,
            Some(b) => (local.converged, local.loglik) > (b.converged, b.loglik),
        };
        if better {
            best = Some(local);
        }
    }
    let best = best.ok_or(Error::NotPositiveDefinite)?;
    finish(
        tree,
        s,
        best.theta,
        best.kkt_residual,
        best.converged,
        iterations,
        opts.restarts,
        opts.active_threshold,
    )
}

/// Closed-form estimate wrapped as an [`MleResult`]: `θ̂` is read off `Σ̂`
/// and the residual is the unconstrained gradient size.
fn closed_form_result(tree: &RootedTree, s: &SymMatrix<f64>, sigma: SymMatrix<f64>) -> Result<MleResult> {
    let t = project_path_sums(tree, &sigma);
    let theta: Vec<f64> = tree.vertices().map(|v| t[v] - t[tree.parent(v)]).collect();
    if !sigma.is_positive_definite(&0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let obj = Objective::new(tree, s)?;
    let eval = obj.evaluate(&theta).ok_or(Error::NotPositiveDefinite)?;
    let residual = obj.kkt_residual(&theta, &obj.gradient(&eval), Domain::Spectrahedron);
    finish(tree, s, theta, residual, true, 0, 0, FitOptions::default().active_threshold)
}

/// Two leaves: `Σ̂ = S`. `in_cone` holds iff `min(s11, s22) >= s12 >= 0`.
pub fn closed_form_n2(s: &SymMatrix<f64>) -> Result<MleResult> {
    check_dims(2, s)?;
    if !s.is_positive_definite(&0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let tree = RootedTree::star(2)?;
    closed_form_result(&tree, s, s.clone())
}

/// The tree `((1,2),3)` used by [`closed_form_n3`].
pub fn cherry_tree_n3() -> RootedTree {
    parse_newick::<f64>("((1:1,2:1):1,3:1):1;").expect("valid tree").0
}

/// Three leaves with clade `{1, 2}`: the rational MLE formulas. Falls back
/// to [`fit`] when `c = (s11 − 2s12 + s22)s33 − (s13 − s23)²` vanishes.
pub fn closed_form_n3(s: &SymMatrix<f64>) -> Result<MleResult> {
    check_dims(3, s)?;
    if !s.is_positive_definite(&0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let tree = cherry_tree_n3();
    let x = |i: usize, j: usize| *s.get(i - 1, j - 1);
    let (s11, s12, s13, s22, s23, s33) = (x(1, 1), x(1, 2), x(1, 3), x(2, 2), x(2, 3), x(3, 3));
    let c = (s11 - 2.0 * s12 + s22) * s33 - (s13 - s23).powi(2);
    if c == 0.0 {
        let opts = FitOptions {
            domain: Domain::Spectrahedron,
            ..FitOptions::default()
        };
        return fit(&tree, s, &opts);
    }
    let d = s13 - s23;
    let common = s11 * s23 - s12 * s13 - s12 * s23 + s13 * s22;
    let c2 = c * c;
    let h11 = s11 - 2.0 * d * (s11 * s33 - s12 * s33 - s13 * s13 + s13 * s23) * common / c2;
    let h12 = s12 - d * (s11 * s33 - s13 * s13 - s22 * s33 + s23 * s23) * common / c2;
    let h22 = s22 - 2.0 * d * (s12 * s33 - s13 * s23 - s22 * s33 + s23 * s23) * common / c2;
    let h13 = s13 - d * (s11 * s33 - s13 * s13 - s12 * s33 + s13 * s23) / c;
    let sigma = SymMatrix::from_rows(&[vec![h11, h12, h13], vec![h12, h22, h13], vec![h13, h13, s33]])?;
    closed_form_result(&tree, s, sigma)
}

/// The second displayed expression for `σ̂23`; equals `σ̂13`.
pub fn closed_form_n3_sigma23(s: &SymMatrix<f64>) -> f64 {
    let x = |i: usize, j: usize| *s.get(i - 1, j - 1);
    let (s11, s12, s13, s22, s23, s33) = (x(1, 1), x(1, 2), x(1, 3), x(2, 2), x(2, 3), x(3, 3));
    let c = (s11 - 2.0 * s12 + s22) * s33 - (s13 - s23).powi(2);
    s23 - (s23 - s13) * (s22 * s33 - s23 * s23 - s12 * s33 + s13 * s23) / c
}

/// Face-codimension counts for one sample size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExperimentRow {
    pub samples: usize,
    /// Converged replicates with codimension 0, 1, 2, 3 and more than 3.
    pub counts: [usize; 5],
    pub nonconverged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub seed: u64,
    pub reps: usize,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub const CSV_HEADER: &'static str = "N,codim0,codim1,codim2,codim3,codim_gt3,nonconverged";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let counts: Vec<String> = row.counts.iter().map(usize::to_string).collect();
            out.push_str(&format!("{},{},{}\n", row.samples, counts.join(","), row.nonconverged));
        }
        out
    }
}

/// Generator for replicate `rep` at sample size `samples`: a ChaCha8
/// stream keyed by both, so results do not depend on scheduling.
pub fn replicate_rng(seed: u64, samples: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((samples as u64) << 32) | rep as u64);
    rng
}

/// Outcome of one replicate: `Some(codim)` when the fit converged.
pub fn run_replicate(
    tree: &RootedTree,
    theta: &Theta<f64>,
    samples: usize,
    seed: u64,
    rep: usize,
    opts: &FitOptions,
) -> Result<Option<usize>> {
    let mut rng = replicate_rng(seed, samples, rep);
    let s = simulate_sample_cov_with(tree, theta, samples, false, &mut rng)?;
    let opts = FitOptions {
        seed: rng.next_u64(),
        ..opts.clone()
    };
    let result = fit(tree, &s, &opts)?;
    Ok(result.converged.then_some(result.face_codim))
}

/// Simulates `reps` sample covariances per sample size, fits each, and
/// tabulates the codimension of the face containing the estimate.
pub fn experiment(
    tree: &RootedTree,
    theta: &Theta<f64>,
    sample_sizes: &[usize],
    reps: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<ExperimentTable> {
    theta.check_len(tree)?;
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &samples in sample_sizes {
        let outcomes: Vec<Option<usize>> = (0..reps)
            .into_par_iter()
            .map(|rep| run_replicate(tree, theta, samples, seed, rep, opts))
            .collect::<Result<_>>()?;
        let mut row = ExperimentRow {
            samples,
            counts: [0; 5],
            nonconverged: 0,
        };
        for outcome in outcomes {
            match outcome {
                Some(codim) => row.counts[codim.min(4)] += 1,
                None => row.nonconverged += 1,
            }
        }
        rows.push(row);
    }
    Ok(ExperimentTable { seed, reps, rows })
}
