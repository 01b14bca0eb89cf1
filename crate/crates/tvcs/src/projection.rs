//! Exact Euclidean projection onto a three-view cardinality structure.
//!
//! The projection of `v` reduces to picking the feasible support that
//! maximizes `<v^2, x>` over binary `x` with `A x <= s`. Because `A` is
//! totally unimodular, the box relaxation of that integer program has
//! integral vertices, so the projection is solved here as a primal-dual
//! feasibility problem: minimize a quadratic penalty over the boxes by
//! projected gradient descent, then round the near-binary primal iterate
//! and accept it against a weak-duality certificate.
//!
//! [`project_bruteforce`] enumerates all feasible supports and serves as
//! the independent oracle for small instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TvcsError};
use crate::numeric::{dot, power_iteration_largest};
use crate::structure::{build_constraint_system, is_feasible_support, ConstraintSystem, TvcsStructure};

/// Step-size selection for the feasibility solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSizeMode {
    /// `1 / L` with `L` estimated from the penalty's curvature majorant.
    Auto,
    /// A caller-supplied positive step.
    Fixed(f64),
}

/// Settings for [`project`] and [`solve_feasibility`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Iteration cap for the projected gradient loop.
    pub max_iterations: usize,
    /// Rounding is attempted once every primal coordinate is within this
    /// distance of {0, 1}. Must lie in (0, 0.5).
    pub binary_tolerance: f64,
    /// Certificate slack, relative to `max(1, ||v^2||_1)`.
    pub gap_tolerance: f64,
    /// Width of the uniform tie-breaking perturbation, relative to
    /// `max(1, max_i v_i^2)`. Zero disables it.
    pub perturbation_scale: f64,
    pub rng_seed: u64,
    pub step_size: StepSizeMode,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            max_iterations: 500_000,
            binary_tolerance: 0.05,
            gap_tolerance: 1e-9,
            perturbation_scale: 1e-9,
            rng_seed: 0,
            step_size: StepSizeMode::Auto,
        }
    }
}

impl ProjectionConfig {
    pub fn with_seed(seed: u64) -> Self {
        ProjectionConfig { rng_seed: seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(TvcsError::Config("max_iterations must be positive".into()));
        }
        if !(self.binary_tolerance > 0.0 && self.binary_tolerance < 0.5) {
            return Err(TvcsError::Config(format!(
                "binary_tolerance must lie in (0, 0.5), got {}",
                self.binary_tolerance
            )));
        }
        if self.gap_tolerance < 0.0 {
            return Err(TvcsError::Config("gap_tolerance must be non-negative".into()));
        }
        if self.perturbation_scale < 0.0 {
            return Err(TvcsError::Config("perturbation_scale must be non-negative".into()));
        }
        if let StepSizeMode::Fixed(g) = self.step_size {
            if !(g > 0.0) {
                return Err(TvcsError::Config(format!("fixed step size must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Primal-dual state of the feasibility problem. `x` lives in `[0,1]^p`;
/// `y` stacks the group duals (`|G|` entries, ordered like the rows of
/// `A`) and the box duals (`p` entries).
#[derive(Debug, Clone)]
pub struct PrimalDualIterate {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iteration: usize,
    pub penalty_value: f64,
}

/// Outcome of rounding a primal iterate and checking it against the
/// weak-duality bound.
#[derive(Debug, Clone)]
pub struct RoundingCertificate {
    pub accepted: bool,
    pub support: Vec<u8>,
    /// Value of the minimally-repaired dual feasible point; an upper
    /// bound on the relaxed optimum.
    pub dual_value: f64,
    pub primal_value: f64,
    /// `dual_value - primal_value`; at most the certificate slack when
    /// accepted.
    pub gap: f64,
}

/// Result of a projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub support: Vec<u8>,
    pub projected: Vec<f64>,
    pub iterations_used: usize,
    pub final_gap: f64,
    /// Fitted per-iteration contraction of the step norms over the tail
    /// of the run; a diagnostic for the linear convergence rate.
    pub contraction_ratio: Option<f64>,
    pub perturbed: bool,
}

/// Successful feasibility solve: final iterate, accepted certificate, and
/// the recorded penalty values (one per visited iterate, starting at the
/// initial point).
#[derive(Debug, Clone)]
pub struct FeasibilitySolve {
    pub iterate: PrimalDualIterate,
    pub certificate: RoundingCertificate,
    pub penalty_history: Vec<f64>,
    pub step_norms: Vec<f64>,
}

/// Element-wise squares.
pub fn squared_magnitudes(v: &[f64]) -> Vec<f64> {
    v.iter().map(|e| e * e).collect()
}

/// Adds i.i.d. uniform noise from `[0, scale * max(1, max_i v2_i))` to
/// each entry. With a fixed seed the output is reproducible; with
/// `scale = 0` the input is returned unchanged.
pub fn perturb_objective(v2: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if scale == 0.0 {
        return v2.to_vec();
    }
    let width = scale * v2.iter().cloned().fold(1.0f64, f64::max);
    v2.iter().map(|&e| e + rng.random::<f64>() * width).collect()
}

/// Scratch buffers reused across penalty/gradient evaluations.
struct Scratch {
    /// `A x`, length |G|
    ax: Vec<f64>,
    /// hinge of primal violations `[A x - s]_+`, length |G|
    r: Vec<f64>,
    /// hinge of dual violations `[v2 - A^T y1 - y2]_+`, length p
    u: Vec<f64>,
    /// `A^T y1`, length p
    aty1: Vec<f64>,
    /// `A u`, length |G|
    au: Vec<f64>,
    /// `A^T r`, length p
    atr: Vec<f64>,
}

impl Scratch {
    fn new(system: &ConstraintSystem) -> Self {
        let p = system.dimension();
        let g = system.num_rows();
        Scratch {
            ax: vec![0.0; g],
            r: vec![0.0; g],
            u: vec![0.0; p],
            aty1: vec![0.0; p],
            au: vec![0.0; g],
            atr: vec![0.0; p],
        }
    }
}

/// Penalty pieces at a point: the duality residual `d`, the squared hinge
/// norms, and the count of scalar operations spent.
struct Evaluation {
    d: f64,
    penalty: f64,
    ops: u64,
}

/// Fills `scratch.{ax, r, u, aty1}` and returns the penalty pieces.
fn evaluate_penalty(
    x: &[f64],
    y: &[f64],
    system: &ConstraintSystem,
    v2: &[f64],
    scratch: &mut Scratch,
) -> Evaluation {
    let p = system.dimension();
    let g = system.num_rows();
    debug_assert_eq!(x.len(), p);
    debug_assert_eq!(y.len(), g + p);
    debug_assert_eq!(v2.len(), p);
    let (y1, y2) = y.split_at(g);
    let bounds = system.bounds();
    let mut ops = 0u64;

    system.multiply(x, &mut scratch.ax);
    ops += (p + 2 * p) as u64; // row 0 plus group rows touch at most 2p entries

    // d = <s, y1> + <1, y2> - <v2, x>
    let mut d = 0.0;
    for k in 0..g {
        d += bounds[k] as f64 * y1[k];
    }
    d += y2.iter().sum::<f64>();
    d -= dot(v2, x);
    ops += (g + p + p) as u64;

    let mut hinge_primal = 0.0;
    for k in 0..g {
        let viol = (scratch.ax[k] - bounds[k] as f64).max(0.0);
        scratch.r[k] = viol;
        hinge_primal += viol * viol;
    }
    ops += g as u64;

    system.multiply_transpose(y1, &mut scratch.aty1);
    ops += 3 * p as u64;

    let mut hinge_dual = 0.0;
    for j in 0..p {
        let viol = (v2[j] - scratch.aty1[j] - y2[j]).max(0.0);
        scratch.u[j] = viol;
        hinge_dual += viol * viol;
    }
    ops += p as u64;

    Evaluation { d, penalty: 0.5 * d * d + 0.5 * hinge_dual + 0.5 * hinge_primal, ops }
}

/// Fills `(gx, gy)` from the pieces left in `scratch` by
/// [`evaluate_penalty`]. Returns the operation count.
fn gradient_from_evaluation(
    d: f64,
    system: &ConstraintSystem,
    v2: &[f64],
    scratch: &mut Scratch,
    gx: &mut [f64],
    gy: &mut [f64],
) -> u64 {
    let p = system.dimension();
    let g = system.num_rows();
    let bounds = system.bounds();
    let mut ops = 0u64;

    system.multiply_transpose(&scratch.r, &mut scratch.atr);
    system.multiply(&scratch.u, &mut scratch.au);
    ops += (3 * p + 3 * p) as u64;

    for j in 0..p {
        gx[j] = -d * v2[j] + scratch.atr[j];
    }
    ops += 2 * p as u64;
    let (gy1, gy2) = gy.split_at_mut(g);
    for k in 0..g {
        gy1[k] = d * bounds[k] as f64 - scratch.au[k];
    }
    for j in 0..p {
        gy2[j] = d - scratch.u[j];
    }
    ops += (2 * g + p) as u64;
    ops
}

/// Value of the quadratic penalty
/// `1/2 (<[s;1], y> - <v2, x>)^2 + 1/2 ||[v2 - [A^T I] y]_+||^2 + 1/2 ||[A x - s]_+||^2`.
///
/// Zero exactly at primal-dual optimal pairs of the relaxed problem.
pub fn penalty_value(x: &[f64], y: &[f64], system: &ConstraintSystem, v2: &[f64]) -> f64 {
    let mut scratch = Scratch::new(system);
    evaluate_penalty(x, y, system, v2, &mut scratch).penalty
}

/// Exact gradient of [`penalty_value`] with respect to `(x, y)`.
pub fn penalty_gradient(
    x: &[f64],
    y: &[f64],
    system: &ConstraintSystem,
    v2: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (gx, gy, _) = penalty_gradient_counted(x, y, system, v2);
    (gx, gy)
}

/// Like [`penalty_gradient`] but also reports the number of scalar
/// operations spent, which is linear in `p + |G|` thanks to the at most
/// three nonzeros per column of `A`.
pub fn penalty_gradient_counted(
    x: &[f64],
    y: &[f64],
    system: &ConstraintSystem,
    v2: &[f64],
) -> (Vec<f64>, Vec<f64>, u64) {
    let p = system.dimension();
    let g = system.num_rows();
    let mut scratch = Scratch::new(system);
    let eval = evaluate_penalty(x, y, system, v2, &mut scratch);
    let mut gx = vec![0.0; p];
    let mut gy = vec![0.0; g + p];
    let ops = gradient_from_evaluation(eval.d, system, v2, &mut scratch, &mut gx, &mut gy);
    (gx, gy, eval.ops + ops)
}

/// Safety margin applied on top of the power-iteration estimate so the
/// returned step never exceeds `1/L`.
const CURVATURE_SAFETY: f64 = 1.25;

/// Step size `1 / L_hat` where `L_hat` upper-bounds the Lipschitz constant
/// of the penalty gradient. The bound is the top eigenvalue of
/// `c c^T + B^T B + C^T C` (the Hessian with every hinge active), found by
/// power iteration with a fixed start.
pub fn estimate_step_size(system: &ConstraintSystem, v2: &[f64]) -> f64 {
    let p = system.dimension();
    let g = system.num_rows();
    let dim = p + g + p;
    let bounds = system.bounds();

    let mut bz = vec![0.0; p];
    let mut cz = vec![0.0; g];
    let mut btw = vec![0.0; g];
    let mut ctr = vec![0.0; p];
    let apply = |z: &[f64], out: &mut [f64]| {
        let (zx, zy) = z.split_at(p);
        let (zy1, zy2) = zy.split_at(g);
        // <c, z> with c = [-v2; s; 1]
        let mut c_dot = -dot(v2, zx);
        for k in 0..g {
            c_dot += bounds[k] as f64 * zy1[k];
        }
        c_dot += zy2.iter().sum::<f64>();
        // B z = A^T y1 + y2 ; C z = A x
        system.multiply_transpose(zy1, &mut bz);
        for j in 0..p {
            bz[j] += zy2[j];
        }
        system.multiply(zx, &mut cz);
        // out = c <c,z> + B^T (B z) + C^T (C z)
        system.multiply(&bz, &mut btw);
        system.multiply_transpose(&cz, &mut ctr);
        for j in 0..p {
            out[j] = -v2[j] * c_dot + ctr[j];
        }
        for k in 0..g {
            out[p + k] = bounds[k] as f64 * c_dot + btw[k];
        }
        for j in 0..p {
            out[p + g + j] = c_dot + bz[j];
        }
    };
    let lambda = power_iteration_largest(dim, apply, 2000, 1e-12);
    1.0 / (CURVATURE_SAFETY * lambda.max(f64::MIN_POSITIVE))
}

/// Rounds `x` half-up to a binary support and accepts it when it is
/// feasible and its objective reaches the repaired dual bound within
/// `eps`. `eps` is an absolute slack here; acceptance makes the support
/// `eps`-optimal for the integer program by weak duality.
pub fn certify_rounding(
    x: &[f64],
    y: &[f64],
    system: &ConstraintSystem,
    v2: &[f64],
    eps: f64,
) -> RoundingCertificate {
    let p = system.dimension();
    let g = system.num_rows();
    let (y1, y2) = y.split_at(g);
    let bounds = system.bounds();

    let support: Vec<u8> = x.iter().map(|&xi| if xi >= 0.5 { 1 } else { 0 }).collect();
    let feasible = is_feasible_support(system, &support).unwrap_or(false);

    // Repair the dual: lift the box duals just enough that
    // A^T y1 + y2 >= v2 holds, then read off its objective.
    let mut aty1 = vec![0.0; p];
    system.multiply_transpose(y1, &mut aty1);
    let mut dual_value = 0.0;
    for k in 0..g {
        dual_value += bounds[k] as f64 * y1[k];
    }
    for j in 0..p {
        dual_value += y2[j].max(v2[j] - aty1[j]).max(0.0);
    }

    let primal_value: f64 =
        support.iter().zip(v2).map(|(&si, &w)| if si == 1 { w } else { 0.0 }).sum();
    let gap = dual_value - primal_value;
    RoundingCertificate { accepted: feasible && gap <= eps, support, dual_value, primal_value, gap }
}

fn fit_contraction(step_norms: &[f64]) -> Option<f64> {
    const TAIL: usize = 64;
    const MIN_POINTS: usize = 8;
    let tail: Vec<f64> =
        step_norms.iter().rev().take(TAIL).filter(|&&s| s > 0.0).cloned().collect();
    if tail.len() < MIN_POINTS {
        return None;
    }
    // tail is reversed: last step first
    let newest = tail[0];
    let oldest = tail[tail.len() - 1];
    if oldest <= 0.0 {
        return None;
    }
    Some((newest / oldest).powf(1.0 / (tail.len() - 1) as f64))
}

/// Runs projected gradient descent on the penalty from `(x, y) = (0, 0)`,
/// clamping `x` to `[0, 1]` and `y` to `[0, inf)` after every step.
/// Terminates as soon as every `x_i` is within the binary tolerance of
/// `{0, 1}` and the rounded candidate passes [`certify_rounding`];
/// exhausting the iteration cap is an explicit error carrying the last
/// iterate.
pub fn solve_feasibility(
    v2: &[f64],
    system: &ConstraintSystem,
    config: &ProjectionConfig,
) -> Result<FeasibilitySolve> {
    solve_feasibility_observed(v2, system, config, |_, _| {})
}

/// [`solve_feasibility`] with a per-iterate observer, called on the
/// initial point and after every step with the current `(x, y)`.
pub fn solve_feasibility_observed(
    v2: &[f64],
    system: &ConstraintSystem,
    config: &ProjectionConfig,
    mut observer: impl FnMut(&[f64], &[f64]),
) -> Result<FeasibilitySolve> {
    config.validate()?;
    let p = system.dimension();
    let g = system.num_rows();
    if v2.len() != p {
        return Err(TvcsError::DimensionMismatch { expected: p, got: v2.len() });
    }
    let gamma = match config.step_size {
        StepSizeMode::Auto => estimate_step_size(system, v2),
        StepSizeMode::Fixed(gam) => gam,
    };
    let eps = config.gap_tolerance * v2.iter().map(|e| e.abs()).sum::<f64>().max(1.0);
    let delta = config.binary_tolerance;

    let mut x = vec![0.0f64; p];
    let mut y = vec![0.0f64; g + p];
    let mut gx = vec![0.0f64; p];
    let mut gy = vec![0.0f64; g + p];
    let mut scratch = Scratch::new(system);
    let mut penalty_history = Vec::new();
    let mut step_norms = Vec::new();

    observer(&x, &y);
    let mut last_penalty = f64::INFINITY;
    for iteration in 0..=config.max_iterations {
        let eval = evaluate_penalty(&x, &y, system, v2, &mut scratch);
        penalty_history.push(eval.penalty);
        last_penalty = eval.penalty;

        let max_deviation =
            x.iter().map(|&xi| xi.min(1.0 - xi)).fold(0.0f64, f64::max);
        if max_deviation < delta {
            let certificate = certify_rounding(&x, &y, system, v2, eps);
            if certificate.accepted {
                log::debug!(
                    "feasibility solve accepted after {iteration} iterations \
                     (gap {:.3e}, penalty {:.3e})",
                    certificate.gap,
                    eval.penalty
                );
                return Ok(FeasibilitySolve {
                    iterate: PrimalDualIterate {
                        x,
                        y,
                        iteration,
                        penalty_value: eval.penalty,
                    },
                    certificate,
                    penalty_history,
                    step_norms,
                });
            }
        }
        if iteration == config.max_iterations {
            break;
        }

        gradient_from_evaluation(eval.d, system, v2, &mut scratch, &mut gx, &mut gy);
        let mut step_sq = 0.0;
        for j in 0..p {
            let next = (x[j] - gamma * gx[j]).clamp(0.0, 1.0);
            let diff = next - x[j];
            step_sq += diff * diff;
            x[j] = next;
        }
        for i in 0..g + p {
            let next = (y[i] - gamma * gy[i]).max(0.0);
            let diff = next - y[i];
            step_sq += diff * diff;
            y[i] = next;
        }
        step_norms.push(step_sq.sqrt());
        observer(&x, &y);
    }

    let max_deviation = x.iter().map(|&xi| xi.min(1.0 - xi)).fold(0.0f64, f64::max);
    Err(TvcsError::DidNotConverge {
        iterations: config.max_iterations,
        penalty: last_penalty,
        max_deviation,
        last_x: x,
        last_y: y,
    })
}

/// Projects `v` onto the feasible set of `structure`: squares the entries,
/// perturbs ties, solves the primal-dual feasibility problem, and masks
/// `v` with the certified optimal support.
pub fn project(
    v: &[f64],
    structure: &TvcsStructure,
    config: &ProjectionConfig,
) -> Result<ProjectionResult> {
    let system = build_constraint_system(structure)?;
    project_with_system(v, &system, config)
}

/// [`project`] against a prebuilt constraint system.
pub fn project_with_system(
    v: &[f64],
    system: &ConstraintSystem,
    config: &ProjectionConfig,
) -> Result<ProjectionResult> {
    config.validate()?;
    if v.len() != system.dimension() {
        return Err(TvcsError::DimensionMismatch { expected: system.dimension(), got: v.len() });
    }
    if v.iter().any(|e| !e.is_finite()) {
        return Err(TvcsError::InvalidValue("input vector has non-finite entries".into()));
    }
    let v2 = squared_magnitudes(v);
    let perturbed = config.perturbation_scale > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let objective = perturb_objective(&v2, config.perturbation_scale, &mut rng);

    let solve = solve_feasibility(&objective, system, config)?;
    let support = solve.certificate.support.clone();
    let projected: Vec<f64> =
        v.iter().zip(&support).map(|(&vi, &si)| if si == 1 { vi } else { 0.0 }).collect();
    Ok(ProjectionResult {
        support,
        projected,
        iterations_used: solve.iterate.iteration,
        final_gap: solve.certificate.gap,
        contraction_ratio: fit_contraction(&solve.step_norms),
        perturbed,
    })
}

/// Projects each input independently; with the `parallel` feature the
/// batch is spread over the rayon pool.
pub fn project_batch(
    vs: &[Vec<f64>],
    structure: &TvcsStructure,
    config: &ProjectionConfig,
) -> Vec<Result<ProjectionResult>> {
    crate::parallel::par_map(vs, |v| project(v, structure, config))
}

/// Enumeration guard for the brute-force oracle.
pub const BRUTEFORCE_MAX_DIMENSION: usize = 24;

/// Exhaustive oracle: enumerates every binary support with `A x <= s` and
/// maximizes `<v^2, x>`. Ties prefer the support whose indicator vector is
/// lexicographically greatest, i.e. earlier coordinates win.
pub fn project_bruteforce(v: &[f64], structure: &TvcsStructure) -> Result<ProjectionResult> {
    let p = structure.dimension();
    if p > BRUTEFORCE_MAX_DIMENSION {
        return Err(TvcsError::EnumerationTooLarge {
            what: "dimension",
            size: p,
            cap: BRUTEFORCE_MAX_DIMENSION,
        });
    }
    let system = build_constraint_system(structure)?;
    if v.len() != p {
        return Err(TvcsError::DimensionMismatch { expected: p, got: v.len() });
    }
    let v2 = squared_magnitudes(v);
    let g = system.num_rows();
    let bounds = system.bounds();
    let overall = bounds[0] as u32;

    let mut counts = vec![0usize; g];
    let mut touched: Vec<usize> = Vec::with_capacity(2 * p);
    let mut best_mask = 0u64;
    let mut best_obj = f64::NEG_INFINITY;

    for mask in 0u64..(1u64 << p) {
        if mask.count_ones() > overall {
            continue;
        }
        let mut feasible = true;
        let mut objective = 0.0;
        touched.clear();
        let mut bits = mask;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            objective += v2[j];
            let (r1, r2) = system.column_rows(j);
            for r in [r1, r2].into_iter().flatten() {
                counts[r] += 1;
                touched.push(r);
                if counts[r] > bounds[r] {
                    feasible = false;
                }
            }
        }
        for &r in &touched {
            counts[r] = 0;
        }
        if !feasible {
            continue;
        }
        if objective > best_obj {
            best_obj = objective;
            best_mask = mask;
        } else if objective == best_obj {
            let diff = mask ^ best_mask;
            if diff != 0 && (mask >> diff.trailing_zeros()) & 1 == 1 {
                best_mask = mask;
            }
        }
    }

    let support: Vec<u8> = (0..p).map(|j| ((best_mask >> j) & 1) as u8).collect();
    let projected: Vec<f64> =
        v.iter().zip(&support).map(|(&vi, &si)| if si == 1 { vi } else { 0.0 }).collect();
    Ok(ProjectionResult {
        support,
        projected,
        iterations_used: 0,
        final_gap: 0.0,
        contraction_ratio: None,
        perturbed: false,
    })
}
