//! Benchmark targets: three supervised regression functions and two 1D
//! boundary-value problems with closed-form solutions.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffengine::Real;
use crate::error::{MsnError, Result};

pub const DEFAULT_N_TRAIN: usize = 256;
pub const DEFAULT_N_TEST: usize = 1024;
/// Lower end of SqrtOde collocation; the forcing `1/(2√x)` is singular at 0.
pub const SQRT_ODE_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    Sqrt,
    Cusp,
    SparsePoly,
}

impl TaskName {
    pub const ALL: [TaskName; 3] = [TaskName::Sqrt, TaskName::Cusp, TaskName::SparsePoly];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::Sqrt => "sqrt",
            TaskName::Cusp => "cusp",
            TaskName::SparsePoly => "sparse_poly",
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = MsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sqrt" => Ok(TaskName::Sqrt),
            "cusp" => Ok(TaskName::Cusp),
            "sparse_poly" | "sparsepoly" | "poly" => Ok(TaskName::SparsePoly),
            other => Err(MsnError::InvalidConfig(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTask {
    pub name: TaskName,
    pub lo: f64,
    pub hi: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl RegressionTask {
    pub fn new(name: TaskName) -> Self {
        let (lo, hi) = match name {
            TaskName::Sqrt | TaskName::Cusp => (0.0, 1.0),
            TaskName::SparsePoly => (-1.0, 1.0),
        };
        Self {
            name,
            lo,
            hi,
            n_train: DEFAULT_N_TRAIN,
            n_test: DEFAULT_N_TEST,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Target value without the domain check.
    pub fn target(&self, x: f64) -> f64 {
        match self.name {
            TaskName::Sqrt => x.sqrt(),
            TaskName::Cusp => (x - 0.5).abs().powf(0.2),
            TaskName::SparsePoly => x.powi(3) + 0.5 * x.powi(7),
        }
    }

    /// `n_train` uniform points in the domain with noiseless targets.
    pub fn training_set(&self, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.n_train)
            .map(|_| {
                let x = rng.gen_range(self.lo..=self.hi);
                (x, self.target(x))
            })
            .collect()
    }

    /// `n_test` equispaced points including both endpoints.
    pub fn test_grid(&self) -> Vec<f64> {
        equispaced(self.lo, self.hi, self.n_test)
    }
}

pub fn target_eval(task: &RegressionTask, x: f64) -> Result<f64> {
    if !task.contains(x) {
        return Err(MsnError::Domain(format!(
            "x = {x} outside [{}, {}] for task {}",
            task.lo, task.hi, task.name
        )));
    }
    Ok(task.target(x))
}

/// `n` equispaced points on `[lo, hi]` (just `lo` when `n = 1`).
pub fn equispaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `u′ = 1/(2√x)` on (0, 1] with `u(0) = 0`; and `−ε u″ + u′ = 0` on (0, 1)
/// with `u(0) = 0`, `u(1) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PinnProblem {
    SqrtOde,
    BoundaryLayer { eps_stiff: f64 },
}

impl PinnProblem {
    pub fn boundary_layer(eps_stiff: f64) -> Result<Self> {
        if !(eps_stiff > 0.0) || !eps_stiff.is_finite() {
            return Err(MsnError::InvalidConfig(format!(
                "stiffness must be positive and finite, got {eps_stiff}"
            )));
        }
        Ok(PinnProblem::BoundaryLayer { eps_stiff })
    }

    pub fn label(&self) -> &'static str {
        match self {
            PinnProblem::SqrtOde => "sqrt_ode",
            PinnProblem::BoundaryLayer { .. } => "boundary_layer",
        }
    }

    pub fn stiffness(&self) -> Option<f64> {
        match *self {
            PinnProblem::SqrtOde => None,
            PinnProblem::BoundaryLayer { eps_stiff } => Some(eps_stiff),
        }
    }

    pub fn derivative_order(&self) -> u8 {
        match self {
            PinnProblem::SqrtOde => 1,
            PinnProblem::BoundaryLayer { .. } => 2,
        }
    }

    pub fn collocation_floor(&self) -> f64 {
        match self {
            PinnProblem::SqrtOde => SQRT_ODE_FLOOR,
            PinnProblem::BoundaryLayer { .. } => 0.0,
        }
    }

    pub fn boundary_conditions(&self) -> Vec<(f64, f64)> {
        match self {
            PinnProblem::SqrtOde => vec![(0.0, 0.0)],
            PinnProblem::BoundaryLayer { .. } => vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    /// Residual at collocation point `x` from the network's `u′` and `u″`
    /// (`u″` is ignored by first-order problems). `x` must be positive for
    /// SqrtOde; callers sample above the floor.
    pub fn residual<R: Real>(&self, x: f64, u1: R, u2: R) -> R {
        match *self {
            PinnProblem::SqrtOde => u1 - 0.5 / x.sqrt(),
            PinnProblem::BoundaryLayer { eps_stiff } => u1 - u2 * eps_stiff,
        }
    }

    pub fn exact(&self, x: f64) -> f64 {
        match *self {
            PinnProblem::SqrtOde => x.sqrt(),
            PinnProblem::BoundaryLayer { eps_stiff } => bl_exact(x, eps_stiff),
        }
    }

    /// Closed-form solution in any scalar type; with [`crate::diffengine::Jet`]
    /// this yields `u′` and `u″` by differentiation.
    pub fn exact_generic<R: Real>(&self, x: R) -> R {
        match *self {
            PinnProblem::SqrtOde => x.pow_abs(x.lift(0.5)),
            PinnProblem::BoundaryLayer { eps_stiff } => {
                let inv = 1.0 / eps_stiff;
                let head = ((x - 1.0) * inv).exp();
                let tail = -((x * -inv).exp()) + 1.0;
                head * tail * (1.0 / -(-inv).exp_m1())
            }
        }
    }

    /// `(u, u′, u″)` of the exact solution from the analytic formulas.
    pub fn exact_derivs(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            PinnProblem::SqrtOde => {
                let s = x.sqrt();
                (s, 0.5 / s, -0.25 / (s * x))
            }
            PinnProblem::BoundaryLayer { eps_stiff } => {
                let d1 = bl_exact_derivative(x, eps_stiff);
                (bl_exact(x, eps_stiff), d1, d1 / eps_stiff)
            }
        }
    }
}

pub fn sqrt_ode_residual(x: f64, _u: f64, u1: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(MsnError::Domain(format!("sqrt ODE residual needs x > 0, got {x}")));
    }
    Ok(u1 - 0.5 / x.sqrt())
}

pub fn boundary_layer_residual(_x: f64, u1: f64, u2: f64, eps_stiff: f64) -> f64 {
    -eps_stiff * u2 + u1
}

/// `(e^{x/ε} − 1)/(e^{1/ε} − 1)`, rearranged so nothing overflows for small ε.
pub fn bl_exact(x: f64, eps_stiff: f64) -> f64 {
    let inv = 1.0 / eps_stiff;
    ((x - 1.0) * inv).exp() * (-(-x * inv).exp_m1()) / (-(-inv).exp_m1())
}

/// `e^{x/ε} / (ε (e^{1/ε} − 1))` in the same stable form.
pub fn bl_exact_derivative(x: f64, eps_stiff: f64) -> f64 {
    let inv = 1.0 / eps_stiff;
    ((x - 1.0) * inv).exp() * inv / (-(-inv).exp_m1())
}

/// `n` uniform points in `(floor, 1]`, deterministic under `seed`.
pub fn sample_collocation(problem: &PinnProblem, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(MsnError::InvalidConfig("need at least one collocation point".into()));
    }
    let lo = problem.collocation_floor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 1 - U with U in [0, 1) lands in (0, 1]
    Ok((0..n)
        .map(|_| lo + (1.0 - lo) * (1.0 - rng.gen::<f64>()))
        .collect())
}

/// Boundary points with their values, cycled until there are `n` of them.
pub fn sample_boundary(problem: &PinnProblem, n: usize) -> Result<Vec<(f64, f64)>> {
    let bcs = problem.boundary_conditions();
    if n < bcs.len() {
        return Err(MsnError::InvalidConfig(format!(
            "need at least {} boundary samples, got {n}",
            bcs.len()
        )));
    }
    Ok(bcs.iter().copied().cycle().take(n).collect())
}
