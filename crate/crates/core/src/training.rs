//! Composite losses and the two-time-scale optimizer loop.
//!
//! Coefficients and biases step at `lr`. Exponent-raw parameters are frozen
//! for the first `warmup_steps` steps, then receive per-layer norm-clipped
//! gradients at `lr * exp_lr_multiplier`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diffengine::{DiffScalar, Jet, Mark, Real, Tape};
use crate::error::{MsnError, Result};
use crate::network::{LayerExponents, Network};
use crate::problems::PinnProblem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::ADAM
    }
}

/// How the boundary weight evolves. Only a fixed weight is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcWeighting {
    #[default]
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub warmup_steps: usize,
    pub exp_lr_multiplier: f64,
    /// Per-layer exponent gradient norm bound; `None` disables clipping.
    pub exp_grad_clip: Option<f64>,
    pub beta1_muntz: f64,
    pub beta2_l1: f64,
    pub lambda_bc: f64,
    pub bc_weighting: BcWeighting,
    pub muntz_c: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Exponents are recorded every this many steps.
    pub exponent_log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            steps: 3000,
            warmup_steps: 500,
            exp_lr_multiplier: 0.02,
            exp_grad_clip: Some(0.03),
            beta1_muntz: 1e-2,
            beta2_l1: 1e-4,
            lambda_bc: 200.0,
            bc_weighting: BcWeighting::Fixed,
            muntz_c: crate::powbasis::DEFAULT_MUNTZ_C,
            seed: 0,
            optimizer: Optimizer::ADAM,
            exponent_log_every: 10,
        }
    }
}

impl TrainConfig {
    /// Settings used for the supervised benchmarks.
    pub fn supervised() -> Self {
        Self {
            steps: 2000,
            warmup_steps: 0,
            exp_lr_multiplier: 1.0,
            exp_grad_clip: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MsnError::InvalidConfig(m));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if self.warmup_steps > self.steps {
            return bad(format!(
                "warmup_steps {} exceeds steps {}",
                self.warmup_steps, self.steps
            ));
        }
        if !(0.0..=1.0).contains(&self.exp_lr_multiplier) {
            return bad(format!(
                "exp_lr_multiplier must lie in [0, 1], got {}",
                self.exp_lr_multiplier
            ));
        }
        if let Some(c) = self.exp_grad_clip {
            if !(c > 0.0) {
                return bad(format!("exp_grad_clip must be positive, got {c}"));
            }
        }
        if !(self.beta1_muntz >= 0.0) || !(self.beta2_l1 >= 0.0) {
            return bad("regularizer weights must be non-negative".into());
        }
        if !(self.lambda_bc > 0.0) {
            return bad(format!("lambda_bc must be positive, got {}", self.lambda_bc));
        }
        if self.exponent_log_every == 0 {
            return bad("exponent_log_every must be at least 1".into());
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return bad("invalid Adam constants".into());
            }
        }
        Ok(())
    }
}

/// Unweighted loss parts and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean squared data error (supervised) or PDE residual (PINN).
    pub data_or_pde: f64,
    /// Mean squared boundary mismatch; 0 for supervised runs.
    pub bc: f64,
    /// Müntz regularizer summed over layers.
    pub muntz_reg: f64,
    /// Coefficient L1 norm over all edges.
    pub l1_reg: f64,
}

impl LossBreakdown {
    pub fn compose(data_or_pde: f64, bc: f64, muntz_reg: f64, l1_reg: f64, cfg: &TrainConfig) -> Self {
        let mut out = Self {
            total: 0.0,
            data_or_pde,
            bc,
            muntz_reg,
            l1_reg,
        };
        out.total = out.recompose(cfg);
        out
    }

    /// `data + λ_BC·bc + β₁·muntz + β₂·l1`.
    pub fn recompose(&self, cfg: &TrainConfig) -> f64 {
        self.data_or_pde + cfg.lambda_bc * self.bc + cfg.beta1_muntz * self.muntz_reg + cfg.beta2_l1 * self.l1_reg
    }

    pub fn is_finite(&self) -> bool {
        [self.total, self.data_or_pde, self.bc, self.muntz_reg, self.l1_reg]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// What the network is fitted to.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    Supervised {
        data: Vec<(f64, f64)>,
    },
    Pinn {
        problem: PinnProblem,
        collocation: Vec<f64>,
        /// Distinct boundary points with their target and multiplicity.
        boundary: Vec<(f64, f64, usize)>,
        n_boundary: usize,
    },
}

impl Objective {
    pub fn supervised(data: Vec<(f64, f64)>) -> Result<Self> {
        if data.is_empty() {
            return Err(MsnError::InvalidConfig("empty training batch".into()));
        }
        Ok(Objective::Supervised { data })
    }

    pub fn pinn(problem: PinnProblem, collocation: Vec<f64>, boundary: &[(f64, f64)]) -> Result<Self> {
        if collocation.is_empty() || boundary.is_empty() {
            return Err(MsnError::InvalidConfig("need collocation and boundary points".into()));
        }
        if problem.derivative_order() > 2 {
            return Err(MsnError::Unsupported("residuals above second order".into()));
        }
        if let Some(&x) = collocation
            .iter()
            .find(|&&x| !(x > 0.0) && problem == PinnProblem::SqrtOde)
        {
            return Err(MsnError::Domain(format!("sqrt ODE collocation at x = {x}")));
        }
        let mut distinct: Vec<(f64, f64, usize)> = Vec::new();
        for &(x, y) in boundary {
            match distinct.iter_mut().find(|d| d.0 == x && d.1 == y) {
                Some(d) => d.2 += 1,
                None => distinct.push((x, y, 1)),
            }
        }
        Ok(Objective::Pinn {
            problem,
            collocation,
            boundary: distinct,
            n_boundary: boundary.len(),
        })
    }

    /// Loss at `params` without gradients.
    pub fn loss(&self, net: &Network, params: &[f64], cfg: &TrainConfig) -> LossBreakdown {
        let lifted: Vec<Jet> = params.iter().map(|&v| Jet::constant(v)).collect();
        let exps = net.prepare(&lifted);
        let (muntz, l1) = regularizers(net, &lifted, &exps, cfg);
        let eval = |x: Jet| net.forward_with(&lifted, &exps, &[x])[0];
        match self {
            Objective::Supervised { data } => {
                let sse: f64 = data
                    .iter()
                    .map(|&(x, y)| {
                        let r = eval(Jet::constant(x)).v - y;
                        r * r
                    })
                    .sum();
                LossBreakdown::compose(sse / data.len() as f64, 0.0, muntz.v, l1.v, cfg)
            }
            Objective::Pinn {
                problem,
                collocation,
                boundary,
                n_boundary,
            } => {
                let pde: f64 = collocation
                    .iter()
                    .map(|&x| {
                        let u = eval(Jet::variable(x));
                        let r = problem.residual(x, u.d1, u.d2);
                        r * r
                    })
                    .sum();
                let bc: f64 = boundary
                    .iter()
                    .map(|&(x, y, m)| {
                        let r = eval(Jet::constant(x)).v - y;
                        m as f64 * r * r
                    })
                    .sum();
                LossBreakdown::compose(
                    pde / collocation.len() as f64,
                    bc / *n_boundary as f64,
                    muntz.v,
                    l1.v,
                    cfg,
                )
            }
        }
    }

    /// Loss at `params` with its gradient written into `grad`.
    ///
    /// Every per-point subgraph is back-propagated into the shared prefix
    /// (lifted parameters, exponents, regularizers) and then discarded, so
    /// memory stays at one point's worth of tape.
    pub fn loss_and_grad<'t>(
        &self,
        net: &Network,
        params: &[f64],
        cfg: &TrainConfig,
        tape: &'t Tape,
        grad: &mut [f64],
    ) -> Result<LossBreakdown> {
        if grad.len() != params.len() {
            return Err(MsnError::DimensionMismatch {
                expected: params.len(),
                got: grad.len(),
            });
        }
        tape.clear();
        let lifted: Vec<DiffScalar<'t>> = params.iter().map(|&v| tape.var(v)).collect();
        let exps = net.prepare(&lifted);
        let (muntz, l1) = regularizers(net, &lifted, &exps, cfg);
        tape.seed(muntz, cfg.beta1_muntz);
        tape.seed(l1, cfg.beta2_l1);
        let mark = tape.mark();
        let eval = |x: DiffScalar<'t>| -> DiffScalar<'t> { net.forward_with(&lifted, &exps, &[x])[0] };

        let parts = match self {
            Objective::Supervised { data } => {
                let n = data.len() as f64;
                let mut sse = 0.0;
                for &(x, y) in data {
                    let u = eval(tape.constant(x));
                    let r = u.value() - y;
                    sse += r * r;
                    tape.seed(u, 2.0 * r / n);
                    tape.propagate_to(mark);
                    tape.truncate(mark);
                }
                (sse / n, 0.0)
            }
            Objective::Pinn {
                problem,
                collocation,
                boundary,
                n_boundary,
            } => {
                let n = collocation.len() as f64;
                let order = problem.derivative_order();
                let mut pde = 0.0;
                for &x in collocation {
                    let u = eval(tape.input(x));
                    let u1 = u.input_derivative(1);
                    let u2 = if order >= 2 { u.input_derivative(2) } else { u1 };
                    let r = problem.residual(x, u1, u2);
                    let rv = r.value();
                    pde += rv * rv;
                    tape.seed(r, 2.0 * rv / n);
                    tape.propagate_to(mark);
                    tape.truncate(mark);
                }
                let nb = *n_boundary as f64;
                let mut bc = 0.0;
                for &(x, y, m) in boundary {
                    let u = eval(tape.constant(x));
                    let r = u.value() - y;
                    bc += m as f64 * r * r;
                    tape.seed(u, cfg.lambda_bc * 2.0 * m as f64 * r / nb);
                    tape.propagate_to(mark);
                    tape.truncate(mark);
                }
                (pde / n, bc / nb)
            }
        };
        tape.propagate_to(Mark::START);
        for (g, p) in grad.iter_mut().zip(&lifted) {
            *g = tape.adjoint(*p);
        }
        let out = LossBreakdown::compose(parts.0, parts.1, muntz.value(), l1.value(), cfg);
        tape.clear();
        Ok(out)
    }
}

/// Müntz and L1 penalties; zero constants for networks without exponents.
fn regularizers<R: Real>(net: &Network, params: &[R], exps: &[LayerExponents<R>], cfg: &TrainConfig) -> (R, R) {
    let zero = params[0].lift(0.0);
    match net.as_msn() {
        Some(m) => (
            m.muntz_penalty(exps, cfg.muntz_c).unwrap_or(zero),
            m.l1_penalty(params).unwrap_or(zero),
        ),
        None => (zero, zero),
    }
}

pub fn supervised_loss(net: &Network, batch: &[(f64, f64)], cfg: &TrainConfig) -> Result<LossBreakdown> {
    let obj = Objective::supervised(batch.to_vec())?;
    Ok(obj.loss(net, net.params().values(), cfg))
}

pub fn pinn_loss(
    net: &Network,
    problem: &PinnProblem,
    collocation: &[f64],
    boundary: &[(f64, f64)],
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let obj = Objective::pinn(*problem, collocation.to_vec(), boundary)?;
    let loss = obj.loss(net, net.params().values(), cfg);
    if !loss.is_finite() {
        return Err(MsnError::Domain("non-finite PINN loss".into()));
    }
    Ok(loss)
}

/// Rescale `g` to norm `threshold` when it is longer.
pub fn clip_norm(g: &[f64], threshold: f64) -> Vec<f64> {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > threshold {
        let s = threshold / norm;
        g.iter().map(|v| v * s).collect()
    } else {
        g.to_vec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentKind {
    Even,
    Odd,
}

impl ExponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExponentKind::Even => "even",
            ExponentKind::Odd => "odd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentRecord {
    pub step: usize,
    pub layer: usize,
    pub kind: ExponentKind,
    pub index: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Loss evaluated at the start of each step, before its update.
    pub trace: Vec<TraceRow>,
    pub exponents: Vec<ExponentRecord>,
    /// Largest post-clip exponent gradient norm at each post-warmup step.
    pub exp_grad_norms: Vec<(usize, f64)>,
    pub steps_run: usize,
    pub diverged: bool,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<LossBreakdown> {
        self.trace.last().map(|r| r.loss)
    }
}

/// Per-parameter optimizer state with separate step counters for the fast
/// (coefficient/bias) and slow (exponent) groups.
#[derive(Clone, Debug)]
struct OptState {
    kind: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptState {
    fn new(kind: Optimizer, n: usize) -> Self {
        Self {
            kind,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One update of the entries `idx`; `t` is the 1-based step count of
    /// their group (used for Adam bias correction).
    fn apply(&mut self, values: &mut [f64], idx: &[usize], grad: &[f64], lr: f64, t: i32) {
        match self.kind {
            Optimizer::Sgd => {
                for (&i, &g) in idx.iter().zip(grad) {
                    values[i] -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (&i, &g) in idx.iter().zip(grad) {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    values[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

/// Optimize `values` in place.
///
/// `exp_groups` lists the exponent-raw indices of each clipping group; every
/// other index is a fast parameter. `eval` writes the gradient and returns the
/// loss; `observe` runs after step 0 and after every update.
pub fn optimize<E, O>(
    values: &mut [f64],
    exp_groups: &[Vec<usize>],
    cfg: &TrainConfig,
    mut eval: E,
    mut observe: O,
) -> Result<TrainReport>
where
    E: FnMut(&[f64], &mut [f64]) -> Result<LossBreakdown>,
    O: FnMut(usize, &[f64]),
{
    cfg.validate()?;
    let n = values.len();
    let mut is_slow = vec![false; n];
    for g in exp_groups {
        for &i in g {
            if i >= n {
                return Err(MsnError::DimensionMismatch { expected: n, got: i + 1 });
            }
            is_slow[i] = true;
        }
    }
    let fast: Vec<usize> = (0..n).filter(|&i| !is_slow[i]).collect();
    let mut state = OptState::new(cfg.optimizer, n);
    let mut grad = vec![0.0; n];
    let mut fast_grad = vec![0.0; fast.len()];
    let mut report = TrainReport::default();
    observe(0, values);

    for step in 1..=cfg.steps {
        let loss = eval(values, &mut grad)?;
        report.trace.push(TraceRow { step, loss });
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            report.diverged = true;
            break;
        }
        for (fg, &i) in fast_grad.iter_mut().zip(&fast) {
            *fg = grad[i];
        }
        state.apply(values, &fast, &fast_grad, cfg.lr, step as i32);
        if step > cfg.warmup_steps && !exp_groups.is_empty() {
            let t_slow = (step - cfg.warmup_steps) as i32;
            let slow_lr = cfg.lr * cfg.exp_lr_multiplier;
            let mut worst: f64 = 0.0;
            for g in exp_groups {
                let raw: Vec<f64> = g.iter().map(|&i| grad[i]).collect();
                let clipped = match cfg.exp_grad_clip {
                    Some(c) => clip_norm(&raw, c),
                    None => raw,
                };
                worst = worst.max(clipped.iter().map(|v| v * v).sum::<f64>().sqrt());
                state.apply(values, g, &clipped, slow_lr, t_slow);
            }
            report.exp_grad_norms.push((step, worst));
        }
        report.steps_run = step;
        if values.iter().any(|v| !v.is_finite()) {
            report.diverged = true;
            break;
        }
        observe(step, values);
    }
    Ok(report)
}

/// Train `net` in place on `objective`.
pub fn train(net: &mut Network, objective: &Objective, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let groups = net.as_msn().map(|m| m.exponent_groups()).unwrap_or_default();
    let mut values = net.params().values().to_vec();
    let tape = Tape::with_capacity(4096);
    let mut exps_log = Vec::new();
    let every = cfg.exponent_log_every;
    let last = cfg.steps;
    let shape = &*net;
    let report = optimize(
        &mut values,
        &groups,
        cfg,
        |p, g| objective.loss_and_grad(shape, p, cfg, &tape, g),
        |step, p| {
            if step % every == 0 || step == last {
                record_exponents(shape, p, step, &mut exps_log);
            }
        },
    );
    let mut report = report?;
    // a diverged run keeps its last finite parameters
    if values.iter().all(|v| v.is_finite()) {
        net.params_mut().values_mut().copy_from_slice(&values);
    }
    report.exponents = exps_log;
    Ok(report)
}

fn record_exponents(net: &Network, params: &[f64], step: usize, out: &mut Vec<ExponentRecord>) {
    for (layer, e) in net.prepare(params).iter().enumerate() {
        for (kind, vals) in [(ExponentKind::Even, &e.mu), (ExponentKind::Odd, &e.lambda)] {
            for (index, &value) in vals.iter().enumerate() {
                out.push(ExponentRecord {
                    step,
                    layer,
                    kind,
                    index,
                    value,
                });
            }
        }
    }
}

/// Root-mean-square error of `net` against `target` on `grid`.
pub fn rmse<F: Fn(f64) -> f64>(net: &Network, grid: &[f64], target: F) -> Result<f64> {
    if grid.is_empty() {
        return Err(MsnError::InvalidConfig("empty test grid".into()));
    }
    let pred = net.predict(grid);
    let mse = pred
        .iter()
        .zip(grid)
        .map(|(p, &x)| (p - target(x)).powi(2))
        .sum::<f64>()
        / grid.len() as f64;
    Ok(mse.sqrt())
}

/// `step,total,pde,bc,muntz,l1`
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("step,total,pde,bc,muntz,l1\n");
    for r in trace {
        let l = &r.loss;
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.step, l.total, l.data_or_pde, l.bc, l.muntz_reg, l.l1_reg
        );
    }
    out
}

/// `step,layer,kind,index,value`
pub fn exponents_csv(records: &[ExponentRecord]) -> String {
    let mut out = String::from("step,layer,kind,index,value\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{}", r.step, r.layer, r.kind.as_str(), r.index, r.value);
    }
    out
}
