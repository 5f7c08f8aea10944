//! Direct numerical optimisation of a gridded drive Ω(t) for storage, used as
//! a baseline against the ansatz pipeline.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{optimize_c, ControlDrive};
use crate::dynamics::{storage_input, ModelTier};
use crate::error::{Error, Result};
use crate::model::MemoryParams;
use crate::numerics::lbfgs::{minimize, LbfgsOptions};
use crate::numerics::ode::{dopri5, OdeOptions};
use crate::numerics::spline::{CubicSpline, LinearInterp};
use crate::shapes::{PulseShape, ShapeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Cubic,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Uniform,
    /// Geometric clustering towards t2 with ratio 0.9 between neighbouring gaps.
    DenseAtEnd,
}

impl Interpolation {
    pub fn name(&self) -> &'static str {
        match self {
            Interpolation::Cubic => "cubic",
            Interpolation::Linear => "linear",
        }
    }
}

impl Spacing {
    pub fn name(&self) -> &'static str {
        match self {
            Spacing::Uniform => "uniform",
            Spacing::DenseAtEnd => "dense-at-end",
        }
    }
}

pub const DEFAULT_KNOTS: usize = 129;
pub const DENSE_RATIO: f64 = 0.9;
const MAX_SUBSTEPS: usize = 1000;

/// Complex drive values on a knot grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    knots: Vec<f64>,
    values: Vec<Complex64>,
    interpolation: Interpolation,
    spacing: Spacing,
}

enum Interp {
    Cubic(CubicSpline<Complex64>),
    Linear(LinearInterp<Complex64>),
}

impl Interp {
    fn eval(&self, t: f64) -> Complex64 {
        match self {
            Interp::Cubic(s) => s.eval(t),
            Interp::Linear(s) => s.eval(t),
        }
    }
}

impl ControlGrid {
    pub fn new(knots: Vec<f64>, values: Vec<Complex64>, interpolation: Interpolation, spacing: Spacing) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::InvalidParameter("knot and value counts differ".into()));
        }
        let min = if interpolation == Interpolation::Cubic { 4 } else { 2 };
        if knots.len() < min {
            return Err(Error::InvalidParameter(format!("need at least {min} knots")));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("knots must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control value".into()));
        }
        Ok(Self {
            knots,
            values,
            interpolation,
            spacing,
        })
    }

    /// Zero drive on `n` knots spanning (t1, t2).
    pub fn zeros(t1: f64, t2: f64, n: usize, spacing: Spacing, interpolation: Interpolation) -> Result<Self> {
        if !(t2 > t1) || !t1.is_finite() || !t2.is_finite() {
            return Err(Error::EmptyInterval { t1, t2 });
        }
        if n < 2 {
            return Err(Error::InvalidParameter("need at least two knots".into()));
        }
        let span = t2 - t1;
        let mut knots: Vec<f64> = match spacing {
            Spacing::Uniform => (0..n).map(|i| t1 + span * i as f64 / (n - 1) as f64).collect(),
            Spacing::DenseAtEnd => {
                // uniform bulk, then gaps shrinking by DENSE_RATIO toward t2
                let r = DENSE_RATIO;
                let gaps = n - 1;
                let bulk = gaps / 2;
                let tail = gaps - bulk;
                let tail_len = r * (1.0 - r.powi(tail as i32)) / (1.0 - r);
                let h = span / (bulk as f64 + tail_len);
                let mut t = t1;
                let mut k = vec![t1];
                for i in 0..gaps {
                    t += if i < bulk { h } else { h * r.powi((i - bulk + 1) as i32) };
                    k.push(t);
                }
                k
            }
        };
        knots[n - 1] = t2;
        Self::new(knots, vec![Complex64::new(0.0, 0.0); n], interpolation, spacing)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn window(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        Self::new(self.knots.clone(), values, self.interpolation, self.spacing)
    }

    /// Same grid with every value multiplied by e^{iχ}.
    pub fn rotated(&self, chi: f64) -> Self {
        let f = Complex64::from_polar(1.0, chi);
        Self {
            values: self.values.iter().map(|v| v * f).collect(),
            ..self.clone()
        }
    }

    fn interp(&self) -> Interp {
        match self.interpolation {
            Interpolation::Cubic => Interp::Cubic(
                CubicSpline::new(self.knots.clone(), self.values.clone()).expect("validated knots"),
            ),
            Interpolation::Linear => Interp::Linear(
                LinearInterp::new(self.knots.clone(), self.values.clone()).expect("validated knots"),
            ),
        }
    }

    pub fn omega(&self, t: f64) -> Complex64 {
        self.interp().eval(t)
    }

    /// Samples a drive at the knots (impulses are not representable and are dropped).
    pub fn sample_drive(&self, drive: &ControlDrive) -> Result<Self> {
        self.with_values(self.knots.iter().map(|&t| drive.omega(t)).collect())
    }

    /// Drive with the same Ω(t). Linear grids are resampled 16 times per gap.
    pub fn to_drive(&self) -> Result<ControlDrive> {
        match self.interpolation {
            Interpolation::Cubic => ControlDrive::from_samples(self.knots.clone(), self.values.clone()),
            Interpolation::Linear => {
                let f = self.interp();
                let mut t = Vec::new();
                for w in self.knots.windows(2) {
                    for j in 0..16 {
                        t.push(w[0] + (w[1] - w[0]) * j as f64 / 16.0);
                    }
                }
                t.push(self.window().1);
                let v = t.iter().map(|&x| f.eval(x)).collect();
                ControlDrive::from_samples(t, v)
            }
        }
    }
}

/// Optimiser settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OctOptions {
    pub max_iterations: usize,
    pub grad_tol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Random restarts besides the deterministic start.
    pub restarts: usize,
    pub seed: u64,
    /// Optimise real Ω only (sufficient for Δ = 0).
    pub real_only: bool,
    /// RK4 steps per min(τ, 1/Γ) in the objective.
    pub steps_per_scale: usize,
}

impl Default for OctOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            grad_tol: 1e-8,
            fd_step: 1e-6,
            restarts: 3,
            seed: 2024,
            real_only: true,
            steps_per_scale: 40,
        }
    }
}

/// One optimisation run from a single starting point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OctRun {
    pub start: String,
    pub eta: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OctResult {
    pub grid: ControlGrid,
    /// η_s of the best grid re-evaluated with the adaptive integrator.
    pub eta: f64,
    /// η_s of the best grid under the fixed-step objective.
    pub eta_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub runs: Vec<OctRun>,
}

/// Storage dynamics of the atom-limited tiers in a form cheap to re-evaluate.
struct Objective {
    decay: Complex64,
    coupling: f64,
    input_norm: f64,
    h_target: f64,
    input: PulseShape,
}

/// RK4 steps as (t, h, E_in at t, t + h/2, t + h).
type Plan = Vec<(f64, f64, [Complex64; 3])>;

fn rhs(decay: Complex64, coupling: f64, om: Complex64, ein: Complex64, p: Complex64, s: Complex64) -> (Complex64, Complex64) {
    let i = Complex64::i();
    (-decay * p + i * om * s + i * coupling * ein, i * om.conj() * p)
}

impl Objective {
    fn new(shape: &PulseShape, params: &MemoryParams, tier: ModelTier, grid: &ControlGrid, opts: &OctOptions) -> Result<Self> {
        let d = params.derived()?;
        let gt = d.gamma_tilde;
        let coupling = match tier {
            ModelTier::AtomLimitedLossless => (2.0 * gt).sqrt(),
            ModelTier::AtomLimited => params.g_sqrt_n * (2.0 * params.kappa_in).sqrt() / d.kappa,
            _ => {
                return Err(Error::InvalidParameter(
                    "optimal control supports the atom-limited tiers only".into(),
                ))
            }
        };
        if !(gt > 0.0) {
            return Err(Error::InvalidParameter("optimal control needs Γ > 0".into()));
        }
        let window = grid.window();
        let input = storage_input(shape, window)?;
        let input_norm = input.norm_between(window.0, window.1);
        if !(input_norm > 0.0) {
            return Err(Error::ZeroWeight {
                t1: window.0,
                t2: window.1,
            });
        }
        let h_target = shape.tau().min(1.0 / gt) / opts.steps_per_scale.max(1) as f64;
        Ok(Self {
            decay: Complex64::new(gt, params.delta),
            coupling,
            input_norm,
            h_target,
            input,
        })
    }

    /// Step plan for `grid`: each knot gap is cut so that h ≤ h_target and
    /// h·|Ω| ≤ 0.1 near the gap; `None` when a gap would need more than
    /// `MAX_SUBSTEPS` steps.
    fn plan(&self, grid: &ControlGrid) -> Option<Plan> {
        let v = &grid.values;
        let n = v.len();
        let mut steps = Vec::new();
        for (i, w) in grid.knots.windows(2).enumerate() {
            let om = v[i.saturating_sub(1)..(i + 3).min(n)].iter().map(|z| z.norm()).fold(0.0, f64::max);
            let h_max = self.h_target.min(0.1 / om.max(1e-300));
            let m = ((w[1] - w[0]) / h_max).ceil().max(1.0);
            if !(m <= MAX_SUBSTEPS as f64) {
                return None;
            }
            let m = m as usize;
            let h = (w[1] - w[0]) / m as f64;
            for j in 0..m {
                let t = w[0] + h * j as f64;
                steps.push((t, h, [self.input.eval(t), self.input.eval(t + 0.5 * h), self.input.eval(t + h)]));
            }
        }
        Some(steps)
    }

    /// η_s from fixed-step RK4 along `plan`.
    fn eta(&self, plan: &Plan, grid: &ControlGrid) -> f64 {
        let f = grid.interp();
        let (mut p, mut s) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        let (d, k) = (self.decay, self.coupling);
        for &(t, h, e) in plan {
            let (o0, o1, o2) = (f.eval(t), f.eval(t + 0.5 * h), f.eval(t + h));
            let (k1p, k1s) = rhs(d, k, o0, e[0], p, s);
            let (k2p, k2s) = rhs(d, k, o1, e[1], p + 0.5 * h * k1p, s + 0.5 * h * k1s);
            let (k3p, k3s) = rhs(d, k, o1, e[1], p + 0.5 * h * k2p, s + 0.5 * h * k2s);
            let (k4p, k4s) = rhs(d, k, o2, e[2], p + h * k3p, s + h * k3s);
            p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
        }
        s.norm_sqr() / self.input_norm
    }

    /// η_s from the adaptive integrator, restarting at every knot.
    fn eta_adaptive(&self, grid: &ControlGrid) -> Result<f64> {
        let f = grid.interp();
        let (d, k) = (self.decay, self.coupling);
        let mut y = [0.0; 4];
        let opts = OdeOptions::default();
        for w in grid.knots.windows(2) {
            let sol = dopri5(
                |t, y: &[f64; 4]| {
                    let (dp, ds) = rhs(
                        d,
                        k,
                        f.eval(t),
                        self.input.eval(t),
                        Complex64::new(y[0], y[1]),
                        Complex64::new(y[2], y[3]),
                    );
                    [dp.re, dp.im, ds.re, ds.im]
                },
                w[0],
                w[1],
                y,
                &opts,
            )?;
            y = *sol.y.last().expect("nonempty");
        }
        Ok((y[2] * y[2] + y[3] * y[3]) / self.input_norm)
    }
}

fn pack(values: &[Complex64], real_only: bool) -> Vec<f64> {
    if real_only {
        values.iter().map(|v| v.re).collect()
    } else {
        values.iter().flat_map(|v| [v.re, v.im]).collect()
    }
}

fn unpack(x: &[f64], real_only: bool) -> Vec<Complex64> {
    if real_only {
        x.iter().map(|&r| Complex64::new(r, 0.0)).collect()
    } else {
        x.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
    }
}

/// Smooth random drive: Gaussian values on 8 control points, linearly spread.
fn random_start(rng: &mut ChaCha8Rng, grid: &ControlGrid, scale: f64, real_only: bool) -> Vec<Complex64> {
    let m = 8;
    let (t1, t2) = grid.window();
    let pts: Vec<Complex64> = (0..m)
        .map(|_| {
            let re = scale * (1.0 + rng.gen_range(-1.0..1.0));
            let im = if real_only { 0.0 } else { scale * rng.gen_range(-1.0..1.0) };
            Complex64::new(re, im)
        })
        .collect();
    grid.knots
        .iter()
        .map(|&t| {
            let u = (t - t1) / (t2 - t1) * (m - 1) as f64;
            let i = (u.floor() as usize).min(m - 2);
            let f = u - i as f64;
            pts[i] * (1.0 - f) + pts[i + 1] * f
        })
        .collect()
}

/// Maximises the storage efficiency η_s = |S(t2)|² over the knot values of
/// `grid` (its values are ignored unless no seed is given and they are
/// nonzero). Starts: the seed drive or a flat drive √(2Γ/T), then
/// `opts.restarts` random smooth drives; the best run is returned.
pub fn oct_optimize(
    shape: &PulseShape,
    params: &MemoryParams,
    tier: ModelTier,
    grid: &ControlGrid,
    seed_drive: Option<&ControlDrive>,
    opts: &OctOptions,
) -> Result<OctResult> {
    if !shape.is_truncated() {
        return Err(Error::InvalidParameter("optimal control needs a truncated shape".into()));
    }
    let (t1, t2) = grid.window();
    let obj = Objective::new(shape, params, tier, grid, opts)?;
    let gt = params.derived()?.gamma_tilde;
    let real_only = opts.real_only && params.delta == 0.0;
    let flat = (2.0 * gt / (t2 - t1)).sqrt();

    let mut starts: Vec<(String, Vec<Complex64>)> = Vec::new();
    match seed_drive {
        Some(d) => starts.push(("seed".into(), grid.sample_drive(d)?.values)),
        None if grid.values.iter().any(|v| v.norm() > 0.0) => starts.push(("initial".into(), grid.values.clone())),
        None => starts.push(("flat".into(), vec![Complex64::new(flat, 0.0); grid.len()])),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for r in 0..opts.restarts {
        starts.push((format!("random-{r}"), random_start(&mut rng, grid, flat, real_only)));
    }

    let lb = LbfgsOptions {
        max_iterations: opts.max_iterations,
        grad_tol: opts.grad_tol,
        ..LbfgsOptions::default()
    };
    let mut runs = Vec::new();
    let mut best: Option<(f64, ControlGrid, usize, bool)> = None;
    for (label, v0) in starts {
        let x0 = pack(&v0, real_only);
        let fg = |x: &[f64]| {
            let Ok(g0) = grid.with_values(unpack(x, real_only)) else {
                return (f64::NAN, vec![f64::NAN; x.len()]);
            };
            let Some(plan) = obj.plan(&g0) else {
                return (f64::NAN, vec![f64::NAN; x.len()]);
            };
            let f0 = -obj.eta(&plan, &g0);
            let grad: Vec<f64> = (0..x.len())
                .into_par_iter()
                .map(|i| {
                    let h = opts.fd_step * x[i].abs().max(1.0);
                    let mut xp = x.to_vec();
                    let mut xm = x.to_vec();
                    xp[i] += h;
                    xm[i] -= h;
                    let fp = grid.with_values(unpack(&xp, real_only)).map_or(f64::NAN, |g| -obj.eta(&plan, &g));
                    let fm = grid.with_values(unpack(&xm, real_only)).map_or(f64::NAN, |g| -obj.eta(&plan, &g));
                    (fp - fm) / (2.0 * h)
                })
                .collect();
            (f0, grad)
        };
        let rep = minimize(fg, x0, &lb);
        if !rep.f.is_finite() {
            return Err(Error::NonFinite(format!("objective in run {label}")));
        }
        let g = grid.with_values(unpack(&rep.x, real_only))?;
        let eta = -rep.f;
        runs.push(OctRun {
            start: label,
            eta,
            iterations: rep.iterations,
            converged: rep.converged,
        });
        if best.as_ref().map_or(true, |b| eta > b.0) {
            best = Some((eta, g, rep.iterations, rep.converged));
        }
    }
    let (eta_objective, grid, iterations, converged) = best.expect("at least one start");
    let eta = obj.eta_adaptive(&grid)?;
    Ok(OctResult {
        grid,
        eta,
        eta_objective,
        iterations,
        converged,
        runs,
    })
}

/// η_s of a fixed grid under the adaptive integrator.
pub fn storage_efficiency(shape: &PulseShape, params: &MemoryParams, tier: ModelTier, grid: &ControlGrid) -> Result<f64> {
    Objective::new(shape, params, tier, grid, &OctOptions::default())?.eta_adaptive(grid)
}

/// Window of length √3·π·τ used for the benchmark comparisons: starting at 0
/// for the decreasing exponential, ending at 0 for the increasing one and
/// centred otherwise.
pub fn benchmark_window(kind: ShapeKind, tau: f64) -> (f64, f64) {
    let w = 3f64.sqrt() * PI * tau;
    match kind {
        ShapeKind::DecreasingExp => (0.0, w),
        ShapeKind::IncreasingExp => (-w, 0.0),
        _ => (-0.5 * w, 0.5 * w),
    }
}

/// Benchmark shape truncated to its window.
pub fn benchmark_shape(kind: ShapeKind, tau: f64) -> Result<PulseShape> {
    let (a, b) = benchmark_window(kind, tau);
    PulseShape::new(kind, tau)?.truncate(a, b)
}

/// Scenario file for a single optimal-control benchmark.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OctScenario {
    pub shape: ShapeKind,
    #[serde(default = "one")]
    pub tau: f64,
    /// Defaults to the benchmark window.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    /// Γ in inverse time units; give either this or `gamma_tc`.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Γ·T_c with T_c the time variance of the truncated pulse.
    #[serde(default)]
    pub gamma_tc: Option<f64>,
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
    #[serde(default = "default_interp")]
    pub interpolation: Interpolation,
    #[serde(default)]
    pub options: Option<OctOptions>,
}

fn one() -> f64 {
    1.0
}
fn default_knots() -> usize {
    DEFAULT_KNOTS
}
fn default_spacing() -> Spacing {
    Spacing::Uniform
}
fn default_interp() -> Interpolation {
    Interpolation::Cubic
}

/// Outcome of a scenario next to the ansatz pipeline on the same problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub shape: ShapeKind,
    pub tau: f64,
    pub window: (f64, f64),
    pub gamma: f64,
    pub gamma_tc: f64,
    pub knots: usize,
    pub spacing: Spacing,
    pub interpolation: Interpolation,
    pub eta_oct: f64,
    pub eta_ansatz: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub result: Option<OctResult>,
}

pub const SCOREBOARD_HEADER: &str =
    "shape,tau,t1,t2,gamma,gamma_tc,knots,spacing,interpolation,eta_oct,eta_ansatz,iterations,converged";

impl OctScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn shape(&self) -> Result<PulseShape> {
        let (a, b) = self.window.unwrap_or_else(|| benchmark_window(self.shape, self.tau));
        PulseShape::new(self.shape, self.tau)?.truncate(a, b)
    }

    pub fn run(&self) -> Result<ScenarioOutcome> {
        let shape = self.shape()?;
        let tc = shape.time_variance()?;
        let gamma = match (self.gamma, self.gamma_tc) {
            (Some(g), None) => g,
            (None, Some(x)) => x / tc,
            _ => return Err(Error::InvalidParameter("give exactly one of gamma and gamma_tc".into())),
        };
        let params = MemoryParams::lossless_with_rate(gamma, 1e3 * gamma, 0.0);
        let (t1, t2) = shape.domain();
        let grid = ControlGrid::zeros(t1, t2, self.knots, self.spacing, self.interpolation)?;
        let opts = self.options.unwrap_or_default();
        let res = oct_optimize(&shape, &params, ModelTier::AtomLimitedLossless, &grid, None, &opts)?;
        let ansatz = optimize_c(&shape, gamma)?;
        Ok(ScenarioOutcome {
            shape: self.shape,
            tau: self.tau,
            window: (t1, t2),
            gamma,
            gamma_tc: gamma * tc,
            knots: self.knots,
            spacing: self.spacing,
            interpolation: self.interpolation,
            eta_oct: res.eta,
            eta_ansatz: ansatz.eta,
            iterations: res.iterations,
            converged: res.converged,
            result: Some(res),
        })
    }
}

impl ScenarioOutcome {
    pub fn write_row<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.shape.name(),
            self.tau,
            self.window.0,
            self.window.1,
            self.gamma,
            self.gamma_tc,
            self.knots,
            self.spacing.name(),
            self.interpolation.name(),
            self.eta_oct,
            self.eta_ansatz,
            self.iterations,
            self.converged
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
