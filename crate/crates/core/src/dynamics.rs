//! Forward simulation of storage and retrieval in the full three-field model
//! and its atom-limited and cavity-limited reductions, with efficiency
//! overlaps, excitation bookkeeping and the polarization loss estimate.
//!
//! Vacuum noise inputs are dropped: all amplitudes are complex numbers.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::{ControlDrive, ImpulseCoupling};
use crate::error::{Error, Result};
use crate::model::MemoryParams;
use crate::numerics::ode::{dopri5, DenseStep, OdeOptions};
use crate::numerics::radau::radau5;
use crate::numerics::quad::{GL5_NODES, GL5_WEIGHTS};
use crate::shapes::PulseShape;

const N: usize = 10;
// state layout
const E: usize = 0;
const P: usize = 2;
const S: usize = 4;
const OUT: usize = 6;
const IN: usize = 7;
const DISS: usize = 8;
const P2: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTier {
    /// Cavity field, polarization and spin wave.
    Full,
    /// Cavity adiabatically eliminated, with losses.
    AtomLimited,
    /// Cavity eliminated, lossless, decaying at the total atomic rate Γ̃.
    AtomLimitedLossless,
    /// Polarization eliminated.
    CavityLimited,
    /// Polarization eliminated with γ = Δ = 0 (single spin-wave equation).
    CavityLimitedSpecial,
}

impl ModelTier {
    pub fn is_lossless(&self, params: &MemoryParams) -> bool {
        match self {
            ModelTier::AtomLimitedLossless => true,
            _ => params.gamma == 0.0 && params.kappa_loss == 0.0,
        }
    }
}

/// How the decoupled (post-critical-time) stretches of a cavity-limited
/// drive are simulated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecoupleModel {
    /// Atoms frozen, bare cavity decay.
    Exact,
    /// A real drive of magnitude M·g√N (full model only; other tiers use Exact).
    FiniteM(f64),
}

/// Integrator choice. `Auto` uses Radau IIA for the cavity-limited tier,
/// whose |Ω|²/(γ + iΔ) term is stiff once Ω grows, and Dormand-Prince otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    Auto,
    Explicit,
    Implicit,
}

#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    pub ode: OdeOptions,
    pub decouple: DecoupleModel,
    pub integrator: Integrator,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            decouple: DecoupleModel::Exact,
            integrator: Integrator::Auto,
        }
    }
}

/// Amplitudes at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub t: f64,
    pub e: Complex64,
    pub p: Complex64,
    pub s: Complex64,
    pub e_out: Complex64,
    pub out_norm: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
struct Piece {
    decoupled: bool,
    steps: Vec<DenseStep<N>>,
}

#[derive(Clone, Copy, Debug)]
struct Rates {
    g: f64,
    kappa: f64,
    kappa_in: f64,
    kappa_loss: f64,
    gamma: f64,
    delta: f64,
    gamma_tilde: f64,
}

/// Integrated trajectory with dense output.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub tier: ModelTier,
    pub grid: Vec<f64>,
    states: Vec<[f64; N]>,
    decoupled_at: Vec<bool>,
    pieces: Vec<Piece>,
    rates: Rates,
    drive: ControlDrive,
    input: Option<PulseShape>,
    initial_spin: Complex64,
    initial_excitation: f64,
}

fn c(y: &[f64; N], i: usize) -> Complex64 {
    Complex64::new(y[i], y[i + 1])
}

fn put(y: &mut [f64; N], i: usize, v: Complex64) {
    y[i] = v.re;
    y[i + 1] = v.im;
}

impl Rates {
    fn new(params: &MemoryParams) -> Result<Self> {
        let d = params.derived()?;
        Ok(Self {
            g: params.g_sqrt_n,
            kappa: d.kappa,
            kappa_in: params.kappa_in,
            kappa_loss: params.kappa_loss,
            gamma: params.gamma,
            delta: params.delta,
            gamma_tilde: d.gamma_tilde,
        })
    }

    fn gd(&self) -> Complex64 {
        Complex64::new(self.gamma, self.delta)
    }
}

struct Model<'a> {
    tier: ModelTier,
    r: Rates,
    drive: &'a ControlDrive,
    input: Option<&'a PulseShape>,
    decouple: DecoupleModel,
}

impl Model<'_> {
    fn ein(&self, t: f64) -> Complex64 {
        self.input.map_or(Complex64::new(0.0, 0.0), |s| s.eval(t))
    }

    /// Ω used in the equations, honouring the decoupling model.
    fn omega(&self, t: f64, decoupled: bool) -> Complex64 {
        match (decoupled, self.decouple, self.tier) {
            (true, DecoupleModel::FiniteM(m), ModelTier::Full) => Complex64::new(m * self.r.g, 0.0),
            _ => self.drive.omega(t),
        }
    }

    fn exact_decouple(&self, decoupled: bool) -> bool {
        decoupled && !(self.tier == ModelTier::Full && matches!(self.decouple, DecoupleModel::FiniteM(_)))
    }

    /// E, P, S and E_out from the state at `t`.
    fn fields(&self, t: f64, y: &[f64; N], decoupled: bool) -> (Complex64, Complex64, Complex64, Complex64) {
        let r = &self.r;
        let i = Complex64::i();
        let ein = self.ein(t);
        let s = c(y, S);
        let frozen = self.exact_decouple(decoupled);
        match self.tier {
            ModelTier::Full => {
                let e = c(y, E);
                (e, c(y, P), s, (2.0 * r.kappa_in).sqrt() * e - ein)
            }
            ModelTier::AtomLimited => {
                let p = c(y, P);
                let k = r.g * (2.0 * r.kappa_in).sqrt() / r.kappa;
                let a = (r.kappa_in - r.kappa_loss) / r.kappa;
                let e = (i * r.g * p + (2.0 * r.kappa_in).sqrt() * ein) / r.kappa;
                (e, p, s, a * ein + i * k * p)
            }
            ModelTier::AtomLimitedLossless => {
                let p = c(y, P);
                let gt = r.gamma_tilde;
                let e = (i * r.g * p + (2.0 * r.kappa_in).sqrt() * ein) / r.kappa;
                (e, p, s, ein + i * (2.0 * gt).sqrt() * p)
            }
            ModelTier::CavityLimited => {
                let e = c(y, E);
                let p = if frozen {
                    Complex64::new(0.0, 0.0)
                } else {
                    i * (r.g * e + self.drive.omega(t) * s) / r.gd()
                };
                (e, p, s, (2.0 * r.kappa_in).sqrt() * e - ein)
            }
            ModelTier::CavityLimitedSpecial => {
                let (e, s) = if frozen {
                    (c(y, E), s)
                } else {
                    let om = self.drive.omega(t);
                    let sq = (r.g * r.g + om.norm_sqr()).sqrt();
                    (-om * s / sq, s * r.g / sq)
                };
                (e, Complex64::new(0.0, 0.0), s, (2.0 * r.kappa_in).sqrt() * e - ein)
            }
        }
    }

    fn stored(&self, t: f64, y: &[f64; N], decoupled: bool) -> f64 {
        let (e, p, s, _) = self.fields(t, y, decoupled);
        match self.tier {
            ModelTier::Full => e.norm_sqr() + p.norm_sqr() + s.norm_sqr(),
            ModelTier::AtomLimited | ModelTier::AtomLimitedLossless => p.norm_sqr() + s.norm_sqr(),
            ModelTier::CavityLimited | ModelTier::CavityLimitedSpecial => e.norm_sqr() + s.norm_sqr(),
        }
    }

    fn rhs(&self, t: f64, y: &[f64; N], decoupled: bool) -> [f64; N] {
        let r = &self.r;
        let i = Complex64::i();
        let ein = self.ein(t);
        let port = (2.0 * r.kappa_in).sqrt();
        let mut dy = [0.0; N];
        let (e, p, s, eout) = self.fields(t, y, decoupled);
        let frozen = self.exact_decouple(decoupled);
        let om = self.omega(t, decoupled);
        let zero = Complex64::new(0.0, 0.0);
        let (de, dp, ds, diss, p2) = match self.tier {
            ModelTier::Full if frozen => (-r.kappa * e + port * ein, zero, zero, 2.0 * r.kappa_loss * e.norm_sqr(), 0.0),
            ModelTier::Full => (
                -r.kappa * e + i * r.g * p + port * ein,
                -r.gd() * p + i * r.g * e + i * om * s,
                i * om.conj() * p,
                2.0 * r.kappa_loss * e.norm_sqr() + 2.0 * r.gamma * p.norm_sqr(),
                p.norm_sqr(),
            ),
            ModelTier::AtomLimited | ModelTier::AtomLimitedLossless if frozen => (zero, zero, zero, 0.0, 0.0),
            ModelTier::AtomLimited => {
                let k = r.g * port / r.kappa;
                (
                    zero,
                    -(r.gamma_tilde + i * r.delta) * p + i * om * s + i * k * ein,
                    i * om.conj() * p,
                    2.0 * r.gamma * p.norm_sqr() + 2.0 * r.kappa_loss * e.norm_sqr(),
                    p.norm_sqr(),
                )
            }
            ModelTier::AtomLimitedLossless => {
                let gt = r.gamma_tilde;
                (
                    zero,
                    -(gt + i * r.delta) * p + i * om * s + i * (2.0 * gt).sqrt() * ein,
                    i * om.conj() * p,
                    0.0,
                    p.norm_sqr(),
                )
            }
            ModelTier::CavityLimited | ModelTier::CavityLimitedSpecial if frozen => {
                (-r.kappa * e + port * ein, zero, zero, 2.0 * r.kappa_loss * e.norm_sqr(), 0.0)
            }
            ModelTier::CavityLimited => {
                let gd = r.gd();
                (
                    -(r.kappa + r.g * r.g / gd) * e - r.g * om * s / gd + port * ein,
                    zero,
                    -om.norm_sqr() * s / gd - r.g * om.conj() * e / gd,
                    2.0 * r.kappa_loss * e.norm_sqr() + 2.0 * r.gamma * p.norm_sqr(),
                    p.norm_sqr(),
                )
            }
            ModelTier::CavityLimitedSpecial => {
                // dark-state amplitude A = S√(G² + |Ω|²)/G, with |A|² = |S|² + |E|²
                let dom = self.drive.omega_deriv(t);
                let den = r.g * r.g + om.norm_sqr();
                let a = c(y, S);
                (
                    zero,
                    zero,
                    -(r.kappa * om.norm_sqr() + i * (dom * om.conj()).im) * a / den - port * om.conj() * ein / den.sqrt(),
                    2.0 * r.kappa_loss * e.norm_sqr(),
                    0.0,
                )
            }
        };
        put(&mut dy, E, de);
        put(&mut dy, P, dp);
        put(&mut dy, S, ds);
        dy[OUT] = eout.norm_sqr();
        dy[IN] = ein.norm_sqr();
        dy[DISS] = diss;
        dy[P2] = p2;
        dy
    }

    /// Applies an impulse to the state in its physical form.
    fn kick(&self, y: &mut [f64; N], imp: &crate::control::Impulse) {
        let x_index = match (imp.coupling, self.tier) {
            (_, ModelTier::AtomLimited | ModelTier::AtomLimitedLossless) => P,
            (ImpulseCoupling::SpinPolarization, ModelTier::Full) => P,
            _ => E,
        };
        let (s2, x2) = imp.rotate(c(y, S), c(y, x_index));
        put(y, S, s2);
        put(y, x_index, x2);
    }

    /// √(G² + |Ω|²)/G, the ratio between the dark-state amplitude and S.
    fn dark_scale(&self, om: Complex64) -> f64 {
        (self.r.g * self.r.g + om.norm_sqr()).sqrt() / self.r.g
    }

    /// In the special tier, replaces the dark-state amplitude by explicit S and E.
    fn to_physical(&self, y: &mut [f64; N], decoupled: bool, om: Complex64) {
        if self.tier == ModelTier::CavityLimitedSpecial && !decoupled {
            let s = c(y, S) / self.dark_scale(om);
            put(y, S, s);
            put(y, E, -om * s / self.r.g);
        }
    }

    /// Inverse of `to_physical`; E is dropped since it is slaved to S.
    fn from_physical(&self, y: &mut [f64; N], decoupled: bool, om: Complex64) {
        if self.tier == ModelTier::CavityLimitedSpecial && !decoupled {
            let a = c(y, S) * self.dark_scale(om);
            put(y, S, a);
            put(y, E, Complex64::new(0.0, 0.0));
        }
    }
}

fn sorted_breaks(mut v: Vec<f64>, t1: f64, t2: f64) -> Vec<f64> {
    v.push(t1);
    v.push(t2);
    v.retain(|t| t.is_finite() && *t >= t1 && *t <= t2);
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (t2 - t1));
    v
}

fn check_tier(tier: ModelTier, params: &MemoryParams) -> Result<()> {
    if tier == ModelTier::CavityLimited && params.gamma == 0.0 && params.delta == 0.0 {
        return Err(Error::InvalidParameter(
            "cavity-limited equations need γ + iΔ ≠ 0; use the special tier".into(),
        ));
    }
    if tier == ModelTier::CavityLimitedSpecial && !(params.g_sqrt_n > 0.0) {
        return Err(Error::InvalidParameter("special tier needs g√N > 0".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    drive: &ControlDrive,
    params: &MemoryParams,
    tier: ModelTier,
    window: (f64, f64),
    s_init: Complex64,
    input: Option<&PulseShape>,
    opts: &SimOptions,
) -> Result<Trajectory> {
    check_tier(tier, params)?;
    let (t1, t2) = window;
    if !(t1.is_finite() && t2.is_finite() && t2 > t1) {
        return Err(Error::EmptyInterval { t1, t2 });
    }
    let model = Model {
        tier,
        r: Rates::new(params)?,
        drive,
        input,
        decouple: opts.decouple,
    };
    let mut cuts = drive.breakpoints();
    if let Some(s) = input {
        cuts.push(s.t1());
        cuts.push(s.t2());
    }
    let cuts = sorted_breaks(cuts, t1, t2);
    let impulses = drive.impulses();
    let mut imp_iter = impulses.iter().filter(|i| i.t >= t1 && i.t <= t2).peekable();

    let nudge = 1e-12 * (t2 - t1);
    let mut y = [0.0; N];
    put(&mut y, S, s_init);
    let mut initial_excitation = s_init.norm_sqr();

    let mut grid = Vec::new();
    let mut states = Vec::new();
    let mut decoupled_at = Vec::new();
    let mut pieces = Vec::new();
    let mut prev_decoupled = None;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let decoupled = drive.in_switch_region(0.5 * (a + b));
        if let Some(prev) = prev_decoupled {
            model.to_physical(&mut y, prev, drive.omega(a - nudge));
        }
        while let Some(imp) = imp_iter.peek() {
            if imp.t > a {
                break;
            }
            model.kick(&mut y, imp);
            imp_iter.next();
        }
        model.from_physical(&mut y, decoupled, drive.omega(a));
        prev_decoupled = Some(decoupled);
        if grid.is_empty() {
            initial_excitation = model.stored(a, &y, decoupled);
        }
        if grid.last() == Some(&a) {
            states.pop();
            grid.pop();
            decoupled_at.pop();
        }
        let implicit = match opts.integrator {
            Integrator::Auto => tier == ModelTier::CavityLimited && !decoupled,
            Integrator::Explicit => false,
            Integrator::Implicit => true,
        };
        // Ω jumps at the cuts; evaluate strictly inside the interval
        let inner = |t: f64| {
            if b - a > 2.0 * nudge {
                t.clamp(a + nudge, b - nudge)
            } else {
                0.5 * (a + b)
            }
        };
        let sol = if implicit {
            radau5(|t, y| model.rhs(inner(t), y, decoupled), a, b, y, &opts.ode)?
        } else {
            dopri5(|t, y| model.rhs(inner(t), y, decoupled), a, b, y, &opts.ode)?
        };
        for (t, s) in sol.t.iter().zip(&sol.y) {
            if !s.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("state at t = {t}")));
            }
        }
        grid.extend_from_slice(&sol.t);
        states.extend_from_slice(&sol.y);
        decoupled_at.extend(std::iter::repeat(decoupled).take(sol.t.len()));
        y = *sol.y.last().expect("solution has points");
        pieces.push(Piece {
            decoupled,
            steps: sol.dense,
        });
    }
    // impulses sitting exactly on the final time
    let last_dec = decoupled_at.last().copied().unwrap_or(false);
    let mut kicked = false;
    for imp in imp_iter {
        if !kicked {
            model.to_physical(&mut y, last_dec, drive.omega(t2 - nudge));
        }
        model.kick(&mut y, imp);
        kicked = true;
    }
    if kicked {
        model.from_physical(&mut y, last_dec, drive.omega(t2 - nudge));
        *states.last_mut().expect("nonempty") = y;
    }
    Ok(Trajectory {
        tier,
        grid,
        states,
        decoupled_at,
        pieces,
        rates: model.r,
        drive: drive.clone(),
        input: input.cloned(),
        initial_spin: s_init,
        initial_excitation,
    })
}

impl Trajectory {
    fn model(&self) -> Model<'_> {
        Model {
            tier: self.tier,
            r: self.rates,
            drive: &self.drive,
            input: self.input.as_ref(),
            decouple: DecoupleModel::Exact,
        }
    }

    fn sample_state(&self, t: f64, y: &[f64; N], decoupled: bool) -> FieldSample {
        let m = self.model();
        let (e, p, s, e_out) = m.fields(t, y, decoupled);
        let residual = m.stored(t, y, decoupled) + y[OUT] + y[DISS] - y[IN] - self.initial_excitation;
        FieldSample {
            t,
            e,
            p,
            s,
            e_out,
            out_norm: y[OUT],
            residual,
        }
    }

    /// Amplitudes at the integrator's output points.
    pub fn samples(&self) -> Vec<FieldSample> {
        self.grid
            .iter()
            .zip(&self.states)
            .zip(&self.decoupled_at)
            .map(|((&t, y), &d)| self.sample_state(t, y, d))
            .collect()
    }

    /// Dense-output evaluation at any time inside the window.
    pub fn sample(&self, t: f64) -> FieldSample {
        for piece in &self.pieces {
            if let (Some(first), Some(last)) = (piece.steps.first(), piece.steps.last()) {
                if t >= first.t0 && t <= last.t1() {
                    let i = piece.steps.partition_point(|s| s.t1() < t).min(piece.steps.len() - 1);
                    return self.sample_state(t, &piece.steps[i].eval(t), piece.decoupled);
                }
            }
        }
        let i = self.grid.partition_point(|&g| g < t).min(self.grid.len() - 1);
        self.sample_state(self.grid[i], &self.states[i], self.decoupled_at[i])
    }

    pub fn final_sample(&self) -> FieldSample {
        let i = self.grid.len() - 1;
        self.sample_state(self.grid[i], &self.states[i], self.decoupled_at[i])
    }

    /// Largest |excitation balance| over the output points.
    pub fn max_conservation_residual(&self) -> f64 {
        self.samples().iter().map(|s| s.residual.abs()).fold(0.0, f64::max)
    }

    /// ∫|E_out|² over the window.
    pub fn output_norm(&self) -> f64 {
        self.states.last().map_or(0.0, |y| y[OUT])
    }

    /// ∫|E_in|² over the window.
    pub fn input_norm(&self) -> f64 {
        self.states.last().map_or(0.0, |y| y[IN])
    }

    /// ∫|P|² over the window (reconstructed in the cavity-limited tier).
    pub fn polarization_integral(&self) -> f64 {
        self.states.last().map_or(0.0, |y| y[P2])
    }

    pub fn initial_spin(&self) -> Complex64 {
        self.initial_spin
    }

    /// ∫ f*(t) E_out(t) dt using the dense output, subdividing each step to
    /// resolve the target on its own time scale.
    pub fn project(&self, target: &PulseShape) -> Complex64 {
        let m = self.model();
        let h_ref = target.tau() / 16.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for piece in &self.pieces {
            for st in &piece.steps {
                let (a, b) = (st.t0, st.t1());
                let lo = a.max(target.t1());
                let hi = b.min(target.t2());
                if !(hi > lo) {
                    continue;
                }
                let n = ((hi - lo) / h_ref).ceil().max(1.0) as usize;
                let h = (hi - lo) / n as f64;
                for k in 0..n {
                    let x0 = lo + k as f64 * h;
                    let mid = x0 + 0.5 * h;
                    for (xi, wi) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
                        let t = mid + 0.5 * h * xi;
                        let y = st.eval(t);
                        let (_, _, _, eout) = m.fields(t, &y, piece.decoupled);
                        acc += target.eval(t).conj() * eout * (0.5 * h * wi);
                    }
                }
            }
        }
        acc
    }

    /// CSV with t, Re/Im of E, P, S, E_out, cumulative output norm and the
    /// excitation balance residual.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,re_e,im_e,re_p,im_p,re_s,im_s,re_e_out,im_e_out,out_norm,residual")?;
        for s in self.samples() {
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.3e}",
                s.t, s.e.re, s.e.im, s.p.re, s.p.im, s.s.re, s.s.im, s.e_out.re, s.e_out.im, s.out_norm, s.residual
            )?;
        }
        Ok(())
    }
}

/// Retrieval from S(t1) = `s_init` with no input field.
pub fn simulate_retrieval(
    drive: &ControlDrive,
    params: &MemoryParams,
    tier: ModelTier,
    t1: f64,
    t2: f64,
    s_init: Complex64,
) -> Result<Trajectory> {
    simulate_retrieval_with(drive, params, tier, t1, t2, s_init, &SimOptions::default())
}

pub fn simulate_retrieval_with(
    drive: &ControlDrive,
    params: &MemoryParams,
    tier: ModelTier,
    t1: f64,
    t2: f64,
    s_init: Complex64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if s_init.norm() > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter("|S(t1)| must not exceed 1".into()));
    }
    simulate(drive, params, tier, (t1, t2), s_init, None, opts)
}

/// Storage of `phi_in` from the ground state over the drive's window;
/// returns the trajectory and η_s = |S(t2)|²/∫|E_in|².
pub fn simulate_storage(
    drive: &ControlDrive,
    phi_in: &PulseShape,
    params: &MemoryParams,
    tier: ModelTier,
) -> Result<(Trajectory, f64)> {
    simulate_storage_with(drive, phi_in, params, tier, &SimOptions::default())
}

pub fn simulate_storage_with(
    drive: &ControlDrive,
    phi_in: &PulseShape,
    params: &MemoryParams,
    tier: ModelTier,
    opts: &SimOptions,
) -> Result<(Trajectory, f64)> {
    let traj = simulate(drive, params, tier, drive.window(), Complex64::new(0.0, 0.0), Some(phi_in), opts)?;
    let total = traj.input_norm();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight {
            t1: drive.window().0,
            t2: drive.window().1,
        });
    }
    let eta = traj.final_sample().s.norm_sqr() / total;
    Ok((traj, eta))
}

/// Storage input φ_s(t) = φ*(t1 + t2 − t) for a retrieval target on `window`.
pub fn storage_input(target: &PulseShape, window: (f64, f64)) -> Result<PulseShape> {
    target.reversed_in(window.0, window.1)
}

/// Ω'(t) = Ω*(t1 + t2 − t); impulses move to mirrored times with conjugated phase.
pub fn time_reverse_drive(drive: &ControlDrive, t1: f64, t2: f64) -> Result<ControlDrive> {
    drive.time_reverse(t1, t2)
}

/// η_r = |∫ φ* E_out|² / |S(t1)|².
pub fn overlap_efficiency(traj: &Trajectory, target: &PulseShape) -> Result<f64> {
    let s0 = traj.initial_spin().norm_sqr();
    if !(s0 > 0.0) {
        return Err(Error::InvalidParameter("retrieval needs S(t1) ≠ 0".into()));
    }
    Ok(traj.project(target).norm_sqr() / s0)
}

/// P_γ = 2γ ∫|P|².
pub fn loss_probability(traj: &Trajectory, gamma: f64) -> f64 {
    2.0 * gamma * traj.polarization_integral()
}

/// Reduced-versus-full comparison for one drive.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ValidityReport {
    pub eta_reduced: f64,
    pub eta_full: f64,
    pub gap: f64,
    /// 1/(κτ) for the atom-limited reduction, (1/Γτ)(1 + 1/κτ) for the
    /// cavity-limited one.
    pub predicted_scale: f64,
}

pub fn adiabatic_validity(
    drive: &ControlDrive,
    params: &MemoryParams,
    reduced_tier: ModelTier,
    target: &PulseShape,
) -> Result<ValidityReport> {
    let (t1, t2) = drive.window();
    let one = Complex64::new(1.0, 0.0);
    let reduced = simulate_retrieval(drive, params, reduced_tier, t1, t2, one)?;
    let full = simulate_retrieval(drive, params, ModelTier::Full, t1, t2, one)?;
    let eta_reduced = overlap_efficiency(&reduced, target)?;
    let eta_full = overlap_efficiency(&full, target)?;
    let d = params.derived()?;
    let tau = target.tau();
    let predicted_scale = match reduced_tier {
        ModelTier::CavityLimited | ModelTier::CavityLimitedSpecial => (1.0 / (d.gamma_eff * tau)) * (1.0 + 1.0 / (d.kappa * tau)),
        _ => 1.0 / (d.kappa * tau),
    };
    Ok(ValidityReport {
        eta_reduced,
        eta_full,
        gap: (eta_reduced - eta_full).abs(),
        predicted_scale,
    })
}

#[cfg(test)]
mod tests;
