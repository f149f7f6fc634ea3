//! The four LMI families and their registry.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::GainSet;
use crate::modal::ModalModel;
use crate::sdp::VarShape;

use super::augmented::{assemble_augmented, AugmentedMatrices};
use super::builder::BlockBuilder;
use super::instance::{DecisionVar, InstanceMeta, LmiConstraint, LmiInstance, Sense, DEFAULT_STRICTNESS};

/// Smallest decay rate used by the delayed families; a requested `δ = 0`
/// is replaced by this so that `δ₁ < δ₀` holds strictly.
pub const DELTA_FLOOR: f64 = 1e-9;


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBounds {
    pub r: f64,
    pub theta_m: f64,
    pub tau_m: f64,
}

impl DelayBounds {
    pub fn validate(&self) -> Result<()> {
        let Self { r, theta_m, tau_m } = *self;
        if !(r >= 0.0 && theta_m > 0.0 && tau_m > 0.0) || !(r.is_finite() && theta_m.is_finite() && tau_m.is_finite()) {
            return Err(Error::Domain(format!(
                "need r >= 0 and positive thetaM, tauM, all finite; got r={r}, thetaM={theta_m}, tauM={tau_m}"
            )));
        }
        Ok(())
    }
}

/// Inputs shared by every family. `delta0` and `delays` are ignored by the
/// delay-free family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub delta: f64,
    pub delta0: f64,
    pub delays: DelayBounds,
    pub strictness: f64,
}

impl FamilyParams {
    pub fn delay_free(delta: f64) -> Self {
        Self {
            delta,
            delta0: delta,
            delays: DelayBounds { r: 0.0, theta_m: 0.0, tau_m: 0.0 },
            strictness: DEFAULT_STRICTNESS,
        }
    }

    pub fn delayed(delta: f64, delta0: f64, delays: DelayBounds) -> Self {
        Self { delta, delta0, delays, strictness: DEFAULT_STRICTNESS }
    }

    /// `(δ, δ₁)` with the floor applied to `δ`.
    pub fn rates(&self) -> (f64, f64) {
        let delta = self.delta.max(DELTA_FLOOR);
        (delta, self.delta0 - delta)
    }
}

/// One LMI family: assembles an instance for a given observer dimension.
pub trait LmiFamily: Send + Sync {
    fn id(&self) -> &'static str;
    fn description(&self) -> &'static str;
    /// Whether the delay bounds and `δ₀` matter.
    fn is_delayed(&self) -> bool;
    fn assemble(&self, model: &ModalModel, gains: &GainSet, n: usize, params: &FamilyParams) -> Result<LmiInstance>;
}

struct DelayFree;
struct KnownDelay;
struct Predictor;
struct UnknownDelayPredictor;

impl LmiFamily for DelayFree {
    fn id(&self) -> &'static str {
        "thm1"
    }
    fn description(&self) -> &'static str {
        "delay-free observer-based controller, reduced order"
    }
    fn is_delayed(&self) -> bool {
        false
    }
    fn assemble(&self, model: &ModalModel, gains: &GainSet, n: usize, params: &FamilyParams) -> Result<LmiInstance> {
        assemble_thm1(model, gains, n, params.delta).map(|i| with_strictness(i, params.strictness))
    }
}

impl LmiFamily for KnownDelay {
    fn id(&self) -> &'static str {
        "thm2"
    }
    fn description(&self) -> &'static str {
        "delayed input and output, static observer-based controller"
    }
    fn is_delayed(&self) -> bool {
        true
    }
    fn assemble(&self, model: &ModalModel, gains: &GainSet, n: usize, params: &FamilyParams) -> Result<LmiInstance> {
        let (delta, delta1) = params.rates();
        assemble_thm2(model, gains, n, &params.delays, delta, delta1).map(|i| with_strictness(i, params.strictness))
    }
}

impl LmiFamily for Predictor {
    fn id(&self) -> &'static str {
        "thm3"
    }
    fn description(&self) -> &'static str {
        "predictor compensating the constant input delay, known input delay"
    }
    fn is_delayed(&self) -> bool {
        true
    }
    fn assemble(&self, model: &ModalModel, gains: &GainSet, n: usize, params: &FamilyParams) -> Result<LmiInstance> {
        let (delta, delta1) = params.rates();
        assemble_thm3(model, gains, n, &params.delays, delta, delta1).map(|i| with_strictness(i, params.strictness))
    }
}

impl LmiFamily for UnknownDelayPredictor {
    fn id(&self) -> &'static str {
        "thm4"
    }
    fn description(&self) -> &'static str {
        "predictor with unknown time-varying input delay, full observer error"
    }
    fn is_delayed(&self) -> bool {
        true
    }
    fn assemble(&self, model: &ModalModel, gains: &GainSet, n: usize, params: &FamilyParams) -> Result<LmiInstance> {
        let (delta, delta1) = params.rates();
        assemble_thm4(model, gains, n, &params.delays, delta, delta1).map(|i| with_strictness(i, params.strictness))
    }
}

fn with_strictness(mut inst: LmiInstance, strictness: f64) -> LmiInstance {
    inst.strictness = strictness;
    inst
}

/// Families by id (`thm1` … `thm4`).
#[derive(Clone)]
pub struct FamilyRegistry {
    families: BTreeMap<String, Arc<dyn LmiFamily>>,
}

impl FamilyRegistry {
    pub fn with_defaults() -> Self {
        let mut reg = Self { families: BTreeMap::new() };
        reg.register(Arc::new(DelayFree));
        reg.register(Arc::new(KnownDelay));
        reg.register(Arc::new(Predictor));
        reg.register(Arc::new(UnknownDelayPredictor));
        reg
    }

    pub fn register(&mut self, family: Arc<dyn LmiFamily>) {
        self.families.insert(family.id().to_string(), family);
    }

    /// Accepts `thm3` or a bare number `3`.
    pub fn get(&self, id: &str) -> Result<Arc<dyn LmiFamily>> {
        let key = if id.chars().all(|c| c.is_ascii_digit()) { format!("thm{id}") } else { id.to_string() };
        self.families.get(&key).cloned().ok_or_else(|| Error::UnknownStrategy { kind: "theorem", name: id.to_string() })
    }

    pub fn ids(&self) -> Vec<String> {
        self.families.keys().cloned().collect()
    }
}

impl Default for FamilyRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

fn tail_norm(model: &ModalModel, n: usize) -> Result<f64> {
    let tail = model.tail_norm_sq(n)?;
    if !(tail > 0.0) {
        return Err(Error::Domain(format!("tail norm of the output weight vanishes at N={n}")));
    }
    Ok(tail)
}

/// The ζ row and column are always scaled by `‖c‖_N` (a congruence), which
/// turns the `‖c‖_N^{−2}` entry into an O(1) one. Without it the constant
/// part, and with it the strictness margin, grows like `‖c‖_N^{−2}`.
fn zeta_scaling(tail: f64) -> Option<f64> {
    Some(tail.sqrt())
}

fn sym_var(name: &str, order: usize) -> DecisionVar {
    DecisionVar { name: name.into(), shape: VarShape::Symmetric { order }, positive: true }
}

fn pos_scalar(name: &str) -> DecisionVar {
    DecisionVar { name: name.into(), shape: VarShape::Scalar, positive: true }
}

pub fn assemble_thm1(model: &ModalModel, gains: &GainSet, n: usize, delta: f64) -> Result<LmiInstance> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("decay rate must be finite and nonnegative, got {delta}")));
    }
    let aug = assemble_augmented(model, gains, n, 0.0)?;
    let tail = tail_norm(model, n)?;
    let lam = model.lambda(n + 1);
    let gap = lam - model.q - delta;
    if gap <= 0.0 {
        return Err(Error::Domain(format!("lambda_(N+1) = {lam} must exceed q + delta = {}", model.q + delta)));
    }
    let d = aug.f0.nrows();
    let vars = vec![sym_var("P0", d), pos_scalar("alpha")];
    let (p, alpha) = (0, 1);
    let (x, zeta, w) = (0, 1, 2);
    let eye = DMatrix::identity(d, d);
    let mut b = BlockBuilder::new(&[d, 1, 1]);
    b.var(p, 1.0, x, &eye, x, &aug.f0);
    b.var_diag(p, 2.0 * delta, x);
    b.scalar(alpha, x, x, &(aug.cal_k0.transpose() * &aug.cal_k0 * (2.0 / (PI * PI * n as f64))));
    b.var(p, 1.0, x, &eye, zeta, &aug.cal_l0);
    b.constant_scalar(zeta, zeta, -2.0 * gap / tail);
    b.constant_scalar(zeta, w, 1.0);
    b.scalar_value(alpha, w, w, -tail / lam);
    let scaling = zeta_scaling(tail);
    if let Some(s) = scaling {
        b.rescale_block(zeta, s);
    }
    b.rescale_block(w, (lam / tail).sqrt());
    Ok(LmiInstance {
        vars,
        constraints: vec![b.finish("main", Sense::NegativeDefinite)],
        strictness: DEFAULT_STRICTNESS,
        meta: InstanceMeta {
            theorem: "thm1".into(),
            n,
            n0: gains.n0,
            delta,
            zeta_scaling: scaling,
            ..InstanceMeta::default()
        },
    })
}

/// Data distinguishing the three delayed families.
struct DelayedData<'a> {
    theorem: &'static str,
    f: &'a DMatrix<f64>,
    cal_l: &'a DMatrix<f64>,
    cal_c: &'a DMatrix<f64>,
    cal_b: &'a DMatrix<f64>,
    cal_k: &'a DMatrix<f64>,
    /// `P₀𝓑` appears in the `𝓚₀Υ_r` column.
    b_in_xi: bool,
    /// `𝓑` appears in the `Υ_r` slot of `Λ`.
    b_in_lambda_r: bool,
}

// variable indices for the delayed families
const P: usize = 0;
const S2: usize = 1;
const R2: usize = 2;
const S0: usize = 3;
const R0: usize = 4;
const S1: usize = 5;
const R1: usize = 6;
const ALPHA: usize = 7;
const ALPHA1: usize = 8;
const ALPHA2: usize = 9;
const G1: usize = 10;
const G2: usize = 11;

// η blocks
const X: usize = 0;
const ZETA: usize = 1;
const UY: usize = 2;
const QY: usize = 3;
const KUU: usize = 4;
const KUR: usize = 5;
const KQU: usize = 6;

fn delayed_vars(d: usize) -> Vec<DecisionVar> {
    vec![
        sym_var("P0", d),
        sym_var("S2", d),
        sym_var("R2", d),
        pos_scalar("S0"),
        pos_scalar("R0"),
        pos_scalar("S1"),
        pos_scalar("R1"),
        pos_scalar("alpha"),
        pos_scalar("alpha1"),
        pos_scalar("alpha2"),
        DecisionVar { name: "G1".into(), shape: VarShape::Scalar, positive: false },
        DecisionVar { name: "G2".into(), shape: VarShape::Full { rows: d, cols: d }, positive: false },
    ]
}

fn check_rates(delta: f64, delta1: f64, delays: &DelayBounds) -> Result<f64> {
    delays.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("decay rate must be positive, got {delta}")));
    }
    if !(delta1 > 0.0 && delta1.is_finite()) {
        return Err(Error::Domain(format!("need 0 < delta1 < delta0, got delta1={delta1}")));
    }
    Ok(delta + delta1)
}

fn assemble_delayed(
    model: &ModalModel,
    gains: &GainSet,
    n: usize,
    delays: &DelayBounds,
    delta: f64,
    delta1: f64,
    data: DelayedData<'_>,
) -> Result<LmiInstance> {
    let delta0 = check_rates(delta, delta1, delays)?;
    let tail = tail_norm(model, n)?;
    let lam = model.lambda(n + 1);
    let DelayBounds { r, theta_m, tau_m } = *delays;
    let eps_r = (-2.0 * delta0 * r).exp();
    let eps_m = (-2.0 * delta0 * tau_m).exp();
    let eps_rm = (-2.0 * delta0 * (r + theta_m)).exp();
    let pi2n = PI * PI * n as f64;

    let d = data.f.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let kt = data.cal_k.transpose();
    let ktk = &kt * data.cal_k;
    let lc = data.cal_l * data.cal_c;

    // (a) [[R1, G1], [G1, R1]] ⪰ 0
    let mut a = BlockBuilder::new(&[1, 1]);
    a.scalar_value(R1, 0, 0, 1.0);
    a.scalar_value(R1, 1, 1, 1.0);
    a.scalar_value(G1, 0, 1, 1.0);

    // (b) [[R2, G2], [G2ᵀ, R2]] ⪰ 0
    let mut bb = BlockBuilder::new(&[d, d]);
    bb.var_diag(R2, 1.0, 0);
    bb.var_diag(R2, 1.0, 1);
    bb.var_identity(G2, 1.0, 0, 1);

    // (c) tail modes
    let mut c = BlockBuilder::new(&[1, 1, 1, 1]);
    c.constant_scalar(0, 0, -lam + model.q + delta0);
    for k in 1..4 {
        c.constant_scalar(0, k, 1.0);
    }
    c.scalar_value(ALPHA, 1, 1, -2.0 / lam);
    c.scalar_value(ALPHA1, 2, 2, -2.0 / lam);
    c.scalar_value(ALPHA2, 3, 3, -2.0 / lam);
    // the α-diagonal is O(1/λ) next to an O(λ) corner; balance it so the
    // relative margin does not swamp the critical eigenvalue
    for k in 1..4 {
        c.rescale_block(k, lam.sqrt());
    }

    // (d) main inequality over η = [X, ζ, Υy, Qy, KΥu, KΥr, KQu]
    let mut m = BlockBuilder::new(&[d, 1, d, d, 1, 1, 1]);
    // Φ
    m.var(P, 1.0, X, &eye, X, data.f);
    m.var_diag(P, 2.0 * delta, X);
    m.scalar(ALPHA, X, X, &(&ktk * (2.0 / pi2n)));
    m.scalar(S0, X, X, &(&ktk * (1.0 - eps_r)));
    m.scalar(S1, X, X, &(&ktk * (eps_r - eps_rm)));
    m.var_diag(S2, 1.0 - eps_m, X);
    // Θ
    m.var(P, 1.0, X, &eye, ZETA, data.cal_l);
    m.constant_scalar(ZETA, ZETA, -2.0 * delta1 / tail);
    // Σ₁
    m.var(P, 1.0, X, &eye, UY, &lc);
    m.var_identity(P, -2.0 * delta1, X, UY);
    m.var_identity(S2, -eps_m, X, UY);
    m.var_identity(S2, -eps_m, X, QY);
    // Σ₂
    m.var(P, 1.0, X, &eye, KUU, data.cal_b);
    m.scalar(S1, X, KUU, &(&kt * -eps_rm));
    if data.b_in_xi {
        m.var(P, 1.0, X, &eye, KUR, data.cal_b);
    }
    m.scalar(S0, X, KUR, &(&kt * -eps_r));
    m.scalar(S1, X, KUR, &(&kt * (eps_r - eps_rm)));
    m.scalar(S1, X, KQU, &(&kt * -eps_rm));
    // Γ₁
    m.var_diag(P, -2.0 * delta1, UY);
    m.var_diag(R2, -eps_m, UY);
    m.var_diag(S2, -eps_m, UY);
    m.var_identity(S2, -eps_m, UY, QY);
    m.var_identity(G2, -eps_m, UY, QY);
    m.var_diag(R2, -eps_m, QY);
    m.var_diag(S2, -eps_m, QY);
    // Γ₂
    m.scalar_value(R1, KUU, KUU, -eps_rm);
    m.scalar_value(S1, KUU, KUU, -eps_rm);
    m.scalar_value(ALPHA1, KUU, KUU, 2.0 / pi2n);
    m.scalar_value(S1, KUU, KUR, -eps_rm);
    m.scalar_value(S1, KUU, KQU, -eps_rm);
    m.scalar_value(G1, KUU, KQU, -eps_rm);
    m.scalar_value(ALPHA2, KUR, KUR, 2.0 / pi2n);
    m.scalar_value(R0, KUR, KUR, -eps_r);
    m.scalar_value(S0, KUR, KUR, -eps_r);
    m.scalar_value(S1, KUR, KUR, eps_r - eps_rm);
    m.scalar_value(S1, KUR, KQU, -eps_rm);
    m.scalar_value(R1, KQU, KQU, -eps_rm);
    m.scalar_value(S1, KQU, KQU, -eps_rm);
    // Λᵀ[𝓚ᵀ(r²R₀ + θ²R₁)𝓚 + τ²R₂]Λ
    let order = m.order();
    let mut lambda = DMatrix::zeros(d, order);
    lambda.view_mut((0, m.offset(X)), (d, d)).copy_from(data.f);
    lambda.view_mut((0, m.offset(ZETA)), (d, 1)).copy_from(data.cal_l);
    lambda.view_mut((0, m.offset(UY)), (d, d)).copy_from(&lc);
    lambda.view_mut((0, m.offset(KUU)), (d, 1)).copy_from(data.cal_b);
    if data.b_in_lambda_r {
        lambda.view_mut((0, m.offset(KUR)), (d, 1)).copy_from(data.cal_b);
    }
    let kl = data.cal_k * &lambda;
    let klkl = kl.transpose() * &kl;
    m.scalar_full(R0, &(&klkl * (r * r)));
    m.scalar_full(R1, &(&klkl * (theta_m * theta_m)));
    m.var_quadratic(R2, tau_m * tau_m, &lambda);
    let scaling = zeta_scaling(tail);
    if let Some(s) = scaling {
        m.rescale_block(ZETA, s);
    }

    let constraints: Vec<LmiConstraint> = vec![
        a.finish("park-scalar", Sense::PositiveSemidefinite),
        bb.finish("park-matrix", Sense::PositiveSemidefinite),
        c.finish("tail", Sense::NegativeDefinite),
        m.finish("main", Sense::NegativeDefinite),
    ];
    Ok(LmiInstance {
        vars: delayed_vars(d),
        constraints,
        strictness: DEFAULT_STRICTNESS,
        meta: InstanceMeta {
            theorem: data.theorem.into(),
            n,
            n0: gains.n0,
            delta,
            delta0: Some(delta0),
            delta1: Some(delta1),
            r: Some(r),
            theta_m: Some(theta_m),
            tau_m: Some(tau_m),
            zeta_scaling: scaling,
        },
    })
}

pub fn assemble_thm2(
    model: &ModalModel,
    gains: &GainSet,
    n: usize,
    delays: &DelayBounds,
    delta: f64,
    delta1: f64,
) -> Result<LmiInstance> {
    let aug = assemble_augmented(model, gains, n, delays.r)?;
    assemble_delayed(
        model,
        gains,
        n,
        delays,
        delta,
        delta1,
        DelayedData {
            theorem: "thm2",
            f: &aug.f0,
            cal_l: &aug.cal_l0,
            cal_c: &aug.cal_c0,
            cal_b: &aug.cal_b0,
            cal_k: &aug.cal_k0,
            b_in_xi: true,
            b_in_lambda_r: true,
        },
    )
}

pub fn assemble_thm3(
    model: &ModalModel,
    gains: &GainSet,
    n: usize,
    delays: &DelayBounds,
    delta: f64,
    delta1: f64,
) -> Result<LmiInstance> {
    let aug = assemble_augmented(model, gains, n, delays.r)?;
    check_predictor_consistency(&aug, delays.r);
    assemble_delayed(
        model,
        gains,
        n,
        delays,
        delta,
        delta1,
        DelayedData {
            theorem: "thm3",
            f: &aug.bar_f0,
            cal_l: &aug.bar_cal_l0,
            cal_c: &aug.cal_c0,
            cal_b: &aug.bar_cal_b0,
            cal_k: &aug.cal_k0,
            b_in_xi: false,
            b_in_lambda_r: false,
        },
    )
}

pub fn assemble_thm4(
    model: &ModalModel,
    gains: &GainSet,
    n: usize,
    delays: &DelayBounds,
    delta: f64,
    delta1: f64,
) -> Result<LmiInstance> {
    let aug = assemble_augmented(model, gains, n, delays.r)?;
    assemble_delayed(
        model,
        gains,
        n,
        delays,
        delta,
        delta1,
        DelayedData {
            theorem: "thm4",
            f: &aug.bar_f,
            cal_l: &aug.bar_cal_l,
            cal_c: &aug.cal_c,
            cal_b: &aug.bar_cal_b,
            cal_k: &aug.cal_k,
            b_in_xi: false,
            b_in_lambda_r: false,
        },
    )
}

fn check_predictor_consistency(aug: &AugmentedMatrices, r: f64) {
    if r == 0.0 {
        assert_eq!(aug.bar_f0, aug.f0, "zero horizon predictor must leave the closed loop unchanged");
    }
}
