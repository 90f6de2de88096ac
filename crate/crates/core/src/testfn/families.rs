//! Built-in periodic factor families on `[0,1)^d`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use super::{Factor, FactorFamily};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(self, d: usize, what: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v; d]),
            OneOrMany::Many(v) if v.len() == d => Ok(v),
            OneOrMany::Many(v) => Err(Error::InvalidParameter(format!(
                "{what} has {} components, expected {d}",
                v.len()
            ))),
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(family: &str, params: &Value) -> Result<T> {
    let params = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    serde_json::from_value(params)
        .map_err(|e| Error::InvalidParameter(format!("{family} parameters: {e}")))
}

/// `g ≡ c`.
#[derive(Debug, Clone)]
pub struct Constant {
    pub value: f64,
    pub d: usize,
}

impl Factor for Constant {
    fn family(&self) -> &'static str {
        "constant"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, _u: &[f64]) -> f64 {
        self.value
    }
    fn gradient(&self, _u: &[f64]) -> Vec<f64> {
        vec![0.0; self.d]
    }
    fn laplacian(&self, _u: &[f64]) -> f64 {
        0.0
    }
}

/// `g(u) = a cos(2π m·u + φ) + c`.
#[derive(Debug, Clone)]
pub struct Trig {
    pub amplitude: f64,
    pub mode: Vec<i64>,
    pub phase: f64,
    pub offset: f64,
}

impl Trig {
    pub fn sin(mode: i64) -> Self {
        Self { amplitude: 1.0, mode: vec![mode], phase: -PI / 2.0, offset: 0.0 }
    }

    pub fn cos(mode: i64) -> Self {
        Self { amplitude: 1.0, mode: vec![mode], phase: 0.0, offset: 0.0 }
    }

    fn arg(&self, u: &[f64]) -> f64 {
        let dot: f64 = self.mode.iter().zip(u).map(|(&m, &x)| m as f64 * x).sum();
        TAU * dot + self.phase
    }

    fn mode_norm2(&self) -> f64 {
        self.mode.iter().map(|&m| (m * m) as f64).sum()
    }
}

impl Factor for Trig {
    fn family(&self) -> &'static str {
        "trig"
    }
    fn dim(&self) -> usize {
        self.mode.len()
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.amplitude * self.arg(u).cos() + self.offset
    }
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let s = -self.amplitude * TAU * self.arg(u).sin();
        self.mode.iter().map(|&m| s * m as f64).collect()
    }
    fn laplacian(&self, u: &[f64]) -> f64 {
        -self.amplitude * TAU * TAU * self.mode_norm2() * self.arg(u).cos()
    }
}

/// Range of integer image shifts needed so that dropped Gaussian-tail
/// images contribute less than about `1e-14`.
fn image_range(scale: f64, reach: f64) -> i64 {
    (reach * scale).ceil() as i64 + 1
}

/// Periodised Gaussian `Σ_n exp(-(x + n)² / 2s²)` and its first two derivatives.
fn periodic_gaussian(x: f64, s: f64) -> (f64, f64, f64) {
    let reach = (2.0 * (1e14f64).ln()).sqrt() + 1.0;
    let k = image_range(s, reach);
    let inv = 1.0 / (s * s);
    let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for n in -k..=k {
        let y = x + n as f64;
        let e = (-0.5 * y * y * inv).exp();
        v += e;
        d1 += -y * inv * e;
        d2 += (y * y * inv * inv - inv) * e;
    }
    (v, d1, d2)
}

/// Product of periodised Gaussians centred at `center` with common width.
#[derive(Debug, Clone)]
pub struct Bump {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

impl Bump {
    pub fn new(center: f64, width: f64) -> Self {
        Self { amplitude: 1.0, center: vec![center], width }
    }

    fn axes(&self, u: &[f64]) -> Vec<(f64, f64, f64)> {
        u.iter().zip(&self.center).map(|(&x, &c)| periodic_gaussian(x - c, self.width)).collect()
    }
}

fn product_rule(amplitude: f64, axes: &[(f64, f64, f64)]) -> (f64, Vec<f64>, f64) {
    let value: f64 = axes.iter().map(|a| a.0).product();
    let others = |j: usize| -> f64 {
        axes.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, a)| a.0).product()
    };
    let grad = (0..axes.len()).map(|j| amplitude * axes[j].1 * others(j)).collect();
    let lap = (0..axes.len()).map(|j| axes[j].2 * others(j)).sum::<f64>();
    (amplitude * value, grad, amplitude * lap)
}

impl Factor for Bump {
    fn family(&self) -> &'static str {
        "bump"
    }
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.amplitude * self.axes(u).iter().map(|a| a.0).product::<f64>()
    }
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        product_rule(self.amplitude, &self.axes(u)).1
    }
    fn laplacian(&self, u: &[f64]) -> f64 {
        product_rule(self.amplitude, &self.axes(u)).2
    }
}

/// Unit-`L²` Hermite functions `ψ_0..=ψ_{n+1}` at `y`.
pub fn hermite_functions(n: usize, y: f64) -> Vec<f64> {
    let mut psi = Vec::with_capacity(n + 2);
    psi.push(PI.powf(-0.25) * (-0.5 * y * y).exp());
    psi.push(2f64.sqrt() * y * psi[0]);
    for j in 1..=n {
        let next = (2.0 / (j + 1) as f64).sqrt() * y * psi[j] - (j as f64 / (j + 1) as f64).sqrt() * psi[j - 1];
        psi.push(next);
    }
    psi
}

/// `(ψ_n(y), ψ_n'(y), ψ_n''(y))`.
pub fn hermite_with_derivatives(n: usize, y: f64) -> (f64, f64, f64) {
    let psi = hermite_functions(n, y);
    let prev = if n == 0 { 0.0 } else { psi[n - 1] };
    let d1 = (n as f64 / 2.0).sqrt() * prev - ((n + 1) as f64 / 2.0).sqrt() * psi[n + 1];
    let d2 = (y * y - (2 * n + 1) as f64) * psi[n];
    (psi[n], d1, d2)
}

fn periodic_hermite(n: usize, x: f64, s: f64) -> (f64, f64, f64) {
    let reach = ((2 * n + 1) as f64).sqrt() + 10.0;
    let k = image_range(s, reach);
    let norm = 1.0 / s.sqrt();
    let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for m in -k..=k {
        let y = (x + m as f64) / s;
        let (p, p1, p2) = hermite_with_derivatives(n, y);
        v += p;
        d1 += p1;
        d2 += p2;
    }
    (norm * v, norm * d1 / s, norm * d2 / (s * s))
}

/// Product over axes of periodised Hermite functions `ψ_n((u - c)/s)/√s`.
#[derive(Debug, Clone)]
pub struct Hermite {
    pub index: Vec<usize>,
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Hermite {
    pub fn new(index: usize, center: f64, scale: f64) -> Self {
        Self { index: vec![index], center: vec![center], scale }
    }

    fn axes(&self, u: &[f64]) -> Vec<(f64, f64, f64)> {
        u.iter()
            .zip(&self.center)
            .zip(&self.index)
            .map(|((&x, &c), &n)| periodic_hermite(n, x - c, self.scale))
            .collect()
    }
}

impl Factor for Hermite {
    fn family(&self) -> &'static str {
        "hermite"
    }
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.axes(u).iter().map(|a| a.0).product()
    }
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        product_rule(1.0, &self.axes(u)).1
    }
    fn laplacian(&self, u: &[f64]) -> f64 {
        product_rule(1.0, &self.axes(u)).2
    }
}

pub struct ConstantFamily;
pub struct TrigFamily;
pub struct BumpFamily;
pub struct HermiteFamily;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    #[serde(default = "one")]
    value: f64,
}

#[derive(Deserialize, Clone, Copy, Default)]
#[serde(rename_all = "lowercase")]
enum TrigShape {
    #[default]
    Cos,
    Sin,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrigParams {
    #[serde(default = "one")]
    amplitude: f64,
    mode: OneOrMany<i64>,
    #[serde(default)]
    phase: f64,
    #[serde(default)]
    offset: f64,
    #[serde(default)]
    shape: TrigShape,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BumpParams {
    #[serde(default = "one")]
    amplitude: f64,
    center: OneOrMany<f64>,
    width: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HermiteParams {
    n: OneOrMany<usize>,
    #[serde(default = "half")]
    center: OneOrMany<f64>,
    #[serde(default = "default_scale")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> OneOrMany<f64> {
    OneOrMany::One(0.5)
}

fn default_scale() -> f64 {
    0.1
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite")))
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

impl FactorFamily for ConstantFamily {
    fn name(&self) -> &'static str {
        "constant"
    }
    fn build(&self, params: &Value, d: usize) -> Result<Arc<dyn Factor>> {
        let p: ConstantParams = parse("constant", params)?;
        Ok(Arc::new(Constant { value: finite("value", p.value)?, d }))
    }
}

impl FactorFamily for TrigFamily {
    fn name(&self) -> &'static str {
        "trig"
    }
    fn build(&self, params: &Value, d: usize) -> Result<Arc<dyn Factor>> {
        let p: TrigParams = parse("trig", params)?;
        let shift = match p.shape {
            TrigShape::Cos => 0.0,
            TrigShape::Sin => -PI / 2.0,
        };
        Ok(Arc::new(Trig {
            amplitude: finite("amplitude", p.amplitude)?,
            mode: p.mode.expand(d, "mode")?,
            phase: finite("phase", p.phase)? + shift,
            offset: finite("offset", p.offset)?,
        }))
    }
}

impl FactorFamily for BumpFamily {
    fn name(&self) -> &'static str {
        "bump"
    }
    fn build(&self, params: &Value, d: usize) -> Result<Arc<dyn Factor>> {
        let p: BumpParams = parse("bump", params)?;
        Ok(Arc::new(Bump {
            amplitude: finite("amplitude", p.amplitude)?,
            center: p.center.expand(d, "center")?,
            width: positive("width", p.width)?,
        }))
    }
}

impl FactorFamily for HermiteFamily {
    fn name(&self) -> &'static str {
        "hermite"
    }
    fn build(&self, params: &Value, d: usize) -> Result<Arc<dyn Factor>> {
        let p: HermiteParams = parse("hermite", params)?;
        let index = p.n.expand(d, "n")?;
        if index.iter().any(|&n| n > 64) {
            return Err(Error::InvalidParameter("hermite index above 64".into()));
        }
        Ok(Arc::new(Hermite {
            index,
            center: p.center.expand(d, "center")?,
            scale: positive("scale", p.scale)?,
        }))
    }
}
