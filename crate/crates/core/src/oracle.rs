//! Brute-force quadrature of the Gaussian averages, independent of the
//! closed forms in [`crate::moments`].
//!
//! Integrals run over the truncated range `[-L sigma, L sigma]`, cut at the
//! clipping points `±S` so each piece is smooth, and split further into
//! panels no wider than two (conditional) standard deviations. Each panel uses
//! a Gauss–Legendre rule.
//!
//! The cross moments `<d f(y)>` and `<d y>` have two routes: a reduced one that
//! replaces `d` by its conditional mean `(r / Q) y`, and a full tensor-product
//! integral against the bivariate density. The two must agree.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{clip, MacroState, SystemParams};
use crate::moments::{self, MomentKind};

/// Default acceptance threshold for closed form vs. quadrature.
pub const CHECK_TOLERANCE: f64 = 1e-8;
/// Allowed violation of `r^2 <= sigma_g^2 Q`.
pub const COVARIANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Node budget per axis; each panel gets `max(8, nodes / 10)` points.
    pub nodes: usize,
    /// Truncation half-width in standard deviations.
    pub half_width: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            nodes: 200,
            half_width: 10.0,
        }
    }
}

impl QuadConfig {
    pub fn with_nodes(nodes: usize) -> Self {
        Self {
            nodes,
            ..Self::default()
        }
    }

    fn panel_order(&self) -> usize {
        (self.nodes / 10).max(8)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Legendre recurrence for P_n(x) and its derivative.
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pn1 = if n == 1 { 1.0 } else { p0 };
                dp = nf * (x * pn - pn1) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Quadrature engine for the five Gaussian averages.
#[derive(Debug, Clone)]
pub struct Oracle {
    cfg: QuadConfig,
    rule: GaussLegendre,
}

fn normal_pdf(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

impl Oracle {
    pub fn new(cfg: QuadConfig) -> Self {
        Self {
            rule: GaussLegendre::new(cfg.panel_order()),
            cfg,
        }
    }

    pub fn config(&self) -> &QuadConfig {
        &self.cfg
    }

    /// Panel edges covering `[-L sd, L sd]`, with extra cuts at `cuts`, each
    /// panel at most `max_width` wide.
    fn panels(&self, sd: f64, max_width: f64, cuts: &[f64]) -> Vec<(f64, f64)> {
        let lim = self.cfg.half_width * sd;
        let mut edges = vec![-lim, lim];
        edges.extend(cuts.iter().copied().filter(|c| c.abs() < lim));
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut out = Vec::new();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let pieces = ((b - a) / max_width).ceil().max(1.0) as usize;
            let h = (b - a) / pieces as f64;
            for k in 0..pieces {
                let lo = a + k as f64 * h;
                let hi = if k + 1 == pieces { b } else { lo + h };
                out.push((lo, hi));
            }
        }
        out
    }

    /// `∫ g(x) N(x; 0, var) dx` cut at `cuts`.
    fn expect_1d(&self, var: f64, cuts: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let sd = var.sqrt();
        self.panels(sd, 2.0 * sd, cuts)
            .into_iter()
            .map(|(a, b)| self.rule.integrate(a, b, |x| g(x) * normal_pdf(x, var)))
            .sum()
    }

    fn clip_cuts(s: f64) -> Vec<f64> {
        if s.is_finite() {
            vec![-s, s]
        } else {
            Vec::new()
        }
    }

    /// `<d^2>` over the marginal of `d`.
    pub fn d2(&self, params: &SystemParams) -> f64 {
        self.expect_1d(params.rho2 * params.sigma_g2, &[], |d| d * d)
    }

    /// `<f(y)^2>` over the marginal of `y`.
    pub fn fy2(&self, params: &SystemParams, q: f64) -> f64 {
        let var = params.rho2 * q;
        if var <= 0.0 {
            return 0.0;
        }
        let s = params.saturation;
        self.expect_1d(var, &Self::clip_cuts(s), |y| {
            let f = clip(y, s);
            f * f
        })
    }

    /// `<f(y)^2>` as `S^2 P(|y| > S) + E[y^2 1{|y| <= S}]`, two separate
    /// integrals.
    pub fn fy2_split(&self, params: &SystemParams, q: f64) -> f64 {
        let var = params.rho2 * q;
        let s = params.saturation;
        if var <= 0.0 {
            return 0.0;
        }
        if !s.is_finite() {
            return self.expect_1d(var, &[], |y| y * y);
        }
        let sd = var.sqrt();
        let lim = self.cfg.half_width * sd;
        let integrate = |a: f64, b: f64, g: &dyn Fn(f64) -> f64| -> f64 {
            if b <= a {
                return 0.0;
            }
            let pieces = ((b - a) / (2.0 * sd)).ceil().max(1.0) as usize;
            let h = (b - a) / pieces as f64;
            (0..pieces)
                .map(|k| {
                    let lo = a + k as f64 * h;
                    self.rule.integrate(lo, lo + h, |x| g(x) * normal_pdf(x, var))
                })
                .sum()
        };
        let tail_prob = 2.0 * integrate(s, lim, &|_| 1.0);
        let inner = 2.0 * integrate(0.0, s.min(lim), &|y| y * y);
        s * s * tail_prob + inner
    }

    /// `<y f(y)>` over the marginal of `y`.
    pub fn yfy(&self, params: &SystemParams, q: f64) -> f64 {
        let var = params.rho2 * q;
        if var <= 0.0 {
            return 0.0;
        }
        let s = params.saturation;
        self.expect_1d(var, &Self::clip_cuts(s), |y| y * clip(y, s))
    }

    /// `<d f(y)>` through `E[d | y] = (r / Q) y`.
    pub fn dfy_reduced(&self, params: &SystemParams, state: MacroState) -> f64 {
        if state.q <= 0.0 {
            return 0.0;
        }
        state.r / state.q * self.yfy(params, state.q)
    }

    /// `<d y>` through `E[d | y] = (r / Q) y`.
    pub fn dy_reduced(&self, params: &SystemParams, state: MacroState) -> f64 {
        let var = params.rho2 * state.q;
        if var <= 0.0 {
            return 0.0;
        }
        state.r / state.q * self.expect_1d(var, &[], |y| y * y)
    }

    /// `E[d h(y)]` as a tensor-product integral against the bivariate
    /// density with covariance `rho^2 [[sigma_g^2, r], [r, Q]]`.
    fn cross_2d(&self, params: &SystemParams, state: MacroState, h: impl Fn(f64) -> f64, cuts: &[f64]) -> f64 {
        let rho2 = params.rho2;
        let (sg2, q, r) = (params.sigma_g2, state.q, state.r);
        let det = sg2 * q - r * r;
        if q <= 0.0 {
            return 0.0;
        }
        if det <= COVARIANCE_TOLERANCE * sg2 * q {
            // Rank one: d = (r / Q) y exactly.
            return self.expect_1d(rho2 * q, cuts, |y| (r / q) * y * h(y));
        }
        let norm = 1.0 / (2.0 * PI * rho2 * det.sqrt());
        let sd_y = (rho2 * q).sqrt();
        let sd_d_given_y = (rho2 * det / q).sqrt();
        // The d panels follow the conditional mean (r / Q) y so the ridge of
        // the density is resolved whatever the correlation.
        let d_panels = self.panels(sd_d_given_y, 2.0 * sd_d_given_y, &[]);
        self.panels(sd_y, 2.0 * sd_y, cuts)
            .into_iter()
            .map(|(a, b)| {
                self.rule.integrate(a, b, |y| {
                    let centre = r / q * y;
                    let inner: f64 = d_panels
                        .iter()
                        .map(|&(lo, hi)| {
                            self.rule.integrate(lo, hi, |z| {
                                let d = centre + z;
                                let quad_form = (q * d * d - 2.0 * r * d * y + sg2 * y * y) / (rho2 * det);
                                d * norm * (-0.5 * quad_form).exp()
                            })
                        })
                        .sum();
                    inner * h(y)
                })
            })
            .sum()
    }

    /// `<d f(y)>` by direct 2-D integration.
    pub fn dfy_full(&self, params: &SystemParams, state: MacroState) -> f64 {
        let s = params.saturation;
        self.cross_2d(params, state, |y| clip(y, s), &Self::clip_cuts(s))
    }

    /// `<d y>` by direct 2-D integration.
    pub fn dy_full(&self, params: &SystemParams, state: MacroState) -> f64 {
        self.cross_2d(params, state, |y| y, &[])
    }

    /// Quadrature value of one moment (cross moments via the reduced route).
    pub fn moment(&self, kind: MomentKind, params: &SystemParams, state: MacroState) -> Result<f64> {
        check_covariance(params, state)?;
        Ok(match kind {
            MomentKind::D2 => self.d2(params),
            MomentKind::Fy2 => self.fy2(params, state.q),
            MomentKind::Dfy => self.dfy_reduced(params, state),
            MomentKind::Dy => self.dy_reduced(params, state),
            MomentKind::Yfy => self.yfy(params, state.q),
        })
    }
}

fn check_covariance(params: &SystemParams, state: MacroState) -> Result<()> {
    let r2 = state.r * state.r;
    let bound = params.sigma_g2 * state.q;
    if state.q < 0.0 || r2 - bound > COVARIANCE_TOLERANCE * bound.max(1.0) {
        return Err(Error::Covariance { r2, bound });
    }
    Ok(())
}

/// One-shot quadrature of a single moment.
pub fn quad_moment(kind: MomentKind, params: &SystemParams, state: MacroState, cfg: &QuadConfig) -> Result<f64> {
    Oracle::new(*cfg).moment(kind, params, state)
}

/// Relative discrepancy; zero when both values are exactly zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Tensor grid of parameter points for [`check_all`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub q: Vec<f64>,
    /// `r` as a fraction of `sigma_g sqrt(Q)`.
    pub r_frac: Vec<f64>,
    #[serde(rename = "S")]
    pub saturation: Vec<f64>,
    pub rho2: Vec<f64>,
    pub sigma_g2: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            q: vec![0.1, 1.0, 10.0],
            r_frac: vec![-0.9, 0.0, 0.9],
            saturation: vec![0.0, 0.5, 1.0, 2.0, 5.0, f64::INFINITY],
            rho2: vec![0.5, 1.0, 2.0],
            sigma_g2: vec![0.5, 1.0, 2.0],
        }
    }
}

impl ParamGrid {
    pub fn with_saturation(self, saturation: Vec<f64>) -> Self {
        Self { saturation, ..self }
    }

    pub fn points(&self) -> Vec<(SystemParams, MacroState)> {
        let mut out = Vec::new();
        for &rho2 in &self.rho2 {
            for &sigma_g2 in &self.sigma_g2 {
                for &s in &self.saturation {
                    for &q in &self.q {
                        for &frac in &self.r_frac {
                            let r = frac * (sigma_g2 * q).sqrt();
                            out.push((
                                SystemParams::new(rho2, sigma_g2, 0.0, s, 0.5),
                                MacroState::new(q, r),
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstPoint {
    pub rho2: f64,
    pub sigma_g2: f64,
    #[serde(rename = "S", serialize_with = "crate::model::serialize_saturation")]
    pub saturation: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub r: f64,
    pub closed_form: f64,
    pub quadrature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindReport {
    pub kind: MomentKind,
    pub max_rel_err: f64,
    pub worst: Option<WorstPoint>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub tolerance: f64,
    pub points: usize,
    pub nodes: usize,
    pub kinds: Vec<KindReport>,
    pub pass: bool,
}

/// Compares the closed forms in [`moments`] against quadrature over `grid`.
pub fn check_all(grid: &ParamGrid, cfg: &QuadConfig) -> Result<CheckReport> {
    check_all_with(grid, cfg, moments::closed_form)
}

/// Like [`check_all`] but against an arbitrary implementation of the closed
/// forms.
pub fn check_all_with<F>(grid: &ParamGrid, cfg: &QuadConfig, closed: F) -> Result<CheckReport>
where
    F: Fn(MomentKind, &SystemParams, MacroState) -> f64,
{
    let oracle = Oracle::new(*cfg);
    let points = grid.points();
    let mut kinds = Vec::with_capacity(MomentKind::ALL.len());
    for kind in MomentKind::ALL {
        let mut max_rel_err = 0.0_f64;
        let mut worst = None;
        for (params, state) in &points {
            let quad = oracle.moment(kind, params, *state)?;
            let cf = closed(kind, params, *state);
            let err = relative_error(cf, quad);
            let err = if err.is_nan() { f64::INFINITY } else { err };
            if worst.is_none() || err > max_rel_err {
                max_rel_err = err;
                worst = Some(WorstPoint {
                    rho2: params.rho2,
                    sigma_g2: params.sigma_g2,
                    saturation: params.saturation,
                    q: state.q,
                    r: state.r,
                    closed_form: cf,
                    quadrature: quad,
                });
            }
        }
        kinds.push(KindReport {
            kind,
            max_rel_err,
            worst,
            pass: max_rel_err <= CHECK_TOLERANCE,
        });
    }
    let pass = kinds.iter().all(|k| k.pass);
    Ok(CheckReport {
        tolerance: CHECK_TOLERANCE,
        points: points.len(),
        nodes: cfg.nodes,
        kinds,
        pass,
    })
}
