//! Analytic derivatives of transmittance, Gaussian visibility and radiance.
//!
//! Ray-space derivatives are taken with respect to the projected parameters
//! `(cbar, mubar, sigmabar)` of each Gaussian on the ray; [`chain_ray_to_world`]
//! maps them back to `(c, mu, sigma)`.
//!
//! Two situations occur for a transmittance sample at depth `s`:
//! - `s` is a fixed depth (point visibility), so only the depth integrals
//!   move with the parameters;
//! - `s = mubar_q + k step sigmabar_q` is one of Gaussian `q`'s own samples,
//!   so moving `q` also moves the upper integration limit. The extra term is
//!   the ray density at `s` times `ds/dmubar_q = 1` or `ds/dsigmabar_q = k step`.

use std::ops::{AddAssign, Mul};

use crate::error::{Error, Result};
use crate::scene::{perpendicular, Gaussian, Ray, RayGaussian, Vec3};
use crate::special::{erf, SQRT_HALF_PI};
use crate::visibility::{gaussian_visibility, transmittance, RayKernel, SampleScheme};

/// A projected (ray-space) parameter of the `p`-th entry of a projected set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayParam {
    Magnitude(usize),
    Mean(usize),
    Sigma(usize),
}

impl RayParam {
    pub fn index(self) -> usize {
        match self {
            RayParam::Magnitude(p) | RayParam::Mean(p) | RayParam::Sigma(p) => p,
        }
    }
}

/// Derivative of something with respect to one Gaussian's ray-space
/// parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RayPartials {
    pub cbar: f64,
    pub mubar: f64,
    pub sigmabar: f64,
}

impl RayPartials {
    pub fn get(&self, param: RayParam) -> f64 {
        match param {
            RayParam::Magnitude(_) => self.cbar,
            RayParam::Mean(_) => self.mubar,
            RayParam::Sigma(_) => self.sigmabar,
        }
    }
}

/// Gradient block of one Gaussian in world space.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradBlock {
    pub magnitude: f64,
    pub center: Vec3,
    pub sigma: f64,
    pub albedo: Vec3,
}

impl GradBlock {
    pub const LEN: usize = 8;

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.magnitude,
            self.center.x,
            self.center.y,
            self.center.z,
            self.sigma,
            self.albedo.x,
            self.albedo.y,
            self.albedo.z,
        ]
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|v| *v == 0.0)
    }
}

impl AddAssign for GradBlock {
    fn add_assign(&mut self, rhs: Self) {
        self.magnitude += rhs.magnitude;
        self.center += rhs.center;
        self.sigma += rhs.sigma;
        self.albedo += rhs.albedo;
    }
}

impl Mul<f64> for GradBlock {
    type Output = GradBlock;
    fn mul(self, k: f64) -> GradBlock {
        GradBlock {
            magnitude: self.magnitude * k,
            center: self.center * k,
            sigma: self.sigma * k,
            albedo: self.albedo * k,
        }
    }
}

/// Gradient with respect to every scene parameter, one block per Gaussian in
/// scene order. Flattened layout per Gaussian: `c, mu.x, mu.y, mu.z, sigma,
/// a.r, a.g, a.b`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradVector {
    pub blocks: Vec<GradBlock>,
}

impl GradVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            blocks: vec![GradBlock::default(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.to_array()).collect()
    }

    pub fn add(&mut self, other: &GradVector) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a += *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }
}

fn check_param(projected: &[RayGaussian], wrt: RayParam) -> Result<()> {
    if wrt.index() >= projected.len() {
        return Err(Error::InvalidParameter(format!(
            "{wrt:?} out of range for {} projected Gaussians",
            projected.len()
        )));
    }
    Ok(())
}

/// Derivative of the optical depth of `g` up to a fixed `s`.
fn depth_partials(g: &RayGaussian, s: f64) -> RayPartials {
    let inv = 1.0 / (std::f64::consts::SQRT_2 * g.sigmabar);
    let z = (s - g.mubar) * inv;
    let z0 = -g.mubar * inv;
    let erf_span = erf(z) - erf(z0);
    let dens_s = g.cbar * (-z * z).exp();
    let dens_0 = g.cbar * (-z0 * z0).exp();
    RayPartials {
        cbar: g.sigmabar * SQRT_HALF_PI * erf_span,
        mubar: dens_0 - dens_s,
        sigmabar: SQRT_HALF_PI * g.cbar * erf_span
            - ((s - g.mubar) * dens_s + g.mubar * dens_0) / g.sigmabar,
    }
}

/// `∂T(s)/∂wrt`. Pass `self_index = Some(q)` when `s` is one of projected
/// Gaussian `q`'s sample positions, so that `s` moves with `q`.
pub fn grad_transmittance(
    projected: &[RayGaussian],
    s: f64,
    wrt: RayParam,
    self_index: Option<usize>,
) -> Result<f64> {
    check_param(projected, wrt)?;
    if let Some(q) = self_index {
        if q >= projected.len() {
            return Err(Error::InvalidParameter(format!("self index {q} out of range")));
        }
    }
    let p = wrt.index();
    let mut d_depth = depth_partials(&projected[p], s).get(wrt);
    if self_index == Some(p) {
        let gq = &projected[p];
        let density: f64 = projected.iter().map(|g| g.density(s)).sum();
        match wrt {
            RayParam::Mean(_) => d_depth += density,
            RayParam::Sigma(_) => d_depth += density * (s - gq.mubar) / gq.sigmabar,
            RayParam::Magnitude(_) => {}
        }
    }
    Ok(-transmittance(projected, s) * d_depth)
}

/// `∂V_q/∂wrt` for the sampled Gaussian visibility.
pub fn grad_gaussian_visibility(
    projected: &[RayGaussian],
    q: usize,
    scheme: &SampleScheme,
    wrt: RayParam,
) -> Result<f64> {
    check_param(projected, wrt)?;
    if q >= projected.len() {
        return Err(Error::InvalidParameter(format!("Gaussian index {q} out of range")));
    }
    let gq = &projected[q];
    let lambda = scheme.step * gq.sigmabar;
    let mut total = 0.0;
    for &k in &scheme.offsets {
        let kl = k as f64 * scheme.step;
        let s = gq.mubar + kl * gq.sigmabar;
        // At its own samples G_q is cbar_q exp(-(k step)^2 / 2): independent of
        // mubar_q and sigmabar_q.
        let shape = (-0.5 * kl * kl).exp();
        let density = gq.cbar * shape;
        let t = transmittance(projected, s);
        let dt = grad_transmittance(projected, s, wrt, Some(q))?;
        total += lambda * dt * density;
        if wrt.index() == q {
            match wrt {
                RayParam::Magnitude(_) => total += lambda * t * shape,
                RayParam::Sigma(_) => total += scheme.step * t * density,
                RayParam::Mean(_) => {}
            }
        }
    }
    Ok(total)
}

/// Ray-space gradient of the radiance `L = Σ_q a_q V_q`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RadianceGradient {
    /// `∂L/∂(cbar_p, mubar_p, sigmabar_p)` per projected Gaussian, one
    /// partials set per colour channel.
    pub geometry: Vec<[RayPartials; 3]>,
    /// `∂L_i/∂a_{q,i} = V_q`.
    pub albedo: Vec<f64>,
}

pub fn grad_radiance(
    projected: &[RayGaussian],
    albedos: &[Vec3],
    scheme: &SampleScheme,
) -> Result<RadianceGradient> {
    if albedos.len() != projected.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} albedos for {} projected Gaussians",
            albedos.len(),
            projected.len()
        )));
    }
    let n = projected.len();
    let mut geometry = vec![[RayPartials::default(); 3]; n];
    let mut albedo = Vec::with_capacity(n);
    for q in 0..n {
        albedo.push(gaussian_visibility(projected, q, scheme));
        for p in 0..n {
            let dv = [
                grad_gaussian_visibility(projected, q, scheme, RayParam::Magnitude(p))?,
                grad_gaussian_visibility(projected, q, scheme, RayParam::Mean(p))?,
                grad_gaussian_visibility(projected, q, scheme, RayParam::Sigma(p))?,
            ];
            for (ch, slot) in geometry[p].iter_mut().enumerate() {
                let a = albedos[q][ch];
                slot.cbar += a * dv[0];
                slot.mubar += a * dv[1];
                slot.sigmabar += a * dv[2];
            }
        }
    }
    Ok(RadianceGradient { geometry, albedo })
}

/// How the magnitude of a Gaussian responds to its size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MagnitudeCoupling {
    /// `c` and `sigma` are independent parameters.
    #[default]
    Independent,
    /// `c sigma` is held at its calibrated value, so `∂c/∂sigma = -c/sigma`.
    Calibrated,
}

/// Maps ray-space partials of one projected Gaussian to world space.
///
/// The magnitude derivative uses `∂cbar/∂c = exp(-d²/(2σ²))`, with `d` the
/// distance from the center to the ray, so it stays defined at `c = 0`.
/// The albedo part of the returned block is zero.
pub fn chain_ray_to_world(
    gaussian: &Gaussian,
    ray: &Ray,
    projected: &RayGaussian,
    partials: &RayPartials,
    coupling: MagnitudeCoupling,
) -> Result<GradBlock> {
    let (_, perp) = perpendicular(gaussian, ray);
    let sigma = gaussian.sigma;
    let inv_s2 = 1.0 / (sigma * sigma);
    let perp2 = perp.norm_squared();
    let falloff = (-0.5 * perp2 * inv_s2).exp();
    let cbar = projected.cbar;

    let mut dcbar_dsigma = cbar * perp2 * inv_s2 / sigma;
    if coupling == MagnitudeCoupling::Calibrated {
        if gaussian.magnitude == 0.0 {
            return Err(Error::Domain(
                "calibrated magnitude coupling needs a nonzero magnitude".into(),
            ));
        }
        // (cbar / c) dc/dsigma with dc/dsigma = -c / sigma.
        dcbar_dsigma -= cbar / sigma;
    }

    Ok(GradBlock {
        magnitude: partials.cbar * falloff,
        center: perp * (-partials.cbar * cbar * inv_s2) + ray.direction * partials.mubar,
        sigma: partials.cbar * dcbar_dsigma + partials.sigmabar,
        albedo: Vec3::zeros(),
    })
}

impl RayKernel {
    /// Accumulates `Σ_q coeff_q ∂V_q/∂(cbar_p, mubar_p, sigmabar_p)` into
    /// `out` (one entry per projected Gaussian). Requires a prior cached
    /// [`RayKernel::forward`] with the same scheme.
    pub fn backward(
        &self,
        scheme: &SampleScheme,
        weights: &[f64],
        coeff: &[f64],
        out: &mut Vec<RayPartials>,
    ) {
        assert!(self.cached, "backward needs a cached forward pass");
        let n = self.projected.len();
        let nk = scheme.offsets.len();
        out.clear();
        out.resize(n, RayPartials::default());

        // Density at the ray origin and the sigma-independent half of the
        // sigma partial, per Gaussian.
        let mut dens0 = Vec::with_capacity(n);
        for (p, g) in self.projected.iter().enumerate() {
            let z0 = -g.mubar * self.inv_width[p];
            dens0.push(g.cbar * (-z0 * z0).exp());
        }

        for q in 0..n {
            let w = coeff[q];
            if w == 0.0 {
                continue;
            }
            let gq = self.projected[q];
            let lambda = scheme.step * gq.sigmabar;
            for (ki, &k) in scheme.offsets.iter().enumerate() {
                let kl = k as f64 * scheme.step;
                let s = gq.mubar + kl * gq.sigmabar;
                let t = self.sample_t[q * nk + ki];
                let shape = weights[ki];
                out[q].cbar += w * lambda * shape * t;
                out[q].sigmabar += w * scheme.step * gq.cbar * shape * t;

                let beta = w * lambda * gq.cbar * shape * t;
                if beta == 0.0 {
                    continue;
                }
                let row = (q * nk + ki) * n;
                let mut density = 0.0;
                for p in 0..n {
                    let g = &self.projected[p];
                    let e = self.erfs[row + p];
                    let z = (s - g.mubar) * self.inv_width[p];
                    let dens_s = g.cbar * (-z * z).exp();
                    let span = e - self.base[p];
                    density += dens_s;
                    let o = &mut out[p];
                    o.cbar -= beta * g.sigmabar * SQRT_HALF_PI * span;
                    o.mubar -= beta * (dens0[p] - dens_s);
                    o.sigmabar -= beta
                        * (SQRT_HALF_PI * g.cbar * span
                            - ((s - g.mubar) * dens_s + g.mubar * dens0[p]) / g.sigmabar);
                }
                out[q].mubar -= beta * density;
                out[q].sigmabar -= beta * kl * density;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::project_to_ray;

    fn rg(cbar: f64, mubar: f64, sigmabar: f64) -> RayGaussian {
        RayGaussian {
            cbar,
            mubar,
            sigmabar,
            source_index: 0,
        }
    }

    fn perturbed(projected: &[RayGaussian], wrt: RayParam, h: f64) -> Vec<RayGaussian> {
        let mut out = projected.to_vec();
        match wrt {
            RayParam::Magnitude(p) => out[p].cbar += h,
            RayParam::Mean(p) => out[p].mubar += h,
            RayParam::Sigma(p) => out[p].sigmabar += h,
        }
        out
    }

    fn central(f: impl Fn(f64) -> f64, h: f64) -> f64 {
        (f(h) - f(-h)) / (2.0 * h)
    }

    fn scene5() -> Vec<RayGaussian> {
        vec![
            rg(0.9, 4.0, 0.6),
            rg(1.7, 4.8, 0.4),
            rg(0.3, 5.5, 1.2),
            rg(2.2, 3.1, 0.3),
            rg(0.6, 6.4, 0.8),
        ]
    }

    fn all_params(n: usize) -> Vec<RayParam> {
        (0..n)
            .flat_map(|p| [RayParam::Magnitude(p), RayParam::Mean(p), RayParam::Sigma(p)])
            .collect()
    }

    fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(a.abs()) || (a - b).abs() <= abs
    }

    #[test]
    fn transmittance_gradient_vanishes_at_origin() {
        let p = scene5();
        for wrt in all_params(p.len()) {
            assert_eq!(grad_transmittance(&p, 0.0, wrt, None).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_depth_mean_gradient_closed_form() {
        let p = vec![rg(1.4, 5.0, 0.8)];
        let s = 4.3;
        let t = transmittance(&p, s);
        let g = |x: f64| (-(x * x) / (2.0 * 0.64)).exp();
        // Moving the Gaussian deeper removes density between 0 and s.
        let expected = -t * 1.4 * (g(5.0) - g(s - 5.0));
        let got = grad_transmittance(&p, s, RayParam::Mean(0), None).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn transmittance_gradients_match_finite_differences() {
        let p = scene5();
        let h = 1e-5;
        for &s in &[2.0, 4.4, 5.9, 9.0] {
            for wrt in all_params(p.len()) {
                let fd = central(|d| transmittance(&perturbed(&p, wrt, d), s), h);
                let an = grad_transmittance(&p, s, wrt, None).unwrap();
                assert!(close(an, fd, 1e-6, 1e-11), "s={s} {wrt:?}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn self_sampled_transmittance_gradients() {
        let p = scene5();
        let h = 1e-5;
        for q in 0..p.len() {
            for kl in [-3.0, -1.0, 0.0] {
                for wrt in all_params(p.len()) {
                    let fd = central(
                        |d| {
                            let moved = perturbed(&p, wrt, d);
                            let s = moved[q].mubar + kl * moved[q].sigmabar;
                            transmittance(&moved, s)
                        },
                        h,
                    );
                    let s = p[q].mubar + kl * p[q].sigmabar;
                    let an = grad_transmittance(&p, s, wrt, Some(q)).unwrap();
                    assert!(close(an, fd, 1e-6, 1e-11), "q={q} {wrt:?}: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn visibility_gradients_match_finite_differences() {
        let scheme = SampleScheme::default();
        let p = scene5();
        let h = 1e-5;
        for q in 0..p.len() {
            for wrt in all_params(p.len()) {
                let fd = central(|d| gaussian_visibility(&perturbed(&p, wrt, d), q, &scheme), h);
                let an = grad_gaussian_visibility(&p, q, &scheme, wrt).unwrap();
                assert!(close(an, fd, 1e-5, 1e-11), "q={q} {wrt:?}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn single_gaussian_visibility_is_shift_invariant() {
        // Far from the origin, sliding a lone Gaussian along the ray leaves
        // its sampled visibility unchanged.
        let scheme = SampleScheme::default();
        let p = vec![rg(1.9, 20.0, 0.7)];
        let an = grad_gaussian_visibility(&p, 0, &scheme, RayParam::Mean(0)).unwrap();
        assert!(an.abs() < 1e-12, "{an}");
        let fd = central(
            |d| gaussian_visibility(&perturbed(&p, RayParam::Mean(0), d), 0, &scheme),
            1e-5,
        );
        assert!(fd.abs() < 1e-9);
    }

    #[test]
    fn distant_faint_neighbour_barely_couples() {
        let scheme = SampleScheme::default();
        let p = vec![rg(1.0, 5.0, 0.5), rg(1e-12, 40.0, 0.5)];
        let d = grad_gaussian_visibility(&p, 0, &scheme, RayParam::Magnitude(1)).unwrap();
        assert!(d.abs() < 1e-9);
    }

    #[test]
    fn invalid_parameter_ids_are_rejected() {
        let p = scene5();
        assert!(grad_transmittance(&p, 1.0, RayParam::Mean(7), None).is_err());
        assert!(grad_gaussian_visibility(&p, 9, &SampleScheme::default(), RayParam::Mean(0)).is_err());
    }

    #[test]
    fn radiance_gradient_properties() {
        let scheme = SampleScheme::default();
        let p = scene5();
        let black = vec![Vec3::zeros(); p.len()];
        let grad = grad_radiance(&p, &black, &scheme).unwrap();
        for g in &grad.geometry {
            for ch in g {
                assert_eq!(*ch, RayPartials::default());
            }
        }
        for q in 0..p.len() {
            assert_eq!(grad.albedo[q], gaussian_visibility(&p, q, &scheme));
        }

        let albedos: Vec<Vec3> = (0..p.len())
            .map(|i| Vec3::new(0.2 * i as f64, 1.0 - 0.15 * i as f64, 0.5))
            .collect();
        let grad = grad_radiance(&p, &albedos, &scheme).unwrap();
        let h = 1e-5;
        for wrt in all_params(p.len()) {
            for ch in 0..3 {
                let fd = central(
                    |d| crate::visibility::radiance(&perturbed(&p, wrt, d), &albedos, &scheme)[ch],
                    h,
                );
                let an = grad.geometry[wrt.index()][ch].get(wrt);
                assert!(close(an, fd, 1e-5, 1e-11), "{wrt:?} ch{ch}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn kernel_backward_matches_scalar_route() {
        let scheme = SampleScheme::default();
        let p = scene5();
        let coeff = [0.3, -1.2, 0.7, 2.0, -0.4];
        let mut kernel = RayKernel::new();
        kernel.load_projected(&p);
        let weights = scheme.sample_weights();
        kernel.forward(&scheme, &weights, true);
        let mut out = Vec::new();
        kernel.backward(&scheme, &weights, &coeff, &mut out);
        for wrt in all_params(p.len()) {
            let reference: f64 = (0..p.len())
                .map(|q| coeff[q] * grad_gaussian_visibility(&p, q, &scheme, wrt).unwrap())
                .sum();
            let got = out[wrt.index()].get(wrt);
            assert!(close(got, reference, 1e-12, 1e-15), "{wrt:?}: {got} vs {reference}");
        }
    }

    fn world_fixture() -> (Gaussian, Ray) {
        (
            Gaussian::new(1.7, Vec3::new(0.4, -0.3, 5.0), 0.8, Vec3::new(1.0, 1.0, 1.0)),
            Ray::new(Vec3::new(0.1, 0.2, -0.5), Vec3::new(0.05, -0.1, 1.0)),
        )
    }

    #[test]
    fn chain_rule_matches_projection_differences() {
        let (g, ray) = world_fixture();
        let h = 1e-6;
        // Unit upstream gradient on each ray-space parameter in turn.
        let units = [
            RayPartials { cbar: 1.0, ..Default::default() },
            RayPartials { mubar: 1.0, ..Default::default() },
            RayPartials { sigmabar: 1.0, ..Default::default() },
        ];
        let pick = |r: &RayGaussian, i: usize| [r.cbar, r.mubar, r.sigmabar][i];
        for (i, unit) in units.iter().enumerate() {
            let rg0 = project_to_ray(&g, &ray, 0);
            let block = chain_ray_to_world(&g, &ray, &rg0, unit, MagnitudeCoupling::Independent).unwrap();
            let fd_param = |f: &dyn Fn(&mut Gaussian, f64)| {
                let mut plus = g;
                f(&mut plus, h);
                let mut minus = g;
                f(&mut minus, -h);
                (pick(&project_to_ray(&plus, &ray, 0), i) - pick(&project_to_ray(&minus, &ray, 0), i)) / (2.0 * h)
            };
            let fd_c = fd_param(&|g, d| g.magnitude += d);
            let fd_s = fd_param(&|g, d| g.sigma += d);
            assert!(close(block.magnitude, fd_c, 1e-6, 1e-12));
            assert!(close(block.sigma, fd_s, 1e-6, 1e-12), "{i}: {} vs {fd_s}", block.sigma);
            for axis in 0..3 {
                let fd_m = fd_param(&|g, d| g.center[axis] += d);
                assert!(close(block.center[axis], fd_m, 1e-6, 1e-12));
            }
        }
    }

    #[test]
    fn chain_rule_special_cases() {
        let g = Gaussian::new(2.0, Vec3::new(0.0, 0.0, 4.0), 0.5, Vec3::zeros());
        let ray = Ray::new(Vec3::zeros(), Vec3::z());
        let rg0 = project_to_ray(&g, &ray, 0);
        let unit_c = RayPartials { cbar: 1.0, ..Default::default() };
        let b = chain_ray_to_world(&g, &ray, &rg0, &unit_c, MagnitudeCoupling::Independent).unwrap();
        assert_eq!(b.sigma, 0.0);
        let unit_mu = RayPartials { mubar: 1.0, ..Default::default() };
        let b = chain_ray_to_world(&g, &ray, &rg0, &unit_mu, MagnitudeCoupling::Independent).unwrap();
        assert_eq!(b.center, ray.direction);

        let mut dead = g;
        dead.magnitude = 0.0;
        let rg_dead = project_to_ray(&dead, &ray, 0);
        assert!(chain_ray_to_world(&dead, &ray, &rg_dead, &unit_c, MagnitudeCoupling::Calibrated).is_err());
    }

    #[test]
    fn calibrated_coupling_matches_dependent_magnitude() {
        // With c = x0 / sigma, d cbar / d sigma along that curve.
        let (g, ray) = world_fixture();
        let x0 = g.magnitude * g.sigma;
        let rg0 = project_to_ray(&g, &ray, 0);
        let unit_c = RayPartials { cbar: 1.0, ..Default::default() };
        let b = chain_ray_to_world(&g, &ray, &rg0, &unit_c, MagnitudeCoupling::Calibrated).unwrap();
        let h = 1e-6;
        let at = |d: f64| {
            let mut m = g;
            m.sigma += d;
            m.magnitude = x0 / m.sigma;
            project_to_ray(&m, &ray, 0).cbar
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        assert!(close(b.sigma, fd, 1e-6, 1e-12), "{} vs {fd}", b.sigma);
    }
}
