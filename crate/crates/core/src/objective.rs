//! `F(theta) = Σ_views D(gamma(theta)) + P(theta)`.

use crate::energy::{prior_with_grad, scene_energy, EnergyConfig, View};
use crate::error::Result;
use crate::mapping::{apply_mapping, mapping_jacobian, Mapping};
use crate::scene::Scene;

#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub template: &'a Scene,
    pub mapping: &'a Mapping,
    pub views: &'a [View],
    pub config: &'a EnergyConfig,
    /// Earlier frames' parameters, oldest first; at most the last two are used.
    pub history: Vec<Vec<f64>>,
}

impl<'a> Objective<'a> {
    pub fn new(template: &'a Scene, mapping: &'a Mapping, views: &'a [View], config: &'a EnergyConfig) -> Self {
        Self {
            template,
            mapping,
            views,
            config,
            history: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mapping.arity(self.template)
    }

    pub fn scene(&self, theta: &[f64]) -> Result<Scene> {
        apply_mapping(self.mapping, theta, self.template)
    }

    fn prior(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let start = self.history.len().saturating_sub(2);
        let mut h: Vec<&[f64]> = self.history[start..].iter().map(|v| v.as_slice()).collect();
        h.push(theta);
        prior_with_grad(&h, self.config)
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        let scene = self.scene(theta)?;
        let (data, _) = scene_energy(&scene, self.views, self.config, false)?;
        Ok(data + self.prior(theta).0)
    }

    pub fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let scene = self.scene(theta)?;
        let (data, grad) = scene_energy(&scene, self.views, self.config, true)?;
        let jac = mapping_jacobian(self.mapping, theta, self.template)?;
        let mut g = jac.pull_back(&grad.unwrap_or_default());
        let (p, pg) = self.prior(theta);
        for (a, b) in g.iter_mut().zip(&pg) {
            *a += b;
        }
        Ok((data + p, g))
    }
}
