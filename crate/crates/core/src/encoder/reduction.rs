use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::math::{affine_into, transpose_mul_add};
use crate::random_projection::{build_projector, ProjectorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMode {
    Rp,
    Fc,
}

impl ReductionMode {
    pub fn name(self) -> &'static str {
        match self {
            ReductionMode::Rp => "rp",
            ReductionMode::Fc => "fc",
        }
    }
}

/// How FC weights are initialised when switching away from RP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcInit {
    /// Start from the RP matrix (outputs unchanged at the switch).
    CopyRp,
    /// Fresh `N(0, 1)` weights, zero bias.
    Fresh,
}

/// `h′ = W h + b`. In RP mode `W` is a fixed random projection and `b = 0`;
/// in FC mode both are trainable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionLayer {
    pub mode: ReductionMode,
    pub input_dim: usize,
    pub output_dim: usize,
    /// `output_dim × input_dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub rp_spec: Option<ProjectorSpec>,
}

impl ReductionLayer {
    /// RP layer whose weight is the realised projector matrix.
    pub fn random_projection(spec: ProjectorSpec) -> Result<Self, EncoderError> {
        let projector = build_projector(spec)?;
        Ok(Self {
            mode: ReductionMode::Rp,
            input_dim: spec.input_dim,
            output_dim: spec.output_dim,
            weight: projector.jacobian().data,
            bias: vec![0.0; spec.output_dim],
            rp_spec: Some(spec),
        })
    }

    /// Trainable FC layer with `N(0, 1)` weights and zero bias.
    pub fn fully_connected(input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            mode: ReductionMode::Fc,
            input_dim,
            output_dim,
            weight: (0..input_dim * output_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect(),
            bias: vec![0.0; output_dim],
            rp_spec: None,
        }
    }

    pub fn trainable(&self) -> bool {
        self.mode == ReductionMode::Fc
    }

    pub fn reduce(&self, h: &[f64]) -> Result<Vec<f64>, EncoderError> {
        if h.len() != self.input_dim {
            return Err(EncoderError::ShapeMismatch {
                what: "reduction input",
                expected: self.input_dim,
                actual: h.len(),
            });
        }
        let mut out = vec![0.0; self.output_dim];
        affine_into(&self.weight, self.output_dim, self.input_dim, h, &self.bias, &mut out);
        Ok(out)
    }

    /// Gradient wrt the input, `Wᵀ g`.
    pub(crate) fn backward_input(&self, grad_out: &[f64]) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.input_dim];
        transpose_mul_add(&self.weight, self.output_dim, self.input_dim, grad_out, &mut grad_in);
        grad_in
    }

    /// Turns an RP layer into a trainable FC layer initialised from `R`.
    pub fn switch_to_fc(&self) -> Result<Self, EncoderError> {
        if self.mode != ReductionMode::Rp {
            return Err(EncoderError::AlreadyFc);
        }
        Ok(Self {
            mode: ReductionMode::Fc,
            ..self.clone()
        })
    }

    /// Turns an RP layer into a freshly initialised FC layer.
    pub fn switch_to_fresh_fc(&self, rng: &mut impl Rng) -> Result<Self, EncoderError> {
        if self.mode != ReductionMode::Rp {
            return Err(EncoderError::AlreadyFc);
        }
        let mut fc = Self::fully_connected(self.input_dim, self.output_dim, rng);
        fc.rp_spec = self.rp_spec;
        Ok(fc)
    }

    pub fn switch(&self, init: FcInit, rng: &mut impl Rng) -> Result<Self, EncoderError> {
        match init {
            FcInit::CopyRp => self.switch_to_fc(),
            FcInit::Fresh => self.switch_to_fresh_fc(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_projection::Method;
    use crate::rng::stream_rng;

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn rp_mode_is_bitwise_the_projector() {
        let spec = ProjectorSpec::new(Method::Gaussian, 40, 8, 240);
        let layer = ReductionLayer::random_projection(spec).unwrap();
        let p = build_projector(spec).unwrap();
        let mut rng = stream_rng(0, 0);
        for _ in 0..50 {
            let h: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(bits(&layer.reduce(&h).unwrap()), bits(&p.project(&h).unwrap()));
        }
        assert!(!layer.trainable());
        assert!(layer.bias.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn degenerate_fc_is_constant() {
        let mut rng = stream_rng(0, 0);
        let mut fc = ReductionLayer::fully_connected(5, 3, &mut rng);
        fc.weight.fill(0.0);
        fc.bias = vec![1.5, -2.0, 0.25];
        assert_eq!(fc.reduce(&[9.0, 8.0, 7.0, 6.0, 5.0]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn switch_preserves_outputs_and_rejects_fc() {
        let spec = ProjectorSpec::new(Method::Gaussian, 20, 4, 3);
        let rp = ReductionLayer::random_projection(spec).unwrap();
        let fc = rp.switch_to_fc().unwrap();
        assert_eq!(fc.mode, ReductionMode::Fc);
        assert!(fc.trainable());
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let h: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(bits(&rp.reduce(&h).unwrap()), bits(&fc.reduce(&h).unwrap()));
        }
        assert_eq!(fc.switch_to_fc().unwrap_err(), EncoderError::AlreadyFc);
    }

    #[test]
    fn wrong_input_length() {
        let rp = ReductionLayer::random_projection(ProjectorSpec::new(Method::Gaussian, 6, 2, 0)).unwrap();
        assert!(matches!(rp.reduce(&[0.0; 5]), Err(EncoderError::ShapeMismatch { .. })));
    }
}
