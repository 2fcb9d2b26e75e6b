//! Shared-private architecture: one shared extractor, one private extractor
//! per source, an optional target extractor, a sentiment classifier over the
//! concatenated `[shared | private]` features and a (K+1)-way domain
//! discriminator.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::checkpoint::{self, NamedBlock};
use crate::numeric::layers::{relu, relu_backward, softmax, Affine};
use crate::numeric::{Matrix, ParamBlock, Parameters};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub num_sources: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 5000,
            hidden_dim: 1000,
            feature_dim: 128,
            num_sources: 3,
            num_classes: 2,
        }
    }
}

impl ModelConfig {
    /// Sources plus the target.
    pub fn num_domains(&self) -> usize {
        self.num_sources + 1
    }

    pub fn target_domain(&self) -> DomainLabel {
        DomainLabel(self.num_sources)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("feature_dim", self.feature_dim),
            ("num_sources", self.num_sources),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        Ok(())
    }
}

/// Domain index: `0..K` are sources in corpus order, `K` is the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DomainLabel(pub usize);

impl DomainLabel {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which extractor feeds the private half of the classifier input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrivatePath {
    Source(usize),
    Target,
}

/// Any extractor of the model, used for routing gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExtractorId {
    Shared,
    Private(PrivatePath),
}

/// Two-layer ReLU MLP: input -> hidden -> feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Extractor<T> {
    pub hidden: Affine<T>,
    pub output: Affine<T>,
}

/// Intermediate values of one extractor forward pass.
#[derive(Clone, Debug)]
pub struct ExtractorTrace<T> {
    pub input: Matrix<T>,
    pub hidden_pre: Matrix<T>,
    pub hidden: Matrix<T>,
    pub output_pre: Matrix<T>,
    pub output: Matrix<T>,
}

impl<T: Scalar> Extractor<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            hidden: Affine::he(cfg.input_dim, cfg.hidden_dim, rng),
            output: Affine::he(cfg.hidden_dim, cfg.feature_dim, rng),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            hidden: Affine::zeros(cfg.input_dim, cfg.hidden_dim),
            output: Affine::zeros(cfg.hidden_dim, cfg.feature_dim),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let h = relu(&self.hidden.forward(x)?);
        Ok(relu(&self.output.forward(&h)?))
    }

    pub fn forward_trace(&self, x: &Matrix<T>) -> Result<ExtractorTrace<T>> {
        let hidden_pre = self.hidden.forward(x)?;
        let hidden = relu(&hidden_pre);
        let output_pre = self.output.forward(&hidden)?;
        let output = relu(&output_pre);
        Ok(ExtractorTrace {
            input: x.clone(),
            hidden_pre,
            hidden,
            output_pre,
            output,
        })
    }

    /// Accumulates parameter gradients given `dL/d(features)`.
    pub fn backward(&mut self, trace: &ExtractorTrace<T>, grad_features: &Matrix<T>) -> Result<()> {
        let g = relu_backward(&trace.output_pre, grad_features)?;
        let gh = self
            .output
            .backward(&trace.hidden, &g, true, true)?
            .expect("input gradient requested");
        let g = relu_backward(&trace.hidden_pre, &gh)?;
        self.hidden.backward(&trace.input, &g, true, false)?;
        Ok(())
    }

    fn blocks<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamBlock<'a, T>>) {
        push_affine(&mut self.hidden, &format!("{prefix}.hidden"), out);
        push_affine(&mut self.output, &format!("{prefix}.output"), out);
    }
}

fn push_affine<'a, T>(layer: &'a mut Affine<T>, prefix: &str, out: &mut Vec<ParamBlock<'a, T>>) {
    out.push(ParamBlock {
        name: format!("{prefix}.weight"),
        value: &mut layer.weight,
        grad: &mut layer.grad_weight,
    });
    out.push(ParamBlock {
        name: format!("{prefix}.bias"),
        value: &mut layer.bias,
        grad: &mut layer.grad_bias,
    });
}

/// Parameter subsets trained by different phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Shared,
    Private,
    Target,
    Classifier,
    Discriminator,
}

impl ParamGroup {
    pub fn of_block(name: &str) -> ParamGroup {
        match name.split('.').next() {
            Some("shared") => ParamGroup::Shared,
            Some("private") => ParamGroup::Private,
            Some("target") => ParamGroup::Target,
            Some("classifier") => ParamGroup::Classifier,
            _ => ParamGroup::Discriminator,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SharedPrivateModel<T> {
    config: ModelConfig,
    pub shared: Extractor<T>,
    pub private: Vec<Extractor<T>>,
    pub target: Option<Extractor<T>>,
    pub classifier: Affine<T>,
    pub discriminator: Affine<T>,
}

impl<T: Scalar> SharedPrivateModel<T> {
    /// Randomly initialized model without a target extractor.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let shared = Extractor::new(&config, rng);
        let private = (0..config.num_sources)
            .map(|_| Extractor::new(&config, rng))
            .collect();
        let classifier = Affine::he(2 * config.feature_dim, config.num_classes, rng);
        let discriminator = Affine::he(config.feature_dim, config.num_domains(), rng);
        Ok(Self {
            config,
            shared,
            private,
            target: None,
            classifier,
            discriminator,
        })
    }

    /// All-zero model, the starting point for loading checkpoints.
    pub fn zeros(config: ModelConfig, with_target: bool) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            shared: Extractor::zeros(&config),
            private: (0..config.num_sources).map(|_| Extractor::zeros(&config)).collect(),
            target: with_target.then(|| Extractor::zeros(&config)),
            classifier: Affine::zeros(2 * config.feature_dim, config.num_classes),
            discriminator: Affine::zeros(config.feature_dim, config.num_domains()),
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Adds (or replaces) a freshly initialized target extractor.
    pub fn init_target_extractor<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.target = Some(Extractor::new(&self.config, rng));
    }

    pub fn has_target_extractor(&self) -> bool {
        self.target.is_some()
    }

    pub fn extractor(&self, id: ExtractorId) -> Result<&Extractor<T>> {
        match id {
            ExtractorId::Shared => Ok(&self.shared),
            ExtractorId::Private(PrivatePath::Source(j)) => self.private.get(j).ok_or_else(|| {
                Error::Config(format!(
                    "source index {j} out of range for {} sources",
                    self.config.num_sources
                ))
            }),
            ExtractorId::Private(PrivatePath::Target) => self
                .target
                .as_ref()
                .ok_or_else(|| Error::Config("model has no target extractor".into())),
        }
    }

    pub fn extractor_mut(&mut self, id: ExtractorId) -> Result<&mut Extractor<T>> {
        let k = self.config.num_sources;
        match id {
            ExtractorId::Shared => Ok(&mut self.shared),
            ExtractorId::Private(PrivatePath::Source(j)) => self
                .private
                .get_mut(j)
                .ok_or_else(|| Error::Config(format!("source index {j} out of range for {k} sources"))),
            ExtractorId::Private(PrivatePath::Target) => self
                .target
                .as_mut()
                .ok_or_else(|| Error::Config("model has no target extractor".into())),
        }
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(Error::dim("model input", self.config.input_dim, x.cols()));
        }
        Ok(())
    }

    pub fn extract_shared(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        self.shared.forward(x)
    }

    pub fn extract_private(&self, path: PrivatePath, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        self.extractor(ExtractorId::Private(path))?.forward(x)
    }

    /// Class logits of C over `[z_shared | z_private]`.
    pub fn classifier_logits(&self, z_shared: &Matrix<T>, z_private: &Matrix<T>) -> Result<Matrix<T>> {
        let fd = self.config.feature_dim;
        if z_shared.cols() != fd || z_private.cols() != fd {
            return Err(Error::dim(
                "classify",
                format!("two blocks of width {fd}"),
                format!("{} and {}", z_shared.cols(), z_private.cols()),
            ));
        }
        if z_shared.rows() != z_private.rows() {
            return Err(Error::dim("classify batch", z_shared.rows(), z_private.rows()));
        }
        self.classifier.forward(&Matrix::hconcat(z_shared, z_private)?)
    }

    pub fn classify(&self, z_shared: &Matrix<T>, z_private: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(softmax(&self.classifier_logits(z_shared, z_private)?))
    }

    pub fn discriminate(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        if z.cols() != self.config.feature_dim {
            return Err(Error::dim("discriminate", self.config.feature_dim, z.cols()));
        }
        Ok(softmax(&self.discriminator.forward(z)?))
    }

    /// Class distribution of every source path on `x`: `ĉ_1 .. ĉ_K`.
    pub fn source_predictions(&self, x: &Matrix<T>) -> Result<Vec<Matrix<T>>> {
        let zs = self.extract_shared(x)?;
        (0..self.config.num_sources)
            .map(|j| {
                let zp = self.private[j].forward(x)?;
                self.classify(&zs, &zp)
            })
            .collect()
    }

    /// Class distribution through the target path `C(E_s(x), E_t(x))`.
    pub fn target_path_predictions(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let zs = self.extract_shared(x)?;
        let zt = self.extract_private(PrivatePath::Target, x)?;
        self.classify(&zs, &zt)
    }

    /// Parameter blocks restricted to the given groups.
    pub fn blocks_in(&mut self, groups: &[ParamGroup]) -> Vec<ParamBlock<'_, T>> {
        self.param_blocks()
            .into_iter()
            .filter(|b| groups.contains(&ParamGroup::of_block(&b.name)))
            .collect()
    }

    /// Snapshot of every parameter block, in a stable order.
    pub fn named_parameters(&self) -> Vec<NamedBlock<T>> {
        let mut copy = self.clone();
        copy.param_blocks()
            .into_iter()
            .map(|b| (b.name, b.value.clone()))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.named_parameters())
    }

    /// Loads a checkpoint written by [`SharedPrivateModel::save`]. The target
    /// extractor is restored when the checkpoint contains one.
    pub fn load(config: ModelConfig, path: impl AsRef<Path>) -> Result<Self> {
        let blocks = checkpoint::load::<T>(path)?;
        Self::from_blocks(config, blocks)
    }

    pub fn from_blocks(config: ModelConfig, blocks: Vec<NamedBlock<T>>) -> Result<Self> {
        let with_target = blocks.iter().any(|(n, _)| n.starts_with("target."));
        let mut model = Self::zeros(config, with_target)?;
        let mut map: std::collections::HashMap<String, Matrix<T>> = blocks.into_iter().collect();
        for b in model.param_blocks() {
            let m = map
                .remove(&b.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing block `{}`", b.name)))?;
            if m.shape() != b.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "block `{}` has shape {:?}, model expects {:?}",
                    b.name,
                    m.shape(),
                    b.value.shape()
                )));
            }
            *b.value = m;
        }
        if let Some(extra) = map.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected block `{extra}`")));
        }
        Ok(model)
    }
}

impl<T: Scalar> Parameters<T> for SharedPrivateModel<T> {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_, T>> {
        let mut out = Vec::new();
        self.shared.blocks("shared", &mut out);
        for (j, e) in self.private.iter_mut().enumerate() {
            e.blocks(&format!("private.{j}"), &mut out);
        }
        if let Some(t) = self.target.as_mut() {
            t.blocks("target", &mut out);
        }
        push_affine(&mut self.classifier, "classifier", &mut out);
        push_affine(&mut self.discriminator, "discriminator", &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            input_dim: 12,
            hidden_dim: 8,
            feature_dim: 5,
            num_sources: 3,
            num_classes: 2,
        }
    }

    fn random_x(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn zero_input_gives_bias_only_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = SharedPrivateModel::<f64>::new(small(), &mut rng).unwrap();
        let x = Matrix::zeros(2, 12);
        // He init has zero biases, so the output is exactly zero.
        assert!(m.extract_shared(&x).unwrap().as_slice().iter().all(|&v| v == 0.0));
        m.shared.hidden.bias.fill(0.3);
        m.shared.output.bias.fill(-0.1);
        let a = m.extract_shared(&x).unwrap();
        let b = m.extract_shared(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.row(0), a.row(1));
        let p = m.extract_private(PrivatePath::Source(1), &x).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shapes_and_private_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = SharedPrivateModel::<f64>::new(small(), &mut rng).unwrap();
        for batch in [1, 4, 9] {
            let x = random_x(&mut rng, batch, 12);
            assert_eq!(m.extract_shared(&x).unwrap().shape(), (batch, 5));
            assert_eq!(m.extract_private(PrivatePath::Source(2), &x).unwrap().shape(), (batch, 5));
        }
        let x = random_x(&mut rng, 1, 12);
        let p0 = m.extract_private(PrivatePath::Source(0), &x).unwrap();
        let p1 = m.extract_private(PrivatePath::Source(1), &x).unwrap();
        assert_ne!(p0, p1);
        assert!(matches!(
            m.extract_private(PrivatePath::Target, &x),
            Err(Error::Config(_))
        ));
        assert!(m.extract_shared(&Matrix::zeros(1, 11)).is_err());
    }

    #[test]
    fn zeroed_heads_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = SharedPrivateModel::<f64>::new(small(), &mut rng).unwrap();
        m.classifier = Affine::zeros(10, 2);
        m.discriminator = Affine::zeros(5, 4);
        let x = random_x(&mut rng, 3, 12);
        let zs = m.extract_shared(&x).unwrap();
        let zp = m.extract_private(PrivatePath::Source(0), &x).unwrap();
        let c = m.classify(&zs, &zp).unwrap();
        assert!(c.as_slice().iter().all(|&v| v == 0.5));
        let d = m.discriminate(&zs).unwrap();
        assert_eq!(d.cols(), 4);
        assert!(d.as_slice().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn concatenation_order_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = SharedPrivateModel::<f64>::new(small(), &mut rng).unwrap();
        let x = random_x(&mut rng, 2, 12);
        let zs = m.extract_shared(&x).unwrap();
        let zp = m.extract_private(PrivatePath::Source(0), &x).unwrap();
        assert_ne!(m.classify(&zs, &zp).unwrap(), m.classify(&zp, &zs).unwrap());
        assert!(m.classify(&zs, &Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn single_source_prediction_is_the_private_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ModelConfig {
            num_sources: 1,
            ..small()
        };
        let m = SharedPrivateModel::<f64>::new(cfg, &mut rng).unwrap();
        let x = random_x(&mut rng, 3, 12);
        let preds = m.source_predictions(&x).unwrap();
        assert_eq!(preds.len(), 1);
        let direct = m
            .classify(
                &m.extract_shared(&x).unwrap(),
                &m.extract_private(PrivatePath::Source(0), &x).unwrap(),
            )
            .unwrap();
        assert_eq!(preds[0], direct);
    }

    #[test]
    fn updating_one_private_extractor_leaves_the_rest() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = SharedPrivateModel::<f64>::new(small(), &mut rng).unwrap();
        let x = random_x(&mut rng, 2, 12);
        let before_p1 = m.extract_private(PrivatePath::Source(1), &x).unwrap();
        let before_s = m.extract_shared(&x).unwrap();
        let before_d = m.discriminate(&before_s).unwrap();
        for b in m.param_blocks().into_iter().filter(|b| b.name.starts_with("private.0.")) {
            b.value.as_mut_slice().iter_mut().for_each(|v| *v += 0.25);
        }
        assert_eq!(m.extract_private(PrivatePath::Source(1), &x).unwrap(), before_p1);
        assert_eq!(m.extract_shared(&x).unwrap(), before_s);
        assert_eq!(m.discriminate(&before_s).unwrap(), before_d);
    }

    #[test]
    fn block_groups() {
        assert_eq!(ParamGroup::of_block("private.2.hidden.weight"), ParamGroup::Private);
        assert_eq!(ParamGroup::of_block("discriminator.bias"), ParamGroup::Discriminator);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = SharedPrivateModel::<f64>::new(small(), &mut rng).unwrap();
        assert_eq!(m.blocks_in(&[ParamGroup::Discriminator]).len(), 2);
        assert_eq!(m.blocks_in(&[ParamGroup::Private]).len(), 12);
        m.init_target_extractor(&mut rng);
        assert_eq!(m.blocks_in(&[ParamGroup::Target]).len(), 4);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut m = SharedPrivateModel::<f64>::new(small(), &mut rng).unwrap();
        m.init_target_extractor(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        m.save(&path).unwrap();
        let back = SharedPrivateModel::<f64>::load(small(), &path).unwrap();
        assert_eq!(back, m);
        let x = random_x(&mut rng, 3, 12);
        assert_eq!(back.source_predictions(&x).unwrap(), m.source_predictions(&x).unwrap());
        assert_eq!(
            back.target_path_predictions(&x).unwrap(),
            m.target_path_predictions(&x).unwrap()
        );

        let wrong = ModelConfig {
            feature_dim: 6,
            ..small()
        };
        assert!(SharedPrivateModel::<f64>::load(wrong, &path).is_err());
    }
}
