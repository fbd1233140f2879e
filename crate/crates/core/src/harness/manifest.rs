use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{parse_epsilon, BpdaBackward};
use crate::data::TransformStage;
use crate::error::{Error, Result};
use crate::nn::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Bpda,
}

/// One attack condition as written in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub name: String,
    pub kind: AttackKind,
    /// `k/255` or a decimal.
    pub epsilon: String,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub random_init: bool,
    /// Defaults to 2/255 (the full budget for FGSM).
    #[serde(default)]
    pub step_size: Option<String>,
    /// PGD only: differentiate through the deployed transform (an attacker
    /// who holds the key). Otherwise the gradient ignores the defense.
    #[serde(default)]
    pub through_transform: bool,
    /// BPDA only: `random`, `true`, or a key file path.
    #[serde(default)]
    pub guessed_key: Option<String>,
    #[serde(default)]
    pub bpda_backward: BpdaBackward,
}

fn default_steps() -> usize {
    20
}

impl AttackSpec {
    pub fn pgd(name: &str, epsilon: &str, steps: usize, random_init: bool) -> Self {
        Self {
            name: name.to_string(),
            kind: AttackKind::Pgd,
            epsilon: epsilon.to_string(),
            steps,
            random_init,
            step_size: None,
            through_transform: false,
            guessed_key: None,
            bpda_backward: BpdaBackward::Identity,
        }
    }

    pub fn bpda(name: &str, epsilon: &str, steps: usize, random_init: bool, guessed_key: &str) -> Self {
        Self {
            kind: AttackKind::Bpda,
            guessed_key: Some(guessed_key.to_string()),
            ..Self::pgd(name, epsilon, steps, random_init)
        }
    }

    pub fn with_epsilon(&self, epsilon: &str) -> Self {
        Self {
            epsilon: epsilon.to_string(),
            ..self.clone()
        }
    }

    pub fn epsilon_value(&self) -> Result<f64> {
        parse_epsilon(&self.epsilon)
    }

    pub fn validate(&self, defended: bool) -> Result<()> {
        let eps = self.epsilon_value()?;
        if let Some(s) = &self.step_size {
            parse_epsilon(s)?;
        }
        if self.kind == AttackKind::Fgsm && eps > 0.0 && self.step_size.is_some() {
            return Err(Error::Config(format!("attack {}: fgsm takes no step size", self.name)));
        }
        match (self.kind, &self.guessed_key) {
            (AttackKind::Bpda, None) => Err(Error::Config(format!("attack {}: bpda needs guessed_key", self.name))),
            (AttackKind::Bpda, Some(_)) if !defended => Err(Error::Config(format!(
                "attack {}: bpda needs a defended model (set key_file)",
                self.name
            ))),
            (AttackKind::Fgsm | AttackKind::Pgd, Some(_)) => Err(Error::Config(format!(
                "attack {}: guessed_key only applies to bpda",
                self.name
            ))),
            _ => Ok(()),
        }
    }
}

/// Everything needed to reproduce a run: model, data subsets, defense,
/// optimizer schedule and the attack conditions.
///
/// Stored as TOML. Relative paths are resolved against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentManifest {
    pub name: String,
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Secret key of the defense; absent for an undefended model.
    pub key_file: Option<PathBuf>,
    pub block_size: usize,
    pub transform_stage: TransformStage,
    pub augment: bool,
    /// Leading samples of each split to use; `None` means all of it.
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    /// Leading test samples each attack condition is evaluated on.
    pub attack_subset: Option<usize>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_step_epochs: usize,
    pub lr_gamma: f64,
    #[serde(rename = "attack")]
    pub attacks: Vec<AttackSpec>,
    /// Budgets for the accuracy-vs-epsilon sweep.
    pub sweep_epsilons: Vec<String>,
    /// Name of the attack in `attack` used as the sweep template.
    pub sweep_attack: Option<String>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl ExperimentManifest {
    /// CPU-sized defaults: desk_small on 5k/1k images for 30 epochs.
    pub fn desk_scale() -> Self {
        Self {
            name: "experiment".to_string(),
            variant: Variant::DeskSmall,
            epochs: 30,
            batch_size: 128,
            seed: 0,
            key_file: None,
            block_size: 4,
            transform_stage: TransformStage::Post,
            augment: true,
            train_subset: Some(5000),
            test_subset: Some(1000),
            attack_subset: Some(500),
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_step_epochs: 12,
            lr_gamma: 0.1,
            attacks: Vec::new(),
            sweep_epsilons: Vec::new(),
            sweep_attack: None,
            base_dir: PathBuf::new(),
        }
    }

    /// The full recipe: ResNet18 on all of CIFAR-10 for 160 epochs, lr
    /// dropping tenfold every 40 epochs. Hours of CPU time.
    pub fn full_paper_scale() -> Self {
        Self {
            variant: Variant::Resnet18,
            epochs: 160,
            train_subset: None,
            test_subset: None,
            attack_subset: None,
            lr_step_epochs: 40,
            ..Self::desk_scale()
        }
    }

    /// Switches an existing manifest to the full recipe, keeping its name,
    /// seed, defense and attacks.
    pub fn into_full_paper_scale(self) -> Self {
        let full = Self::full_paper_scale();
        Self {
            variant: full.variant,
            epochs: full.epochs,
            train_subset: None,
            test_subset: None,
            attack_subset: None,
            lr: full.lr,
            momentum: full.momentum,
            weight_decay: full.weight_decay,
            lr_step_epochs: full.lr_step_epochs,
            lr_gamma: full.lr_gamma,
            ..self
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: Self = toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.base_dir = base_dir.into();
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, dir)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    /// Resolves `path` against the manifest directory.
    pub fn resolve(&self, path: impl AsRef<Path>) -> PathBuf {
        let path = path.as_ref();
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn key_path(&self) -> Option<PathBuf> {
        self.key_file.as_ref().map(|p| self.resolve(p))
    }

    /// SHA-256 over the manifest's canonical JSON form, as written (paths
    /// unresolved), so equal manifests hash equally on any machine.
    pub fn sha256(&self) -> String {
        let json = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.block_size == 0 {
            return Err(Error::Config("block_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr_gamma > 0.0 && self.lr_step_epochs > 0) {
            return Err(Error::Config("lr, lr_gamma and lr_step_epochs must be positive".into()));
        }
        for (field, v) in [
            ("train_subset", self.train_subset),
            ("test_subset", self.test_subset),
            ("attack_subset", self.attack_subset),
        ] {
            if v == Some(0) {
                return Err(Error::Config(format!("{field} must be positive")));
            }
        }
        if let Some(p) = self.key_path() {
            if !p.is_file() {
                return Err(Error::Config(format!("key file {} does not exist", p.display())));
            }
        }
        let mut names = HashSet::new();
        for a in &self.attacks {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Config(format!("duplicate attack name {:?}", a.name)));
            }
            a.validate(self.key_file.is_some())?;
            if let Some(g) = &a.guessed_key {
                if g != "random" && g != "true" && !self.resolve(g).is_file() {
                    return Err(Error::Config(format!("guessed key file {g} does not exist")));
                }
            }
        }
        for e in &self.sweep_epsilons {
            parse_epsilon(e)?;
        }
        if let Some(s) = &self.sweep_attack {
            if !names.contains(s.as_str()) {
                return Err(Error::Config(format!("sweep_attack {s:?} names no attack")));
            }
        } else if !self.sweep_epsilons.is_empty() {
            return Err(Error::Config("sweep_epsilons given without sweep_attack".into()));
        }
        Ok(())
    }

    pub fn attack(&self, name: &str) -> Option<&AttackSpec> {
        self.attacks.iter().find(|a| a.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "m4"
variant = "desk_small"
epochs = 3
seed = 7
block_size = 4
transform_stage = "pre"

[[attack]]
name = "pgd20"
kind = "pgd"
epsilon = "8/255"

[[attack]]
name = "bpda40r"
kind = "bpda"
epsilon = "8/255"
steps = 40
random_init = true
guessed_key = "random"
bpda_backward = "exact-guessed"
"#;

    #[test]
    fn parses_with_defaults() {
        let m = ExperimentManifest::parse(SAMPLE, "").unwrap();
        assert_eq!(m.epochs, 3);
        assert_eq!(m.batch_size, 128);
        assert_eq!(m.transform_stage, TransformStage::Pre);
        assert_eq!(m.attacks[0].steps, 20);
        assert_eq!(m.attacks[1].bpda_backward, BpdaBackward::ExactGuessed);
        assert_eq!(m.train_subset, Some(5000));
    }

    #[test]
    fn bpda_without_defense_is_rejected() {
        let m = ExperimentManifest::parse(SAMPLE, "").unwrap();
        let err = m.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentManifest::parse("epoch = 3", "").is_err());
        assert!(ExperimentManifest::parse("variant = \"vgg\"", "").is_err());
    }

    #[test]
    fn missing_key_file_fails_validation() {
        let m = ExperimentManifest {
            key_file: Some("does/not/exist.key".into()),
            ..ExperimentManifest::desk_scale()
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn hash_ignores_base_dir_and_tracks_content() {
        let a = ExperimentManifest::parse(SAMPLE, "/a").unwrap();
        let b = ExperimentManifest::parse(SAMPLE, "/b").unwrap();
        assert_eq!(a.sha256(), b.sha256());
        let c = ExperimentManifest { seed: 8, ..a.clone() };
        assert_ne!(a.sha256(), c.sha256());
    }

    #[test]
    fn toml_round_trip() {
        let m = ExperimentManifest::parse(SAMPLE, "").unwrap();
        let again = ExperimentManifest::parse(&m.to_toml().unwrap(), "").unwrap();
        assert_eq!(m, again);
    }
}
