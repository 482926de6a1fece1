//! Builds tokenizer and classifier backends from a run configuration.

use anyhow::{bail, Context, Result};
use emoclass::config::{BackendKind, RunConfig};
use emoclass::encode::{TokenizerBackend, WordHashTokenizer};
use emoclass::trainer::{ClassifierBackend, ReferenceClassifier};

pub struct Backends {
    pub tokenizer: Box<dyn TokenizerBackend>,
    pub classifier: Box<dyn ClassifierBackend>,
}

pub fn build(config: &RunConfig) -> Result<Backends> {
    match config.backend {
        BackendKind::Reference => {
            let tokenizer = WordHashTokenizer::new(config.vocab_size, true)?;
            let classifier =
                ReferenceClassifier::new(config.vocab_size as usize, config.embedding_dim, config.train.seed)?;
            Ok(Backends {
                tokenizer: Box::new(tokenizer),
                classifier: Box::new(classifier),
            })
        }
        BackendKind::PretrainedAdapter => {
            let Some(command) = config.pretrained_worker.as_deref() else {
                bail!("the pretrained-adapter backend needs `pretrained_worker`, e.g. --set \"pretrained_worker=python3 tools/pretrained_worker.py\"");
            };
            let (tokenizer, classifier) = emoclass::pretrained::connect(
                command,
                config.pretrained_model.as_deref(),
                config.train.seed,
            )
            .context("pretrained-adapter capability probe failed")?;
            log::info!("pretrained worker ready: {}", classifier.capabilities().fingerprint);
            Ok(Backends {
                tokenizer: Box::new(tokenizer),
                classifier: Box::new(classifier),
            })
        }
    }
}
