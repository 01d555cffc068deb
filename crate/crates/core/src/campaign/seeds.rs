use std::path::Path;

use super::{CampaignConfig, CampaignError};
use crate::corpus::{build_vocab, generalize_text, ReverseMap, Schema, TokenSequence, Vocab};
use crate::encoder::{load_checkpoint, mlm_pretrain, save_checkpoint, EncoderConfig, MlmModel, PretrainReport};
use crate::grammar::Dialect;

#[derive(Debug, Clone)]
pub struct SeedEntry {
    /// The seed as written in the corpus.
    pub raw: String,
    pub dialect: Dialect,
    /// Canonical tokens with schema identifiers replaced by placeholders.
    pub seq: TokenSequence,
    pub reverse: ReverseMap,
}

/// Seeds of both dialects tokenized against one vocabulary.
#[derive(Debug, Clone)]
pub struct SeedBank {
    pub vocab: Vocab,
    pub schema: Schema,
    pub entries: Vec<SeedEntry>,
}

fn generalized(lines: &[String], dialect: Dialect, schema: &Schema) -> Vec<(String, String, ReverseMap)> {
    lines
        .iter()
        .map(|raw| {
            let (text, reverse) = match dialect {
                Dialect::SqlFragment => generalize_text(raw, schema),
                Dialect::MarkupScript => (raw.clone(), ReverseMap::default()),
            };
            (raw.clone(), text, reverse)
        })
        .collect()
}

impl SeedBank {
    /// Builds a vocabulary over the generalized seeds, then tokenizes them.
    pub fn build(sqli: &[String], xss: &[String], schema: Schema, ngram_threshold: usize) -> Result<Self, CampaignError> {
        let sql = generalized(sqli, Dialect::SqlFragment, &schema);
        let markup = generalized(xss, Dialect::MarkupScript, &schema);
        let texts: Vec<&str> = sql.iter().chain(&markup).map(|(_, t, _)| t.as_str()).collect();
        let vocab = build_vocab(&texts, Some(ngram_threshold))?;
        Self::assemble(vocab, schema, sql, markup)
    }

    /// Tokenizes seeds against an existing vocabulary, e.g. one loaded with
    /// a checkpoint. Unknown pieces become `[UNK]`.
    pub fn with_vocab(vocab: Vocab, sqli: &[String], xss: &[String], schema: Schema) -> Result<Self, CampaignError> {
        let sql = generalized(sqli, Dialect::SqlFragment, &schema);
        let markup = generalized(xss, Dialect::MarkupScript, &schema);
        Self::assemble(vocab, schema, sql, markup)
    }

    fn assemble(
        vocab: Vocab,
        schema: Schema,
        sql: Vec<(String, String, ReverseMap)>,
        markup: Vec<(String, String, ReverseMap)>,
    ) -> Result<Self, CampaignError> {
        let mut entries = Vec::new();
        let tagged = sql.into_iter().map(|x| (Dialect::SqlFragment, x)).chain(markup.into_iter().map(|x| (Dialect::MarkupScript, x)));
        for (dialect, (raw, text, reverse)) in tagged {
            match vocab.tokenize(&text) {
                Ok(base) => entries.push(SeedEntry { raw, dialect, seq: vocab.merge_ngrams(&base), reverse }),
                Err(e) => log::warn!("skipping seed {raw:?}: {e}"),
            }
        }
        Ok(Self { vocab, schema, entries })
    }

    /// Indices of the seeds of one dialect, in corpus order.
    pub fn pool(&self, dialect: Dialect) -> Vec<usize> {
        self.entries.iter().enumerate().filter(|(_, e)| e.dialect == dialect).map(|(i, _)| i).collect()
    }

    /// Token id sequences for masked-language-model pretraining.
    pub fn corpus_ids(&self) -> Vec<Vec<usize>> {
        self.entries.iter().map(|e| e.seq.ids()).collect()
    }

    /// Length in tokens of the longest seed.
    pub fn longest(&self) -> usize {
        self.entries.iter().map(|e| e.seq.len()).max().unwrap_or(0)
    }
}

/// A pretrained encoder and MLM head together with the vocabulary its ids
/// refer to.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub vocab: Vocab,
    pub model: MlmModel,
    pub report: Option<PretrainReport>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Meta {
    kind: String,
    encoder: EncoderConfig,
    vocab: String,
    epoch_losses: Vec<f64>,
}

const KIND: &str = "mlm";

/// Pretrains on the bank's seeds with the campaign's model sizes and
/// schedule.
pub fn pretrain(bank: &SeedBank, cfg: &CampaignConfig) -> Result<Pretrained, CampaignError> {
    let enc = cfg.model.encoder(bank.vocab.len());
    let (model, report) = mlm_pretrain(&bank.corpus_ids(), enc, &cfg.pretraining)?;
    Ok(Pretrained { vocab: bank.vocab.clone(), model, report: Some(report) })
}

pub fn save_pretrained(path: &Path, p: &Pretrained) -> Result<(), CampaignError> {
    let mut vocab = Vec::new();
    p.vocab.write_to(&mut vocab)?;
    let meta = Meta {
        kind: KIND.into(),
        encoder: p.model.config().clone(),
        vocab: String::from_utf8(vocab).expect("vocabulary text is UTF-8"),
        epoch_losses: p.report.as_ref().map(|r| r.epoch_losses.clone()).unwrap_or_default(),
    };
    let meta = serde_json::to_string(&meta).expect("metadata serializes");
    save_checkpoint(path, &meta, &p.model.store)?;
    Ok(())
}

pub fn load_pretrained(path: &Path) -> Result<Pretrained, CampaignError> {
    let (meta, store) = load_checkpoint(path)?;
    let meta: Meta = serde_json::from_str(&meta).map_err(|e| CampaignError::Config(format!("checkpoint metadata: {e}")))?;
    if meta.kind != KIND {
        return Err(CampaignError::Config(format!("checkpoint kind {:?} is not {KIND:?}", meta.kind)));
    }
    let vocab = Vocab::parse(&meta.vocab)?;
    if vocab.len() != meta.encoder.vocab_size {
        return Err(CampaignError::Config("checkpoint vocabulary does not match its encoder".into()));
    }
    let model = MlmModel::from_store(meta.encoder, store)?;
    let report = (!meta.epoch_losses.is_empty()).then(|| PretrainReport { epoch_losses: meta.epoch_losses });
    Ok(Pretrained { vocab, model, report })
}
