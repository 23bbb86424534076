use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use saam::embed::{embed_texts, load_embeddings, Backend, EmbeddingVector, ProviderConfig};
use saam::eval::{attach_embeddings, parse_labeled_jsonl, LabeledRecord};
use saam::ingest::{read_histories_tsv, PlayerMatchHistory};
use saam::synth::{Multimodal, TwoGaussians};

use crate::args::{DataArgs, ProviderArgs, SyntheticArg, VectorArgs};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn read_histories(path: &Path) -> Result<Vec<PlayerMatchHistory>> {
    read_histories_tsv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn provider_config(args: &ProviderArgs) -> Result<ProviderConfig> {
    let backend = args
        .backend
        .ok_or_else(|| anyhow!("no vectors: pass --embeddings or --backend"))?;
    let base = match Backend::from(backend) {
        Backend::Remote => {
            let endpoint = args
                .endpoint
                .clone()
                .ok_or_else(|| anyhow!("--backend remote needs --endpoint"))?;
            ProviderConfig::remote(endpoint, args.dim)
        }
        _ => ProviderConfig::hash_test(args.dim),
    };
    Ok(ProviderConfig {
        batch_size: args.batch_size,
        timeout_ms: args.timeout_ms,
        max_retries: args.max_retries,
        max_in_flight: args.max_in_flight,
        ..base
    })
}

/// Vectors for `(id, text)` pairs, in input order.
pub fn vectors_for(texts: &[(String, String)], args: &VectorArgs) -> Result<Vec<EmbeddingVector>> {
    match &args.embeddings {
        Some(path) => {
            let table: HashMap<String, Vec<f64>> = load_embeddings(path)
                .with_context(|| format!("reading {}", path.display()))?
                .into_iter()
                .map(|v| (v.id, v.values))
                .collect();
            texts
                .iter()
                .map(|(id, _)| {
                    let values = table
                        .get(id)
                        .cloned()
                        .ok_or_else(|| anyhow!("{} has no vector for id {id:?}", path.display()))?;
                    Ok(EmbeddingVector {
                        id: id.clone(),
                        values,
                    })
                })
                .collect()
        }
        None => Ok(embed_texts(texts, &provider_config(&args.provider)?)?),
    }
}

/// Labeled records from `--in` plus vectors, or a generated data set.
pub fn load_records(args: &DataArgs, seed: u64) -> Result<Vec<LabeledRecord>> {
    let Some(path) = &args.input else {
        if args.vectors.embeddings.is_some() {
            bail!("--embeddings needs --in");
        }
        let data_seed = args.data_seed.unwrap_or(seed);
        return Ok(match args.synthetic.unwrap_or(SyntheticArg::TwoGaussians) {
            SyntheticArg::TwoGaussians => TwoGaussians::default().generate(data_seed),
            SyntheticArg::Multimodal => Multimodal::default().generate(data_seed),
        });
    };
    let texts =
        parse_labeled_jsonl(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    let pairs: Vec<(String, String)> = texts
        .iter()
        .map(|t| (t.id.clone(), t.text.clone()))
        .collect();
    let vectors = vectors_for(&pairs, &args.vectors)?;
    Ok(attach_embeddings(&texts, &vectors)?)
}
