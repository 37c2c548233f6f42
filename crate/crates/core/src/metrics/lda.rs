use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MetricError, TokenSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub topics: usize,
    /// Defaults to 50 / topics.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Tokens removed before fitting.
    pub stop_words: BTreeSet<String>,
}

impl LdaParams {
    pub fn new(topics: usize, seed: u64) -> Self {
        Self { topics, alpha: None, beta: 0.01, iterations: 1000, seed, stop_words: BTreeSet::new() }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

/// Count tables of a collapsed Gibbs sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub topics: usize,
    pub vocabulary: Vec<String>,
    /// `topic_word[k][w]`
    pub topic_word: Vec<Vec<u32>>,
    /// `doc_topic[d][k]`
    pub doc_topic: Vec<Vec<u32>>,
    pub topic_totals: Vec<u32>,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Topic of every token, document by document.
    pub assignments: Vec<Vec<usize>>,
}

impl TopicModel {
    pub fn total_tokens(&self) -> u64 {
        self.topic_totals.iter().map(|&c| c as u64).sum()
    }

    /// Smoothed word distribution of topic `k`, indexed like `vocabulary`.
    pub fn word_distribution(&self, k: usize) -> Vec<f64> {
        let v = self.vocabulary.len() as f64;
        let den = self.topic_totals[k] as f64 + v * self.beta;
        self.topic_word[k].iter().map(|&c| (c as f64 + self.beta) / den).collect()
    }
}

pub fn lda_fit(docs: &[TokenSequence], params: &LdaParams) -> Result<TopicModel, MetricError> {
    lda_fit_observed(docs, params, |_, _| {})
}

/// Like `lda_fit`, calling `observe(iteration, model)` after every sweep.
pub fn lda_fit_observed(
    docs: &[TokenSequence],
    params: &LdaParams,
    mut observe: impl FnMut(usize, &TopicModel),
) -> Result<TopicModel, MetricError> {
    if params.topics == 0 {
        return Err(MetricError::ZeroTopics);
    }
    if docs.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if docs.len() < params.topics {
        tracing::warn!(docs = docs.len(), topics = params.topics, "fewer documents than topics");
    }
    let filtered: Vec<Vec<&str>> = docs
        .iter()
        .map(|d| d.tokens.iter().map(String::as_str).filter(|t| !params.stop_words.contains(*t)).collect())
        .collect();
    let vocab: BTreeMap<&str, usize> = {
        let words: BTreeSet<&str> = filtered.iter().flatten().copied().collect();
        words.into_iter().enumerate().map(|(i, w)| (w, i)).collect()
    };
    if vocab.is_empty() {
        return Err(MetricError::EmptyVocabulary);
    }
    let words: Vec<Vec<usize>> = filtered.iter().map(|d| d.iter().map(|w| vocab[w]).collect()).collect();

    let k_count = params.topics;
    let v_count = vocab.len();
    let alpha = params.alpha();
    let beta = params.beta;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut model = TopicModel {
        topics: k_count,
        vocabulary: vocab.keys().map(|w| w.to_string()).collect(),
        topic_word: vec![vec![0; v_count]; k_count],
        doc_topic: vec![vec![0; k_count]; docs.len()],
        topic_totals: vec![0; k_count],
        alpha,
        beta,
        iterations: params.iterations,
        seed: params.seed,
        assignments: Vec::with_capacity(docs.len()),
    };
    for (d, doc) in words.iter().enumerate() {
        let z: Vec<usize> = doc.iter().map(|_| rng.random_range(0..k_count)).collect();
        for (&w, &k) in doc.iter().zip(&z) {
            model.topic_word[k][w] += 1;
            model.doc_topic[d][k] += 1;
            model.topic_totals[k] += 1;
        }
        model.assignments.push(z);
    }

    let v_beta = v_count as f64 * beta;
    let mut weights = vec![0.0; k_count];
    for iter in 0..params.iterations {
        for (d, doc) in words.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = model.assignments[d][i];
                model.topic_word[old][w] -= 1;
                model.doc_topic[d][old] -= 1;
                model.topic_totals[old] -= 1;

                let mut total = 0.0;
                for (k, slot) in weights.iter_mut().enumerate() {
                    total += (model.doc_topic[d][k] as f64 + alpha) * (model.topic_word[k][w] as f64 + beta)
                        / (model.topic_totals[k] as f64 + v_beta);
                    *slot = total;
                }
                let u = rng.random::<f64>() * total;
                let new = weights.iter().position(|&c| u < c).unwrap_or(k_count - 1);

                model.topic_word[new][w] += 1;
                model.doc_topic[d][new] += 1;
                model.topic_totals[new] += 1;
                model.assignments[d][i] = new;
            }
        }
        observe(iter, &model);
    }
    Ok(model)
}

/// Top `m` tokens per topic by smoothed probability, ties broken lexicographically.
pub fn lda_top_tokens(model: &TopicModel, m: usize) -> Vec<Vec<String>> {
    (0..model.topics)
        .map(|k| {
            let mut idx: Vec<usize> = (0..model.vocabulary.len()).collect();
            // smoothing is monotone in the count within one topic
            idx.sort_by(|&a, &b| {
                model.topic_word[k][b]
                    .cmp(&model.topic_word[k][a])
                    .then_with(|| model.vocabulary[a].cmp(&model.vocabulary[b]))
            });
            idx.into_iter().take(m).map(|i| model.vocabulary[i].clone()).collect()
        })
        .collect()
}
