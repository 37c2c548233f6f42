//! Deterministic inputs for the benchmarks.

use normloom::metrics::{RatingMatrix, TokenSequence};

/// Linear congruential stream; enough to spread tokens without a dependency.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self, bound: usize) -> usize {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 33) % bound as u64) as usize
    }
}

/// `docs` sequences of `len` tokens over a vocabulary of `vocab` words.
pub fn corpus(docs: usize, len: usize, vocab: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = Lcg(seed);
    (0..docs)
        .map(|_| TokenSequence::new((0..len).map(|_| format!("w{}", rng.next(vocab))).collect(), "bench"))
        .collect()
}

/// Documents drawn from `topics` disjoint vocabularies of `per_topic` words each.
pub fn topical_corpus(docs: usize, len: usize, topics: usize, per_topic: usize, seed: u64) -> Vec<TokenSequence> {
    let mut rng = Lcg(seed);
    (0..docs)
        .map(|d| {
            let t = d % topics;
            TokenSequence::new((0..len).map(|_| format!("t{t}w{}", rng.next(per_topic))).collect(), "bench")
        })
        .collect()
}

/// `items` rows of `raters` ratings spread over `categories`.
pub fn ratings(items: usize, raters: usize, categories: usize, seed: u64) -> RatingMatrix {
    let mut rng = Lcg(seed);
    let rows = (0..items)
        .map(|_| {
            let mut row = vec![0; categories];
            for _ in 0..raters {
                row[rng.next(categories)] += 1;
            }
            row
        })
        .collect();
    RatingMatrix::new(rows).expect("rows have equal rater counts")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_shaped() {
        assert_eq!(corpus(3, 5, 10, 1), corpus(3, 5, 10, 1));
        assert!(corpus(4, 7, 10, 2).iter().all(|s| s.len() == 7));
        let docs = topical_corpus(6, 10, 3, 4, 3);
        assert!(docs[0].tokens.iter().all(|t| t.starts_with("t0")));
        assert_eq!(ratings(5, 3, 2, 4).items(), 5);
    }
}
