//! Song-title generation from an artist's title corpus with word-level
//! Markov chains of order 2 or 3. Titles are padded with begin markers and
//! one end marker, so starts and termination are both learned from data.

use std::collections::BTreeSet;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::numeric::{categorical, Rng};

pub const DEFAULT_MAX_TOKENS: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum TitleError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("title corpus is empty")]
    EmptyCorpus,
    #[error("markov order must be 2 or 3, got {order}")]
    InvalidOrder { order: usize },
}

/// Whitespace-tokenized titles, case preserved, blank lines dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TitleCorpus {
    titles: Vec<Vec<String>>,
}

impl TitleCorpus {
    pub fn from_text(text: &str) -> Result<Self, TitleError> {
        let titles: Vec<Vec<String>> = text
            .lines()
            .map(|line| line.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|tokens: &Vec<String>| !tokens.is_empty())
            .collect();
        if titles.is_empty() {
            return Err(TitleError::EmptyCorpus);
        }
        Ok(TitleCorpus { titles })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TitleError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TitleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    pub fn titles(&self) -> &[Vec<String>] {
        &self.titles
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Tok {
    Bos,
    Word(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Succ {
    Word(String),
    Eos,
}

/// Order-k transition table from k-token states (with begin padding) to
/// successor counts, including an end-of-title successor.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovModel {
    order: usize,
    // BTreeMap: iteration order must not depend on a process-random hasher.
    // Successor lists keep first-seen order, which is corpus order and
    // therefore deterministic.
    table: BTreeMap<Vec<Tok>, Vec<(Succ, u32)>>,
    corpus_titles: BTreeSet<String>,
}

/// Count every length-(k+1) sliding window of each begin-padded,
/// end-terminated title.
pub fn build_markov(corpus: &TitleCorpus, order: usize) -> Result<MarkovModel, TitleError> {
    if !(order == 2 || order == 3) {
        return Err(TitleError::InvalidOrder { order });
    }
    if corpus.is_empty() {
        return Err(TitleError::EmptyCorpus);
    }
    let mut table: BTreeMap<Vec<Tok>, Vec<(Succ, u32)>> = BTreeMap::new();
    let mut bump = |state: &[Tok], succ: Succ| {
        let entry = table.entry(state.to_vec()).or_default();
        match entry.iter_mut().find(|(s, _)| *s == succ) {
            Some((_, count)) => *count += 1,
            None => entry.push((succ, 1)),
        }
    };
    for title in corpus.titles() {
        let mut state: Vec<Tok> = vec![Tok::Bos; order];
        for word in title {
            bump(&state, Succ::Word(word.clone()));
            state.remove(0);
            state.push(Tok::Word(word.clone()));
        }
        bump(&state, Succ::Eos);
    }
    Ok(MarkovModel {
        order,
        table,
        corpus_titles: corpus.titles().iter().map(|t| t.join(" ")).collect(),
    })
}

impl MarkovModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn state_count(&self) -> usize {
        self.table.len()
    }

    pub fn total_transitions(&self) -> u64 {
        self.table
            .values()
            .flat_map(|succs| succs.iter())
            .map(|(_, c)| u64::from(*c))
            .sum()
    }

    /// Successor words (and their counts) of a state given as plain words;
    /// missing leading context is begin padding.
    pub fn successor_words(&self, state_words: &[&str]) -> Vec<(Option<String>, u32)> {
        let state = self.pad_state(state_words);
        self.table
            .get(&state)
            .map(|succs| {
                succs
                    .iter()
                    .map(|(s, c)| match s {
                        Succ::Word(w) => (Some(w.clone()), *c),
                        Succ::Eos => (None, *c),
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    fn pad_state(&self, words: &[&str]) -> Vec<Tok> {
        let take = words.len().min(self.order);
        let mut state = vec![Tok::Bos; self.order - take];
        state.extend(
            words[words.len() - take..]
                .iter()
                .map(|w| Tok::Word((*w).to_string())),
        );
        state
    }

    /// True when every consecutive state-to-word step of the title exists in
    /// the transition table.
    pub fn is_valid_title(&self, title: &str) -> bool {
        let tokens: Vec<&str> = title.split_whitespace().collect();
        if tokens.is_empty() {
            return false;
        }
        let mut state: Vec<Tok> = vec![Tok::Bos; self.order];
        for &word in &tokens {
            let Some(succs) = self.table.get(&state) else {
                return false;
            };
            if !succs
                .iter()
                .any(|(s, _)| matches!(s, Succ::Word(w) if w == word))
            {
                return false;
            }
            state.remove(0);
            state.push(Tok::Word(word.to_string()));
        }
        true
    }

    pub fn in_corpus(&self, title: &str) -> bool {
        self.corpus_titles.contains(title)
    }

    /// Random walk from the all-begin state, stopping at the end marker or
    /// after max_tokens words.
    pub fn generate_title(&self, rng: &mut Rng, max_tokens: usize) -> String {
        let mut state: Vec<Tok> = vec![Tok::Bos; self.order];
        let mut words: Vec<String> = Vec::new();
        while words.len() < max_tokens {
            let succs = self
                .table
                .get(&state)
                .expect("every reachable state was observed in the corpus");
            let total: f64 = succs.iter().map(|(_, c)| f64::from(*c)).sum();
            let probs: Vec<f64> = succs.iter().map(|(_, c)| f64::from(*c) / total).collect();
            let idx = categorical(&probs, rng.uniform01())
                .expect("normalized nonempty distribution");
            match &succs[idx].0 {
                Succ::Eos => break,
                Succ::Word(w) => {
                    words.push(w.clone());
                    state.remove(0);
                    state.push(Tok::Word(w.clone()));
                }
            }
        }
        words.join(" ")
    }

    /// Generate n titles. With `dedupe` set, titles that reproduce a corpus
    /// title or an earlier output are rejected and redrawn within a budget
    /// of 10·n walks; the second field reports how many of the n requested
    /// titles could not be produced.
    pub fn generate_titles(
        &self,
        n: usize,
        dedupe: bool,
        rng: &mut Rng,
        max_tokens: usize,
    ) -> (Vec<String>, usize) {
        let mut out: Vec<String> = Vec::with_capacity(n);
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let budget = n.saturating_mul(10);
        let mut draws = 0;
        while out.len() < n && draws < budget {
            draws += 1;
            let title = self.generate_title(rng, max_tokens);
            if title.is_empty() {
                continue;
            }
            if dedupe && (self.in_corpus(&title) || seen.contains(&title)) {
                continue;
            }
            seen.insert(title.clone());
            out.push(title);
        }
        let shortfall = n - out.len();
        (out, shortfall)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn punk_corpus() -> TitleCorpus {
        TitleCorpus::from_text("Punk In Drublic\nPunk In Town\n").unwrap()
    }

    #[test]
    fn shared_prefix_state_collects_both_successors() {
        let model = build_markov(&punk_corpus(), 2).unwrap();
        let mut succs = model.successor_words(&["Punk", "In"]);
        succs.sort();
        assert_eq!(
            succs,
            vec![
                (Some("Drublic".to_string()), 1),
                (Some("Town".to_string()), 1)
            ]
        );
    }

    #[test]
    fn single_title_corpus_has_single_successors() {
        let corpus = TitleCorpus::from_text("The Quick Brown Fox\n").unwrap();
        let model = build_markov(&corpus, 2).unwrap();
        for succs in model.table.values() {
            assert_eq!(succs.len(), 1);
        }
    }

    #[test]
    fn transition_count_is_title_lengths_plus_one() {
        let corpus =
            TitleCorpus::from_text("One Two Three\nFour\nFive Six Seven Eight Nine\n").unwrap();
        for order in [2, 3] {
            let model = build_markov(&corpus, order).unwrap();
            assert_eq!(model.total_transitions(), (3 + 1) + (1 + 1) + (5 + 1));
        }
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(
            TitleCorpus::from_text("\n\n"),
            Err(TitleError::EmptyCorpus)
        ));
        let corpus = punk_corpus();
        assert!(matches!(
            build_markov(&corpus, 4),
            Err(TitleError::InvalidOrder { order: 4 })
        ));
        assert!(matches!(
            build_markov(&corpus, 1),
            Err(TitleError::InvalidOrder { order: 1 })
        ));
    }

    #[test]
    fn single_title_corpus_always_reproduces_it() {
        let corpus = TitleCorpus::from_text("Lose Home\n").unwrap();
        let model = build_markov(&corpus, 2).unwrap();
        let mut rng = Rng::new(17);
        for _ in 0..100 {
            assert_eq!(model.generate_title(&mut rng, DEFAULT_MAX_TOKENS), "Lose Home");
        }
    }

    #[test]
    fn generated_titles_are_markov_valid() {
        let corpus = TitleCorpus::from_text(
            "Bot Prownies\nOne Million Governments\nJong Out\nLose Home\n\
             One Million Bots\nJong In Town\nBot In Drublic\n",
        )
        .unwrap();
        for order in [2, 3] {
            let model = build_markov(&corpus, order).unwrap();
            let mut rng = Rng::new(5);
            for _ in 0..1000 {
                let title = model.generate_title(&mut rng, DEFAULT_MAX_TOKENS);
                assert!(model.is_valid_title(&title), "invalid: {title:?} at order {order}");
            }
        }
    }

    #[test]
    fn branch_frequencies_match_counts() {
        let model = build_markov(&punk_corpus(), 2).unwrap();
        let mut rng = Rng::new(99);
        let n = 10_000;
        let mut drublic = 0;
        for _ in 0..n {
            match model.generate_title(&mut rng, DEFAULT_MAX_TOKENS).as_str() {
                "Punk In Drublic" => drublic += 1,
                "Punk In Town" => {}
                other => panic!("unexpected title {other:?}"),
            }
        }
        let freq = drublic as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn successor_draws_pass_loose_chi_square() {
        // state ("a",) -> b:1, c:2, d:1 at order 2 via shared first token
        let corpus = TitleCorpus::from_text("a b\na c\na c\na d\n").unwrap();
        let model = build_markov(&corpus, 2).unwrap();
        let mut rng = Rng::new(3);
        let n = 8000;
        let mut counts = BTreeMap::new();
        for _ in 0..n {
            let t = model.generate_title(&mut rng, DEFAULT_MAX_TOKENS);
            *counts.entry(t).or_insert(0usize) += 1;
        }
        let expected = [("a b", n as f64 * 0.25), ("a c", n as f64 * 0.5), ("a d", n as f64 * 0.25)];
        let chi2: f64 = expected
            .iter()
            .map(|(title, e)| {
                let o = *counts.get(*title).unwrap_or(&0) as f64;
                (o - e) * (o - e) / e
            })
            .sum();
        // df = 2; 18.4 is the 0.0001 tail
        assert!(chi2 < 18.4, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn max_tokens_bounds_cyclic_chains() {
        let corpus = TitleCorpus::from_text("ha ha ha ha ha ha ha ha ha ha ha ha ha ha\n").unwrap();
        let model = build_markov(&corpus, 2).unwrap();
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            let title = model.generate_title(&mut rng, 12);
            assert!(title.split_whitespace().count() <= 12);
        }
    }

    #[test]
    fn batch_generation_is_deterministic() {
        let corpus = punk_corpus();
        let model = build_markov(&corpus, 2).unwrap();
        let (a, _) = model.generate_titles(50, false, &mut Rng::new(7), DEFAULT_MAX_TOKENS);
        let (b, _) = model.generate_titles(50, false, &mut Rng::new(7), DEFAULT_MAX_TOKENS);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn dedupe_on_single_title_corpus_yields_shortfall() {
        let corpus = TitleCorpus::from_text("Lose Home\n").unwrap();
        let model = build_markov(&corpus, 2).unwrap();
        let (titles, shortfall) =
            model.generate_titles(5, true, &mut Rng::new(2), DEFAULT_MAX_TOKENS);
        assert!(titles.is_empty());
        assert_eq!(shortfall, 5);
    }

    #[test]
    fn dedupe_outputs_are_unique_and_off_corpus() {
        let corpus = TitleCorpus::from_text(
            "a b\na c\nb c\nb d\nc a\nc d\nd a\nd b\n",
        )
        .unwrap();
        let model = build_markov(&corpus, 2).unwrap();
        let (titles, _) = model.generate_titles(20, true, &mut Rng::new(11), DEFAULT_MAX_TOKENS);
        let unique: BTreeSet<&String> = titles.iter().collect();
        assert_eq!(unique.len(), titles.len());
        for t in &titles {
            assert!(!model.in_corpus(t), "corpus title leaked: {t:?}");
        }
    }
}
