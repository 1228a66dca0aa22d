//! Subword vocabulary plus feature-indicator and per-user tokens.
//!
//! Token ids are laid out as `[base subwords][7 indicators][UNKNOWN_USER][users...]`.
//! The base vocabulary is a greedy longest-match word-piece table: every
//! character seen while building it is present both bare and with a `##`
//! continuation prefix, so any word made of known characters decomposes.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const UNK: &str = "[UNK]";
pub const UNKNOWN_USER: &str = "[UNKNOWN_USER]";
const CONTINUATION: &str = "##";

/// Serialized feature kinds, in template order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Username,
    Author,
    Community,
    CreatedTime,
    Nsfw,
    SubmissionUrlDomain,
    SubmissionText,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::Username,
        Feature::Author,
        Feature::Community,
        Feature::CreatedTime,
        Feature::Nsfw,
        Feature::SubmissionUrlDomain,
        Feature::SubmissionText,
    ];

    pub fn indicator(self) -> &'static str {
        match self {
            Feature::Username => "[USERNAME]",
            Feature::Author => "[AUTHOR]",
            Feature::Community => "[COMMUNITY]",
            Feature::CreatedTime => "[CREATED_TIME]",
            Feature::Nsfw => "[NSFW]",
            Feature::SubmissionUrlDomain => "[SUBMISSION_URL_DOMAIN]",
            Feature::SubmissionText => "[SUBMISSION_TEXT]",
        }
    }

    fn ordinal(self) -> u32 {
        Feature::ALL.iter().position(|f| *f == self).unwrap() as u32
    }
}

/// Splits on whitespace, then splits every non-alphanumeric character into
/// its own piece.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut start = 0;
        for (i, c) in chunk.char_indices() {
            if !c.is_alphanumeric() {
                if start < i {
                    out.push(&chunk[start..i]);
                }
                out.push(&chunk[i..i + c.len_utf8()]);
                start = i + c.len_utf8();
            }
        }
        if start < chunk.len() {
            out.push(&chunk[start..]);
        }
    }
    out
}

/// Word-piece table built from corpus text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl BaseVocab {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    /// Builds a table from free text and categorical values.
    ///
    /// Categorical values (community names, URL domains, rendered dates) are
    /// kept as whole entries so they encode to a single token. Words from
    /// `texts` occurring at least `min_count` times are kept, most frequent
    /// first, up to `max_words`.
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        whole_values: impl IntoIterator<Item = &'a str>,
        max_words: usize,
        min_count: usize,
    ) -> Self {
        let mut word_counts: HashMap<&str, usize> = HashMap::new();
        let mut chars: BTreeMap<char, ()> = BTreeMap::new();
        let mut note_chars = |s: &str| {
            for c in s.chars().filter(|c| !c.is_whitespace()) {
                chars.insert(c, ());
            }
        };
        for text in texts {
            note_chars(text);
            for w in pre_tokenize(text) {
                *word_counts.entry(w).or_default() += 1;
            }
        }
        let mut wholes: Vec<&str> = Vec::new();
        for value in whole_values {
            note_chars(value);
            if !value.is_empty() {
                wholes.push(value);
            }
            for w in pre_tokenize(value) {
                *word_counts.entry(w).or_default() += 1;
            }
        }

        let mut tokens = vec![UNK.to_string()];
        tokens.extend(chars.keys().map(|c| c.to_string()));
        tokens.extend(chars.keys().map(|c| format!("{CONTINUATION}{c}")));

        let mut words: Vec<(&str, usize)> = word_counts
            .into_iter()
            .filter(|(w, n)| *n >= min_count && w.chars().count() > 1)
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        words.truncate(max_words);
        tokens.extend(words.into_iter().map(|(w, _)| w.to_string()));

        wholes.sort_unstable();
        wholes.dedup();
        tokens.extend(wholes.into_iter().map(str::to_string));

        // Drop repeats while keeping first positions.
        let mut seen = HashMap::new();
        tokens.retain(|t| seen.insert(t.clone(), ()).is_none());
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn unk(&self) -> u32 {
        self.index[UNK]
    }

    /// Greedy longest-match word pieces for one pre-tokenized word.
    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        if let Some(id) = self.get(word) {
            out.push(id);
            return;
        }
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start + 1 < bounds.len() {
            let mut found = None;
            for end in (start + 1..bounds.len()).rev() {
                let piece = &word[bounds[start]..bounds[end]];
                let id = if start == 0 {
                    self.get(piece)
                } else {
                    self.get(&format!("{CONTINUATION}{piece}"))
                };
                if let Some(id) = id {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk());
                    return;
                }
            }
        }
        out.extend(pieces);
    }

    /// Encodes free text.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in pre_tokenize(text) {
            self.encode_word(w, &mut out);
        }
        out
    }

    /// Encodes a categorical value, preferring a single whole-value token.
    pub fn encode_value(&self, value: &str) -> Vec<u32> {
        match self.get(value) {
            Some(id) => vec![id],
            None => self.encode(value),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    base: Vec<String>,
    users: Vec<String>,
}

/// The model vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    base: BaseVocab,
    users: Vec<String>,
    user_index: HashMap<String, u32>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(repr: VocabularyRepr) -> Self {
        build_vocabulary(repr.users, BaseVocab::from_tokens(repr.base))
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            base: v.base.tokens,
            users: v.users,
        }
    }
}

/// Extends `base` with feature indicators, one token per user and the
/// UNKNOWN_USER token. Repeated users keep their first id.
pub fn build_vocabulary<S: Into<String>>(users: impl IntoIterator<Item = S>, base: BaseVocab) -> Vocabulary {
    let first_user = (base.len() + Feature::ALL.len() + 1) as u32;
    let mut list = Vec::new();
    let mut user_index = HashMap::new();
    for u in users {
        let u = u.into();
        if !user_index.contains_key(&u) {
            user_index.insert(u.clone(), first_user + list.len() as u32);
            list.push(u);
        }
    }
    Vocabulary {
        base,
        users: list,
        user_index,
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.base.len() + Feature::ALL.len() + 1 + self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn base(&self) -> &BaseVocab {
        &self.base
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn indicator(&self, feature: Feature) -> u32 {
        self.base.len() as u32 + feature.ordinal()
    }

    pub fn unknown_user(&self) -> u32 {
        (self.base.len() + Feature::ALL.len()) as u32
    }

    /// The user's token, or `None` for users outside the vocabulary.
    pub fn user(&self, user_id: &str) -> Option<u32> {
        self.user_index.get(user_id).copied()
    }

    pub fn user_or_unknown(&self, user_id: &str) -> u32 {
        self.user(user_id).unwrap_or_else(|| self.unknown_user())
    }

    pub fn is_user_token(&self, id: u32) -> bool {
        id >= self.unknown_user() && (id as usize) < self.len()
    }

    /// Human-readable form of a token id.
    pub fn token(&self, id: u32) -> String {
        let base = self.base.len() as u32;
        let unknown = self.unknown_user();
        if id < base {
            self.base.token(id).unwrap_or(UNK).to_string()
        } else if id < unknown {
            Feature::ALL[(id - base) as usize].indicator().to_string()
        } else if id == unknown {
            UNKNOWN_USER.to_string()
        } else {
            self.users
                .get((id - unknown - 1) as usize)
                .map(|u| format!("[{u}]"))
                .unwrap_or_else(|| UNK.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn base() -> BaseVocab {
        BaseVocab::build(
            ["Glaciers in Europe are melting", "in Europe"],
            ["News", "www.washingtonpost.com"],
            100,
            1,
        )
    }

    #[test]
    fn pre_tokenize_splits_punctuation() {
        assert_eq!(pre_tokenize("Wed Nov 6, 2023"), vec!["Wed", "Nov", "6", ",", "2023"]);
        assert_eq!(pre_tokenize("a.b"), vec!["a", ".", "b"]);
        assert!(pre_tokenize("   ").is_empty());
    }

    #[test]
    fn whole_values_are_single_tokens() {
        let b = base();
        assert_eq!(b.encode_value("www.washingtonpost.com").len(), 1);
        assert_eq!(b.encode_value("News").len(), 1);
    }

    #[test]
    fn unseen_words_decompose_into_pieces() {
        let b = base();
        let ids = b.encode("Europeans");
        assert!(ids.len() > 1);
        assert_eq!(b.token(ids[0]), Some("Europe"));
        assert!(ids[1..].iter().all(|&i| b.token(i).unwrap().starts_with("##")));
        // A character never seen maps to UNK.
        assert_eq!(b.encode("Ω"), vec![b.get(UNK).unwrap()]);
    }

    #[test]
    fn zero_users() {
        let b = base();
        let n = b.len();
        let v = build_vocabulary(Vec::<String>::new(), b);
        assert_eq!(v.len(), n + 7 + 1);
        assert_eq!(v.token(v.unknown_user()), UNKNOWN_USER);
    }

    #[test]
    fn three_users_are_injective() {
        let b = base();
        let n = b.len();
        let v = build_vocabulary(["a", "b", "c"], b);
        assert_eq!(v.len(), n + 7 + 1 + 3);
        let ids: HashSet<_> = ["a", "b", "c"].iter().map(|u| v.user(u).unwrap()).collect();
        assert_eq!(ids.len(), 3);
        assert!(!ids.contains(&v.unknown_user()));
        assert_eq!(v.user_or_unknown("zed"), v.unknown_user());
        assert_eq!(v.token(v.user("b").unwrap()), "[b]");
    }

    #[test]
    fn rebuild_is_identical() {
        let a = build_vocabulary(["a", "b"], base());
        let b = build_vocabulary(["a", "b"], base());
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn indicator_ids_follow_base() {
        let v = build_vocabulary(["a"], base());
        for (i, f) in Feature::ALL.iter().enumerate() {
            assert_eq!(v.indicator(*f), (v.base().len() + i) as u32);
            assert_eq!(v.token(v.indicator(*f)), f.indicator());
        }
    }
}
