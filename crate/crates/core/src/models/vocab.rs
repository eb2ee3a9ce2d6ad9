use std::collections::{BTreeMap, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ModelError;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[a-z0-9]+(?:['\-][a-z0-9]+)*|[^\sa-z0-9]").unwrap());

/// Closed token inventory. The first four entries are always
/// `<pad> <bos> <eos> <unk>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Specials followed by `symbols`; duplicates are an error.
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let tokens: Vec<String> =
            SPECIALS.iter().map(|s| s.to_string()).chain(symbols.into_iter().map(Into::into)).collect();
        Self::try_from(tokens)
    }

    /// Word-level vocabulary of at most `max_size` entries (specials
    /// included), most frequent words first, ties broken alphabetically.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Result<Self, ModelError> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for w in split_words(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> =
            counts.into_iter().filter(|(w, _)| !SPECIALS.contains(&w.as_str())).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = max_size.saturating_sub(SPECIALS.len());
        Self::new(ranked.into_iter().take(room).map(|(w, _)| w))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn check(&self, ids: &[TokenId]) -> Result<(), ModelError> {
        match ids.iter().find(|&&t| t as usize >= self.tokens.len()) {
            Some(&t) => Err(ModelError::UnknownToken(t)),
            None => Ok(()),
        }
    }

    /// Lowercased word/punctuation tokens; out-of-vocabulary words map to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        split_words(text).iter().map(|w| self.id(w).unwrap_or(UNK)).collect()
    }

    /// `<bos>` followed by the encoded text.
    pub fn encode_prompt(&self, text: &str) -> Vec<TokenId> {
        std::iter::once(BOS).chain(self.encode(text)).collect()
    }

    /// Encoded text terminated by `<eos>`.
    pub fn encode_target(&self, text: &str) -> Vec<TokenId> {
        self.encode(text).into_iter().chain(std::iter::once(EOS)).collect()
    }

    /// Space-joined tokens, stopping at `<eos>` and dropping other specials.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .take_while(|&&t| t != EOS)
            .filter(|&&t| t >= UNK)
            .filter_map(|&t| self.token(t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn split_words(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    WORD.find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = ModelError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(ModelError::InvalidVocabulary("special tokens must lead the vocabulary".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(ModelError::InvalidVocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijection_and_specials() {
        let v = Vocabulary::new(["yes", "no"]).unwrap();
        assert_eq!(v.len(), 6);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i as TokenId));
            assert_eq!(v.token(i as TokenId), Some(t.as_str()));
        }
        assert_eq!(v.id("<eos>"), Some(EOS));
        assert!(Vocabulary::new(["a", "a"]).is_err());
        assert!(Vocabulary::try_from(vec!["a".to_string()]).is_err());
        assert!(matches!(v.check(&[0, 9]), Err(ModelError::UnknownToken(9))));
    }

    #[test]
    fn encode_decode() {
        let v =
            Vocabulary::from_texts(["Yes, the 72-year-old forgot.", "No, the young adult (10-29) did"], 64).unwrap();
        let ids = v.encode("YES, the 72-year-old forgot!");
        assert_eq!(v.decode(&ids), "yes , the 72-year-old forgot <unk>");
        let tgt = v.encode_target("no");
        assert_eq!(*tgt.last().unwrap(), EOS);
        assert_eq!(v.encode_prompt("no")[0], BOS);
        assert_eq!(split_words("(60+)"), vec!["(", "60", "+", ")"]);
    }

    #[test]
    fn size_cap_keeps_most_frequent() {
        let v = Vocabulary::from_texts(["b b b a a c"], 6).unwrap();
        assert_eq!(&v.tokens()[4..], &["b".to_string(), "a".to_string()]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
