use std::collections::HashMap;

/// Token ids; id 0 is reserved for tokens never seen when the vocabulary
/// was built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocab {
    pub const OOV: usize = 0;
    pub const OOV_TOKEN: &'static str = "<unk>";

    pub fn new() -> Self {
        Vocab {
            index: HashMap::new(),
            tokens: vec![Self::OOV_TOKEN.to_string()],
        }
    }

    /// Tokens in first-seen order.
    pub fn build<'a, I, D>(documents: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = &'a String>,
    {
        let mut v = Vocab::new();
        for doc in documents {
            for t in doc {
                v.insert(t);
            }
        }
        v
    }

    /// Rebuilds a vocabulary from its token list (id order, OOV first).
    pub fn from_tokens(tokens: Vec<String>) -> Option<Self> {
        if tokens.first().map(String::as_str) != Some(Self::OOV_TOKEN) {
            return None;
        }
        let index: HashMap<String, usize> = tokens.iter().enumerate().skip(1).map(|(i, t)| (t.clone(), i)).collect();
        (index.len() + 1 == tokens.len()).then_some(Vocab { index, tokens })
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.index.insert(token.to_string(), id);
        self.tokens.push(token.to_string());
        id
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::OOV)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Entries including the OOV slot.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 1
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}
