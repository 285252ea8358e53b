use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Articulatory class of a phone, which selects how the generator voices it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhoneKind {
    Silence,
    /// Index into the canonical vowel chart.
    Vowel(usize),
    /// Index into the canonical fricative noise bands.
    Consonant(usize),
}

/// Ordered phone symbols; position is the one-hot index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneInventory {
    symbols: Vec<String>,
    kinds: Vec<PhoneKind>,
}

const BASE_VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ae"];
const BASE_CONSONANTS: [&str; 5] = ["s", "sh", "f", "th", "h"];

impl PhoneInventory {
    /// Silence, six vowels and five fricatives.
    pub fn standard() -> Self {
        Self::with_size(12).expect("12 is a valid size")
    }

    /// Inventory of `n` phones: `sil`, then the base vowels, then the base
    /// consonants (small inventories are vowels only). Beyond the base chart, extra phones are numbered
    /// variants (`a2`, `s2`, ...) that the generator renders as blends.
    pub fn with_size(n: usize) -> Result<Self, CorpusError> {
        if !(2..=64).contains(&n) {
            return Err(CorpusError::InvalidInventory(format!("size {n} outside 2..=64")));
        }
        let mut symbols = vec!["sil".to_string()];
        let mut kinds = vec![PhoneKind::Silence];
        let base = BASE_VOWELS.len() + BASE_CONSONANTS.len();
        for i in 0..n - 1 {
            let generation = i / base;
            let slot = i % base;
            let suffix = if generation == 0 { String::new() } else { (generation + 1).to_string() };
            if slot < BASE_VOWELS.len() {
                symbols.push(format!("{}{}", BASE_VOWELS[slot], suffix));
                kinds.push(PhoneKind::Vowel(generation * BASE_VOWELS.len() + slot));
            } else {
                let c = slot - BASE_VOWELS.len();
                symbols.push(format!("{}{}", BASE_CONSONANTS[c], suffix));
                kinds.push(PhoneKind::Consonant(generation * BASE_CONSONANTS.len() + c));
            }
        }
        Self::from_parts(symbols, kinds)
    }

    pub fn from_parts(symbols: Vec<String>, kinds: Vec<PhoneKind>) -> Result<Self, CorpusError> {
        if symbols.len() != kinds.len() {
            return Err(CorpusError::InvalidInventory("symbol/kind count mismatch".into()));
        }
        if symbols.len() < 2 {
            return Err(CorpusError::InvalidInventory("need at least two phones".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &symbols {
            if !seen.insert(s) {
                return Err(CorpusError::InvalidInventory(format!("duplicate symbol `{s}`")));
            }
        }
        if !symbols.iter().any(|s| s == "sil") {
            return Err(CorpusError::InvalidInventory("missing `sil`".into()));
        }
        Ok(PhoneInventory { symbols, kinds })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn one_hot_dim(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn kind(&self, id: usize) -> PhoneKind {
        self.kinds[id]
    }

    pub fn id_of(&self, symbol: &str) -> Result<usize, CorpusError> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| CorpusError::UnknownPhone(symbol.to_string()))
    }

    pub fn silence_id(&self) -> usize {
        self.id_of("sil").expect("inventory always has sil")
    }

    pub fn vowels(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| matches!(self.kinds[i], PhoneKind::Vowel(_))).collect()
    }

    pub fn consonants(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| matches!(self.kinds[i], PhoneKind::Consonant(_))).collect()
    }
}

impl Default for PhoneInventory {
    fn default() -> Self {
        Self::standard()
    }
}
