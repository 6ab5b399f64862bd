//! Rule-based normalization of action labels into verb/noun lemma phrases.
//!
//! A small suffix stripper in the spirit of Porter's step 1 plus an exception
//! table. It is tuned to daily-activity labels ("Putting a dish/es
//! somewhere" → "put dish") and is not a general-purpose lemmatizer.

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "be", "someone", "somebody", "something", "somewhere",
    "some", "their", "his", "her", "its", "themselves", "himself", "herself", "from", "on", "at",
    "in", "into", "onto", "with", "of", "to", "up", "off", "out", "outside", "through", "for",
    "and", "or", "by", "over", "under", "down",
];

const EXCEPTIONS: &[(&str, &str)] = &[
    ("lying", "lie"),
    ("dying", "die"),
    ("tying", "tie"),
    ("awakening", "awaken"),
    ("sneezing", "sneeze"),
    ("consuming", "consume"),
    ("clothes", "clothes"),
    ("glasses", "glass"),
    ("dishes", "dish"),
    ("shoes", "shoe"),
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("feet", "foot"),
    ("teeth", "tooth"),
];

fn is_vowel_at(chars: &[char], i: usize) -> bool {
    match chars[i] {
        'a' | 'e' | 'i' | 'o' | 'u' => true,
        // y is a vowel when it follows a consonant
        'y' => i > 0 && !is_vowel_at(chars, i - 1),
        _ => false,
    }
}

/// Porter's measure: the number of vowel-consonant runs.
fn measure(chars: &[char]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..chars.len() {
        let v = is_vowel_at(chars, i);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

fn has_vowel(chars: &[char]) -> bool {
    (0..chars.len()).any(|i| is_vowel_at(chars, i))
}

/// consonant-vowel-consonant ending, final consonant not w, x or y
fn ends_cvc(chars: &[char]) -> bool {
    let n = chars.len();
    n >= 3
        && !is_vowel_at(chars, n - 3)
        && is_vowel_at(chars, n - 2)
        && !is_vowel_at(chars, n - 1)
        && !matches!(chars[n - 1], 'w' | 'x' | 'y')
}

fn strip_ing(word: &str) -> Option<String> {
    let stem = word.strip_suffix("ing")?;
    let chars: Vec<char> = stem.chars().collect();
    if chars.len() < 2 || !has_vowel(&chars) {
        return None;
    }
    let n = chars.len();
    let last = chars[n - 1];
    if last == chars[n - 2] && !is_vowel_at(&chars, n - 1) && !matches!(last, 'l' | 's' | 'z') {
        // putting -> put
        return Some(chars[..n - 1].iter().collect());
    }
    let needs_e = (measure(&chars) == 1 && ends_cvc(&chars))
        || (last == 'l' && n >= 3 && !is_vowel_at(&chars, n - 2) && chars[n - 2] != 'l')
        || (n > 3 && (stem.ends_with("at") || stem.ends_with("iz")));
    Some(if needs_e { format!("{stem}e") } else { stem.to_string() })
}

fn singularize(word: &str) -> String {
    if word.len() <= 3 {
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suffix in ["shes", "ches", "xes", "sses", "zes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.ends_with('s') && !["ss", "us", "is"].iter().any(|s| word.ends_with(s)) {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Lemma of a single lowercase token.
pub fn lemmatize(word: &str) -> String {
    if let Some(&(_, lemma)) = EXCEPTIONS.iter().find(|(w, _)| *w == word) {
        return lemma.to_string();
    }
    if word.len() > 4 {
        if let Some(stem) = strip_ing(word) {
            return stem;
        }
    }
    singularize(word)
}

/// Lowercases, drops stopwords, lemmatizes and removes repeated lemmas.
/// Returns the lemmas in order of first appearance.
pub fn normalize_tokens(label: &str) -> Vec<String> {
    let lower = label.to_lowercase();
    // "towel/s", "dish/es" are plural markers, not alternatives
    let chunks = lower
        .split_whitespace()
        .map(|w| w.strip_suffix("/es").or_else(|| w.strip_suffix("/s")).unwrap_or(w));
    let mut out: Vec<String> = Vec::new();
    for token in chunks.flat_map(|w| w.split(|c: char| !c.is_alphanumeric())).filter(|t| !t.is_empty()) {
        if STOPWORDS.contains(&token) {
            continue;
        }
        let lemma = lemmatize(token);
        if !out.contains(&lemma) {
            out.push(lemma);
        }
    }
    out
}
