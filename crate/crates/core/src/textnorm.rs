//! Written-to-spoken normalization: the text form an ASR system emits.
//!
//! Spoken text is lowercase, has no punctuation other than intra-word
//! apostrophes, and spells numerals out as English cardinal words.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextNormError {
    #[error("not a numeral: {0:?}")]
    NotANumber(String),
    #[error("numeral too large (integer part must be below 10^15): {0}")]
    TooLarge(String),
    #[error("token {0:?} is not in spoken form")]
    NotSpoken(String),
}

const ONES: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const SCALES: [&str; 5] = ["", "thousand", "million", "billion", "trillion"];

const MAX_INTEGER_DIGITS: usize = 15;

/// Append the words for `n < 1000`, which must be nonzero.
fn push_hundreds(n: u64, out: &mut Vec<&'static str>) {
    let (h, rest) = (n / 100, n % 100);
    if h > 0 {
        out.push(ONES[h as usize]);
        out.push("hundred");
    }
    if rest >= 20 {
        out.push(TENS[(rest / 10) as usize]);
        if rest % 10 > 0 {
            out.push(ONES[(rest % 10) as usize]);
        }
    } else if rest > 0 {
        out.push(ONES[rest as usize]);
    }
}

fn integer_words(mut n: u64) -> Vec<&'static str> {
    if n == 0 {
        return vec!["zero"];
    }
    let mut groups = Vec::new();
    while n > 0 {
        groups.push(n % 1000);
        n /= 1000;
    }
    let mut out = Vec::new();
    for (scale, &g) in groups.iter().enumerate().rev() {
        if g == 0 {
            continue;
        }
        push_hundreds(g, &mut out);
        if scale > 0 {
            out.push(SCALES[scale]);
        }
    }
    out
}

/// Spell out a numeral such as `"42"` or `"2.5"` as cardinal words.
///
/// No hyphens and no "and"; the fractional part is read digit by digit after
/// "point". Leading zeros of the integer part are ignored.
pub fn number_to_words(numeral: &str) -> Result<Vec<&'static str>, TextNormError> {
    let nan = || TextNormError::NotANumber(numeral.to_string());
    let (int_part, frac_part) = match numeral.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (numeral, None),
    };
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int_part) || frac_part.is_some_and(|f| !all_digits(f)) {
        return Err(nan());
    }
    let significant = int_part.trim_start_matches('0');
    if significant.len() > MAX_INTEGER_DIGITS {
        return Err(TextNormError::TooLarge(numeral.to_string()));
    }
    let value: u64 = if significant.is_empty() {
        0
    } else {
        significant.parse().map_err(|_| nan())?
    };
    let mut words = integer_words(value);
    if let Some(frac) = frac_part {
        words.push("point");
        words.extend(frac.bytes().map(|b| ONES[(b - b'0') as usize]));
    }
    Ok(words)
}

/// Lowercase word sequence without digits or punctuation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SpokenText {
    tokens: Vec<String>,
}

impl SpokenText {
    pub fn new(tokens: Vec<String>) -> Result<Self, TextNormError> {
        if let Some(bad) = tokens.iter().find(|t| !is_spoken_token(t)) {
            return Err(TextNormError::NotSpoken(bad.clone()));
        }
        Ok(SpokenText { tokens })
    }

    /// Split on whitespace and validate.
    pub fn parse(line: &str) -> Result<Self, TextNormError> {
        Self::new(line.split_whitespace().map(str::to_string).collect())
    }

    pub(crate) fn from_valid(tokens: Vec<String>) -> Self {
        debug_assert!(is_spoken_form(&tokens));
        SpokenText { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for SpokenText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

fn is_lower_letter(c: char) -> bool {
    c.is_alphabetic() && {
        let mut lower = c.to_lowercase();
        lower.next() == Some(c) && lower.next().is_none()
    }
}

fn is_spoken_token(token: &str) -> bool {
    let chars: Vec<char> = token.chars().collect();
    !chars.is_empty()
        && chars.iter().enumerate().all(|(i, &c)| {
            is_lower_letter(c)
                || (c == '\''
                    && i > 0
                    && i + 1 < chars.len()
                    && is_lower_letter(chars[i - 1])
                    && is_lower_letter(chars[i + 1]))
        })
}

/// True iff every token is non-empty, lowercase, and made only of letters
/// and apostrophes flanked by letters.
pub fn is_spoken_form<S: AsRef<str>>(tokens: &[S]) -> bool {
    tokens.iter().all(|t| is_spoken_token(t.as_ref()))
}

/// Convert written text to spoken form.
///
/// Numerals (with an optional decimal part and `,` thousands separators)
/// are spelled out; digit and letter runs inside a token are split apart
/// ("3d" becomes "three d"). Every other symbol acts as a word separator
/// and is dropped.
pub fn normalize_written_to_spoken(text: &str) -> SpokenText {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut tokens: Vec<String> = Vec::new();
    let mut word = String::new();
    let mut i = 0;

    let flush = |word: &mut String, tokens: &mut Vec<String>| {
        if !word.is_empty() {
            tokens.push(std::mem::take(word));
        }
    };

    while i < chars.len() {
        let c = chars[i];
        let inner_apostrophe =
            c == '\'' && !word.is_empty() && i + 1 < chars.len() && is_lower_letter(chars[i + 1]);
        if is_lower_letter(c) || inner_apostrophe {
            word.push(c);
            i += 1;
        } else if c.is_ascii_digit() {
            flush(&mut word, &mut tokens);
            let (numeral, next) = scan_numeral(&chars, i);
            match number_to_words(&numeral) {
                Ok(words) => tokens.extend(words.into_iter().map(str::to_string)),
                // too large for cardinal words: read digit by digit
                Err(_) => tokens.extend(
                    numeral
                        .bytes()
                        .filter(u8::is_ascii_digit)
                        .map(|b| ONES[(b - b'0') as usize].to_string()),
                ),
            }
            i = next;
        } else {
            flush(&mut word, &mut tokens);
            i += 1;
        }
    }
    flush(&mut word, &mut tokens);
    SpokenText::from_valid(tokens)
}

/// Scan a numeral starting at `start`. Returns the digits (commas removed,
/// decimal point kept) and the index just past it.
fn scan_numeral(chars: &[char], start: usize) -> (String, usize) {
    let digit_at = |i: usize| chars.get(i).is_some_and(|c| c.is_ascii_digit());
    let mut out = String::new();
    let mut i = start;
    while digit_at(i) {
        out.push(chars[i]);
        i += 1;
    }
    // thousands groups: ",ddd" not followed by another digit
    while chars.get(i) == Some(&',') && (1..=3).all(|k| digit_at(i + k)) && !digit_at(i + 4) {
        out.extend(&chars[i + 1..i + 4]);
        i += 4;
    }
    if chars.get(i) == Some(&'.') && digit_at(i + 1) {
        out.push('.');
        i += 1;
        while digit_at(i) {
            out.push(chars[i]);
            i += 1;
        }
    }
    (out, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(s: &str) -> String {
        number_to_words(s).unwrap().join(" ")
    }

    fn norm(s: &str) -> Vec<String> {
        normalize_written_to_spoken(s).into_tokens()
    }

    #[test]
    fn cardinal_examples() {
        assert_eq!(words("0"), "zero");
        assert_eq!(words("42"), "forty two");
        assert_eq!(words("2.5"), "two point five");
        assert_eq!(words("101"), "one hundred one");
        assert_eq!(words("1000000"), "one million");
        assert_eq!(words("007"), "seven");
        assert_eq!(words("0.05"), "zero point zero five");
        assert_eq!(
            words("999999999999999"),
            "nine hundred ninety nine trillion nine hundred ninety nine billion \
             nine hundred ninety nine million nine hundred ninety nine thousand \
             nine hundred ninety nine"
        );
        assert_eq!(words("1000001"), "one million one");
    }

    #[test]
    fn numeral_errors() {
        for bad in ["", "abc", "1.", ".5", "1.2.3", "-4", "1,000", " 1"] {
            assert!(
                matches!(number_to_words(bad), Err(TextNormError::NotANumber(_))),
                "{bad}"
            );
        }
        assert!(matches!(
            number_to_words("1000000000000000"),
            Err(TextNormError::TooLarge(_))
        ));
        // leading zeros do not count toward the limit
        assert!(number_to_words("000999999999999999").is_ok());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(norm("Hello, World!"), ["hello", "world"]);
        assert_eq!(norm("It's 2 PM."), ["it's", "two", "pm"]);
        assert!(norm("").is_empty());
        assert_eq!(norm("3D"), ["three", "d"]);
        assert_eq!(
            norm("pi is 3.14."),
            ["pi", "is", "three", "point", "one", "four"]
        );
        assert_eq!(
            norm("1,500 people"),
            ["one", "thousand", "five", "hundred", "people"]
        );
        assert_eq!(norm("1,2,3"), ["one", "two", "three"]);
        assert_eq!(norm("'quoted' rock'n'roll"), ["quoted", "rock'n'roll"]);
        assert_eq!(norm("50% & $3"), ["fifty", "three"]);
        assert_eq!(norm("ÉCOLE Straße"), ["école", "straße"]);
        assert_eq!(norm("top 2 percent"), ["top", "two", "percent"]);
        assert_eq!(
            norm("12345678901234567"),
            [
                "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "zero",
                "one", "two", "three", "four", "five", "six", "seven"
            ]
        );
    }

    #[test]
    fn spoken_form_validation() {
        assert!(is_spoken_form(&["hello", "world"]));
        assert!(!is_spoken_form(&["Hello"]));
        assert!(!is_spoken_form(&["two", "2"]));
        assert!(!is_spoken_form(&[""]));
        assert!(!is_spoken_form(&["'tis"]));
        assert!(!is_spoken_form(&["a''b"]));
        assert!(is_spoken_form(&["don't"]));
        assert!(SpokenText::parse("ok FINE").is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_spoken(s in "\\PC{0,60}") {
            let once = normalize_written_to_spoken(&s);
            prop_assert!(is_spoken_form(once.tokens()));
            let twice = normalize_written_to_spoken(&once.to_string());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn normalize_ascii_mix(s in "[a-zA-Z0-9 .,'!?%-]{0,80}") {
            let once = normalize_written_to_spoken(&s);
            prop_assert!(is_spoken_form(once.tokens()));
            prop_assert_eq!(normalize_written_to_spoken(&once.to_string()), once);
        }
    }
}
