/// Rule-based lowercasing tokenizer.
///
/// A sentence ends at `.`, `!` or `?` when followed by whitespace and an
/// uppercase letter, or by the end of the text. Words split on whitespace,
/// and every non-alphanumeric character becomes its own token.
pub fn tokenize(text: &str) -> Vec<Vec<String>> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    for i in 0..chars.len() {
        if !matches!(chars[i], '.' | '!' | '?') {
            continue;
        }
        let next = chars[i + 1..].iter().position(|c| !c.is_whitespace()).map(|p| i + 1 + p);
        let boundary = match next {
            None => true,
            Some(j) => j > i + 1 && chars[j].is_uppercase(),
        };
        if boundary {
            push_sentence(&chars[start..=i], &mut sentences);
            start = i + 1;
        }
    }
    push_sentence(&chars[start..], &mut sentences);
    sentences
}

fn push_sentence(chars: &[char], out: &mut Vec<Vec<String>>) {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for &c in chars {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    if !tokens.is_empty() {
        out.push(tokens);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&[&str]]) -> Vec<Vec<String>> {
        s.iter().map(|t| t.iter().map(|w| w.to_string()).collect()).collect()
    }

    #[test]
    fn splits_at_terminators_before_capitals() {
        assert_eq!(
            tokenize("He died in 1616. He wrote."),
            toks(&[&["he", "died", "in", "1616", "."], &["he", "wrote", "."]])
        );
    }

    #[test]
    fn empty_and_unterminated() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n ").is_empty());
        assert_eq!(tokenize("Hello"), toks(&[&["hello"]]));
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(tokenize("e.g. this one. Yes!"), toks(&[&["e", ".", "g", ".", "this", "one", "."], &["yes", "!"]]));
    }

    #[test]
    fn punctuation_is_detached() {
        assert_eq!(tokenize("Wait, what?! Ok"), toks(&[&["wait", ",", "what", "?", "!"], &["ok"]]));
    }
}
