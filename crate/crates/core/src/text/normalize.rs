//! Tweet normalization and tokenization.

use super::Token;

pub const LINKS_TOKEN: &str = "⟨LINKS⟩";
pub const USER_TOKEN: &str = "⟨USER⟩";

fn is_url(token: &str) -> bool {
    let lower = token.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn is_mention(token: &str) -> bool {
    token.len() > 1 && token.starts_with('@')
}

fn is_kept_char(c: char) -> bool {
    // Hashtags are kept verbatim, so '#' survives alongside basic punctuation.
    c.is_alphanumeric() || matches!(c, '.' | ',' | '!' | '?' | '\'' | '-' | '#' | '⟨' | '⟩')
}

/// Normalizes a single whitespace-free token. Returns `None` when nothing
/// survives character filtering.
pub fn normalize_token(raw: &str) -> Option<String> {
    if is_url(raw) {
        return Some(LINKS_TOKEN.to_string());
    }
    if is_mention(raw) {
        return Some(USER_TOKEN.to_string());
    }
    let kept: String = raw.chars().filter(|&c| is_kept_char(c)).collect();
    if kept.is_empty() {
        None
    } else if is_url(&kept) {
        // e.g. "(www.example.com)" only reveals itself once brackets are gone
        Some(LINKS_TOKEN.to_string())
    } else {
        Some(kept)
    }
}

/// Replaces links and user mentions with reserved tokens, strips special
/// characters and emoticons, and collapses whitespace.
pub fn normalize_tweet(raw: &str) -> String {
    raw.split_whitespace()
        .filter_map(normalize_token)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn tokenize(normalized: &str) -> Vec<Token> {
    normalized
        .split_whitespace()
        .enumerate()
        .map(|(index, surface)| Token::new(surface, index))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn replaces_links() {
        assert_eq!(normalize_tweet("see http://t.co/abc now"), "see ⟨LINKS⟩ now");
        assert_eq!(normalize_tweet("HTTPS://x.y www.site.org"), "⟨LINKS⟩ ⟨LINKS⟩");
        assert_eq!(normalize_tweet("(www.site.org)"), "⟨LINKS⟩");
    }

    #[test]
    fn replaces_mentions() {
        assert_eq!(
            normalize_tweet("@BLENDOS Lamictal and trileptal"),
            "⟨USER⟩ Lamictal and trileptal"
        );
        assert_eq!(normalize_tweet("@ alone"), "alone");
    }

    #[test]
    fn empty_and_blank() {
        assert_eq!(normalize_tweet(""), "");
        assert_eq!(normalize_tweet("   \t\n "), "");
    }

    #[test]
    fn strips_emoticons_and_specials() {
        assert_eq!(normalize_tweet("so tired :( 😩 ugh!!"), "so tired ugh!!");
        assert_eq!(normalize_tweet("can't  sleep   #insomnia"), "can't sleep #insomnia");
        assert_eq!(normalize_tweet("pain*&^ (bad)"), "pain bad");
    }

    #[test]
    fn tokenizes_on_whitespace() {
        let toks = tokenize("weight gain is not cool");
        let surfaces: Vec<_> = toks.iter().map(|t| t.surface()).collect();
        assert_eq!(surfaces, ["weight", "gain", "is", "not", "cool"]);
        assert_eq!(toks[3].index(), 3);

        let toks = tokenize("⟨USER⟩ hello");
        assert_eq!(toks[0].surface(), USER_TOKEN);
        assert_eq!(toks.len(), 2);
        assert!(tokenize("").is_empty());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(raw in "[ a-zA-Z0-9@#:/.()!?'\\-_*😩⟨⟩wh]{0,60}") {
            let once = normalize_tweet(&raw);
            prop_assert_eq!(normalize_tweet(&once), once.clone());
        }

        #[test]
        fn normalized_tokens_are_nonempty(raw in "\\PC{0,80}") {
            let norm = normalize_tweet(&raw);
            prop_assert_eq!(norm.trim(), norm.as_str());
            for tok in tokenize(&norm) {
                prop_assert!(!tok.surface().is_empty());
            }
        }
    }
}
