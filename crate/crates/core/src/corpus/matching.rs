use std::collections::BTreeMap;

use aho_corasick::{AhoCorasick, MatchKind};
use serde::{Deserialize, Serialize};

/// How a document was linked to an API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    /// The API's own documentation.
    Owner,
    /// The fully qualified name occurs verbatim.
    FullName,
    /// The last two dotted segments occur with identifier boundaries on both sides.
    DottedSuffix,
}

/// Case-sensitive mention finder over a fixed API population.
pub struct ApiMatcher {
    automaton: Option<AhoCorasick>,
    // pattern index -> (api index, rule)
    patterns: Vec<(usize, MatchRule)>,
    names: Vec<String>,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// `a.b.c.D` -> `c.D`; `None` when the name has fewer than three segments
/// (its suffix would be the full name).
fn dotted_suffix(name: &str) -> Option<&str> {
    let mut dots = name.rmatch_indices('.');
    let _last = dots.next()?;
    let (second, _) = dots.next()?;
    Some(&name[second + 1..])
}

impl ApiMatcher {
    pub fn new(names: &[&str]) -> Self {
        let mut texts = Vec::new();
        let mut patterns = Vec::new();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                continue;
            }
            texts.push(name.to_string());
            patterns.push((i, MatchRule::FullName));
            if let Some(suffix) = dotted_suffix(name) {
                texts.push(suffix.to_string());
                patterns.push((i, MatchRule::DottedSuffix));
            }
        }
        let automaton = (!texts.is_empty()).then(|| {
            AhoCorasick::builder()
                .match_kind(MatchKind::Standard)
                .build(&texts)
                .expect("api name automaton")
        });
        ApiMatcher {
            automaton,
            patterns,
            names: names.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// All APIs mentioned in `text`, each with the strongest rule that fired.
    pub fn find_mentions(&self, text: &str) -> BTreeMap<String, MatchRule> {
        let mut found: BTreeMap<String, MatchRule> = BTreeMap::new();
        let Some(ac) = &self.automaton else {
            return found;
        };
        for m in ac.find_overlapping_iter(text) {
            let (api, rule) = self.patterns[m.pattern().as_usize()];
            if rule == MatchRule::DottedSuffix {
                let before = text[..m.start()].chars().next_back();
                let after = text[m.end()..].chars().next();
                if before.is_some_and(is_ident_char) || after.is_some_and(is_ident_char) {
                    continue;
                }
            }
            found
                .entry(self.names[api].clone())
                .and_modify(|r| *r = (*r).min(rule))
                .or_insert(rule);
        }
        found
    }
}
