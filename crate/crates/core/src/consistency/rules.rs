use std::cell::RefCell;
use std::collections::HashMap;
use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use super::Side;
use crate::error::{Error, Result};
use crate::io::{jsonl_records, parse_value, read_to_string};
use crate::model::SlotKey;

const PLACEHOLDER: &str = "{value}";

/// The rules shipped in `rules/default.rules`.
pub const DEFAULT_RULES: &str = include_str!("../../../../rules/default.rules");

/// `domain.slot_type` where either part may be `*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPattern {
    pub domain: Option<String>,
    pub slot_type: Option<String>,
}

impl SlotPattern {
    pub fn parse(s: &str) -> Result<Self> {
        let (d, t) = s
            .split_once('.')
            .ok_or_else(|| Error::Invalid(format!("slot pattern `{s}` is not domain.slot_type")))?;
        let part = |p: &str| (p != "*").then(|| p.to_string());
        Ok(SlotPattern {
            domain: part(d),
            slot_type: part(t),
        })
    }

    pub fn matches(&self, slot: &SlotKey) -> bool {
        self.domain.as_deref().is_none_or(|d| d == slot.domain)
            && self.slot_type.as_deref().is_none_or(|t| t == slot.slot_type)
    }
}

/// A correction gate. For system-side rules the trigger is matched against
/// `"<system response>\n<next user utterance>"`, both normalized; for
/// user-side rules against the normalized user utterance alone. Rejection
/// patterns are matched against the user utterance and may use `{value}`.
#[derive(Debug, Clone)]
pub struct CorrectionRule {
    pub rule_id: String,
    pub slot: SlotPattern,
    pub side: Side,
    pub trigger: String,
    pub reject: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    rule_id: String,
    slot: String,
    side: String,
    trigger: String,
    #[serde(default)]
    reject: Vec<String>,
}

/// Template split around `{value}`; regexes are compiled per surface and
/// cached per thread.
#[derive(Debug, Clone)]
enum Template {
    Fixed(Regex),
    WithValue(String, String),
}

impl Template {
    fn compile(rule_id: &str, pattern: &str, required: bool) -> Result<Self> {
        let count = pattern.matches(PLACEHOLDER).count();
        let bad = |message: String| Error::Rule {
            rule_id: rule_id.to_string(),
            message,
        };
        if count > 1 || (required && count != 1) {
            return Err(bad(format!(
                "pattern `{pattern}` must reference {PLACEHOLDER} exactly once"
            )));
        }
        if count == 0 {
            return Regex::new(pattern).map(Template::Fixed).map_err(|e| bad(e.to_string()));
        }
        let (prefix, suffix) = pattern.split_once(PLACEHOLDER).expect("placeholder present");
        // surface a syntax error at load time
        Regex::new(&format!("{prefix}placeholder{suffix}")).map_err(|e| bad(e.to_string()))?;
        Ok(Template::WithValue(prefix.to_string(), suffix.to_string()))
    }

    fn is_match(&self, surface: &str, text: &str) -> bool {
        match self {
            Template::Fixed(re) => re.is_match(text),
            Template::WithValue(prefix, suffix) => {
                let source = format!("{prefix}{}{suffix}", regex::escape(surface));
                REGEX_CACHE.with(|cache| {
                    let mut cache = cache.borrow_mut();
                    if cache.len() > 4096 {
                        cache.clear();
                    }
                    cache
                        .entry(source)
                        .or_insert_with_key(|s| Regex::new(s).expect("validated at load"))
                        .is_match(text)
                })
            }
        }
    }
}

thread_local! {
    static REGEX_CACHE: RefCell<HashMap<String, Regex>> = RefCell::new(HashMap::new());
}

#[derive(Debug, Clone)]
struct CompiledRule {
    rule: CorrectionRule,
    trigger: Template,
    reject: Vec<Template>,
}

#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<CompiledRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<CorrectionRule>) -> Result<Self> {
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            let trigger = Template::compile(&rule.rule_id, &rule.trigger, true)?;
            let reject = rule
                .reject
                .iter()
                .map(|p| Template::compile(&rule.rule_id, p, false))
                .collect::<Result<Vec<_>>>()?;
            compiled.push(CompiledRule { rule, trigger, reject });
        }
        Ok(RuleSet { rules: compiled })
    }

    pub fn rules(&self) -> impl Iterator<Item = &CorrectionRule> {
        self.rules.iter().map(|r| &r.rule)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn covers(&self, side: Side, slot: &SlotKey) -> bool {
        self.rules
            .iter()
            .any(|r| r.rule.side == side && r.rule.slot.matches(slot))
    }

    /// First rule (in file order) for `side` and `slot` whose trigger matches
    /// `context` and none of whose rejections match `user`.
    pub fn first_match(&self, side: Side, slot: &SlotKey, surface: &str, context: &str, user: &str) -> Option<&str> {
        self.rules
            .iter()
            .filter(|r| r.rule.side == side && r.rule.slot.matches(slot))
            .find(|r| r.trigger.is_match(surface, context) && !r.reject.iter().any(|rej| rej.is_match(surface, user)))
            .map(|r| r.rule.rule_id.as_str())
    }
}

/// Parses a rules document (JSON Lines, `#` comments allowed).
pub fn parse_rules(path: &Path, text: &str) -> Result<RuleSet> {
    let mut rules = Vec::new();
    for (line, value) in jsonl_records(path, text)? {
        let rec: RuleRecord = parse_value(path, line, value)?;
        let err = |e: Error| Error::Rule {
            rule_id: rec.rule_id.clone(),
            message: e.to_string(),
        };
        rules.push(CorrectionRule {
            slot: SlotPattern::parse(&rec.slot).map_err(err)?,
            side: rec.side.parse().map_err(err)?,
            rule_id: rec.rule_id,
            trigger: rec.trigger,
            reject: rec.reject,
        });
    }
    let mut ids: Vec<&str> = rules.iter().map(|r| r.rule_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Rule {
            rule_id: dup[0].to_string(),
            message: "duplicate rule id".into(),
        });
    }
    RuleSet::new(rules)
}

pub fn load_rules(path: &Path) -> Result<RuleSet> {
    parse_rules(path, &read_to_string(path)?)
}

pub fn default_rules() -> RuleSet {
    parse_rules(Path::new("rules/default.rules"), DEFAULT_RULES).expect("shipped rules are valid")
}
