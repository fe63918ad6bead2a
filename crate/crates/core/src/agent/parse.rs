//! Mapping a free-text backend reply onto one of the candidate actions.

use std::collections::BTreeSet;

use regex::Regex;
use std::sync::OnceLock;
use thiserror::Error;

use crate::world::EnvAction;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("no candidates")]
    NoCandidates,
    #[error("reply names no candidate")]
    NoMatch,
    #[error("reply is ambiguous between {0} candidates")]
    Ambiguous(usize),
}

fn id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").expect("regex"))
}

fn class_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<([^<>]+)>").expect("regex"))
}

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[a-z]+").expect("regex"))
}

/// Ids written as `(id)` in a rendered action, in order.
fn text_ids(text: &str) -> Vec<u64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\((\d+)\)").expect("regex"));
    re.captures_iter(text).filter_map(|c| c[1].parse().ok()).collect()
}

fn verb_of(action: &EnvAction) -> &'static str {
    action.verb()
}

/// Ids that identify a candidate. A walk is identified by its destination
/// alone; the room hint that may follow it is not part of the key.
fn key_ids(action: &EnvAction, text: &str) -> Vec<u64> {
    let ids = text_ids(text);
    match action {
        EnvAction::WalkTowards(_) => ids.into_iter().take(1).collect(),
        _ => ids,
    }
}

fn key_classes(action: &EnvAction, text: &str) -> Vec<String> {
    let classes = class_re().captures_iter(text).map(|c| c[1].to_lowercase());
    match action {
        EnvAction::WalkTowards(_) => classes.take(1).collect(),
        _ => classes.collect(),
    }
}

/// Relation words a put reply must contain to pick `on` over `in`.
fn preposition_ok(action: &EnvAction, words: &BTreeSet<&str>) -> bool {
    match action {
        EnvAction::PutOn { .. } => ["on", "onto"].iter().any(|w| words.contains(w)),
        EnvAction::PutIn { .. } => ["in", "into", "inside"].iter().any(|w| words.contains(w)),
        _ => true,
    }
}

fn unique(matches: Vec<usize>) -> Option<Result<usize, ParseFailure>> {
    match matches.len() {
        0 => None,
        1 => Some(Ok(matches[0])),
        n => Some(Err(ParseFailure::Ambiguous(n))),
    }
}

/// Match `reply` against `candidates` (action, rendered text) with three
/// increasingly loose stages: the rendered text as a substring, the verb with
/// the identifying ids, the verb with the object classes. Matching ignores
/// case; more than one match at the first stage that finds any is a failure.
pub fn parse_action(reply: &str, candidates: &[(EnvAction, String)]) -> Result<EnvAction, ParseFailure> {
    if candidates.is_empty() {
        return Err(ParseFailure::NoCandidates);
    }
    let reply_lc = reply.to_lowercase();
    let texts: Vec<String> = candidates.iter().map(|(_, t)| t.to_lowercase()).collect();

    // Stage 1: whole rendered text. A hit contained in a longer hit is the
    // longer one's prefix, not a separate mention.
    let hits: Vec<usize> = (0..candidates.len()).filter(|&i| reply_lc.contains(&texts[i])).collect();
    let maximal: Vec<usize> = hits
        .iter()
        .copied()
        .filter(|&i| !hits.iter().any(|&j| j != i && texts[j] != texts[i] && texts[j].contains(&texts[i])))
        .collect();
    if let Some(r) = unique(maximal) {
        return r.map(|i| candidates[i].0);
    }

    let words: BTreeSet<&str> = word_re().find_iter(&reply_lc).map(|m| m.as_str()).collect();
    let reply_ids: BTreeSet<u64> = id_re().find_iter(&reply_lc).filter_map(|m| m.as_str().parse().ok()).collect();

    // Stage 2: verb and ids.
    let by_ids: Vec<usize> = (0..candidates.len())
        .filter(|&i| {
            let (action, text) = &candidates[i];
            let ids = key_ids(action, text);
            words.contains(verb_of(action))
                && !ids.is_empty()
                && ids.iter().all(|id| reply_ids.contains(id))
                && preposition_ok(action, &words)
        })
        .collect();
    if let Some(r) = unique(by_ids) {
        return r.map(|i| candidates[i].0);
    }

    // Stage 3: verb and class names.
    let by_class: Vec<usize> = (0..candidates.len())
        .filter(|&i| {
            let (action, text) = &candidates[i];
            let classes = key_classes(action, text);
            let verb_ok = words.contains(verb_of(action));
            let no_object = matches!(action, EnvAction::NoOp);
            verb_ok
                && (no_object || (!classes.is_empty() && classes.iter().all(|c| words.contains(c.as_str()))))
                && preposition_ok(action, &words)
        })
        .collect();
    match unique(by_class) {
        Some(r) => r.map(|i| candidates[i].0),
        None => Err(ParseFailure::NoMatch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ObjectId, RoomId, WalkTarget};

    fn cands() -> Vec<(EnvAction, String)> {
        vec![
            (EnvAction::Grasp(ObjectId(31)), "grasp <apple> (31)".into()),
            (EnvAction::Grasp(ObjectId(12)), "grasp <plate> (12)".into()),
            (EnvAction::WalkTowards(WalkTarget::Room(RoomId(1000))), "walk towards <kitchen> (1000)".into()),
            (
                EnvAction::WalkTowards(WalkTarget::Object(ObjectId(105))),
                "walk towards <fork> (105) in <office> (4000)".into(),
            ),
            (EnvAction::PutOn { object: ObjectId(31), surface: ObjectId(5) }, "put <apple> (31) on <table> (5)".into()),
            (EnvAction::PutOn { object: ObjectId(31), surface: ObjectId(6) }, "put <apple> (31) on <table> (6)".into()),
            (EnvAction::NoOp, "wait".into()),
        ]
    }

    #[test]
    fn exact_text() {
        assert_eq!(parse_action("grasp <plate> (12)", &cands()), Ok(EnvAction::Grasp(ObjectId(12))));
    }

    #[test]
    fn verb_and_id() {
        assert_eq!(parse_action("I will grasp the apple (31)", &cands()), Ok(EnvAction::Grasp(ObjectId(31))));
    }

    #[test]
    fn case_insensitive() {
        assert_eq!(parse_action("GRASP <Plate> (12)", &cands()), Ok(EnvAction::Grasp(ObjectId(12))));
    }

    #[test]
    fn walk_keyed_on_destination() {
        let c = cands();
        assert_eq!(
            parse_action("walk towards the fork (105)", &c),
            Ok(EnvAction::WalkTowards(WalkTarget::Object(ObjectId(105))))
        );
        assert_eq!(
            parse_action("let's walk to the kitchen", &c),
            Ok(EnvAction::WalkTowards(WalkTarget::Room(RoomId(1000))))
        );
    }

    #[test]
    fn two_tables_is_ambiguous() {
        assert!(parse_action("put it on the table", &cands()).is_err());
        assert_eq!(parse_action("put the apple on the table", &cands()), Err(ParseFailure::Ambiguous(2)));
    }

    #[test]
    fn gibberish_fails() {
        assert_eq!(parse_action("zzz qqq", &cands()), Err(ParseFailure::NoMatch));
    }

    #[test]
    fn two_exact_mentions_fail() {
        assert!(matches!(parse_action("grasp <plate> (12) or grasp <apple> (31)", &cands()), Err(ParseFailure::Ambiguous(_))));
    }

    #[test]
    fn wait_by_word() {
        assert_eq!(parse_action("I think we should wait here.", &cands()), Ok(EnvAction::NoOp));
    }
}
