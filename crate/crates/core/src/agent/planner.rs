//! One planning decision: annotate, prompt, parse, fall back.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::context::LocalInfo;
use super::parse::{parse_action, ParseFailure};
use crate::llm::{render_template, Backend, BackendError, CompletionRequest, PromptTemplate, TemplateError, TemplateName};
use crate::utility::CostModel;
use crate::world::{EnvAction, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub use_utility: bool,
    pub prompted_cost_estimation: bool,
    pub use_reflection: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags { use_utility: true, prompted_cost_estimation: false, use_reflection: true }
    }
}

impl AblationFlags {
    pub fn full() -> Self {
        Self::default()
    }

    pub fn without_utility() -> Self {
        AblationFlags { use_utility: false, ..Self::default() }
    }

    pub fn prompted_costs() -> Self {
        AblationFlags { use_utility: false, prompted_cost_estimation: true, ..Self::default() }
    }

    pub fn without_reflection() -> Self {
        AblationFlags { use_reflection: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.prompted_cost_estimation && self.use_utility {
            return Err("prompted cost estimation replaces the utility model; disable one".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostAnnotatedAction {
    pub action: EnvAction,
    pub rendered: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
}

impl CostAnnotatedAction {
    /// `grasp <apple> (31) (est. cost: 1 steps)`
    pub fn prompt_line(&self) -> String {
        match self.cost {
            Some(c) => format!("{} (est. cost: {} steps)", self.rendered, c.round() as i64),
            None => self.rendered.clone(),
        }
    }
}

/// Counts cost queries; one per candidate.
pub struct CountingCostModel<'a> {
    inner: &'a dyn CostModel,
    calls: AtomicUsize,
}

impl<'a> CountingCostModel<'a> {
    pub fn new(inner: &'a dyn CostModel) -> Self {
        CountingCostModel { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl CostModel for CountingCostModel<'_> {
    fn predict_cost(&self, obs_text: &str, action_text: &str) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict_cost(obs_text, action_text)
    }

    fn predict_many(&self, obs_text: &str, actions: &[String]) -> Vec<f64> {
        self.calls.fetch_add(actions.len(), Ordering::Relaxed);
        self.inner.predict_many(obs_text, actions)
    }
}

/// Cost of every candidate from the shared observation text, in order.
pub fn annotate_costs(model: &dyn CostModel, obs_text: &str, candidates: &[(EnvAction, String)]) -> Vec<CostAnnotatedAction> {
    let texts: Vec<String> = candidates.iter().map(|(_, t)| t.clone()).collect();
    let costs = model.predict_many(obs_text, &texts);
    candidates
        .iter()
        .zip(costs)
        .map(|((action, rendered), c)| CostAnnotatedAction { action: *action, rendered: rendered.clone(), cost: Some(c) })
        .collect()
}

/// The `$AVAILABLE_ACTIONS$` binding: one `- action` line per candidate.
pub fn render_available_actions(actions: &[CostAnnotatedAction]) -> String {
    actions.iter().map(|a| format!("- {}", a.prompt_line())).collect::<Vec<_>>().join("\n")
}

/// Lowest annotated cost, ties and unannotated lists by text.
pub fn fallback_choice(actions: &[CostAnnotatedAction]) -> Option<&CostAnnotatedAction> {
    actions.iter().min_by(|a, b| {
        let ca = a.cost.unwrap_or(0.0);
        let cb = b.cost.unwrap_or(0.0);
        ca.total_cmp(&cb).then_with(|| a.rendered.cmp(&b.rendered))
    })
}

pub fn planner_template(kind: TaskKind, flags: &AblationFlags) -> PromptTemplate {
    let name = match kind {
        TaskKind::Household => TemplateName::Planner,
        TaskKind::Transport => TemplateName::TransportPlanner,
    };
    let t = PromptTemplate::builtin(name);
    if flags.prompted_cost_estimation {
        t.with_cost_estimation()
    } else {
        t
    }
}

pub fn planner_bindings(info: &LocalInfo, available: &str) -> BTreeMap<String, String> {
    [
        ("AGENT_NAME", info.agent_name.clone()),
        ("OPPO_NAME", info.teammates_text()),
        ("GOAL", info.goal.clone()),
        ("PROGRESS", info.progress.clone()),
        ("DIALOGUE_HISTORY", info.dialogue_history.clone()),
        ("ACTION_HISTORY", info.action_history.clone()),
        ("AVAILABLE_ACTIONS", available.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub action: EnvAction,
    pub text: String,
    pub prompt: String,
    pub replies: Vec<String>,
    pub parse_failures: u32,
    pub fallback: bool,
    pub annotated: Vec<CostAnnotatedAction>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no candidate actions")]
    NoCandidates,
    #[error("utility enabled but no model supplied")]
    MissingModel,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
}

pub const PARSE_RETRIES: u32 = 1;

/// Choose one of `candidates` (action, rendered text). The result is always
/// a member of `candidates`.
pub fn plan_next_action(
    backend: &dyn Backend,
    info: &LocalInfo,
    obs_text: &str,
    candidates: &[(EnvAction, String)],
    flags: &AblationFlags,
    model: Option<&dyn CostModel>,
    seed: Option<u64>,
) -> Result<PlanOutcome, PlanError> {
    if candidates.is_empty() {
        return Err(PlanError::NoCandidates);
    }
    let annotated = if flags.use_utility {
        annotate_costs(model.ok_or(PlanError::MissingModel)?, obs_text, candidates)
    } else {
        candidates
            .iter()
            .map(|(a, t)| CostAnnotatedAction { action: *a, rendered: t.clone(), cost: None })
            .collect()
    };
    let template = planner_template(info.task_kind, flags);
    let prompt = render_template(&template, &planner_bindings(info, &render_available_actions(&annotated)), true)?;

    let mut replies = Vec::new();
    let mut parse_failures = 0;
    for attempt in 0..=PARSE_RETRIES {
        let mut request = CompletionRequest::new(prompt.clone());
        if let Some(s) = seed {
            request = request.with_seed(s.wrapping_add(attempt as u64));
        }
        let reply = backend.complete(&request)?.text;
        let parsed = parse_action(&reply, candidates);
        replies.push(reply);
        match parsed {
            Ok(action) => {
                let text = candidates.iter().find(|(a, _)| *a == action).map(|(_, t)| t.clone()).unwrap_or_default();
                return Ok(PlanOutcome { action, text, prompt, replies, parse_failures, fallback: false, annotated });
            }
            Err(ParseFailure::NoCandidates) => unreachable!("candidates checked above"),
            Err(e) => {
                log::debug!("{}: unparseable planner reply ({e})", info.agent_name);
                parse_failures += 1;
            }
        }
    }
    let choice = fallback_choice(&annotated).expect("nonempty");
    Ok(PlanOutcome {
        action: choice.action,
        text: choice.rendered.clone(),
        prompt,
        replies,
        parse_failures,
        fallback: true,
        annotated: annotated.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Completion;
    use crate::world::{ObjectId, RoomId, WalkTarget};

    struct Fixed(&'static str);
    impl Backend for Fixed {
        fn complete(&self, _: &CompletionRequest) -> Result<Completion, BackendError> {
            Ok(Completion { text: self.0.to_string(), retries: 0 })
        }
        fn describe(&self) -> String {
            "fixed".into()
        }
    }

    struct ByText(BTreeMap<String, f64>);
    impl CostModel for ByText {
        fn predict_cost(&self, _: &str, a: &str) -> f64 {
            self.0[a]
        }
    }

    fn info() -> LocalInfo {
        LocalInfo {
            agent_name: "Alice".into(),
            teammates: vec!["Bob".into()],
            task_kind: TaskKind::Household,
            goal: "1 x ON(<apple>, <table> (5))".into(),
            progress: "0/1 of ON(<apple>, <table> (5))".into(),
            action_history: "none".into(),
            dialogue_history: String::new(),
        }
    }

    fn cands() -> Vec<(EnvAction, String)> {
        vec![
            (EnvAction::WalkTowards(WalkTarget::Room(RoomId(2000))), "walk towards <livingroom> (2000)".into()),
            (EnvAction::Grasp(ObjectId(31)), "grasp <apple> (31)".into()),
            (EnvAction::NoOp, "wait".into()),
        ]
    }

    fn costs(scale: f64) -> ByText {
        ByText(
            [("walk towards <livingroom> (2000)", 7.0), ("grasp <apple> (31)", 2.0), ("wait", 3.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v * scale))
                .collect(),
        )
    }

    #[test]
    fn gibberish_falls_back_to_argmin() {
        let model = costs(1.0);
        let out = plan_next_action(&Fixed("???"), &info(), "o", &cands(), &AblationFlags::full(), Some(&model), None)
            .unwrap();
        assert!(out.fallback);
        assert_eq!(out.parse_failures, 2);
        assert_eq!(out.action, EnvAction::Grasp(ObjectId(31)));
    }

    #[test]
    fn no_costs_falls_back_to_first_text() {
        let out =
            plan_next_action(&Fixed("???"), &info(), "o", &cands(), &AblationFlags::without_utility(), None, None)
                .unwrap();
        assert_eq!(out.text, "grasp <apple> (31)");
    }

    #[test]
    fn singleton() {
        let c = vec![(EnvAction::NoOp, "wait".to_string())];
        let out = plan_next_action(&Fixed("hmm"), &info(), "o", &c, &AblationFlags::without_utility(), None, None)
            .unwrap();
        assert_eq!(out.action, EnvAction::NoOp);
    }

    #[test]
    fn annotations_appear_in_prompt() {
        let model = costs(1.0);
        let out = plan_next_action(&Fixed("wait"), &info(), "o", &cands(), &AblationFlags::full(), Some(&model), None)
            .unwrap();
        assert!(out.prompt.contains("- grasp <apple> (31) (est. cost: 2 steps)"));
        assert_eq!(out.action, EnvAction::NoOp);
    }

    #[test]
    fn utility_off_never_queries() {
        let model = costs(1.0);
        let counting = CountingCostModel::new(&model);
        plan_next_action(&Fixed("wait"), &info(), "o", &cands(), &AblationFlags::without_utility(), Some(&counting), None)
            .unwrap();
        assert_eq!(counting.calls(), 0);
        plan_next_action(&Fixed("wait"), &info(), "o", &cands(), &AblationFlags::full(), Some(&counting), None).unwrap();
        assert_eq!(counting.calls(), 3);
    }

    #[test]
    fn prompted_costs_add_instruction() {
        let out =
            plan_next_action(&Fixed("wait"), &info(), "o", &cands(), &AblationFlags::prompted_costs(), None, None).unwrap();
        assert!(out.prompt.contains(crate::llm::COST_ESTIMATION_INSTRUCTION));
        assert!(!out.prompt.contains("est. cost"));
    }

    #[test]
    fn inconsistent_flags_rejected() {
        let f = AblationFlags { use_utility: true, prompted_cost_estimation: true, use_reflection: true };
        assert!(f.validate().is_err());
    }
}
