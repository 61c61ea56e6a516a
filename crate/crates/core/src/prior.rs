//! Candidate action production: policy prompt construction, free-form
//! output projection onto the catalog, list-mode top-k parsing, and the
//! beam-marginal prior estimator.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionCatalog, DialogueState, TaskId};
use crate::prompts;
use crate::tasks;

/// How a candidate set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    ListMode,
    BeamMode,
}

/// Normalized prior over catalog actions: non-negative weights summing to
/// one over the actions that carry mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDistribution {
    pub weights: BTreeMap<usize, f64>,
}

impl PriorDistribution {
    pub fn weight(&self, index: usize) -> f64 {
        self.weights.get(&index).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// The turn's top-k candidate actions, in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub indices: Vec<usize>,
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorDistribution>,
}

impl CandidateSet {
    /// A candidate set spanning the whole catalog in index order (the
    /// prior-ablated configuration).
    pub fn full_catalog(catalog: &ActionCatalog) -> Self {
        CandidateSet {
            indices: catalog.all_indices(),
            source: CandidateSource::ListMode,
            prior: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Matcher {
    /// Whole-word (or phrase) match, case-insensitive.
    Keyword(String),
    /// Arbitrary regular expression over the normalized text.
    Pattern(String),
}

#[derive(Debug, Clone)]
pub struct ProjectionEntry {
    pub action_index: usize,
    matcher: Matcher,
    compiled: Regex,
}

impl ProjectionEntry {
    fn new(action_index: usize, matcher: Matcher) -> Result<Self, PriorError> {
        let pattern = match &matcher {
            Matcher::Keyword(kw) => format!(r"(?i)\b{}\b", regex::escape(kw)),
            Matcher::Pattern(p) => format!("(?i){p}"),
        };
        let compiled = Regex::new(&pattern)
            .map_err(|e| PriorError::BadPattern(format!("{pattern}: {e}")))?;
        Ok(ProjectionEntry {
            action_index,
            matcher,
            compiled,
        })
    }

    pub fn matcher(&self) -> &Matcher {
        &self.matcher
    }
}

/// Ordered projection rules mapping free-form continuations onto catalog
/// actions; the first rule that fires wins, and unmatched text falls back
/// to the task's no-op action.
#[derive(Debug, Clone)]
pub struct ProjectionTable {
    pub task_id: TaskId,
    pub entries: Vec<ProjectionEntry>,
    pub noop_index: usize,
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl ProjectionTable {
    /// The built-in table for `task`: action names first (longest names
    /// take precedence so that e.g. "counter-noprice" is not captured by
    /// "counter"), then curated synonym stems, then leading-index patterns.
    pub fn default_for(task: TaskId) -> Self {
        let catalog = tasks::catalog(task);
        let mut entries = Vec::new();

        let mut by_name: Vec<(usize, &str)> = catalog
            .actions
            .iter()
            .map(|a| (a.index, a.name.as_str()))
            .collect();
        by_name.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
        for (index, name) in by_name {
            entries.push(ProjectionEntry::new(index, Matcher::Keyword(name.to_string())).unwrap());
        }

        for (index, matcher) in synonym_rules(task) {
            entries.push(ProjectionEntry::new(index, matcher).unwrap());
        }

        for index in 1..=catalog.len() {
            entries.push(
                ProjectionEntry::new(index, Matcher::Pattern(format!(r"^\W*{index}\b"))).unwrap(),
            );
        }

        ProjectionTable {
            task_id: task,
            entries,
            noop_index: tasks::noop_index(task),
        }
    }

    /// Loads a table from the line format `task, action_index, pattern`.
    /// Patterns prefixed `re:` are regular expressions; everything else is
    /// a whole-word keyword. Lines starting with `#` are comments. Lines
    /// for other tasks are skipped.
    pub fn from_lines(task: TaskId, text: &str) -> Result<Self, PriorError> {
        let catalog = tasks::catalog(task);
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let (Some(task_part), Some(index_part), Some(pattern_part)) =
                (parts.next(), parts.next(), parts.next())
            else {
                return Err(PriorError::BadPattern(format!(
                    "line {}: expected `task, action_index, pattern`",
                    lineno + 1
                )));
            };
            if TaskId::parse(task_part.trim()).ok() != Some(task) {
                continue;
            }
            let index: usize = index_part.trim().parse().map_err(|_| {
                PriorError::BadPattern(format!("line {}: bad action index", lineno + 1))
            })?;
            if !catalog.contains(index) {
                return Err(PriorError::BadPattern(format!(
                    "line {}: action index {index} outside catalog",
                    lineno + 1
                )));
            }
            let pattern = pattern_part.trim();
            let matcher = match pattern.strip_prefix("re:") {
                Some(re) => Matcher::Pattern(re.to_string()),
                None => Matcher::Keyword(pattern.to_string()),
            };
            entries.push(ProjectionEntry::new(index, matcher)?);
        }
        let mut covered: std::collections::BTreeSet<usize> =
            entries.iter().map(|e| e.action_index).collect();
        covered.insert(tasks::noop_index(task));
        if covered.len() < catalog.len() {
            return Err(PriorError::BadPattern(
                "every catalog action needs at least one matcher".into(),
            ));
        }
        Ok(ProjectionTable {
            task_id: task,
            entries,
            noop_index: tasks::noop_index(task),
        })
    }
}

fn synonym_rules(task: TaskId) -> Vec<(usize, Matcher)> {
    let kw = |s: &str| Matcher::Keyword(s.to_string());
    let stem = |s: &str| Matcher::Pattern(format!(r"\b{s}")); // prefix stem
    match task {
        TaskId::Esconv => vec![
            (8, kw("restate")),
            (8, stem("restat")),
            (8, stem("paraphras")),
            (6, stem("reflect")),
            (4, stem("suggest")),
            (4, kw("advice")),
            (3, stem("reassur")),
            (3, stem("affirm")),
            (3, kw("comfort")),
            (2, stem("disclos")),
            (7, kw("fact")),
            (1, kw("ask")),
            (1, stem("elaborat")),
            (5, kw("chat")),
        ],
        TaskId::Cima => vec![
            (1, kw("clue")),
            (2, kw("ask")),
            (4, stem("confirm")),
            (3, stem("correct")),
            (5, kw("chat")),
        ],
        TaskId::Cb => vec![
            (1, kw("hello")),
            (1, kw("hi")),
            (2, kw("ask")),
            (3, kw("tell")),
            (4, stem("offer")),
            (5, kw("new price")),
            (5, stem("lower")),
            (6, stem("cheaper")),
            (7, stem("check")),
            (10, stem("accept")),
            (10, kw("deal")),
            (11, stem("reject")),
            (11, stem("refus")),
            (8, kw("yes")),
            (9, kw("no")),
        ],
        TaskId::Extes => vec![
            (1, stem("reflect")),
            (2, stem("clarif")),
            (3, stem("validat")),
            (4, stem("empath")),
            (6, kw("hope")),
            (7, stem("judg")),
            (8, stem("suggest")),
            (9, kw("plan")),
            (10, kw("perspective")),
            (11, stem("reframe")),
            (12, kw("information")),
            (13, stem("normaliz")),
            (14, kw("self-care")),
            (15, kw("stress")),
            (5, stem("affirm")),
            (16, kw("chat")),
        ],
        TaskId::P4g => vec![
            (2, kw("amount")),
            (3, stem("confirm")),
            (5, stem("affirm")),
            (6, kw("hello")),
            (6, kw("hi")),
            (7, kw("hesitant")),
            (8, stem("thank")),
            (9, stem("logic")),
            (11, stem("credib")),
            (12, kw("small commitment")),
            (13, kw("i also donated")),
            (15, kw("story")),
            (1, stem("donat")),
        ],
    }
}

/// Projects one free-form continuation onto a catalog action: the first
/// matcher (in table order) that fires on the whitespace-normalized,
/// case-folded text wins, and unmatched text maps to the no-op action.
pub fn project(text: &str, table: &ProjectionTable) -> usize {
    let normalized = normalize(text);
    for entry in &table.entries {
        if entry.compiled.is_match(&normalized) {
            return entry.action_index;
        }
    }
    table.noop_index
}

/// Builds the policy-planner prompt for `state` asking for the top `k`
/// actions out of `catalog`.
pub fn build_policy_prompt(state: &DialogueState, catalog: &ActionCatalog, k: usize) -> String {
    build_policy_prompt_with(state, catalog, k, true, None)
}

pub fn build_policy_prompt_with(
    state: &DialogueState,
    catalog: &ActionCatalog,
    k: usize,
    include_emotions: bool,
    budget: Option<usize>,
) -> String {
    debug_assert!(k <= catalog.len());
    let profile = tasks::profile(catalog.task_id);
    prompts::policy_prompt(&profile, state, k, include_emotions, budget)
}

/// Parses a list-mode policy reply: takes the first comma-separated run of
/// integers, keeps valid indices de-duplicated in order of appearance, and
/// pads with unused catalog actions (in index order) up to `k`.
///
/// Errors with [`PriorError::UnparseableOutput`] only when `raw` contains
/// no digits at all; callers then substitute [`fallback_candidates`].
pub fn parse_topk_list(
    raw: &str,
    catalog: &ActionCatalog,
    k: usize,
) -> Result<CandidateSet, PriorError> {
    if !raw.chars().any(|c| c.is_ascii_digit()) {
        return Err(PriorError::UnparseableOutput(raw.to_string()));
    }
    let k = k.min(catalog.len());
    let run = Regex::new(r"\d+(?:\s*,\s*\d+)*").unwrap();
    let mut indices: Vec<usize> = Vec::new();
    if let Some(m) = run.find(raw) {
        for piece in m.as_str().split(',') {
            if let Ok(idx) = piece.trim().parse::<usize>() {
                if catalog.contains(idx) && !indices.contains(&idx) {
                    indices.push(idx);
                }
            }
            if indices.len() == k {
                break;
            }
        }
    }
    pad_with_unused(&mut indices, catalog, k);
    Ok(CandidateSet {
        indices,
        source: CandidateSource::ListMode,
        prior: None,
    })
}

fn pad_with_unused(indices: &mut Vec<usize>, catalog: &ActionCatalog, k: usize) {
    let mut next = 1;
    while indices.len() < k && next <= catalog.len() {
        if !indices.contains(&next) {
            indices.push(next);
        }
        next += 1;
    }
}

/// The substitute candidate set when the policy output was unparseable:
/// the no-op action followed by the first `k - 1` other actions in index
/// order.
pub fn fallback_candidates(catalog: &ActionCatalog, noop_index: usize, k: usize) -> CandidateSet {
    let k = k.min(catalog.len());
    let mut indices = vec![noop_index];
    pad_with_unused(&mut indices, catalog, k);
    CandidateSet {
        indices,
        source: CandidateSource::ListMode,
        prior: None,
    }
}

/// Total list-mode pipeline: parse the raw reply, falling back to
/// [`fallback_candidates`] when it carries no digits. Always yields `k`
/// valid distinct indices.
pub fn candidates_from_raw(
    raw: &str,
    catalog: &ActionCatalog,
    noop_index: usize,
    k: usize,
) -> CandidateSet {
    parse_topk_list(raw, catalog, k)
        .unwrap_or_else(|_| fallback_candidates(catalog, noop_index, k))
}

/// Estimates the projected prior from scored beam continuations: each
/// continuation is projected onto an action, exponentiated log-probs are
/// grouped by action, and the result is normalized to sum to one.
pub fn estimate_prior_beam(
    continuations: &[(String, f64)],
    table: &ProjectionTable,
) -> PriorDistribution {
    assert!(!continuations.is_empty(), "beam must be non-empty");
    let max_lp = continuations
        .iter()
        .map(|(_, lp)| *lp)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: BTreeMap<usize, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (text, lp) in continuations {
        let action = project(text, table);
        let w = (lp - max_lp).exp();
        *weights.entry(action).or_insert(0.0) += w;
        total += w;
    }
    for w in weights.values_mut() {
        *w /= total;
    }
    PriorDistribution { weights }
}

/// Selects the `k` highest-weight actions (ties broken by ascending index)
/// and pads with unused actions in index order when fewer than `k` carry
/// mass.
pub fn top_k(prior: &PriorDistribution, catalog: &ActionCatalog, k: usize) -> CandidateSet {
    let k = k.min(catalog.len());
    let mut ranked: Vec<(usize, f64)> = prior
        .weights
        .iter()
        .filter(|(_, w)| **w > 0.0)
        .map(|(i, w)| (*i, *w))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut indices: Vec<usize> = ranked.into_iter().take(k).map(|(i, _)| i).collect();
    pad_with_unused(&mut indices, catalog, k);
    CandidateSet {
        indices,
        source: CandidateSource::BeamMode,
        prior: Some(prior.clone()),
    }
}

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("policy output contains no action indices: {0:?}")]
    UnparseableOutput(String),
    #[error("bad projection pattern: {0}")]
    BadPattern(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CaseInfo, DialogueState};
    use proptest::prelude::*;

    fn esconv_catalog() -> ActionCatalog {
        tasks::catalog(TaskId::Esconv)
    }

    fn esconv_table() -> ProjectionTable {
        ProjectionTable::default_for(TaskId::Esconv)
    }

    fn empty_state() -> DialogueState {
        DialogueState::new(
            CaseInfo::new(TaskId::Esconv, "case text")
                .with_text_slot("emotion_type", "fear")
                .with_text_slot("problem_type", "job crisis"),
        )
    }

    #[test]
    fn policy_prompt_has_directive_and_numbered_options() {
        let prompt = build_policy_prompt(&empty_state(), &esconv_catalog(), 4);
        assert!(prompt.contains("Choose the TOP 4 most suitable actions from the given options list."));
        assert!(prompt.contains("Reply ONLY in the given format: 1,2,4,5"));
        for i in 1..=8 {
            assert!(prompt.contains(&format!("({i}) ")), "option {i} missing");
        }
        assert!(prompt.contains("(6) Reflection of feelings"));
        assert!(prompt.contains("Emotion History:"));
    }

    #[test]
    fn policy_prompt_substitutes_k_but_keeps_format_tail() {
        let prompt = build_policy_prompt(&empty_state(), &esconv_catalog(), 2);
        assert!(prompt.contains("Choose the TOP 2 most suitable actions"));
        assert!(prompt.contains("Reply ONLY in the given format: 1,2,4,5"));
    }

    #[test]
    fn cb_policy_prompt_states_the_buyer_objective() {
        let case = tasks::sample_cases(TaskId::Cb).into_iter().next().unwrap();
        let prompt = build_policy_prompt(
            &DialogueState::new(case),
            &tasks::catalog(TaskId::Cb),
            4,
        );
        assert!(prompt.contains("maximize the buyer's benefit"));
    }

    #[test]
    fn parses_a_canonical_index_list() {
        let set = parse_topk_list("6,8,3,1", &esconv_catalog(), 4).unwrap();
        assert_eq!(set.indices, [6, 8, 3, 1]);
        assert_eq!(set.source, CandidateSource::ListMode);
        assert!(set.prior.is_none());
    }

    #[test]
    fn parse_dedups_and_drops_out_of_range() {
        let set = parse_topk_list("6, 6, 8, 99, 3, 1", &esconv_catalog(), 4).unwrap();
        assert_eq!(set.indices, [6, 8, 3, 1]);
    }

    #[test]
    fn parse_pads_short_output_with_unused_actions() {
        let set = parse_topk_list("reply: 6", &esconv_catalog(), 4).unwrap();
        assert_eq!(set.indices, [6, 1, 2, 3]);
    }

    #[test]
    fn parse_without_digits_is_unparseable() {
        match parse_topk_list("no idea", &esconv_catalog(), 4) {
            Err(PriorError::UnparseableOutput(_)) => {}
            other => panic!("expected unparseable, got {other:?}"),
        }
        let fallback = candidates_from_raw("no idea", &esconv_catalog(), 5, 4);
        assert_eq!(fallback.indices, [5, 1, 2, 3]);
    }

    #[test]
    fn project_matches_action_names() {
        assert_eq!(project("Reflection of feelings", &esconv_table()), 6);
        assert_eq!(project("  reflection   OF FeeLings ", &esconv_table()), 6);
    }

    #[test]
    fn project_matches_synonyms() {
        assert_eq!(project("I would gently restate what they said", &esconv_table()), 8);
    }

    #[test]
    fn project_falls_back_to_noop() {
        assert_eq!(project("qzx", &esconv_table()), 5);
        assert_eq!(project("", &esconv_table()), 5);
    }

    #[test]
    fn project_longest_name_wins_over_prefix_name() {
        let table = ProjectionTable::default_for(TaskId::Cb);
        assert_eq!(project("counter-noprice", &table), 6);
        assert_eq!(project("counter", &table), 5);
        assert_eq!(project("disagree", &table), 11);
        assert_eq!(project("agree", &table), 10);
    }

    #[test]
    fn project_leading_index_fires() {
        assert_eq!(project("6: Reflection of feelings", &esconv_table()), 6);
        assert_eq!(project("(3)", &esconv_table()), 3);
    }

    #[test]
    fn beam_estimator_matches_hand_computed_grouping() {
        let table = esconv_table();
        let continuations = vec![
            ("Reflection of feelings".to_string(), 0.5f64.ln()),
            ("6: reflect".to_string(), 0.25f64.ln()),
            ("Question".to_string(), 0.25f64.ln()),
        ];
        let prior = estimate_prior_beam(&continuations, &table);
        assert!((prior.weight(6) - 0.75).abs() < 1e-12);
        assert!((prior.weight(1) - 0.25).abs() < 1e-12);
        assert!((prior.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beam_estimator_single_and_all_noop() {
        let table = esconv_table();
        let single = estimate_prior_beam(&[("Question".into(), -2.0)], &table);
        assert!((single.weight(1) - 1.0).abs() < 1e-12);
        let noop = estimate_prior_beam(
            &[("qzx".into(), -1.0), ("zzz".into(), -2.0)],
            &table,
        );
        assert!((noop.weight(5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_ranks_ties_by_index_and_pads() {
        let catalog = tasks::catalog(TaskId::Cima); // 5 actions
        let argmax = top_k(
            &PriorDistribution {
                weights: [(1, 0.75), (2, 0.25)].into_iter().collect(),
            },
            &catalog,
            1,
        );
        assert_eq!(argmax.indices, [1]);

        let tie = top_k(
            &PriorDistribution {
                weights: [(1, 0.4), (2, 0.4), (3, 0.2)].into_iter().collect(),
            },
            &catalog,
            2,
        );
        assert_eq!(tie.indices, [1, 2]);

        let padded = top_k(
            &PriorDistribution {
                weights: [(4, 1.0)].into_iter().collect(),
            },
            &catalog,
            3,
        );
        assert_eq!(padded.indices, [4, 1, 2]);
        assert_eq!(padded.source, CandidateSource::BeamMode);
        assert!(padded.prior.is_some());
    }

    #[test]
    fn table_loads_from_line_format() {
        let text = "\
            # comment\n\
            esconv, 8, restate\n\
            esconv, 6, re:\\breflect\n\
            cima, 1, clue\n\
            esconv, 1, ask\n\
            esconv, 2, share\n\
            esconv, 3, reassure\n\
            esconv, 4, suggest\n\
            esconv, 7, fact\n";
        let table = ProjectionTable::from_lines(TaskId::Esconv, text).unwrap();
        // noop (5) needs no matcher; the cima line is skipped
        assert_eq!(project("please restate that", &table), 8);
        assert_eq!(project("reflecting on it", &table), 6);
        assert_eq!(project("clue", &table), 5);
    }

    #[test]
    fn table_rejects_uncovered_actions_and_bad_indices() {
        assert!(ProjectionTable::from_lines(TaskId::Esconv, "esconv, 1, ask\n").is_err());
        assert!(ProjectionTable::from_lines(TaskId::Esconv, "esconv, 99, ask\n").is_err());
    }

    proptest! {
        #[test]
        fn beam_prior_sums_to_one_and_is_shift_invariant(
            lps in proptest::collection::vec(-8.0f64..0.0, 1..16),
            shift in -5.0f64..5.0,
        ) {
            let table = esconv_table();
            let names = ["Question", "Reflection of feelings", "Information", "qzx"];
            let conts: Vec<(String, f64)> = lps
                .iter()
                .enumerate()
                .map(|(i, lp)| (names[i % names.len()].to_string(), *lp))
                .collect();
            let prior = estimate_prior_beam(&conts, &table);
            prop_assert!((prior.total() - 1.0).abs() < 1e-9);
            let shifted: Vec<(String, f64)> =
                conts.iter().map(|(t, lp)| (t.clone(), lp + shift)).collect();
            let prior2 = estimate_prior_beam(&shifted, &table);
            for (idx, w) in &prior.weights {
                prop_assert!((w - prior2.weight(*idx)).abs() < 1e-9);
            }
        }

        #[test]
        fn parse_is_identity_on_well_formed_lists(
            perm in proptest::sample::subsequence(vec![1usize,2,3,4,5,6,7,8], 4)
        ) {
            let rendered = perm
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let set = parse_topk_list(&rendered, &esconv_catalog(), 4).unwrap();
            prop_assert_eq!(set.indices, perm);
        }

        #[test]
        fn project_is_total_and_deterministic(text in ".{0,60}") {
            let table = esconv_table();
            let a = project(&text, &table);
            let b = project(&text, &table);
            prop_assert_eq!(a, b);
            prop_assert!(esconv_catalog().contains(a));
        }
    }
}
