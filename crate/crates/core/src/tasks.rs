//! Per-task profiles: action catalogs with their strategy prompts, critic
//! verdict-to-reward maps, role names, and a small bundled set of cases
//! for each task.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    ActionCatalog, CaseInfo, TaskId, SLOT_BUYER_TARGET_PRICE, SLOT_LISTED_PRICE,
    SLOT_SELLER_DESIRED_PRICE,
};

/// Episode status after a turn has been judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalStatus {
    Ongoing,
    Completed,
    Failed,
}

/// One critic verdict option: the verbatim option sentence (or its fixed
/// prefix when the option embeds case text), the scalar reward, and the
/// episode status it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRule {
    pub option_text: String,
    pub reward: f64,
    pub terminal: TerminalStatus,
}

impl VerdictRule {
    fn new(option_text: &str, reward: f64, terminal: TerminalStatus) -> Self {
        VerdictRule {
            option_text: option_text.to_string(),
            reward,
            terminal,
        }
    }
}

/// Everything task-specific the self-play loop needs: the catalog, the
/// verdict map, the turn cap, and the role names used when rendering
/// conversations inside prompts.
#[derive(Debug, Clone)]
pub struct TaskProfile {
    pub task_id: TaskId,
    pub catalog: ActionCatalog,
    pub verdict_map: Vec<VerdictRule>,
    pub max_turns: usize,
    pub system_role: &'static str,
    pub user_role: &'static str,
    /// Catalog index projection falls back to when no rule fires.
    pub noop_index: usize,
}

pub const DEFAULT_MAX_TURNS: usize = 8;

/// Builds the profile for `task` with the default turn cap.
pub fn profile(task: TaskId) -> TaskProfile {
    profile_with_max_turns(task, DEFAULT_MAX_TURNS)
}

pub fn profile_with_max_turns(task: TaskId, max_turns: usize) -> TaskProfile {
    let (system_role, user_role) = role_names(task);
    TaskProfile {
        task_id: task,
        catalog: catalog(task),
        verdict_map: verdict_map(task),
        max_turns,
        system_role,
        user_role,
        noop_index: noop_index(task),
    }
}

/// System/user role names per task.
pub fn role_names(task: TaskId) -> (&'static str, &'static str) {
    match task {
        TaskId::Esconv | TaskId::Extes => ("Therapist", "Patient"),
        TaskId::Cima => ("Teacher", "Student"),
        TaskId::Cb => ("Buyer", "Seller"),
        TaskId::P4g => ("Persuader", "Persuadee"),
    }
}

/// The designated fallback action for unmatched free-form output:
/// the catalog's "Others" entry where one exists, otherwise the most
/// neutral conversational action.
pub fn noop_index(task: TaskId) -> usize {
    match task {
        TaskId::Esconv => 5, // Others
        TaskId::Cima => 5,   // Others
        TaskId::Extes => 16, // Others
        TaskId::Cb => 1,     // greet
        TaskId::P4g => 6,    // Greeting
    }
}

/// The ordered action catalog for `task`, indices 1-based and contiguous.
pub fn catalog(task: TaskId) -> ActionCatalog {
    match task {
        TaskId::Esconv => ActionCatalog::new(
            task,
            &[
                (
                    "Question",
                    "Please ask the Patient to elaborate on the situation they just described.",
                ),
                (
                    "Self-disclosure",
                    "Please provide a statement relating to the Patient about the situation they just described.",
                ),
                (
                    "Affirmation and Reassurance",
                    "Please provide affirmation and reassurance to the Patient on the situation they just described.",
                ),
                (
                    "Providing Suggestions",
                    "Please provide suggestion to the Patient on the situation they just described.",
                ),
                ("Others", "Please chat with the Patient."),
                (
                    "Reflection of feelings",
                    "Please acknowledge the Patient's feelings about the situation they described.",
                ),
                (
                    "Information",
                    "Please provide factual information to help the Patient with their situation.",
                ),
                (
                    "Restatement or Paraphrasing",
                    "Please acknowledge the Patient's feelings by paraphrasing their situation.",
                ),
            ],
        ),
        TaskId::Cima => ActionCatalog::new(
            task,
            &[
                ("Hint", "Please provide knowledge to the Student via a hint."),
                (
                    "Question",
                    "Please ask a question to the Student to determine the Student's understanding or continue the conversation.",
                ),
                (
                    "Correction",
                    "Please correct the mistake or address the misconception the Student has.",
                ),
                (
                    "Confirmation",
                    "Please confirm the Student's answer or understanding is correct.",
                ),
                (
                    "Others",
                    "Please chat with the Student without any pedagogical strategy.",
                ),
            ],
        ),
        TaskId::Cb => ActionCatalog::new(
            task,
            &[
                ("greet", "Please say hello or chat randomly."),
                (
                    "inquire",
                    "Please ask any question about product, year, price, usage, etc.",
                ),
                (
                    "inform",
                    "Please provide information about the product, year, usage, etc.",
                ),
                (
                    "propose",
                    "Please initiate a price or a price range for the product.",
                ),
                ("counter", "Please propose a new price or a new price range."),
                (
                    "counter-noprice",
                    "Please propose a vague price by using comparatives with existing price.",
                ),
                (
                    "confirm",
                    "Please ask a question about the information to be confirmed.",
                ),
                ("affirm", "Please give an affirmative response to a confirm."),
                ("deny", "Please give a negative response to a confirm."),
                ("agree", "Please agree with the proposed price."),
                ("disagree", "Please disagree with the proposed price."),
            ],
        ),
        TaskId::Extes => ActionCatalog::new(
            task,
            &[
                (
                    "Reflective Statements",
                    "Please reflect back what the user has expressed to show you understand their thoughts or feelings.",
                ),
                (
                    "Clarification",
                    "Please ask a question to clarify what the user meant or provide more detail about what they said.",
                ),
                (
                    "Emotional Validation",
                    "Please acknowledge and validate the user's emotional experience in a caring way.",
                ),
                (
                    "Empathetic Statements",
                    "Please express empathy toward the user's situation to show that you genuinely care.",
                ),
                (
                    "Affirmation",
                    "Please affirm the user's efforts, strengths, or positive qualities.",
                ),
                (
                    "Offer Hope",
                    "Please offer a message of hope or optimism about the user's situation.",
                ),
                (
                    "Avoid Judgment and Criticism",
                    "Please respond in a supportive and neutral way without making any judgments.",
                ),
                (
                    "Suggest Options",
                    "Please suggest possible options or actions the user could consider.",
                ),
                (
                    "Collaborative Planning",
                    "Please invite the user to collaboratively make a plan or decision together.",
                ),
                (
                    "Provide Different Perspectives",
                    "Please help the user consider a different point of view or alternative way of thinking.",
                ),
                (
                    "Reframe Negative Thoughts",
                    "Please help the user reframe their negative thoughts into something more constructive.",
                ),
                (
                    "Share Information",
                    "Please provide factual or helpful information that is relevant to the user's situation.",
                ),
                (
                    "Normalize Experiences",
                    "Please reassure the user that their feelings or experiences are common and understandable.",
                ),
                (
                    "Promote Self-Care Practices",
                    "Please encourage the user to engage in healthy self-care activities.",
                ),
                (
                    "Stress Management",
                    "Please offer strategies or tips to help the user reduce or manage stress.",
                ),
                (
                    "Others",
                    "Please continue the conversation in a natural and supportive manner.",
                ),
            ],
        ),
        TaskId::P4g => ActionCatalog::new(
            task,
            &[
                (
                    "Proposition of donation",
                    "Please suggest that the persuadee make a donation to 'Save the Children'.",
                ),
                (
                    "Proposition of amount to be donated",
                    "Please propose a small donation amount (e.g., $1 or $2) that the persuadee could consider.",
                ),
                (
                    "Proposition of confirmation of donation",
                    "Please ask the persuadee to confirm if they are ready to make the donation.",
                ),
                (
                    "Proposition of more donation",
                    "Please suggest that the persuadee could consider donating a bit more if they are willing.",
                ),
                (
                    "Experience affirmation",
                    "Please affirm the persuadee's views or experiences to build rapport and trust.",
                ),
                (
                    "Greeting",
                    "Please start or continue the conversation with a polite and friendly greeting.",
                ),
                (
                    "Ask for donation rejection purpose",
                    "Please ask the persuadee why they might be hesitant or unwilling to donate.",
                ),
                (
                    "Thank",
                    "Please thank the persuadee for their time, attention, or for considering a donation.",
                ),
                (
                    "Logical appeal",
                    "Please use logical reasoning to explain why donating to 'Save the Children' is impactful and effective.",
                ),
                (
                    "Emotion appeal",
                    "Please appeal to the persuadee's emotions by highlighting the struggles of children in need.",
                ),
                (
                    "Credibility appeal",
                    "Please mention the credibility or reputation of 'Save the Children' to strengthen your argument.",
                ),
                (
                    "Foot in the door",
                    "Please start by asking for a very small commitment to increase the chance of later agreement.",
                ),
                (
                    "Self-modeling",
                    "Please share a statement like 'I also donated' to encourage the persuadee to do the same.",
                ),
                (
                    "Donation information",
                    "Please share factual information about how donations are used or how they help children.",
                ),
                (
                    "Personal story",
                    "Please share a short, emotional personal story about a child helped by the charity.",
                ),
                (
                    "Source-related inquiry",
                    "Please ask the persuadee where they usually get information about charities or donations.",
                ),
                (
                    "Task-related inquiry",
                    "Please ask the persuadee about their experiences or preferences related to charitable giving.",
                ),
                (
                    "Personal-related inquiry",
                    "Please ask a personal question that helps understand the persuadee's values or priorities.",
                ),
                (
                    "Neutral inquiry",
                    "Please ask a general question to keep the conversation going and learn more about the persuadee.",
                ),
            ],
        ),
    }
}

/// The critic verdict map for `task`: verbatim option sentences paired with
/// their scalar rewards and terminal status. Price negotiation has no fixed
/// option list (deal extraction handles it) beyond the no-deal sentence.
pub fn verdict_map(task: TaskId) -> Vec<VerdictRule> {
    use TerminalStatus::*;
    match task {
        TaskId::Esconv => vec![
            VerdictRule::new("No, the patient feels worse.", -1.0, Ongoing),
            VerdictRule::new("No, the patient feels the same.", -0.5, Ongoing),
            VerdictRule::new("No, but the patient feels somewhat better.", 0.5, Ongoing),
            VerdictRule::new(
                "Yes, the patient's emotional issues have been resolved.",
                1.0,
                Completed,
            ),
        ],
        TaskId::Cima => vec![
            VerdictRule::new("No, the Student made an incorrect translation.", -1.0, Ongoing),
            VerdictRule::new("No, the Student did not try to translate.", -0.5, Ongoing),
            // The full option embeds the target sentence; match on the fixed prefix.
            VerdictRule::new("No, the Student only correctly translated a part of", 0.5, Ongoing),
            VerdictRule::new(
                "Yes, the Student correctly translated the whole sentence",
                1.0,
                Completed,
            ),
        ],
        TaskId::P4g => vec![
            VerdictRule::new("The persuadee has explicitly refused.", -1.0, Ongoing),
            VerdictRule::new("The persuadee remains neutral about donating.", -0.5, Ongoing),
            VerdictRule::new(
                "The persuadee has a positive attitude towards donating but hasn't decided yet.",
                0.1,
                Ongoing,
            ),
            VerdictRule::new("The persuadee has decided to donate.", 1.0, Completed),
        ],
        // The "better" option is unmapped for this task; its "same" carries +0.5.
        TaskId::Extes => vec![
            VerdictRule::new("No, the patient feels worse.", -1.0, Ongoing),
            VerdictRule::new("No, the patient feels the same.", 0.5, Ongoing),
            VerdictRule::new(
                "Yes, the patient's emotional issues have been resolved.",
                1.0,
                Completed,
            ),
        ],
        TaskId::Cb => vec![VerdictRule::new("They have not reached a deal.", 0.0, Ongoing)],
    }
}

/// A small bundled case set per task, used by the mock simulation, the CLI
/// defaults, and tests.
pub fn sample_cases(task: TaskId) -> Vec<CaseInfo> {
    match task {
        TaskId::Esconv => vec![
            CaseInfo::new(
                task,
                "I think I will be losing my job soon. I just read an email talking about the \
                 need for us to cut costs and also how we have not got any support from the \
                 government.",
            )
            .with_text_slot("emotion_type", "fear")
            .with_text_slot("problem_type", "job crisis"),
            CaseInfo::new(
                task,
                "I found out my boyfriend and my best friend have been seeing each other behind \
                 my back.",
            )
            .with_text_slot("emotion_type", "disgust")
            .with_text_slot("problem_type", "problems with friends"),
            CaseInfo::new(
                task,
                "I moved to a new city for work and I have not made any friends yet. I feel \
                 alone most evenings.",
            )
            .with_text_slot("emotion_type", "sadness")
            .with_text_slot("problem_type", "loneliness"),
        ],
        TaskId::Cima => vec![
            CaseInfo::new(task, "The cat is on the table.")
                .with_text_slot("english_sentence", "The cat is on the table."),
            CaseInfo::new(task, "The book is next to the window.")
                .with_text_slot("english_sentence", "The book is next to the window."),
        ],
        TaskId::Cb => vec![
            CaseInfo::new(
                task,
                "A well maintained mountain bike with new tires and recently serviced brakes.",
            )
            .with_text_slot("product", "mountain bike")
            .with_text_slot(
                "product_description",
                "A well maintained mountain bike with new tires and recently serviced brakes.",
            )
            .with_numeric_slot(SLOT_LISTED_PRICE, 150.0)
            .with_numeric_slot(SLOT_BUYER_TARGET_PRICE, 100.0)
            .with_numeric_slot(SLOT_SELLER_DESIRED_PRICE, 150.0),
            CaseInfo::new(
                task,
                "A vintage laptop in working condition, battery holds a full charge.",
            )
            .with_text_slot("product", "vintage laptop")
            .with_text_slot(
                "product_description",
                "A vintage laptop in working condition, battery holds a full charge.",
            )
            .with_numeric_slot(SLOT_LISTED_PRICE, 300.0)
            .with_numeric_slot(SLOT_BUYER_TARGET_PRICE, 200.0)
            .with_numeric_slot(SLOT_SELLER_DESIRED_PRICE, 280.0),
            CaseInfo::new(
                task,
                "A brass floor lamp with a linen shade, no scratches.",
            )
            .with_text_slot("product", "floor lamp")
            .with_text_slot(
                "product_description",
                "A brass floor lamp with a linen shade, no scratches.",
            )
            .with_numeric_slot(SLOT_LISTED_PRICE, 80.0)
            .with_numeric_slot(SLOT_BUYER_TARGET_PRICE, 40.0)
            .with_numeric_slot(SLOT_SELLER_DESIRED_PRICE, 75.0),
        ],
        TaskId::P4g => vec![
            CaseInfo::new(
                task,
                "A conversation aimed at convincing the persuadee to donate to the charity \
                 'Save the Children'.",
            ),
            CaseInfo::new(
                task,
                "The persuadee has never heard of 'Save the Children' before this conversation.",
            ),
        ],
        TaskId::Extes => vec![
            CaseInfo::new(
                task,
                "I have been struggling since my partner and I separated last month.",
            )
            .with_text_slot("problem_type", "breakups or divorce"),
            CaseInfo::new(
                task,
                "My workload keeps growing and I cannot keep up; I feel burned out.",
            )
            .with_text_slot("problem_type", "work stress"),
        ],
    }
}

/// Parses a JSON array of cases from `text` and validates each one.
pub fn load_cases(text: &str) -> Result<Vec<CaseInfo>, crate::model::ModelError> {
    let cases: Vec<CaseInfo> = serde_json::from_str(text)
        .map_err(|e| crate::model::ModelError::InvalidCase(format!("bad cases file: {e}")))?;
    for case in &cases {
        case.validate()?;
    }
    Ok(cases)
}

/// Serializes cases to the JSON format accepted by [`load_cases`].
pub fn cases_to_json(cases: &[CaseInfo]) -> String {
    serde_json::to_string_pretty(cases).expect("cases serialize")
}

/// Map of all five profiles, keyed by task.
pub fn all_profiles() -> BTreeMap<TaskId, TaskProfile> {
    TaskId::ALL.iter().map(|t| (*t, profile(*t))).collect()
}
