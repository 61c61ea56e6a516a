//! Prompt rendering for every LLM role.
//!
//! Each task carries fixed role-play prompt templates, kept verbatim
//! including their original spelling. Each renderer also has an
//! emotion-ablated variant that omits every segment carrying the tracked
//! emotion trace.
//!
//! Prompts are rendered as one self-contained message (instruction followed
//! by directive). When a character budget is given and the rendered prompt
//! exceeds it, the oldest history turns are dropped pairwise until it fits.

use crate::model::{DialogueState, Speaker, Utterance};
use crate::tasks::TaskProfile;
use crate::model::TaskId;

/// Renders `history` as `Role: text` lines using the task's role names.
pub fn render_conversation(history: &[Utterance], profile: &TaskProfile) -> String {
    history
        .iter()
        .map(|u| {
            let role = match u.speaker {
                Speaker::System => profile.system_role,
                Speaker::User => profile.user_role,
            };
            format!("{role}: {text}", text = u.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Formats a price slot without a trailing `.0` for whole amounts.
pub fn fmt_price(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

/// Builds a prompt under an optional character budget by re-rendering with
/// the oldest history pair removed until the prompt fits (or no pairs
/// remain).
fn fit_to_budget(
    history: &[Utterance],
    budget: Option<usize>,
    render: impl Fn(&[Utterance]) -> String,
) -> String {
    let mut start = 0;
    loop {
        let prompt = render(&history[start..]);
        match budget {
            Some(limit) if prompt.len() > limit && history.len() - start >= 2 => {
                start += 2;
            }
            _ => return prompt,
        }
    }
}

fn policy_instruction(task: TaskId, include_emotions: bool) -> &'static str {
    match (task, include_emotions) {
        (TaskId::Esconv | TaskId::Extes, true) => {
            "You are a specialist in policy-planning for emotional support conversations. \
             The following is a conversation between a therapist and a patient. The patient's \
             emotion states throughout the conversation are also provided. Your task is to \
             decide the most therapeutically helpful next action the therapist should do based \
             on the patient's emotion history and the conversation flow. The therapist's goal \
             is to help the patient feel emotionally understood, supported, and to make \
             progress toward emotional resolution."
        }
        (TaskId::Esconv | TaskId::Extes, false) => {
            "You are a specialist in policy-planning for emotional support conversations. \
             The following is a conversation between a therapist and a patient. Your task is to \
             decide the most therapeutically helpful next action the therapist should do based \
             on the conversation flow. The therapist's goal is to help the patient feel \
             emotionally understood, supported, and to make progress toward emotional \
             resolution."
        }
        (TaskId::Cima, true) => {
            "You are a specialist in policy-planning for tutoring interactions between a \
             teacher and a student. The following is a conversation between a teacher and a \
             student. The student's emotional states throughout the conversation are also \
             provided. Your task is to decide what the teacher should do next based on the \
             student's progress, emotion history and flow of the conversation. The goal is to \
             effectively guide the student towards correctly translating the target English \
             sentence into Italian in a timely and effective manner."
        }
        (TaskId::Cima, false) => {
            "You are a specialist in policy-planning for tutoring interactions between a \
             teacher and a student. The following is a conversation between a teacher and a \
             student. Your task is to decide what the teacher should do next based on the \
             student's progress and flow of the conversation. The goal is to effectively guide \
             the student towards correctly translating the target English sentence into \
             Italian in a timely and effective manner."
        }
        (TaskId::Cb, true) => {
            "You are a specialist in policy planning for negotiation between a buyer and a \
             seller. The following is a conversation between a buyer and a seller. The \
             seller's emotion states throughout the conversation are also provided. Your task \
             is to decide what action the buyer should take next based on the seller's emotion \
             history, the negotiation flow, and the conversation flow. The goal is to maximize \
             the buyer's benefit."
        }
        (TaskId::Cb, false) => {
            "You are a specialist in policy planning for negotiation between a buyer and a \
             seller. The following is a conversation between a buyer and a seller. Your task \
             is to decide what action the buyer should take next based on the negotiation flow \
             and the conversation flow. The goal is to maximize the buyer's benefit."
        }
        (TaskId::P4g, true) => {
            "You are a specialist in policy-planning for persuasive conversations. Your job is \
             to select the best next steps the persuader should take to guide the persuadee \
             toward making a donation to 'Save the Children'. Use the persuadee's emotional \
             history and the conversation context to make your decision. Focus on choosing \
             actions that are persuasive, emotionally appropriate, and therapeutic."
        }
        (TaskId::P4g, false) => {
            "You are a specialist in policy-planning for persuasive conversations. Your job is \
             to select the best next steps the persuader should take to guide the persuadee \
             toward making a donation to 'Save the Children'. Use the conversation context to \
             make your decision. Focus on choosing actions that are persuasive, emotionally \
             appropriate, and therapeutic."
        }
    }
}

/// The policy-planner prompt: instruction, conversation, emotion history,
/// the numbered option list in catalog order, and the top-k directive.
pub fn policy_prompt(
    profile: &TaskProfile,
    state: &DialogueState,
    k: usize,
    include_emotions: bool,
    budget: Option<usize>,
) -> String {
    let instruction = policy_instruction(profile.task_id, include_emotions);
    let options = profile
        .catalog
        .actions
        .iter()
        .map(|a| format!("({}) {}", a.index, a.name))
        .collect::<Vec<_>>()
        .join("\n");
    fit_to_budget(&state.history, budget, |history| {
        let conversation = render_conversation(history, profile);
        let emotion_line = if include_emotions {
            format!("Emotion History: {}\n\n", state.emotions.render())
        } else {
            String::new()
        };
        format!(
            "{instruction}\n\nConversation so far: {conversation}\n\n{emotion_line}\
             Options:\n{options}\n\nChoose the TOP {k} most suitable actions from the given \
             options list. Reply ONLY in the given format: 1,2,4,5"
        )
    })
}

/// The system (planning agent) prompt for one turn, with the chosen
/// action's strategy prompt injected.
pub fn system_prompt(
    profile: &TaskProfile,
    state: &DialogueState,
    strategy_prompt: &str,
    include_emotions: bool,
    budget: Option<usize>,
) -> String {
    let case = &state.case;
    let instruction = match profile.task_id {
        TaskId::Esconv | TaskId::Extes => {
            "You are role playing as a therapist in a counseling conversation with a patient. \
             Your goal is to help the patient resolve their emotional issues and assist them \
             in understanding and working through their challenges."
                .to_string()
        }
        TaskId::Cima => format!(
            "You are role-playing as a teacher in a tutoring conversation.\n\
             Your task is to guide the student to translate the English sentence \
             {sentence} into Italian.\n\
             Please do not tell the student the answer or ask the student about other \
             exercises.\n\
             {strategy_prompt}",
            sentence = case.text_slot("english_sentence"),
        ),
        TaskId::Cb => format!(
            "You are role playing as a skilled buyer in a price bargaining game.\n\
             You are trying to buy the {product} at your target price of {target}.\n\
             Product description: {description}.\n\n\
             Your goal is to negotiate effectively and get the lowest price without losing \
             the deal.",
            product = case.text_slot("product"),
            target = fmt_price(case.buyer_target_price().unwrap_or(0.0)),
            description = case.text_slot("product_description"),
        ),
        TaskId::P4g => {
            "You are role playing as a persuader. Your goal is to persuade the persuadee to \
             donate to a charity called 'Save the Children'. 'Save the Children' is \
             head-quartered in London, and they work to fight poverty around the world, \
             especially in developing countries and war zones. Small donations like $1 or $2 \
             go a long way to help."
                .to_string()
        }
    };
    let tail = match (profile.task_id, include_emotions) {
        (TaskId::Esconv | TaskId::Extes, true) => {
            "Please infer the patient's emotional state in one word (Example: Emotion: ...) \
             followed by your response, which should be only one short and succint sentence \
             (Response: ...)."
        }
        (TaskId::Esconv | TaskId::Extes, false) => {
            "Please reply with only one short and succint sentence (Response: ...)."
        }
        (TaskId::Cima, true) => {
            "Based on the student's message, infer their emotional state in (e.g: Emotion: \
             ...).\nThen give your reply as the teacher in one short and helpful sentence \
             (e.g: Response: ...)."
        }
        (TaskId::Cima, false) => {
            "Give your reply as the teacher in one short and helpful sentence (e.g: Response: \
             ...)."
        }
        (TaskId::Cb, true) => {
            "First, infer the seller's emotional state in one word (Example: Emotion: ...).\n\
             Then, respond as the buyer using ONE short and persuasive sentence (Response: \
             ...)."
        }
        (TaskId::Cb, false) => {
            "Respond as the buyer using ONE short and persuasive sentence (Response: ...)."
        }
        (TaskId::P4g, true) => {
            "First, infer the persuadee's emotional state in one word (Example: Emotion: \
             ...).\n\nThen, based on that emotional state, respond as the persuader using ONE \
             short and persuasive sentence (Response: ...)."
        }
        (TaskId::P4g, false) => {
            "Respond as the persuader using ONE short and persuasive sentence (Response: ...)."
        }
    };
    let last_said = |history: &[Utterance]| -> String {
        let last_user = history
            .iter()
            .rev()
            .find(|u| u.speaker == Speaker::User)
            .map(|u| u.text.as_str());
        match last_user {
            Some(text) => format!(
                "The {role} just said: {text}.\n\n",
                role = profile.user_role.to_lowercase()
            ),
            None => String::new(),
        }
    };
    fit_to_budget(&state.history, budget, |history| {
        let conversation = render_conversation(history, profile);
        format!(
            "{instruction}\n\nConversation so far: {conversation}\n\n{last}{tail}\n\n\
             {strategy_prompt}",
            last = last_said(history),
        )
    })
}

/// The simulated-user prompt for one turn. The user role never sees
/// strategy prompts or the emotion trace.
pub fn user_prompt(profile: &TaskProfile, state: &DialogueState, budget: Option<usize>) -> String {
    let case = &state.case;
    let instruction = match profile.task_id {
        TaskId::Esconv => format!(
            "You are role playing as a patient in a counseling conversation with a therapist. \
             You are seeking help from the therapist, because you are dealing with emotional \
             issues related to {emotion} regarding {problem}",
            emotion = case.text_slot("emotion_type"),
            problem = case.text_slot("problem_type"),
        ),
        TaskId::Extes => format!(
            "You are role playing as a patient in a counseling conversation with a therapist. \
             You are seeking help from the therapist, because you are dealing with emotional \
             issues related to {problem}.",
            problem = case.text_slot("problem_type"),
        ),
        TaskId::Cima => format!(
            "You are role-playing as a student who is learning Italian in a tutoring session. \
             You do not know how to translate {sentence} into Italian.\n\n\
             Your goal is to learn through interaction with the teacher. Respond naturally as \
             a student would.",
            sentence = case.text_slot("english_sentence"),
        ),
        TaskId::Cb => format!(
            "You are role playing as a persuasive seller in a price bargaining game.\n\n\
             You are trying to sell the {product} at your desired price of {price}.\n\
             Product Description: {description}",
            product = case.text_slot("product"),
            price = fmt_price(case.seller_desired_price().unwrap_or(0.0)),
            description = case.text_slot("product_description"),
        ),
        TaskId::P4g => "You are role playing as a persuadee in a persuasive conversation.\n\
             A persuader is trying to convince you to donate to a charity called 'Save the \
             Children'"
            .to_string(),
    };
    let tail = match profile.task_id {
        TaskId::Esconv | TaskId::Extes => {
            "Express how you feel in a natural, emotional way. Please reply with only one \
             short and succinct sentence."
        }
        TaskId::Cima => {
            "Please reply as a student with only one short and natural sentence.\n\n\
             If you're confused, it's okay to ask for clarification."
        }
        TaskId::Cb => "Respond as the seller in ONE short, persuasive sentence.",
        TaskId::P4g => "Respond as the persuadee in ONE short sentence.",
    };
    fit_to_budget(&state.history, budget, |history| {
        let conversation = render_conversation(history, profile);
        let last = history
            .iter()
            .rev()
            .find(|u| u.speaker == Speaker::System)
            .map(|u| {
                format!(
                    "The {role} just said: {text}.\n\n",
                    role = profile.system_role.to_lowercase(),
                    text = u.text
                )
            })
            .unwrap_or_default();
        format!("{instruction}\n\nConversation so far: {conversation}\n\n{last}{tail}")
    })
}

/// The critic prompt judging the episode so far.
pub fn critic_prompt(
    profile: &TaskProfile,
    state: &DialogueState,
    include_emotions: bool,
    budget: Option<usize>,
) -> String {
    let case = &state.case;
    let emotions = state.emotions.render();
    let instruction = match profile.task_id {
        TaskId::Esconv => format!(
            "You are an expert in assessing counseling sessions between a patient and a \
             therapist.\nYour task is to evaluate whether the conversation helped improve the \
             patient's emotional state.\nThe session concerns the emotion type {emotion} and \
             the problem type {problem}.",
            emotion = case.text_slot("emotion_type"),
            problem = case.text_slot("problem_type"),
        ),
        TaskId::Extes => format!(
            "You are an expert in assessing counseling sessions between a patient and a \
             therapist. Your task is to evaluate whether the conversation helped improve the \
             patient's emotional state. The session concerns the the problem of: {problem}.",
            problem = case.text_slot("problem_type"),
        ),
        TaskId::Cima => {
            let base = format!(
                "You are role-playing as an expert in evaluating tutoring conversations \
                 between a teacher and a student.\n\nThe goal is to evaluate whether the \
                 student correctly translated the English sentence {sentence} into Italian.",
                sentence = case.text_slot("english_sentence"),
            );
            if include_emotions {
                format!(
                    "{base}\n\nThe emotion states of the student during the conversation \
                     were: {emotions}"
                )
            } else {
                base
            }
        }
        TaskId::Cb => {
            let base = "You are an expert in evaluating negotiations between a buyer and a \
                        seller.\nYour job is to determine if they have successfully reached a \
                        deal at the end of the conversation."
                .to_string();
            if include_emotions {
                format!(
                    "{base} The seller's emotional states throughout the conversation were: \
                     {emotions}"
                )
            } else {
                base
            }
        }
        TaskId::P4g => {
            let base = "You are an expert in evaluating persuasive conversations between a \
                        persuader and a persuadee.\nYour job is to determine if the persuader \
                        has successfully convinced the persuadee to donate to a charity called \
                        'Save the Children'."
                .to_string();
            if include_emotions {
                format!(
                    "{base} The persuadee's emotional states throughout the conversation \
                     were: {emotions}"
                )
            } else {
                base
            }
        }
    };
    let directive = match profile.task_id {
        TaskId::Esconv | TaskId::Extes => {
            let emotion_line = if include_emotions {
                format!("Emotion History: {emotions}.\n\n")
            } else {
                String::new()
            };
            let basis = if include_emotions {
                "Based on the conversation and emotional trajectory"
            } else {
                "Based on the conversation"
            };
            format!(
                "{emotion_line}{basis}, please respond with ONE AND ONLY ONE of the \
                 following:\n\n\
                 - No, the patient feels worse.\n\
                 - No, the patient feels the same.\n\
                 - No, but the patient feels somewhat better.\n\
                 - Yes, the patient's emotional issues have been resolved."
            )
        }
        TaskId::Cima => format!(
            "Please answer the following question strictly by choosing ONE AND ONLY ONE of \
             the exact responses listed below.\n\n\
             Did the student correctly translate the entire sentence {sentence} into \
             Italian?\n\
             Respond with one of the following options:\n\
             - No, the Student made an incorrect translation.\n\
             - No, the Student did not try to translate.\n\
             - No, the Student only correctly translated a part of {sentence}.\n\
             - Yes, the Student correctly translated the whole sentence of {sentence}.",
            sentence = case.text_slot("english_sentence"),
        ),
        TaskId::Cb => "Please determine whether the buyer and the seller have successfully \
                       reached a deal at the end of the conversation.\n\n\
                       If they have reached a deal, extract the final agreed price (as a \
                       number only) and reply with this exact format: They have reached a \
                       deal at [price].\n\n\
                       Otherwise, reply with: They have not reached a deal."
            .to_string(),
        TaskId::P4g => "Please evaluate the following conversation and strictly choose ONE of \
                        the exact responses listed below.\n\n\
                        Question: Has the persuadee has been successfully convinced to make a \
                        donation at the end of the conversation?\n\n\
                        Respond with one of the following options:\n\
                        - The persuadee has explicitly refused.\n\
                        - The persuadee remains neutral about donating.\n\
                        - The persuadee has a positive attitude towards donating but hasn't \
                        decided yet.\n\
                        - The persuadee has decided to donate."
            .to_string(),
    };
    fit_to_budget(&state.history, budget, |history| {
        let conversation = render_conversation(history, profile);
        format!("{instruction}\n\nConversation so far: {conversation}\n\n{directive}")
    })
}

/// The emotion-tracker prompt: infer one word from the user's utterance.
pub fn emotion_prompt(user_utterance: &str) -> String {
    format!(
        "Read the following message and name the speaker's current emotion. Reply with \
         exactly one word.\n\nMessage: {user_utterance}\n\nEmotion word:"
    )
}
