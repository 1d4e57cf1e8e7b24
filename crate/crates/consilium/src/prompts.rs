//! Prompt construction for every stage: complexity assessment, recruitment,
//! agent initialization, solo answering, team interaction, moderator
//! feedback, report writing and the final decision.
//!
//! Answer-bearing prompts end with the `**Answer:**(` priming so replies
//! tend to open with the option letter, which the parsers treat as exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::solo::Exemplar;
use crate::types::{AgentSpec, AnswerKeys, Query, Report};

/// Marker the answer prompts end with; completions usually continue it.
pub const ANSWER_PRIMER: &str = "**Answer:**(";

// ---- Question rendering ----

/// Render context, question and answer choices as one block.
pub fn question_block(q: &Query) -> String {
    let mut s = String::new();
    if let Some(ctx) = &q.context {
        if !ctx.trim().is_empty() {
            let _ = writeln!(s, "{}\n", ctx.trim());
        }
    }
    let _ = write!(s, "**Question:** {}", q.question.trim());
    if q.attachment.is_some() {
        s.push_str("\n(An image accompanies this question.)");
    }
    match q.answer_keys() {
        AnswerKeys::Letters(_) => {
            s.push('\n');
            s.push_str(&answer_choices(&q.options));
        }
        AnswerKeys::Ternary => {
            s.push_str("\nPlease answer yes, no, or maybe.");
        }
    }
    s
}

pub fn answer_choices(options: &BTreeMap<char, String>) -> String {
    let mut s = String::new();
    for (k, v) in options {
        let _ = writeln!(s, "({k}) {v}");
    }
    s.trim_end().to_string()
}

// ---- Complexity assessment ----

pub fn complexity_system() -> String {
    "You are a medical expert who conducts initial assessment and your job is to decide \
     the difficulty/complexity of the medical query."
        .to_string()
}

pub fn complexity_check(question: &str) -> String {
    format!(
        "Now, given the medical query as below, you need to decide the difficulty/complexity of it:\n\n\
         {question}\n\n\
         Please indicate the difficulty/complexity of the medical query among below options:\n\
         1) low: a PCP or general physician can answer this simple medical knowledge checking question \
         without relying heavily on consulting other specialists.\n\
         2) moderate: a PCP or general physician can answer this question in consultation with other \
         specialist in a team.\n\
         3) high: Team of multi-departmental specialists can answer to the question which requires \
         specialists consulting to another department (requires a lot of team effort to treat the case).\n\n\
         {ANSWER_PRIMER}"
    )
}

// ---- Recruitment ----

pub fn recruiter_system() -> String {
    "You are an experienced medical expert who recruits a group of experts with diverse \
     identity and ask them to discuss and solve the given medical query."
        .to_string()
}

/// Recruiter prompt asking for `n` experts. The embedded example shows the
/// expected reply shape: a numbered "Role - description" list plus a
/// communication-structure line (`==` peers, `>` consultation).
pub fn recruiter(question: &str, n: usize, want_structure: bool) -> String {
    let mut s = format!(
        "Now, given the medical query as below, you need to recruit a team to solve it:\n\n\
         {question}\n\n\
         You can recruit up to {n} experts in different medical expertise. Considering the medical \
         question and the options for the answer, what kind of experts will you recruit to better \
         make an accurate answer?\n"
    );
    if want_structure {
        s.push_str(
            "Also, you need to specify the communication structure between experts \
             (e.g., Pulmonologist == Neonatologist == Medical Geneticist == Pediatrician > Cardiologist)\n\n\
             For example, if you want to recruit five experts, your answer can be like:\n\
             1. Pulmonologist - specializes in diseases of the respiratory tract\n\
             2. Neonatologist - specializes in the care of newborn infants\n\
             3. Medical Geneticist - specializes in inherited disorders\n\
             4. Pediatrician - specializes in the care of children\n\
             5. Cardiologist - specializes in disorders of the heart\n\
             Pulmonologist == Neonatologist == Medical Geneticist == Pediatrician > Cardiologist\n\n",
        );
    } else {
        s.push_str(
            "\nFor example, your answer can be like:\n\
             1. General Physician - provides broad first-contact assessment and triage\n\n",
        );
    }
    s.push_str("Please answer in above format, and do not include your reason.\n\n");
    s.push_str(ANSWER_PRIMER);
    s
}

// ---- Agent initialization ----

/// System prompt seeding one recruited expert.
pub fn agent_init(agent: &AgentSpec) -> String {
    format!(
        "You are a {} who {}. Your job is to collaborate with other medical experts in a team.",
        agent.role,
        agent.description.trim_end_matches('.')
    )
}

/// System prompt for an expert answering alone (no team framing).
pub fn solo_system(agent: &AgentSpec) -> String {
    format!(
        "You are a {} who {}. Answer the medical question accurately.",
        agent.role,
        agent.description.trim_end_matches('.')
    )
}

pub const CONFIDENCE_LINE: &str = "State your confidence in your answer as a number from 0 to 1.";

// ---- Solo answering ----

const MCQ_PREAMBLE: &str =
    "The following are multiple choice questions (with answers) about medical knowledge.";

fn exemplar_block(ex: &Exemplar, with_rationale: bool) -> String {
    let mut s = String::new();
    let _ = write!(s, "**Question:** {}", ex.question.trim());
    if !ex.options.is_empty() {
        s.push('\n');
        s.push_str(&answer_choices(&ex.options));
    }
    match (&ex.rationale, with_rationale) {
        (Some(r), true) => {
            let _ = write!(s, "\n**Answer:** {} So the answer is ({}).", r.trim(), ex.answer);
        }
        _ => {
            let _ = write!(s, "\n**Answer:**({})", ex.answer);
        }
    }
    s
}

/// Few-shot answer prompt. With zero shots the preamble and exemplars are
/// omitted. `cot` switches exemplars to rationale-bearing form and, with no
/// exemplars, adds a step-by-step instruction.
pub fn solo_answer(q: &Query, exemplars: &[Exemplar], cot: bool) -> String {
    let mut s = String::new();
    if !exemplars.is_empty() {
        s.push_str(MCQ_PREAMBLE);
        s.push_str("\n\n");
        for ex in exemplars {
            s.push_str(&exemplar_block(ex, cot));
            s.push_str("\n\n");
        }
    }
    s.push_str(&question_block(q));
    if cot && exemplars.is_empty() {
        s.push_str("\n\nLet's think step by step, then state your final answer.");
    }
    s.push_str("\n\n");
    s.push_str(ANSWER_PRIMER);
    s
}

/// Synthesis prompt over independently sampled reasoning paths.
pub fn reasoning_synthesis(q: &Query, paths: &[String]) -> String {
    let mut s = String::new();
    s.push_str(&question_block(q));
    s.push_str("\n\nBelow are several independent reasoning paths for this question:\n\n");
    for (i, p) in paths.iter().enumerate() {
        let _ = writeln!(s, "--- Reasoning path {} ---\n{}\n", i + 1, p.trim());
    }
    s.push_str(
        "Considering the reasoning paths above, resolve any disagreement and give the single \
         best final answer.\n\n",
    );
    s.push_str(ANSWER_PRIMER);
    s
}

// ---- Team interaction ----

/// Turn prompt: current opinions from teammates, then the participation
/// question and the list of reachable experts.
pub fn interaction(opinions_block: &str, agent_list: &[String]) -> String {
    format!(
        "Given the opinions from other medical agents in your team, please indicate whether you \
         want to talk to any expert (yes/no). If not, provide your opinion.\n\n\
         {opinions_block}\n\n\
         Next, indicate the agent you want to talk to:\n{}\n\n\
         Remind your medical expertise and leave your opinion to an expert you chose. Deliver your \
         opinion once you are confident enough and in a way to convince other expert with a short \
         reason. End with your current answer in the form **Answer:** (X) and your confidence.",
        agent_list
            .iter()
            .enumerate()
            .map(|(i, a)| format!("{}. {a}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    )
}

/// Initial-opinion prompt for one team member.
pub fn initial_opinion(question: &str) -> String {
    format!(
        "{question}\n\n\
         Please give your professional assessment of this case from your own specialty's \
         perspective, with a short justification. End with your answer in the form \
         **Answer:** (X). {CONFIDENCE_LINE}"
    )
}

/// Full-preference prompt used by rank-based voting: the expert must order
/// every option from most to least likely.
pub fn ranking_request(question: &str) -> String {
    format!(
        "{question}\n\n\
         Please rank ALL of the answer options from most likely to least likely, best first, \
         using only the option letters separated by '>' (for example: C > A > B > D). Give the \
         ranking on its own line, then a one-sentence justification."
    )
}

// ---- Moderator ----

pub fn moderator_system() -> String {
    "You are a moderator overseeing a team of medical experts. You review their discussion, \
     identify where and why they disagree, and formulate feedback for each expert."
        .to_string()
}

/// Feedback request over the round log; asks for one block per expert,
/// headed by the expert's role so the reply can be split per agent.
pub fn moderator_review(round_log: &str, roles: &[String]) -> String {
    format!(
        "The team has not reached consensus. Here is the discussion so far:\n\n\
         {round_log}\n\n\
         For each of the following experts, write a short block of feedback that will help the \
         team converge: {}.\n\
         Start each block with the expert's role name followed by a colon.",
        roles.join(", ")
    )
}

// ---- Reports ----

pub fn assessment(question: &str, prior_reports: &[Report]) -> String {
    let mut s = String::new();
    s.push_str(question);
    if !prior_reports.is_empty() {
        s.push_str("\n\nReports handed over from earlier teams:\n\n");
        for r in prior_reports {
            let _ = writeln!(s, "--- {} ---\n{}\n", r.team_name, r.body.trim());
        }
    }
    s.push_str(
        "\nPlease give your professional assessment of this case from your own specialty's \
         perspective, with a short justification. End with your answer in the form **Answer:** (X).",
    );
    s
}

/// The lead's synthesis instruction over the team's member assessments.
pub fn report_synthesis(question: &str, assessments: &[(String, String)]) -> String {
    let mut s = String::new();
    s.push_str(question);
    s.push_str("\n\nYour team members provided the following assessments:\n\n");
    for (role, text) in assessments {
        let _ = writeln!(s, "--- {role} ---\n{}\n", text.trim());
    }
    s.push_str(
        "Given the assessments above, please complete the following steps:\n\
         1. Take careful and comprehensive consideration of the provided reports.\n\
         2. Extract key knowledge from the reports.\n\
         3. Derive a comprehensive and summarized analysis based on the extracted knowledge.\n\
         4. Generate a refined and synthesized report based on your analysis.",
    );
    s
}

// ---- Final decision ----

pub fn decider_system() -> String {
    "You are a final medical decision maker who reviews all opinions from different medical \
     experts and makes the final decision."
        .to_string()
}

/// Final-decision prompt over whatever evidence the pipeline produced
/// (an interaction log or a chain of reports).
pub fn final_decision(question: &str, evidence_label: &str, evidence: &str) -> String {
    format!(
        "{question}\n\n\
         Given the {evidence_label} below, please review the {evidence_label} and make the final \
         answer to the question.\n\n\
         {evidence}\n\n\
         {ANSWER_PRIMER}"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CanonicalAnswer;

    fn sample_query() -> Query {
        Query::new("q", "Which valve is most commonly affected in rheumatic heart disease?")
            .with_options([('A', "Aortic"), ('B', "Mitral"), ('C', "Tricuspid"), ('D', "Pulmonary")])
    }

    #[test]
    fn question_block_lists_choices_in_letter_order() {
        let b = question_block(&sample_query());
        assert!(b.contains("**Question:**"));
        let a = b.find("(A) Aortic").unwrap();
        let d = b.find("(D) Pulmonary").unwrap();
        assert!(a < d);
    }

    #[test]
    fn ternary_question_asks_for_the_closed_class() {
        let q = Query::new("q", "Does early mobilization reduce delirium?");
        assert!(question_block(&q).contains("yes, no, or maybe"));
    }

    #[test]
    fn answer_prompts_end_with_the_primer() {
        let q = sample_query();
        assert!(solo_answer(&q, &[], false).ends_with(ANSWER_PRIMER));
        assert!(complexity_check("q").ends_with(ANSWER_PRIMER));
        assert!(final_decision("q", "reports", "r1").ends_with(ANSWER_PRIMER));
    }

    #[test]
    fn exemplars_render_with_and_without_rationale() {
        let ex = Exemplar {
            question: "Classic finding in iron deficiency?".into(),
            options: std::collections::BTreeMap::from([
                ('A', "Koilonychia".into()),
                ('B', "Splinter hemorrhage".into()),
            ]),
            rationale: Some("Spooning of the nails is classic.".into()),
            answer: CanonicalAnswer::letter('A'),
        };
        let q = sample_query();
        let plain = solo_answer(&q, std::slice::from_ref(&ex), false);
        assert!(plain.contains("**Answer:**(A)"));
        assert!(!plain.contains("Spooning"));
        let cot = solo_answer(&q, std::slice::from_ref(&ex), true);
        assert!(cot.contains("Spooning"));
        assert!(cot.contains("So the answer is (A)."));
    }

    #[test]
    fn recruiter_prompt_includes_the_structure_notation() {
        let p = recruiter("some case", 5, true);
        assert!(p.contains("=="));
        assert!(p.contains('>'));
        assert!(p.contains("up to 5 experts"));
    }

    #[test]
    fn agent_init_weaves_role_and_description() {
        let a = AgentSpec::new("cardio", "Cardiologist", "specializes in disorders of the heart");
        let p = agent_init(&a);
        assert_eq!(
            p,
            "You are a Cardiologist who specializes in disorders of the heart. \
             Your job is to collaborate with other medical experts in a team."
        );
    }
}
