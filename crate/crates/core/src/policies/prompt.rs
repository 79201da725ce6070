use super::view::{HistoryView, Sampling};

/// Fixed sentences of the system prompt; `{instruction}` is substituted.
pub const PROMPT_TEMPLATE: &str = "Task: {instruction}\n\
\n\
Note: The provided images are a chronological sequence of image pairs. \
For each time step, two images are provided: the first is the Third-Person View, \
and the second is the corresponding Wrist View.\n\
\n\
The final pair represents the current state, while all preceding pairs are history.\n\
\n\
Based on this multi-view sequence, analyze the robot's progress and determine the immediate next action.\n";

fn sampling_label(s: Sampling) -> String {
    match s {
        Sampling::Stride { n_h: 0, .. } => "current frame only".into(),
        Sampling::Stride { n_h, interval } => format!("fixed stride, N_h={n_h}, I={interval}"),
        Sampling::Keyframes => "keyframes".into(),
    }
}

/// The system prompt followed by one line per visible frame, oldest first.
/// This renderer has a single view per frame, so each "pair" is listed once.
pub fn render_prompt(instruction: &str, view: &HistoryView) -> String {
    let mut out = PROMPT_TEMPLATE.replace("{instruction}", instruction);
    out.push_str(&format!("\nSequence ({}):\n", sampling_label(view.sampling)));
    let n = view.history.len() + 1;
    for (i, o) in view.frames().enumerate() {
        let role = if i + 1 == n { "current" } else { "history" };
        out.push_str(&format!("[{}/{n}] t={} {role}\n", i + 1, o.t));
    }
    out
}
