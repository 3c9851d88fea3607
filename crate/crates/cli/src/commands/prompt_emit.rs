use geoalign::predparse::{serialize_prompt, Task};

use super::{write_err, CliError, CmdResult};
use crate::args::PromptEmitArgs;
use crate::formats::{PromptLine, PromptRequest};
use crate::io::{read_jsonl, to_jsonl, write_atomic, Diagnostic};

pub fn run(args: &PromptEmitArgs) -> CmdResult {
    let fallback: Option<Task> = match args.task.as_deref().map(str::parse) {
        None => None,
        Some(Ok(t)) => Some(t),
        Some(Err(e)) => return Err(vec![Diagnostic::new(&args.input, None, format!("--task: {e}"))].into()),
    };
    let rows = read_jsonl::<PromptRequest>(&args.input)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut diags = Vec::new();
    for (line, r) in rows {
        let Some(task) = r.task.or(fallback) else {
            diags.push(Diagnostic::new(&args.input, Some(line), "record has no task and --task is not set"));
            continue;
        };
        match serialize_prompt(task, &r.payload) {
            Ok(prompt) => out.push(PromptLine {
                sample_id: r.sample_id,
                task,
                prompt,
            }),
            Err(e) => diags.push(Diagnostic::new(&args.input, Some(line), e.to_string())),
        }
    }
    if !diags.is_empty() {
        return Err(CliError::Invalid(diags));
    }
    write_atomic(&args.out, &to_jsonl(&out)).map_err(write_err(&args.out))?;
    Ok(format!("{} prompts", out.len()))
}
