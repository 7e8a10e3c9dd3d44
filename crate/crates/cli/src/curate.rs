use std::io::{BufRead, Write};
use std::path::Path;

use chrono::Utc;
use riskcal_core::curation::{CollectionManifest, CurationLabel, Granularity, Relevance};
use riskcal_core::Result;

enum Answer {
    Label(CurationLabel),
    Skip,
    Quit,
}

/// Reads one trimmed, lower-cased line; `None` at end of input.
fn read_choice(input: &mut dyn BufRead) -> Result<Option<String>> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim().to_lowercase()))
}

fn ask(input: &mut dyn BufRead, out: &mut dyn Write) -> Result<Answer> {
    loop {
        write!(out, "relevance [h]uman-subject, [n]on-human, [s]kip, [q]uit: ")?;
        out.flush()?;
        let Some(choice) = read_choice(input)? else {
            return Ok(Answer::Quit);
        };
        let relevance = match choice.as_str() {
            "h" => Relevance::HumanSubject,
            "n" => Relevance::NonHuman,
            "s" => return Ok(Answer::Skip),
            "q" => return Ok(Answer::Quit),
            _ => continue,
        };
        let granularity = if relevance == Relevance::HumanSubject {
            loop {
                write!(out, "granularity [i]ndividual-record, [a]ggregate: ")?;
                out.flush()?;
                match read_choice(input)?.as_deref() {
                    None => return Ok(Answer::Quit),
                    Some("i") => break Granularity::IndividualRecord,
                    Some("a") => break Granularity::Aggregate,
                    Some(_) => continue,
                }
            }
        } else {
            Granularity::Unknown
        };
        write!(out, "note (optional): ")?;
        out.flush()?;
        let mut label = CurationLabel::new(relevance, granularity, Utc::now());
        let mut note = String::new();
        input.read_line(&mut note)?;
        if !note.trim().is_empty() {
            label = label.with_note(note.trim());
        }
        return Ok(Answer::Label(label));
    }
}

/// Prompts for every undecided entry in key order. The manifest is saved
/// after each decision, so quitting keeps earlier labels.
pub fn interactive(
    path: &Path,
    strict: bool,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<()> {
    let mut manifest = CollectionManifest::load(path)?;
    let pending: Vec<_> = manifest
        .entries
        .values()
        .filter(|e| e.label.relevance == Relevance::Undecided)
        .map(|e| e.key.clone())
        .collect();
    let total = pending.len();
    for (i, key) in pending.into_iter().enumerate() {
        let entry = manifest.get(&key)?;
        writeln!(out, "\n[{}/{total}] {key}  {}", i + 1, entry.metadata.title)?;
        writeln!(out, "  quasi-identifiers: {}", entry.qi_hits.join(", "))?;
        if !entry.metadata.description.is_empty() {
            writeln!(out, "  {}", entry.metadata.description)?;
        }
        match ask(input, out)? {
            Answer::Label(label) => {
                manifest = manifest.label_dataset(&key, label)?;
                manifest.save(path)?;
            }
            Answer::Skip => {}
            Answer::Quit => break,
        }
    }
    manifest.build_collection(strict)?;
    manifest.save(path)?;
    writeln!(out, "\n{}", manifest.funnel_report().to_text())?;
    Ok(())
}

pub fn review_rejected(path: &Path, out: &mut dyn Write) -> Result<()> {
    let manifest = CollectionManifest::load(path)?;
    for e in manifest.rejected() {
        let note = e.label.note.as_deref().unwrap_or("");
        writeln!(
            out,
            "{}\t{}\t[{}]\t{note}",
            e.key,
            e.metadata.title,
            e.qi_hits.join(", ")
        )?;
    }
    Ok(())
}
