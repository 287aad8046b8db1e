//! Import adapter for OpenI (Indiana University chest X-ray) report XML.
//!
//! Each `<eCitation>` becomes one report: id from `<uId id=..>`, text from
//! the FINDINGS and IMPRESSION abstract sections, and gold label from the
//! major MeSH terms (all `normal` means 0, anything else 1). Records with
//! neither section are skipped.

use std::fs;
use std::path::{Path, PathBuf};

use quick_xml::events::Event;
use quick_xml::{Reader, XmlVersion};

use super::{BodyRegion, Report};
use crate::{io, Error, Result};

const SECTIONS: [&str; 2] = ["FINDINGS", "IMPRESSION"];

pub(super) fn load(path: &Path) -> Result<Vec<Report>> {
    let mut files: Vec<PathBuf> = if path.is_dir() {
        fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
            .collect()
    } else {
        vec![path.to_path_buf()]
    };
    files.sort();

    let mut reports = Vec::new();
    for file in files {
        let text = io::read_to_string(&file)?;
        reports.extend(parse(&file, &text)?);
    }
    Ok(reports)
}

#[derive(Default)]
struct Record {
    id: Option<String>,
    sections: Vec<(String, String)>,
    majors: Vec<String>,
}

#[derive(PartialEq)]
enum Capture {
    None,
    Section(String),
    Major,
}

pub(super) fn parse(path: &Path, xml: &str) -> Result<Vec<Report>> {
    let mut reader = Reader::from_str(xml);
    let mut out = Vec::new();
    let mut record: Option<Record> = None;
    let mut capture = Capture::None;
    let mut buf = String::new();
    let mut count = 0usize;

    let err = |count: usize, e: &dyn std::fmt::Display| Error::Parse {
        path: path.to_path_buf(),
        record: count.max(1),
        message: e.to_string(),
    };

    loop {
        let event = reader.read_event().map_err(|e| err(count + 1, &e))?;
        match event {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == "eCitation" => {
                count += 1;
                record = Some(Record::default());
            }
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == "uId" => {
                if let (Some(r), Some(a)) = (record.as_mut(), e.try_get_attribute("id").map_err(|x| err(count, &x))?) {
                    let v = a.normalized_value(XmlVersion::Implicit1_0).map_err(|x| err(count, &x))?;
                    r.id = Some(v.into_owned());
                }
            }
            Event::Start(e) if e.name().as_ref() == "AbstractText" => {
                let label = match e.try_get_attribute("Label").map_err(|x| err(count, &x))? {
                    Some(a) => a.normalized_value(XmlVersion::Implicit1_0).map_err(|x| err(count, &x))?.into_owned(),
                    None => String::new(),
                };
                buf.clear();
                capture = Capture::Section(label);
            }
            Event::Start(e) if e.name().as_ref() == "major" => {
                buf.clear();
                capture = Capture::Major;
            }
            Event::Text(t) if capture != Capture::None => buf.push_str(&t.xml10_content()),
            Event::CData(t) if capture != Capture::None => buf.push_str(&t.xml10_content()),
            Event::GeneralRef(r) if capture != Capture::None => {
                if let Some(c) = r.resolve_char_ref().map_err(|x| err(count, &x))? {
                    buf.push(c);
                } else {
                    buf.push_str(match r.xml10_content().as_ref() {
                        "lt" => "<",
                        "gt" => ">",
                        "amp" => "&",
                        "quot" => "\"",
                        "apos" => "'",
                        _ => "",
                    });
                }
            }
            Event::End(e) if e.name().as_ref() == "AbstractText" || e.name().as_ref() == "major" => {
                if let Some(r) = record.as_mut() {
                    match std::mem::replace(&mut capture, Capture::None) {
                        Capture::Section(label) => r.sections.push((label, buf.trim().to_string())),
                        Capture::Major => r.majors.push(buf.trim().to_string()),
                        Capture::None => {}
                    }
                }
                capture = Capture::None;
            }
            Event::End(e) if e.name().as_ref() == "eCitation" => {
                if let Some(r) = record.take() {
                    if let Some(report) = finish(r, count).map_err(|m| err(count, &m))? {
                        out.push(report);
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

fn finish(r: Record, count: usize) -> std::result::Result<Option<Report>, String> {
    let text = SECTIONS
        .iter()
        .filter_map(|want| {
            r.sections
                .iter()
                .find(|(label, body)| label.eq_ignore_ascii_case(want) && !body.is_empty())
                .map(|(_, body)| body.as_str())
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    if text.is_empty() {
        return Ok(None);
    }
    let id = r.id.ok_or_else(|| format!("record {count} has no <uId>"))?;
    let gold_label = (!r.majors.is_empty()).then(|| {
        let all_normal = r.majors.iter().all(|m| m.eq_ignore_ascii_case("normal"));
        (!all_normal) as u8
    });
    Ok(Some(Report {
        id,
        text,
        body_region: Some(BodyRegion::Chest),
        gold_label,
    }))
}
