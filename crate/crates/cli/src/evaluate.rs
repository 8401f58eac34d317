use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use isr_core::corpus::{sidecar_path, Manifest, NullSidecar};
use isr_core::metrics::{pesq_external, read_transcripts, stoi, wer, Transcript};
use isr_core::signal::load_wav;

pub const INTERMITTENT: &str = "intermittent";

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    /// Manifest of the clean clips; its transcript column supplies references.
    #[arg(long)]
    pub clean: PathBuf,
    /// Manifest of the corrupted clips (the intermittent condition).
    #[arg(long)]
    pub corrupted: PathBuf,
    /// Processed condition as NAME=DIR, where DIR holds `<id>.wav`. Repeatable.
    #[arg(long = "condition", value_parser = parse_pair)]
    pub conditions: Vec<(String, PathBuf)>,
    /// ASR hypotheses as NAME=FILE (`id text` per line). Repeatable; NAME is
    /// a condition or `intermittent`.
    #[arg(long = "hypotheses", value_parser = parse_pair)]
    pub hypotheses: Vec<(String, PathBuf)>,
    /// Reference transcripts keyed by clean id; overrides the manifest column.
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// External PESQ command with {clean} and {processed} placeholders.
    #[arg(long)]
    pub pesq_command: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_pair(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=PATH, got {s:?}"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected NAME=PATH, got {s:?}"));
    }
    Ok((name.to_owned(), PathBuf::from(path)))
}

/// One utterance under one condition.
#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub id: String,
    pub source_id: String,
    pub power_mw: f64,
    pub condition: String,
    pub stoi: Option<f64>,
    pub wer: Option<f64>,
    pub pesq: Option<f64>,
    pub error: Option<String>,
}

struct Utterance {
    id: String,
    source_id: String,
    power_mw: f64,
    clean: PathBuf,
    intermittent: PathBuf,
}

#[derive(Default, Clone, Copy)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.sum += v;
            self.n += 1;
        }
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Default, Clone, Copy)]
struct Summary {
    utterances: usize,
    failed: usize,
    stoi: Mean,
    wer: Mean,
    pesq: Mean,
}

/// Relative improvement over the intermittent condition. Higher is better
/// for STOI and PESQ, lower is better for WER.
pub fn improvement(intermittent: f64, processed: f64, lower_is_better: bool) -> Option<f64> {
    if intermittent == 0.0 {
        return None;
    }
    let delta = if lower_is_better {
        intermittent - processed
    } else {
        processed - intermittent
    };
    Some(100.0 * delta / intermittent)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.digits$}"))
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:+.1}%"))
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let clean = Manifest::load(&args.clean)
        .with_context(|| format!("loading clean manifest {}", args.clean.display()))?;
    let corrupted = Manifest::load(&args.corrupted)
        .with_context(|| format!("loading corrupted manifest {}", args.corrupted.display()))?;
    let mut names = BTreeSet::new();
    for (name, _) in &args.conditions {
        if name == INTERMITTENT || !names.insert(name.clone()) {
            bail!("condition name {name:?} is reserved or repeated");
        }
    }
    crate::config::echo(&args.out, "evaluate", &args)?;

    let mut problems: Vec<String> = Vec::new();

    let mut references: BTreeMap<String, Transcript> = BTreeMap::new();
    if let Some(path) = &args.references {
        references = read_transcripts(path)?;
    } else {
        let files: BTreeSet<&PathBuf> = clean
            .records
            .iter()
            .filter_map(|r| r.transcript.as_ref())
            .collect();
        for f in files {
            references.extend(read_transcripts(f)?);
        }
    }
    let mut hypotheses: BTreeMap<String, BTreeMap<String, Transcript>> = BTreeMap::new();
    for (name, path) in &args.hypotheses {
        if name != INTERMITTENT && !names.contains(name) {
            problems.push(format!("hypotheses given for unknown condition {name}"));
            continue;
        }
        hypotheses.insert(name.clone(), read_transcripts(path)?);
    }

    let mut utterances = Vec::new();
    for rec in &corrupted.records {
        let side = match NullSidecar::load(&sidecar_path(&rec.path)) {
            Ok(s) => s,
            Err(e) => {
                problems.push(format!("{}: {e}", rec.id));
                continue;
            }
        };
        let Some(src) = clean.get(&side.source_id) else {
            problems.push(format!(
                "{}: source {} is not in the clean manifest",
                rec.id, side.source_id
            ));
            continue;
        };
        utterances.push(Utterance {
            id: rec.id.clone(),
            source_id: side.source_id.clone(),
            power_mw: side.source_power_mw,
            clean: src.path.clone(),
            intermittent: rec.path.clone(),
        });
    }
    utterances.sort_by(|a, b| a.id.cmp(&b.id));

    let mut jobs: Vec<(&Utterance, String, PathBuf)> = Vec::new();
    for u in &utterances {
        jobs.push((u, INTERMITTENT.to_owned(), u.intermittent.clone()));
        for (name, dir) in &args.conditions {
            jobs.push((u, name.clone(), dir.join(format!("{}.wav", u.id))));
        }
    }

    let score = |(u, cond, path): &(&Utterance, String, PathBuf)| -> Row {
        let mut row = Row {
            id: u.id.clone(),
            source_id: u.source_id.clone(),
            power_mw: u.power_mw,
            condition: cond.clone(),
            stoi: None,
            wer: None,
            pesq: None,
            error: None,
        };
        let mut errors = Vec::new();
        match load_wav(&u.clean).and_then(|c| Ok((c, load_wav(path)?))) {
            Ok((c, p)) => match stoi(&c, &p) {
                Ok(s) => row.stoi = Some(s),
                Err(e) => errors.push(format!("stoi: {e}")),
            },
            Err(e) => errors.push(e.to_string()),
        }
        if let Some(hyps) = hypotheses.get(cond) {
            match (references.get(&u.source_id), hyps.get(&u.id)) {
                (Some(r), Some(h)) => match wer(r, h) {
                    Ok(w) => row.wer = Some(w),
                    Err(e) => errors.push(format!("wer: {e}")),
                },
                (None, _) => errors.push(format!("no reference transcript for {}", u.source_id)),
                (_, None) => errors.push(format!("no {cond} hypothesis for {}", u.id)),
            }
        }
        if path.exists() {
            match pesq_external(&u.clean, path, args.pesq_command.as_deref()) {
                Ok(p) => row.pesq = p,
                Err(e) => errors.push(format!("pesq: {e}")),
            }
        }
        if !errors.is_empty() {
            row.error = Some(errors.join("; "));
        }
        row
    };
    let rows: Vec<Row> = jobs.par_iter().map(score).collect();
    for r in &rows {
        if let Some(e) = &r.error {
            problems.push(format!("{} [{}]: {e}", r.id, r.condition));
        }
    }

    let pesq_available = args.pesq_command.is_some();
    let report = build_report(&rows, &args.conditions, pesq_available, &problems);
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.txt"), &report.text)?;
    write_csv(&args.out.join("report.csv"), &report.table)?;
    write_csv(&args.out.join("utterances.csv"), &rows)?;
    print!("{}", report.text);
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("warning: {p}");
        }
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct TableRow {
    pub condition: String,
    /// Source power in milliwatts, or `all`.
    pub power_mw: String,
    pub utterances: usize,
    pub failed: usize,
    pub stoi: Option<f64>,
    pub stoi_improvement_pct: Option<f64>,
    pub wer: Option<f64>,
    pub wer_improvement_pct: Option<f64>,
    /// Mean PESQ, or `unavailable` when no external tool was configured.
    pub pesq: String,
    pub pesq_improvement_pct: Option<f64>,
}

pub struct Report {
    pub text: String,
    pub table: Vec<TableRow>,
}

fn build_report(
    rows: &[Row],
    conditions: &[(String, PathBuf)],
    pesq_available: bool,
    problems: &[String],
) -> Report {
    // keyed by (condition, power bits); power bits of None mean "all"
    let mut groups: BTreeMap<(String, Option<u64>), Summary> = BTreeMap::new();
    for r in rows {
        for key in [Some(r.power_mw.to_bits()), None] {
            let s = groups.entry((r.condition.clone(), key)).or_default();
            s.utterances += 1;
            s.failed += usize::from(r.error.is_some());
            s.stoi.push(r.stoi);
            s.wer.push(r.wer);
            s.pesq.push(r.pesq);
        }
    }
    let mut powers: Vec<f64> = rows.iter().map(|r| r.power_mw).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    let mut keys: Vec<Option<u64>> = powers.iter().map(|p| Some(p.to_bits())).collect();
    keys.push(None);
    let order: Vec<&str> = std::iter::once(INTERMITTENT)
        .chain(conditions.iter().map(|(n, _)| n.as_str()))
        .collect();

    let mut table = Vec::new();
    for &power in &keys {
        let base = groups
            .get(&(INTERMITTENT.to_owned(), power))
            .copied()
            .unwrap_or_default();
        for &cond in &order {
            let s = groups
                .get(&(cond.to_owned(), power))
                .copied()
                .unwrap_or_default();
            let imp = |b: Option<f64>, v: Option<f64>, lower: bool| {
                if cond == INTERMITTENT {
                    return None;
                }
                improvement(b?, v?, lower)
            };
            table.push(TableRow {
                condition: cond.to_owned(),
                power_mw: power.map_or("all".to_owned(), |b| format!("{:.2}", f64::from_bits(b))),
                utterances: s.utterances,
                failed: s.failed,
                stoi: s.stoi.get(),
                stoi_improvement_pct: imp(base.stoi.get(), s.stoi.get(), false),
                wer: s.wer.get(),
                wer_improvement_pct: imp(base.wer.get(), s.wer.get(), true),
                pesq: if pesq_available {
                    fmt_opt(s.pesq.get(), 3)
                } else {
                    "unavailable".to_owned()
                },
                pesq_improvement_pct: imp(base.pesq.get(), s.pesq.get(), false),
            });
        }
    }

    let mut text = String::new();
    if !problems.is_empty() {
        let _ = writeln!(
            text,
            "PARTIAL REPORT: {} problem(s), listed at the end",
            problems.len()
        );
    }
    let _ = writeln!(
        text,
        "Improvement is relative to the intermittent condition: (processed - intermittent) / intermittent\n\
         for STOI and PESQ (higher is better), (intermittent - processed) / intermittent for WER (lower is better).\n"
    );
    let header = [
        "condition",
        "power_mW",
        "n",
        "failed",
        "STOI",
        "STOI_impr",
        "WER",
        "WER_impr",
        "PESQ",
        "PESQ_impr",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for t in &table {
        cells.push(vec![
            t.condition.clone(),
            t.power_mw.clone(),
            t.utterances.to_string(),
            t.failed.to_string(),
            fmt_opt(t.stoi, 4),
            fmt_pct(t.stoi_improvement_pct),
            fmt_opt(t.wer, 4),
            fmt_pct(t.wer_improvement_pct),
            t.pesq.clone(),
            fmt_pct(t.pesq_improvement_pct),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for r in &cells {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(text, "{}", line.join("  ").trim_end());
    }
    if !problems.is_empty() {
        let _ = writeln!(text, "\nProblems:");
        for p in problems {
            let _ = writeln!(text, "  {p}");
        }
    }
    Report { text, table }
}
