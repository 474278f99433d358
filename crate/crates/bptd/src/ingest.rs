//! Line-oriented event logs to tokens and a count tensor.
//!
//! Records are tab-separated `sender receiver action time`; blank lines and
//! lines starting with `#` are skipped. Action codes are the CAMEO root codes
//! 1..=20 and map to indices 0..=19.

use std::io::BufRead;

use bptd_core::events::{build_tensor, TensorDims, CAMEO_ACTIONS};
use bptd_core::{CountTensor, EventToken, Vocabulary};

use crate::error::AppError;

/// Column positions of the four fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema {
    pub sender: usize,
    pub receiver: usize,
    pub action: usize,
    pub time: usize,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            sender: 0,
            receiver: 1,
            action: 2,
            time: 3,
        }
    }
}

impl Schema {
    fn width(&self) -> usize {
        self.sender.max(self.receiver).max(self.action).max(self.time) + 1
    }
}

/// A calendar month, `month` in 1..=12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    /// Parses `YYYY-MM`, ignoring any trailing `-DD...` part.
    pub fn parse(s: &str) -> Option<Self> {
        let mut parts = s.trim().splitn(3, '-');
        let year = parts.next()?.parse().ok()?;
        let month: u32 = parts.next()?.get(..2)?.parse().ok()?;
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl std::str::FromStr for YearMonth {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self, AppError> {
        Self::parse(s).ok_or_else(|| AppError::Usage(format!("bad month {s:?}, expected YYYY-MM")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeBinning {
    /// Calendar months counted from `anchor`; without an anchor the earliest
    /// month in the input is step 0.
    Monthly { anchor: Option<YearMonth> },
    /// The time column already holds 0-based integer steps.
    Steps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub schema: Schema,
    pub binning: TimeBinning,
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
    /// Sort country labels lexicographically after parsing.
    pub canonicalize: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            schema: Schema::default(),
            binning: TimeBinning::Steps,
            strict: false,
            canonicalize: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines: usize,
    pub comments: usize,
    pub parsed: usize,
    pub self_loops: usize,
    pub malformed: usize,
    /// Line number (1-based) and reason of each malformed line.
    pub problems: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub countries: Vocabulary,
    pub actions: Vocabulary,
    pub tokens: Vec<EventToken>,
    pub steps: usize,
    /// Month of step 0 under monthly binning.
    pub anchor: Option<YearMonth>,
    pub report: IngestReport,
}

impl Ingested {
    pub fn dims(&self) -> TensorDims {
        TensorDims::new(self.countries.len(), self.actions.len(), self.steps)
    }

    pub fn tensor(&self) -> Result<CountTensor, AppError> {
        Ok(build_tensor(&self.tokens, self.dims())?)
    }
}

enum Line<'a> {
    Record(&'a str, &'a str, usize, i64),
    Malformed(String),
}

fn parse_line<'a>(line: &'a str, opts: &IngestOptions, lineno: usize) -> Result<Line<'a>, AppError> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    let s = &opts.schema;
    if fields.len() < s.width() {
        return Ok(Line::Malformed(format!("expected {} fields, found {}", s.width(), fields.len())));
    }
    let (snd, rcv) = (fields[s.sender], fields[s.receiver]);
    if snd.is_empty() || rcv.is_empty() {
        return Ok(Line::Malformed("empty country label".into()));
    }
    let Ok(code) = fields[s.action].parse::<i64>() else {
        return Ok(Line::Malformed(format!("action {:?} is not an integer", fields[s.action])));
    };
    if !(1..=CAMEO_ACTIONS as i64).contains(&code) {
        return Err(AppError::Data(format!("line {lineno}: action code {code} outside 1..={CAMEO_ACTIONS}")));
    }
    let raw = fields[s.time];
    let time = match opts.binning {
        TimeBinning::Steps => match raw.parse::<u64>() {
            Ok(t) => t as i64,
            Err(_) => return Ok(Line::Malformed(format!("time {raw:?} is not a non-negative integer"))),
        },
        TimeBinning::Monthly { .. } => match YearMonth::parse(raw) {
            Some(m) => m.ordinal(),
            None => return Ok(Line::Malformed(format!("time {raw:?} is not YYYY-MM"))),
        },
    };
    Ok(Line::Record(snd, rcv, code as usize - 1, time))
}

/// Parses an event log. Self-loops are dropped and counted; malformed lines
/// are recorded and skipped unless `strict`. Action codes outside 1..=20 and
/// inputs without any usable record are errors.
pub fn parse_events<R: BufRead>(reader: R, opts: &IngestOptions) -> Result<Ingested, AppError> {
    let mut report = IngestReport::default();
    let mut records: Vec<(String, String, usize, i64)> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        report.lines += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            report.comments += 1;
            continue;
        }
        match parse_line(&line, opts, lineno)? {
            Line::Malformed(why) => {
                if opts.strict {
                    return Err(AppError::Data(format!("line {lineno}: {why}")));
                }
                report.malformed += 1;
                report.problems.push((lineno, why));
            }
            Line::Record(s, r, _, _) if s == r => report.self_loops += 1,
            Line::Record(s, r, a, t) => records.push((s.to_owned(), r.to_owned(), a, t)),
        }
    }

    let origin = match opts.binning {
        TimeBinning::Steps => 0,
        TimeBinning::Monthly { anchor: Some(m) } => m.ordinal(),
        TimeBinning::Monthly { anchor: None } => records.iter().map(|r| r.3).min().unwrap_or(0),
    };
    let mut countries = Vocabulary::new();
    let mut tokens = Vec::with_capacity(records.len());
    for (s, r, a, t) in &records {
        if *t < origin {
            let why = "time before the anchor month".to_string();
            if opts.strict {
                return Err(AppError::Data(why));
            }
            report.malformed += 1;
            report.problems.push((0, why));
            continue;
        }
        let (i, j) = (countries.intern(s), countries.intern(r));
        tokens.push(EventToken::new(i, j, *a, (*t - origin) as usize));
    }
    if tokens.is_empty() {
        return Err(AppError::Data("input holds no usable event records".into()));
    }
    report.parsed = tokens.len();

    if opts.canonicalize {
        let (sorted, remap) = countries.canonicalized();
        for e in &mut tokens {
            e.sender = remap[e.sender];
            e.receiver = remap[e.receiver];
        }
        countries = sorted;
    }
    let steps = tokens.iter().map(|e| e.time).max().map_or(0, |t| t + 1);
    let anchor = match opts.binning {
        TimeBinning::Monthly { .. } => Some(YearMonth {
            year: origin.div_euclid(12) as i32,
            month: origin.rem_euclid(12) as u32 + 1,
        }),
        TimeBinning::Steps => None,
    };
    Ok(Ingested {
        countries,
        actions: Vocabulary::cameo_actions(),
        tokens,
        steps,
        anchor,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monthly(anchor: &str) -> IngestOptions {
        IngestOptions {
            binning: TimeBinning::Monthly {
                anchor: Some(anchor.parse().unwrap()),
            },
            ..Default::default()
        }
    }

    #[test]
    fn month_parsing() {
        assert_eq!(YearMonth::parse("1995-03"), Some(YearMonth { year: 1995, month: 3 }));
        assert_eq!(YearMonth::parse("1995-03-17"), Some(YearMonth { year: 1995, month: 3 }));
        assert_eq!(YearMonth::parse("1995-13"), None);
        assert_eq!(YearMonth::parse("1995"), None);
        assert_eq!(YearMonth { year: 2004, month: 1 }.to_string(), "2004-01");
    }

    #[test]
    fn monthly_binning_counts_from_anchor() {
        let got = parse_events("USA\tCHN\t4\t1995-03\n".as_bytes(), &monthly("1995-01")).unwrap();
        let usa = got.countries.get("USA").unwrap();
        let chn = got.countries.get("CHN").unwrap();
        assert_eq!(got.tokens, vec![EventToken::new(usa, chn, 3, 2)]);
        assert_eq!(got.steps, 3);
    }

    #[test]
    fn self_loops_are_dropped() {
        let text = "USA\tUSA\t4\t1995-01\nUSA\tCHN\t1\t1995-01\n";
        let got = parse_events(text.as_bytes(), &monthly("1995-01")).unwrap();
        assert_eq!(got.report.self_loops, 1);
        assert_eq!(got.tokens.len(), 1);
    }

    #[test]
    fn vocabulary_in_first_appearance_order() {
        let text = "B\tA\t1\t0\nA\tB\t2\t1\n# note\nB\tA\t3\t1\n";
        let got = parse_events(text.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(got.countries.labels(), ["B", "A"]);
        assert_eq!(got.report.comments, 1);
        assert_eq!(got.report.parsed, 3);
    }

    #[test]
    fn malformed_and_strict() {
        let text = "A\tB\t1\t0\nA\tB\tx\t0\nA\tB\t2\n";
        let got = parse_events(text.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(got.report.malformed, 2);
        assert_eq!(got.report.problems.iter().map(|p| p.0).collect::<Vec<_>>(), [2, 3]);
        let strict = IngestOptions {
            strict: true,
            ..Default::default()
        };
        assert!(parse_events(text.as_bytes(), &strict).is_err());
    }

    #[test]
    fn action_range_and_empty_input() {
        assert!(matches!(
            parse_events("A\tB\t21\t0\n".as_bytes(), &IngestOptions::default()),
            Err(AppError::Data(_))
        ));
        assert!(parse_events("A\tB\t0\t0\n".as_bytes(), &IngestOptions::default()).is_err());
        assert!(parse_events("# only a comment\n".as_bytes(), &IngestOptions::default()).is_err());
        assert!(parse_events("".as_bytes(), &IngestOptions::default()).is_err());
    }

    #[test]
    fn canonical_order() {
        let opts = IngestOptions {
            canonicalize: true,
            ..Default::default()
        };
        let got = parse_events("ZAF\tBRA\t1\t0\n".as_bytes(), &opts).unwrap();
        assert_eq!(got.countries.labels(), ["BRA", "ZAF"]);
        assert_eq!(got.tokens, vec![EventToken::new(1, 0, 0, 0)]);
    }

    #[test]
    fn implicit_anchor_is_earliest_month() {
        let opts = IngestOptions {
            binning: TimeBinning::Monthly { anchor: None },
            ..Default::default()
        };
        let got = parse_events("A\tB\t1\t2004-03\nB\tA\t1\t2003-12\n".as_bytes(), &opts).unwrap();
        assert_eq!(got.anchor, Some(YearMonth { year: 2003, month: 12 }));
        assert_eq!(got.tokens.iter().map(|e| e.time).collect::<Vec<_>>(), [3, 0]);
    }
}
