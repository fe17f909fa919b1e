//! CoNLL-09 reading and writing.
//!
//! Columns: `ID FORM LEMMA PLEMMA POS PPOS FEAT PFEAT HEAD PHEAD DEPREL
//! PDEPREL FILLPRED PRED APRED1..APREDk`, tab separated, one blank line
//! after each sentence. `_` marks an empty FEAT/PFEAT/PRED/APRED cell.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIXED_COLUMNS: usize = 14;
pub const EMPTY: &str = "_";

/// Which morphology columns downstream consumers read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnMode {
    #[default]
    Gold,
    Predicted,
}

impl std::str::FromStr for ColumnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gold" => Ok(ColumnMode::Gold),
            "predicted" => Ok(ColumnMode::Predicted),
            other => Err(Error::Config(format!(
                "unknown column mode `{}` (expected gold or predicted)",
                other
            ))),
        }
    }
}

impl std::fmt::Display for ColumnMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ColumnMode::Gold => "gold",
            ColumnMode::Predicted => "predicted",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub plemma: String,
    pub pos: String,
    pub ppos: String,
    pub feats: Vec<String>,
    pub pfeats: Vec<String>,
    pub head: usize,
    pub phead: usize,
    pub deprel: String,
    pub pdeprel: String,
    pub fillpred: bool,
    /// Predicate sense; empty when the token is not a predicate.
    pub pred: String,
    /// One role per sentence predicate, `_` for nonrole.
    pub apreds: Vec<String>,
}

impl Token {
    pub fn active_lemma(&self, mode: ColumnMode) -> &str {
        match mode {
            ColumnMode::Gold => &self.lemma,
            ColumnMode::Predicted => &self.plemma,
        }
    }

    pub fn active_feats(&self, mode: ColumnMode) -> &[String] {
        match mode {
            ColumnMode::Gold => &self.feats,
            ColumnMode::Predicted => &self.pfeats,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
    predicates: Vec<usize>,
}

impl Sentence {
    /// Validates ids, the FILLPRED/PRED agreement and APRED arity.
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        for (i, t) in tokens.iter().enumerate() {
            if t.id != i + 1 {
                return Err(Error::invalid(format!(
                    "token ids must be 1..n contiguous; position {} has id {}",
                    i + 1,
                    t.id
                )));
            }
            if t.fillpred == t.pred.is_empty() {
                return Err(Error::invalid(format!(
                    "token {}: FILLPRED and PRED disagree",
                    t.id
                )));
            }
        }
        let predicates: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.fillpred)
            .map(|(i, _)| i)
            .collect();
        for t in &tokens {
            if t.apreds.len() != predicates.len() {
                return Err(Error::invalid(format!(
                    "token {} has {} APRED columns but the sentence has {} predicates",
                    t.id,
                    t.apreds.len(),
                    predicates.len()
                )));
            }
        }
        Ok(Sentence { tokens, predicates })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// 0-based token positions of the predicates, in sentence order.
    pub fn predicates(&self) -> &[usize] {
        &self.predicates
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Replaces token forms, keeping every other field.
    pub fn with_forms(&self, forms: Vec<String>) -> Sentence {
        let mut s = self.clone();
        for (t, f) in s.tokens.iter_mut().zip(forms) {
            t.form = f;
        }
        s
    }

    /// Replaces the role columns, keeping every other field. `roles[k][t]`
    /// is the role of token `t` for the `k`-th predicate.
    pub fn with_roles(&self, roles: &[Vec<String>]) -> Result<Sentence> {
        if roles.len() != self.predicates.len() || roles.iter().any(|r| r.len() != self.len()) {
            return Err(Error::shape("role matrix does not match the sentence"));
        }
        let mut s = self.clone();
        for (t, tok) in s.tokens.iter_mut().enumerate() {
            tok.apreds = roles.iter().map(|r| r[t].clone()).collect();
        }
        Ok(s)
    }
}

fn parse_feats(cell: &str) -> Vec<String> {
    if cell == EMPTY {
        Vec::new()
    } else {
        cell.split('|').map(str::to_string).collect()
    }
}

fn format_feats(feats: &[String]) -> String {
    if feats.is_empty() {
        EMPTY.to_string()
    } else {
        feats.join("|")
    }
}

fn parse_int(cell: &str, what: &str, line: usize) -> Result<usize> {
    cell.parse()
        .map_err(|_| Error::parse(line, format!("{} `{}` is not a non-negative integer", what, cell)))
}

fn parse_row(line: &str, line_no: usize) -> Result<Token> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < FIXED_COLUMNS {
        return Err(Error::parse(
            line_no,
            format!("expected at least {} columns, found {}", FIXED_COLUMNS, cols.len()),
        ));
    }
    let fillpred = match cols[12] {
        "Y" => true,
        EMPTY => false,
        other => return Err(Error::parse(line_no, format!("FILLPRED must be Y or _, got `{}`", other))),
    };
    let pred = if cols[13] == EMPTY { String::new() } else { cols[13].to_string() };
    if fillpred == pred.is_empty() {
        return Err(Error::parse(line_no, "FILLPRED and PRED disagree"));
    }
    Ok(Token {
        id: parse_int(cols[0], "ID", line_no)?,
        form: cols[1].to_string(),
        lemma: cols[2].to_string(),
        plemma: cols[3].to_string(),
        pos: cols[4].to_string(),
        ppos: cols[5].to_string(),
        feats: parse_feats(cols[6]),
        pfeats: parse_feats(cols[7]),
        head: parse_int(cols[8], "HEAD", line_no)?,
        phead: parse_int(cols[9], "PHEAD", line_no)?,
        deprel: cols[10].to_string(),
        pdeprel: cols[11].to_string(),
        fillpred,
        pred,
        apreds: cols[FIXED_COLUMNS..].iter().map(|s| s.to_string()).collect(),
    })
}

fn finish_block(rows: Vec<(usize, Token)>) -> Result<Sentence> {
    let n_pred = rows.iter().filter(|(_, t)| t.fillpred).count();
    for (i, (line, t)) in rows.iter().enumerate() {
        if t.id != i + 1 {
            return Err(Error::parse(
                *line,
                format!("token id {} breaks the 1..n sequence (expected {})", t.id, i + 1),
            ));
        }
        if t.apreds.len() != n_pred {
            return Err(Error::parse(
                *line,
                format!(
                    "{} APRED columns but the sentence has {} predicates",
                    t.apreds.len(),
                    n_pred
                ),
            ));
        }
        if t.head > rows.len() || t.phead > rows.len() {
            return Err(Error::parse(*line, "HEAD/PHEAD outside the sentence"));
        }
    }
    Sentence::new(rows.into_iter().map(|(_, t)| t).collect())
}

/// Parses CoNLL-09 text. Errors carry the 1-based line number of the
/// offending row.
pub fn parse_conll09(text: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, Token)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !block.is_empty() {
                sentences.push(finish_block(std::mem::take(&mut block))?);
            }
            continue;
        }
        block.push((line_no, parse_row(line, line_no)?));
    }
    if !block.is_empty() {
        sentences.push(finish_block(block)?);
    }
    Ok(sentences)
}

pub fn write_conll09(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for t in s.tokens() {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.id,
                t.form,
                t.lemma,
                t.plemma,
                t.pos,
                t.ppos,
                format_feats(&t.feats),
                format_feats(&t.pfeats),
                t.head,
                t.phead,
                t.deprel,
                t.pdeprel,
                if t.fillpred { "Y" } else { EMPTY },
                if t.pred.is_empty() { EMPTY } else { &t.pred },
            );
            for a in &t.apreds {
                out.push('\t');
                out.push_str(a);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
