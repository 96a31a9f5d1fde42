//! The deterministic predicate language evaluated over audit logs and final
//! world state.
//!
//! Grammar (AND-conjunction only, no OR, no nesting — criteria needing
//! conditionals stay on the judge):
//!
//! ```text
//! expr  := atom { AND atom }
//! atom  := [NOT] CONTAINS [ATTEMPT] tool [WITH field=value {, field=value}]
//!        | ORDERED tool [WITH ...] BEFORE tool [WITH ...]
//!        | FINAL_STATE path cmp value
//! cmp   := = | != | <= | >= | < | >
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("malformed predicate at position {position}: expected {expected}, found {found}")]
pub struct PredicateError {
    pub position: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    pub fn as_str(&self) -> &'static str {
        match self {
            Cmp::Eq => "=",
            Cmp::Ne => "!=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamFilter {
    pub field: String,
    pub value: String,
}

/// A tool name plus optional parameter filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolFilter {
    pub tool: String,
    pub filters: Vec<ParamFilter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "atom", rename_all = "snake_case")]
pub enum Atom {
    /// `[NOT] CONTAINS [ATTEMPT] tool [WITH ...]`. Without ATTEMPT only
    /// successful calls match; with ATTEMPT, allowlisted simulator faults
    /// count as well. NOT CONTAINS is the restraint form.
    Contains {
        negated: bool,
        attempt: bool,
        #[serde(flatten)]
        filter: ToolFilter,
    },
    /// `ORDERED a BEFORE b`: first qualifying occurrence of `a` must precede
    /// the first qualifying occurrence of `b` in audit sequence order.
    Ordered { first: ToolFilter, second: ToolFilter },
    /// `FINAL_STATE entity-id.field cmp value` over the final world state.
    FinalState { path: String, cmp: Cmp, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateExpr {
    pub atoms: Vec<Atom>,
}

impl PredicateExpr {
    pub fn parse(text: &str) -> Result<PredicateExpr, PredicateError> {
        Parser::new(text).parse_expr()
    }

    /// True when every atom is a negated CONTAINS (the restraint shape).
    pub fn is_pure_restraint(&self) -> bool {
        !self.atoms.is_empty()
            && self
                .atoms
                .iter()
                .all(|a| matches!(a, Atom::Contains { negated: true, .. }))
    }

    pub fn uses_attempt(&self) -> bool {
        self.atoms
            .iter()
            .any(|a| matches!(a, Atom::Contains { attempt: true, .. }))
    }

    pub fn has_negation(&self) -> bool {
        self.atoms
            .iter()
            .any(|a| matches!(a, Atom::Contains { negated: true, .. }))
    }

    /// Canonical text form; `parse(render(p)) == p`.
    pub fn render(&self) -> String {
        let parts: Vec<String> = self.atoms.iter().map(render_atom).collect();
        parts.join(" AND ")
    }
}

impl fmt::Display for PredicateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn render_value(value: &str) -> String {
    if !value.is_empty() && value.chars().all(is_bare_char) {
        value.to_string()
    } else {
        format!("\"{}\"", value.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

fn render_filters(filters: &[ParamFilter]) -> String {
    let parts: Vec<String> = filters
        .iter()
        .map(|f| format!("{}={}", f.field, render_value(&f.value)))
        .collect();
    parts.join(", ")
}

fn render_tool_filter(tf: &ToolFilter) -> String {
    if tf.filters.is_empty() {
        tf.tool.clone()
    } else {
        format!("{} WITH {}", tf.tool, render_filters(&tf.filters))
    }
}

fn render_atom(atom: &Atom) -> String {
    match atom {
        Atom::Contains {
            negated,
            attempt,
            filter,
        } => {
            let mut out = String::new();
            if *negated {
                out.push_str("NOT ");
            }
            out.push_str("CONTAINS ");
            if *attempt {
                out.push_str("ATTEMPT ");
            }
            out.push_str(&render_tool_filter(filter));
            out
        }
        Atom::Ordered { first, second } => format!(
            "ORDERED {} BEFORE {}",
            render_tool_filter(first),
            render_tool_filter(second)
        ),
        Atom::FinalState { path, cmp, value } => {
            format!("FINAL_STATE {} {} {}", path, cmp.as_str(), render_value(value))
        }
    }
}

fn is_bare_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '/')
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
    Equals,
    Comma,
    Cmp(Cmp),
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Word(w) => format!("{w:?}"),
            Token::Quoted(q) => format!("{q:?} (quoted)"),
            Token::Equals => "\"=\"".to_string(),
            Token::Comma => "\",\"".to_string(),
            Token::Cmp(c) => format!("{:?}", c.as_str()),
            Token::End => "end of input".to_string(),
        }
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    index: usize,
}

impl Parser {
    fn new(text: &str) -> Parser {
        Parser {
            tokens: tokenize(text),
            index: 0,
        }
    }

    fn peek(&self) -> &(usize, Token) {
        &self.tokens[self.index.min(self.tokens.len() - 1)]
    }

    fn advance(&mut self) -> (usize, Token) {
        let tok = self.tokens[self.index.min(self.tokens.len() - 1)].clone();
        if self.index < self.tokens.len() - 1 {
            self.index += 1;
        }
        tok
    }

    fn error(&self, expected: &str) -> PredicateError {
        let (position, token) = self.peek();
        PredicateError {
            position: *position,
            expected: expected.to_string(),
            found: token.describe(),
        }
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<(), PredicateError> {
        match self.peek() {
            (_, Token::Word(w)) if w == keyword => {
                self.advance();
                Ok(())
            }
            _ => Err(self.error(&format!("keyword {keyword}"))),
        }
    }

    fn keyword_is(&self, keyword: &str) -> bool {
        matches!(self.peek(), (_, Token::Word(w)) if w == keyword)
    }

    fn parse_expr(&mut self) -> Result<PredicateExpr, PredicateError> {
        let mut atoms = vec![self.parse_atom()?];
        loop {
            match self.peek() {
                (_, Token::End) => break,
                (_, Token::Word(w)) if w == "AND" => {
                    self.advance();
                    atoms.push(self.parse_atom()?);
                }
                _ => return Err(self.error("AND or end of predicate")),
            }
        }
        Ok(PredicateExpr { atoms })
    }

    fn parse_atom(&mut self) -> Result<Atom, PredicateError> {
        if self.keyword_is("NOT") {
            self.advance();
            self.expect_keyword("CONTAINS")?;
            return self.parse_contains(true);
        }
        if self.keyword_is("CONTAINS") {
            self.advance();
            return self.parse_contains(false);
        }
        if self.keyword_is("ORDERED") {
            self.advance();
            let first = self.parse_tool_filter()?;
            self.expect_keyword("BEFORE")?;
            let second = self.parse_tool_filter()?;
            return Ok(Atom::Ordered { first, second });
        }
        if self.keyword_is("FINAL_STATE") {
            self.advance();
            let path = self.parse_word("state path")?;
            let cmp = match self.advance() {
                (_, Token::Cmp(c)) => c,
                (_, Token::Equals) => Cmp::Eq,
                _ => return Err(self.error("comparison operator")),
            };
            let value = self.parse_value()?;
            return Ok(Atom::FinalState { path, cmp, value });
        }
        Err(self.error("NOT, CONTAINS, ORDERED or FINAL_STATE"))
    }

    fn parse_contains(&mut self, negated: bool) -> Result<Atom, PredicateError> {
        let attempt = if self.keyword_is("ATTEMPT") {
            self.advance();
            true
        } else {
            false
        };
        let filter = self.parse_tool_filter()?;
        Ok(Atom::Contains {
            negated,
            attempt,
            filter,
        })
    }

    fn parse_tool_filter(&mut self) -> Result<ToolFilter, PredicateError> {
        let tool = self.parse_tool_name()?;
        let mut filters = Vec::new();
        if self.keyword_is("WITH") {
            self.advance();
            loop {
                let field = self.parse_word("parameter name")?;
                match self.advance() {
                    (_, Token::Equals) => {}
                    _ => return Err(self.error("\"=\"")),
                }
                let value = self.parse_value()?;
                filters.push(ParamFilter { field, value });
                if matches!(self.peek(), (_, Token::Comma)) {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        Ok(ToolFilter { tool, filters })
    }

    fn parse_tool_name(&mut self) -> Result<String, PredicateError> {
        match self.peek() {
            (_, Token::Word(w)) if !is_keyword(w) => {
                let name = w.clone();
                self.advance();
                Ok(name)
            }
            _ => Err(self.error("tool name")),
        }
    }

    fn parse_word(&mut self, what: &str) -> Result<String, PredicateError> {
        match self.peek() {
            (_, Token::Word(w)) if !is_keyword(w) => {
                let word = w.clone();
                self.advance();
                Ok(word)
            }
            _ => Err(self.error(what)),
        }
    }

    fn parse_value(&mut self) -> Result<String, PredicateError> {
        match self.peek() {
            (_, Token::Word(w)) if !is_keyword(w) => {
                let value = w.clone();
                self.advance();
                Ok(value)
            }
            (_, Token::Quoted(q)) => {
                let value = q.clone();
                self.advance();
                Ok(value)
            }
            _ => Err(self.error("value")),
        }
    }
}

fn is_keyword(word: &str) -> bool {
    matches!(
        word,
        "NOT" | "CONTAINS" | "ATTEMPT" | "WITH" | "ORDERED" | "BEFORE" | "FINAL_STATE" | "AND"
    )
}

fn tokenize(text: &str) -> Vec<(usize, Token)> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '=' => {
                tokens.push((i, Token::Equals));
                i += 1;
            }
            ',' => {
                tokens.push((i, Token::Comma));
                i += 1;
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                tokens.push((i, Token::Cmp(Cmp::Ne)));
                i += 2;
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    tokens.push((i, Token::Cmp(Cmp::Le)));
                    i += 2;
                } else {
                    tokens.push((i, Token::Cmp(Cmp::Lt)));
                    i += 1;
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    tokens.push((i, Token::Cmp(Cmp::Ge)));
                    i += 2;
                } else {
                    tokens.push((i, Token::Cmp(Cmp::Gt)));
                    i += 1;
                }
            }
            '"' => {
                let start = i;
                i += 1;
                let mut value = String::new();
                let mut closed = false;
                while i < chars.len() {
                    match chars[i] {
                        '\\' if i + 1 < chars.len() => {
                            value.push(chars[i + 1]);
                            i += 2;
                        }
                        '"' => {
                            i += 1;
                            closed = true;
                            break;
                        }
                        other => {
                            value.push(other);
                            i += 1;
                        }
                    }
                }
                if closed {
                    tokens.push((start, Token::Quoted(value)));
                } else {
                    // Unterminated string: surface as a word so the parser
                    // reports a position-carrying error.
                    tokens.push((start, Token::Word(format!("\"{value}"))));
                }
            }
            c if is_bare_char(c) => {
                let start = i;
                let mut word = String::new();
                while i < chars.len() && is_bare_char(chars[i]) {
                    word.push(chars[i]);
                    i += 1;
                }
                tokens.push((start, Token::Word(word)));
            }
            other => {
                tokens.push((i, Token::Word(other.to_string())));
                i += 1;
            }
        }
    }
    tokens.push((text.chars().count(), Token::End));
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> PredicateExpr {
        PredicateExpr::parse(text).unwrap()
    }

    #[test]
    fn parses_negated_contains() {
        let expr = parse("NOT CONTAINS createClinicalOrder WITH medication=tPA");
        assert_eq!(
            expr.atoms,
            vec![Atom::Contains {
                negated: true,
                attempt: false,
                filter: ToolFilter {
                    tool: "createClinicalOrder".into(),
                    filters: vec![ParamFilter {
                        field: "medication".into(),
                        value: "tPA".into()
                    }],
                },
            }]
        );
        assert!(expr.is_pure_restraint());
    }

    #[test]
    fn parses_attempt_atom() {
        let expr = parse("CONTAINS ATTEMPT createClinicalOrder WITH task_type=blood_admin");
        assert!(expr.uses_attempt());
        assert!(!expr.is_pure_restraint());
    }

    #[test]
    fn parses_ordered_and_final_state() {
        let expr = parse(
            "ORDERED handshake BEFORE transferComplete AND FINAL_STATE enc-0001.status = transferred",
        );
        assert_eq!(expr.atoms.len(), 2);
        assert!(matches!(expr.atoms[0], Atom::Ordered { .. }));
        assert!(matches!(
            expr.atoms[1],
            Atom::FinalState { cmp: Cmp::Eq, .. }
        ));
    }

    #[test]
    fn bare_contains_without_tool_is_malformed() {
        let err = PredicateExpr::parse("CONTAINS").unwrap_err();
        assert_eq!(err.expected, "tool name");
        assert_eq!(err.position, 8);
    }

    #[test]
    fn error_carries_position_and_expectation() {
        let err = PredicateExpr::parse("CONTAINS createClinicalOrder WITH medication").unwrap_err();
        assert!(err.expected.contains('='), "{err}");
        let err = PredicateExpr::parse("ORDERED a b").unwrap_err();
        assert!(err.expected.contains("BEFORE"), "{err}");
    }

    #[test]
    fn render_parse_round_trip() {
        let cases = [
            "NOT CONTAINS createClinicalOrder WITH medication=anticoagulant",
            "CONTAINS ATTEMPT createClinicalOrder WITH task_type=blood_admin, details=\"two units\"",
            "ORDERED getEncounterDetails WITH encounter_id=enc-0001 BEFORE processDischarge",
            "CONTAINS searchPatients AND FINAL_STATE enc-0002.triage_level >= 3",
        ];
        for case in cases {
            let parsed = parse(case);
            let rendered = parsed.render();
            assert_eq!(parse(&rendered), parsed, "case {case}");
        }
    }

    #[test]
    fn quoted_values_round_trip() {
        let expr = parse("CONTAINS updateEncounter WITH value=\"discharged home, stable\"");
        let Atom::Contains { filter, .. } = &expr.atoms[0] else {
            panic!()
        };
        assert_eq!(filter.filters[0].value, "discharged home, stable");
        assert_eq!(PredicateExpr::parse(&expr.render()).unwrap(), expr);
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        assert!(PredicateExpr::parse("CONTAINS searchPatients CONTAINS x").is_err());
        assert!(PredicateExpr::parse("").is_err());
    }
}
