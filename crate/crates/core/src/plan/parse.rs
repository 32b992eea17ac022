//! Planner response parsing.
//!
//! Envelope extraction: when the response contains fenced code blocks the
//! first block is used, otherwise the first balanced `{...}` object. The
//! object's `plan` string is then read with this grammar:
//!
//! ```text
//! plan      := ws item (ws sep ws item)* ws [sep] ws
//! item      := [digits "." ws] [ident "."] "generate" ws "(" args ")"
//! sep       := ";" | newline
//! args      := string ("," ws named)*
//! named     := ("start_time" | "end_time" | "volume") ws "=" ws number
//! string    := "'" ... "'" | '"' ... '"'
//! ```
//!
//! `generate` matches case-insensitively and the receiver is free. A string
//! ends at the first matching quote that is followed by optional whitespace
//! and then `,` or `)`, so unescaped apostrophes in captions survive. Inside
//! strings `\'`, `\"` and `\\` are escapes.

use super::{ParseError, Plan, PlanStep};

/// Finds the JSON object the planner wrapped its answer in.
pub fn extract_envelope(raw: &str) -> Option<&str> {
    if let Some(block) = first_fenced_block(raw) {
        return first_balanced_object(block).or(Some(block.trim()));
    }
    first_balanced_object(raw)
}

fn first_fenced_block(raw: &str) -> Option<&str> {
    let open = raw.find("```")?;
    let after = &raw[open + 3..];
    // Skip an info string such as `json`.
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

fn first_balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in text[start..].char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses a raw planner completion into a [`Plan`] over `total_duration`
/// seconds. The plan is not validated.
pub fn parse_plan_response(raw: &str, total_duration: f64) -> Result<Plan, ParseError> {
    let envelope = extract_envelope(raw).ok_or(ParseError::NoEnvelope)?;
    let value: serde_json::Value =
        serde_json::from_str(envelope).map_err(|e| ParseError::InvalidJson(e.to_string()))?;
    let text = value
        .get("plan")
        .and_then(|v| v.as_str())
        .ok_or(ParseError::MissingPlanField)?;
    parse_plan_text(text, total_duration)
}

/// Parses the numbered call list found inside the envelope.
pub fn parse_plan_text(text: &str, total_duration: f64) -> Result<Plan, ParseError> {
    let mut cursor = Cursor { src: text, pos: 0 };
    let mut steps = Vec::new();
    cursor.skip_ws();
    while !cursor.at_end() {
        steps.push(cursor.item(steps.len() + 1)?);
        cursor.skip_ws();
        if cursor.eat(';') {
            cursor.skip_ws();
        } else if !cursor.at_end() && !cursor.consumed_newline_since_call() {
            return Err(cursor.malformed("expected `;` between calls"));
        }
    }
    if steps.is_empty() {
        return Err(ParseError::EmptyPlan);
    }
    Ok(Plan { steps, total_duration })
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn consumed_newline_since_call(&self) -> bool {
        let before = &self.src[..self.pos];
        let tail = &before[before.trim_end().len()..];
        tail.contains('\n')
    }

    fn eat(&mut self, ch: char) -> bool {
        if self.peek() == Some(ch) {
            self.pos += ch.len_utf8();
            true
        } else {
            false
        }
    }

    fn malformed(&self, message: impl Into<String>) -> ParseError {
        ParseError::Malformed { offset: self.pos, message: message.into() }
    }

    fn ident(&mut self) -> &'a str {
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|(_, c)| !(c.is_alphanumeric() || *c == '_'))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        self.pos += len;
        &rest[..len]
    }

    fn item(&mut self, call: usize) -> Result<PlanStep, ParseError> {
        // Optional list number: digits followed by '.'.
        let rest = self.rest();
        let digits = rest.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 && rest[digits..].starts_with('.') {
            self.pos += digits + 1;
            self.skip_ws();
        }

        let first = self.ident();
        let name = if self.eat('.') {
            if first.is_empty() {
                return Err(self.malformed("empty receiver before `.`"));
            }
            self.ident()
        } else {
            first
        };
        if !name.eq_ignore_ascii_case("generate") {
            return Err(self.malformed(format!("expected a `generate` call, found `{name}`")));
        }
        self.skip_ws();
        if !self.eat('(') {
            return Err(self.malformed("expected `(` after `generate`"));
        }
        self.skip_ws();
        let description = self.string()?;
        if description.trim().is_empty() {
            return Err(self.malformed("empty description"));
        }

        let mut start = None;
        let mut end = None;
        let mut volume = None;
        loop {
            self.skip_ws();
            if self.eat(')') {
                break;
            }
            if !self.eat(',') {
                return Err(self.malformed("expected `,` or `)` in argument list"));
            }
            self.skip_ws();
            // Tolerate a trailing comma.
            if self.eat(')') {
                break;
            }
            let arg = self.ident();
            self.skip_ws();
            if !self.eat('=') {
                return Err(self.malformed(format!("expected `=` after `{arg}`")));
            }
            self.skip_ws();
            let slot = match arg {
                "start_time" => &mut start,
                "end_time" => &mut end,
                "volume" => &mut volume,
                "" => return Err(self.malformed("missing argument name")),
                other => return Err(self.malformed(format!("unknown argument `{other}`"))),
            };
            if slot.is_some() {
                return Err(self.malformed(format!("duplicate argument `{arg}`")));
            }
            *slot = Some(self.number(call, arg)?);
        }

        Ok(PlanStep {
            description,
            start_time: start.ok_or(ParseError::MissingArgument { call, name: "start_time" })?,
            end_time: end.ok_or(ParseError::MissingArgument { call, name: "end_time" })?,
            volume,
        })
    }

    fn string(&mut self) -> Result<String, ParseError> {
        let quote = match self.peek() {
            Some(q @ ('\'' | '"')) => q,
            _ => return Err(self.malformed("expected a quoted description")),
        };
        let open = self.pos;
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.rest().char_indices().peekable();
        while let Some((i, ch)) = chars.next() {
            if ch == '\\' {
                if let Some(&(_, next)) = chars.peek() {
                    if next == '\'' || next == '"' || next == '\\' {
                        out.push(next);
                        chars.next();
                        continue;
                    }
                }
                out.push(ch);
            } else if ch == quote {
                let after = &self.rest()[i + 1..];
                let follow = after.trim_start().chars().next();
                if matches!(follow, Some(',') | Some(')')) {
                    self.pos += i + 1;
                    return Ok(out);
                }
                out.push(ch);
            } else {
                out.push(ch);
            }
        }
        self.pos = open;
        Err(self.malformed("unterminated description string"))
    }

    fn number(&mut self, call: usize, name: &str) -> Result<f64, ParseError> {
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|(_, c)| matches!(c, ',' | ')') || c.is_whitespace())
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let token = &rest[..len];
        let value = token.parse::<f64>().ok().filter(|v| v.is_finite());
        match value {
            Some(v) => {
                self.pos += len;
                Ok(v)
            }
            None => Err(ParseError::NonNumeric { call, name: name.to_string(), value: token.to_string() }),
        }
    }
}
