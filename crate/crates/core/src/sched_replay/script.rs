use std::fmt;
use std::str::FromStr;

use crate::probe::Action;
use crate::set_api::OpKind;

/// Node pattern of a gate: a concrete tag or `*`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TagPattern {
    Any,
    Named(String),
}

impl TagPattern {
    pub fn matches(&self, tag: &str) -> bool {
        match self {
            TagPattern::Any => true,
            TagPattern::Named(name) => name == tag,
        }
    }
}

impl fmt::Display for TagPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagPattern::Any => f.write_str("*"),
            TagPattern::Named(name) => f.write_str(name),
        }
    }
}

/// One scripted step: op `op` (0-based) must emit `action` on a node matching
/// `tag`. `INVOKE` and `RESPOND` carry no tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub op: usize,
    pub action: Action,
    pub tag: Option<TagPattern>,
}

impl Gate {
    pub fn new(op: usize, action: Action, tag: &str) -> Self {
        let tag = if tag == "*" {
            TagPattern::Any
        } else {
            TagPattern::Named(tag.to_owned())
        };
        Gate {
            op,
            action,
            tag: Some(tag),
        }
    }

    pub fn bare(op: usize, action: Action) -> Self {
        Gate {
            op,
            action,
            tag: None,
        }
    }

    pub fn matches(&self, label: &Label) -> bool {
        self.op == label.op
            && self.action == label.action
            && match (&self.tag, &label.tag) {
                (None, None) => true,
                (Some(pattern), Some(tag)) => pattern.matches(tag),
                _ => false,
            }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{} {}", self.op + 1, self.action)?;
        if let Some(tag) = &self.tag {
            write!(f, " {tag}")?;
        }
        Ok(())
    }
}

/// A step an op actually announced, with its node resolved to a tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Label {
    pub op: usize,
    pub action: Action,
    pub tag: Option<String>,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{} {}", self.op + 1, self.action)?;
        if let Some(tag) = &self.tag {
            write!(f, " {tag}")?;
        }
        Ok(())
    }
}

/// Initial contents, one high-level op per thread, and the global order of
/// gated steps.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Script {
    pub initial: Vec<i64>,
    pub ops: Vec<(OpKind, i64)>,
    pub gates: Vec<Gate>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

impl Script {
    pub fn new(initial: &[i64], ops: &[(OpKind, i64)]) -> Self {
        Script {
            initial: initial.to_vec(),
            ops: ops.to_vec(),
            gates: Vec::new(),
        }
    }

    /// Appends a gate; `op` is 1-based as in the text format, `tag` may be
    /// empty for `INVOKE`/`RESPOND`.
    pub fn gate(mut self, op: usize, action: Action, tag: &str) -> Self {
        let gate = if tag.is_empty() {
            Gate::bare(op - 1, action)
        } else {
            Gate::new(op - 1, action, tag)
        };
        self.gates.push(gate);
        self
    }

    /// Gates that replay `trace` step for step.
    pub fn from_trace(trace: &super::Trace) -> Self {
        Script {
            initial: trace.initial.clone(),
            ops: trace.ops.iter().map(|o| (o.kind, o.arg)).collect(),
            gates: trace
                .events
                .iter()
                .map(|e| match &e.node {
                    Some(tag) => Gate::new(e.op, e.action, tag),
                    None => Gate::bare(e.op, e.action),
                })
                .collect(),
        }
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("init")?;
        for key in &self.initial {
            write!(f, " {key}")?;
        }
        writeln!(f)?;
        for (i, (kind, arg)) in self.ops.iter().enumerate() {
            writeln!(f, "op{} {kind} {arg}", i + 1)?;
        }
        for gate in &self.gates {
            writeln!(f, "{gate}")?;
        }
        Ok(())
    }
}

fn parse_op_id(token: &str, line: usize) -> Result<usize, ScriptError> {
    token
        .strip_prefix("op")
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .map(|n| n - 1)
        .ok_or_else(|| ScriptError {
            line,
            message: format!("expected `op<N>` with N >= 1, got `{token}`"),
        })
}

/// Line format:
///
/// ```text
/// # comment
/// init 2 3 4
/// op1 insert 1
/// op1 INVOKE
/// op1 READ_NEXT h
/// ```
impl FromStr for Script {
    type Err = ScriptError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut script = Script::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| ScriptError { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if tokens[0] == "init" {
                for t in &tokens[1..] {
                    let key = t.parse().map_err(|_| err(format!("bad key `{t}`")))?;
                    script.initial.push(key);
                }
                continue;
            }
            let op = parse_op_id(tokens[0], line)?;
            let Some(&second) = tokens.get(1) else {
                return Err(err("missing operation or action".into()));
            };
            if let Ok(kind) = second.parse::<OpKind>() {
                if op != script.ops.len() {
                    return Err(err(format!("op{} declared out of order", op + 1)));
                }
                let arg = tokens
                    .get(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("missing or bad key".into()))?;
                script.ops.push((kind, arg));
                continue;
            }
            let action: Action = second.parse().map_err(|e| err(format!("{e}")))?;
            if op >= script.ops.len() {
                return Err(err(format!("op{} is not declared", op + 1)));
            }
            let gate = match (action, tokens.get(2)) {
                (Action::Invoke | Action::Respond, None) => Gate::bare(op, action),
                (Action::Invoke | Action::Respond, Some(_)) => {
                    return Err(err(format!("{action} takes no node tag")))
                }
                (_, Some(tag)) => Gate::new(op, action, tag),
                (_, None) => return Err(err(format!("{action} needs a node tag"))),
            };
            if tokens.len() > 3 {
                return Err(err("trailing tokens".into()));
            }
            script.gates.push(gate);
        }
        Ok(script)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print_round_trip() {
        let text = "# two inserts\ninit 2 3\nop1 insert 1\nop2 remove 2\nop1 INVOKE\nop1 READ_NEXT h\nop2 WRITE_NEXT *\nop1 RESPOND\n";
        let script: Script = text.parse().unwrap();
        assert_eq!(script.initial, vec![2, 3]);
        assert_eq!(script.ops, vec![(OpKind::Insert, 1), (OpKind::Remove, 2)]);
        assert_eq!(script.gates.len(), 4);
        assert_eq!(script.gates[2].tag, Some(TagPattern::Any));
        let reparsed: Script = script.to_string().parse().unwrap();
        assert_eq!(reparsed, script);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = "init 1\nop1 insert 2\nop2 INVOKE\n"
            .parse::<Script>()
            .unwrap_err();
        assert_eq!(e.line, 3);
        let e = "op1 insert 2\nop1 READ_NEXT\n"
            .parse::<Script>()
            .unwrap_err();
        assert_eq!(e.line, 2);
        let e = "op1 insert 2\nop1 JUMP h\n".parse::<Script>().unwrap_err();
        assert!(e.message.contains("JUMP"));
        assert!("x1 insert 2".parse::<Script>().is_err());
    }

    #[test]
    fn gate_matching() {
        let label = Label {
            op: 0,
            action: Action::ReadNext,
            tag: Some("X1".into()),
        };
        assert!(Gate::new(0, Action::ReadNext, "X1").matches(&label));
        assert!(Gate::new(0, Action::ReadNext, "*").matches(&label));
        assert!(!Gate::new(0, Action::ReadNext, "h").matches(&label));
        assert!(!Gate::new(1, Action::ReadNext, "X1").matches(&label));
        assert!(!Gate::bare(0, Action::ReadNext).matches(&label));
    }
}
