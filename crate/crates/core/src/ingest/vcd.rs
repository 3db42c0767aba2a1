//! Parser for the VCD subset emitted by RTL behavioural simulators.

use std::collections::{HashMap, HashSet};

use crate::bits::BitVec;

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalDecl {
    pub id_code: String,
    pub name: String,
    pub width: u32,
    pub scope_path: Vec<String>,
}

impl SignalDecl {
    /// Dotted path, e.g. `soc.core.rf.x5`.
    pub fn full_name(&self) -> String {
        let mut s = self.scope_path.join(".");
        s.push('.');
        s.push_str(&self.name);
        s
    }
}

/// A scope in the design hierarchy. `signals` index into
/// [`WaveDump::declarations`] and list only the signals declared directly in
/// this scope.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModuleNode {
    pub name: String,
    pub path: Vec<String>,
    pub children: Vec<ModuleNode>,
    pub signals: Vec<usize>,
}

impl ModuleNode {
    pub fn root() -> Self {
        Self::default()
    }

    /// Depth-first, parents before children. Includes the synthetic root.
    pub fn iter(&self) -> impl Iterator<Item = &ModuleNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    pub fn find(&self, path: &[impl AsRef<str>]) -> Option<&ModuleNode> {
        let mut node = self;
        for part in path {
            node = node.children.iter().find(|c| c.name == part.as_ref())?;
        }
        Some(node)
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    fn child_mut(&mut self, name: &str) -> &mut ModuleNode {
        if let Some(i) = self.children.iter().position(|c| c.name == name) {
            return &mut self.children[i];
        }
        let mut path = self.path.clone();
        path.push(name.to_string());
        self.children.push(ModuleNode { name: name.to_string(), path, ..Default::default() });
        self.children.last_mut().expect("just pushed")
    }

    fn node_mut(&mut self, path: &[String]) -> &mut ModuleNode {
        let mut node = self;
        for part in path {
            node = node.child_mut(part);
        }
        node
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueChange {
    pub time: u64,
    /// Index into [`WaveDump::declarations`].
    pub signal: usize,
    pub value: BitVec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveDump {
    pub timescale: Option<String>,
    pub declarations: Vec<SignalDecl>,
    pub hierarchy: ModuleNode,
    pub changes: Vec<ValueChange>,
}

impl WaveDump {
    pub fn signal_index(&self, id_code: &str) -> Option<usize> {
        self.declarations.iter().position(|d| d.id_code == id_code)
    }

    /// Resolves a signal by bare name or dotted full name. Ambiguous bare
    /// names resolve to `None`.
    pub fn find_signal(&self, name: &str) -> Option<usize> {
        if name.contains('.') {
            return self.declarations.iter().position(|d| d.full_name() == name);
        }
        let mut hits = self.declarations.iter().enumerate().filter(|(_, d)| d.name == name);
        let first = hits.next()?;
        hits.next().is_none().then_some(first.0)
    }
}

struct Tokens<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    current: Option<(usize, std::str::SplitWhitespace<'a>)>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate(), current: None }
    }

    /// Next token with its 1-based line number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        loop {
            if let Some((line, words)) = self.current.as_mut() {
                if let Some(w) = words.next() {
                    return Some((*line, w));
                }
            }
            let (i, line) = self.lines.next()?;
            self.current = Some((i + 1, line.split_whitespace()));
        }
    }
}

enum Var {
    Tracked(usize),
    Ignored,
}

pub fn parse_vcd(bytes: &[u8]) -> Result<WaveDump, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::Syntax {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
        msg: "input is not valid UTF-8".into(),
    })?;
    Parser::new(text).run()
}

struct Parser<'a> {
    tokens: Tokens<'a>,
    dump: WaveDump,
    ids: HashMap<String, Var>,
    scope: Vec<String>,
    last_time: Option<u64>,
    time: u64,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            tokens: Tokens::new(text),
            dump: WaveDump {
                timescale: None,
                declarations: Vec::new(),
                hierarchy: ModuleNode::root(),
                changes: Vec::new(),
            },
            ids: HashMap::new(),
            scope: Vec::new(),
            last_time: None,
            time: 0,
        }
    }

    fn truncated(&self) -> IngestError {
        IngestError::Truncated { last_time: self.last_time }
    }

    fn next_token(&mut self) -> Result<(usize, &'a str), IngestError> {
        self.tokens.next().ok_or_else(|| self.truncated())
    }

    /// Collects tokens up to the closing `$end`.
    fn until_end(&mut self) -> Result<Vec<(usize, &'a str)>, IngestError> {
        let mut out = Vec::new();
        loop {
            let tok = self.next_token()?;
            if tok.1 == "$end" {
                return Ok(out);
            }
            out.push(tok);
        }
    }

    fn run(mut self) -> Result<WaveDump, IngestError> {
        self.header()?;
        self.body()?;
        Ok(self.dump)
    }

    fn header(&mut self) -> Result<(), IngestError> {
        let mut seen_ids = HashSet::new();
        loop {
            let Some((line, tok)) = self.tokens.next() else {
                return Err(IngestError::Syntax {
                    line: 0,
                    msg: "missing $enddefinitions".into(),
                });
            };
            match tok {
                "$date" | "$version" | "$comment" => {
                    self.until_end()?;
                }
                "$timescale" => {
                    let parts = self.until_end()?;
                    self.dump.timescale =
                        Some(parts.iter().map(|(_, t)| *t).collect::<Vec<_>>().join(""));
                }
                "$scope" => {
                    let parts = self.until_end()?;
                    let name = match parts.as_slice() {
                        [_, (_, name)] => name.to_string(),
                        _ => {
                            return Err(IngestError::Syntax {
                                line,
                                msg: "$scope expects a type and a name".into(),
                            })
                        }
                    };
                    self.scope.push(name);
                    self.dump.hierarchy.node_mut(&self.scope);
                }
                "$upscope" => {
                    self.until_end()?;
                    if self.scope.pop().is_none() {
                        return Err(IngestError::Syntax { line, msg: "$upscope without open scope".into() });
                    }
                }
                "$var" => {
                    let parts = self.until_end()?;
                    self.var(line, &parts, &mut seen_ids)?;
                }
                "$enddefinitions" => {
                    self.until_end()?;
                    if !self.scope.is_empty() {
                        return Err(IngestError::Syntax {
                            line,
                            msg: format!("{} scope(s) left open", self.scope.len()),
                        });
                    }
                    return Ok(());
                }
                other => {
                    return Err(IngestError::Syntax {
                        line,
                        msg: format!("unexpected token {other:?} in header"),
                    })
                }
            }
        }
    }

    fn var(
        &mut self,
        line: usize,
        parts: &[(usize, &str)],
        seen_ids: &mut HashSet<String>,
    ) -> Result<(), IngestError> {
        if parts.len() < 4 {
            return Err(IngestError::Syntax { line, msg: "$var expects type, width, id and name".into() });
        }
        let kind = parts[0].1;
        let width: u32 = parts[1].1.parse().map_err(|_| IngestError::Syntax {
            line,
            msg: format!("bad width {:?}", parts[1].1),
        })?;
        let id = parts[2].1.to_string();
        let name = parts[3..].iter().map(|(_, t)| *t).collect::<Vec<_>>().join("");
        if !seen_ids.insert(id.clone()) {
            return Err(IngestError::Syntax { line, msg: format!("duplicate id code {id:?}") });
        }
        match kind {
            "wire" | "reg" | "logic" | "integer" | "tri" | "supply0" | "supply1" | "wand" | "wor" => {
                if width == 0 {
                    return Err(IngestError::Syntax { line, msg: "width must be >= 1".into() });
                }
                if self.scope.is_empty() {
                    return Err(IngestError::Syntax { line, msg: format!("$var {name} outside any scope") });
                }
                let index = self.dump.declarations.len();
                self.dump.declarations.push(SignalDecl {
                    id_code: id.clone(),
                    name,
                    width,
                    scope_path: self.scope.clone(),
                });
                self.dump.hierarchy.node_mut(&self.scope).signals.push(index);
                self.ids.insert(id, Var::Tracked(index));
            }
            "real" | "realtime" | "event" | "parameter" | "string" => {
                self.ids.insert(id, Var::Ignored);
            }
            other => {
                return Err(IngestError::Syntax { line, msg: format!("unsupported var type {other:?}") })
            }
        }
        Ok(())
    }

    fn body(&mut self) -> Result<(), IngestError> {
        let mut open_block = false;
        while let Some((line, tok)) = self.tokens.next() {
            let first = tok.as_bytes()[0];
            match first {
                b'#' => {
                    let t: u64 = tok[1..].parse().map_err(|_| IngestError::Syntax {
                        line,
                        msg: format!("bad timestamp {tok:?}"),
                    })?;
                    if self.last_time.is_some_and(|prev| t < prev) {
                        return Err(IngestError::Syntax {
                            line,
                            msg: format!("timestamp {t} goes backwards"),
                        });
                    }
                    self.time = t;
                    self.last_time = Some(t);
                }
                b'$' => match tok {
                    "$dumpvars" | "$dumpall" | "$dumpon" | "$dumpoff" => open_block = true,
                    "$end" if open_block => open_block = false,
                    "$comment" => {
                        self.until_end()?;
                    }
                    _ => {
                        return Err(IngestError::Syntax {
                            line,
                            msg: format!("unexpected command {tok:?}"),
                        })
                    }
                },
                b'0' | b'1' | b'x' | b'X' | b'z' | b'Z' => {
                    let (digit, id) = tok.split_at(1);
                    if id.is_empty() {
                        return Err(IngestError::Syntax { line, msg: "scalar change without id".into() });
                    }
                    self.change(line, digit, id)?;
                }
                b'b' | b'B' => {
                    let (_, id) = self.next_token()?;
                    self.change(line, &tok[1..], id)?;
                }
                b'r' | b'R' => {
                    let (_, id) = self.next_token()?;
                    match self.ids.get(id) {
                        Some(_) => {}
                        None => {
                            return Err(IngestError::UndeclaredId { line, id: id.to_string() })
                        }
                    }
                }
                _ => {
                    return Err(IngestError::Syntax { line, msg: format!("unexpected token {tok:?}") })
                }
            }
        }
        if open_block {
            return Err(self.truncated());
        }
        Ok(())
    }

    fn change(&mut self, line: usize, digits: &str, id: &str) -> Result<(), IngestError> {
        let index = match self.ids.get(id) {
            Some(Var::Tracked(i)) => *i,
            Some(Var::Ignored) => return Ok(()),
            None => return Err(IngestError::UndeclaredId { line, id: id.to_string() }),
        };
        let width = self.dump.declarations[index].width;
        let value = BitVec::parse_binary(digits, width).ok_or_else(|| IngestError::Syntax {
            line,
            msg: format!("bad value {digits:?} for {width}-bit signal {id:?}"),
        })?;
        self.dump.changes.push(ValueChange { time: self.time, signal: index, value });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "$timescale 1ns $end\n$scope module top $end\n$var wire 1 ! clk $end\n$upscope $end\n$enddefinitions $end\n#0\n0!\n#10\n1!\n";

    #[test]
    fn minimal_dump() {
        let d = parse_vcd(MINIMAL.as_bytes()).unwrap();
        assert_eq!(d.declarations.len(), 1);
        assert_eq!(d.changes.len(), 2);
        assert_eq!(d.changes[1].time, 10);
        assert_eq!(d.timescale.as_deref(), Some("1ns"));
    }

    #[test]
    fn nested_scopes() {
        let text = "$scope module a $end $scope module b $end $scope module c $end\n$var reg 4 # v $end\n$upscope $end $upscope $end $upscope $end\n$enddefinitions $end\n#0 b101 #\n";
        let d = parse_vcd(text.as_bytes()).unwrap();
        assert_eq!(d.declarations[0].scope_path, vec!["a", "b", "c"]);
        assert_eq!(d.hierarchy.depth(), 4); // synthetic root + a/b/c
        assert_eq!(d.hierarchy.find(&["a", "b", "c"]).unwrap().signals, vec![0]);
        assert_eq!(d.changes[0].value.to_binary(), "0101");
    }

    #[test]
    fn undeclared_id_is_error() {
        let text = MINIMAL.replace("#10\n1!", "#10\n1?");
        match parse_vcd(text.as_bytes()) {
            Err(IngestError::UndeclaredId { line, id }) => {
                assert_eq!(line, 9);
                assert_eq!(id, "?");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_header_reports_line() {
        let text = "$scope module top $end\n$var wire zero ! clk $end\n";
        match parse_vcd(text.as_bytes()) {
            Err(IngestError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_stream_names_last_time() {
        let text = format!("{MINIMAL}#20\n$dumpvars\n0!\n");
        match parse_vcd(text.as_bytes()) {
            Err(IngestError::Truncated { last_time }) => assert_eq!(last_time, Some(20)),
            other => panic!("unexpected {other:?}"),
        }
        let cut = "$scope module top $end\n$var wire 1 ! clk";
        assert!(matches!(parse_vcd(cut.as_bytes()), Err(IngestError::Truncated { last_time: None })));
    }

    #[test]
    fn real_and_event_vars_are_ignored() {
        let text = "$scope module top $end\n$var real 64 % temp $end\n$var event 1 & ev $end\n$var wire 1 ! clk $end\n$upscope $end\n$enddefinitions $end\n#0\nr1.5 %\n1&\n1!\n";
        let d = parse_vcd(text.as_bytes()).unwrap();
        assert_eq!(d.declarations.len(), 1);
        assert_eq!(d.changes.len(), 1);
    }

    #[test]
    fn vector_wider_than_decl_rejected() {
        let text = "$scope module t $end\n$var wire 2 ! v $end\n$upscope $end\n$enddefinitions $end\n#0\nb101 !\n";
        assert!(matches!(parse_vcd(text.as_bytes()), Err(IngestError::Syntax { line: 6, .. })));
    }

    #[test]
    fn backwards_time_rejected() {
        let text = format!("{MINIMAL}#5\n0!\n");
        assert!(parse_vcd(text.as_bytes()).is_err());
    }
}
