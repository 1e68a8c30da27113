//! The canonical text format for scripts and m-scripts.
//!
//! ```text
//! node   := ['!'] KIND '{' [slot ':' value (',' slot ':' value)*] '}' ['[' item (',' item)* ']']
//! item   := node | '@arrows(' i '->' j (',' i '->' j)* ')'
//! value  := IDENT | '?' LABEL
//! ```
//!
//! Arrow indices are 1-based child positions. A '!' prefix marks a trump
//! node; trump nodes are labelled !A, !B, ... in depth-first order and
//! trump links are written after the tree as `@link(!A -> !B)`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::mscript::MScript;
use crate::ontology::NodeKind;
use crate::script::{Node, NodeId, Script, SlotValue};

pub fn ace_label(i: u32) -> String {
    let letter = (b'A' + (i % 26) as u8) as char;
    if i < 26 {
        letter.to_string()
    } else {
        format!("{}{}", letter, i / 26)
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

pub fn script_to_text(s: &Script) -> String {
    let mut out = String::new();
    write_node(s, Script::ROOT, &BTreeSet::new(), &mut out);
    out
}

pub fn mscript_to_text(m: &MScript) -> String {
    let mut out = String::new();
    write_node(&m.base, Script::ROOT, &m.trumps, &mut out);
    let order = trump_order(&m.base, &m.trumps);
    let mut links: Vec<(usize, usize)> = m
        .links
        .iter()
        .map(|&(s, t)| {
            let si = order.iter().position(|&x| x == s).unwrap();
            let ti = order.iter().position(|&x| x == t).unwrap();
            (si, ti)
        })
        .collect();
    links.sort();
    for (si, ti) in links {
        out.push_str(&format!("\n@link(!{} -> !{})", ace_label(si as u32), ace_label(ti as u32)));
    }
    out
}

/// Trump nodes in depth-first order; defines the printed labels.
pub fn trump_order(base: &Script, trumps: &BTreeSet<NodeId>) -> Vec<NodeId> {
    base.dfs().into_iter().filter(|id| trumps.contains(id)).collect()
}

fn write_node(s: &Script, id: NodeId, trumps: &BTreeSet<NodeId>, out: &mut String) {
    let n = s.node(id);
    if trumps.contains(&id) {
        out.push('!');
    }
    out.push_str(n.kind.tag());
    out.push('{');
    for (i, (name, v)) in n.slots.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(name);
        out.push(':');
        match v {
            SlotValue::Sym(x) => out.push_str(x),
            SlotValue::Ace(a) => {
                out.push('?');
                out.push_str(&ace_label(*a));
            }
        }
    }
    out.push('}');
    if !n.children.is_empty() {
        out.push('[');
        for (i, &c) in n.children.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_node(s, c, trumps, out);
        }
        if !n.arrows.is_empty() {
            out.push_str(", @arrows(");
            for (i, &(x, y)) in n.arrows.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&format!("{}->{}", x + 1, y + 1));
            }
            out.push(')');
        }
        out.push(']');
    }
}

/// Indented form for traces and CLI output.
pub fn script_to_pretty(s: &Script) -> String {
    let mut out = String::new();
    fn walk(s: &Script, id: NodeId, depth: usize, out: &mut String) {
        let n = s.node(id);
        out.push_str(&"  ".repeat(depth));
        out.push_str(n.kind.tag());
        out.push('{');
        for (i, (name, v)) in n.slots.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(name);
            out.push(':');
            match v {
                SlotValue::Sym(x) => out.push_str(x),
                SlotValue::Ace(a) => {
                    out.push('?');
                    out.push_str(&ace_label(*a));
                }
            }
        }
        out.push('}');
        if !n.arrows.is_empty() {
            out.push_str(" @arrows(");
            for (i, &(x, y)) in n.arrows.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&format!("{}->{}", x + 1, y + 1));
            }
            out.push(')');
        }
        out.push('\n');
        for &c in &n.children {
            walk(s, c, depth + 1, out);
        }
    }
    walk(s, Script::ROOT, 0, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

pub fn parse_script(text: &str) -> Result<Script> {
    let mut p = Parser::new(text);
    let (script, trumps, _) = p.parse_tree()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.err("trailing input after script"));
    }
    if !trumps.is_empty() {
        return Err(p.err("trump markers are not allowed in a plain script"));
    }
    Ok(script)
}

pub fn parse_mscript(text: &str) -> Result<MScript> {
    let mut p = Parser::new(text);
    let (script, trumps, _) = p.parse_tree()?;
    let order = trump_order(&script, &trumps);
    let mut links = BTreeSet::new();
    loop {
        p.skip_ws();
        if p.at_end() {
            break;
        }
        let (from, to) = p.parse_link()?;
        let find = |label: &str| -> Result<NodeId> {
            order
                .iter()
                .enumerate()
                .find(|(i, _)| ace_label(*i as u32) == label)
                .map(|(_, &id)| id)
                .ok_or_else(|| {
                    Error::Invalid(format!("link names unknown trump label '!{label}'"))
                })
        };
        links.insert((find(&from)?, find(&to)?));
    }
    MScript::new(script, trumps, links)
}

struct Parser<'t> {
    text: &'t [u8],
    pos: usize,
    line: usize,
    col: usize,
    aces: Vec<String>,
}

impl<'t> Parser<'t> {
    fn new(text: &'t str) -> Parser<'t> {
        Parser { text: text.as_bytes(), pos: 0, line: 1, col: 1, aces: Vec::new() }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, self.col, msg)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() {
                self.bump();
            } else if c == b'#' {
                while let Some(c) = self.peek() {
                    if c == b'\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(x) if x == c => {
                self.bump();
                Ok(())
            }
            Some(x) => Err(self.err(format!("expected '{}', found '{}'", c as char, x as char))),
            None => Err(self.err(format!("expected '{}', found end of input", c as char))),
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' || c == b'-' {
                self.bump();
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.err("expected an identifier"));
        }
        Ok(std::str::from_utf8(&self.text[start..self.pos]).unwrap().to_string())
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                self.bump();
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.err("expected a number"));
        }
        std::str::from_utf8(&self.text[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.err("bad number"))
    }

    fn ace_id(&mut self, label: &str) -> u32 {
        match self.aces.iter().position(|a| a == label) {
            Some(i) => i as u32,
            None => {
                self.aces.push(label.to_string());
                (self.aces.len() - 1) as u32
            }
        }
    }

    /// Returns the script, the set of trump node ids, and nothing else.
    fn parse_tree(&mut self) -> Result<(Script, BTreeSet<NodeId>, ())> {
        let mut nodes: Vec<Node> = Vec::new();
        let mut trumps = BTreeSet::new();
        self.parse_node(&mut nodes, &mut trumps)?;
        let mut s = Script::from_nodes(nodes);
        s.canonicalize_aces();
        Ok((s, trumps, ()))
    }

    fn parse_node(&mut self, nodes: &mut Vec<Node>, trumps: &mut BTreeSet<NodeId>) -> Result<NodeId> {
        self.skip_ws();
        let trump = self.eat(b'!');
        let kind_name = self.ident()?;
        let kind = NodeKind::from_tag(&kind_name)
            .ok_or_else(|| self.err(format!("unknown node kind '{kind_name}'")))?;
        let id = nodes.len();
        nodes.push(Node::new(kind));
        if trump {
            trumps.insert(id);
        }
        self.expect(b'{')?;
        self.skip_ws();
        if !self.eat(b'}') {
            loop {
                let name = self.ident()?;
                self.expect(b':')?;
                self.skip_ws();
                let value = if self.eat(b'?') {
                    let label = self.ident()?;
                    SlotValue::Ace(self.ace_id(&label))
                } else {
                    SlotValue::Sym(self.ident()?)
                };
                if nodes[id].slots.insert(name.clone(), value).is_some() {
                    return Err(self.err(format!("duplicate slot '{name}'")));
                }
                if self.eat(b',') {
                    continue;
                }
                self.expect(b'}')?;
                break;
            }
        }
        if self.eat(b'[') {
            loop {
                self.skip_ws();
                if self.peek() == Some(b'@') {
                    self.parse_arrows(nodes, id)?;
                } else {
                    let child = self.parse_node(nodes, trumps)?;
                    nodes[id].children.push(child);
                }
                if self.eat(b',') {
                    continue;
                }
                self.expect(b']')?;
                break;
            }
        }
        Ok(id)
    }

    fn parse_arrows(&mut self, nodes: &mut Vec<Node>, id: NodeId) -> Result<()> {
        self.expect(b'@')?;
        let word = self.ident()?;
        if word != "arrows" {
            return Err(self.err(format!("expected '@arrows', found '@{word}'")));
        }
        self.expect(b'(')?;
        loop {
            let i = self.number()?;
            self.expect(b'-')?;
            self.expect(b'>')?;
            let j = self.number()?;
            if i == 0 || j == 0 {
                return Err(self.err("arrow indices are 1-based"));
            }
            nodes[id].arrows.insert((i - 1, j - 1));
            if self.eat(b',') {
                continue;
            }
            self.expect(b')')?;
            break;
        }
        // Validate once children are known: done by Script::validate later;
        // here only a bounds sanity check at parse completion.
        Ok(())
    }

    fn parse_link(&mut self) -> Result<(String, String)> {
        self.expect(b'@')?;
        let word = self.ident()?;
        if word != "link" {
            return Err(self.err(format!("expected '@link', found '@{word}'")));
        }
        self.expect(b'(')?;
        self.expect(b'!')?;
        let from = self.ident()?;
        self.expect(b'-')?;
        self.expect(b'>')?;
        self.skip_ws();
        self.expect(b'!')?;
        let to = self.ident()?;
        self.expect(b')')?;
        Ok((from, to))
    }
}
