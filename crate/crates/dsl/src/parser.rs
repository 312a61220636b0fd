//! Syntax: tokens to raw declarations. Statements end at a newline, `;` or
//! the closing brace, and a malformed statement is skipped on its own so
//! later faults are still reported.

use crate::lexer::{Kind, Token};
use crate::ParseError;

#[derive(Clone, Debug)]
pub(crate) struct RawMdp {
    pub name: Token,
    pub states: Vec<Token>,
    pub actions: Vec<RawAction>,
    pub trans: Vec<RawTrans>,
}

#[derive(Clone, Debug)]
pub(crate) struct RawAction {
    pub name: Token,
    pub anchor: Token,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct RawTrans {
    pub action: Token,
    pub anchor: Option<Token>,
    pub entries: Vec<(Token, f64, Token)>,
}

#[derive(Clone, Debug)]
pub(crate) struct RawMorphism {
    pub name: Token,
    pub source: Token,
    pub target: Token,
    pub states: Vec<(Token, Token)>,
    pub actions: Vec<(Token, Token)>,
}

#[derive(Clone, Debug)]
pub(crate) enum ZigZagItem {
    Stage(Token),
    Overlap { mdp: Token, left: Token, right: Token },
}

#[derive(Clone, Debug)]
pub(crate) struct RawZigZag {
    pub name: Token,
    pub items: Vec<(Token, ZigZagItem)>,
    pub close: Token,
}

#[derive(Clone, Debug)]
pub(crate) enum RawValue {
    Int(i64),
    Float(f64),
    Word(String),
}

#[derive(Clone, Debug)]
pub(crate) struct RawExperiment {
    pub name: Token,
    pub params: Vec<(Token, RawValue)>,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct RawFile {
    pub mdps: Vec<RawMdp>,
    pub morphisms: Vec<RawMorphism>,
    pub zigzags: Vec<RawZigZag>,
    pub experiments: Vec<RawExperiment>,
}

pub(crate) fn error_at(files: &[String], tok: &Token, message: impl Into<String>) -> ParseError {
    ParseError {
        file: files[tok.file].clone(),
        line: tok.line,
        column: tok.col,
        message: message.into(),
        token: if tok.kind == Kind::Newline { String::new() } else { tok.text.clone() },
    }
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    files: &'a [String],
    errors: Vec<ParseError>,
}

/// Cursor over the tokens of one statement.
struct Stmt<'a> {
    toks: &'a [Token],
    pos: usize,
    end: &'a Token,
}

type StmtResult<T> = Result<T, (Token, String)>;

impl<'a> Stmt<'a> {
    fn peek(&self) -> &'a Token {
        self.toks.get(self.pos).unwrap_or(self.end)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn fail<T>(&self, tok: &Token, what: &str) -> StmtResult<T> {
        let message = match tok.kind {
            Kind::Bad => format!("invalid token, expected {what}"),
            Kind::Newline | Kind::Semi | Kind::RBrace | Kind::LBrace | Kind::Eof => {
                format!("unexpected end of statement, expected {what}")
            }
            _ => format!("expected {what}"),
        };
        Err((tok.clone(), message))
    }

    fn ident(&mut self, what: &str) -> StmtResult<Token> {
        let t = self.peek();
        if t.kind == Kind::Ident {
            self.pos += 1;
            Ok(t.clone())
        } else {
            self.fail(t, what)
        }
    }

    fn keyword(&mut self, kw: &str) -> StmtResult<()> {
        let t = self.peek();
        if t.kind == Kind::Ident && t.text == kw {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(t, &format!("`{kw}`"))
        }
    }

    fn punct(&mut self, kind: Kind, shown: &str) -> StmtResult<()> {
        let t = self.peek();
        if t.kind == kind {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(t, &format!("`{shown}`"))
        }
    }

    fn finish(&self) -> StmtResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            self.fail(self.peek(), "end of statement")
        }
    }

    /// A decimal or an exact integer fraction `p/q`. Returns the value and the
    /// first token of the literal.
    fn number(&mut self, what: &str) -> StmtResult<(f64, Token)> {
        let t = self.peek();
        if t.kind != Kind::Number {
            return self.fail(t, what);
        }
        self.pos += 1;
        let Ok(v) = t.text.parse::<f64>() else {
            return Err((t.clone(), format!("malformed number, expected {what}")));
        };
        if !v.is_finite() {
            return Err((t.clone(), "number out of range".into()));
        }
        if self.peek().kind != Kind::Slash {
            return Ok((v, t.clone()));
        }
        self.pos += 1;
        let d = self.peek();
        let p = t.text.parse::<i64>();
        let q = (d.kind == Kind::Number).then(|| d.text.parse::<u64>()).and_then(Result::ok);
        let (Ok(p), Some(q)) = (p, q) else {
            let bad = if t.text.parse::<i64>().is_err() { t } else { d };
            return Err((bad.clone(), "fractions take integers `p/q`".into()));
        };
        self.pos += 1;
        if q == 0 {
            return Err((d.clone(), "zero denominator".into()));
        }
        if p.unsigned_abs() > 1 << 53 || q > 1 << 53 {
            return Err((t.clone(), "fraction terms exceed 2^53".into()));
        }
        Ok((p as f64 / q as f64, t.clone()))
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &'a Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek().kind, Kind::Newline | Kind::Semi) {
            self.pos += 1;
        }
    }

    fn push(&mut self, tok: &Token, message: impl Into<String>) {
        self.errors.push(error_at(self.files, tok, message));
    }

    /// Skips to the end of the current top-level line, jumping over any braced
    /// block started on it.
    fn recover_top(&mut self) {
        let mut depth = 0usize;
        loop {
            let t = self.peek();
            match t.kind {
                Kind::Eof => return,
                Kind::LBrace => depth += 1,
                Kind::RBrace => depth = depth.saturating_sub(1),
                Kind::Newline if depth == 0 => return,
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn file(mut self) -> (RawFile, Vec<ParseError>) {
        let mut out = RawFile::default();
        loop {
            self.skip_separators();
            let t = self.peek();
            if t.kind == Kind::Eof {
                break;
            }
            let start = self.pos;
            match (t.kind, t.text.as_str()) {
                (Kind::Ident, "mdp") => {
                    if let Some(m) = self.mdp() {
                        out.mdps.push(m);
                    }
                }
                (Kind::Ident, "morphism") => {
                    if let Some(m) = self.morphism() {
                        out.morphisms.push(m);
                    }
                }
                (Kind::Ident, "zigzag") => {
                    if let Some(z) = self.zigzag() {
                        out.zigzags.push(z);
                    }
                }
                (Kind::Ident, "experiment") => {
                    if let Some(e) = self.experiment() {
                        out.experiments.push(e);
                    }
                }
                _ => {
                    self.push(t, "expected `mdp`, `morphism`, `zigzag` or `experiment`");
                    self.recover_top();
                }
            }
            if self.pos == start {
                self.pos += 1;
            }
        }
        (out, self.errors)
    }

    /// Parses the block header up to `{` with `header`, then splits the body
    /// into statements. Returns `None` if the header is malformed; the block
    /// is skipped in that case.
    fn block<H>(
        &mut self,
        header: impl FnOnce(&mut Stmt<'a>) -> StmtResult<H>,
    ) -> Option<(H, Vec<Stmt<'a>>, Token)> {
        let kw = self.pos;
        self.pos += 1;
        let mut end = self.pos;
        while !matches!(self.toks[end].kind, Kind::LBrace | Kind::Newline | Kind::Eof | Kind::RBrace) {
            end += 1;
        }
        let brace = &self.toks[end];
        let mut st = Stmt {
            toks: &self.toks[self.pos..end],
            pos: 0,
            end: brace,
        };
        let head = header(&mut st).and_then(|h| st.finish().map(|_| h));
        let head = match head {
            Ok(h) if brace.kind == Kind::LBrace => h,
            Ok(_) => {
                self.push(brace, "expected `{`");
                self.recover_top();
                return None;
            }
            Err((tok, msg)) => {
                self.push(&tok, msg);
                self.recover_top();
                return None;
            }
        };
        self.pos = end + 1;
        let mut stmts = Vec::new();
        loop {
            let from = self.pos;
            while !matches!(
                self.toks[self.pos].kind,
                Kind::Newline | Kind::Semi | Kind::RBrace | Kind::Eof | Kind::LBrace
            ) {
                self.pos += 1;
            }
            let stop = &self.toks[self.pos];
            if self.pos > from {
                stmts.push(Stmt {
                    toks: &self.toks[from..self.pos],
                    pos: 0,
                    end: stop,
                });
            }
            match stop.kind {
                Kind::RBrace => {
                    self.pos += 1;
                    return Some((head, stmts, stop.clone()));
                }
                Kind::Eof => {
                    self.push(brace, format!("unclosed block for `{}`", self.toks[kw].text));
                    return Some((head, stmts, stop.clone()));
                }
                Kind::LBrace => {
                    // A stray `{` usually means a missing `}` on the previous block.
                    self.push(stop, "unexpected `{` inside a block");
                    self.pos += 1;
                }
                _ => self.pos += 1,
            }
        }
    }

    fn run<T>(&mut self, stmts: Vec<Stmt<'a>>, mut f: impl FnMut(&mut Stmt<'a>) -> StmtResult<T>) -> Vec<T> {
        let mut out = Vec::new();
        for mut st in stmts {
            match f(&mut st).and_then(|v| st.finish().map(|_| v)) {
                Ok(v) => out.push(v),
                Err((tok, msg)) => self.push(&tok, msg),
            }
        }
        out
    }

    fn mdp(&mut self) -> Option<RawMdp> {
        let (name, stmts, _) = self.block(|st| st.ident("an MDP name"))?;
        enum Line {
            States(Vec<Token>),
            Action(RawAction),
            Trans(RawTrans),
        }
        let lines = self.run(stmts, |st| {
            let kw = st.ident("`states`, `action` or `trans`")?;
            match kw.text.as_str() {
                "states" => {
                    let mut names = Vec::new();
                    while !st.at_end() {
                        names.push(st.ident("a state name")?);
                    }
                    Ok(Line::States(names))
                }
                "action" => {
                    let name = st.ident("an action name")?;
                    st.keyword("at")?;
                    let anchor = st.ident("a state name")?;
                    st.keyword("reward")?;
                    let (reward, _) = st.number("a reward")?;
                    Ok(Line::Action(RawAction { name, anchor, reward }))
                }
                "trans" => {
                    let action = st.ident("an action name")?;
                    st.punct(Kind::Colon, ":")?;
                    let mut anchor = None;
                    let mut entries = Vec::new();
                    loop {
                        let s = st.ident("a state name")?;
                        if entries.is_empty() && anchor.is_none() && st.peek().kind == Kind::Arrow {
                            st.pos += 1;
                            anchor = Some(s);
                            continue;
                        }
                        let (p, ptok) = st.number("a probability")?;
                        entries.push((s, p, ptok));
                        if st.at_end() {
                            break;
                        }
                        st.punct(Kind::Comma, ",")?;
                    }
                    Ok(Line::Trans(RawTrans { action, anchor, entries }))
                }
                _ => st.fail(&kw, "`states`, `action` or `trans`"),
            }
        });
        let mut m = RawMdp {
            name,
            states: Vec::new(),
            actions: Vec::new(),
            trans: Vec::new(),
        };
        for line in lines {
            match line {
                Line::States(s) => m.states.extend(s),
                Line::Action(a) => m.actions.push(a),
                Line::Trans(t) => m.trans.push(t),
            }
        }
        Some(m)
    }

    fn morphism(&mut self) -> Option<RawMorphism> {
        let ((name, source, target), stmts, _) = self.block(|st| {
            let name = st.ident("a morphism name")?;
            st.punct(Kind::Colon, ":")?;
            let source = st.ident("a source MDP")?;
            st.punct(Kind::Arrow, "->")?;
            let target = st.ident("a target MDP")?;
            Ok((name, source, target))
        })?;
        let lines = self.run(stmts, |st| {
            let kw = st.ident("`state` or `action`")?;
            let is_state = match kw.text.as_str() {
                "state" => true,
                "action" => false,
                _ => return st.fail(&kw, "`state` or `action`"),
            };
            let what = if is_state { "a state name" } else { "an action name" };
            let mut pairs = Vec::new();
            loop {
                let from = st.ident(what)?;
                st.punct(Kind::Arrow, "->")?;
                pairs.push((from, st.ident(what)?));
                if st.at_end() {
                    break;
                }
                st.punct(Kind::Comma, ",")?;
            }
            Ok((is_state, pairs))
        });
        let mut m = RawMorphism {
            name,
            source,
            target,
            states: Vec::new(),
            actions: Vec::new(),
        };
        for (is_state, pairs) in lines {
            if is_state {
                m.states.extend(pairs);
            } else {
                m.actions.extend(pairs);
            }
        }
        Some(m)
    }

    fn zigzag(&mut self) -> Option<RawZigZag> {
        let (name, stmts, close) = self.block(|st| st.ident("a zig-zag name"))?;
        let items = self.run(stmts, |st| {
            let kw = st.ident("`stage` or `overlap`")?;
            let item = match kw.text.as_str() {
                "stage" => ZigZagItem::Stage(st.ident("an MDP name")?),
                "overlap" => {
                    let mdp = st.ident("an MDP name")?;
                    st.keyword("left")?;
                    let left = st.ident("a morphism name")?;
                    st.keyword("right")?;
                    let right = st.ident("a morphism name")?;
                    ZigZagItem::Overlap { mdp, left, right }
                }
                _ => return st.fail(&kw, "`stage` or `overlap`"),
            };
            Ok((kw, item))
        });
        Some(RawZigZag { name, items, close })
    }

    fn experiment(&mut self) -> Option<RawExperiment> {
        let (name, stmts, _) = self.block(|st| st.ident("an experiment name"))?;
        let mut params = Vec::new();
        // pairs before a fault in a statement are kept
        for mut st in stmts {
            while !st.at_end() {
                match experiment_pair(&mut st) {
                    Ok(p) => params.push(p),
                    Err((tok, msg)) => {
                        self.push(&tok, msg);
                        break;
                    }
                }
            }
        }
        Some(RawExperiment { name, params })
    }
}

fn experiment_pair(st: &mut Stmt<'_>) -> StmtResult<(Token, RawValue)> {
    let key = st.ident("a parameter name")?;
    let t = st.peek();
    let slash_follows = st.toks.get(st.pos + 1).map(|n| n.kind) == Some(Kind::Slash);
    let value = match t.kind {
        Kind::Ident => {
            st.pos += 1;
            RawValue::Word(t.text.clone())
        }
        Kind::Number if is_integer(&t.text) && !slash_follows => {
            st.pos += 1;
            match t.text.parse::<i64>() {
                Ok(v) => RawValue::Int(v),
                Err(_) => return Err((t.clone(), "integer out of range".into())),
            }
        }
        _ => RawValue::Float(st.number("a value")?.0),
    };
    Ok((key, value))
}

fn is_integer(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

pub(crate) fn parse_tokens(toks: &[Token], files: &[String]) -> (RawFile, Vec<ParseError>) {
    Parser {
        toks,
        pos: 0,
        files,
        errors: Vec::new(),
    }
    .file()
}
