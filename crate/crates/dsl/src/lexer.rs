#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kind {
    Ident,
    Number,
    LBrace,
    RBrace,
    Colon,
    Comma,
    Semi,
    Arrow,
    Slash,
    Newline,
    Bad,
    Eof,
}

/// A token with its 1-based position, columns counted in characters.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Token {
    pub kind: Kind,
    pub text: String,
    pub file: usize,
    pub line: usize,
    pub col: usize,
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn tokenize(src: &str, file: usize) -> Vec<Token> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let (tl, tc) = (line, col);
        let kind = match c {
            '\n' => {
                i += 1;
                Kind::Newline
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
                continue;
            }
            '{' | '}' | ':' | ',' | ';' | '/' => {
                i += 1;
                match c {
                    '{' => Kind::LBrace,
                    '}' => Kind::RBrace,
                    ':' => Kind::Colon,
                    ',' => Kind::Comma,
                    ';' => Kind::Semi,
                    _ => Kind::Slash,
                }
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 2;
                Kind::Arrow
            }
            '-' | '0'..='9' => {
                i += 1;
                let digits = |i: &mut usize| {
                    let from = *i;
                    while *i < chars.len() && chars[*i].is_ascii_digit() {
                        *i += 1;
                    }
                    *i > from
                };
                let mut ok = c != '-' || digits(&mut i);
                if c != '-' {
                    digits(&mut i);
                }
                if ok && chars.get(i) == Some(&'.') {
                    i += 1;
                    ok = digits(&mut i);
                }
                if ok && matches!(chars.get(i), Some('e' | 'E')) {
                    i += 1;
                    if matches!(chars.get(i), Some('+' | '-')) {
                        i += 1;
                    }
                    ok = digits(&mut i);
                }
                if ok && chars.get(i).is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_') {
                    // `1abc`: swallow the rest of the word
                    while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    ok = false;
                }
                if ok {
                    Kind::Number
                } else {
                    Kind::Bad
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                Kind::Ident
            }
            _ => {
                i += 1;
                Kind::Bad
            }
        };
        let text: String = chars[start..i].iter().collect();
        if kind == Kind::Newline {
            line += 1;
            col = 1;
        } else {
            col += i - start;
        }
        out.push(Token {
            kind,
            text,
            file,
            line: tl,
            col: tc,
        });
    }
    out.push(Token {
        kind: Kind::Eof,
        text: String::new(),
        file,
        line,
        col,
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<Kind> {
        tokenize(s, 0).into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn basic_tokens() {
        use Kind::*;
        assert_eq!(
            kinds("trans a0 : s1 1/2, s2 0.5 # tail\n}"),
            vec![Ident, Ident, Colon, Ident, Number, Slash, Number, Comma, Ident, Number, Newline, RBrace, Eof]
        );
        assert_eq!(kinds("x -> -1.5e-3"), vec![Ident, Arrow, Number, Eof]);
        assert_eq!(kinds("1.  - 3x @"), vec![Bad, Bad, Bad, Bad, Eof]);
    }

    #[test]
    fn positions() {
        let t = tokenize("mdp m {\n  states  a b\n}", 0);
        let b = t.iter().find(|t| t.text == "b").unwrap();
        assert_eq!((b.line, b.col), (2, 13));
        let close = t.iter().find(|t| t.kind == Kind::RBrace).unwrap();
        assert_eq!((close.line, close.col), (3, 1));
    }

    #[test]
    fn identifiers() {
        assert!(is_ident("_a1") && is_ident("s0_1"));
        assert!(!is_ident("1a") && !is_ident("") && !is_ident("a-b"));
    }
}
