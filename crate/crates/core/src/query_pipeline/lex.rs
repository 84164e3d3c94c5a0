//! Just enough SPARQL lexing to keep rewrites out of IRIs, strings and
//! comments.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Code,
    Iri,
    Str,
    Comment,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seg {
    pub kind: Kind,
    pub text: String,
}

fn iri_end(s: &str) -> Option<usize> {
    for (i, c) in s.char_indices().skip(1) {
        match c {
            '>' => return Some(i + 1),
            c if c.is_whitespace() || matches!(c, '<' | '"' | '{' | '}' | '|' | '^' | '`' | '\\') => return None,
            _ => {}
        }
    }
    None
}

fn string_end(s: &str) -> usize {
    let quote = s.as_bytes()[0];
    let long = s.len() >= 3 && s.as_bytes()[1] == quote && s.as_bytes()[2] == quote;
    let (start, delim): (usize, &[u8]) = if long { (3, &s.as_bytes()[..3]) } else { (1, &s.as_bytes()[..1]) };
    let b = s.as_bytes();
    let mut i = start;
    while i < b.len() {
        if b[i] == b'\\' {
            i += 2;
            continue;
        }
        if b[i..].starts_with(delim) {
            return i + delim.len();
        }
        if !long && b[i] == b'\n' {
            return i;
        }
        i += 1;
    }
    b.len()
}

pub fn lex(src: &str) -> Vec<Seg> {
    let mut out: Vec<Seg> = Vec::new();
    let mut code = String::new();
    let mut rest = src;
    let flush = |code: &mut String, out: &mut Vec<Seg>| {
        if !code.is_empty() {
            out.push(Seg { kind: Kind::Code, text: std::mem::take(code) });
        }
    };
    while let Some(c) = rest.chars().next() {
        let (kind, len) = match c {
            '<' => match iri_end(rest) {
                Some(n) => (Kind::Iri, n),
                None => (Kind::Code, 1),
            },
            '"' | '\'' => (Kind::Str, string_end(rest)),
            '#' => (Kind::Comment, rest.find('\n').unwrap_or(rest.len())),
            c => (Kind::Code, c.len_utf8()),
        };
        if kind == Kind::Code {
            code.push_str(&rest[..len]);
        } else {
            flush(&mut code, &mut out);
            out.push(Seg { kind, text: rest[..len].to_owned() });
        }
        rest = &rest[len..];
    }
    flush(&mut code, &mut out);
    out
}

pub fn join(segs: &[Seg]) -> String {
    segs.iter().map(|s| s.text.as_str()).collect()
}

/// Contents of a string token without quotes; `None` for long strings.
pub fn string_body(tok: &str) -> Option<&str> {
    if tok.len() >= 2 && !tok.starts_with("\"\"\"") && !tok.starts_with("'''") {
        let q = &tok[..1];
        tok.strip_prefix(q)?.strip_suffix(q)
    } else {
        None
    }
}
