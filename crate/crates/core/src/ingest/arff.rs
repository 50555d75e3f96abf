use std::io::BufRead;
use std::path::{Path, PathBuf};

use super::{Attribute, AttributeKind};
use crate::error::{Error, Result};

/// Reads the header of an ARFF file, leaving `reader` positioned after `@data`.
///
/// Returns the relation name, the declared attributes and the number of lines
/// consumed.
pub(super) fn read_header<R: BufRead>(
    reader: &mut R,
    path: &Path,
    max_arity: usize,
) -> Result<(Option<String>, Vec<Attribute>, usize)> {
    let mut relation = None;
    let mut attributes = Vec::new();
    let mut line_no = 0;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(parse_error(path, line_no, "missing @data section"));
        }
        line_no += 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let (keyword, rest) = split_keyword(text);
        match keyword.to_ascii_lowercase().as_str() {
            "@relation" => relation = Some(unquote(rest.trim())),
            "@attribute" => {
                let attr =
                    parse_attribute(rest, max_arity).map_err(|m| parse_error(path, line_no, &m))?;
                attributes.push(attr);
            }
            "@data" => break,
            _ => {
                return Err(parse_error(
                    path,
                    line_no,
                    &format!("unexpected header line {text:?}"),
                ))
            }
        }
    }
    if attributes.is_empty() {
        return Err(parse_error(path, line_no, "no attributes declared"));
    }
    Ok((relation, attributes, line_no))
}

fn split_keyword(text: &str) -> (&str, &str) {
    match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], &text[i..]),
        None => (text, ""),
    }
}

fn parse_attribute(rest: &str, max_arity: usize) -> std::result::Result<Attribute, String> {
    let rest = rest.trim();
    let (name, ty) = take_name(rest)?;
    let ty = ty.trim();
    let kind = if let Some(body) = ty.strip_prefix('{') {
        let body = body
            .trim_end()
            .strip_suffix('}')
            .ok_or_else(|| format!("unterminated nominal declaration for {name:?}"))?;
        let labels = split_fields(body)?;
        if labels.is_empty() || labels.iter().any(|l| l.is_empty()) {
            return Err(format!("empty nominal value in declaration of {name:?}"));
        }
        if labels.len() > max_arity {
            return Err(format!(
                "attribute {name:?} declares {} values, more than the limit {max_arity}",
                labels.len()
            ));
        }
        AttributeKind::Nominal(labels)
    } else {
        match ty.to_ascii_lowercase().as_str() {
            "numeric" | "real" | "integer" => AttributeKind::Numeric,
            other => return Err(format!("unsupported attribute type {other:?} for {name:?}")),
        }
    };
    Ok(Attribute { name, kind })
}

/// Splits a possibly quoted attribute name from the remainder of the line.
fn take_name(s: &str) -> std::result::Result<(String, &str), String> {
    let mut chars = s.char_indices();
    match chars.next() {
        None => Err("attribute declaration without a name".into()),
        Some((_, q @ ('\'' | '"'))) => {
            let end = s[1..]
                .find(q)
                .ok_or_else(|| "unterminated quoted attribute name".to_string())?;
            Ok((s[1..1 + end].to_string(), &s[end + 2..]))
        }
        Some(_) => {
            let end = s
                .find(|c: char| c.is_whitespace() || c == '{')
                .ok_or_else(|| format!("attribute {s:?} has no type"))?;
            Ok((s[..end].to_string(), &s[end..]))
        }
    }
}

fn unquote(s: &str) -> String {
    let b = s.as_bytes();
    if b.len() >= 2 && (b[0] == b'\'' || b[0] == b'"') && b[b.len() - 1] == b[0] {
        s[1..s.len() - 1].to_string()
    } else {
        s.to_string()
    }
}

/// Splits one comma-separated ARFF line, honouring single/double quotes and
/// backslash escapes inside quotes. Fields are trimmed and unquoted.
pub(super) fn split_fields(line: &str) -> std::result::Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut quote: Option<char> = None;
    let mut was_quoted = false;
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) if c == '\\' => {
                field.push(chars.next().ok_or("dangling escape")?);
            }
            Some(_) => field.push(c),
            None => match c {
                '\'' | '"' if field.trim().is_empty() => {
                    field.clear();
                    quote = Some(c);
                    was_quoted = true;
                }
                ',' => {
                    fields.push(finish(&mut field, &mut was_quoted));
                }
                _ => field.push(c),
            },
        }
    }
    if quote.is_some() {
        return Err("unterminated quoted value".into());
    }
    if !fields.is_empty() || !field.trim().is_empty() || was_quoted {
        fields.push(finish(&mut field, &mut was_quoted));
    }
    Ok(fields)
}

fn finish(field: &mut String, was_quoted: &mut bool) -> String {
    let out = if *was_quoted {
        field.clone()
    } else {
        field.trim().to_string()
    };
    field.clear();
    *was_quoted = false;
    out
}

pub(super) fn parse_error(path: &Path, line: usize, message: &str) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_quoted_fields() {
        assert_eq!(split_fields("a, b ,c").unwrap(), ["a", "b", "c"]);
        assert_eq!(split_fields("'x, y',\"z\"").unwrap(), ["x, y", "z"]);
        assert_eq!(split_fields("'it\\'s',1").unwrap(), ["it's", "1"]);
        assert_eq!(split_fields("").unwrap(), Vec::<String>::new());
        assert!(split_fields("'open,1").is_err());
    }

    #[test]
    fn attribute_declarations() {
        let a = parse_attribute(" class {0,1}", 10).unwrap();
        assert_eq!(a.name, "class");
        assert_eq!(a.kind, AttributeKind::Nominal(vec!["0".into(), "1".into()]));
        let a = parse_attribute(" 'my attr' REAL", 10).unwrap();
        assert_eq!(a.name, "my attr");
        assert_eq!(a.kind, AttributeKind::Numeric);
        let a = parse_attribute(" day{1, 2, 3}", 10).unwrap();
        assert_eq!(a.kind.arity(), Some(3));
        assert!(parse_attribute(" d date", 10).is_err());
        assert!(parse_attribute(" s string", 10).is_err());
        assert!(parse_attribute(" c {a,b,c}", 2).is_err());
        assert!(parse_attribute(" c {a,b", 10).is_err());
        assert!(parse_attribute(" c {a,,b}", 10).is_err());
    }
}
