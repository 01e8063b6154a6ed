//! Line-oriented `key = value` text with optional `[section]` headers.
//!
//! Shared by the model parameter files and the run configuration. `#` starts
//! a comment; blank lines are ignored.

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: Option<String>,
    pub key: String,
    pub value: String,
    /// 1-based line number in the source text.
    pub line: usize,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, KvError> {
    let mut section = None;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| KvError::Syntax {
                line,
                message: format!("unterminated section header `{content}`"),
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(KvError::Syntax {
                    line,
                    message: "empty section name".into(),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| KvError::Syntax {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(KvError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        entries.push(Entry {
            section: section.clone(),
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

pub fn parse_f64(value: &str, line: usize) -> Result<f64, KvError> {
    value.parse::<f64>().map_err(|_| KvError::Syntax {
        line,
        message: format!("expected a number, found `{value}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let text = "# header\n[env]\nhorizon = 500 # steps\n\n[npg]\nstep_size=0.05\n";
        let entries = parse(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].section.as_deref(), Some("env"));
        assert_eq!(entries[0].value, "500");
        assert_eq!(entries[0].line, 3);
        assert_eq!(entries[1].key, "step_size");
        assert_eq!(entries[1].line, 6);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            parse("a = 1\nnot a pair\n").unwrap_err(),
            KvError::Syntax {
                line: 2,
                message: "expected `key = value`, found `not a pair`".into()
            }
        );
        assert!(matches!(parse("[env\n"), Err(KvError::Syntax { line: 1, .. })));
        assert!(matches!(parse_f64("abc", 7), Err(KvError::Syntax { line: 7, .. })));
    }
}
