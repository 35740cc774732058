//! Join queries and the query-file grammar.
//!
//! ```text
//! # comment
//! relation R file=R.csv
//! relation S file=s_data.csv attrs=u,a,x
//! query: R(x,y,p), S(u,a,x)
//! bern: p
//! ```
//!
//! A single-line inline form `R(x,y,p) S(u,a,x) bern p` is accepted as well.

use std::fmt;
use std::path::PathBuf;

use super::PlanError;

/// One occurrence of a relation symbol with its attribute list.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub relation: String,
    pub attrs: Vec<String>,
}

impl Atom {
    pub fn new(relation: &str, attrs: &[&str]) -> Self {
        Atom {
            relation: relation.to_string(),
            attrs: attrs.iter().map(|a| a.to_string()).collect(),
        }
    }

    pub fn mentions(&self, attr: &str) -> bool {
        self.attrs.iter().any(|a| a == attr)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.relation, self.attrs.join(","))
    }
}

/// `relation <name> file=<path> [attrs=<a,b,c>]`.
///
/// `attrs` selects and orders CSV columns by header name; atoms then bind
/// their attributes to the relation's columns positionally.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationDecl {
    pub name: String,
    pub file: PathBuf,
    pub attrs: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct JoinQuery {
    pub atoms: Vec<Atom>,
    pub bern_attr: Option<String>,
    pub relations: Vec<RelationDecl>,
}

impl JoinQuery {
    /// Validates atom attributes and the Bernoulli attribute.
    pub fn new(atoms: Vec<Atom>, bern_attr: Option<String>) -> Result<Self, PlanError> {
        let q = JoinQuery {
            atoms,
            bern_attr,
            relations: Vec::new(),
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.atoms.is_empty() {
            return Err(PlanError::Syntax {
                line: 0,
                message: "query has no atoms".into(),
            });
        }
        for atom in &self.atoms {
            if atom.attrs.is_empty() {
                return Err(PlanError::Syntax {
                    line: 0,
                    message: format!("atom {} has no attributes", atom.relation),
                });
            }
            for (i, a) in atom.attrs.iter().enumerate() {
                if atom.attrs[..i].contains(a) {
                    return Err(PlanError::DuplicateAttr {
                        atom: atom.to_string(),
                        attr: a.clone(),
                    });
                }
            }
        }
        if let Some(y) = &self.bern_attr {
            if !self.atoms.iter().any(|a| a.mentions(y)) {
                return Err(PlanError::BernAttrUnknown(y.clone()));
            }
        }
        Ok(())
    }

    /// All attributes in order of first appearance across the atoms.
    pub fn output_attrs(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for atom in &self.atoms {
            for a in &atom.attrs {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            }
        }
        out
    }
}

impl fmt::Display for JoinQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atoms: Vec<String> = self.atoms.iter().map(Atom::to_string).collect();
        write!(f, "{}", atoms.join(" ⋈ "))?;
        if let Some(y) = &self.bern_attr {
            write!(f, " bern {y}")?;
        }
        Ok(())
    }
}

/// Parses query-file contents.
pub fn parse_query(text: &str) -> Result<JoinQuery, PlanError> {
    let mut q = JoinQuery::default();
    let mut saw_query = false;
    let mut saw_bern = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| PlanError::Syntax {
            line: line_no,
            message,
        };
        if let Some(rest) = keyword(line, "relation") {
            q.relations.push(parse_relation_decl(rest).map_err(err)?);
        } else if let Some(rest) = line.strip_prefix("query:") {
            if saw_query {
                return Err(err("query given twice".into()));
            }
            saw_query = true;
            let (atoms, tail) = parse_atoms(rest).map_err(err)?;
            if !tail.trim().is_empty() {
                return Err(err(format!("unexpected `{}` after atoms", tail.trim())));
            }
            q.atoms = atoms;
        } else if let Some(rest) = line.strip_prefix("bern:") {
            if saw_bern {
                return Err(err("bern given twice".into()));
            }
            saw_bern = true;
            q.bern_attr = Some(parse_ident(rest.trim()).map_err(err)?);
        } else {
            // Inline form: atoms followed by an optional `bern <attr>`.
            if saw_query {
                return Err(err(format!("unexpected line `{line}`")));
            }
            saw_query = true;
            let (atoms, tail) = parse_atoms(line).map_err(err)?;
            q.atoms = atoms;
            let tail = tail.trim();
            if !tail.is_empty() {
                let rest = keyword(tail, "bern")
                    .ok_or_else(|| err(format!("unexpected `{tail}` after atoms")))?;
                if saw_bern {
                    return Err(err("bern given twice".into()));
                }
                saw_bern = true;
                q.bern_attr = Some(parse_ident(rest.trim()).map_err(err)?);
            }
        }
    }
    if !saw_query {
        return Err(PlanError::Syntax {
            line: 0,
            message: "missing `query:` line".into(),
        });
    }
    q.validate()?;
    Ok(q)
}

fn keyword<'a>(line: &'a str, kw: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(kw)?;
    (rest.is_empty() || rest.starts_with(char::is_whitespace)).then_some(rest)
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.' || c == '-'
}

fn parse_ident(s: &str) -> Result<String, String> {
    if !s.is_empty() && s.chars().all(is_ident_char) {
        Ok(s.to_string())
    } else {
        Err(format!("invalid identifier `{s}`"))
    }
}

fn parse_relation_decl(rest: &str) -> Result<RelationDecl, String> {
    let mut parts = rest.split_whitespace();
    let name = parse_ident(parts.next().ok_or("relation name missing")?)?;
    let mut file = None;
    let mut attrs = None;
    for part in parts {
        if let Some(f) = part.strip_prefix("file=") {
            file = Some(PathBuf::from(f));
        } else if let Some(a) = part.strip_prefix("attrs=") {
            let list = a
                .split(',')
                .map(|s| parse_ident(s.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            attrs = Some(list);
        } else {
            return Err(format!("unknown relation option `{part}`"));
        }
    }
    Ok(RelationDecl {
        name,
        file: file.ok_or("relation needs file=<path>")?,
        attrs,
    })
}

/// Parses `Name(a,b) [,] Name(c) ...`; returns the atoms and the unparsed tail.
fn parse_atoms(s: &str) -> Result<(Vec<Atom>, &str), String> {
    let mut atoms = Vec::new();
    let mut rest = s.trim_start();
    while let Some(open) = rest.find('(') {
        let name = rest[..open].trim();
        if name.is_empty() || !name.chars().all(is_ident_char) {
            break;
        }
        let close = rest[open..]
            .find(')')
            .map(|c| open + c)
            .ok_or_else(|| format!("unclosed atom `{name}(`"))?;
        let attrs = rest[open + 1..close]
            .split(',')
            .map(|a| a.trim())
            .filter(|a| !a.is_empty())
            .map(parse_ident)
            .collect::<Result<Vec<_>, _>>()?;
        atoms.push(Atom {
            relation: name.to_string(),
            attrs,
        });
        rest = rest[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        }
    }
    if atoms.is_empty() {
        return Err(format!("expected atoms, found `{}`", s.trim()));
    }
    Ok((atoms, rest))
}
