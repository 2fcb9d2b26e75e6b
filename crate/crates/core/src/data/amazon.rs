//! Loader for the four-domain review benchmark in its processed layout:
//! `<root>/<domain>/{positive,negative,unlabeled}.review`.

use std::path::Path;

use super::blitzer::{parse_file, RawDoc};
use super::feature::Polarity;
use crate::error::{Error, Result};

pub const DOMAINS: [&str; 4] = ["books", "dvd", "electronics", "kitchen"];

/// Raw documents of one domain. Labels found in the unlabeled file are
/// dropped on load.
#[derive(Clone, Debug, Default)]
pub struct ReviewDomain {
    pub name: String,
    pub labeled: Vec<RawDoc>,
    pub unlabeled: Vec<RawDoc>,
}

fn read_labeled(path: &Path, expect: Polarity) -> Result<Vec<RawDoc>> {
    let mut docs = parse_file(path)?;
    for (i, d) in docs.iter_mut().enumerate() {
        match d.label {
            None => d.label = Some(expect),
            Some(l) if l == expect => {}
            Some(l) => {
                return Err(Error::Data(format!(
                    "{}: document {} is labeled {} in a {} file",
                    path.display(),
                    i + 1,
                    l.as_str(),
                    expect.as_str()
                )))
            }
        }
    }
    Ok(docs)
}

pub fn load_domain(root: impl AsRef<Path>, name: &str) -> Result<ReviewDomain> {
    let dir = root.as_ref().join(name);
    if !dir.is_dir() {
        return Err(Error::Data(format!("missing domain directory {}", dir.display())));
    }
    let mut labeled = read_labeled(&dir.join("positive.review"), Polarity::Positive)?;
    labeled.extend(read_labeled(&dir.join("negative.review"), Polarity::Negative)?);
    let unlabeled_path = dir.join("unlabeled.review");
    let mut unlabeled = if unlabeled_path.exists() {
        parse_file(&unlabeled_path)?
    } else {
        log::warn!("{} not found; domain has no unlabeled reviews", unlabeled_path.display());
        Vec::new()
    };
    for d in &mut unlabeled {
        d.label = None;
    }
    Ok(ReviewDomain {
        name: name.to_string(),
        labeled,
        unlabeled,
    })
}

pub fn load_all(root: impl AsRef<Path>) -> Result<Vec<ReviewDomain>> {
    DOMAINS.iter().map(|d| load_domain(root.as_ref(), d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_layout_and_strips_unlabeled_labels() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("kitchen");
        std::fs::create_dir(&d).unwrap();
        std::fs::write(d.join("positive.review"), "good:2 #label#:positive\nfine:1\n").unwrap();
        std::fs::write(d.join("negative.review"), "bad:1 #label#:negative\n").unwrap();
        std::fs::write(d.join("unlabeled.review"), "meh:3 #label#:negative\n\n").unwrap();
        let k = load_domain(dir.path(), "kitchen").unwrap();
        assert_eq!(k.labeled.len(), 3);
        assert_eq!(k.labeled[1].label, Some(Polarity::Positive));
        assert_eq!(k.unlabeled.len(), 1);
        assert_eq!(k.unlabeled[0].label, None);
        assert!(load_domain(dir.path(), "books").is_err());
    }

    #[test]
    fn mislabeled_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("dvd");
        std::fs::create_dir(&d).unwrap();
        std::fs::write(d.join("positive.review"), "bad:1 #label#:negative\n").unwrap();
        std::fs::write(d.join("negative.review"), "").unwrap();
        assert!(load_domain(dir.path(), "dvd").is_err());
    }
}
