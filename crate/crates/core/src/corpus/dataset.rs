use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

use super::Split;

/// An input document before tokenization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDocument {
    pub id: String,
    pub labels: Vec<usize>,
    pub text: String,
    pub split: Split,
}

/// Documents plus label names, indexed by label id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub documents: Vec<RawDocument>,
    pub label_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One directory per class, one file per document, optionally under
    /// `train/` and `test/` roots.
    NewsgroupDirs,
    /// `id<TAB>label,label<TAB>text`, one document per line.
    MultilabelTsv,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newsgroup-dirs" => Ok(Self::NewsgroupDirs),
            "multilabel-tsv" => Ok(Self::MultilabelTsv),
            other => Err(Error::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::Data(format!("dataset path {} does not exist", path.display())));
    }
    match format {
        DatasetFormat::NewsgroupDirs => load_newsgroup_dirs(path),
        DatasetFormat::MultilabelTsv => load_multilabel_tsv(path),
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::fs::DirEntry>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn load_newsgroup_dirs(root: &Path) -> Result<Dataset> {
    let split_roots: Vec<(Split, std::path::PathBuf)> = {
        let train = root.join("train");
        let test = root.join("test");
        if train.is_dir() || test.is_dir() {
            [(Split::Train, train), (Split::Test, test)]
                .into_iter()
                .filter(|(_, p)| p.is_dir())
                .collect()
        } else {
            vec![(Split::Train, root.to_path_buf())]
        }
    };

    let mut classes = BTreeSet::new();
    for (_, dir) in &split_roots {
        for entry in sorted_entries(dir)? {
            if entry.path().is_dir() {
                classes.insert(entry.file_name().to_string_lossy().into_owned());
            }
        }
    }
    let label_names: Vec<String> = classes.into_iter().collect();

    let mut documents = Vec::new();
    for (split, dir) in &split_roots {
        for class_entry in sorted_entries(dir)? {
            let class_path = class_entry.path();
            if !class_path.is_dir() {
                continue;
            }
            let class = class_entry.file_name().to_string_lossy().into_owned();
            let label = label_names.binary_search(&class).expect("class registered");
            for file in sorted_entries(&class_path)? {
                let fpath = file.path();
                if !fpath.is_file() {
                    continue;
                }
                let bytes = std::fs::read(&fpath).map_err(|e| Error::io(&fpath, e))?;
                let text = String::from_utf8(bytes).map_err(|_| {
                    Error::Data(format!("{}: not valid UTF-8", fpath.display()))
                })?;
                documents.push(RawDocument {
                    id: format!(
                        "{}/{}/{}",
                        split.as_str(),
                        class,
                        file.file_name().to_string_lossy()
                    ),
                    labels: vec![label],
                    text,
                    split: *split,
                });
            }
        }
    }
    Ok(Dataset {
        documents,
        label_names,
    })
}

fn load_multilabel_tsv(path: &Path) -> Result<Dataset> {
    let files: Vec<(Split, std::path::PathBuf)> = if path.is_dir() {
        [(Split::Train, "train.tsv"), (Split::Test, "test.tsv")]
            .into_iter()
            .map(|(s, f)| (s, path.join(f)))
            .filter(|(_, p)| p.is_file())
            .collect()
    } else {
        vec![(Split::Train, path.to_path_buf())]
    };
    if files.is_empty() {
        return Err(Error::Data(format!(
            "{}: expected train.tsv and/or test.tsv",
            path.display()
        )));
    }

    // (id, label strings, text, split)
    let mut rows = Vec::new();
    for (split, file) in &files {
        let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.splitn(3, '\t');
            let (Some(id), Some(labels), Some(body)) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::parse(
                    file,
                    lineno + 1,
                    "expected `id<TAB>labels<TAB>text`",
                ));
            };
            if id.is_empty() {
                return Err(Error::parse(file, lineno + 1, "empty document id"));
            }
            let labels: Vec<String> = labels
                .split(',')
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            rows.push((id.to_string(), labels, body.to_string(), *split));
        }
    }

    let label_names: Vec<String> = rows
        .iter()
        .flat_map(|r| r.1.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let documents = rows
        .into_iter()
        .map(|(id, labels, text, split)| {
            let mut labels: Vec<usize> = labels
                .iter()
                .map(|l| label_names.binary_search(l).expect("label registered"))
                .collect();
            labels.sort_unstable();
            labels.dedup();
            RawDocument {
                id,
                labels,
                text,
                split,
            }
        })
        .collect();
    Ok(Dataset {
        documents,
        label_names,
    })
}
